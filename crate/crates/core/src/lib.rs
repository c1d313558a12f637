//! Frequency-domain fault transients on a single-conductor transmission line
//! and signal-based fault localization.
//!
//! The crate models a faulted line per frequency bin (propagation constant,
//! characteristic impedance, Thevenin reduction of the faulted network),
//! synthesizes the forward-time terminal voltage spectra, and locates the
//! fault with three electromagnetic-time-reversal criteria plus a
//! wavelet/TDOA traveling-wave baseline. A Bergeron time-domain simulator
//! provides an independent reference, and the experiment harness reproduces
//! the study figures and error tables as CSV artifacts.

pub mod bergeron;
pub mod config;
pub mod error;
pub mod experiments;
pub mod line;
pub mod locate;
pub mod signal;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
