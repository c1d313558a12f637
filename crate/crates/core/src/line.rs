//! Per-frequency electrical model of the single-conductor line: propagation
//! constant, characteristic impedance, reflection coefficients, input
//! impedances, and the Thevenin reduction chain used to compute terminal
//! voltages of an impedance fault.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex impedance with a dedicated open-circuit sentinel, so that an open
/// termination reflects with exactly +1 instead of suffering cancellation in
/// `(Z - Zc)/(Z + Zc)` at huge finite values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Impedance {
    Finite(Complex64),
    Open,
}

impl Impedance {
    pub fn resistive(ohms: f64) -> Self {
        Impedance::Finite(Complex64::new(ohms, 0.0))
    }

    pub fn is_open(&self) -> bool {
        matches!(self, Impedance::Open)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match self {
            Impedance::Finite(z) => Some(*z),
            Impedance::Open => None,
        }
    }
}

/// Lossless drops `r_per_m` from gamma; lossy uses the exact distributed
/// formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    Lossless,
    Lossy,
}

/// Per-unit-length single-conductor line parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub length_m: f64,
    pub r_per_m: f64,
    pub l_per_m: f64,
    pub c_per_m: f64,
    pub loss_mode: LossMode,
}

impl LineSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_m > 0.0 && self.l_per_m > 0.0 && self.c_per_m > 0.0)
            || self.r_per_m < 0.0
        {
            return Err(Error::InvalidInput(format!("bad line parameters: {self:?}")));
        }
        Ok(())
    }

    /// Lossless propagation speed `1/sqrt(l*c)` in m/s.
    pub fn velocity(&self) -> f64 {
        1.0 / (self.l_per_m * self.c_per_m).sqrt()
    }

    /// One-way travel time `L/v` in seconds.
    pub fn travel_time(&self) -> f64 {
        self.length_m / self.velocity()
    }

    /// Series resistance per meter as actually modeled: zero in lossless
    /// mode regardless of the tabulated value.
    pub fn effective_r_per_m(&self) -> f64 {
        match self.loss_mode {
            LossMode::Lossless => 0.0,
            LossMode::Lossy => self.r_per_m,
        }
    }
}

/// Terminations at x = 0 and x = L.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationSpec {
    pub z0: Impedance,
    pub zl: Impedance,
}

impl TerminationSpec {
    pub fn resistive(z0_ohm: f64, zl_ohm: f64) -> Self {
        Self { z0: Impedance::resistive(z0_ohm), zl: Impedance::resistive(zl_ohm) }
    }

    /// Terminations with left/right swapped, for the mirrored reduction.
    pub fn swapped(&self) -> Self {
        Self { z0: self.zl, zl: self.z0 }
    }
}

/// Shape of the fault emf spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// `U_fs(omega) = 1/(j omega)`, DC bin zeroed.
    StepOverJw,
    /// `U_fs(omega) = 1` at every bin (transfer-function probing).
    DiracImpulse,
}

/// True fault description: position from the left end, fault impedance and
/// source shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultScenario {
    pub x_f: f64,
    pub z_f: Impedance,
    pub source_kind: SourceKind,
}

impl FaultScenario {
    pub fn validate(&self, line: &LineSpec) -> Result<()> {
        if !(self.x_f > 0.0 && self.x_f < line.length_m) {
            return Err(Error::InvalidInput(format!(
                "fault position {} outside (0, {})",
                self.x_f, line.length_m
            )));
        }
        if let Impedance::Finite(z) = self.z_f {
            if z.re < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "fault impedance has negative real part: {z}"
                )));
            }
        }
        Ok(())
    }

    /// The same fault seen from the right end (`x_f -> L - x_f`).
    pub fn mirrored(&self, line: &LineSpec) -> Self {
        Self { x_f: line.length_m - self.x_f, ..*self }
    }
}

/// All intermediate quantities of the Thevenin collapse at one frequency,
/// including the literature variant used for the flawed/corrected comparison.
#[derive(Debug, Clone, Copy)]
pub struct TheveninStage {
    /// Input impedance of the line segment right of the fault.
    pub z_in2: Complex64,
    /// Fault impedance in parallel with `z_in2`.
    pub z_par2: Complex64,
    /// Reflection coefficient of the collapsed fault branch.
    pub rho_f: Complex64,
    /// Equivalent impedance seen from the left termination.
    pub z_eq: Complex64,
    /// `U_fr / U_fs` voltage division across the fault branch.
    pub u_fr_gain: Complex64,
    /// `U_eq / U_fs` including the fault-branch division.
    pub u_eq_gain: Complex64,
    /// Input impedance of the segment left of the fault.
    pub z_in1: Complex64,
    /// `z_in1 || z_in2` (flawed variant of the fault-point division).
    pub z_par: Complex64,
    /// `Z_C || z_in2` (corrected fault-point division).
    pub z_par_l: Complex64,
}

/// Propagation constant. Lossless: `j*omega*sqrt(l*c)`; lossy:
/// `sqrt((r + j*omega*l) * (j*omega*c))` with the `Re >= 0` branch.
pub fn propagation_constant(line: &LineSpec, omega: f64) -> Complex64 {
    match line.loss_mode {
        LossMode::Lossless => {
            Complex64::new(0.0, omega * (line.l_per_m * line.c_per_m).sqrt())
        }
        LossMode::Lossy => {
            let series = Complex64::new(line.r_per_m, omega * line.l_per_m);
            let shunt = Complex64::new(0.0, omega * line.c_per_m);
            let g = (series * shunt).sqrt();
            if g.re < 0.0 {
                -g
            } else {
                g
            }
        }
    }
}

/// Characteristic impedance. Lossless: real `sqrt(l/c)`; lossy:
/// `sqrt((r + j*omega*l)/(j*omega*c))`, singular at DC.
pub fn characteristic_impedance(line: &LineSpec, omega: f64) -> Result<Complex64> {
    match line.loss_mode {
        LossMode::Lossless => Ok(Complex64::new((line.l_per_m / line.c_per_m).sqrt(), 0.0)),
        LossMode::Lossy => {
            if omega == 0.0 {
                return Err(Error::SingularFrequency { omega });
            }
            let series = Complex64::new(line.r_per_m, omega * line.l_per_m);
            let shunt = Complex64::new(0.0, omega * line.c_per_m);
            let z = (series / shunt).sqrt();
            Ok(if z.re < 0.0 { -z } else { z })
        }
    }
}

/// `(Z - Zc)/(Z + Zc)`; exactly +1 for the open sentinel.
pub fn reflection_coefficient(z_term: Impedance, z_c: Complex64) -> Result<Complex64> {
    match z_term {
        Impedance::Open => Ok(Complex64::new(1.0, 0.0)),
        Impedance::Finite(z) => {
            let den = z + z_c;
            if den.norm() <= 1e-12 * (z.norm() + z_c.norm()).max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput(format!(
                    "degenerate termination z = -Zc ({z} vs {z_c})"
                )));
            }
            Ok((z - z_c) / den)
        }
    }
}

const SINGULAR_TOL: f64 = 1e-12;

/// `Zc (1 + rho e^{-2 gamma d}) / (1 - rho e^{-2 gamma d})` with a singular
/// check on the denominator (ideal-line resonance at this exact frequency).
fn impedance_from_rho(
    z_c: Complex64,
    rho: Complex64,
    gamma: Complex64,
    d: f64,
    omega: f64,
) -> Result<Complex64> {
    let w = rho * (-2.0 * gamma * d).exp();
    let den = Complex64::new(1.0, 0.0) - w;
    if den.norm() <= SINGULAR_TOL * (1.0 + w.norm()) {
        return Err(Error::SingularFrequency { omega });
    }
    Ok(z_c * (Complex64::new(1.0, 0.0) + w) / den)
}

/// Input impedance of a segment of length `seg_length` terminated in `z_term`,
/// seen from the other end.
pub fn input_impedance(
    line: &LineSpec,
    seg_length: f64,
    z_term: Impedance,
    omega: f64,
) -> Result<Complex64> {
    let z_c = characteristic_impedance(line, omega)?;
    let gamma = propagation_constant(line, omega);
    let rho = reflection_coefficient(z_term, z_c)?;
    impedance_from_rho(z_c, rho, gamma, seg_length, omega)
}

/// Collapse the faulted network at one frequency into the Thevenin stage.
pub fn thevenin_collapse(
    line: &LineSpec,
    terms: &TerminationSpec,
    scenario: &FaultScenario,
    omega: f64,
) -> Result<TheveninStage> {
    let z_c = characteristic_impedance(line, omega)?;
    let gamma = propagation_constant(line, omega);
    let x_f = scenario.x_f;
    let d2 = line.length_m - x_f;

    let rho_l = reflection_coefficient(terms.zl, z_c)?;
    let z_in2 = impedance_from_rho(z_c, rho_l, gamma, d2, omega)?;

    let (z_par2, u_fr_gain) = match scenario.z_f {
        Impedance::Open => (z_in2, Complex64::new(0.0, 0.0)),
        Impedance::Finite(z_f) => {
            let den = z_f + z_in2;
            if den.norm() <= SINGULAR_TOL * (z_f.norm() + z_in2.norm()).max(f64::MIN_POSITIVE) {
                return Err(Error::SingularFrequency { omega });
            }
            (z_f * z_in2 / den, z_in2 / den)
        }
    };

    let rho_f = reflection_coefficient(Impedance::Finite(z_par2), z_c)?;
    let z_eq = impedance_from_rho(z_c, rho_f, gamma, x_f, omega)?;

    let one = Complex64::new(1.0, 0.0);
    let w_f = rho_f * (-2.0 * gamma * x_f).exp();
    let u_eq_gain =
        (-gamma * x_f).exp() * (one - rho_f) / (one - w_f) * u_fr_gain;

    // literature-variant quantities
    let rho_0 = reflection_coefficient(terms.z0, z_c)?;
    let z_in1 = impedance_from_rho(z_c, rho_0, gamma, x_f, omega)?;
    let z_par = z_in1 * z_in2 / (z_in1 + z_in2);
    let z_par_l = z_c * z_in2 / (z_c + z_in2);

    Ok(TheveninStage {
        z_in2,
        z_par2,
        rho_f,
        z_eq,
        u_fr_gain,
        u_eq_gain,
        z_in1,
        z_par,
        z_par_l,
    })
}

/// Line of Table-2-style distribution-network parameters used throughout the
/// experiments (100 km, 1.60 uH/m, 10.54 pF/m, 0.036 mOhm/m).
pub fn reference_line(length_m: f64, loss_mode: LossMode) -> LineSpec {
    LineSpec {
        length_m,
        r_per_m: 0.036e-3,
        l_per_m: 1.60e-6,
        c_per_m: 10.54e-12,
        loss_mode,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ref_line(loss: LossMode) -> LineSpec {
        reference_line(100e3, loss)
    }

    #[test]
    fn velocity_from_reference_parameters() {
        let v = ref_line(LossMode::Lossless).velocity();
        assert!((v - 2.4351e8).abs() / 2.4351e8 < 1e-4, "v = {v}");
    }

    #[test]
    fn lossless_beta_at_100khz() {
        let line = ref_line(LossMode::Lossless);
        let g = propagation_constant(&line, 2.0 * std::f64::consts::PI * 100e3);
        assert_eq!(g.re, 0.0);
        assert!((g.im - 2.580e-3).abs() < 2e-6, "beta = {}", g.im);
    }

    #[test]
    fn lossless_at_dc_is_zero() {
        let g = propagation_constant(&ref_line(LossMode::Lossless), 0.0);
        assert_eq!(g, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn lossy_with_zero_r_matches_lossless() {
        let mut line = ref_line(LossMode::Lossy);
        line.r_per_m = 0.0;
        let w = 2.0 * std::f64::consts::PI * 50e3;
        let gl = propagation_constant(&ref_line(LossMode::Lossless), w);
        let gy = propagation_constant(&line, w);
        assert!((gl - gy).norm() < 1e-12 * gl.norm());
    }

    #[test]
    fn characteristic_impedance_values() {
        let zc = characteristic_impedance(&ref_line(LossMode::Lossless), 1.0).unwrap();
        assert!((zc.re - 389.6).abs() < 0.1, "Zc = {zc}");
        assert_eq!(zc.im, 0.0);

        let synthetic = LineSpec {
            length_m: 1.0,
            r_per_m: 0.0,
            l_per_m: 2.0,
            c_per_m: 2.0,
            loss_mode: LossMode::Lossless,
        };
        assert_eq!(characteristic_impedance(&synthetic, 1.0).unwrap().re, 1.0);

        // lossy converges to lossless as r -> 0: the relative gap is
        // ~ r / (2 omega l), i.e. ~1.8e-5 at 100 kHz with the reference r
        // and a hundred times smaller at r/100
        let w = 2.0 * std::f64::consts::PI * 100e3;
        let zy = characteristic_impedance(&ref_line(LossMode::Lossy), w).unwrap();
        assert!((zy - zc).norm() / zc.norm() < 1e-4);
        let mut small_r = ref_line(LossMode::Lossy);
        small_r.r_per_m /= 100.0;
        let zs = characteristic_impedance(&small_r, w).unwrap();
        assert!((zs - zc).norm() / zc.norm() < 1e-6);

        // lossy at DC is singular
        assert!(matches!(
            characteristic_impedance(&ref_line(LossMode::Lossy), 0.0),
            Err(Error::SingularFrequency { .. })
        ));
    }

    #[test]
    fn reflection_coefficient_cases() {
        let zc = Complex64::new(389.62, 0.0);
        assert_eq!(
            reflection_coefficient(Impedance::Finite(zc), zc).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        assert_eq!(
            reflection_coefficient(Impedance::resistive(0.0), zc).unwrap(),
            Complex64::new(-1.0, 0.0)
        );
        assert_eq!(
            reflection_coefficient(Impedance::Open, zc).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        let rho = reflection_coefficient(Impedance::resistive(100e3), zc).unwrap();
        assert!((rho.re - 0.99224).abs() < 1e-5, "rho = {rho}");
    }

    #[test]
    fn input_impedance_limits() {
        let line = ref_line(LossMode::Lossless);
        let w = 2.0 * std::f64::consts::PI * 37e3;
        let z_term = Impedance::Finite(Complex64::new(220.0, 40.0));

        // zero-length segment is the termination itself
        let z = input_impedance(&line, 0.0, z_term, w).unwrap();
        assert!((z - z_term.finite().unwrap()).norm() < 1e-10);

        // matched line is Zc at any length
        let zc = characteristic_impedance(&line, w).unwrap();
        let z = input_impedance(&line, 42e3, Impedance::Finite(zc), w).unwrap();
        assert!((z - zc).norm() < 1e-10);

        // shorted quarter-wave segment resonates
        let v = line.velocity();
        let seg = 10e3;
        let w_quarter = std::f64::consts::PI * v / (2.0 * seg); // beta*seg = pi/2
        let res = input_impedance(&line, seg, Impedance::resistive(0.0), w_quarter);
        assert!(matches!(res, Err(Error::SingularFrequency { .. })), "{res:?}");
    }

    #[test]
    fn thevenin_collapse_short_and_open() {
        let line = LineSpec { length_m: 20e3, ..ref_line(LossMode::Lossless) };
        let terms = TerminationSpec::resistive(100e3, 100e3);
        let w = 2.0 * std::f64::consts::PI * 83e3;

        let short = FaultScenario {
            x_f: 7e3,
            z_f: Impedance::resistive(0.0),
            source_kind: SourceKind::DiracImpulse,
        };
        let st = thevenin_collapse(&line, &terms, &short, w).unwrap();
        assert_eq!(st.z_par2, Complex64::new(0.0, 0.0));
        assert!((st.rho_f + Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((st.u_fr_gain - Complex64::new(1.0, 0.0)).norm() < 1e-12);

        let open = FaultScenario { z_f: Impedance::Open, ..short };
        let st = thevenin_collapse(&line, &terms, &open, w).unwrap();
        assert_eq!(st.u_fr_gain, Complex64::new(0.0, 0.0));
        assert_eq!(st.u_eq_gain, Complex64::new(0.0, 0.0));
        assert_eq!(st.z_par2, st.z_in2);
    }

    #[test]
    fn scenario_validation() {
        let line = ref_line(LossMode::Lossless);
        let bad = FaultScenario {
            x_f: 200e3,
            z_f: Impedance::resistive(50.0),
            source_kind: SourceKind::StepOverJw,
        };
        assert!(bad.validate(&line).is_err());
        let neg = FaultScenario {
            x_f: 50e3,
            z_f: Impedance::Finite(Complex64::new(-1.0, 0.0)),
            source_kind: SourceKind::StepOverJw,
        };
        assert!(neg.validate(&line).is_err());
    }
}
