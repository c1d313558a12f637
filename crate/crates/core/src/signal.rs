//! Sampled-signal substrate: DFT bridge, time reversal, Parseval energy,
//! seeded noise injection and decimation.
//!
//! Conventions fixed here and relied on everywhere else:
//! * full two-sided DFT grid, `omega_k = 2*pi*k / (n * dt)`;
//! * forward DFT without normalization, inverse carries the `1/N`;
//! * circular time reversal `r'[n] = r[(N - n) mod N]`, which is exactly
//!   complex conjugation in frequency for real signals.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform time/frequency sampling grid shared by records and spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    n_samples: usize,
    dt: f64,
}

impl FrequencyGrid {
    /// `n_samples` must be even and >= 2 (even length keeps the Nyquist bin
    /// unambiguous for conjugate-symmetric spectra). Powers of two are the
    /// default everywhere but decimated grids may be any even length.
    pub fn new(n_samples: usize, dt: f64) -> Result<Self> {
        if n_samples < 2 || n_samples % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "grid length must be even and >= 2, got {n_samples}"
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be finite and > 0, got {dt}")));
        }
        Ok(Self { n_samples, dt })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Total window duration `N * dt` in seconds.
    pub fn duration(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    /// Angular frequency of bin `k`, `omega_k = 2*pi*k / (N * dt)`.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / (self.n_samples as f64 * self.dt)
    }

    /// Frequency of bin `k` in Hz.
    pub fn freq_hz(&self, k: usize) -> f64 {
        k as f64 / (self.n_samples as f64 * self.dt)
    }

    /// Index of the Nyquist bin, `N/2`.
    pub fn nyquist_bin(&self) -> usize {
        self.n_samples / 2
    }
}

/// Real time-domain record on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRecord {
    pub values: Vec<f64>,
    pub grid: FrequencyGrid,
    /// Acquisition clock offset in seconds, used to model synchronization
    /// error between the two line terminals.
    pub t0_offset: f64,
}

impl SampledRecord {
    pub fn new(values: Vec<f64>, grid: FrequencyGrid) -> Result<Self> {
        if values.len() != grid.n_samples() {
            return Err(Error::InvalidInput(format!(
                "record length {} does not match grid length {}",
                values.len(),
                grid.n_samples()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("record contains non-finite samples".into()));
        }
        Ok(Self { values, grid, t0_offset: 0.0 })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self { values: vec![0.0; grid.n_samples()], grid, t0_offset: 0.0 }
    }
}

/// Complex spectrum on a [`FrequencyGrid`] (full two-sided bin layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<Complex64>,
    pub grid: FrequencyGrid,
}

impl Spectrum {
    pub fn new(values: Vec<Complex64>, grid: FrequencyGrid) -> Result<Self> {
        if values.len() != grid.n_samples() {
            return Err(Error::InvalidInput(format!(
                "spectrum length {} does not match grid length {}",
                values.len(),
                grid.n_samples()
            )));
        }
        Ok(Self { values, grid })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); grid.n_samples()], grid }
    }

    /// Maximum deviation from conjugate symmetry, `max_k |X[k] - X[N-k]*|`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.grid.n_samples();
        let mut worst: f64 = self.values[0].im.abs().max(self.values[n / 2].im.abs());
        for k in 1..n / 2 {
            let d = self.values[k] - self.values[n - k].conj();
            worst = worst.max(d.norm());
        }
        worst
    }

    /// Scale every bin by a complex constant.
    pub fn scaled(&self, alpha: Complex64) -> Spectrum {
        Spectrum {
            values: self.values.iter().map(|v| v * alpha).collect(),
            grid: self.grid,
        }
    }
}

/// Forward DFT (no normalization).
pub fn spectrum_of(record: &SampledRecord) -> Spectrum {
    let n = record.grid.n_samples();
    let mut buf: Vec<Complex64> =
        record.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Spectrum { values: buf, grid: record.grid }
}

/// Inverse DFT with `1/N`, rejecting spectra that are not conjugate-symmetric
/// (those cannot come from a real record and signal a construction bug).
pub fn waveform_of(spectrum: &Spectrum) -> Result<SampledRecord> {
    let n = spectrum.grid.n_samples();
    let scale: f64 = spectrum.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    if spectrum.conjugate_asymmetry() > tol {
        return Err(Error::InvalidInput(format!(
            "spectrum is not conjugate-symmetric (asymmetry {:.3e}, tol {:.3e})",
            spectrum.conjugate_asymmetry(),
            tol
        )));
    }
    let mut buf = spectrum.values.clone();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    let values = buf.iter().map(|v| v.re * inv_n).collect();
    SampledRecord::new(values, spectrum.grid)
}

/// Circular time reversal `r'[n] = r[(N - n) mod N]`; exactly conjugation in
/// frequency, which is what every EMTR criterion relies on.
pub fn time_reverse(record: &SampledRecord) -> SampledRecord {
    let n = record.grid.n_samples();
    let values = (0..n).map(|i| record.values[(n - i) % n]).collect();
    SampledRecord { values, grid: record.grid, t0_offset: record.t0_offset }
}

/// Time-domain Parseval energy, `sum x[n]^2`.
pub fn record_energy(record: &SampledRecord) -> f64 {
    record.values.iter().map(|v| v * v).sum()
}

/// Frequency-domain Parseval energy, `(1/N) sum |X[k]|^2`. Agrees with
/// [`record_energy`] of the matching record.
pub fn spectrum_energy(spectrum: &Spectrum) -> f64 {
    spectrum.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
        / spectrum.grid.n_samples() as f64
}

/// Additive white Gaussian noise at the given SNR relative to the mean-square
/// power of the whole record. `snr_db = f64::INFINITY` disables noise.
/// Deterministic for a fixed seed.
pub fn add_awgn(record: &SampledRecord, snr_db: f64, seed: u64) -> Result<SampledRecord> {
    if snr_db == f64::INFINITY {
        return Ok(record.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let n = record.grid.n_samples() as f64;
    let p_signal = record_energy(record) / n;
    if p_signal == 0.0 {
        return Err(Error::InvalidInput("zero-energy record: SNR undefined".into()));
    }
    let sigma = (p_signal / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
    let values = record.values.iter().map(|&v| v + normal.sample(&mut rng)).collect();
    Ok(SampledRecord { values, grid: record.grid, t0_offset: record.t0_offset })
}

/// Keep every `factor`-th sample; the new grid has `dt * factor`. Models
/// simulating at a fine step and recording at a coarser rate.
pub fn decimate(record: &SampledRecord, factor: usize) -> Result<SampledRecord> {
    if factor == 0 {
        return Err(Error::InvalidInput("decimation factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(record.clone());
    }
    let n = record.grid.n_samples();
    if n % factor != 0 {
        return Err(Error::InvalidInput(format!(
            "decimation factor {factor} does not divide record length {n}"
        )));
    }
    let grid = FrequencyGrid::new(n / factor, record.grid.dt() * factor as f64)?;
    let values = record.values.iter().step_by(factor).copied().collect();
    Ok(SampledRecord { values, grid, t0_offset: record.t0_offset })
}

/// Apply the phase ramp `e^{-j omega tau}` for a time shift `tau` (circular
/// delay by `tau`). Symmetric bins get the conjugate ramp so the result stays
/// conjugate-symmetric.
pub fn phase_shift(spectrum: &Spectrum, tau: f64) -> Spectrum {
    let n = spectrum.grid.n_samples();
    let mut values = spectrum.values.clone();
    for k in 1..n / 2 {
        let ramp = Complex64::from_polar(1.0, -spectrum.grid.omega(k) * tau);
        values[k] *= ramp;
        values[n - k] *= ramp.conj();
    }
    // Nyquist bin: the ramp is real only for integer-sample shifts; keep the
    // real projection so the spectrum remains that of a real signal.
    let ny = n / 2;
    let ramp = Complex64::from_polar(1.0, -spectrum.grid.omega(ny) * tau);
    let v = values[ny] * ramp;
    values[ny] = Complex64::new(v.re, 0.0);
    Spectrum { values, grid: spectrum.grid }
}

/// Build a conjugate-symmetric spectrum by evaluating `f(omega_k)` on bins
/// `0..=N/2` and mirroring. Bins where `f` reports a singular frequency are
/// zeroed and returned in the skip list; the Nyquist bin keeps only its real
/// part.
pub fn synthesize_symmetric<F>(grid: FrequencyGrid, mut f: F) -> Result<(Spectrum, Vec<usize>)>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    let n = grid.n_samples();
    let mut values = vec![Complex64::new(0.0, 0.0); n];
    let mut skipped = Vec::new();
    for k in 0..=n / 2 {
        match f(grid.omega(k)) {
            Ok(v) => {
                if k == 0 || k == n / 2 {
                    values[k] = Complex64::new(v.re, 0.0);
                } else {
                    values[k] = v;
                    values[n - k] = v.conj();
                }
            }
            Err(Error::SingularFrequency { .. }) => skipped.push(k),
            Err(e) => return Err(e),
        }
    }
    Ok((Spectrum { values, grid }, skipped))
}

/// Format a float with 17 significant digits (round-trips f64 bit-exactly).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a record as a two-column `time_s,value` CSV.
pub fn write_waveform_csv(record: &SampledRecord, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "time_s,value")?;
    for (i, v) in record.values.iter().enumerate() {
        let t = record.t0_offset + i as f64 * record.grid.dt();
        writeln!(out, "{},{}", fmt_f64(t), fmt_f64(*v))?;
    }
    Ok(())
}

/// Read a `time_s,value` CSV written by [`write_waveform_csv`].
pub fn read_waveform_csv(path: &Path) -> Result<SampledRecord> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != "time_s,value" {
                return Err(Error::Io(format!("unexpected waveform header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let t: f64 = parse_field(parts.next(), lineno)?;
        let v: f64 = parse_field(parts.next(), lineno)?;
        times.push(t);
        values.push(v);
    }
    if values.len() < 2 {
        return Err(Error::Io("waveform CSV has fewer than 2 samples".into()));
    }
    let dt = times[1] - times[0];
    let grid = FrequencyGrid::new(values.len(), dt)?;
    let mut rec = SampledRecord::new(values, grid)?;
    rec.t0_offset = times[0];
    Ok(rec)
}

fn parse_field(field: Option<&str>, lineno: usize) -> Result<f64> {
    field
        .ok_or_else(|| Error::Io(format!("waveform CSV line {lineno}: missing field")))?
        .trim()
        .parse()
        .map_err(|e| Error::Io(format!("waveform CSV line {lineno}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> FrequencyGrid {
        FrequencyGrid::new(n, dt).unwrap()
    }

    fn random_record(seed: u64, n: usize) -> SampledRecord {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SampledRecord::new(values, grid(n, 1e-6)).unwrap()
    }

    #[test]
    fn impulse_has_flat_dft() {
        let r = SampledRecord::new(vec![1.0, 0.0, 0.0, 0.0], grid(4, 1.0)).unwrap();
        let s = spectrum_of(&r);
        for v in &s.values {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_is_dc_only() {
        let r = SampledRecord::new(vec![1.0; 4], grid(4, 1.0)).unwrap();
        let s = spectrum_of(&r);
        assert!((s.values[0] - Complex64::new(4.0, 0.0)).norm() < 1e-14);
        for v in &s.values[1..] {
            assert!(v.norm() < 1e-14);
        }
    }

    #[test]
    fn single_tone_two_bins() {
        let n = 32;
        let k0 = 5;
        let values: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * k0 as f64 * i as f64 / n as f64).cos())
            .collect();
        let s = spectrum_of(&SampledRecord::new(values, grid(n, 1.0)).unwrap());
        for (k, v) in s.values.iter().enumerate() {
            let expect = if k == k0 || k == n - k0 { n as f64 / 2.0 } else { 0.0 };
            assert!((v.norm() - expect).abs() < 1e-10, "bin {k}");
        }
    }

    #[test]
    fn round_trip_random_record() {
        let r = random_record(7, 256);
        let back = waveform_of(&spectrum_of(&r)).unwrap();
        let peak = r.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in r.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-12 * peak);
        }
    }

    #[test]
    fn waveform_of_rejects_asymmetric_spectrum() {
        let mut s = Spectrum::zeros(grid(8, 1.0));
        s.values[1] = Complex64::new(1.0, 1.0); // no mirrored partner
        assert!(matches!(waveform_of(&s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn time_reverse_convention() {
        let r = SampledRecord::new(vec![1.0, 2.0, 3.0, 4.0], grid(4, 1.0)).unwrap();
        assert_eq!(time_reverse(&r).values, vec![1.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn time_reverse_is_conjugation() {
        let r = random_record(42, 128);
        let fwd = spectrum_of(&r);
        let rev = spectrum_of(&time_reverse(&r));
        for (a, b) in fwd.values.iter().zip(&rev.values) {
            assert!((a.conj() - b).norm() < 1e-9 * a.norm().max(1.0));
        }
        // involution is exact
        assert_eq!(time_reverse(&time_reverse(&r)).values, r.values);
    }

    #[test]
    fn parseval_identity() {
        let r = random_record(3, 512);
        let e_t = record_energy(&r);
        let e_f = spectrum_energy(&spectrum_of(&r));
        assert!((e_t - e_f).abs() < 1e-12 * e_t);
        // impulse: both sides are exactly 1
        let imp = SampledRecord::new(vec![1.0, 0.0, 0.0, 0.0], grid(4, 1.0)).unwrap();
        assert_eq!(record_energy(&imp), 1.0);
        assert!((spectrum_energy(&spectrum_of(&imp)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn awgn_deterministic_and_snr_calibrated() {
        let n = 2048;
        let values: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 13.0 * i as f64 / n as f64).sin())
            .collect();
        let r = SampledRecord::new(values, grid(n, 1e-6)).unwrap();

        let a = add_awgn(&r, 30.0, 99).unwrap();
        let b = add_awgn(&r, 30.0, 99).unwrap();
        assert_eq!(a.values, b.values);
        let c = add_awgn(&r, 30.0, 100).unwrap();
        assert_ne!(a.values, c.values);

        // infinite SNR sentinel is the identity
        assert_eq!(add_awgn(&r, f64::INFINITY, 1).unwrap().values, r.values);

        // realized noise power within +-0.5 dB of the target, averaged
        // behaviour checked across seeds
        let p_signal = record_energy(&r) / n as f64;
        for seed in 0..20u64 {
            let noisy = add_awgn(&r, 30.0, seed).unwrap();
            let noise: Vec<f64> =
                noisy.values.iter().zip(&r.values).map(|(a, b)| a - b).collect();
            let p_noise = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let realized_db = 10.0 * (p_signal / p_noise).log10();
            assert!((realized_db - 30.0).abs() < 0.5, "seed {seed}: {realized_db} dB");
        }
    }

    #[test]
    fn awgn_rejects_zero_energy() {
        let r = SampledRecord::zeros(grid(8, 1.0));
        assert!(add_awgn(&r, 30.0, 0).is_err());
    }

    #[test]
    fn decimate_basics() {
        let r = SampledRecord::new((1..=10).map(|v| v as f64).collect(), grid(10, 1e-7)).unwrap();
        assert_eq!(decimate(&r, 1).unwrap().values, r.values);
        let d = decimate(&r, 5).unwrap();
        assert_eq!(d.values, vec![1.0, 6.0]);
        assert!((d.grid.dt() - 5e-7).abs() < 1e-20);
        assert!(decimate(&r, 3).is_err());
    }

    #[test]
    fn decimate_band_limited_sinusoid() {
        // content below the decimated Nyquist: decimation is exact sampling
        let n = 2000;
        let dt = 1e-7;
        let f0 = 200e3; // decimated Nyquist at 1 MHz sampling is 500 kHz
        let wave = |t: f64| (2.0 * std::f64::consts::PI * f0 * t).sin();
        let values: Vec<f64> = (0..n).map(|i| wave(i as f64 * dt)).collect();
        let r = SampledRecord::new(values, grid(n, dt)).unwrap();
        let d = decimate(&r, 10).unwrap();
        for (i, v) in d.values.iter().enumerate() {
            assert!((v - wave(i as f64 * 1e-6)).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_shift_integer_sample_is_rotation() {
        let r = random_record(11, 64);
        let shifted = waveform_of(&phase_shift(&spectrum_of(&r), r.grid.dt())).unwrap();
        for i in 0..64 {
            let j = (i + 63) % 64; // delay by one sample, circular
            assert!((shifted.values[i] - r.values[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn waveform_csv_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let r = random_record(5, 64);
        write_waveform_csv(&r, &path).unwrap();
        let back = read_waveform_csv(&path).unwrap();
        assert_eq!(r.values, back.values);
        assert_eq!(r.grid.n_samples(), back.grid.n_samples());
        assert!((r.grid.dt() - back.grid.dt()).abs() < 1e-22);
    }
}
