//! Flat key-value configuration files.
//!
//! Format: one `key = value` pair per line, `#` comments, blank lines
//! ignored. Keys carry explicit units in their names (`*_m`, `*_ohm`, `*_s`,
//! `*_db`, `*_hz`). Unknown keys are errors so typos cannot silently fall
//! back to defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::line::{
    FaultScenario, Impedance, LineSpec, LossMode, SourceKind, TerminationSpec,
};
use crate::locate::{EmtrMethod, FrequencyBand};

/// Parsed key-value pairs; typed getters consume entries so leftover keys can
/// be reported as unknown.
#[derive(Debug, Clone)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("line {}: empty key or value", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}`: not a number: `{v}`"))),
        }
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}`: not a nonnegative integer: `{v}`"))),
        }
    }

    pub fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("`{key}`: not a nonnegative integer: `{v}`"))),
        }
    }

    /// Impedance value: a resistance in ohms or the word `open`.
    pub fn take_impedance(&mut self, key: &str, default: Impedance) -> Result<Impedance> {
        match self.take(key) {
            None => Ok(default),
            Some(v) if v.eq_ignore_ascii_case("open") => Ok(Impedance::Open),
            Some(v) => {
                let ohms = v
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("`{key}`: expected ohms or `open`: `{v}`")))?;
                Ok(Impedance::resistive(ohms))
            }
        }
    }

    /// SNR in dB or the word `inf` for the noiseless sentinel.
    pub fn take_snr_db(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) if v.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}`: expected dB or `inf`: `{v}`"))),
        }
    }

    pub fn take_f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("`{key}`: bad number `{s}`")))
                })
                .collect(),
        }
    }

    pub fn take_loss_mode(&mut self, key: &str, default: LossMode) -> Result<LossMode> {
        match self.take(key).as_deref() {
            None => Ok(default),
            Some("lossless") => Ok(LossMode::Lossless),
            Some("lossy") => Ok(LossMode::Lossy),
            Some(v) => Err(Error::Config(format!("`{key}`: expected lossless|lossy, got `{v}`"))),
        }
    }

    pub fn take_source_kind(&mut self, key: &str, default: SourceKind) -> Result<SourceKind> {
        match self.take(key).as_deref() {
            None => Ok(default),
            Some("step") => Ok(SourceKind::StepOverJw),
            Some("impulse") => Ok(SourceKind::DiracImpulse),
            Some(v) => Err(Error::Config(format!("`{key}`: expected step|impulse, got `{v}`"))),
        }
    }

    pub fn take_methods(&mut self, key: &str, default: &[Method]) -> Result<Vec<Method>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v.split(',').map(|s| Method::parse(s.trim())).collect(),
        }
    }

    /// Error if any keys were never consumed.
    pub fn ensure_empty(&self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let unknown: Vec<&str> = self.entries.keys().map(|s| s.as_str()).collect();
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

/// A localization method selector, covering the EMTR criteria and the
/// traveling-wave baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Emtr(EmtrMethod),
    Wt,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emtr1" => Ok(Method::Emtr(EmtrMethod::Emtr1)),
            "emtr2" => Ok(Method::Emtr(EmtrMethod::Emtr2)),
            "emtr3" => Ok(Method::Emtr(EmtrMethod::Emtr3)),
            "wt" => Ok(Method::Wt),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (expected emtr1|emtr2|emtr3|wt)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::Emtr(EmtrMethod::Emtr1) => "emtr1",
            Method::Emtr(EmtrMethod::Emtr2) => "emtr2",
            Method::Emtr(EmtrMethod::Emtr3) => "emtr3",
            Method::Wt => "wt",
        }
    }
}

/// Everything the experiment drivers need, assembled from a config file with
/// reference-line defaults.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub line: LineSpec,
    pub terms: TerminationSpec,
    pub source_kind: SourceKind,
    pub x_f_m: f64,
    pub z_f: Impedance,
    pub xf_list_m: Vec<f64>,
    pub zf_list_ohm: Vec<f64>,
    pub methods: Vec<Method>,
    pub n_samples: usize,
    pub dt_s: f64,
    pub scan_step_m: f64,
    pub band: FrequencyBand,
    pub snr_db: f64,
    pub seed: u64,
    pub n_seeds: usize,
    pub sync_error_s: f64,
    pub dt_sim_s: f64,
    pub duration_s: f64,
}

impl ExperimentConfig {
    /// Build from a parsed map, consuming every recognized key.
    pub fn from_map(mut cfg: ConfigMap) -> Result<Self> {
        let length_m = cfg.take_f64("length_m", 100e3)?;
        let line = LineSpec {
            length_m,
            r_per_m: cfg.take_f64("r_per_m", 0.036e-3)?,
            l_per_m: cfg.take_f64("l_per_m", 1.60e-6)?,
            c_per_m: cfg.take_f64("c_per_m", 10.54e-12)?,
            loss_mode: cfg.take_loss_mode("loss_mode", LossMode::Lossless)?,
        };
        line.validate()?;
        let terms = TerminationSpec {
            z0: cfg.take_impedance("z0_ohm", Impedance::resistive(100e3))?,
            zl: cfg.take_impedance("zl_ohm", Impedance::resistive(100e3))?,
        };
        let source_kind = cfg.take_source_kind("source_kind", SourceKind::StepOverJw)?;
        let x_f_m = cfg.take_f64("xf_m", length_m / 5.0)?;
        let z_f = cfg.take_impedance("zf_ohm", Impedance::resistive(0.0))?;
        let xf_list_m =
            cfg.take_f64_list("xf_list_m", &[0.2 * length_m, 0.4 * length_m, 0.6 * length_m, 0.8 * length_m])?;
        let zf_list_ohm = cfg.take_f64_list("zf_list_ohm", &[50.0])?;
        let methods = cfg.take_methods(
            "methods",
            &[
                Method::Emtr(EmtrMethod::Emtr1),
                Method::Emtr(EmtrMethod::Emtr3),
                Method::Wt,
            ],
        )?;
        let n_samples = cfg.take_usize("n_samples", 2048)?;
        let dt_s = cfg.take_f64("dt_s", 1e-6)?;
        let scan_step_m = cfg.take_f64("scan_step_m", 10.0)?;
        let band = FrequencyBand::new(
            cfg.take_f64("band_lo_hz", 10e3)?,
            cfg.take_f64("band_hi_hz", 500e3)?,
        )?;
        let snr_db = cfg.take_snr_db("snr_db", f64::INFINITY)?;
        let seed = cfg.take_u64("seed", 0)?;
        let n_seeds = cfg.take_usize("n_seeds", 20)?;
        let sync_error_s = cfg.take_f64("sync_error_s", 0.0)?;
        let dt_sim_s = cfg.take_f64("dt_sim_s", 1e-7)?;
        let duration_s =
            cfg.take_f64("duration_s", n_samples as f64 * dt_s)?;
        cfg.ensure_empty()?;
        if n_samples < 2 || n_samples % 2 != 0 {
            return Err(Error::Config(format!("n_samples must be even and >= 2, got {n_samples}")));
        }
        if snr_db.is_finite() && snr_db.is_nan() {
            return Err(Error::Config("snr_db must be a number or inf".into()));
        }
        Ok(Self {
            line,
            terms,
            source_kind,
            x_f_m,
            z_f,
            xf_list_m,
            zf_list_ohm,
            methods,
            n_samples,
            dt_s,
            scan_step_m,
            band,
            snr_db,
            seed,
            n_seeds,
            sync_error_s,
            dt_sim_s,
            duration_s,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_map(ConfigMap::load(path)?)
    }

    pub fn fault_scenario(&self) -> FaultScenario {
        FaultScenario { x_f: self.x_f_m, z_f: self.z_f, source_kind: self.source_kind }
    }
}
