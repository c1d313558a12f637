//! Batch experiment drivers: heatmap sweeps, noisy error tables, the
//! synchronization sweep, and the spectrum cross-check against the
//! time-domain oracle. All outputs are deterministic CSV keyed by the
//! configuration and seed.

use std::path::Path;

use rayon::prelude::*;

use crate::bergeron::{compare_spectra, simulate, TdScenario};
use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::line::{FaultScenario, Impedance, LineSpec, TerminationSpec};
use crate::locate::{
    emtr1_profile, emtr2_profile, emtr3_profile, locate, Criterion, EmtrMethod, EnergyProfile,
    FrequencyBand, LocationResult, ScanGrid,
};
use crate::signal::{
    add_awgn, fmt_f64, phase_shift, spectrum_of, waveform_of, FrequencyGrid, SampledRecord,
    Spectrum,
};
use crate::synth::{
    fault_source, terminal_spectra_faulted, terminal_spectrum_lumped, TerminalSpectra,
};
use crate::wavelet::{detect_arrival, locate_two_ended, DetectorConfig};

/// One synthetic two-terminal measurement, in the two renderings the
/// localization methods consume:
///
/// * `u0`/`ul` — noisy terminal spectra from the analytic frequency-domain
///   chain (periodic/steady-state). The EMTR criteria are frequency-domain
///   constructions and their extremum structure (in particular the EMTR-II/
///   III cancellation at the mirror point) holds exactly for these spectra.
/// * `u0_record`/`ul_record` — noisy causal records from the time-domain
///   solver. The traveling-wave detector needs a quiet pre-arrival interval,
///   which the circular analytic rendering cannot provide (its window wraps
///   the undecayed ringing back to t = 0).
#[derive(Debug, Clone)]
pub struct Measurement {
    pub u0: Spectrum,
    pub ul: Spectrum,
    pub u0_record: SampledRecord,
    pub ul_record: SampledRecord,
}

/// Forward synthesis for an experiment cell: both renderings of the same
/// scenario, with seeded AWGN at the requested SNR. The two terminals draw
/// independent noise streams derived from the cell seed.
pub fn synthesize_measurement(
    line: &LineSpec,
    terms: &TerminationSpec,
    scenario: &FaultScenario,
    grid: FrequencyGrid,
    dt_sim_s: f64,
    snr_db: f64,
    seed: u64,
) -> Result<Measurement> {
    let u_fs = fault_source(scenario.source_kind, grid);
    let ts: TerminalSpectra = terminal_spectra_faulted(line, terms, scenario, &u_fs)?;
    let clean_u0 = waveform_of(&ts.u0)?;
    let clean_ul = waveform_of(&ts.ul)?;
    let noisy_u0 = add_awgn(&clean_u0, snr_db, seed.wrapping_mul(2))?;
    let noisy_ul = add_awgn(&clean_ul, snr_db, seed.wrapping_mul(2).wrapping_add(1))?;

    let mut td = TdScenario::new(
        line.clone(),
        terms.clone(),
        *scenario,
        grid.n_samples() as f64 * grid.dt(),
    );
    td.dt_sim = dt_sim_s;
    td.dt_out = grid.dt();
    let sim = simulate(&td)?;
    let u0_record = add_awgn(&sim.u0, snr_db, seed.wrapping_mul(2))?;
    let ul_record = add_awgn(&sim.ul, snr_db, seed.wrapping_mul(2).wrapping_add(1))?;
    Ok(Measurement {
        u0: spectrum_of(&noisy_u0),
        ul: spectrum_of(&noisy_ul),
        u0_record,
        ul_record,
    })
}

/// Apply a synchronization error: delay the right-terminal channel by `tau`.
/// The spectrum picks up the exact phase ramp; the record is delayed and its
/// head filled with the pre-fault baseline (a misaligned clock records quiet
/// line before the transient, it does not wrap the tail of the window back
/// to the start).
pub fn apply_sync_error(m: &Measurement, tau_s: f64) -> Result<Measurement> {
    if tau_s == 0.0 {
        return Ok(m.clone());
    }
    if tau_s < 0.0 {
        return Err(Error::InvalidInput(
            "synchronization offset must be non-negative".into(),
        ));
    }
    let ul = phase_shift(&m.ul, tau_s);
    let mut ul_record = waveform_of(&phase_shift(&spectrum_of(&m.ul_record), tau_s))?;
    let head = (tau_s / ul_record.grid.dt()).ceil() as usize;
    let baseline = m.ul_record.values.first().copied().unwrap_or(0.0);
    for v in ul_record.values.iter_mut().take(head) {
        *v = baseline;
    }
    Ok(Measurement { u0: m.u0.clone(), ul, u0_record: m.u0_record.clone(), ul_record })
}

/// Coarse scan step used before refining at the configured resolution.
const COARSE_STEP_M: f64 = 100.0;

fn emtr_profile_on(
    method: EmtrMethod,
    m: &Measurement,
    line: &LineSpec,
    terms: &TerminationSpec,
    scan: &ScanGrid,
    band: FrequencyBand,
) -> Result<EnergyProfile> {
    match method {
        // The back-injection criterion models the finite measurement window
        // (its damping term is the truncation rate of the record), so it runs
        // on the spectrum of the causal record. The cancellation criteria
        // place an algebraic null that holds for the steady-state spectra.
        EmtrMethod::Emtr1 => {
            emtr1_profile(&spectrum_of(&m.u0_record), line, terms, scan, Some(band))
        }
        EmtrMethod::Emtr2 => emtr2_profile(&m.u0, line, terms, scan, Some(band)),
        EmtrMethod::Emtr3 => emtr3_profile(&m.u0, &m.ul, line, terms, scan, Some(band)),
    }
}

/// Profile variant for the energy-map studies: every criterion reads the
/// steady-state terminal spectra. The maps characterize the criteria
/// themselves (where the extremum sits as the guessed position sweeps the
/// line), so the spectra are taken as given rather than routed through the
/// causal-record rendering; an undamped line held for a finite window leaves
/// resonance peaks far narrower than a frequency bin, and the sampled comb
/// heights become a lottery that has nothing to do with the criterion.
fn emtr_profile_steady(
    method: EmtrMethod,
    m: &Measurement,
    line: &LineSpec,
    terms: &TerminationSpec,
    scan: &ScanGrid,
    band: FrequencyBand,
) -> Result<EnergyProfile> {
    match method {
        EmtrMethod::Emtr1 => emtr1_profile(&m.u0, line, terms, scan, Some(band)),
        EmtrMethod::Emtr2 => emtr2_profile(&m.u0, line, terms, scan, Some(band)),
        EmtrMethod::Emtr3 => emtr3_profile(&m.u0, &m.ul, line, terms, scan, Some(band)),
    }
}

/// Locate with an EMTR criterion: full-line coarse scan, then a fine scan of
/// the configured step around the coarse extremum.
pub fn emtr_locate(
    method: EmtrMethod,
    m: &Measurement,
    line: &LineSpec,
    terms: &TerminationSpec,
    fine_step_m: f64,
    band: FrequencyBand,
) -> Result<LocationResult> {
    let coarse_step = COARSE_STEP_M.max(fine_step_m);
    let coarse = ScanGrid::uniform(0.0, line.length_m, coarse_step)?;
    let profile = emtr_profile_on(method, m, line, terms, &coarse, band)?;
    let rough = locate(&profile)?;
    if fine_step_m >= coarse_step {
        return Ok(rough);
    }
    // refine around the extremum's scan position (the mirror of x_hat for the
    // argmin criteria)
    let extremum = match rough.criterion {
        Criterion::Argmax => rough.x_hat_m,
        Criterion::MirroredArgmin => line.length_m - rough.x_hat_m,
    };
    let lo = (extremum - 2.0 * coarse_step).max(0.0);
    let hi = (extremum + 2.0 * coarse_step).min(line.length_m);
    let fine = ScanGrid::uniform(lo, hi, fine_step_m)?;
    let profile = emtr_profile_on(method, m, line, terms, &fine, band)?;
    locate(&profile)
}

/// Locate with the traveling-wave baseline: arrival picks at both terminals,
/// then the two-ended time-difference formula.
pub fn wt_locate(m: &Measurement, line: &LineSpec) -> Result<f64> {
    let cfg = DetectorConfig::default();
    let t0 = detect_arrival(&m.u0_record, &cfg)?.t_arrival;
    let tl = detect_arrival(&m.ul_record, &cfg)?.t_arrival;
    locate_two_ended(t0, tl, line)
}

fn method_estimate(
    method: Method,
    m: &Measurement,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    match method {
        Method::Emtr(e) => {
            emtr_locate(e, m, &cfg.line, &cfg.terms, cfg.scan_step_m, cfg.band).map(|r| r.x_hat_m)
        }
        Method::Wt => wt_locate(m, &cfg.line),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Energy-map sweep: one method, one fault impedance, one row per true fault
/// position. Each row stores the per-position energies normalized by the row
/// maximum, prefixed by the extremum position and the location estimate.
pub fn run_heatmap(cfg: &ExperimentConfig, out_path: &Path) -> Result<()> {
    if cfg.methods.len() != 1 {
        return Err(Error::InvalidInput(
            "energy-map sweep needs exactly one method".into(),
        ));
    }
    if cfg.zf_list_ohm.len() != 1 {
        return Err(Error::InvalidInput(
            "energy-map sweep needs exactly one fault impedance".into(),
        ));
    }
    let method = match cfg.methods[0] {
        Method::Emtr(e) => e,
        Method::Wt => {
            return Err(Error::InvalidInput(
                "energy maps are defined for the EMTR criteria only".into(),
            ))
        }
    };
    let z_f = Impedance::resistive(cfg.zf_list_ohm[0]);
    let grid = FrequencyGrid::new(cfg.n_samples, cfg.dt_s)?;
    let scan = ScanGrid::uniform(0.0, cfg.line.length_m, cfg.scan_step_m)?;

    let rows: Vec<Result<String>> = cfg
        .xf_list_m
        .par_iter()
        .map(|&x_f| {
            let scenario = FaultScenario { x_f, z_f, source_kind: cfg.source_kind };
            let m = synthesize_measurement(
                &cfg.line, &cfg.terms, &scenario, grid, cfg.dt_sim_s, cfg.snr_db, cfg.seed,
            )?;
            let profile = emtr_profile_steady(method, &m, &cfg.line, &cfg.terms, &scan, cfg.band)?;
            let r = locate(&profile)?;
            let extremum = match r.criterion {
                Criterion::Argmax => r.x_hat_m,
                Criterion::MirroredArgmin => cfg.line.length_m - r.x_hat_m,
            };
            let peak = profile.energy.iter().copied().fold(f64::MIN, f64::max);
            let mut row = format!("{},{},{}", fmt_f64(x_f), fmt_f64(extremum), fmt_f64(r.x_hat_m));
            for e in &profile.energy {
                row.push(',');
                row.push_str(&fmt_f64(e / peak));
            }
            Ok(row)
        })
        .collect();

    let mut out = String::new();
    out.push_str("xf_m,extremum_m,x_hat_m");
    for p in scan.positions() {
        out.push_str(&format!(",e_{p:.0}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row?);
        out.push('\n');
    }
    write_atomic(out_path, &out)
}

/// One error-table cell outcome.
enum CellOutcome {
    Located { x_hat_m: f64, error_km: f64 },
    NoLocalization,
}

fn run_cell(
    cfg: &ExperimentConfig,
    method: Method,
    x_f: f64,
    z_f_ohm: f64,
    seed: u64,
    sync_error_s: f64,
) -> Result<CellOutcome> {
    let grid = FrequencyGrid::new(cfg.n_samples, cfg.dt_s)?;
    let scenario = FaultScenario {
        x_f,
        z_f: Impedance::resistive(z_f_ohm),
        source_kind: cfg.source_kind,
    };
    let m = synthesize_measurement(&cfg.line, &cfg.terms, &scenario, grid, cfg.dt_sim_s, cfg.snr_db, seed)?;
    let m = apply_sync_error(&m, sync_error_s)?;
    match method_estimate(method, &m, cfg) {
        Ok(x_hat) => Ok(CellOutcome::Located {
            x_hat_m: x_hat,
            error_km: (x_hat - x_f).abs() / 1e3,
        }),
        Err(Error::NoLocalization { .. }) | Err(Error::NoArrival) => {
            Ok(CellOutcome::NoLocalization)
        }
        Err(e) => Err(e),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Localization-error table over (method, x_f, z_f) cells. Two modes are
/// emitted per cell: the single seeded run, and the median over `n_seeds`
/// consecutive seeds (stable against seed luck).
pub fn run_error_table(cfg: &ExperimentConfig, out_path: &Path) -> Result<()> {
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &z_f in &cfg.zf_list_ohm {
            for &x_f in &cfg.xf_list_m {
                cells.push((method, x_f, z_f));
            }
        }
    }
    let rows: Vec<Result<String>> = cells
        .par_iter()
        .map(|&(method, x_f, z_f)| {
            let mut out = String::new();
            let single = run_cell(cfg, method, x_f, z_f, cfg.seed, cfg.sync_error_s)?;
            let fmt_cell = |mode: &str, outcome: &CellOutcome| match outcome {
                CellOutcome::Located { x_hat_m, error_km } => format!(
                    "{},{},{},{},{},{}\n",
                    method.label(),
                    fmt_f64(x_f),
                    fmt_f64(z_f),
                    mode,
                    fmt_f64(*x_hat_m),
                    fmt_f64(*error_km)
                ),
                CellOutcome::NoLocalization => format!(
                    "{},{},{},{},no_localization,no_localization\n",
                    method.label(),
                    fmt_f64(x_f),
                    fmt_f64(z_f),
                    mode
                ),
            };
            out.push_str(&fmt_cell("single", &single));
            if cfg.n_seeds > 0 {
                let mut errors = Vec::new();
                let mut estimates = Vec::new();
                let mut missing = 0usize;
                for s in 0..cfg.n_seeds as u64 {
                    match run_cell(cfg, method, x_f, z_f, cfg.seed + s, cfg.sync_error_s)? {
                        CellOutcome::Located { x_hat_m, error_km } => {
                            errors.push(error_km);
                            estimates.push(x_hat_m);
                        }
                        CellOutcome::NoLocalization => missing += 1,
                    }
                }
                let outcome = if errors.is_empty() || missing > errors.len() {
                    CellOutcome::NoLocalization
                } else {
                    CellOutcome::Located {
                        x_hat_m: median(estimates),
                        error_km: median(errors),
                    }
                };
                out.push_str(&fmt_cell("median", &outcome));
            }
            Ok(out)
        })
        .collect();

    let mut out = String::from("method,xf_m,zf_ohm,mode,x_hat_m,error_km\n");
    for row in rows {
        out.push_str(&row?);
    }
    write_atomic(out_path, &out)
}

/// Synchronization sweep: each (method, x_f) cell is located with and without
/// the configured one-terminal offset, on identical noise.
pub fn run_sync_sweep(cfg: &ExperimentConfig, out_path: &Path) -> Result<()> {
    for &m in &cfg.methods {
        if !matches!(m, Method::Emtr(EmtrMethod::Emtr3) | Method::Wt) {
            return Err(Error::InvalidInput(format!(
                "synchronization sweep supports emtr3 and wt, got {}",
                m.label()
            )));
        }
    }
    let z_f = *cfg.zf_list_ohm.first().ok_or_else(|| {
        Error::InvalidInput("synchronization sweep needs a fault impedance".into())
    })?;
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &x_f in &cfg.xf_list_m {
            cells.push((method, x_f));
        }
    }
    let rows: Vec<Result<String>> = cells
        .par_iter()
        .map(|&(method, x_f)| {
            let mut out = String::new();
            for tau in [0.0, cfg.sync_error_s] {
                match run_cell(cfg, method, x_f, z_f, cfg.seed, tau)? {
                    CellOutcome::Located { x_hat_m, error_km } => out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        method.label(),
                        fmt_f64(x_f),
                        fmt_f64(tau),
                        fmt_f64(x_hat_m),
                        fmt_f64(error_km)
                    )),
                    CellOutcome::NoLocalization => out.push_str(&format!(
                        "{},{},{},no_localization,no_localization\n",
                        method.label(),
                        fmt_f64(x_f),
                        fmt_f64(tau)
                    )),
                }
            }
            Ok(out)
        })
        .collect();
    let mut out = String::from("method,xf_m,sync_error_s,x_hat_m,error_km\n");
    for row in rows {
        out.push_str(&row?);
    }
    write_atomic(out_path, &out)
}

/// Spectrum cross-check: amplitude spectra of the full cascade, the corrected
/// and the duplicated-reflection lumped variants, and the time-domain oracle,
/// tabulated over the comparison band, plus summary metrics.
pub fn run_fig8(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let band_lo = 1e3;
    let band_hi = 400e3;
    let scenario = cfg.fault_scenario();

    // simulate first: the oracle's travel-time snapping defines the exact
    // geometry the analytic spectra must use
    let mut td = TdScenario::new(
        cfg.line.clone(),
        cfg.terms.clone(),
        scenario,
        cfg.n_samples as f64 * cfg.dt_s,
    );
    td.dt_sim = cfg.dt_sim_s;
    td.dt_out = cfg.dt_s;
    let sim = simulate(&td)?;
    let line = LineSpec { length_m: sim.length_snapped, ..cfg.line.clone() };
    let scenario = FaultScenario { x_f: sim.x_f_snapped, ..scenario };

    let grid = sim.u0.grid;
    let u_fs = fault_source(scenario.source_kind, grid);
    let cascade = terminal_spectra_faulted(&line, &cfg.terms, &scenario, &u_fs)?;
    let (corrected, _) = terminal_spectrum_lumped(&line, &cfg.terms, &scenario, &u_fs, true)?;
    let (duplicated, _) = terminal_spectrum_lumped(&line, &cfg.terms, &scenario, &u_fs, false)?;

    let mut table = String::from("freq_hz,cascade_amp,corrected_amp,duplicated_amp,simulated_amp\n");
    let sim_spec = spectrum_of(&sim.u0);
    for k in 0..=grid.nyquist_bin() {
        let f = grid.freq_hz(k);
        if f < band_lo || f > band_hi {
            continue;
        }
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(f),
            fmt_f64(cascade.u0.values[k].norm()),
            fmt_f64(corrected.values[k].norm()),
            fmt_f64(duplicated.values[k].norm()),
            fmt_f64(sim_spec.values[k].norm())
        ));
    }
    write_atomic(&out_dir.join("spectrum_comparison.csv"), &table)?;

    let c_cascade = compare_spectra(&cascade.u0, &sim.u0, band_lo, band_hi)?;
    let c_corrected = compare_spectra(&corrected, &sim.u0, band_lo, band_hi)?;
    let c_duplicated = compare_spectra(&duplicated, &sim.u0, band_lo, band_hi)?;
    let mut metrics = String::from("metric,value\n");
    let mut push = |name: &str, v: f64| {
        metrics.push_str(&format!("{name},{}\n", fmt_f64(v)));
    };
    push("cascade_vs_simulated_rel_l2", c_cascade.relative_l2);
    push("corrected_vs_simulated_rel_l2", c_corrected.relative_l2);
    push("duplicated_vs_simulated_rel_l2", c_duplicated.relative_l2);
    push("cascade_vs_simulated_max_rel_amp", c_cascade.max_relative_amplitude);
    push("xf_snapped_m", sim.x_f_snapped);
    push("length_snapped_m", sim.length_snapped);
    write_atomic(&out_dir.join("spectrum_metrics.csv"), &metrics)?;
    Ok(())
}

/// Write both terminal records of a synthetic measurement as waveform CSVs.
pub fn write_measurement(m: &Measurement, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    crate::signal::write_waveform_csv(&m.u0_record, &out_dir.join("u0.csv"))?;
    crate::signal::write_waveform_csv(&m.ul_record, &out_dir.join("ul.csv"))?;
    Ok(())
}

/// Write the terminal spectra of a synthetic measurement as one CSV.
pub fn write_spectra_csv(m: &Measurement, path: &Path) -> Result<()> {
    let mut out = String::from("freq_hz,re_u0,im_u0,re_ul,im_ul\n");
    let grid = m.u0.grid;
    for k in 0..grid.n_samples() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(grid.freq_hz(k)),
            fmt_f64(m.u0.values[k].re),
            fmt_f64(m.u0.values[k].im),
            fmt_f64(m.ul.values[k].re),
            fmt_f64(m.ul.values[k].im)
        ));
    }
    write_atomic(path, &out)
}
