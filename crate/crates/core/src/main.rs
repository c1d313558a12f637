//! Command-line front end for the fault-location experiment library.
//!
//! Subcommands produce CSV artifacts under `--out`; `locate` additionally
//! prints its estimate on stdout. Exit codes: 0 on success, 2 when a method
//! reports no usable localization, 1 on invalid input or I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emtrloc::config::{ConfigMap, ExperimentConfig, Method};
use emtrloc::error::Error;
use emtrloc::experiments::{
    apply_sync_error, run_error_table, run_fig8, run_heatmap, run_sync_sweep,
    synthesize_measurement, write_measurement, write_spectra_csv,
};
use emtrloc::bergeron::{simulate, TdScenario};
use emtrloc::locate::{
    emtr1_profile, emtr2_profile, emtr3_profile, locate, EmtrMethod, ScanGrid,
};
use emtrloc::signal::{
    fmt_f64, read_waveform_csv, spectrum_of, write_waveform_csv, FrequencyGrid,
};
use emtrloc::wavelet::{detect_arrival, locate_two_ended, DetectorConfig};

#[derive(Parser)]
#[command(name = "emtrloc", version, about = "Transmission-line fault location experiments")]
struct Cli {
    /// Experiment configuration file (`key = value` lines); defaults apply
    /// for missing keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the configured noise seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured SNR in dB (`inf` for noiseless)
    #[arg(long, global = true)]
    snr_db: Option<String>,

    /// Restrict to a single method: emtr1|emtr2|emtr3|wt
    #[arg(long, global = true)]
    method: Option<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the configured fault: terminal spectra and noisy waveforms
    Synth,
    /// Run the time-domain reference simulator for the configured fault
    Oracle,
    /// Locate a fault from two terminal waveform CSVs
    Locate {
        /// Left-terminal waveform CSV (`time_s,value`)
        #[arg(long)]
        u0: PathBuf,
        /// Right-terminal waveform CSV
        #[arg(long)]
        ul: PathBuf,
        /// Also write the scanned energy profile as `profile.csv`
        #[arg(long)]
        profile: bool,
    },
    /// Energy map over true and scanned fault positions for one method
    Heatmap,
    /// Localization error table over methods, positions, and impedances
    Table,
    /// Synchronization-error sensitivity sweep (emtr3 and wt)
    SyncSweep,
    /// Terminal-spectrum cross-check of the lumped models against the
    /// time-domain solver
    Fig8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::NoLocalization { margin }) => {
            eprintln!("no localization: profile margin {margin:.3} too flat");
            ExitCode::from(2)
        }
        Err(Error::NoArrival) => {
            eprintln!("no localization: no wavefront arrival detected");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_map(ConfigMap::parse("")?)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(snr) = &cli.snr_db {
        cfg.snr_db = if snr.eq_ignore_ascii_case("inf") {
            f64::INFINITY
        } else {
            snr.parse::<f64>()
                .map_err(|_| Error::Config(format!("--snr-db: expected dB or `inf`, got `{snr}`")))?
        };
    }
    if let Some(m) = &cli.method {
        cfg.methods = vec![Method::parse(m)?];
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let out = cli.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    match cli.cmd {
        Cmd::Synth => {
            let grid = FrequencyGrid::new(cfg.n_samples, cfg.dt_s)?;
            let m = synthesize_measurement(
                &cfg.line,
                &cfg.terms,
                &cfg.fault_scenario(),
                grid,
                cfg.dt_sim_s,
                cfg.snr_db,
                cfg.seed,
            )?;
            let m = apply_sync_error(&m, cfg.sync_error_s)?;
            write_measurement(&m, &out)?;
            write_spectra_csv(&m, &out.join("spectra.csv"))?;
            println!("wrote u0.csv, ul.csv, spectra.csv to {}", out.display());
            Ok(())
        }
        Cmd::Oracle => {
            let mut td = TdScenario::new(
                cfg.line,
                cfg.terms,
                cfg.fault_scenario(),
                cfg.duration_s,
            );
            td.dt_sim = cfg.dt_sim_s;
            td.dt_out = cfg.dt_s;
            let sim = simulate(&td)?;
            write_waveform_csv(&sim.u0, &out.join("u0.csv"))?;
            write_waveform_csv(&sim.ul, &out.join("ul.csv"))?;
            println!(
                "wrote u0.csv, ul.csv to {} (fault snapped to {} m)",
                out.display(),
                fmt_f64(sim.x_f_snapped)
            );
            Ok(())
        }
        Cmd::Locate { u0, ul, profile } => {
            let u0_record = read_waveform_csv(&u0)?;
            let ul_record = read_waveform_csv(&ul)?;
            let method = match cfg.methods.as_slice() {
                [m] => *m,
                _ => {
                    return Err(Error::InvalidInput(
                        "locate needs exactly one method (use --method)".into(),
                    ))
                }
            };
            if method == Method::Wt {
                let det = DetectorConfig::default();
                let t0 = detect_arrival(&u0_record, &det)?.t_arrival;
                let tl = detect_arrival(&ul_record, &det)?.t_arrival;
                let x_hat = locate_two_ended(t0, tl, &cfg.line)?;
                println!("t0_s,tl_s,x_hat_m");
                println!("{},{},{}", fmt_f64(t0), fmt_f64(tl), fmt_f64(x_hat));
                return Ok(());
            }
            let emtr = match method {
                Method::Emtr(e) => e,
                Method::Wt => unreachable!(),
            };
            let su0 = spectrum_of(&u0_record);
            let sul = spectrum_of(&ul_record);
            let scan = ScanGrid::uniform(0.0, cfg.line.length_m, cfg.scan_step_m)?;
            let band = Some(cfg.band);
            let p = match emtr {
                EmtrMethod::Emtr1 => emtr1_profile(&su0, &cfg.line, &cfg.terms, &scan, band)?,
                EmtrMethod::Emtr2 => emtr2_profile(&su0, &cfg.line, &cfg.terms, &scan, band)?,
                EmtrMethod::Emtr3 => {
                    emtr3_profile(&su0, &sul, &cfg.line, &cfg.terms, &scan, band)?
                }
            };
            if profile {
                let mut text = String::from("xprime_m,energy\n");
                for (x, e) in p.scan.positions().iter().zip(&p.energy) {
                    text.push_str(&format!("{},{}\n", fmt_f64(*x), fmt_f64(*e)));
                }
                let path = out.join("profile.csv");
                std::fs::write(&path, text)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            }
            let r = locate(&p)?;
            println!("method,x_hat_m,margin,skipped_bins");
            println!(
                "{},{},{},{}",
                method.label(),
                fmt_f64(r.x_hat_m),
                fmt_f64(r.margin),
                p.skipped_bins
            );
            Ok(())
        }
        Cmd::Heatmap => run_heatmap(&cfg, &out.join("heatmap.csv")),
        Cmd::Table => run_error_table(&cfg, &out.join("error_table.csv")),
        Cmd::SyncSweep => run_sync_sweep(&cfg, &out.join("sync_sweep.csv")),
        Cmd::Fig8 => run_fig8(&cfg, &out),
    }
}
