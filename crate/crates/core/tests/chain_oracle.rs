//! Cross-check of the collapsed Thevenin terminal solution against an
//! independent brute-force solve of the faulted line as a linear system.
//!
//! The faulted network is two line segments joined at the fault node, with a
//! source behind the fault impedance and resistive terminations. Instead of
//! collapsing the chain stage by stage, this oracle writes the four traveling
//! -wave amplitudes (forward/backward in each segment) and solves the 4x4
//! boundary-condition system per frequency with Gaussian elimination.

use num_complex::Complex64;

use emtrloc::line::{
    characteristic_impedance, propagation_constant, reference_line, FaultScenario, Impedance,
    LossMode, SourceKind, TerminationSpec,
};
use emtrloc::signal::FrequencyGrid;
use emtrloc::synth::{fault_source, terminal_spectra_faulted};

/// Solve `m x = rhs` for a small dense complex system (partial pivoting).
fn solve(mut m: Vec<Vec<Complex64>>, mut rhs: Vec<Complex64>) -> Vec<Complex64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = m[col][col];
        assert!(p.norm() > 0.0, "singular system");
        for row in col + 1..n {
            let f = m[row][col] / p;
            for c in col..n {
                let sub = f * m[col][c];
                m[row][c] -= sub;
            }
            let sub = f * rhs[col];
            rhs[row] -= sub;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Terminal voltages (u0, ul) of the faulted line at one frequency, from the
/// traveling-wave boundary-condition system.
fn brute_force_terminals(
    line: &emtrloc::line::LineSpec,
    terms: &TerminationSpec,
    scenario: &FaultScenario,
    u_fs: Complex64,
    omega: f64,
) -> (Complex64, Complex64) {
    let zc = characteristic_impedance(line, omega).unwrap();
    let g = propagation_constant(line, omega);
    let x_f = scenario.x_f;
    let d2 = line.length_m - x_f;
    let z0 = terms.z0.finite().unwrap();
    let zl = terms.zl.finite().unwrap();
    let z_f = match scenario.z_f {
        Impedance::Finite(z) => z,
        Impedance::Open => unreachable!("test uses finite fault impedances"),
    };
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let e1 = (-g * x_f).exp();
    let e2 = (-g * d2).exp();

    // unknowns [a, b, c, d]: segment-1 voltage a e^{-gx} + b e^{gx} (x from
    // the left terminal), segment-2 voltage c e^{-gy} + d e^{gy} (y from the
    // fault node); currents are (fwd - bwd)/zc toward +x.
    // row 0: left termination, current into the line feeds z0: (a-b)/zc = -(a+b)/z0
    // row 1: right termination: (c e2^-... ) see below
    // row 2: voltage continuity at the fault node
    // row 3: KCL at the fault node, branch current (u_f - u_fs)/z_f to ground
    let m = vec![
        vec![one / zc + one / z0, -one / zc + one / z0, zero, zero],
        vec![
            zero,
            zero,
            e2 * (one / zc - one / zl),
            (one / e2) * (-one / zc - one / zl),
        ],
        vec![e1, one / e1, -one, -one],
        vec![
            e1 / zc,
            -one / (e1 * zc),
            -one / zc - one / z_f,
            one / zc - one / z_f,
        ],
    ];
    let rhs = vec![zero, zero, zero, -u_fs / z_f];
    let x = solve(m, rhs);
    let u0 = x[0] + x[1];
    let ul = x[2] * e2 + x[3] / e2;
    (u0, ul)
}

#[test]
fn collapsed_solution_matches_brute_force_chain() {
    for loss_mode in [LossMode::Lossless, LossMode::Lossy] {
        let line = reference_line(20e3, loss_mode);
        let terms = TerminationSpec::resistive(100e3, 100e3);
        let scenario = FaultScenario {
            x_f: 7e3,
            z_f: Impedance::resistive(100.0),
            source_kind: SourceKind::DiracImpulse,
        };
        let grid = FrequencyGrid::new(4096, 1e-6).unwrap();
        let u_fs = fault_source(scenario.source_kind, grid);
        let ts = terminal_spectra_faulted(&line, &terms, &scenario, &u_fs).unwrap();
        let mut checked = 0usize;
        for k in (1..grid.nyquist_bin()).step_by(17) {
            let omega = grid.omega(k);
            let (u0, ul) =
                brute_force_terminals(&line, &terms, &scenario, u_fs.values[k], omega);
            let scale = u0.norm().max(ul.norm()).max(1e-300);
            assert!(
                (ts.u0.values[k] - u0).norm() <= 1e-10 * scale,
                "{loss_mode:?} bin {k}: u0 {} vs {u0}",
                ts.u0.values[k]
            );
            assert!(
                (ts.ul.values[k] - ul).norm() <= 1e-10 * scale,
                "{loss_mode:?} bin {k}: ul {} vs {ul}",
                ts.ul.values[k]
            );
            checked += 1;
        }
        assert!(checked > 100);
    }
}

#[test]
fn collapsed_solution_matches_brute_force_at_offcenter_fault() {
    let line = reference_line(100e3, LossMode::Lossy);
    let terms = TerminationSpec::resistive(100e3, 100e3);
    let scenario = FaultScenario {
        x_f: 75e3,
        z_f: Impedance::resistive(300.0),
        source_kind: SourceKind::StepOverJw,
    };
    let grid = FrequencyGrid::new(2048, 1e-6).unwrap();
    let u_fs = fault_source(scenario.source_kind, grid);
    let ts = terminal_spectra_faulted(&line, &terms, &scenario, &u_fs).unwrap();
    for k in (1..grid.nyquist_bin()).step_by(7) {
        let omega = grid.omega(k);
        let (u0, ul) = brute_force_terminals(&line, &terms, &scenario, u_fs.values[k], omega);
        let scale = u0.norm().max(ul.norm()).max(1e-300);
        assert!((ts.u0.values[k] - u0).norm() <= 1e-10 * scale, "bin {k}");
        assert!((ts.ul.values[k] - ul).norm() <= 1e-10 * scale, "bin {k}");
    }
}
