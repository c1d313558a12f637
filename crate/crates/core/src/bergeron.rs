//! Independent time-domain reference simulator: method-of-characteristics
//! (Bergeron) transient solver for the two-segment faulted line. This is the
//! brute-force cross-check for the frequency-domain synthesis chain.
//!
//! The faulted line is modeled as two lossless segments joined at the fault
//! node, with per-segment series resistance lumped in the standard
//! R/4 - R/2 - R/4 pattern (two lossless half-segments per segment). The
//! fault branch is the fault impedance in series with the source voltage to
//! ground. Each time step solves a small constant nodal conductance system
//! fed by the Bergeron history currents.

use crate::error::{Error, Result};
use crate::line::{FaultScenario, Impedance, LineSpec, SourceKind, TerminationSpec};
use crate::signal::{decimate, FrequencyGrid, SampledRecord, Spectrum};

/// Source waveform driving the fault branch at the simulation rate.
#[derive(Debug, Clone)]
pub enum Drive {
    /// One-step rectangular pulse of amplitude 1 (area `dt_sim`), the
    /// band-limited stand-in for a Dirac impulse.
    Impulse,
    /// Unit step turning on at t = 0.
    Step,
    /// Arbitrary samples at `dt_sim`; shorter drives are zero-extended.
    Custom(Vec<f64>),
}

impl Drive {
    fn value(&self, step: usize) -> f64 {
        match self {
            Drive::Impulse => {
                if step == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Drive::Step => 1.0,
            Drive::Custom(samples) => samples.get(step).copied().unwrap_or(0.0),
        }
    }

    pub fn from_source_kind(kind: SourceKind) -> Self {
        match kind {
            SourceKind::DiracImpulse => Drive::Impulse,
            SourceKind::StepOverJw => Drive::Step,
        }
    }
}

/// A time-domain simulation scenario.
#[derive(Debug, Clone)]
pub struct TdScenario {
    pub line: LineSpec,
    pub terms: TerminationSpec,
    pub fault: FaultScenario,
    pub drive: Drive,
    /// Simulation step (default 0.1 us).
    pub dt_sim: f64,
    /// Total simulated duration; must cover at least two end-to-end travel
    /// times so both terminals see the wavefront and a reflection.
    pub duration: f64,
    /// Output sample spacing; must be an integer multiple of `dt_sim`.
    pub dt_out: f64,
}

impl TdScenario {
    pub fn new(
        line: LineSpec,
        terms: TerminationSpec,
        fault: FaultScenario,
        duration: f64,
    ) -> Self {
        let drive = Drive::from_source_kind(fault.source_kind);
        Self { line, terms, fault, drive, dt_sim: 1e-7, duration, dt_out: 1e-6 }
    }

    fn validate(&self) -> Result<(usize, usize, usize)> {
        self.line.validate()?;
        self.fault.validate(&self.line)?;
        if !(self.dt_sim > 0.0) || !(self.dt_out > 0.0) || !(self.duration > 0.0) {
            return Err(Error::InvalidInput(
                "simulation steps and duration must be positive".into(),
            ));
        }
        let decim = (self.dt_out / self.dt_sim).round();
        if decim < 1.0 || (self.dt_out / self.dt_sim - decim).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "output step {} is not an integer multiple of simulation step {}",
                self.dt_out, self.dt_sim
            )));
        }
        let v = self.line.velocity();
        if self.duration < 2.0 * self.line.length_m / v {
            return Err(Error::InvalidInput(format!(
                "duration {} s shorter than two end-to-end travel times",
                self.duration
            )));
        }
        let k1 = (self.fault.x_f / (v * self.dt_sim)).round() as usize;
        let k2 = ((self.line.length_m - self.fault.x_f) / (v * self.dt_sim)).round() as usize;
        if k1 == 0 || k2 == 0 {
            return Err(Error::InvalidInput(
                "fault too close to a terminal for the simulation step".into(),
            ));
        }
        Ok((k1, k2, decim as usize))
    }

    /// The fault position after snapping segment travel times to whole steps;
    /// this is what "true location" means when the oracle defines the truth.
    pub fn snapped_x_f(&self) -> Result<f64> {
        let (k1, _, _) = self.validate()?;
        Ok(k1 as f64 * self.line.velocity() * self.dt_sim)
    }
}

/// Simulation output: terminal and fault-node voltages plus the snapped
/// geometry actually simulated.
#[derive(Debug, Clone)]
pub struct TdOutput {
    pub u0: SampledRecord,
    pub ul: SampledRecord,
    pub u_fault: SampledRecord,
    pub x_f_snapped: f64,
    pub length_snapped: f64,
}

/// One lossless Bergeron line between two solver nodes.
struct BergeronLine {
    node_a: usize,
    node_b: usize,
    z: f64,
    delay: usize,
    /// Ring buffers of past node voltages and end currents (into the line).
    hist_v_a: Vec<f64>,
    hist_v_b: Vec<f64>,
    hist_i_a: Vec<f64>,
    hist_i_b: Vec<f64>,
}

impl BergeronLine {
    fn new(node_a: usize, node_b: usize, z: f64, delay: usize) -> Self {
        Self {
            node_a,
            node_b,
            z,
            delay,
            hist_v_a: vec![0.0; delay],
            hist_v_b: vec![0.0; delay],
            hist_i_a: vec![0.0; delay],
            hist_i_b: vec![0.0; delay],
        }
    }

    /// History current sources for this step: the current into the line at
    /// each end is `v/z + h`, with `h` assembled from the far end one travel
    /// time ago.
    fn history(&self, step: usize) -> (f64, f64) {
        if step < self.delay {
            (0.0, 0.0)
        } else {
            let slot = step % self.delay;
            let h_a = -self.hist_v_b[slot] / self.z - self.hist_i_b[slot];
            let h_b = -self.hist_v_a[slot] / self.z - self.hist_i_a[slot];
            (h_a, h_b)
        }
    }

    fn record(&mut self, step: usize, v: &[f64], h_a: f64, h_b: f64) {
        let slot = step % self.delay;
        let v_a = v[self.node_a];
        let v_b = v[self.node_b];
        self.hist_v_a[slot] = v_a;
        self.hist_v_b[slot] = v_b;
        self.hist_i_a[slot] = v_a / self.z + h_a;
        self.hist_i_b[slot] = v_b / self.z + h_b;
    }
}

/// Network under assembly: nodal conductances, lines, and fixed injections.
struct Network {
    n_nodes: usize,
    g: Vec<Vec<f64>>,
    lines: Vec<BergeronLine>,
}

impl Network {
    fn new() -> Self {
        Self { n_nodes: 0, g: Vec::new(), lines: Vec::new() }
    }

    fn add_node(&mut self) -> usize {
        self.n_nodes += 1;
        for row in &mut self.g {
            row.push(0.0);
        }
        self.g.push(vec![0.0; self.n_nodes]);
        self.n_nodes - 1
    }

    fn stamp_shunt(&mut self, node: usize, conductance: f64) {
        self.g[node][node] += conductance;
    }

    fn stamp_series(&mut self, a: usize, b: usize, resistance: f64) {
        let g = 1.0 / resistance;
        self.g[a][a] += g;
        self.g[b][b] += g;
        self.g[a][b] -= g;
        self.g[b][a] -= g;
    }

    fn add_line(&mut self, a: usize, b: usize, z: f64, delay: usize) {
        self.g[a][a] += 1.0 / z;
        self.g[b][b] += 1.0 / z;
        self.lines.push(BergeronLine::new(a, b, z, delay));
    }

    /// Build one faulted-line segment between `from` and `to`: a lossless
    /// line of `steps` delay, with any series resistance lumped as
    /// R/4 - R/2 - R/4 around two half-length lossless lines.
    fn add_segment(&mut self, from: usize, to: usize, z: f64, steps: usize, r_total: f64) {
        if r_total == 0.0 {
            self.add_line(from, to, z, steps);
        } else if steps >= 2 {
            let half_a = steps / 2;
            let half_b = steps - half_a;
            let m1 = self.add_node();
            let m2 = self.add_node();
            let m3 = self.add_node();
            let m4 = self.add_node();
            self.stamp_series(from, m1, r_total / 4.0);
            self.add_line(m1, m2, z, half_a);
            self.stamp_series(m2, m3, r_total / 2.0);
            self.add_line(m3, m4, z, half_b);
            self.stamp_series(m4, to, r_total / 4.0);
        } else {
            // too short to split: R/2 at each end of a single lossless line
            let m1 = self.add_node();
            let m2 = self.add_node();
            self.stamp_series(from, m1, r_total / 2.0);
            self.add_line(m1, m2, z, steps);
            self.stamp_series(m2, to, r_total / 2.0);
        }
    }
}

/// Dense LU-style inverse with partial pivoting for the small constant nodal
/// matrix (at most nine nodes).
fn invert(mut a: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidInput("singular nodal matrix".into()));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

fn resistive_value(z: Impedance, what: &str) -> Result<Option<f64>> {
    match z {
        Impedance::Open => Ok(None),
        Impedance::Finite(c) => {
            if c.im != 0.0 || !(c.re > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{what} must be a positive resistance for the time-domain oracle, got {c}"
                )));
            }
            Ok(Some(c.re))
        }
    }
}

/// Run the Bergeron simulation and return the terminal and fault-node
/// voltages sampled at `dt_out`.
pub fn simulate(scenario: &TdScenario) -> Result<TdOutput> {
    let (k1, k2, decim) = scenario.validate()?;
    let line = &scenario.line;
    let v = line.velocity();
    let z_c = (line.l_per_m / line.c_per_m).sqrt();
    let x_f_snapped = k1 as f64 * v * scenario.dt_sim;
    let length_snapped = (k1 + k2) as f64 * v * scenario.dt_sim;

    let r0 = resistive_value(scenario.terms.z0, "left termination")?;
    let rl = resistive_value(scenario.terms.zl, "right termination")?;
    let r_per_m = line.effective_r_per_m();

    let mut net = Network::new();
    let t0 = net.add_node();
    let nf = net.add_node();
    let tl = net.add_node();
    if let Some(r) = r0 {
        net.stamp_shunt(t0, 1.0 / r);
    }
    if let Some(r) = rl {
        net.stamp_shunt(tl, 1.0 / r);
    }
    net.add_segment(t0, nf, z_c, k1, r_per_m * x_f_snapped);
    net.add_segment(nf, tl, z_c, k2, r_per_m * (length_snapped - x_f_snapped));

    // fault branch: Z_f in series with the source to ground; zero impedance
    // pins the fault node to the source voltage (Dirichlet node)
    let z_f = match scenario.fault.z_f {
        Impedance::Open => None,
        Impedance::Finite(c) => {
            if c.im != 0.0 || c.re < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "fault impedance must be a nonnegative resistance, got {c}"
                )));
            }
            Some(c.re)
        }
    };
    let pinned = matches!(z_f, Some(r) if r == 0.0);
    if let Some(r) = z_f {
        if r > 0.0 {
            net.stamp_shunt(nf, 1.0 / r);
        }
    }

    // eliminate the pinned fault node from the solved system if present
    let solved: Vec<usize> =
        (0..net.n_nodes).filter(|&i| !(pinned && i == nf)).collect();
    let index_of: Vec<Option<usize>> = {
        let mut m = vec![None; net.n_nodes];
        for (r, &n) in solved.iter().enumerate() {
            m[n] = Some(r);
        }
        m
    };
    let sub: Vec<Vec<f64>> = solved
        .iter()
        .map(|&i| solved.iter().map(|&j| net.g[i][j]).collect())
        .collect();
    let g_inv = invert(sub)?;
    let coupling: Vec<f64> = solved.iter().map(|&i| net.g[i][nf]).collect();

    let n_steps = {
        let raw = (scenario.duration / scenario.dt_sim).round() as usize;
        raw - raw % decim
    };
    if n_steps == 0 {
        return Err(Error::InvalidInput("duration shorter than one output sample".into()));
    }

    let mut volt = vec![0.0; net.n_nodes];
    let mut rhs = vec![0.0; solved.len()];
    let mut u0_t = Vec::with_capacity(n_steps);
    let mut ul_t = Vec::with_capacity(n_steps);
    let mut uf_t = Vec::with_capacity(n_steps);
    let mut hist = vec![(0.0, 0.0); net.lines.len()];

    for step in 0..n_steps {
        let u_src = scenario.drive.value(step);
        for r in rhs.iter_mut() {
            *r = 0.0;
        }
        for (li, bl) in net.lines.iter().enumerate() {
            let (h_a, h_b) = bl.history(step);
            hist[li] = (h_a, h_b);
            if let Some(r) = index_of[bl.node_a] {
                rhs[r] -= h_a;
            }
            if let Some(r) = index_of[bl.node_b] {
                rhs[r] -= h_b;
            }
        }
        if pinned {
            volt[nf] = u_src;
            for (r, &c) in coupling.iter().enumerate() {
                rhs[r] -= c * u_src;
            }
        } else if let Some(rf) = z_f {
            rhs[index_of[nf].unwrap()] += u_src / rf;
        }
        for (r, &node) in solved.iter().enumerate() {
            let mut acc = 0.0;
            for (c, &x) in g_inv[r].iter().zip(&rhs) {
                acc += c * x;
            }
            volt[node] = acc;
        }
        if !volt.iter().all(|x| x.is_finite()) {
            return Err(Error::SimulationUnstable { step });
        }
        for (li, bl) in net.lines.iter_mut().enumerate() {
            let (h_a, h_b) = hist[li];
            bl.record(step, &volt, h_a, h_b);
        }
        u0_t.push(volt[t0]);
        ul_t.push(volt[tl]);
        uf_t.push(volt[nf]);
    }

    let grid = FrequencyGrid::new(n_steps, scenario.dt_sim)?;
    let pack = |values: Vec<f64>| SampledRecord { values, grid, t0_offset: 0.0 };
    let (u0, ul, uf) = if decim == 1 {
        (pack(u0_t), pack(ul_t), pack(uf_t))
    } else {
        (
            decimate(&pack(u0_t), decim)?,
            decimate(&pack(ul_t), decim)?,
            decimate(&pack(uf_t), decim)?,
        )
    };
    Ok(TdOutput { u0, ul, u_fault: uf, x_f_snapped, length_snapped })
}

/// Amplitude-spectrum comparison metrics over a frequency band.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumComparison {
    /// Relative L2 error of the amplitude spectra over the band.
    pub relative_l2: f64,
    /// Largest per-bin amplitude deviation, relative to the band's peak
    /// analytic amplitude (per-bin normalization would blow up at the deep
    /// resonance notches).
    pub max_relative_amplitude: f64,
    pub bins_compared: usize,
}

/// Compare an analytic spectrum against a simulated record on the same grid.
pub fn compare_spectra(
    analytic: &Spectrum,
    simulated: &SampledRecord,
    f_lo_hz: f64,
    f_hi_hz: f64,
) -> Result<SpectrumComparison> {
    if analytic.grid != simulated.grid {
        return Err(Error::InvalidInput(
            "spectrum comparison needs matching sampling grids".into(),
        ));
    }
    let nyquist = analytic.grid.freq_hz(analytic.grid.nyquist_bin());
    if !(0.0 <= f_lo_hz && f_lo_hz < f_hi_hz && f_hi_hz <= nyquist) {
        return Err(Error::InvalidInput(format!(
            "band [{f_lo_hz}, {f_hi_hz}] Hz outside [0, {nyquist}] Hz"
        )));
    }
    let sim = crate::signal::spectrum_of(simulated);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut peak = 0.0f64;
    let mut max_abs_dev = 0.0f64;
    let mut bins = 0;
    for k in 0..=analytic.grid.nyquist_bin() {
        let f = analytic.grid.freq_hz(k);
        if f < f_lo_hz || f > f_hi_hz {
            continue;
        }
        let a = analytic.values[k].norm();
        let s = sim.values[k].norm();
        num += (a - s) * (a - s);
        den += a * a;
        peak = peak.max(a);
        max_abs_dev = max_abs_dev.max((a - s).abs());
        bins += 1;
    }
    if bins == 0 || den == 0.0 {
        return Err(Error::InvalidInput("empty comparison band".into()));
    }
    Ok(SpectrumComparison {
        relative_l2: (num / den).sqrt(),
        max_relative_amplitude: max_abs_dev / peak,
        bins_compared: bins,
    })
}
