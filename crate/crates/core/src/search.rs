//! Bias-search algorithms: flat-band DC search, AC amplitude search,
//! conveyor ramp sequencing, constant-velocity re-discretization, and
//! periodic waveform assembly.
//!
//! Every search below treats the coupled Poisson (+ Schrodinger) solve as a
//! scalar functional of one gate voltage and drives it with a clamped
//! secant-Newton iteration; each function evaluation is a full field solve,
//! so the iteration is tuned to spend as few evaluations as possible.

use crate::device::{Device, Dimension};
use crate::poisson::{band_edge_at, interpolate, solve_poisson, BiasPoint, SolveError};
use crate::schrodinger::{
    confinement_potential, dot_metrics, solve_eigen, DotMetrics, EigenError, QuantumMode,
};
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(
        "newton did not converge: best V = {best_v:.6} V with |error| = {best_err:.3e} eV \
         after {evals} evaluations{}",
        if *at_clamp { " (stuck at a clamp boundary; the target may be out of range)" } else { "" }
    )]
    Newton {
        best_v: f64,
        best_err: f64,
        evals: usize,
        at_clamp: bool,
    },
    #[error("solving gate '{gate}': {source}")]
    Gate {
        gate: String,
        #[source]
        source: Box<SearchError>,
    },
    #[error("step {step} (pair {driven} -> {companion}): {source}")]
    Step {
        step: usize,
        driven: String,
        companion: String,
        #[source]
        source: Box<SearchError>,
    },
    #[error("flat-band sweeps did not converge: max probe error {best:.3e} eV, trace {trace:?}")]
    FlatBand { best: f64, trace: Vec<f64> },
    #[error("lever-arm system is singular")]
    Singular,
    #[error(
        "bootstrap dot is unbound (E0 = {e0_eV:.4} eV >= 0); raise probe_amplitude_V"
    )]
    UnboundDot { e0_eV: f64 },
    #[error("ground-state pinning violated at step {step}: E0 = {e0_eV:.6} eV, target {target_eV:.6} eV")]
    Pinning { step: usize, e0_eV: f64, target_eV: f64 },
    #[error(
        "dot position is not strictly monotone at step {step}: tunnelling suspected; \
         run the sequence diagnostics on the ramp schedule"
    )]
    NonMonotoneX { step: usize },
    #[error(transparent)]
    Field(#[from] SolveError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol_energy_eV: f64,
    pub max_iter: usize,
    pub fd_step_V: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol_energy_eV: 5e-5,
            max_iter: 40,
            fd_step_V: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub max_sweeps: usize,
    pub tol_flatband_eV: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            max_sweeps: 10,
            tol_flatband_eV: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampConfig {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for ClampConfig {
    fn default() -> Self {
        ClampConfig {
            v_min: -4.0,
            v_max: 4.0,
        }
    }
}

/// Target ground-state energy: a fixed value, or the bootstrap rule
/// E0 = -(E1 - E0)/2 measured on a probe dot under the first gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum E0Target {
    #[serde(with = "auto_tag")]
    Auto,
    Fixed(f64),
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let tag = String::deserialize(d)?;
        if tag == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"auto\" or a number"))
        }
    }
}

impl Default for E0Target {
    fn default() -> Self {
        E0Target::Auto
    }
}

/// Detection thresholds echoed into reports; `jump_threshold_nm = null`
/// means half the median shuttle-gate pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub gap_threshold_eV: f64,
    pub jump_threshold_nm: Option<f64>,
    pub warn_threshold_eV: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            gap_threshold_eV: 1e-4,
            jump_threshold_nm: None,
            warn_threshold_eV: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Flat-band target for the conduction-band edge, eV from the Fermi level.
    pub ec_target_eV: f64,
    pub e0_target_eV: E0Target,
    pub newton: NewtonConfig,
    pub sweep: SweepConfig,
    /// Samples per gate pair in the ramp stage (K).
    pub ramp_samples: usize,
    /// Uniform-position samples in the resample stage (M).
    pub resample_points: usize,
    /// Absolute voltage clamp for the DC stage.
    pub v_clamp: ClampConfig,
    /// AC solves are clamped to [DC, DC + ac_span_V] per gate.
    pub ac_span_V: f64,
    /// Bootstrap amplitude used to form the probe dot for the auto E0 rule.
    pub probe_amplitude_V: f64,
    /// Fixed voltages for non-shuttling gates (accumulation, screening, ...).
    pub fixed_bias: BTreeMap<String, f64>,
    /// Lattice periods emitted by the tile stage.
    pub n_periods: usize,
    pub thresholds: ThresholdConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            ec_target_eV: 5e-3,
            e0_target_eV: E0Target::Auto,
            newton: NewtonConfig::default(),
            sweep: SweepConfig::default(),
            ramp_samples: 9,
            resample_points: 33,
            v_clamp: ClampConfig::default(),
            ac_span_V: 2.0,
            probe_amplitude_V: 0.1,
            fixed_bias: BTreeMap::new(),
            n_periods: 3,
            thresholds: ThresholdConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.into()));
        if self.newton.tol_energy_eV <= 0.0 || self.sweep.tol_flatband_eV <= 0.0 {
            return bad("tolerances must be positive");
        }
        if self.newton.fd_step_V <= 0.0 {
            return bad("newton.fd_step_V must be positive");
        }
        if self.ramp_samples < 3 {
            return bad("ramp_samples must be at least 3");
        }
        if self.resample_points < 3 {
            return bad("resample_points must be at least 3");
        }
        if self.v_clamp.v_min >= self.v_clamp.v_max {
            return bad("v_clamp.v_min must be below v_clamp.v_max");
        }
        if self.ac_span_V <= 0.0 || self.probe_amplitude_V <= 0.0 {
            return bad("ac_span_V and probe_amplitude_V must be positive");
        }
        if self.n_periods == 0 {
            return bad("n_periods must be at least 1");
        }
        if let Some(j) = self.thresholds.jump_threshold_nm {
            if j <= 0.0 {
                return bad("jump_threshold_nm must be positive");
            }
        }
        Ok(())
    }

    pub fn from_json(source: &str) -> Result<Self, SearchError> {
        let cfg: SearchConfig = serde_json::from_str(source)
            .map_err(|e| SearchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Cost-counting wrapper around the field and eigen solvers: each evaluation
/// of a search functional is one Poisson solve and, for the quantum
/// functionals, one eigensolve.
pub struct Evaluator<'a> {
    pub device: &'a Device,
    pub mode: QuantumMode,
    pub poisson_solves: Cell<u64>,
    pub eigen_solves: Cell<u64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(device: &'a Device, mode: QuantumMode) -> Self {
        Evaluator {
            device,
            mode,
            poisson_solves: Cell::new(0),
            eigen_solves: Cell::new(0),
        }
    }

    pub fn field(&self, bias: &BiasPoint) -> Result<crate::poisson::PotentialField, SearchError> {
        self.poisson_solves.set(self.poisson_solves.get() + 1);
        Ok(solve_poisson(self.device, bias)?)
    }

    pub fn band_edge(&self, bias: &BiasPoint, probe: &[f64]) -> Result<f64, SearchError> {
        let field = self.field(bias)?;
        Ok(band_edge_at(self.device, &field, probe)?)
    }

    pub fn metrics(&self, bias: &BiasPoint) -> Result<DotMetrics, SearchError> {
        let field = self.field(bias)?;
        let vconf = confinement_potential(self.device, &field, self.mode)?;
        self.eigen_solves.set(self.eigen_solves.get() + 1);
        let sol = solve_eigen(&vconf, 2)?;
        Ok(dot_metrics(&sol)?)
    }
}

/// Solve metrics at a bias outside any search loop (CLI re-analysis path).
pub fn evaluate_metrics(
    device: &Device,
    bias: &BiasPoint,
    mode: QuantumMode,
) -> Result<DotMetrics, SearchError> {
    Evaluator::new(device, mode).metrics(bias)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOutcome {
    pub volts: f64,
    pub value: f64,
    pub evals: usize,
}

/// Clamped secant-Newton on a simulator-defined functional.
///
/// The derivative is bootstrapped once by a forward difference of width
/// `fd_step_V` and then maintained by secant updates, halving the
/// per-iteration cost of a full finite-difference Newton.
pub fn newton_scalar(
    mut f: impl FnMut(f64) -> Result<f64, SearchError>,
    target: f64,
    v0: f64,
    clamp: [f64; 2],
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome, SearchError> {
    let [lo, hi] = clamp;
    if !(lo < hi) || !v0.is_finite() {
        return Err(SearchError::Config(format!(
            "invalid newton bracket [{lo}, {hi}] or start {v0}"
        )));
    }
    let clampf = |v: f64| v.clamp(lo, hi);

    let mut va = clampf(v0);
    let mut fa = f(va)?;
    let mut evals = 1;
    let mut best = (va, (fa - target).abs());
    if best.1 <= cfg.tol_energy_eV {
        return Ok(NewtonOutcome {
            volts: va,
            value: fa,
            evals,
        });
    }

    // Derivative bootstrap, stepping inward at the upper clamp.
    let mut vb = if va + cfg.fd_step_V <= hi {
        va + cfg.fd_step_V
    } else {
        va - cfg.fd_step_V
    };
    vb = clampf(vb);
    let mut fb = f(vb)?;
    evals += 1;
    if (fb - target).abs() < best.1 {
        best = (vb, (fb - target).abs());
    }
    if best.1 <= cfg.tol_energy_eV {
        return Ok(NewtonOutcome {
            volts: vb,
            value: fb,
            evals,
        });
    }

    let mut clamp_hits = 0;
    while evals < cfg.max_iter {
        let denom = fb - fa;
        if denom == 0.0 {
            break;
        }
        let raw = vb - (fb - target) * (vb - va) / denom;
        let vn = clampf(raw);
        let at_clamp = vn != raw || (vn == lo || vn == hi);
        if vn == vb {
            // Secant step collapsed (already at a boundary or fully
            // converged in V); no progress is possible.
            break;
        }
        let fn_ = f(vn)?;
        evals += 1;
        if (fn_ - target).abs() < best.1 {
            best = (vn, (fn_ - target).abs());
        }
        if (fn_ - target).abs() <= cfg.tol_energy_eV {
            return Ok(NewtonOutcome {
                volts: vn,
                value: fn_,
                evals,
            });
        }
        if at_clamp {
            clamp_hits += 1;
            if clamp_hits >= 2 {
                break;
            }
        } else {
            clamp_hits = 0;
        }
        va = vb;
        fa = fb;
        vb = vn;
        fb = fn_;
    }

    Err(SearchError::Newton {
        best_v: best.0,
        best_err: best.1,
        evals,
        at_clamp: best.0 == lo || best.0 == hi,
    })
}

/// Flat-band DC search result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatBandResult {
    pub bias: BiasPoint,
    /// Max probe error after each sweep, eV.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub warnings: Vec<String>,
    /// Deepest parasitic edge well found in the converged profile, eV below
    /// the Fermi level (zero when no well dips under it).
    pub parasitic_well_depth_eV: f64,
    pub poisson_solves: u64,
}

/// Build the starting bias: every gate at zero, then any fixed biases for
/// non-shuttling gates from the config.
fn base_bias(device: &Device, cfg: &SearchConfig) -> Result<BiasPoint, SearchError> {
    let mut bias = BiasPoint::zero(device);
    for (name, &v) in &cfg.fixed_bias {
        if device.spec.gate(name).is_none() {
            return Err(SearchError::Config(format!(
                "fixed_bias names unknown gate '{name}'"
            )));
        }
        bias.0.insert(name.clone(), v);
    }
    Ok(bias)
}

/// Sweep the shuttling gates in path order, solving each gate's voltage so
/// the band edge at its probe hits the target, until every probe is within
/// the flat-band tolerance.
pub fn dc_flat_band(device: &Device, cfg: &SearchConfig) -> Result<FlatBandResult, SearchError> {
    cfg.validate()?;
    let gates = device.spec.shuttling_gates();
    if gates.is_empty() {
        return Err(SearchError::Config("device has no shuttling gates".into()));
    }
    let probes: Vec<Vec<f64>> = gates
        .iter()
        .map(|g| probe_coords(device, device.probe_point(g)))
        .collect();

    let ev = Evaluator::new(device, QuantumMode::Line);
    let mut bias = base_bias(device, cfg)?;
    let clamp = [cfg.v_clamp.v_min, cfg.v_clamp.v_max];

    // Each gate must be solved tighter than the sweep tolerance, or the
    // sweeps stall at the scalar solver's own stopping error.
    let newton_cfg = NewtonConfig {
        tol_energy_eV: cfg.newton.tol_energy_eV.min(0.3 * cfg.sweep.tol_flatband_eV),
        ..cfg.newton
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..cfg.sweep.max_sweeps {
        sweeps += 1;
        for (g, probe) in gates.iter().zip(&probes) {
            let v0 = bias.get(&g.name).unwrap();
            let out = newton_scalar(
                |v| ev.band_edge(&bias.with(&g.name, v), probe),
                cfg.ec_target_eV,
                v0,
                clamp,
                &newton_cfg,
            )
            .map_err(|e| SearchError::Gate {
                gate: g.name.clone(),
                source: Box::new(e),
            })?;
            bias = bias.with(&g.name, out.volts);
        }
        // One field solve scores the whole sweep.
        let field = ev.field(&bias)?;
        let max_err = gates
            .iter()
            .zip(&probes)
            .map(|(_, p)| {
                (band_edge_at(device, &field, p).unwrap() - cfg.ec_target_eV).abs()
            })
            .fold(0.0_f64, f64::max);
        trace.push(max_err);
        if max_err <= cfg.sweep.tol_flatband_eV {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SearchError::FlatBand {
            best: trace.iter().copied().fold(f64::INFINITY, f64::min),
            trace,
        });
    }

    let field = solve_poisson(device, &bias)?;
    let depth = parasitic_well_depth(device, &field);
    let mut warnings = Vec::new();
    if cfg.ec_target_eV < 2.0 * depth {
        warnings.push(format!(
            "flat-band target {:.4e} eV is shallower than twice the deepest parasitic \
             edge well ({:.4e} eV); the electron may tunnel into an edge well",
            cfg.ec_target_eV, depth
        ));
    }

    Ok(FlatBandResult {
        bias,
        trace,
        sweeps,
        warnings,
        parasitic_well_depth_eV: depth,
        poisson_solves: ev.poisson_solves.get(),
    })
}

fn probe_coords(device: &Device, p: [f64; 2]) -> Vec<f64> {
    match device.spec.dimension {
        Dimension::One => vec![p[0]],
        Dimension::Two => vec![p[0], p[1]],
    }
}

/// Depth (below the Fermi level) of the deepest local band-edge minimum on
/// the quantum line that sits outside every shuttling-gate footprint and
/// outside semiclassical (reservoir) regions.
pub fn parasitic_well_depth(device: &Device, field: &crate::poisson::PotentialField) -> f64 {
    let (xs, ec) = quantum_line_profile(device, field);
    let shuttle: Vec<[f64; 2]> = device
        .spec
        .shuttling_gates()
        .iter()
        .map(|g| g.footprint_nm)
        .collect();
    let semi_x: Vec<[f64; 2]> = device
        .spec
        .regions
        .iter()
        .filter(|r| r.charge_model == crate::device::ChargeModel::Semiclassical)
        .map(|r| [r.box_nm.lo(0), r.box_nm.hi(0)])
        .collect();

    let excluded = |x: f64| {
        shuttle.iter().chain(&semi_x).any(|s| x >= s[0] && x <= s[1])
    };

    let mut depth = 0.0_f64;
    for i in 1..ec.len().saturating_sub(1) {
        if ec[i] < ec[i - 1] && ec[i] <= ec[i + 1] && !excluded(xs[i]) {
            depth = depth.max(-ec[i]);
        }
    }
    depth
}

/// Band edge sampled along the quantum line (nodal in 1D).
pub fn quantum_line_profile(
    device: &Device,
    field: &crate::poisson::PotentialField,
) -> (Vec<f64>, Vec<f64>) {
    let grid = &device.grid;
    let mut xs = Vec::with_capacity(grid.n[0]);
    let mut ec = Vec::with_capacity(grid.n[0]);
    for ix in 0..grid.n[0] {
        let x = grid.x(ix);
        xs.push(x);
        match device.spec.dimension {
            Dimension::One => ec.push(field.ec[ix]),
            Dimension::Two => {
                ec.push(interpolate(device, &field.ec, &[x, device.z_q_nm]).unwrap())
            }
        }
    }
    (xs, ec)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeverArmResult {
    pub bias: BiasPoint,
    /// Gate-to-dot couplings, eV/V; row i holds the response of probe i.
    pub alpha: Vec<Vec<f64>>,
    /// Probe errors re-measured at the returned bias, eV. The lever-arm
    /// route is not required to reach the flat-band tolerance.
    pub post_hoc_errors_eV: Vec<f64>,
    pub diagonally_dominant: bool,
}

/// Fast-but-fragile alternative to the sweep search: assume each probe
/// energy responds linearly to its own and its neighbours' voltages, build
/// the tridiagonal coupling system, and solve it in one shot.
pub fn lever_arm_dc(device: &Device, cfg: &SearchConfig) -> Result<LeverArmResult, SearchError> {
    cfg.validate()?;
    let gates = device.spec.shuttling_gates();
    let n = gates.len();
    if n == 0 {
        return Err(SearchError::Config("device has no shuttling gates".into()));
    }
    let probes: Vec<Vec<f64>> = gates
        .iter()
        .map(|g| probe_coords(device, device.probe_point(g)))
        .collect();

    let ev = Evaluator::new(device, QuantumMode::Line);
    let reference = base_bias(device, cfg)?;
    let field0 = ev.field(&reference)?;
    let e_ref: Vec<f64> = probes
        .iter()
        .map(|p| band_edge_at(device, &field0, p).unwrap())
        .collect();

    let h = cfg.newton.fd_step_V;
    let mut alpha = vec![vec![0.0; n]; n];
    for (j, g) in gates.iter().enumerate() {
        let vj = reference.get(&g.name).unwrap();
        let field = ev.field(&reference.with(&g.name, vj + h))?;
        for i in j.saturating_sub(1)..(j + 2).min(n) {
            let e = band_edge_at(device, &field, &probes[i]).unwrap();
            alpha[i][j] = (e - e_ref[i]) / h;
        }
    }

    let lower: Vec<f64> = (0..n).map(|i| if i > 0 { alpha[i][i - 1] } else { 0.0 }).collect();
    let diag: Vec<f64> = (0..n).map(|i| alpha[i][i]).collect();
    let upper: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { alpha[i][i + 1] } else { 0.0 })
        .collect();
    let rhs: Vec<f64> = e_ref.iter().map(|e| cfg.ec_target_eV - e).collect();
    let dv = crate::linalg::solve_tridiagonal(&lower, &diag, &upper, &rhs)
        .ok_or(SearchError::Singular)?;

    let mut bias = reference.clone();
    for (g, d) in gates.iter().zip(&dv) {
        let v = reference.get(&g.name).unwrap() + d;
        bias = bias.with(&g.name, v);
    }

    let field = ev.field(&bias)?;
    let post_hoc: Vec<f64> = probes
        .iter()
        .map(|p| (band_edge_at(device, &field, p).unwrap() - cfg.ec_target_eV).abs())
        .collect();
    let dominant = (0..n).all(|i| {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| alpha[i][j].abs()).sum();
        alpha[i][i].abs() > off
    });

    Ok(LeverArmResult {
        bias,
        alpha,
        post_hoc_errors_eV: post_hoc,
        diagonally_dominant: dominant,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcResult {
    /// Per-gate maximum voltage: the dot under that gate alone has E0 at
    /// the target.
    pub vmax: BTreeMap<String, f64>,
    /// Resolved target ground-state energy, eV.
    pub e0_target_eV: f64,
    /// Orbital splitting of the bootstrap dot when the auto rule ran.
    pub bootstrap_gap_eV: Option<f64>,
    pub poisson_solves: u64,
    pub eigen_solves: u64,
}

/// Calculate the per-gate AC amplitudes: resolve the target ground-state
/// energy (bootstrap dot rule when `auto`), then solve each gate's single
/// dot to that target.
pub fn ac_gate_amplitudes(
    device: &Device,
    dc: &BiasPoint,
    cfg: &SearchConfig,
    mode: QuantumMode,
) -> Result<AcResult, SearchError> {
    cfg.validate()?;
    let gates = device.spec.shuttling_gates();
    if gates.is_empty() {
        return Err(SearchError::Config("device has no shuttling gates".into()));
    }
    let ev = Evaluator::new(device, mode);

    let mut bootstrap_gap = None;
    let e0_target = match cfg.e0_target_eV {
        E0Target::Fixed(v) => v,
        E0Target::Auto => {
            let first = gates[0];
            let v_probe = dc.get(&first.name).unwrap() + cfg.probe_amplitude_V;
            let m = ev.metrics(&dc.with(&first.name, v_probe))?;
            if m.e0_eV >= 0.0 {
                return Err(SearchError::UnboundDot { e0_eV: m.e0_eV });
            }
            bootstrap_gap = Some(m.gap_eV);
            -0.5 * m.gap_eV
        }
    };

    let mut vmax = BTreeMap::new();
    for g in &gates {
        let dc_v = dc.get(&g.name).unwrap();
        let out = newton_scalar(
            |v| ev.metrics(&dc.with(&g.name, v)).map(|m| m.e0_eV),
            e0_target,
            dc_v + cfg.probe_amplitude_V,
            [dc_v, dc_v + cfg.ac_span_V],
            &cfg.newton,
        )
        .map_err(|e| SearchError::Gate {
            gate: g.name.clone(),
            source: Box::new(e),
        })?;
        vmax.insert(g.name.clone(), out.volts);
    }

    Ok(AcResult {
        vmax,
        e0_target_eV: e0_target,
        bootstrap_gap_eV: bootstrap_gap,
        poisson_solves: ev.poisson_solves.get(),
        eigen_solves: ev.eigen_solves.get(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Ramp,
    UniformVelocity,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileInfo {
    pub n_periods: usize,
    /// Steps per lattice period (two gate pitches).
    pub period_steps: usize,
    /// The tiling reuses the single-well templates unchanged; cross-talk
    /// between gate i and i+-2 is assumed negligible.
    pub crosstalk_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMeta {
    /// Flat-band DC bias every scheduled voltage rides on.
    pub dc: BiasPoint,
    pub e0_target_eV: f64,
    /// Shuttling gates in transport-path order.
    pub gate_order: Vec<String>,
    /// Which gate pair produced each step (index into adjacent pairs).
    pub pair_index: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiling: Option<TileInfo>,
}

/// Time-indexed sequence of bias points with per-step dot metrics; the
/// artifact's main output. Times are dimensionless with unit spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuttleSchedule {
    pub times: Vec<f64>,
    pub bias_steps: Vec<BiasPoint>,
    pub metrics: Vec<DotMetrics>,
    pub mode: ScheduleMode,
    pub meta: ScheduleMeta,
}

impl ShuttleSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn positions(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.x_nm).collect()
    }
    /// Midpoint-difference velocities on the unit time grid; length - 1.
    pub fn velocities(&self) -> Vec<f64> {
        let x = self.positions();
        x.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Coefficient of variation of the per-step velocity.
pub fn velocity_cv(schedule: &ShuttleSchedule) -> f64 {
    let v = schedule.velocities();
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if mean == 0.0 {
        return f64::INFINITY;
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
    var.sqrt() / mean.abs()
}

/// Conveyor ramp: for each adjacent gate pair along the path, drive the
/// left gate linearly from its maximum down to DC and re-solve the right
/// gate at every sample so the dot's ground state stays pinned.
pub fn ramp_schedule(
    device: &Device,
    dc: &BiasPoint,
    vmax: &BTreeMap<String, f64>,
    e0_target: f64,
    cfg: &SearchConfig,
    mode: QuantumMode,
) -> Result<ShuttleSchedule, SearchError> {
    cfg.validate()?;
    let gates = device.spec.shuttling_gates();
    if gates.len() < 2 {
        return Err(SearchError::Config(
            "ramp needs at least two shuttling gates".into(),
        ));
    }
    for g in &gates {
        if !vmax.contains_key(&g.name) {
            return Err(SearchError::Config(format!(
                "vmax does not cover gate '{}'",
                g.name
            )));
        }
    }
    let ev = Evaluator::new(device, mode);
    let k = cfg.ramp_samples;

    let mut times = Vec::new();
    let mut bias_steps: Vec<BiasPoint> = Vec::new();
    let mut metrics = Vec::new();
    let mut pair_index = Vec::new();

    for p in 0..gates.len() - 1 {
        let driven = gates[p];
        let companion = gates[p + 1];
        let v_top = vmax[&driven.name];
        let dc_d = dc.get(&driven.name).unwrap();
        let dc_c = dc.get(&companion.name).unwrap();
        let mut companion_v = bias_steps
            .last()
            .map(|b| b.get(&companion.name).unwrap())
            .unwrap_or(dc_c);

        // The first sample of every pair after the first duplicates the
        // previous pair's final state.
        let s_start = if p == 0 { 0 } else { 1 };
        for s in s_start..k {
            let f = s as f64 / (k - 1) as f64;
            let v_driven = v_top + (dc_d - v_top) * f;
            let base = dc.with(&driven.name, v_driven);
            let step = bias_steps.len();

            let out = newton_scalar(
                |w| ev.metrics(&base.with(&companion.name, w)).map(|m| m.e0_eV),
                e0_target,
                companion_v,
                [dc_c, dc_c + cfg.ac_span_V],
                &cfg.newton,
            )
            .map_err(|e| SearchError::Step {
                step,
                driven: driven.name.clone(),
                companion: companion.name.clone(),
                source: Box::new(e),
            })?;
            companion_v = out.volts;

            let bias = base.with(&companion.name, out.volts);
            let m = ev.metrics(&bias)?;
            if (m.e0_eV - e0_target).abs() > cfg.newton.tol_energy_eV {
                return Err(SearchError::Pinning {
                    step,
                    e0_eV: m.e0_eV,
                    target_eV: e0_target,
                });
            }
            times.push(bias_steps.len() as f64);
            bias_steps.push(bias);
            metrics.push(m);
            pair_index.push(p);
        }
    }

    Ok(ShuttleSchedule {
        times,
        bias_steps,
        metrics,
        mode: ScheduleMode::Ramp,
        meta: ScheduleMeta {
            dc: dc.clone(),
            e0_target_eV: e0_target,
            gate_order: gates.iter().map(|g| g.name.clone()).collect(),
            pair_index,
            tiling: None,
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResampleResult {
    pub schedule: ShuttleSchedule,
    pub velocity_cv: f64,
    pub warnings: Vec<String>,
}

/// Re-discretize a ramp schedule onto uniformly spaced dot positions.
///
/// Every gate's voltage is interpolated as a function of the dot position;
/// the gate that was being solved in the underlying ramp segment is then
/// re-solved so the ground state stays pinned at the new samples.
pub fn uniform_velocity_resample(
    ramp: &ShuttleSchedule,
    device: &Device,
    cfg: &SearchConfig,
    mode: QuantumMode,
) -> Result<ResampleResult, SearchError> {
    cfg.validate()?;
    if ramp.len() < 2 {
        return Err(SearchError::Precondition(
            "resampling needs a schedule with at least two steps".into(),
        ));
    }
    let x = ramp.positions();
    for i in 1..x.len() {
        if x[i] <= x[i - 1] {
            return Err(SearchError::NonMonotoneX { step: i });
        }
    }

    let ev = Evaluator::new(device, mode);
    let gates = &ramp.meta.gate_order;
    let dc = &ramp.meta.dc;
    let e0_target = ramp.meta.e0_target_eV;
    let m = cfg.resample_points;

    let x_start = x[0];
    let x_end = *x.last().unwrap();

    let mut times = Vec::with_capacity(m);
    let mut bias_steps = Vec::with_capacity(m);
    let mut metrics = Vec::with_capacity(m);
    let mut pair_index = Vec::with_capacity(m);

    // The interpolated voltages are only as good as the ramp's coverage of
    // X, which is poor exactly where the motion dashes. A secant solve on
    // the driven gate places the dot at each uniform target; the companion
    // re-solve inside it keeps the ground state pinned throughout.
    let dx_step = (x_end - x_start) / (m - 1) as f64;
    let tol_x = 0.02 * dx_step;
    let x_newton = NewtonConfig {
        tol_energy_eV: tol_x, // position tolerance, nm
        max_iter: cfg.newton.max_iter,
        fd_step_V: cfg.newton.fd_step_V,
    };

    for step in 0..m {
        let xt = x_start + dx_step * step as f64;
        // Ramp segment containing this position.
        let seg = match x.binary_search_by(|v| v.total_cmp(&xt)) {
            Ok(i) => i.min(x.len() - 2),
            Err(i) => i.saturating_sub(1).min(x.len() - 2),
        };
        let f = ((xt - x[seg]) / (x[seg + 1] - x[seg])).clamp(0.0, 1.0);
        let pair = ramp.meta.pair_index[seg.min(ramp.meta.pair_index.len() - 1)];
        let driven = &gates[pair];
        let companion = &gates[pair + 1];

        let mut bias = dc.clone();
        for name in gates.iter() {
            let va = ramp.bias_steps[seg].get(name).unwrap();
            let vb = ramp.bias_steps[seg + 1].get(name).unwrap();
            let v = va + (vb - va) * f;
            // Interpolation cannot dip below DC for monotone-in-segment
            // data, but guard against rounding.
            bias = bias.with(name, v.max(dc.get(name).unwrap()));
        }

        let dc_d = dc.get(driven).unwrap();
        let dc_c = dc.get(companion).unwrap();
        // Above the driven gate's own maximum the dot is deeper than the
        // target even with the companion resting at DC, so the position
        // solve stays inside [DC, Vmax].
        let vmax_d = ramp
            .bias_steps
            .iter()
            .map(|b| b.get(driven).unwrap())
            .fold(dc_d, f64::max);
        let companion_guess = std::cell::Cell::new(bias.get(companion).unwrap());
        let base = bias.clone();

        let place = |v_d: f64| -> Result<(BiasPoint, DotMetrics), SearchError> {
            let trial = base.with(driven, v_d);
            let out = newton_scalar(
                |w| ev.metrics(&trial.with(companion, w)).map(|mm| mm.e0_eV),
                e0_target,
                companion_guess.get(),
                [dc_c, dc_c + cfg.ac_span_V],
                &cfg.newton,
            )?;
            companion_guess.set(out.volts);
            let solved = trial.with(companion, out.volts);
            let mm = ev.metrics(&solved)?;
            Ok((solved, mm))
        };

        let v_d = newton_scalar(
            |v_d| place(v_d).map(|(_, mm)| mm.x_nm),
            xt,
            base.get(driven).unwrap(),
            [dc_d, vmax_d],
            &x_newton,
        )
        .map_err(|e| SearchError::Step {
            step,
            driven: driven.clone(),
            companion: companion.clone(),
            source: Box::new(e),
        })?;

        let (bias, mm) = place(v_d.volts).map_err(|e| SearchError::Step {
            step,
            driven: driven.clone(),
            companion: companion.clone(),
            source: Box::new(e),
        })?;
        if (mm.e0_eV - e0_target).abs() > cfg.newton.tol_energy_eV {
            return Err(SearchError::Pinning {
                step,
                e0_eV: mm.e0_eV,
                target_eV: e0_target,
            });
        }
        times.push(step as f64);
        bias_steps.push(bias);
        metrics.push(mm);
        pair_index.push(pair);
    }

    let schedule = ShuttleSchedule {
        times,
        bias_steps,
        metrics,
        mode: ScheduleMode::UniformVelocity,
        meta: ScheduleMeta {
            dc: dc.clone(),
            e0_target_eV: e0_target,
            gate_order: gates.clone(),
            pair_index,
            tiling: None,
        },
    };
    let cv = velocity_cv(&schedule);
    let mut warnings = Vec::new();
    if cv > 0.05 {
        warnings.push(format!(
            "velocity coefficient of variation {cv:.4} exceeds the 5% uniformity contract"
        ));
    }
    Ok(ResampleResult {
        schedule,
        velocity_cv: cv,
        warnings,
    })
}

/// Slice the first gate pitch out of a uniform-velocity schedule: the steps
/// produced by the first gate pair. This is the single-well template the
/// periodic tiling repeats.
pub fn trim_to_first_pitch(schedule: &ShuttleSchedule) -> Result<ShuttleSchedule, SearchError> {
    if schedule.mode != ScheduleMode::UniformVelocity {
        return Err(SearchError::Precondition(
            "trim expects a uniform-velocity schedule".into(),
        ));
    }
    let n = schedule
        .meta
        .pair_index
        .iter()
        .take_while(|&&p| p == 0)
        .count()
        .max(2);
    let mut out = schedule.clone();
    out.times.truncate(n);
    out.bias_steps.truncate(n);
    out.metrics.truncate(n);
    out.meta.pair_index.truncate(n);
    Ok(out)
}

/// Tile a one-pitch uniform-velocity schedule into a periodic waveform.
///
/// Gate i plays gate (i mod 2)'s template delayed by floor(i/2) lattice
/// periods; copies repeat every lattice period (two pitches). Nothing is
/// re-solved: the construction assumes cross-talk between gate i and gate
/// i+-2 is negligible, which is recorded in the tiling metadata.
pub fn periodic_tile(
    device: &Device,
    one_pitch: &ShuttleSchedule,
    n_periods: usize,
) -> Result<ShuttleSchedule, SearchError> {
    if one_pitch.mode != ScheduleMode::UniformVelocity {
        return Err(SearchError::Precondition(
            "tiling expects a uniform-velocity schedule".into(),
        ));
    }
    if n_periods == 0 {
        return Err(SearchError::Precondition("n_periods must be at least 1".into()));
    }
    let gates = &one_pitch.meta.gate_order;
    if gates.len() < 2 {
        return Err(SearchError::Precondition(
            "tiling needs at least two shuttling gates".into(),
        ));
    }
    let dc = &one_pitch.meta.dc;
    // The input must span exactly one pitch: only the first pair is active.
    for (step, bias) in one_pitch.bias_steps.iter().enumerate() {
        for name in gates.iter().skip(2) {
            let v = bias.get(name).unwrap();
            let rest = dc.get(name).unwrap();
            if (v - rest).abs() > 1e-12 {
                return Err(SearchError::Precondition(format!(
                    "input spans more than one gate pitch: gate '{name}' is active at step {step}"
                )));
            }
        }
    }

    let l = one_pitch.len();
    let period = 2 * l; // lattice period: two pitches
    let total = n_periods * l;
    let templates: [Vec<f64>; 2] = [
        one_pitch
            .bias_steps
            .iter()
            .map(|b| b.get(&gates[0]).unwrap())
            .collect(),
        one_pitch
            .bias_steps
            .iter()
            .map(|b| b.get(&gates[1]).unwrap())
            .collect(),
    ];

    let pitch_nm = {
        let x = one_pitch.positions();
        x.last().unwrap() - x[0]
    };

    let mut times = Vec::with_capacity(total);
    let mut bias_steps = Vec::with_capacity(total);
    let mut metrics = Vec::with_capacity(total);
    let mut pair_index = Vec::with_capacity(total);

    for t in 0..total {
        let mut bias = dc.clone();
        for (i, name) in gates.iter().enumerate() {
            let delay = (i / 2) * period;
            let v = if t >= delay && (t - delay) % period < l {
                templates[i % 2][(t - delay) % period]
            } else {
                dc.get(name).unwrap()
            };
            bias = bias.with(name, v);
        }
        let local = t % l;
        let mut m = one_pitch.metrics[local];
        // Lead-well trajectory: the conveyor keeps advancing one pitch per
        // input duration.
        m.x_nm += (t / l) as f64 * pitch_nm;
        times.push(t as f64);
        bias_steps.push(bias);
        metrics.push(m);
        pair_index.push((t / l).min(gates.len().saturating_sub(2)));
    }

    Ok(ShuttleSchedule {
        times,
        bias_steps,
        metrics,
        mode: ScheduleMode::Periodic,
        meta: ScheduleMeta {
            dc: dc.clone(),
            e0_target_eV: one_pitch.meta.e0_target_eV,
            gate_order: gates.clone(),
            pair_index,
            tiling: Some(TileInfo {
                n_periods,
                period_steps: period,
                crosstalk_note: format!(
                    "single-well templates reused verbatim for {} gates; \
                     cross-talk between gates two positions apart assumed negligible",
                    device.spec.shuttling_gates().len()
                ),
            }),
        },
    })
}
