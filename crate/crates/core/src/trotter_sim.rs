//! Trotter-type construction of the infinite-rate mutually catalytic
//! branching process.
//!
//! Each step of length `ε` first moves both type fields by the heat flow
//! `a_ε`, then replaces every site value by an independent draw from the
//! exit law of planar Brownian motion started there: the quadrant in free
//! mode, the square `[0, K]²` in truncated mode. Truncated mode stops
//! resampling for good once `M₁ + M₂` exceeds `K/2`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_measures::{h_k, quadrant_exit_coords, square_exit_point};
use crate::kernels::{Direction, FlowPlan, FlowScratch, Kernel, KernelSpec};
use crate::rng::replica_stream;
use crate::stats::{jackknife, Estimate};

/// Entries below `DEFAULT_MASS_CUTOFF · M_i` are dropped after each flow.
pub const DEFAULT_MASS_CUTOFF: f64 = 1e-15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    #[default]
    Free,
    Truncated {
        #[serde(rename = "K")]
        k: f64,
    },
}

impl Mode {
    pub fn box_size(&self) -> Option<f64> {
        match self {
            Mode::Free => None,
            Mode::Truncated { k } => Some(*k),
        }
    }
}

/// `(site, type, mass)` with type 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialMass(pub usize, pub u8, pub f64);

/// Finitely supported test function `y`, as `(site, y₁, y₂)` entries with
/// `y₁ · y₂ = 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Probe(pub Vec<(usize, f64, f64)>);

fn default_cutoff() -> f64 {
    DEFAULT_MASS_CUTOFF
}

fn default_replicas() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub kernel: KernelSpec,
    pub epsilon: f64,
    pub t_end: f64,
    #[serde(default)]
    pub mode: Mode,
    pub initial: Vec<InitialMass>,
    /// Checkpoint spacing; must be a whole number of steps. Without it only
    /// the start and the end are recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observe_every: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub duality_probes: Vec<Probe>,
    #[serde(default)]
    pub snapshot: bool,
    #[serde(default = "default_cutoff")]
    pub mass_cutoff: f64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
}

impl SimConfig {
    pub fn new(
        kernel: KernelSpec,
        epsilon: f64,
        t_end: f64,
        initial: Vec<InitialMass>,
        seed: u64,
    ) -> Self {
        SimConfig {
            kernel,
            epsilon,
            t_end,
            mode: Mode::Free,
            initial,
            observe_every: None,
            seed,
            duality_probes: Vec::new(),
            snapshot: false,
            mass_cutoff: DEFAULT_MASS_CUTOFF,
            replicas: 1,
        }
    }

    /// Number of Trotter steps, `⌈t_end / ε⌉`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.epsilon) - 1e-9).ceil().max(0.0) as usize
    }

    /// Steps between checkpoints.
    pub fn checkpoint_stride(&self) -> usize {
        match self.observe_every {
            Some(o) => (o / self.epsilon).round() as usize,
            None => self.n_steps().max(1),
        }
    }

    pub fn initial_total(&self) -> f64 {
        self.initial.iter().map(|m| m.2).sum()
    }

    /// Checks every invariant that does not need the kernel.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "epsilon must be positive"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::config(
                "t_end",
                "t_end must be finite and nonnegative",
            ));
        }
        if let Some(o) = self.observe_every {
            let steps = o / self.epsilon;
            if !(o.is_finite() && o > 0.0)
                || steps.round() < 1.0
                || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0)
            {
                return Err(Error::config(
                    "observe_every",
                    format!(
                        "observe_every = {o} is not a positive whole multiple of epsilon = {}",
                        self.epsilon
                    ),
                ));
            }
        }
        for (i, m) in self.initial.iter().enumerate() {
            if m.1 != 1 && m.1 != 2 {
                return Err(Error::config(
                    format!("initial[{i}]"),
                    format!("type must be 1 or 2, got {}", m.1),
                ));
            }
            if !(m.2.is_finite() && m.2 >= 0.0) {
                return Err(Error::config(
                    format!("initial[{i}]"),
                    format!("mass must be finite and nonnegative, got {}", m.2),
                ));
            }
        }
        if let Mode::Truncated { k } = self.mode {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::config("mode.truncated.K", "K must be positive"));
            }
            let total = self.initial_total();
            if total >= k {
                return Err(Error::config(
                    "initial",
                    format!("initial total mass {total} must be strictly below K = {k} for the truncated process"),
                ));
            }
        }
        for (p, probe) in self.duality_probes.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for (j, &(site, y1, y2)) in probe.0.iter().enumerate() {
                let path = format!("duality_probes[{p}][{j}]");
                if !(y1.is_finite() && y2.is_finite()) || y1 < 0.0 || y2 < 0.0 {
                    return Err(Error::config(
                        path,
                        "probe values must be finite and nonnegative",
                    ));
                }
                if y1 * y2 != 0.0 {
                    return Err(Error::config(
                        path,
                        "probe values must have one zero coordinate",
                    ));
                }
                if !seen.insert(site) {
                    return Err(Error::config(path, format!("site {site} listed twice")));
                }
            }
        }
        if !(0.0..1e-6).contains(&self.mass_cutoff) {
            return Err(Error::config(
                "mass_cutoff",
                "mass_cutoff must lie in [0, 1e-6)",
            ));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas", "replicas must be at least 1"));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus site-range checks against `kernel`.
    pub fn validate_for(&self, kernel: &Kernel) -> Result<()> {
        self.validate()?;
        let n = kernel.n_sites();
        for (i, m) in self.initial.iter().enumerate() {
            if m.0 >= n {
                return Err(Error::config(
                    format!("initial[{i}]"),
                    format!("site {} out of range for {n} sites", m.0),
                ));
            }
        }
        for (p, probe) in self.duality_probes.iter().enumerate() {
            for (j, e) in probe.0.iter().enumerate() {
                if e.0 >= n {
                    return Err(Error::config(
                        format!("duality_probes[{p}][{j}]"),
                        format!("site {} out of range for {n} sites", e.0),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    PostFlow,
    PostResample,
}

/// Dense per-site masses of both types.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub phase: Phase,
    pub clock: f64,
}

pub type Snapshot = BTreeMap<usize, [f64; 2]>;

impl FieldState {
    pub fn zeros(n_sites: usize) -> Self {
        FieldState {
            x1: vec![0.0; n_sites],
            x2: vec![0.0; n_sites],
            phase: Phase::Initial,
            clock: 0.0,
        }
    }

    pub fn from_initial(n_sites: usize, initial: &[InitialMass]) -> Result<Self> {
        let mut s = Self::zeros(n_sites);
        for &InitialMass(site, ty, mass) in initial {
            if site >= n_sites {
                return Err(Error::arg(format!(
                    "initial site {site} out of range for {n_sites} sites"
                )));
            }
            match ty {
                1 => s.x1[site] += mass,
                2 => s.x2[site] += mass,
                _ => return Err(Error::arg(format!("mass type must be 1 or 2, got {ty}"))),
            }
        }
        Ok(s)
    }

    pub fn n_sites(&self) -> usize {
        self.x1.len()
    }

    pub fn masses(&self) -> (f64, f64) {
        (self.x1.iter().sum(), self.x2.iter().sum())
    }

    /// Whether every site has at most one type present.
    pub fn in_e(&self) -> bool {
        self.x1
            .iter()
            .zip(&self.x2)
            .all(|(a, b)| *a == 0.0 || *b == 0.0)
    }

    /// Nonzero sites only.
    pub fn snapshot(&self) -> Snapshot {
        self.x1
            .iter()
            .zip(&self.x2)
            .enumerate()
            .filter(|(_, (a, b))| **a != 0.0 || **b != 0.0)
            .map(|(k, (a, b))| (k, [*a, *b]))
            .collect()
    }
}

/// `x ⋄ y = −(x₁+x₂)(y₁+y₂) + i(x₁−x₂)(y₁−y₂)`.
#[inline]
pub fn diamond(x1: f64, x2: f64, y1: f64, y2: f64) -> Complex64 {
    Complex64::new(-(x1 + x2) * (y1 + y2), (x1 - x2) * (y1 - y2))
}

/// `⟨⟨x, y⟩⟩ = Σ_k x(k) ⋄ y(k)`.
pub fn duality_pairing(state: &FieldState, y: &Probe) -> Complex64 {
    y.0.iter()
        .map(|&(k, y1, y2)| diamond(state.x1[k], state.x2[k], y1, y2))
        .sum()
}

/// Advances states by one Trotter step, reusing its flow plan and buffers.
pub struct Stepper<'k> {
    kernel: &'k Kernel,
    plan: FlowPlan<'k>,
    mode: Mode,
    cutoff: f64,
    scratch: FlowScratch,
}

impl<'k> Stepper<'k> {
    pub fn new(kernel: &'k Kernel, epsilon: f64, mode: Mode, cutoff: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::arg("epsilon must be positive"));
        }
        Ok(Stepper {
            kernel,
            plan: FlowPlan::new(kernel, epsilon, Direction::Forward)?,
            mode,
            cutoff,
            scratch: FlowScratch::default(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.plan.time()
    }

    /// Step (i): heat flow of both types, then the small-mass cutoff with
    /// renormalisation to the pre-flow totals.
    pub fn flow(&mut self, state: &mut FieldState) -> Result<()> {
        if state.phase == Phase::PostFlow {
            return Err(Error::State("flow applied twice without resampling".into()));
        }
        for field in [&mut state.x1, &mut state.x2] {
            let total: f64 = field.iter().sum();
            if total == 0.0 {
                continue;
            }
            self.plan.apply_in_place(field, &mut self.scratch);
            if self.cutoff > 0.0 {
                let floor = self.cutoff * total;
                let mut kept = 0.0;
                for v in field.iter_mut() {
                    if *v < floor {
                        *v = 0.0;
                    }
                    kept += *v;
                }
                let scale = total / kept;
                field.iter_mut().for_each(|v| *v *= scale);
            }
        }
        state.phase = Phase::PostFlow;
        state.clock += self.epsilon();
        Ok(())
    }

    /// Step (ii). Returns whether resampling took place (truncated mode
    /// skips it once `M₁ + M₂ > K/2`).
    pub fn resample<R: Rng + ?Sized>(&self, state: &mut FieldState, rng: &mut R) -> Result<bool> {
        if state.phase != Phase::PostFlow {
            return Err(Error::State(
                "resampling requires a freshly flowed state".into(),
            ));
        }
        let resampled = match self.mode {
            Mode::Free => {
                for (a, b) in state.x1.iter_mut().zip(state.x2.iter_mut()) {
                    if *a > 0.0 && *b > 0.0 {
                        (*a, *b) = quadrant_exit_coords(rng, *a, *b);
                    }
                }
                true
            }
            Mode::Truncated { k } => {
                let (m1, m2) = state.masses();
                if m1 + m2 > k / 2.0 {
                    false
                } else {
                    for (site, (a, b)) in state.x1.iter_mut().zip(state.x2.iter_mut()).enumerate() {
                        if *a > 0.0 && *b > 0.0 {
                            if *a > k || *b > k {
                                return Err(Error::State(format!(
                                    "site {site} value ({a}, {b}) outside [0, {k}]²"
                                )));
                            }
                            (*a, *b) = square_exit_point(rng, *a, *b, k).coords();
                        }
                    }
                    true
                }
            }
        };
        state.phase = Phase::PostResample;
        Ok(resampled)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut FieldState, rng: &mut R) -> Result<bool> {
        self.flow(state)?;
        self.resample(state, rng)
    }

    pub fn kernel(&self) -> &'k Kernel {
        self.kernel
    }
}

/// One Trotter step with a freshly built plan; prefer [`Stepper`] in loops.
pub fn trotter_step<R: Rng + ?Sized>(
    state: &mut FieldState,
    kernel: &Kernel,
    epsilon: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<bool> {
    Stepper::new(kernel, epsilon, mode, DEFAULT_MASS_CUTOFF)?.step(state, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "qv_lo")]
    pub qv_lower: f64,
    #[serde(rename = "qv_hi")]
    pub qv_upper: Option<f64>,
    #[serde(rename = "tauK")]
    pub tau_k_hit: bool,
    /// Residual martingale `e^{⟨⟨X_t,y⟩⟩} − e^{⟨⟨x,y⟩⟩} − ∫ ⟨⟨𝒜X_s,y⟩⟩ e^{⟨⟨X_s,y⟩⟩} ds`
    /// per probe.
    pub duality: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_state: Option<Snapshot>,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("trajectories always hold the t = 0 record")
    }

    /// Record at time `t` (to within a millionth of a step).
    pub fn at(&self, t: f64) -> Option<&Record> {
        self.records
            .iter()
            .find(|r| (r.t - t).abs() <= 1e-9 * t.max(1.0))
    }
}

struct Integrands {
    z: f64,
    qv_lower: f64,
    qv_upper: f64,
}

fn integrands(kernel: &Kernel, state: &FieldState, box_size: Option<f64>) -> Integrands {
    let a = kernel.matrix(Direction::Forward);
    let mut x2_ax1 = 0.0;
    let mut x1_ax2 = 0.0;
    let mut upper = 0.0;
    let mut overlap = 0.0;
    for k in 0..state.n_sites() {
        let (u, v) = (state.x1[k], state.x2[k]);
        overlap += u * v;
        if v > 0.0 {
            let r = a.row_dot(k, &state.x1);
            x2_ax1 += v * r;
            if let Some(kk) = box_size {
                upper += r * h_k(v, kk);
            }
        }
        if u > 0.0 {
            let r = a.row_dot(k, &state.x2);
            x1_ax2 += u * r;
            if let Some(kk) = box_size {
                upper += r * h_k(u, kk);
            }
        }
    }
    let mixed = 0.5 * (x2_ax1 + x1_ax2);
    Integrands {
        z: mixed - overlap,
        qv_lower: mixed,
        qv_upper: upper,
    }
}

/// `(⟨⟨x, y⟩⟩, ⟨⟨𝒜x, y⟩⟩)`.
fn pairing_and_drift(kernel: &Kernel, state: &FieldState, y: &Probe) -> (Complex64, Complex64) {
    let a = kernel.matrix(Direction::Forward);
    let mut p = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for &(k, y1, y2) in &y.0 {
        let (u, v) = (state.x1[k], state.x2[k]);
        p += diamond(u, v, y1, y2);
        d += diamond(
            a.row_dot(k, &state.x1) - u,
            a.row_dot(k, &state.x2) - v,
            y1,
            y2,
        );
    }
    (p, d)
}

struct DualityTrack {
    start: Complex64,
    integral: Complex64,
    last: Complex64,
}

/// Runs one replica. The stream is derived from `(config.seed, replica)`.
pub fn run_trajectory(kernel: &Kernel, config: &SimConfig, replica: u64) -> Result<Trajectory> {
    config.validate_for(kernel)?;
    let mut rng = replica_stream(config.seed, replica);
    let eps = config.epsilon;
    let box_size = config.mode.box_size();
    let mut stepper = Stepper::new(kernel, eps, config.mode, config.mass_cutoff)?;
    let mut state = FieldState::from_initial(kernel.n_sites(), &config.initial)?;

    let mut prev = integrands(kernel, &state, box_size);
    let (mut z, mut qv_lower, mut qv_upper) = (0.0, 0.0, 0.0);
    let (m1, m2) = state.masses();
    let mut tau = box_size.is_some_and(|k| m1 + m2 >= k / 2.0);

    let mut duality: Vec<DualityTrack> = config
        .duality_probes
        .iter()
        .map(|y| {
            let (p, d) = pairing_and_drift(kernel, &state, y);
            DualityTrack {
                start: p.exp(),
                integral: Complex64::new(0.0, 0.0),
                last: d * p.exp(),
            }
        })
        .collect();

    let record = |t: f64,
                  m1: f64,
                  m2: f64,
                  z: f64,
                  lo: f64,
                  hi: f64,
                  tau: bool,
                  dual: &[DualityTrack],
                  state: &FieldState| Record {
        t,
        m1,
        m2,
        z,
        qv_lower: lo,
        qv_upper: box_size.map(|_| hi),
        tau_k_hit: tau,
        duality: dual
            .iter()
            .zip(&config.duality_probes)
            .map(|(d, y)| duality_pairing(state, y).exp() - d.start - d.integral)
            .collect(),
    };

    let mut records = vec![record(0.0, m1, m2, 0.0, 0.0, 0.0, tau, &duality, &state)];
    let steps = config.n_steps();
    let stride = config.checkpoint_stride();
    for n in 1..=steps {
        stepper.flow(&mut state)?;
        stepper.resample(&mut state, &mut rng)?;
        let cur = integrands(kernel, &state, box_size);
        z += 0.5 * eps * (prev.z + cur.z);
        if !tau {
            qv_lower += 0.5 * eps * (prev.qv_lower + cur.qv_lower);
            qv_upper += 0.5 * eps * (prev.qv_upper + cur.qv_upper);
        }
        prev = cur;
        for (track, y) in duality.iter_mut().zip(&config.duality_probes) {
            let (p, d) = pairing_and_drift(kernel, &state, y);
            let now = d * p.exp();
            track.integral += 0.5 * eps * (track.last + now);
            track.last = now;
        }
        let (m1, m2) = state.masses();
        if let Some(k) = box_size {
            tau |= m1 + m2 >= k / 2.0;
        }
        if n % stride == 0 || n == steps {
            records.push(record(
                n as f64 * eps,
                m1,
                m2,
                z,
                qv_lower,
                qv_upper,
                tau,
                &duality,
                &state,
            ));
        }
    }
    Ok(Trajectory {
        records,
        final_state: config.snapshot.then(|| state.snapshot()),
    })
}

/// Runs `config.replicas` replicas in parallel; results are in replica order.
pub fn run_replicas(kernel: &Kernel, config: &SimConfig) -> Result<Vec<Trajectory>> {
    config.validate_for(kernel)?;
    (0..config.replicas)
        .into_par_iter()
        .map(|r| run_trajectory(kernel, config, r))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpResidual {
    pub residual: Complex64,
    /// Jackknife standard error of the complex mean (modulus of the
    /// componentwise errors).
    pub std_error: f64,
    pub replicas: usize,
    pub per_replica: Vec<Complex64>,
}

/// Monte Carlo estimate of the martingale-problem residual for probe `y`
/// at `config.t_end`, over `n_replicas` replicas.
pub fn mp_residual_estimate(
    kernel: &Kernel,
    config: &SimConfig,
    y: &Probe,
    n_replicas: u64,
) -> Result<MpResidual> {
    if config.mode != Mode::Free {
        return Err(Error::arg(
            "the martingale-problem residual is defined for free mode",
        ));
    }
    let mut cfg = config.clone();
    cfg.duality_probes = vec![y.clone()];
    cfg.replicas = n_replicas;
    cfg.observe_every = None;
    cfg.snapshot = false;
    let runs = run_replicas(kernel, &cfg)?;
    let per_replica: Vec<Complex64> = runs.iter().map(|t| t.last().duality[0]).collect();
    let re: Vec<f64> = per_replica.iter().map(|c| c.re).collect();
    let im: Vec<f64> = per_replica.iter().map(|c| c.im).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (jr, ji): (Estimate, Estimate) = (jackknife(&re, mean), jackknife(&im, mean));
    Ok(MpResidual {
        residual: Complex64::new(jr.estimate, ji.estimate),
        std_error: jr.std_error.hypot(ji.std_error),
        replicas: per_replica.len(),
        per_replica,
    })
}
