//! Replica experiments: coexistence versus segregation, the truncated
//! variance bound, orthogonality of the total masses, and the distance
//! scaling of `Ĝ_log`.
//!
//! Every decision is made in units of standard errors, with a 3σ margin.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::io::config_digest;
use crate::kernels::green::{g_hat_log_eval, DEFAULT_TOLERANCE};
use crate::kernels::{Kernel, KernelSpec, TailFlag};
use crate::stats::{linear_fit, mean_se, variance_se, Estimate};
use crate::trotter_sim::{run_replicas, InitialMass, Mode, SimConfig, Trajectory};

/// Width of every statistical decision band.
pub const SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub replicas: usize,
}

impl Cell {
    fn new(label: impl Into<String>, e: Estimate) -> Self {
        Cell {
            label: label.into(),
            estimate: e.estimate,
            std_error: e.std_error,
            replicas: e.n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_digest: String,
    pub cells: Vec<Cell>,
    pub verdict: Verdict,
    #[serde(default)]
    pub details: Map<String, Value>,
    /// Per-replica rows, written next to the report rather than inside it.
    #[serde(skip)]
    pub raw: Vec<Value>,
    /// Wall time; kept out of the serialized report so reruns match byte
    /// for byte.
    #[serde(skip)]
    pub runtime: Duration,
}

impl ExperimentReport {
    pub fn cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label)
    }
}

fn default_delta() -> f64 {
    0.05
}

fn default_replicas() -> u64 {
    2000
}

fn default_masses() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_floor() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Coexistence,
    Segregation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    StrictlyDecreasing,
    Stabilized,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoexistenceConfig {
    pub kernel: KernelSpec,
    pub l1: usize,
    pub l2: usize,
    pub horizons: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    pub epsilon: f64,
    pub seed: u64,
    /// Initial masses at `l1` (type 1) and `l2` (type 2).
    #[serde(default = "default_masses")]
    pub masses: [f64; 2],
    /// A stabilized `p(T)` must stay above this level.
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Regime>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceBoundConfig {
    pub kernel: KernelSpec,
    pub l1: usize,
    pub l2: usize,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub epsilon: f64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    pub seed: u64,
    /// Horizon of the `Ĝ_log` quadrature; defaults to `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ghat_t_max: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrthogonalityConfig {
    pub sim: SimConfig,
    pub checkpoints: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhatLogScalingConfig {
    pub kernel: KernelSpec,
    pub distances: Vec<usize>,
    pub t_max: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

/// Any experiment, tagged by `"experiment"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Coexistence(CoexistenceConfig),
    VarianceBound(VarianceBoundConfig),
    Orthogonality(OrthogonalityConfig),
    GhatlogScaling(GhatLogScalingConfig),
}

impl ExperimentConfig {
    pub fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            ExperimentConfig::Coexistence(c) => Some(&mut c.seed),
            ExperimentConfig::VarianceBound(c) => Some(&mut c.seed),
            ExperimentConfig::Orthogonality(c) => Some(&mut c.sim.seed),
            ExperimentConfig::GhatlogScaling(_) => None,
        }
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        match self {
            ExperimentConfig::Coexistence(c) => &c.kernel,
            ExperimentConfig::VarianceBound(c) => &c.kernel,
            ExperimentConfig::Orthogonality(c) => &c.sim.kernel,
            ExperimentConfig::GhatlogScaling(c) => &c.kernel,
        }
    }

    pub fn run(&self, base_dir: &Path) -> Result<ExperimentReport> {
        let kernel = self.kernel_spec().build(base_dir)?;
        match self {
            ExperimentConfig::Coexistence(c) => coexistence_experiment(&kernel, c),
            ExperimentConfig::VarianceBound(c) => variance_bound_experiment(&kernel, c),
            ExperimentConfig::Orthogonality(c) => orthogonality_check(&kernel, c),
            ExperimentConfig::GhatlogScaling(c) => ghatlog_scaling_experiment(&kernel, c),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Converts checkpoint times to step counts and returns the common stride.
fn checkpoint_steps(times: &[f64], epsilon: f64, what: &str) -> Result<(Vec<usize>, usize)> {
    if times.is_empty() {
        return Err(Error::config(what, "at least one time is required"));
    }
    let mut steps = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let s = t / epsilon;
        if !(t.is_finite() && t >= 0.0) || (s - s.round()).abs() > 1e-9 * s.max(1.0) {
            return Err(Error::config(
                format!("{what}[{i}]"),
                format!("{t} is not a nonnegative whole multiple of epsilon = {epsilon}"),
            ));
        }
        steps.push(s.round() as usize);
    }
    let stride = steps.iter().copied().fold(0, gcd).max(1);
    Ok((steps, stride))
}

fn run_ladder(
    kernel: &Kernel,
    sim: &SimConfig,
    times: &[f64],
    what: &str,
) -> Result<Vec<Trajectory>> {
    let (steps, stride) = checkpoint_steps(times, sim.epsilon, what)?;
    let mut cfg = sim.clone();
    cfg.t_end = steps.iter().copied().max().unwrap_or(0) as f64 * sim.epsilon;
    cfg.observe_every = Some(stride as f64 * sim.epsilon);
    run_replicas(kernel, &cfg)
}

fn record_at(traj: &Trajectory, t: f64) -> Result<&crate::trotter_sim::Record> {
    traj.at(t)
        .ok_or_else(|| Error::State(format!("no checkpoint recorded at t = {t}")))
}

fn finish(
    name: &str,
    digest: String,
    cells: Vec<Cell>,
    verdict: Verdict,
    details: Map<String, Value>,
    raw: Vec<Value>,
    start: Instant,
) -> ExperimentReport {
    ExperimentReport {
        name: name.to_string(),
        config_digest: digest,
        cells,
        verdict,
        details,
        raw,
        runtime: start.elapsed(),
    }
}

/// Classifies the horizon ladder from the per-rung estimates and the paired
/// standard errors of consecutive differences.
pub fn classify_trend(p: &[Estimate], drops: &[Estimate], floor: f64) -> Trend {
    if p.len() < 2 {
        return Trend::Undetermined;
    }
    if drops
        .iter()
        .all(|d| d.estimate > SIGMAS * d.std_error && d.estimate > 0.0)
    {
        return Trend::StrictlyDecreasing;
    }
    let last = p[p.len() - 1];
    let d = drops[drops.len() - 1];
    if d.estimate.abs() <= SIGMAS * d.std_error && last.estimate - SIGMAS * last.std_error > floor {
        return Trend::Stabilized;
    }
    Trend::Undetermined
}

/// Fraction of replicas with `M₁,T · M₂,T ≥ δ` on a ladder of horizons.
pub fn coexistence_experiment(
    kernel: &Kernel,
    cfg: &CoexistenceConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.l1 == cfg.l2 {
        return Err(Error::config("l2", "l1 and l2 must differ"));
    }
    if !(cfg.delta.is_finite() && cfg.delta > 0.0) {
        return Err(Error::config("delta", "delta must be positive"));
    }
    let mut horizons = cfg.horizons.clone();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    let mut sim = SimConfig::new(
        cfg.kernel.clone(),
        cfg.epsilon,
        0.0,
        vec![
            InitialMass(cfg.l1, 1, cfg.masses[0]),
            InitialMass(cfg.l2, 2, cfg.masses[1]),
        ],
        cfg.seed,
    );
    sim.replicas = cfg.replicas;
    let runs = run_ladder(kernel, &sim, &horizons, "horizons")?;

    let mut indicators: Vec<Vec<f64>> = Vec::with_capacity(horizons.len());
    let mut raw = Vec::new();
    for &t in &horizons {
        let mut col = Vec::with_capacity(runs.len());
        for (r, traj) in runs.iter().enumerate() {
            let rec = record_at(traj, t)?;
            let hit = rec.m1 * rec.m2 >= cfg.delta;
            col.push(if hit { 1.0 } else { 0.0 });
            raw.push(json!({"replica": r, "T": t, "M1": rec.m1, "M2": rec.m2, "coexist": hit}));
        }
        indicators.push(col);
    }
    let p: Vec<Estimate> = indicators.iter().map(|c| mean_se(c)).collect();
    let drops: Vec<Estimate> = indicators
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
            mean_se(&d)
        })
        .collect();
    let trend = classify_trend(&p, &drops, cfg.floor);

    let mut cells: Vec<Cell> = horizons
        .iter()
        .zip(&p)
        .map(|(t, e)| Cell::new(format!("p(T={t})"), *e))
        .collect();
    for (w, d) in horizons.windows(2).zip(&drops) {
        cells.push(Cell::new(format!("p(T={})-p(T={})", w[0], w[1]), *d));
    }

    let verdict = match cfg.expect {
        None => Verdict::Inconclusive,
        Some(Regime::Segregation) => {
            let rises = drops.iter().any(|d| -d.estimate > SIGMAS * d.std_error);
            if trend == Trend::StrictlyDecreasing {
                Verdict::Pass
            } else if rises || trend == Trend::Stabilized {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            }
        }
        Some(Regime::Coexistence) => {
            let last = p[p.len() - 1];
            if trend == Trend::Stabilized {
                Verdict::Pass
            } else if last.estimate + SIGMAS * last.std_error < cfg.floor {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            }
        }
    };
    let mut details = Map::new();
    details.insert("trend".into(), serde_json::to_value(trend)?);
    details.insert("delta".into(), json!(cfg.delta));
    Ok(finish(
        "coexistence",
        config_digest(cfg)?,
        cells,
        verdict,
        details,
        raw,
        start,
    ))
}

/// Replica variance of `M^K_{1,T}` against `8 K log K · Ĝ_log(l1, l2)`.
pub fn variance_bound_experiment(
    kernel: &Kernel,
    cfg: &VarianceBoundConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.k.is_nan() || cfg.k <= 2.0 {
        return Err(Error::config("K", "K must exceed 2"));
    }
    let mut sim = SimConfig::new(
        cfg.kernel.clone(),
        cfg.epsilon,
        0.0,
        vec![InitialMass(cfg.l1, 1, 1.0), InitialMass(cfg.l2, 2, 1.0)],
        cfg.seed,
    );
    sim.mode = Mode::Truncated { k: cfg.k };
    sim.replicas = cfg.replicas;
    let runs = run_ladder(kernel, &sim, &[cfg.t], "T")?;
    let mut m1 = Vec::with_capacity(runs.len());
    let mut m2 = Vec::with_capacity(runs.len());
    let mut lo = Vec::with_capacity(runs.len());
    let mut hi = Vec::with_capacity(runs.len());
    let mut raw = Vec::with_capacity(runs.len());
    for (r, traj) in runs.iter().enumerate() {
        let rec = record_at(traj, cfg.t)?;
        m1.push(rec.m1);
        m2.push(rec.m2);
        lo.push(rec.qv_lower);
        hi.push(rec.qv_upper.unwrap_or(f64::NAN));
        raw.push(json!({"replica": r, "M1": rec.m1, "M2": rec.m2, "qv_lo": rec.qv_lower, "qv_hi": rec.qv_upper, "tauK": rec.tau_k_hit}));
    }
    let var1 = variance_se(&m1);
    let var2 = variance_se(&m2);
    let qlo = mean_se(&lo);
    let qhi = mean_se(&hi);

    let ghat = g_hat_log_eval(
        kernel,
        cfg.l1,
        cfg.l2,
        cfg.ghat_t_max.unwrap_or(cfg.t),
        cfg.tol,
    )?;
    let scale = 8.0 * cfg.k * cfg.k.ln();
    let bound = Estimate {
        estimate: scale * ghat.value,
        std_error: scale * ghat.abs_error_bound,
        n: 1,
    };
    let verdict = if ghat.tail_flag == TailFlag::DivergentSuspected {
        Verdict::Inconclusive
    } else if var1.estimate - SIGMAS * var1.std_error > bound.estimate + bound.std_error {
        Verdict::Fail
    } else if var1.estimate <= bound.estimate + SIGMAS * var1.std_error {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    let cells = vec![
        Cell::new("var_M1", var1),
        Cell::new("var_M2", var2),
        Cell::new("bound", bound),
        Cell::new("qv_lower_mean", qlo),
        Cell::new("qv_upper_mean", qhi),
    ];
    let mut details = Map::new();
    details.insert("ghat_log".into(), serde_json::to_value(ghat)?);
    details.insert(
        "var_ge_qv_lower".into(),
        json!(var1.estimate + SIGMAS * var1.std_error.hypot(qlo.std_error) >= qlo.estimate),
    );
    Ok(finish(
        "variance_bound",
        config_digest(cfg)?,
        cells,
        verdict,
        details,
        raw,
        start,
    ))
}

/// `E[M₁,t M₂,t] = M₁,₀ M₂,₀` at each checkpoint, in truncated mode.
pub fn orthogonality_check(kernel: &Kernel, cfg: &OrthogonalityConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !matches!(cfg.sim.mode, Mode::Truncated { .. }) {
        return Err(Error::config(
            "sim.mode",
            "orthogonality is checked in truncated mode",
        ));
    }
    let mut checkpoints = cfg.checkpoints.clone();
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    let runs = run_ladder(kernel, &cfg.sim, &checkpoints, "checkpoints")?;
    let (m10, m20) = {
        let first = &runs[0].records[0];
        (first.m1, first.m2)
    };
    let target = m10 * m20;
    let mut cells = Vec::new();
    let mut raw = Vec::new();
    let mut all_ok = true;
    for &t in &checkpoints {
        let mut prod = Vec::with_capacity(runs.len());
        for (r, traj) in runs.iter().enumerate() {
            let rec = record_at(traj, t)?;
            prod.push(rec.m1 * rec.m2);
            raw.push(json!({"replica": r, "t": t, "M1": rec.m1, "M2": rec.m2}));
        }
        let e = mean_se(&prod);
        let ok = if e.std_error == 0.0 || e.n < 2 {
            (e.estimate - target).abs() <= 1e-12 * target.abs().max(1.0)
        } else {
            e.within(target, SIGMAS)
        };
        all_ok &= ok;
        cells.push(Cell::new(format!("E[M1*M2](t={t})"), e));
    }
    let verdict = if all_ok { Verdict::Pass } else { Verdict::Fail };
    let mut details = Map::new();
    details.insert("target".into(), json!(target));
    Ok(finish(
        "orthogonality",
        config_digest(cfg)?,
        cells,
        verdict,
        details,
        raw,
        start,
    ))
}

/// Fits `log Ĝ_log(l1, l1 + r e₀)` against `log r` on a lattice kernel.
pub fn ghatlog_scaling_experiment(
    kernel: &Kernel,
    cfg: &GhatLogScalingConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let geometry = *kernel
        .geometry()
        .ok_or_else(|| Error::config("kernel", "distance scaling needs a lattice kernel"))?;
    let mut distances = cfg.distances.clone();
    distances.sort_unstable();
    distances.dedup();
    if distances.len() < 2 {
        return Err(Error::TooFewPoints {
            what: "distance scaling fit",
            needed: 2,
            got: distances.len(),
        });
    }
    if let Some(&r) = distances
        .iter()
        .find(|&&r| r == 0 || 2 * r >= geometry.side)
    {
        return Err(Error::config(
            "distances",
            format!("distance {r} must lie in 1..L/2"),
        ));
    }
    let centre = vec![(geometry.side / 2) as i64; geometry.dim];
    let l1 = geometry.index(&centre);
    let estimates: Vec<_> = distances
        .iter()
        .map(|&r| {
            let mut c = centre.clone();
            c[0] += r as i64;
            g_hat_log_eval(kernel, l1, geometry.index(&c), cfg.t_max, cfg.tol)
        })
        .collect::<Result<_>>()?;

    let mut cells: Vec<Cell> = distances
        .iter()
        .zip(&estimates)
        .map(|(r, g)| Cell {
            label: format!("ghat_log(r={r})"),
            estimate: g.value,
            std_error: g.abs_error_bound,
            replicas: 0,
        })
        .collect();
    let raw: Vec<Value> = distances
        .iter()
        .zip(&estimates)
        .map(|(r, g)| json!({"distance": r, "ghat_log": g}))
        .collect();
    let target = 2.0 - geometry.dim as f64;
    let mut details = Map::new();
    details.insert("target_slope".into(), json!(target));
    let divergent = estimates
        .iter()
        .any(|g| g.tail_flag == TailFlag::DivergentSuspected);
    let verdict = if divergent {
        Verdict::Inconclusive
    } else {
        let x: Vec<f64> = distances.iter().map(|&r| (r as f64).ln()).collect();
        let y: Vec<f64> = estimates.iter().map(|g| g.value.ln()).collect();
        let fit = linear_fit(&x, &y)?;
        cells.push(Cell {
            label: "slope".into(),
            estimate: fit.slope,
            std_error: fit.slope_se,
            replicas: 0,
        });
        if (fit.slope - target).abs() <= 0.4 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    Ok(finish(
        "ghatlog_scaling",
        config_digest(cfg)?,
        cells,
        verdict,
        details,
        raw,
        start,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Geometry, StepLaw};

    fn ring(side: usize) -> KernelSpec {
        KernelSpec::Lattice(Geometry {
            dim: 1,
            side,
            step_law: StepLaw::NearestNeighborUniform,
        })
    }

    #[test]
    fn absent_type_never_coexists() {
        let spec = ring(21);
        let k = spec.build(Path::new(".")).unwrap();
        let cfg = CoexistenceConfig {
            kernel: spec,
            l1: 3,
            l2: 8,
            horizons: vec![1.0, 2.0, 4.0],
            delta: 0.05,
            replicas: 50,
            epsilon: 0.5,
            seed: 1,
            masses: [1.0, 0.0],
            floor: 0.1,
            expect: None,
        };
        let r = coexistence_experiment(&k, &cfg).unwrap();
        for t in [1.0, 2.0, 4.0] {
            assert_eq!(r.cell(&format!("p(T={t})")).unwrap().estimate, 0.0);
        }
        assert_eq!(r.raw.len(), 150);
        let again = coexistence_experiment(&k, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn trend_classes() {
        let e = |v: f64, s: f64| Estimate {
            estimate: v,
            std_error: s,
            n: 100,
        };
        let p = [e(0.9, 0.01), e(0.7, 0.01), e(0.5, 0.01)];
        let d = [e(0.2, 0.01), e(0.2, 0.01)];
        assert_eq!(classify_trend(&p, &d, 0.1), Trend::StrictlyDecreasing);
        let d = [e(0.2, 0.01), e(0.01, 0.01)];
        assert_eq!(classify_trend(&p, &d, 0.1), Trend::Stabilized);
        let p0 = [e(0.0, 0.0), e(0.0, 0.0)];
        assert_eq!(
            classify_trend(&p0, &[e(0.0, 0.0)], 0.1),
            Trend::Undetermined
        );
    }

    #[test]
    fn identity_kernel_variance_is_zero() {
        let spec = KernelSpec::Identity { n_sites: 4 };
        let k = spec.build(Path::new(".")).unwrap();
        let cfg = VarianceBoundConfig {
            kernel: spec,
            l1: 0,
            l2: 2,
            k: 4.0,
            t: 2.0,
            epsilon: 0.5,
            replicas: 20,
            seed: 3,
            ghat_t_max: None,
            tol: 1e-6,
        };
        let r = variance_bound_experiment(&k, &cfg).unwrap();
        assert_eq!(r.cell("var_M1").unwrap().estimate, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
        let mut bad = cfg.clone();
        bad.k = 2.0;
        assert!(variance_bound_experiment(&k, &bad).is_err());
    }

    #[test]
    fn orthogonality_trivial_cases() {
        let spec = ring(11);
        let k = spec.build(Path::new(".")).unwrap();
        let mut sim = SimConfig::new(spec, 0.5, 0.0, vec![InitialMass(1, 1, 1.0)], 4);
        sim.mode = Mode::Truncated { k: 8.0 };
        sim.replicas = 30;
        let r = orthogonality_check(
            &k,
            &OrthogonalityConfig {
                sim: sim.clone(),
                checkpoints: vec![0.0, 2.0],
            },
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.cells[1].estimate, 0.0);
        sim.initial.push(InitialMass(3, 2, 1.5));
        let r = orthogonality_check(
            &k,
            &OrthogonalityConfig {
                sim,
                checkpoints: vec![0.0],
            },
        )
        .unwrap();
        assert_eq!(r.cells[0].estimate, 1.5);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn scaling_needs_two_distances_and_flags_recurrence() {
        let spec = ring(61);
        let k = spec.build(Path::new(".")).unwrap();
        let cfg = GhatLogScalingConfig {
            kernel: spec,
            distances: vec![5],
            t_max: 100.0,
            tol: 1e-6,
        };
        assert!(matches!(
            ghatlog_scaling_experiment(&k, &cfg),
            Err(Error::TooFewPoints { .. })
        ));
        let mut cfg = cfg;
        cfg.distances = vec![2, 4];
        cfg.t_max = 400.0;
        let r = ghatlog_scaling_experiment(&k, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn checkpoints_must_align() {
        assert!(checkpoint_steps(&[1.0, 2.5], 1.0, "x").is_err());
        assert_eq!(
            checkpoint_steps(&[50.0, 100.0, 200.0], 0.5, "x").unwrap().1,
            100
        );
    }

    #[test]
    fn config_tagging() {
        let text = r#"{"experiment":"ghatlog_scaling","kernel":{"lattice":{"dim":3,"side":61}},"distances":[5,10,20],"t_max":300}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(c, ExperimentConfig::GhatlogScaling(_)));
    }
}
