//! Time-integrated kernels: `G_t`, `Ḡ_t`, `Ḡ*_t` and the logarithmic
//! interaction potential `Ĝ_log`.
//!
//! All integrands are evaluated matrix-free by flowing indicator vectors.
//! Integration runs over dyadic panels `[t/2^{j+1}, t/2^j]` (plus a first
//! panel `[0, t/2^J]` shorter than [`FIRST_PANEL`]), each handled by
//! adaptive Simpson. The last panel is always `[t/2, t]`, which is where
//! the divergence test reads the integrand average.

use serde::{Deserialize, Serialize};

use super::flow::{Direction, FlowPlan, FlowScratch};
use super::Kernel;
use crate::error::{Error, Result};

/// Default absolute tolerance for the quadratures.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Upper bound for the length of the first panel.
pub const FIRST_PANEL: f64 = 1.0 / 16.0;

/// Tail average above `DIVERGENCE_FACTOR / t` flags suspected divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

const MIN_DEPTH: u32 = 3;
const MAX_DEPTH: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFlag {
    Converged,
    DivergentSuspected,
}

/// Which two-point kernel to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// `ā_s = aᵀ_{s/2} a_{s/2}`.
    BarA,
    /// `â_s = a_s (a + aᵀ) aᵀ_s`.
    HatA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenKind {
    #[serde(rename = "G")]
    G,
    #[serde(rename = "bar_G")]
    BarG,
    #[serde(rename = "bar_G_star")]
    BarGStar,
}

/// Result of a Green-type quadrature at a finite horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub value: f64,
    pub horizon: f64,
    pub tail_flag: TailFlag,
    pub abs_error_bound: f64,
}

/// Warning text when a torus is too small for the requested horizon.
///
/// A finite torus is always recurrent, so potentials are only meaningful
/// while the walk has not wrapped around: we ask for `2√t ≤ L/4`.
pub fn torus_horizon_warning(kernel: &Kernel, t: f64) -> Option<String> {
    let g = kernel.geometry()?;
    (2.0 * t.sqrt() > g.side as f64 / 4.0).then(|| {
        format!(
            "horizon {t} is long for a torus of side {}: 2·sqrt(t) = {:.2} > L/4 = {:.2}; \
             finite-size recurrence may inflate the potential",
            g.side,
            2.0 * t.sqrt(),
            g.side as f64 / 4.0
        )
    })
}

fn check_site(kernel: &Kernel, k: usize) -> Result<()> {
    if k >= kernel.n_sites() {
        return Err(Error::arg(format!(
            "site {k} out of range ({} sites)",
            kernel.n_sites()
        )));
    }
    Ok(())
}

fn indicator(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Combine<'k> = Box<dyn Fn(&Kernel, &[Vec<f64>], &mut Vec<f64>) -> f64 + 'k>;

/// Integrand built from flowed indicator vectors.
///
/// `vectors[i]` holds `b_{σ s}(e_{site_i})`, where `b` is the forward or
/// transposed flow and `σ` is `time_scale`.
struct FlowedIndicators<'k> {
    kernel: &'k Kernel,
    direction: Direction,
    time_scale: f64,
    base_time: f64,
    base: Vec<Vec<f64>>,
    ahead: Vec<Vec<f64>>,
    scratch: FlowScratch,
    combine: Combine<'k>,
    work: Vec<f64>,
}

impl<'k> FlowedIndicators<'k> {
    fn new(
        kernel: &'k Kernel,
        direction: Direction,
        time_scale: f64,
        sites: &[usize],
        combine: Combine<'k>,
    ) -> Self {
        let n = kernel.n_sites();
        let base: Vec<Vec<f64>> = sites.iter().map(|&k| indicator(n, k)).collect();
        FlowedIndicators {
            kernel,
            direction,
            time_scale,
            base_time: 0.0,
            ahead: base.clone(),
            base,
            scratch: FlowScratch::default(),
            combine,
            work: vec![0.0; n],
        }
    }

    fn advance_to(&mut self, s: f64) -> Result<()> {
        let ds = s - self.base_time;
        if ds > 0.0 {
            let plan = FlowPlan::new(self.kernel, ds * self.time_scale, self.direction)?;
            for v in &mut self.base {
                plan.apply_in_place(v, &mut self.scratch);
            }
            self.base_time = s;
        }
        Ok(())
    }

    fn eval(&mut self, s: f64) -> Result<f64> {
        let ds = s - self.base_time;
        debug_assert!(ds >= -1e-12);
        let plan = FlowPlan::new(self.kernel, ds.max(0.0) * self.time_scale, self.direction)?;
        for (src, dst) in self.base.iter().zip(self.ahead.iter_mut()) {
            plan.apply(src, dst, &mut self.scratch);
        }
        Ok((self.combine)(self.kernel, &self.ahead, &mut self.work))
    }
}

fn bar_a_integrand(kernel: &Kernel, k: usize, l: usize) -> FlowedIndicators<'_> {
    if k == l {
        FlowedIndicators::new(
            kernel,
            Direction::Forward,
            0.5,
            &[k],
            Box::new(|_, v, _| dot(&v[0], &v[0])),
        )
    } else {
        FlowedIndicators::new(
            kernel,
            Direction::Forward,
            0.5,
            &[k, l],
            Box::new(|_, v, _| dot(&v[0], &v[1])),
        )
    }
}

fn hat_a_integrand(kernel: &Kernel, k: usize, l: usize, log_weight: bool) -> FlowedIndicators<'_> {
    let weight = move |h: f64| {
        if log_weight {
            log_weighted(h)
        } else {
            h
        }
    };
    FlowedIndicators::new(
        kernel,
        Direction::Transpose,
        1.0,
        &[k, l],
        Box::new(move |kernel, v, work| {
            // (a + aᵀ) applied to the l-vector, paired with the k-vector
            kernel.apply_symmetrised(&v[1], work);
            weight(2.0 * dot(&v[0], work))
        }),
    )
}

/// `h (1 + |log h|)` with the convention `0 · log 0 = 0`.
fn log_weighted(h: f64) -> f64 {
    if h <= 0.0 {
        0.0
    } else {
        h * (1.0 + h.ln().abs())
    }
}

fn g_integrand(kernel: &Kernel, k: usize, l: usize) -> FlowedIndicators<'_> {
    FlowedIndicators::new(
        kernel,
        Direction::Forward,
        1.0,
        &[l],
        Box::new(move |_, v, _| v[0][k]),
    )
}

/// `ā_s(k, l)` or `â_s(k, l)`.
pub fn pair_kernel_eval(
    kernel: &Kernel,
    s: f64,
    k: usize,
    l: usize,
    which: PairKind,
) -> Result<f64> {
    check_site(kernel, k)?;
    check_site(kernel, l)?;
    if !s.is_finite() || s < 0.0 {
        return Err(Error::arg(format!(
            "time must be finite and nonnegative, got {s}"
        )));
    }
    let mut f = match which {
        PairKind::BarA => bar_a_integrand(kernel, k, l),
        PairKind::HatA => hat_a_integrand(kernel, k, l, false),
    };
    f.eval(s)
}

struct Quadrature {
    value: f64,
    error_bound: f64,
    last_panel: f64,
    zero_points: usize,
}

fn panels(t: f64) -> Vec<f64> {
    let mut bounds = vec![t];
    let mut b = t;
    while b > FIRST_PANEL {
        b *= 0.5;
        bounds.push(b);
    }
    bounds.push(0.0);
    bounds.reverse();
    bounds
}

fn integrate(f: &mut FlowedIndicators<'_>, t: f64, tol: f64) -> Result<Quadrature> {
    let bounds = panels(t);
    let mut value = 0.0;
    let mut error_bound = 0.0;
    let mut last_panel = 0.0;
    let mut zero_points = 0usize;
    let mut left_value = None;
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        f.advance_to(a)?;
        let mut eval = |s: f64| -> Result<f64> {
            let v = f.eval(s)?;
            if v == 0.0 {
                zero_points += 1;
            }
            Ok(v)
        };
        let fa = match left_value {
            Some(v) => v,
            None => eval(a)?,
        };
        let fb = eval(b)?;
        let m = 0.5 * (a + b);
        let fm = eval(m)?;
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let panel_tol = tol * (b - a) / t;
        let (v, e) = simpson(&mut eval, a, b, fa, fm, fb, whole, panel_tol, 0)?;
        value += v;
        error_bound += e;
        last_panel = v;
        left_value = Some(fb);
    }
    Ok(Quadrature {
        value,
        error_bound,
        last_panel,
        zero_points,
    })
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &mut impl FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<(f64, f64)> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth >= MIN_DEPTH && (diff.abs() <= 15.0 * tol || depth >= MAX_DEPTH) {
        return Ok((left + right + diff / 15.0, diff.abs() / 15.0));
    }
    let (lv, le) = simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let (rv, re) = simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok((lv + rv, le + re))
}

fn finish(q: Quadrature, t: f64, tol: f64) -> Result<GreenEstimate> {
    if q.error_bound > tol.max(1e-12 * q.value.abs()) * 10.0 {
        return Err(Error::Quadrature {
            partial: q.value,
            error_bound: q.error_bound,
        });
    }
    let tail_average = q.last_panel / (0.5 * t);
    let tail_flag = if tail_average > DIVERGENCE_FACTOR / t {
        TailFlag::DivergentSuspected
    } else {
        TailFlag::Converged
    };
    Ok(GreenEstimate {
        value: q.value,
        horizon: t,
        tail_flag,
        abs_error_bound: q.error_bound,
    })
}

fn check_horizon(t: f64, tol: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::arg(format!(
            "horizon must be positive and finite, got {t}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// `G_t(k, l)`, `Ḡ_t(k, l)`, or `Ḡ*_t = max_k Ḡ_t(k, k)`.
///
/// For `BarGStar` the sites are ignored. On lattice kernels the diagonal is
/// translation invariant and is evaluated at a single site.
pub fn green_value(
    kernel: &Kernel,
    k: usize,
    l: usize,
    t: f64,
    which: GreenKind,
    tol: f64,
) -> Result<GreenEstimate> {
    check_horizon(t, tol)?;
    match which {
        GreenKind::G => {
            check_site(kernel, k)?;
            check_site(kernel, l)?;
            finish(integrate(&mut g_integrand(kernel, k, l), t, tol)?, t, tol)
        }
        GreenKind::BarG => {
            check_site(kernel, k)?;
            check_site(kernel, l)?;
            finish(
                integrate(&mut bar_a_integrand(kernel, k, l), t, tol)?,
                t,
                tol,
            )
        }
        GreenKind::BarGStar => {
            let sites: Vec<usize> = if kernel.geometry().is_some() {
                vec![0]
            } else {
                (0..kernel.n_sites()).collect()
            };
            let mut best: Option<GreenEstimate> = None;
            for s in sites {
                let est = finish(
                    integrate(&mut bar_a_integrand(kernel, s, s), t, tol)?,
                    t,
                    tol,
                )?;
                if best.is_none_or(|b| est.value > b.value) {
                    best = Some(est);
                }
            }
            Ok(best.expect("kernel has at least one site"))
        }
    }
}

/// `∫₀^{t_max} â_s(k, l) (1 + |log â_s(k, l)|) ds`.
///
/// Points where `â_s` is exactly zero contribute nothing; their count is
/// folded into the error bound as one tolerance unit each.
pub fn g_hat_log_eval(
    kernel: &Kernel,
    k: usize,
    l: usize,
    t_max: f64,
    tol: f64,
) -> Result<GreenEstimate> {
    check_horizon(t_max, tol)?;
    check_site(kernel, k)?;
    check_site(kernel, l)?;
    let q = integrate(&mut hat_a_integrand(kernel, k, l, true), t_max, tol)?;
    let skipped = q.zero_points as f64 * f64::EPSILON;
    let mut est = finish(q, t_max, tol)?;
    est.abs_error_bound += skipped;
    Ok(est)
}

/// `∫₀^t â_s(k, l) ds`, without the logarithmic weight.
pub fn g_hat_plain_eval(
    kernel: &Kernel,
    k: usize,
    l: usize,
    t_max: f64,
    tol: f64,
) -> Result<GreenEstimate> {
    check_horizon(t_max, tol)?;
    check_site(kernel, k)?;
    check_site(kernel, l)?;
    finish(
        integrate(&mut hat_a_integrand(kernel, k, l, false), t_max, tol)?,
        t_max,
        tol,
    )
}

/// Finite-horizon proxy `min_{(k,l)} Ḡ_t(k, l) / Ḡ*_t` for the recurrence
/// ratio condition.
pub fn green_ratio_estimate(kernel: &Kernel, pairs: &[(usize, usize)], t: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::arg("need at least one site pair"));
    }
    let star = green_value(kernel, 0, 0, t, GreenKind::BarGStar, DEFAULT_TOLERANCE)?;
    // Ḡ_t(k, k) ≥ ∫₀ᵗ e^{-s} ds > 0
    assert!(star.value > 0.0, "Ḡ*_t must be positive for t > 0");
    let mut ratio = f64::INFINITY;
    for &(k, l) in pairs {
        let g = green_value(kernel, k, l, t, GreenKind::BarG, DEFAULT_TOLERANCE)?;
        ratio = ratio.min(g.value / star.value);
    }
    Ok(ratio)
}
