//! Quick self-check of the library invariants, for `imub verify`.
//!
//! Every check is seeded and small enough that the whole suite runs in
//! seconds.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::exit_measures::{
    covariance_envelope, exit_time_mean, quadrant_density, quadrant_exit_coords, square_exit_point,
    EPoint, QuadrantPoint,
};
use crate::kernels::green::{green_value, GreenKind};
use crate::kernels::{Geometry, Kernel, KernelSpec, StepLaw};
use crate::rng::replica_stream;
use crate::stats::{adaptive_simpson, mean_se};
use crate::trotter_sim::{run_replicas, InitialMass, Mode, SimConfig};
use crate::Result;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// `exp(t (A - I))` for a small dense column-stochastic `A`, by scaling and
/// squaring a Taylor series.
pub fn dense_heat_flow(a: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut g: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| t * (a[i][j] - if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    let norm = g
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 2f64.powi(-(squarings as i32));
    g.iter_mut().flatten().for_each(|v| *v *= scale);
    let mul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum())
                    .collect()
            })
            .collect()
    };
    let mut result: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut term = result.clone();
    for k in 1..=30 {
        term = mul(&term, &g);
        term.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for (r, t) in result.iter_mut().flatten().zip(term.iter().flatten()) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

fn flow_checks(out: &mut Vec<Check>) -> Result<()> {
    let flip = Kernel::from_triples(2, &[(0, 1, 1.0), (1, 0, 1.0)])?;
    let got = flip.heat_flow(0.5, &[1.0, 0.0])?;
    let e = (-1.0f64).exp();
    let err = (got[0] - (1.0 + e) / 2.0)
        .abs()
        .max((got[1] - (1.0 - e) / 2.0).abs());
    out.push(check(
        "flip kernel heat flow",
        err < 1e-11,
        format!("max error {err:.2e}"),
    ));

    let mut rng = replica_stream(0xfeed, 0);
    let n = 6;
    let mut triples = Vec::new();
    for l in 0..n {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        triples.extend(w.iter().enumerate().map(|(k, v)| (k, l, v / s)));
    }
    let kernel = Kernel::from_triples(n, &triples)?;
    let dense: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| kernel.entry(i, j)).collect())
        .collect();
    let oracle = dense_heat_flow(&dense, 1.7);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = kernel.heat_flow(1.7, &e)?;
        for i in 0..n {
            worst = worst.max((col[i] - oracle[i][j]).abs());
        }
    }
    out.push(check(
        "uniformization vs dense exponential",
        worst < 1e-9,
        format!("max error {worst:.2e}"),
    ));

    let lattice = Kernel::lattice(2, 9, StepLaw::NearestNeighborUniform)?;
    let x: Vec<f64> = (0..81).map(|i| ((i * 37) % 11) as f64).collect();
    let total: f64 = x.iter().sum();
    let a = lattice.heat_flow(0.8, &lattice.heat_flow(1.3, &x)?)?;
    let b = lattice.heat_flow(2.1, &x)?;
    let semi = a
        .iter()
        .zip(&b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    let mass = (b.iter().sum::<f64>() - total).abs() / total;
    out.push(check(
        "semigroup and mass conservation",
        semi < 1e-8 && mass < 1e-10,
        format!("semigroup {semi:.2e}, mass {mass:.2e}"),
    ));

    let g = green_value(&flip, 0, 0, 3.0, GreenKind::BarG, 1e-8)?;
    let want = 1.5 + (1.0 - (-6.0f64).exp()) / 4.0;
    out.push(check(
        "flip Green kernel closed form",
        (g.value - want).abs() < 1e-7,
        format!("{} vs {want}", g.value),
    ));
    Ok(())
}

fn exit_checks(out: &mut Vec<Check>) -> Result<()> {
    let x = QuadrantPoint::new(0.7, 1.3)?;
    let along = |axis: fn(f64) -> EPoint| {
        let f = |phi: f64| {
            let m = phi.tan();
            quadrant_density(x, axis(m)).unwrap_or(0.0) / phi.cos().powi(2)
        };
        adaptive_simpson(&f, 0.0, PI / 2.0 - 1e-9, 1e-10)
    };
    let total = along(EPoint::horizontal) + along(EPoint::vertical);
    out.push(check(
        "quadrant density integrates to one",
        (total - 1.0).abs() < 1e-6,
        format!("total {total:.9}"),
    ));

    let mut rng = replica_stream(0xbeef, 0);
    let draws: Vec<(f64, f64)> = (0..200_000)
        .map(|_| quadrant_exit_coords(&mut rng, 0.7, 1.3))
        .collect();
    let m1 = mean_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    let m2 = mean_se(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    // heavy tails make the standard error itself noisy; 4σ keeps the check stable
    out.push(check(
        "quadrant exit mean",
        m1.within(0.7, 4.0) && m2.within(1.3, 4.0),
        format!("({:.4}, {:.4})", m1.estimate, m2.estimate),
    ));

    let draws: Vec<(f64, f64)> = (0..100_000)
        .map(|_| square_exit_point(&mut rng, 0.25, 0.5, 1.0).coords())
        .collect();
    let u: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let m = mean_se(&u);
    let var = u.iter().map(|v| (v - 0.25).powi(2)).sum::<f64>() / u.len() as f64;
    let v = exit_time_mean(0.25, 0.5, 1e-8)?;
    out.push(check(
        "square exit mean and variance",
        m.within(0.25, 3.0) && (var - v).abs() < 0.03 * v,
        format!("mean {:.4}, variance {var:.5} vs {v:.5}", m.estimate),
    ));

    let h = 0.02;
    let c = exit_time_mean(0.5, 0.5, 1e-9)?;
    let lap = (exit_time_mean(0.52, 0.5, 1e-9)?
        + exit_time_mean(0.48, 0.5, 1e-9)?
        + exit_time_mean(0.5, 0.52, 1e-9)?
        + exit_time_mean(0.5, 0.48, 1e-9)?
        - 4.0 * c)
        / (h * h);
    out.push(check(
        "exit time solves the Poisson problem",
        (lap + 2.0).abs() < 1e-3,
        format!("laplacian {lap:.5}"),
    ));

    let (lo, hi) = covariance_envelope(0.25, 0.25, 1.0);
    let v = exit_time_mean(0.25, 0.25, 1e-8)?;
    out.push(check(
        "covariance envelope brackets V",
        lo <= v && v <= hi,
        format!("{lo:.4} <= {v:.4} <= {hi:.4}"),
    ));
    Ok(())
}

fn sim_checks(out: &mut Vec<Check>) -> Result<()> {
    let spec = KernelSpec::Lattice(Geometry {
        dim: 1,
        side: 15,
        step_law: StepLaw::NearestNeighborUniform,
    });
    let kernel = spec.build(Path::new("."))?;
    let mut cfg = SimConfig::new(
        spec,
        0.25,
        3.0,
        vec![InitialMass(5, 1, 1.0), InitialMass(8, 2, 1.0)],
        17,
    );
    cfg.replicas = 2000;
    cfg.snapshot = true;
    let runs = run_replicas(&kernel, &cfg)?;
    let exclusive = runs.iter().all(|t| {
        t.final_state
            .as_ref()
            .is_some_and(|s| s.values().all(|v| v[0] * v[1] == 0.0))
    });
    out.push(check("free mode exclusion", exclusive, String::new()));
    let m1 = mean_se(&runs.iter().map(|t| t.last().m1).collect::<Vec<_>>());
    out.push(check(
        "free mode mass martingale",
        m1.within(1.0, 4.0),
        format!("E[M1] = {:.4} ± {:.4}", m1.estimate, m1.std_error),
    ));

    cfg.mode = Mode::Truncated { k: 8.0 };
    cfg.replicas = 200;
    let a = run_replicas(&kernel, &cfg)?;
    let b = run_replicas(&kernel, &cfg)?;
    out.push(check("replicas are reproducible", a == b, String::new()));
    Ok(())
}

/// Runs all checks; errors inside a group are reported as failed checks.
pub fn run_all() -> Vec<Check> {
    let mut out = Vec::new();
    type Group = fn(&mut Vec<Check>) -> Result<()>;
    let groups: [(&'static str, Group); 3] = [
        ("kernels", flow_checks),
        ("exit measures", exit_checks),
        ("simulator", sim_checks),
    ];
    for (name, group) in groups {
        if let Err(e) = group(&mut out) {
            out.push(check(name, false, e.to_string()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_oracle_matches_flip() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = dense_heat_flow(&a, 0.5);
        let e = (-1.0f64).exp();
        assert!((m[0][0] - (1.0 + e) / 2.0).abs() < 1e-14);
        assert!((m[1][0] - (1.0 - e) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn suite_passes() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
