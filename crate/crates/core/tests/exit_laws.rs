use imub::exit_measures::{
    covariance_envelope, exit_time_mean, exit_time_mean_scaled, quadrant_exit_coords,
    square_exit_point, V_TOLERANCE,
};
use imub::rng::replica_stream;
use imub::stats::{linear_fit, mean_se};

fn magnitudes(u: f64, v: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = replica_stream(seed, 0);
    (0..n)
        .map(|_| {
            let (a, b) = quadrant_exit_coords(&mut rng, u, v);
            a + b
        })
        .collect()
}

#[test]
fn quadrant_survival_decays_like_inverse_square() {
    let r = magnitudes(1.0, 1.0, 1_000_000, 11);
    let levels = [5.0, 10.0, 20.0, 40.0];
    let x: Vec<f64> = levels.iter().map(|m: &f64| m.ln()).collect();
    let y: Vec<f64> = levels
        .iter()
        .map(|m| (r.iter().filter(|v| *v > m).count() as f64 / r.len() as f64).ln())
        .collect();
    let slope = linear_fit(&x, &y).unwrap().slope;
    assert!((-2.2..=-1.8).contains(&slope), "slope {slope}");
}

#[test]
fn quadrant_moments_three_halves_stable_second_grows() {
    let r = magnitudes(0.8, 1.2, 1_000_000, 12);
    let moment = |n: usize, p: f64| r[..n].iter().map(|v| v.powf(p)).sum::<f64>() / n as f64;
    let (a, b) = (moment(100_000, 1.5), moment(1_000_000, 1.5));
    assert!((a / b - 1.0).abs() < 0.15, "{a} vs {b}");
    let (s4, s6) = (moment(10_000, 2.0), moment(1_000_000, 2.0));
    assert!(s6 > s4, "second moment {s4} -> {s6}");
}

#[test]
fn v_solves_poisson_problem_on_grid() {
    let h = 0.02;
    for i in 3..=7 {
        for j in 3..=7 {
            let (u, v) = (i as f64 / 10.0, j as f64 / 10.0);
            let at = |a: f64, b: f64| exit_time_mean(a, b, V_TOLERANCE).unwrap();
            let lap = (at(u + h, v) + at(u - h, v) + at(u, v + h) + at(u, v - h) - 4.0 * at(u, v))
                / (h * h);
            assert!((lap + 2.0).abs() < 1e-3, "({u}, {v}): {lap}");
        }
    }
}

#[test]
fn envelope_brackets_scaled_v_on_half_box() {
    for side in [1.0, 4.0, 8.0] {
        for i in 1..=10 {
            for j in 1..=10 {
                let (u, v) = (side * i as f64 / 20.0, side * j as f64 / 20.0);
                let (lo, hi) = covariance_envelope(u, v, side);
                let val = exit_time_mean_scaled(u, v, side, V_TOLERANCE * side * side).unwrap();
                assert!(
                    lo <= val && val <= hi,
                    "K = {side}, ({u}, {v}): {lo} {val} {hi}"
                );
            }
        }
    }
}

#[test]
fn square_sampler_mean_identity() {
    let mut rng = replica_stream(13, 0);
    for (u, v, side) in [(0.1, 0.9, 1.0), (3.0, 1.0, 8.0), (2.5, 2.5, 5.0)] {
        let draws: Vec<(f64, f64)> = (0..100_000)
            .map(|_| square_exit_point(&mut rng, u, v, side).coords())
            .collect();
        let m1 = mean_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
        let m2 = mean_se(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
        assert!(m1.within(u, 3.0) && m2.within(v, 3.0), "{m1:?} {m2:?}");
    }
}
