use imub::exit_measures::{quadrant_exit_coords, square_exit_point};
use imub::kernels::{Kernel, StepLaw};
use imub::rng::replica_stream;
use imub::trotter_sim::{diamond, trotter_step, FieldState, InitialMass, Mode};
use proptest::prelude::*;

fn kernel_from(n: usize, weights: &[f64]) -> Kernel {
    let mut triples = Vec::new();
    for l in 0..n {
        let col = &weights[l * n..(l + 1) * n];
        let s: f64 = col.iter().sum();
        triples.extend(col.iter().enumerate().map(|(k, w)| (k, l, w / s)));
    }
    Kernel::from_triples(n, &triples).unwrap()
}

fn random_kernel() -> impl Strategy<Value = Kernel> {
    (2usize..7).prop_flat_map(|n| {
        prop::collection::vec(0.01f64..1.0, n * n).prop_map(move |w| kernel_from(n, &w))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_flow_conserves_mass_and_sign(k in random_kernel(), t in 0.0f64..20.0, seed in 0u64..1000) {
        let n = k.n_sites();
        let x: Vec<f64> = (0..n).map(|i| ((seed as usize * 7 + i * 13) % 11) as f64).collect();
        let y = k.heat_flow(t, &x).unwrap();
        let (a, b) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(y.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn heat_flow_semigroup(k in random_kernel(), s in 0.0f64..5.0, t in 0.0f64..5.0) {
        let n = k.n_sites();
        let x: Vec<f64> = (0..n).map(|i| 1.0 / (1 + i) as f64).collect();
        let a = k.heat_flow(s, &k.heat_flow(t, &x).unwrap()).unwrap();
        let b = k.heat_flow(s + t, &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrant_exit_lands_in_e(u in 1e-3f64..50.0, v in 1e-3f64..50.0, seed in any::<u64>()) {
        let mut rng = replica_stream(seed, 0);
        for _ in 0..50 {
            let (a, b) = quadrant_exit_coords(&mut rng, u, v);
            prop_assert!(a >= 0.0 && b >= 0.0 && a * b == 0.0);
        }
    }

    #[test]
    fn square_exit_lands_on_boundary(u in 0.0f64..1.0, v in 0.0f64..1.0, side in 0.1f64..20.0, seed in any::<u64>()) {
        let mut rng = replica_stream(seed, 0);
        let (u, v) = (u * side, v * side);
        for _ in 0..20 {
            let (a, b) = square_exit_point(&mut rng, u, v, side).coords();
            prop_assert!((0.0..=side).contains(&a) && (0.0..=side).contains(&b));
            prop_assert!(a == 0.0 || b == 0.0 || a == side || b == side);
        }
    }

    #[test]
    fn diamond_real_part_is_nonpositive(x1 in 0.0f64..10.0, x2 in 0.0f64..10.0, y1 in 0.0f64..10.0, y2 in 0.0f64..10.0) {
        prop_assert!(diamond(x1, x2, y1, y2).re <= 0.0);
        prop_assert!(diamond(x1, x2, y1, y2).norm() <= (x1 + x2) * (y1 + y2) * 2f64.sqrt() + 1e-12);
    }

    #[test]
    fn free_steps_keep_state_in_e(seed in any::<u64>(), eps in 0.05f64..1.0, m1 in 0.1f64..3.0, m2 in 0.1f64..3.0) {
        let k = Kernel::lattice(1, 9, StepLaw::NearestNeighborUniform).unwrap();
        let mut s = FieldState::from_initial(9, &[InitialMass(3, 1, m1), InitialMass(5, 2, m2)]).unwrap();
        let mut rng = replica_stream(seed, 1);
        for _ in 0..10 {
            trotter_step(&mut s, &k, eps, &mut rng, Mode::Free).unwrap();
            prop_assert!(s.in_e());
            prop_assert!(s.x1.iter().chain(&s.x2).all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
