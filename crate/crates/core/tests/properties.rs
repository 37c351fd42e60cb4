use oscid_core::signal::{select_amplitude_grid, EnvelopeSeries};
use oscid_core::{analytic_envelope, finite_time_km, SampleGrid, TimeSeries};
use proptest::prelude::*;

/// A positive, slowly varying envelope built from a bounded random walk.
fn walk_envelope(steps: &[f64]) -> EnvelopeSeries {
    let mut a = 1.0f64;
    let amps = steps
        .iter()
        .map(|s| {
            a = (a + 0.05 * s).clamp(0.2, 3.0);
            a
        })
        .collect();
    EnvelopeSeries::new(0.0, 0.01, amps, 4).unwrap()
}

fn grid_for(env: &EnvelopeSeries) -> SampleGrid {
    let amps = select_amplitude_grid(env, 8).unwrap();
    let taus = (1..=6).map(|k| k as f64 * 2.0 * env.dt).collect();
    SampleGrid::new(amps, taus).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn envelope_is_homogeneous(x in prop::collection::vec(-5.0f64..5.0, 64..400), c in prop_oneof![-8.0f64..-0.01, 0.01f64..8.0]) {
        let ts = TimeSeries::new(0.0, 0.01, x.clone()).unwrap();
        let scaled = TimeSeries::new(0.0, 0.01, x.iter().map(|v| c * v).collect()).unwrap();
        let e = analytic_envelope(&ts).unwrap();
        let f = analytic_envelope(&scaled).unwrap();
        prop_assert_eq!(e.edge, f.edge);
        for (u, v) in f.amplitudes.iter().zip(&e.amplitudes) {
            prop_assert!((u - c.abs() * v).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn amplitude_grid_is_increasing_inside_range(steps in prop::collection::vec(-1.0f64..1.0, 200..600), n in 2usize..60) {
        let env = walk_envelope(&steps);
        let v = env.valid();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
        prop_assume!(hi > lo);
        let g = select_amplitude_grid(&env, n).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(g[0] > lo && g[n - 1] < hi);
    }

    #[test]
    fn km_weights_sum_to_one(steps in prop::collection::vec(-1.0f64..1.0, 300..800)) {
        let env = walk_envelope(&steps);
        prop_assume!(select_amplitude_grid(&env, 8).is_ok());
        let km = finite_time_km(&env, &grid_for(&env)).unwrap();
        for j in 0..km.grid.n_tau() {
            let s: f64 = (0..km.grid.n_a()).map(|i| km.weights[i][j]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "lag {}: {}", j, s);
        }
    }

    // powers of two keep bin membership exact under scaling
    #[test]
    fn km_scales_with_amplitude(steps in prop::collection::vec(-1.0f64..1.0, 300..800), p in -2i32..4) {
        let env = walk_envelope(&steps);
        prop_assume!(select_amplitude_grid(&env, 8).is_ok());
        let c = 2f64.powi(p);
        let grid = grid_for(&env);
        let scaled_grid = SampleGrid::new(grid.amplitudes.iter().map(|a| c * a).collect(), grid.taus.clone()).unwrap();
        let km = finite_time_km(&env, &grid).unwrap();
        let ks = finite_time_km(&env.scaled(c), &scaled_grid).unwrap();
        prop_assert_eq!(&km.pair_counts, &ks.pair_counts);
        for i in 0..grid.n_a() {
            for j in 0..grid.n_tau() {
                if let (Some(u), Some(v)) = (km.d1_hat[i][j], ks.d1_hat[i][j]) {
                    prop_assert!((v - c * u).abs() <= 1e-9 * (1.0 + v.abs()));
                }
                if let (Some(u), Some(v)) = (km.d2_hat[i][j], ks.d2_hat[i][j]) {
                    prop_assert!((v - c * c * u).abs() <= 1e-9 * (1.0 + v.abs()));
                }
                prop_assert!((km.weights[i][j] - ks.weights[i][j]).abs() < 1e-12);
            }
        }
    }
}
