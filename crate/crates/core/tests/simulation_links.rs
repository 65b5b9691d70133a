use proptest::prelude::*;
use rooney_lab::oracle::exact_prob_binds;
use rooney_lab::powerlaw::TailExponent;
use rooney_lab::rooney::{Bias, ModelParams};
use rooney_lab::simulate::{EstimatorKind, Simulation};

fn params(alpha: f64, beta: f64, delta: f64, k: u64, n: u64) -> ModelParams {
    ModelParams::new(alpha, Bias::new(beta).unwrap(), TailExponent::new(delta).unwrap(), k, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With one reserved slot the swap trades the lowest Y-finalist for the best
    /// X-candidate, so the mean gain and the ratio estimate agree in sign.
    #[test]
    fn gain_sign_follows_ratio(
        alpha in 0.1f64..1.0,
        beta in 1.0f64..6.0,
        delta in 0.5f64..4.0,
        k in 2u64..5,
        n in 20u64..80,
        seed in any::<u64>(),
    ) {
        let p = params(alpha, beta, delta, k, n);
        let s = Simulation::new(p, 1, 2000, seed).unwrap().run();
        let rk = s.rk(EstimatorKind::Mean).unwrap().point_estimate;
        let gain = s.utility_change(EstimatorKind::Mean).unwrap().point_estimate;
        prop_assume!((rk - 1.0).abs() > 1e-9);
        prop_assert_eq!(rk > 1.0, gain > 0.0, "rk = {}, gain = {}", rk, gain);
    }

    /// Reserving more slots can only make the rule bind more often.
    #[test]
    fn more_reserved_slots_bind_more(
        alpha in 0.2f64..1.0,
        beta in 1.0f64..4.0,
        delta in 0.5f64..3.0,
        seed in any::<u64>(),
    ) {
        let p = params(alpha, beta, delta, 4, 40);
        let rate = |ell| Simulation::new(p, ell, 2000, seed).unwrap().run().bind_rate().point_estimate;
        prop_assert!(rate(1) <= rate(2));
        prop_assert!(rate(2) <= rate(3));
    }
}

#[test]
fn bind_rate_matches_exact_probability() {
    for (i, (alpha, beta, delta, k, n)) in [
        (0.5, 2.0, 2.0, 2, 200),
        (0.2, 1.5, 1.0, 3, 60),
        (1.0, 1.0, 0.7, 1, 30),
        (0.8, 5.0, 3.0, 5, 100),
    ]
    .into_iter()
    .enumerate()
    {
        let p = params(alpha, beta, delta, k, n);
        let exact = exact_prob_binds(&p).unwrap();
        let r = Simulation::new(p, 1, 100_000, 900 + i as u64).unwrap().run().bind_rate();
        let z = (r.point_estimate - exact) / r.std_error;
        assert!(z.abs() < 4.0, "{alpha} {beta} {delta} {k} {n}: {} vs {exact} (z = {z})", r.point_estimate);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = params(0.3, 2.5, 1.2, 3, 90);
    let sim = Simulation::new(p, 1, 30_000, 5).unwrap();
    let in_pool = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let s = sim.run();
            [
                s.bind_rate().point_estimate,
                s.rk(EstimatorKind::MedianOfMeans).unwrap().point_estimate,
                s.utility_change(EstimatorKind::Mean).unwrap().point_estimate,
            ]
            .map(f64::to_bits)
        })
    };
    assert_eq!(in_pool(1), in_pool(3));
    assert_eq!(in_pool(1), in_pool(8));
}
