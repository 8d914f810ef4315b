use exchange_cutoff::dynamics::ModelKind;
use exchange_cutoff::equilibrium::{self, sample_stationary};
use exchange_cutoff::laws::Law;
use exchange_cutoff::observables::mean_square_gap;
use exchange_cutoff::rng::seed_stream;
use exchange_cutoff::stats::{map_replicas, MeanVar};

/// Raw moments of Beta(a, b).
fn beta_moment(a: f64, b: f64, k: i32) -> f64 {
    (0..k).map(|j| (a + j as f64) / (a + b + j as f64)).product()
}

#[test]
fn heat_bath_consistency() {
    let n = 10;
    for (i, alpha) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let law = Law::beta(alpha).unwrap();
        let coords: Vec<f64> = map_replicas(100_000, |r| {
            let mut rng = seed_stream(40 + i as u64, r);
            let mut c = sample_stationary(ModelKind::Srm, n, &law, &mut rng, None).unwrap().config;
            c.run(&law, 1000, &mut rng);
            c.energy()[3]
        });
        for k in 1..=3 {
            let acc: MeanVar = coords.iter().map(|x| x.powi(k)).collect();
            let target = beta_moment(alpha, alpha * (n as f64 - 1.0), k);
            assert!((acc.mean() - target).abs() <= 4.0 * acc.stderr(), "alpha={alpha} k={k}");
        }
    }
}

#[test]
fn sem_centered_contraction() {
    let law = Law::two_point(0.25).unwrap();
    let n = 10;
    let ts = [1u64, 10, 100];
    let stats = mean_square_gap(ModelKind::Sem, &law, n, &ts, 100_000, 41).unwrap();
    for (s, &t) in stats.iter().zip(&ts) {
        let closed = equilibrium::mean_square_gap(ModelKind::Sem, n, &law, t).unwrap();
        assert!((s.value - closed).abs() <= 4.0 * s.stderr, "t={t}");
    }
}

#[test]
fn long_run_second_moment_for_a_discrete_law() {
    let law = Law::two_point(0.25).unwrap();
    let n = 12;
    let acc: MeanVar = map_replicas(20_000, |r| {
        let mut rng = seed_stream(42, r);
        let s = sample_stationary(ModelKind::Srm, n, &law, &mut rng, None).unwrap();
        assert!(s.approximate);
        n as f64 * s.config.l2_squared()
    })
    .into_iter()
    .collect();
    let closed = equilibrium::stationary_second_moment(n, &law).unwrap();
    assert!((acc.mean() - closed).abs() <= 4.0 * acc.stderr());
}
