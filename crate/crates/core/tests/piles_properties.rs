use exchange_cutoff::dynamics::{draw_event, Configuration, ModelKind};
use exchange_cutoff::laws::Law;
use exchange_cutoff::piles::{PileSet, DEFAULT_FLOOR_LOG};
use exchange_cutoff::rng::seed_stream;

#[test]
fn coupled_reconstruction() {
    let law = Law::beta(1.0).unwrap();
    let n = 20;
    for (i, model) in ModelKind::ALL.into_iter().enumerate() {
        let mut rng = seed_stream(31, i as u64);
        let mut c = Configuration::dirac(model, n, 0).unwrap();
        let mut ps = PileSet::new(model, n, 0).unwrap().with_floor_log(-8.0);
        for t in 1..=2000u64 {
            let ev = draw_event(n, &law, &mut rng);
            c.apply(&ev).unwrap();
            ps.apply(&ev).unwrap();
            if t % 50 == 0 {
                for (x, e) in ps.energies().iter().enumerate() {
                    assert!((e - c.energy()[x]).abs() < 1e-12, "{model} t={t} x={x}");
                }
            }
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn sizes_given_update_count_are_products() {
    let law = Law::beta(1.0).unwrap();
    let n = 10;
    let mut logs = Vec::new();
    for r in 0..2000u64 {
        let mut rng = seed_stream(32, r);
        let mut ps = PileSet::new(ModelKind::Srm, n, 0).unwrap();
        for _ in 0..50 {
            let ev = draw_event(n, &law, &mut rng);
            ps.apply(&ev).unwrap();
        }
        logs.extend(ps.iter().filter(|(_, p)| p.updates == 3).map(|(_, p)| p.log_size));
    }
    let mut rng = seed_stream(33, 0);
    let direct: Vec<f64> = (0..20_000).map(|_| (0..3).map(|_| law.sample(&mut rng).ln()).sum()).collect();
    let (na, nb) = (logs.len() as f64, direct.len() as f64);
    // Critical value at level 0.999.
    let crit = 1.949 * ((na + nb) / (na * nb)).sqrt();
    let d = ks(logs, direct);
    assert!(d < crit, "KS {d} >= {crit}");
}

#[test]
fn default_floor_discards_nothing_at_moderate_times() {
    let law = Law::beta(1.0).unwrap();
    for (i, model) in [ModelKind::Srm, ModelKind::Gam].into_iter().enumerate() {
        for r in 0..50u64 {
            let mut rng = seed_stream(34 + i as u64, r);
            let mut ps = PileSet::new(model, 50, 0).unwrap();
            assert_eq!(ps.floor_log(), DEFAULT_FLOOR_LOG);
            for _ in 0..150 {
                let ev = draw_event(50, &law, &mut rng);
                ps.apply(&ev).unwrap();
            }
            assert!(ps.residual_total() < 1e-12);
        }
    }
}
