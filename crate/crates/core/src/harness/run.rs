use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{Command, ExperimentConfig, Format};
use super::output::{write_csv, write_json, Row};
use super::HarnessError;
use crate::dynamics::{draw_event, Configuration, ModelKind};
use crate::equilibrium;
use crate::laws::{analytic_constants, ConstantsMethod, EntropicConstants, RedistributionLaw};
use crate::observables::{self, CouplingSpec, Statistic};
use crate::oracle::{self, binomial_pmf_prefix, clt_profile, schedule, theorem_profile, CutoffSchedule};
use crate::piles::{PileSet, ThresholdSpec};
use crate::rng::{derive_seed_str, seed_stream, GENERATOR_NAME};
use crate::stats::{combined_se, map_replicas, MeanVar};

/// Rows plus run metadata.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub metadata: Value,
}

impl ExperimentResult {
    /// Writes to `cfg.out` (stdout if unset). CSV output to a file also
    /// writes the metadata next to it as `<out>.meta.json`.
    pub fn write(&self, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
        match &cfg.out {
            None => {
                let stdout = std::io::stdout();
                let lock = stdout.lock();
                match cfg.format {
                    Format::Csv => write_csv(&self.rows, lock),
                    Format::Json => write_json(&self.metadata, &self.rows, lock),
                }
            }
            Some(path) => {
                let file = BufWriter::new(File::create(path)?);
                match cfg.format {
                    Format::Csv => {
                        write_csv(&self.rows, file)?;
                        let mut meta = path.clone().into_os_string();
                        meta.push(".meta.json");
                        let mut f = BufWriter::new(File::create(meta)?);
                        serde_json::to_writer_pretty(&mut f, &self.metadata).map_err(|e| HarnessError::Io(e.into()))?;
                        f.write_all(b"\n")?;
                        f.flush()?;
                        Ok(())
                    }
                    Format::Json => write_json(&self.metadata, &self.rows, file),
                }
            }
        }
    }
}

/// Row builder bound to one config.
struct Emitter<'a> {
    cfg: &'a ExperimentConfig,
    rows: Vec<Row>,
    clock: Instant,
}

impl<'a> Emitter<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Emitter { cfg, rows: Vec::new(), clock: Instant::now() }
    }

    fn base(&self, statistic: &str, value: f64) -> Row {
        Row {
            command: self.cfg.command.name().into(),
            model: Some(self.cfg.model.to_string()),
            law: Some(self.cfg.law.spec().to_string()),
            n: Some(self.cfg.n),
            t: None,
            beta: None,
            gamma: None,
            statistic: statistic.into(),
            value,
            stderr: None,
            bias_bound: None,
            samples: None,
            seed: self.cfg.seed,
            wallclock_ms: self.clock.elapsed().as_millis() as u64,
        }
    }

    fn exact(&mut self, statistic: &str, value: f64) -> &mut Row {
        let mut row = self.base(statistic, value);
        row.stderr = Some(0.0);
        self.rows.push(row);
        self.rows.last_mut().expect("just pushed")
    }

    fn estimate(&mut self, statistic: &str, value: f64, stderr: f64, samples: u64) -> &mut Row {
        let mut row = self.base(statistic, value);
        row.stderr = Some(stderr);
        row.samples = Some(samples);
        self.rows.push(row);
        self.rows.last_mut().expect("just pushed")
    }

    fn stat(&mut self, s: &Statistic) -> &mut Row {
        let row = self.estimate(&s.name, s.value, s.stderr, s.samples);
        if s.bias_bound != 0.0 {
            row.bias_bound = Some(s.bias_bound);
        }
        row
    }

    fn without_model(&mut self) {
        for row in &mut self.rows {
            row.model = None;
        }
    }
}

fn constants_of(cfg: &ExperimentConfig) -> EntropicConstants {
    analytic_constants(&cfg.law)
}

fn schedule_of(cfg: &ExperimentConfig) -> Result<CutoffSchedule, HarnessError> {
    schedule(cfg.n, &constants_of(cfg)).map_err(|e| HarnessError::Compute(e.to_string()))
}

fn check_budget(cfg: &ExperimentConfig, steps_per_replica: u64) -> Result<(), HarnessError> {
    let work = steps_per_replica as u128 * cfg.replicas as u128;
    if work > cfg.budget as u128 {
        return Err(HarnessError::BudgetExceeded(format!("{work} steps requested, budget is {}", cfg.budget)));
    }
    Ok(())
}

/// Default observation times: 8 points spanning `[0, 2 t_ent]`.
fn default_times(cfg: &ExperimentConfig) -> Result<Vec<u64>, HarnessError> {
    if !cfg.times.is_empty() {
        return Ok(cfg.times.clone());
    }
    let sch = schedule_of(cfg)?;
    Ok((0..8).map(|k| (2.0 * sch.t_ent * k as f64 / 7.0).round() as u64).collect())
}

/// Six geometric thresholds from `e^{-8}` to 1.
pub fn theta_grid() -> Vec<f64> {
    (0..6).map(|k| (-8.0 + 1.6 * k as f64).exp()).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let start = Instant::now();
    let mut em = Emitter::new(cfg);
    match cfg.command {
        Command::Constants => run_constants(cfg, &mut em)?,
        Command::Simulate => run_simulate(cfg, &mut em)?,
        Command::Piles => run_piles(cfg, &mut em)?,
        Command::Identity => run_identity(cfg, &mut em)?,
        Command::Contraction => run_contraction(cfg, &mut em)?,
        Command::Stationary => run_stationary(cfg, &mut em)?,
        Command::Profile => run_profile(cfg, &mut em)?,
        Command::Monotonicity => run_monotonicity(cfg, &mut em)?,
    }
    let metadata = json!({
        "generator": GENERATOR_NAME,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_json(),
        "rows": em.rows.len(),
        "wallclock_ms": start.elapsed().as_millis() as u64,
    });
    Ok(ExperimentResult { rows: em.rows, metadata })
}

fn run_constants(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let c = constants_of(cfg);
    debug_assert_eq!(c.method, ConstantsMethod::Analytic);
    em.exact("h", c.h);
    em.exact("s2", c.s2);
    em.exact("r", c.r);
    em.exact("ex2", c.ex2);
    if let Ok(rates) = equilibrium::rates(cfg.n, &cfg.law) {
        em.exact("lambda_srm", rates.lambda_srm);
        em.exact("lambda_gam", rates.lambda_gam);
        em.exact("lambda_sem", rates.lambda_sem);
    }
    let sch = schedule_of(cfg)?;
    em.exact("t_ent", sch.t_ent);
    em.exact("t_w", sch.t_w);
    em.without_model();
    Ok(())
}

fn run_simulate(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let ts = default_times(cfg)?;
    check_budget(cfg, *ts.last().expect("non-empty"))?;
    let (model, law, n) = (cfg.model, &cfg.law, cfg.n);
    let per: Vec<Vec<[f64; 4]>> = map_replicas(cfg.replicas, |i| {
        let mut rng = seed_stream(cfg.seed, i);
        let mut c = Configuration::dirac(model, n, 0).expect("n >= 2");
        ts.iter()
            .map(|&t| {
                c.run(law, t - c.step_count(), &mut rng);
                [c.total(), c.max_entry(), c.average(), observables::l1_to_flat(&c)]
            })
            .collect()
    });
    for (k, &t) in ts.iter().enumerate() {
        for (j, name) in ["mass", "max_entry", "average", "l1_to_flat"].iter().enumerate() {
            let acc: MeanVar = per.iter().map(|r| r[k][j]).collect();
            em.estimate(name, acc.mean(), acc.stderr(), acc.count()).t = Some(t);
        }
    }
    Ok(())
}

fn pile_threshold(cfg: &ExperimentConfig) -> ThresholdSpec {
    ThresholdSpec::new(cfg.gamma, constants_of(cfg).h, cfg.n)
}

fn run_piles(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    const MAX_S: u64 = 10;
    let ts = if cfg.times.is_empty() { vec![100] } else { cfg.times.clone() };
    check_budget(cfg, *ts.last().expect("non-empty"))?;
    let spec = pile_threshold(cfg);
    if spec.theta < cfg.floor_log.exp() {
        return Err(HarnessError::config("floor_log", "threshold lies below the discard floor"));
    }
    let (model, law, n) = (cfg.model, &cfg.law, cfg.n);
    type Snap = (f64, f64, Vec<f64>);
    let per: Vec<Result<Vec<Snap>, HarnessError>> = map_replicas(cfg.replicas, |i| {
        let mut rng = seed_stream(cfg.seed, i);
        let mut ps = PileSet::new(model, n, 0).expect("n >= 2").with_floor_log(cfg.floor_log);
        let mut out = Vec::with_capacity(ts.len());
        for &t in &ts {
            while ps.step_count() < t {
                let ev = draw_event(n, law, &mut rng);
                ps.apply_unchecked(&ev).map_err(|e| HarnessError::BudgetExceeded(e.to_string()))?;
            }
            let counts = ps.counts_by_updates();
            let by_s = (0..=MAX_S).map(|s| *counts.get(&(s as u32)).unwrap_or(&0) as f64).collect();
            out.push((ps.threshold_mass(spec.theta).expect("checked above"), ps.pile_count() as f64, by_s));
        }
        Ok(out)
    });
    let per = per.into_iter().collect::<Result<Vec<_>, _>>()?;
    let oracle_seed = derive_seed_str(cfg.seed, "oracle");
    for (k, &t) in ts.iter().enumerate() {
        let mass: MeanVar = per.iter().map(|r| r[k].0).collect();
        let row = em.estimate("threshold_mass", mass.mean(), mass.stderr(), mass.count());
        row.t = Some(t);
        row.gamma = Some(cfg.gamma);
        let o = oracle::threshold_probability(
            &oracle::OracleSpec { t, n, theta: spec.theta, law, samples: cfg.oracle_samples },
            oracle_seed,
        )
        .map_err(|e| HarnessError::Compute(e.to_string()))?;
        let row = em.estimate("threshold_probability", o.value, o.stderr, cfg.oracle_samples);
        row.t = Some(t);
        row.gamma = Some(cfg.gamma);

        let count: MeanVar = per.iter().map(|r| r[k].1).collect();
        em.estimate("pile_count", count.mean(), count.stderr(), count.count()).t = Some(t);
        em.exact("pile_count_expected", (1.0 + 2.0 / n as f64).powf(t as f64)).t = Some(t);
        let pmf = binomial_pmf_prefix(t, 2.0 / n as f64, MAX_S);
        for (s, p) in pmf.iter().enumerate() {
            let acc: MeanVar = per.iter().map(|r| r[k].2[s]).collect();
            em.estimate(&format!("piles_with_{s}_updates"), acc.mean(), acc.stderr(), acc.count()).t = Some(t);
            em.exact(&format!("piles_with_{s}_updates_expected"), 2f64.powi(s as i32) * p).t = Some(t);
        }
    }
    Ok(())
}

fn run_identity(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let ts = if cfg.times.is_empty() { vec![100, 400] } else { cfg.times.clone() };
    check_budget(cfg, *ts.last().expect("non-empty"))?;
    let thetas = theta_grid();
    let floor = thetas[0].ln() - 1.0;
    let (model, law, n) = (cfg.model, &cfg.law, cfg.n);
    let per: Vec<Result<Vec<Vec<f64>>, HarnessError>> = map_replicas(cfg.replicas, |i| {
        let mut rng = seed_stream(cfg.seed, i);
        let mut ps = PileSet::new(model, n, 0).expect("n >= 2").with_floor_log(floor);
        let mut out = Vec::with_capacity(ts.len());
        for &t in &ts {
            while ps.step_count() < t {
                let ev = draw_event(n, law, &mut rng);
                ps.apply_unchecked(&ev).map_err(|e| HarnessError::BudgetExceeded(e.to_string()))?;
            }
            out.push(ps.threshold_masses(&thetas).expect("above floor"));
        }
        Ok(out)
    });
    let per = per.into_iter().collect::<Result<Vec<_>, _>>()?;
    for (k, &t) in ts.iter().enumerate() {
        let oracle = oracle::threshold_probabilities(law, n, t, &thetas, cfg.oracle_samples, derive_seed_str(cfg.seed, &format!("oracle-{t}")))
            .map_err(|e| HarnessError::Compute(e.to_string()))?;
        for (j, (&theta, o)) in thetas.iter().zip(&oracle).enumerate() {
            let acc: MeanVar = per.iter().map(|r| r[k][j]).collect();
            let label = format!("theta={theta:.6e}");
            em.estimate(&format!("pile_mass[{label}]"), acc.mean(), acc.stderr(), acc.count()).t = Some(t);
            em.estimate(&format!("oracle[{label}]"), o.value, o.stderr, cfg.oracle_samples).t = Some(t);
            let z = (acc.mean() - o.value) / combined_se(acc.stderr(), o.stderr).max(f64::MIN_POSITIVE);
            em.exact(&format!("z_score[{label}]"), z).t = Some(t);
        }
    }
    Ok(())
}

fn run_contraction(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let ts = if cfg.times.is_empty() { vec![1, 10, 100] } else { cfg.times.clone() };
    check_budget(cfg, 2 * ts.last().expect("non-empty"))?;
    let stats = observables::mean_square_gap(cfg.model, &cfg.law, cfg.n, &ts, cfg.replicas, cfg.seed)?;
    for (s, &t) in stats.iter().zip(&ts) {
        em.stat(s).t = Some(t);
        let closed = equilibrium::mean_square_gap(cfg.model, cfg.n, &cfg.law, t).map_err(|e| HarnessError::Compute(e.to_string()))?;
        em.exact("mean_square_gap_closed_form", closed).t = Some(t);
    }
    Ok(())
}

fn run_stationary(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let (law, n) = (&cfg.law, cfg.n);
    let compute = |e: equilibrium::EquilibriumError| HarnessError::Compute(e.to_string());
    em.exact("n_l2_closed_form", equilibrium::stationary_second_moment(n, law).map_err(compute)?);
    em.exact("n_l2_limit", equilibrium::stationary_second_moment_limit(law).map_err(compute)?);
    let burn = equilibrium::default_burn(n);
    check_budget(cfg, burn)?;
    let long_run: MeanVar = map_replicas(cfg.replicas, |i| {
        let mut rng = seed_stream(cfg.seed, i);
        let s = equilibrium::long_run_sample(ModelKind::Srm, n, law, burn, &mut rng).expect("n >= 2");
        n as f64 * s.config.l2_squared()
    })
    .into_iter()
    .collect();
    em.estimate("n_l2_long_run", long_run.mean(), long_run.stderr(), long_run.count()).t = Some(burn);
    if let RedistributionLaw::BetaSymmetric { alpha } = *law.spec() {
        let nf = n as f64;
        // Dirichlet(α): E[η(x)²] = (α+1)/(n(nα+1)).
        em.exact("n_l2_dirichlet", nf * (alpha + 1.0) / (nf * alpha + 1.0));
        let heights: Vec<f64> = map_replicas(cfg.replicas, |i| {
            let mut rng = seed_stream(derive_seed_str(cfg.seed, "sem-height"), i);
            let mut c = Configuration::dirac(ModelKind::Sem, n, 0).expect("n >= 2");
            c.run(law, burn, &mut rng);
            c.average()
        });
        let acc: MeanVar = heights.iter().copied().collect();
        let (var, var_se) = crate::stats::variance_with_stderr(&heights);
        let (a, b) = (alpha, alpha * (nf - 1.0));
        em.estimate("sem_height_mean", acc.mean(), acc.stderr(), acc.count()).t = Some(burn);
        em.exact("sem_height_mean_beta", a / (a + b));
        em.estimate("sem_height_variance", var, var_se, acc.count()).t = Some(burn);
        em.exact("sem_height_variance_beta", a * b / ((a + b) * (a + b) * (a + b + 1.0)));
    }
    em.without_model();
    Ok(())
}

fn run_profile(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let sch = schedule_of(cfg)?;
    let c = constants_of(cfg);
    let mut order: Vec<usize> = (0..cfg.betas.len()).collect();
    order.sort_by(|&a, &b| cfg.betas[a].total_cmp(&cfg.betas[b]));
    let ts: Vec<u64> = order.iter().map(|&k| sch.steps_at(cfg.betas[k])).collect();
    let coupling = cfg.statistic != "piles";
    let piles = cfg.statistic != "coupling";
    let mut dist = None;
    if coupling {
        let mut spec = CouplingSpec::new(cfg.model, &cfg.law, cfg.n, cfg.replicas, cfg.seed);
        spec.budget = cfg.budget;
        dist = Some(observables::monotonicity_curve(&spec, &ts)?);
    }
    let mut mass = None;
    let threshold = pile_threshold(cfg);
    if piles {
        check_budget(cfg, *ts.last().expect("non-empty"))?;
        mass = Some(observables::large_pile_curve(
            cfg.model,
            &cfg.law,
            cfg.n,
            &ts,
            &threshold,
            cfg.replicas,
            derive_seed_str(cfg.seed, "piles"),
        )?);
    }
    for (j, &k) in order.iter().enumerate() {
        let beta = cfg.betas[k];
        let tag = |row: &mut Row| {
            row.t = Some(ts[j]);
            row.beta = Some(beta);
        };
        tag(em.exact("theorem_profile", theorem_profile(beta, &c)));
        if let Some(d) = &dist {
            tag(em.stat(&d[j]));
        }
        if let Some(m) = &mass {
            let with_gamma = |row: &mut Row| {
                tag(row);
                row.gamma = Some(cfg.gamma);
            };
            with_gamma(em.exact("clt_profile", clt_profile(beta, cfg.gamma, &c)));
            with_gamma(em.stat(&m[j]));
            if let Ok(lb) = observables::lower_bound_diagnostic(m[j].value, cfg.n, &cfg.law, threshold.psi) {
                with_gamma(em.exact("lower_bound_diagnostic", lb));
            }
        }
    }
    Ok(())
}

fn run_monotonicity(cfg: &ExperimentConfig, em: &mut Emitter<'_>) -> Result<(), HarnessError> {
    let ts = default_times(cfg)?;
    let mut spec = CouplingSpec::new(cfg.model, &cfg.law, cfg.n, cfg.replicas, cfg.seed);
    spec.budget = cfg.budget;
    let curve = observables::monotonicity_curve(&spec, &ts)?;
    for (s, &t) in curve.iter().zip(&ts) {
        em.stat(s).t = Some(t);
    }
    let ok = observables::is_non_increasing(&curve, 4.0);
    em.exact("non_increasing_within_4se", if ok { 1.0 } else { 0.0 });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ConfigOverrides;

    fn cfg(pairs: &[(&str, &str)]) -> ExperimentConfig {
        let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        ConfigOverrides::parse_file(&text).unwrap().resolve().unwrap()
    }

    fn value(res: &ExperimentResult, name: &str) -> f64 {
        res.rows.iter().find(|r| r.statistic == name).unwrap().value
    }

    #[test]
    fn constants_rows() {
        let res = run_experiment(&cfg(&[("command", "constants"), ("law", "beta:1"), ("n", "1024")])).unwrap();
        assert!((value(&res, "h") - 0.5).abs() < 1e-12);
        assert!((value(&res, "s2") - 0.25).abs() < 1e-12);
        assert!((value(&res, "r") - 1.0).abs() < 1e-12);
        assert!((value(&res, "t_ent") - 7097.0).abs() < 1.0);
        assert_eq!(res.metadata["generator"], GENERATOR_NAME);
    }

    #[test]
    fn profile_targets() {
        let res = run_experiment(&cfg(&[
            ("command", "profile"),
            ("model", "gam"),
            ("law", "point-half"),
            ("n", "4096"),
            ("beta", "-2,-1,0,1,2"),
            ("replicas", "2"),
            ("statistic", "coupling"),
        ]))
        .unwrap();
        let targets: Vec<&Row> = res.rows.iter().filter(|r| r.statistic == "theorem_profile").collect();
        assert_eq!(targets.len(), 5);
        assert_eq!(targets[2].value, 1.0);
        assert_eq!(targets[2].t, Some(24576));
    }

    #[test]
    fn budget_exit_code() {
        let c = cfg(&[("command", "simulate"), ("t", "1000000"), ("replicas", "1000"), ("budget", "1000")]);
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn theta_grid_spans_range() {
        let g = theta_grid();
        assert_eq!(g.len(), 6);
        assert!((g[0] - (-8f64).exp()).abs() < 1e-18);
        assert!((g[5] - 1.0).abs() < 1e-15);
    }
}
