//! Distances and statistics estimated from simulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{draw_event, Configuration, ModelKind};
use crate::equilibrium::{self, default_burn, EquilibriumError};
use crate::laws::Law;
use crate::piles::{PileError, PileSet, ThresholdSpec};
use crate::rng::seed_stream;
use crate::stats::{compensated_sum, map_replicas, MeanVar};

/// Default cap on simulated steps (`replicas × steps per replica`).
pub const DEFAULT_STEP_BUDGET: u64 = 200_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("requested {work} steps, budget is {budget}")]
    BudgetExceeded { work: u128, budget: u64 },
    #[error("time grid must be non-empty and ascending")]
    UnsortedTimes,
    #[error("at least one replica is required")]
    NoReplicas,
    #[error(transparent)]
    Piles(#[from] PileError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// A named estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    /// Closed-form value; `stderr` is 0.
    pub exact: bool,
    /// Deterministic bias bound on top of the sampling error (0 if none).
    pub bias_bound: f64,
}

impl Statistic {
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Statistic { name: name.into(), value, stderr: 0.0, samples: 0, exact: true, bias_bound: 0.0 }
    }

    pub fn from_samples(name: impl Into<String>, acc: &MeanVar) -> Self {
        Statistic {
            name: name.into(),
            value: acc.mean(),
            stderr: acc.stderr(),
            samples: acc.count(),
            exact: false,
            bias_bound: 0.0,
        }
    }
}

/// `Σ_x |η(x) − 1/n|`.
pub fn l1_to_flat(cfg: &Configuration) -> f64 {
    let u = 1.0 / cfg.n() as f64;
    compensated_sum(cfg.energy().iter().map(|e| (e - u).abs()))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `min_σ ‖a − b∘σ‖₁`, attained by matching sorted entries.
pub fn sorted_l1(a: &Configuration, b: &Configuration) -> Result<f64, ObservableError> {
    sorted_l1_slices(a.energy(), b.energy())
}

pub fn sorted_l1_slices(a: &[f64], b: &[f64]) -> Result<f64, ObservableError> {
    if a.len() != b.len() {
        return Err(ObservableError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(l1(&sorted(a), &sorted(b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Plain,
    Sorted,
}

impl Metric {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Plain => l1(a, b),
            Metric::Sorted => l1(&sorted(a), &sorted(b)),
        }
    }
}

/// Parameters of a canonical-coupling estimate.
#[derive(Clone, Debug)]
pub struct CouplingSpec<'a> {
    pub model: ModelKind,
    pub law: &'a Law,
    pub n: usize,
    pub replicas: u64,
    /// SEM only: extra steps after the last observed time before flattening.
    /// Defaults to `round(16/λ_SEM)`.
    pub horizon: Option<u64>,
    /// SRM with a non-Beta law: burn-in of the stationary companion chain.
    /// Defaults to `12 n log n`.
    pub burn: Option<u64>,
    pub seed: u64,
    pub budget: u64,
}

impl<'a> CouplingSpec<'a> {
    pub fn new(model: ModelKind, law: &'a Law, n: usize, replicas: u64, seed: u64) -> Self {
        CouplingSpec { model, law, n, replicas, horizon: None, burn: None, seed, budget: DEFAULT_STEP_BUDGET }
    }

    pub fn horizon(&self) -> Result<u64, ObservableError> {
        match self.horizon {
            Some(h) => Ok(h),
            None => {
                let rates = equilibrium::rates(self.n, self.law)?;
                Ok((16.0 / rates.lambda_sem).round() as u64)
            }
        }
    }
}

/// Per-replica distances at each grid time, for both metrics, plus the
/// replica's bias contribution.
struct ReplicaCurve {
    plain: Vec<f64>,
    sorted: Vec<f64>,
    bias: f64,
}

/// L¹ bias bound of a burn-in companion: the burn-in chain started from the
/// flat vector and an exactly stationary chain driven by the same events
/// differ by a mean-zero vector whose squared norm contracts by `1 − λ_SRM`
/// per step in mean.
fn burn_in_bias(n: usize, law: &Law, burn: u64) -> Result<f64, ObservableError> {
    let rates = equilibrium::rates(n, law)?;
    let m2 = equilibrium::stationary_second_moment(n, law)? / n as f64;
    let start = (m2 - 1.0 / n as f64).max(0.0);
    Ok(((n as f64) * (1.0 - rates.lambda_srm).powf(burn as f64) * start).sqrt())
}

fn coupled_replica(spec: &CouplingSpec<'_>, ts: &[u64], horizon: u64, replica: u64) -> ReplicaCurve {
    let n = spec.n;
    let mut rng = seed_stream(spec.seed, replica);
    let mut eta = Configuration::dirac(spec.model, n, 0).expect("n >= 2");
    let mut plain = Vec::with_capacity(ts.len());
    let mut sorted_d = Vec::with_capacity(ts.len());
    let mut bias = 0.0;
    match spec.model {
        ModelKind::Gam => {
            let flat = vec![1.0 / n as f64; n];
            for &t in ts {
                eta.run(spec.law, t - eta.step_count(), &mut rng);
                plain.push(l1(eta.energy(), &flat));
                sorted_d.push(Metric::Sorted.distance(eta.energy(), &flat));
            }
        }
        ModelKind::Srm => {
            let companion = equilibrium::sample_stationary(spec.model, n, spec.law, &mut rng, spec.burn)
                .expect("validated law");
            let mut other = companion.config;
            for &t in ts {
                while eta.step_count() < t {
                    let ev = draw_event(n, spec.law, &mut rng);
                    eta.apply_unchecked(&ev);
                    other.apply_unchecked(&ev);
                }
                plain.push(l1(eta.energy(), other.energy()));
                sorted_d.push(Metric::Sorted.distance(eta.energy(), other.energy()));
            }
        }
        ModelKind::Sem => {
            let mut snaps = Vec::with_capacity(ts.len());
            for &t in ts {
                eta.run(spec.law, t - eta.step_count(), &mut rng);
                snaps.push(eta.energy().to_vec());
            }
            eta.run(spec.law, horizon, &mut rng);
            let avg = eta.average();
            bias = compensated_sum(eta.energy().iter().map(|e| (e - avg).abs()));
            let limit = vec![avg; n];
            for s in &snaps {
                plain.push(l1(s, &limit));
                sorted_d.push(Metric::Sorted.distance(s, &limit));
            }
        }
    }
    ReplicaCurve { plain, sorted: sorted_d, bias }
}

/// Estimates of `K(t) = E‖η_t − η_∞‖₁` on an ascending time grid, one
/// trajectory per replica from `δ₀`, for both metrics.
///
/// The coupled limit is
/// * GAM: the exact flat vector.
/// * SEM: the same trajectory continued `horizon` steps past the last grid
///   time and flattened to its average; the mean flattening error
///   `‖η − ⟨η⟩‖₁` is the reported bias bound.
/// * SRM: a second chain started from a stationary sample and driven by the
///   same events (the SRM trajectory itself does not converge pathwise).
///   For non-Beta laws the companion comes from a burn-in, whose L¹ bias
///   bound is reported.
pub fn coupling_curves(spec: &CouplingSpec<'_>, ts: &[u64]) -> Result<(Vec<Statistic>, Vec<Statistic>), ObservableError> {
    if spec.replicas == 0 {
        return Err(ObservableError::NoReplicas);
    }
    if ts.is_empty() || ts.windows(2).any(|w| w[0] > w[1]) {
        return Err(ObservableError::UnsortedTimes);
    }
    equilibrium::rates(spec.n, spec.law)?;
    let horizon = if spec.model == ModelKind::Sem { spec.horizon()? } else { 0 };
    let companion_exact = matches!(spec.law.spec(), crate::laws::RedistributionLaw::BetaSymmetric { .. });
    let burn = if spec.model == ModelKind::Srm && !companion_exact {
        spec.burn.unwrap_or_else(|| default_burn(spec.n))
    } else {
        0
    };
    let last = *ts.last().expect("non-empty");
    let per_replica = last as u128 + horizon as u128 + burn as u128;
    let work = per_replica * spec.replicas as u128 * if spec.model == ModelKind::Srm { 2 } else { 1 };
    if work > spec.budget as u128 {
        return Err(ObservableError::BudgetExceeded { work, budget: spec.budget });
    }
    let curves = map_replicas(spec.replicas, |i| coupled_replica(spec, ts, horizon, i));
    let burn_bias = if burn > 0 { burn_in_bias(spec.n, spec.law, burn)? } else { 0.0 };
    let bias: MeanVar = curves.iter().map(|c| c.bias).collect();
    let collect = |pick: fn(&ReplicaCurve) -> &Vec<f64>, label: &str| {
        (0..ts.len())
            .map(|k| {
                let acc: MeanVar = curves.iter().map(|c| pick(c)[k]).collect();
                let mut s = Statistic::from_samples(format!("{label}_{}", spec.model), &acc);
                s.bias_bound = bias.mean() + burn_bias;
                s
            })
            .collect::<Vec<_>>()
    };
    Ok((collect(|c| &c.plain, "w1"), collect(|c| &c.sorted, "w1_sorted")))
}

/// Canonical-coupling estimate of `K(t)` in one metric.
pub fn canonical_coupling_distance(spec: &CouplingSpec<'_>, t: u64, metric: Metric) -> Result<Statistic, ObservableError> {
    let (plain, sorted) = coupling_curves(spec, &[t])?;
    Ok(match metric {
        Metric::Plain => plain.into_iter().next(),
        Metric::Sorted => sorted.into_iter().next(),
    }
    .expect("one time"))
}

/// The plain-metric curve on an ascending grid, sharing trajectories.
pub fn monotonicity_curve(spec: &CouplingSpec<'_>, ts: &[u64]) -> Result<Vec<Statistic>, ObservableError> {
    Ok(coupling_curves(spec, ts)?.0)
}

/// Whether adjacent values are non-increasing within `k` combined stderrs
/// (plus the reported bias bounds).
pub fn is_non_increasing(curve: &[Statistic], k: f64) -> bool {
    curve
        .windows(2)
        .all(|w| w[1].value <= w[0].value + k * (w[0].stderr + w[1].stderr) + w[0].bias_bound + w[1].bias_bound)
}

/// Empirical counterpart of [`equilibrium::mean_square_gap`] on an
/// ascending grid.
pub fn mean_square_gap(
    model: ModelKind,
    law: &Law,
    n: usize,
    ts: &[u64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<Statistic>, ObservableError> {
    if replicas == 0 {
        return Err(ObservableError::NoReplicas);
    }
    if ts.is_empty() || ts.windows(2).any(|w| w[0] > w[1]) {
        return Err(ObservableError::UnsortedTimes);
    }
    equilibrium::rates(n, law)?;
    let rows = map_replicas(replicas, |i| {
        let mut rng = seed_stream(seed, i);
        let mut eta = Configuration::dirac(model, n, 0).expect("n >= 2");
        let mut other = Configuration::flat(model, n).expect("n >= 2");
        ts.iter()
            .map(|&t| {
                while eta.step_count() < t {
                    let ev = draw_event(n, law, &mut rng);
                    eta.apply_unchecked(&ev);
                    if model != ModelKind::Sem {
                        other.apply_unchecked(&ev);
                    }
                }
                let target = match model {
                    ModelKind::Sem => vec![eta.average(); n],
                    _ => other.energy().to_vec(),
                };
                compensated_sum(eta.energy().iter().zip(&target).map(|(a, b)| (a - b) * (a - b)))
            })
            .collect::<Vec<_>>()
    });
    Ok((0..ts.len())
        .map(|k| {
            let acc: MeanVar = rows.iter().map(|r| r[k]).collect();
            Statistic::from_samples(format!("mean_square_gap_{model}"), &acc)
        })
        .collect())
}

/// `‖η^{+,γ}‖₁`: mass in piles of size at least `θ`.
pub fn large_pile_mass(ps: &PileSet, spec: &ThresholdSpec) -> Result<f64, ObservableError> {
    Ok(ps.threshold_mass(spec.theta)?)
}

/// Mean large-pile mass at each time of an ascending grid, one pile
/// trajectory per replica from `δ₀`. Piles are discarded once below `θ`,
/// which leaves the statistic unchanged and bounds the pile count by `1/θ`.
pub fn large_pile_curve(
    model: ModelKind,
    law: &Law,
    n: usize,
    ts: &[u64],
    spec: &ThresholdSpec,
    replicas: u64,
    seed: u64,
) -> Result<Vec<Statistic>, ObservableError> {
    if replicas == 0 {
        return Err(ObservableError::NoReplicas);
    }
    if ts.is_empty() || ts.windows(2).any(|w| w[0] > w[1]) {
        return Err(ObservableError::UnsortedTimes);
    }
    let floor = spec.theta.ln() - 1e-9;
    let rows: Vec<Result<Vec<f64>, ObservableError>> = map_replicas(replicas, |i| {
        let mut rng = seed_stream(seed, i);
        let mut ps = PileSet::new(model, n, 0)?.with_floor_log(floor);
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            while ps.step_count() < t {
                let ev = draw_event(n, law, &mut rng);
                ps.apply_unchecked(&ev)?;
            }
            out.push(large_pile_mass(&ps, spec)?);
        }
        Ok(out)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((0..ts.len())
        .map(|k| {
            let acc: MeanVar = rows.iter().map(|r| r[k]).collect();
            Statistic::from_samples(format!("large_pile_mass_{model}"), &acc)
        })
        .collect())
}

/// Lower-bound diagnostic `2m − √(n e^{−ψ} E‖η_∞‖₂²)` from a mean large-pile
/// mass `m`, using the SRM stationary second moment.
pub fn lower_bound_diagnostic(pile_mass: f64, n: usize, law: &Law, psi: f64) -> Result<f64, ObservableError> {
    let m2 = equilibrium::stationary_second_moment(n, law)? / n as f64;
    Ok(2.0 * pile_mass - (n as f64 * (-psi).exp() * m2).sqrt())
}
