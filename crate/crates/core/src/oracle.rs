//! Right-hand sides of the exact pile identity and the limit profiles.
//!
//! For a Dirac start, `E‖η^θ_t‖₁ = P(Σ_{i≤T} log X̂_i ≥ log θ)` with
//! `T ~ Bin(t, 2/n)` independent of the i.i.d. size-biased draws `X̂_i`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laws::{EntropicConstants, Law};
use crate::rng::seed_stream;
use crate::special::normal_cdf;
use crate::stats::map_replicas;

/// Largest binomial count the exact summation path handles.
pub const EXACT_MAX_T: u64 = 40;
/// Binomial tail mass beyond [`EXACT_MAX_T`] tolerated by the exact path.
pub const EXACT_TAIL_TOLERANCE: f64 = 1e-13;
/// Default Monte Carlo budget for [`threshold_probability`].
pub const DEFAULT_ORACLE_SAMPLES: u64 = 1_000_000;
const BATCH: u64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("entropic rate h must be positive, got {0}")]
    DegenerateLaw(f64),
    #[error("at least two particles are required, got n = {0}")]
    TooFewParticles(usize),
    #[error("exact summation needs a finite law and P(T > {EXACT_MAX_T}) <= {EXACT_TAIL_TOLERANCE}")]
    ExactPathUnavailable,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

/// Cutoff location and window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSchedule {
    pub n: usize,
    pub constants: EntropicConstants,
    /// `n log n / (2h)`.
    pub t_ent: f64,
    /// `(1 + r)(n/2) √(log n / h)`.
    pub t_w: f64,
}

impl CutoffSchedule {
    /// Real time `t_ent + β t_w`.
    pub fn time(&self, beta: f64) -> f64 {
        self.t_ent + beta * self.t_w
    }

    /// `t_ent + β t_w` rounded to the nearest step, clamped at 0.
    pub fn steps_at(&self, beta: f64) -> u64 {
        let t = self.time(beta).round();
        if t <= 0.0 {
            0
        } else {
            t as u64
        }
    }
}

pub fn schedule(n: usize, constants: &EntropicConstants) -> Result<CutoffSchedule, OracleError> {
    if n < 2 {
        return Err(OracleError::TooFewParticles(n));
    }
    let h = constants.h;
    if !(h > 0.0) || !h.is_finite() {
        return Err(OracleError::DegenerateLaw(h));
    }
    let nf = n as f64;
    let ln = nf.ln();
    Ok(CutoffSchedule {
        n,
        constants: *constants,
        t_ent: nf * ln / (2.0 * h),
        t_w: (1.0 + constants.r) * (nf / 2.0) * (ln / h).sqrt(),
    })
}

/// `Φ(−(β(1+r) + γ)/√(1+r²))`.
pub fn clt_profile(beta: f64, gamma: f64, constants: &EntropicConstants) -> f64 {
    let r = constants.r;
    normal_cdf(-(beta * (1.0 + r) + gamma) / (1.0 + r * r).sqrt())
}

/// `2Φ(−β(1+r)/√(1+r²))`.
pub fn theorem_profile(beta: f64, constants: &EntropicConstants) -> f64 {
    2.0 * clt_profile(beta, 0.0, constants)
}

/// Inputs of the pile identity's right-hand side.
#[derive(Clone, Debug)]
pub struct OracleSpec<'a> {
    pub t: u64,
    pub n: usize,
    pub theta: f64,
    pub law: &'a Law,
    pub samples: u64,
}

/// Estimate with its standard error (0 when exact).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `P(Σ_{i≤T} log X̂_i ≥ log θ)`.
///
/// Samples are split into fixed batches, each with its own stream under
/// `seed`, and summed in batch order.
pub fn threshold_probability(spec: &OracleSpec<'_>, seed: u64) -> Result<Estimate, OracleError> {
    check(spec.n, spec.theta)?;
    if spec.theta == 0.0 {
        return Ok(Estimate { value: 1.0, stderr: 0.0 });
    }
    let samples = spec.samples.max(1);
    let log_theta = spec.theta.ln();
    let binom = Binomial::new(spec.t, 2.0 / spec.n as f64).expect("valid binomial");
    let batches = samples.div_ceil(BATCH);
    let hits: u64 = map_replicas(batches, |b| {
        let mut rng = seed_stream(seed, b);
        let count = BATCH.min(samples - b * BATCH);
        (0..count)
            .filter(|_| sample_indicator(spec.law, &binom, log_theta, &mut rng))
            .count() as u64
    })
    .into_iter()
    .sum();
    let p = hits as f64 / samples as f64;
    Ok(Estimate { value: p, stderr: (p * (1.0 - p) / samples as f64).sqrt() })
}

/// Same estimate for several thresholds from one set of samples: each
/// sample's full log-sum is compared with every threshold.
pub fn threshold_probabilities(
    law: &Law,
    n: usize,
    t: u64,
    thetas: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<Estimate>, OracleError> {
    for &th in thetas {
        check(n, th)?;
    }
    let samples = samples.max(1);
    let logs: Vec<f64> = thetas.iter().map(|&th| if th > 0.0 { th.ln() } else { f64::NEG_INFINITY }).collect();
    let min_log = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let binom = Binomial::new(t, 2.0 / n as f64).expect("valid binomial");
    let batches = samples.div_ceil(BATCH);
    let per_batch: Vec<Vec<u64>> = map_replicas(batches, |b| {
        let mut rng = seed_stream(seed, b);
        let count = BATCH.min(samples - b * BATCH);
        let mut hits = vec![0u64; logs.len()];
        for _ in 0..count {
            let sum = log_sum(law, &binom, min_log, &mut rng);
            for (h, &lt) in hits.iter_mut().zip(&logs) {
                if sum >= lt {
                    *h += 1;
                }
            }
        }
        hits
    });
    let mut totals = vec![0u64; logs.len()];
    for batch in per_batch {
        for (t, h) in totals.iter_mut().zip(batch) {
            *t += h;
        }
    }
    Ok(totals
        .into_iter()
        .zip(thetas)
        .map(|(h, &th)| {
            if th == 0.0 {
                return Estimate { value: 1.0, stderr: 0.0 };
            }
            let p = h as f64 / samples as f64;
            Estimate { value: p, stderr: (p * (1.0 - p) / samples as f64).sqrt() }
        })
        .collect())
}

fn check(n: usize, theta: f64) -> Result<(), OracleError> {
    if n < 2 {
        return Err(OracleError::TooFewParticles(n));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(OracleError::InvalidThreshold(theta));
    }
    Ok(())
}

#[inline]
fn sample_indicator<R: Rng + ?Sized>(law: &Law, binom: &Binomial, log_theta: f64, rng: &mut R) -> bool {
    log_sum(law, binom, log_theta, rng) >= log_theta
}

/// Draws `T` and accumulates `Σ log X̂_i`, stopping early once the sum falls
/// below `stop` (it can only decrease).
#[inline]
fn log_sum<R: Rng + ?Sized>(law: &Law, binom: &Binomial, stop: f64, rng: &mut R) -> f64 {
    let t = binom.sample(rng);
    let mut sum = 0.0;
    for _ in 0..t {
        sum += law.sample_size_biased(rng).ln();
        if sum < stop {
            break;
        }
    }
    sum
}

/// Binomial pmf `P(T = k)` for `k = 0..=kmax` by the ratio recurrence.
pub fn binomial_pmf_prefix(t: u64, p: f64, kmax: u64) -> Vec<f64> {
    let kmax = kmax.min(t);
    let mut out = Vec::with_capacity(kmax as usize + 1);
    let mut cur = (t as f64 * (1.0 - p).ln()).exp();
    out.push(cur);
    let odds = p / (1.0 - p);
    for k in 0..kmax {
        cur *= (t - k) as f64 / (k + 1) as f64 * odds;
        out.push(cur);
    }
    out
}

/// Exact value of the identity's right-hand side for finite laws, summing
/// over `T ≤ 40` and convolving the atoms of `log X̂`.
pub fn threshold_probability_exact(law: &Law, n: usize, t: u64, theta: f64) -> Result<f64, OracleError> {
    check(n, theta)?;
    if theta == 0.0 {
        return Ok(1.0);
    }
    let atoms = law.size_biased_log_atoms().ok_or(OracleError::ExactPathUnavailable)?;
    let pmf = binomial_pmf_prefix(t, 2.0 / n as f64, EXACT_MAX_T);
    let covered: f64 = pmf.iter().sum();
    if t > EXACT_MAX_T && 1.0 - covered > EXACT_TAIL_TOLERANCE {
        return Err(OracleError::ExactPathUnavailable);
    }
    let log_theta = theta.ln();
    // Distribution of the partial log-sum restricted to values ≥ log θ.
    let mut dist: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    let mut total = 0.0;
    for (s, &p_t) in pmf.iter().enumerate() {
        if s > 0 {
            let mut next: Vec<(f64, f64)> = Vec::with_capacity(dist.len() * atoms.len());
            for &(v, p) in &dist {
                for &(l, q) in &atoms {
                    let w = v + l;
                    if w >= log_theta {
                        next.push((w, p * q));
                    }
                }
            }
            next.sort_by(|a, b| a.0.total_cmp(&b.0));
            dist.clear();
            for (v, p) in next {
                match dist.last_mut() {
                    Some(last) if (v - last.0).abs() <= 1e-12 * (1.0 + v.abs()) => last.1 += p,
                    _ => dist.push((v, p)),
                }
            }
        }
        total += p_t * dist.iter().map(|(_, p)| p).sum::<f64>();
        if dist.is_empty() {
            break;
        }
    }
    Ok(total)
}
