//! Stationary states and the exact mean-square contraction identities.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Configuration, ExchangeEvent, ModelKind, DENSE_LIMIT};
use crate::laws::{Law, RedistributionLaw};
use crate::stats::compensated_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("exact enumeration supports 2 <= n <= {DENSE_LIMIT}, got {0}")]
    UnsupportedSize(usize),
    #[error("at least two particles are required, got n = {0}")]
    TooFewParticles(usize),
    #[error("E[X^2] = {0} is not below 1/2")]
    DegenerateLaw(f64),
}

/// One-step mean-square contraction rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRates {
    pub n: usize,
    pub ex2: f64,
    pub lambda_srm: f64,
    pub lambda_gam: f64,
    pub lambda_sem: f64,
}

impl ContractionRates {
    pub fn new(n: usize, ex2: f64) -> Result<Self, EquilibriumError> {
        if n < 2 {
            return Err(EquilibriumError::TooFewParticles(n));
        }
        if !(ex2 < 0.5) {
            return Err(EquilibriumError::DegenerateLaw(ex2));
        }
        let nf = n as f64;
        let lambda_srm = (2.0 / nf) * (1.0 - 2.0 * ex2 * (nf - 2.0) / (nf - 1.0));
        let lambda_gam = (2.0 / (nf - 1.0)) * (1.0 - 2.0 * ex2);
        let lambda_sem = lambda_gam + 2.0 * (4.0 * ex2 - 1.0) / (nf * (nf - 1.0));
        Ok(ContractionRates { n, ex2, lambda_srm, lambda_gam, lambda_sem })
    }

    /// `λ_SEM` in its factored form `(2/(n−1))(1−2E[X²])(1 + (4E[X²]−1)/(n(1−2E[X²])))`.
    pub fn lambda_sem_factored(&self) -> f64 {
        let nf = self.n as f64;
        let a = 1.0 - 2.0 * self.ex2;
        (2.0 / (nf - 1.0)) * a * (1.0 + (4.0 * self.ex2 - 1.0) / (nf * a))
    }

    pub fn for_model(&self, model: ModelKind) -> f64 {
        match model {
            ModelKind::Srm => self.lambda_srm,
            ModelKind::Sem => self.lambda_sem,
            ModelKind::Gam => self.lambda_gam,
        }
    }

    /// Common asymptote `2(1 − 2E[X²])/n`.
    pub fn asymptote(&self) -> f64 {
        2.0 * (1.0 - 2.0 * self.ex2) / self.n as f64
    }
}

pub fn rates(n: usize, law: &Law) -> Result<ContractionRates, EquilibriumError> {
    ContractionRates::new(n, law.ex2())
}

fn mean_and_l2(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    (compensated_sum(v.iter().copied()) / n, compensated_sum(v.iter().map(|x| x * x)))
}

/// Closed-form `E‖vM‖₂²` for one random exchange matrix `M` of the model.
///
/// SRM: `(1−λ_SRM)‖v‖² + (4E[X²]n/(n−1))⟨v⟩²`; GAM and SEM (whose matrix is
/// `Rᵀ`, equal in this functional to `Q` by symmetry of `X`):
/// `(1−λ_GAM)‖v‖² + nλ_GAM⟨v⟩²`.
pub fn l2_closed_form(v: &[f64], ex2: f64, kind: ModelKind) -> Result<f64, EquilibriumError> {
    let n = v.len();
    let r = ContractionRates::new(n, ex2)?;
    let nf = n as f64;
    let (mean, l2) = mean_and_l2(v);
    Ok(match kind {
        ModelKind::Srm => (1.0 - r.lambda_srm) * l2 + 4.0 * ex2 * nf / (nf - 1.0) * mean * mean,
        ModelKind::Gam | ModelKind::Sem => (1.0 - r.lambda_gam) * l2 + nf * r.lambda_gam * mean * mean,
    })
}

/// Expectation over one uniformly chosen ordered pair and the law of `X` of a
/// functional of the updated vector. Finite laws are enumerated atom by atom;
/// for Beta laws the functional must be a polynomial of degree ≤ 2 in `X`,
/// which is then integrated from its values at `X ∈ {0, 1/2, 1}` and the
/// first two moments.
fn expect_one_step<F>(v: &[f64], law: &Law, kind: ModelKind, f: F) -> Result<f64, EquilibriumError>
where
    F: Fn(&[f64]) -> f64,
{
    let n = v.len();
    if !(2..=DENSE_LIMIT).contains(&n) {
        return Err(EquilibriumError::UnsupportedSize(n));
    }
    let atoms = law.spec().atoms();
    let mut work = v.to_vec();
    let mut eval = |x: usize, y: usize, xval: f64| {
        let ev = ExchangeEvent { x, y, xval };
        let (a, b) = kind.exchange(v[x], v[y], ev.xval);
        work[x] = a;
        work[y] = b;
        let out = f(&work);
        work[x] = v[x];
        work[y] = v[y];
        out
    };
    let mut terms = Vec::with_capacity(n * (n - 1));
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let term = match &atoms {
                Some(atoms) => compensated_sum(atoms.iter().map(|a| a.weight * eval(x, y, a.value))),
                None => {
                    let (f0, fh, f1) = (eval(x, y, 0.0), eval(x, y, 0.5), eval(x, y, 1.0));
                    let c2 = 2.0 * (f1 - 2.0 * fh + f0);
                    let c1 = f1 - f0 - c2;
                    f0 + c1 * law.spec().mean() + c2 * law.ex2()
                }
            };
            terms.push(term);
        }
    }
    Ok(compensated_sum(terms) / (n * (n - 1)) as f64)
}

/// `E‖vM‖₂²` by exhaustive enumeration of pairs (and atoms for finite laws).
pub fn one_step_l2(v: &[f64], law: &Law, kind: ModelKind) -> Result<f64, EquilibriumError> {
    expect_one_step(v, law, kind, |w| compensated_sum(w.iter().map(|x| x * x)))
}

/// SEM one-step pair `(E⟨ξ′⟩², E‖ξ′ − ⟨ξ′⟩‖₂²)` from the closed-form
/// recursions.
pub fn mean_square_recursion(v: &[f64], ex2: f64) -> Result<(f64, f64), EquilibriumError> {
    let n = v.len();
    let r = ContractionRates::new(n, ex2)?;
    let nf = n as f64;
    let (mean, l2) = mean_and_l2(v);
    let a = 2.0 * (4.0 * ex2 - 1.0);
    let mean_sq = (1.0 - a / (nf * (nf - 1.0))) * mean * mean + a / (nf * nf * (nf - 1.0)) * l2;
    let centered = compensated_sum(v.iter().map(|x| (x - mean) * (x - mean)));
    Ok((mean_sq, (1.0 - r.lambda_sem) * centered))
}

/// The same SEM pair by exhaustive enumeration.
pub fn mean_square_enumerated(v: &[f64], law: &Law) -> Result<(f64, f64), EquilibriumError> {
    let n = v.len() as f64;
    let mean_sq = expect_one_step(v, law, ModelKind::Sem, |w| {
        let m = compensated_sum(w.iter().copied()) / n;
        m * m
    })?;
    let centered = expect_one_step(v, law, ModelKind::Sem, |w| {
        let m = compensated_sum(w.iter().copied()) / n;
        compensated_sum(w.iter().map(|x| (x - m) * (x - m)))
    })?;
    Ok((mean_sq, centered))
}

/// SRM stationary second moment `n E‖η_∞‖₂² = 4E[X²]/(λ_SRM (n−1))`.
pub fn stationary_second_moment(n: usize, law: &Law) -> Result<f64, EquilibriumError> {
    let r = rates(n, law)?;
    Ok(4.0 * r.ex2 / (r.lambda_srm * (n as f64 - 1.0)))
}

/// Large-`n` limit `2E[X²]/(1 − 2E[X²])` of [`stationary_second_moment`].
pub fn stationary_second_moment_limit(law: &Law) -> Result<f64, EquilibriumError> {
    let e = law.ex2();
    if !(e < 0.5) {
        return Err(EquilibriumError::DegenerateLaw(e));
    }
    Ok(2.0 * e / (1.0 - 2.0 * e))
}

/// Closed-form mean-square gap after `t` steps from `δ₀`: SRM and GAM
/// against the chain started flat (shared events), SEM against its own
/// average. All three equal `(1 − λ)^t (1 − 1/n)`.
pub fn mean_square_gap(model: ModelKind, n: usize, law: &Law, t: u64) -> Result<f64, EquilibriumError> {
    let lambda = rates(n, law)?.for_model(model);
    Ok((1.0 - lambda).powf(t as f64) * (1.0 - 1.0 / n as f64))
}

/// Default burn-in `⌈12 n log n⌉` for long-run stationary approximations.
pub fn default_burn(n: usize) -> u64 {
    let nf = n as f64;
    (12.0 * nf * nf.ln()).ceil() as u64
}

/// A draw from (an approximation of) a model's limit law.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarySample {
    pub config: Configuration,
    /// Set when the sample comes from a finite burn-in instead of an exact law.
    pub approximate: bool,
}

/// Exact Dirichlet(α, …, α) on the simplex, from normalized Gamma(α) draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let mut v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let total = compensated_sum(v.iter().copied());
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Beta(a, b) from two Gamma draws.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = Gamma::new(a, 1.0).expect("a > 0").sample(rng);
    let y = Gamma::new(b, 1.0).expect("b > 0").sample(rng);
    x / (x + y)
}

/// Runs the chain for `burn` steps: SRM/GAM from the flat vector, SEM from
/// the Dirac mass at 0.
pub fn long_run_sample<R: Rng + ?Sized>(
    model: ModelKind,
    n: usize,
    law: &Law,
    burn: u64,
    rng: &mut R,
) -> Result<StationarySample, EquilibriumError> {
    if n < 2 {
        return Err(EquilibriumError::TooFewParticles(n));
    }
    let mut config = match model {
        ModelKind::Sem => Configuration::dirac(model, n, 0),
        _ => Configuration::flat(model, n),
    }
    .expect("n >= 2");
    config.run(law, burn, rng);
    Ok(StationarySample { config, approximate: true })
}

/// Limit-law sampler.
///
/// * GAM: the flat vector `1/n` (exact).
/// * SRM with Beta(α, α): Dirichlet(α) (exact).
/// * SEM with Beta(α, α) from a Dirac start: flat at height `Y ~ Beta(α, α(n−1))` (exact).
/// * Otherwise: a long run of `burn` steps (default [`default_burn`]), flagged approximate.
pub fn sample_stationary<R: Rng + ?Sized>(
    model: ModelKind,
    n: usize,
    law: &Law,
    rng: &mut R,
    burn: Option<u64>,
) -> Result<StationarySample, EquilibriumError> {
    if n < 2 {
        return Err(EquilibriumError::TooFewParticles(n));
    }
    if !(law.ex2() < 0.5) {
        return Err(EquilibriumError::DegenerateLaw(law.ex2()));
    }
    let exact = |config| Ok(StationarySample { config, approximate: false });
    match (model, law.spec()) {
        (ModelKind::Gam, _) => exact(Configuration::flat(model, n).expect("n >= 2")),
        (ModelKind::Srm, RedistributionLaw::BetaSymmetric { alpha }) => {
            exact(Configuration::new(model, sample_dirichlet(n, *alpha, rng)).expect("simplex"))
        }
        (ModelKind::Sem, RedistributionLaw::BetaSymmetric { alpha }) => {
            let y = sample_beta(*alpha, alpha * (n as f64 - 1.0), rng);
            exact(Configuration::flat_at(model, n, y).expect("n >= 2"))
        }
        _ => long_run_sample(model, n, law, burn.unwrap_or_else(|| default_burn(n)), rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::Atom;
    use crate::rng::seed_stream;
    use crate::stats::MeanVar;

    fn laws() -> Vec<Law> {
        vec![
            Law::point_half(),
            Law::beta(0.5).unwrap(),
            Law::beta(1.0).unwrap(),
            Law::beta(2.0).unwrap(),
            Law::two_point(0.25).unwrap(),
        ]
    }

    #[test]
    fn rate_examples() {
        let r = rates(10, &Law::beta(1.0).unwrap()).unwrap();
        assert!((r.lambda_srm - 11.0 / 135.0).abs() < 1e-15);
        assert!((r.lambda_gam - 2.0 / 27.0).abs() < 1e-15);
        assert!((r.lambda_sem - 11.0 / 135.0).abs() < 1e-15);
        for n in 2..=64 {
            let r = rates(n, &Law::point_half()).unwrap();
            assert!((r.lambda_srm - 1.0 / (n as f64 - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn rate_invariants() {
        for law in laws() {
            for n in 3..=64 {
                let r = rates(n, &law).unwrap();
                assert!((r.lambda_sem - r.lambda_srm).abs() < 1e-14);
                assert!((r.lambda_sem - r.lambda_sem_factored()).abs() < 1e-14);
                for l in [r.lambda_srm, r.lambda_gam, r.lambda_sem] {
                    assert!(l > 0.0 && l < 1.0);
                }
            }
        }
    }

    #[test]
    fn rates_approach_common_asymptote() {
        // The 3/n bound needs 2E[X²]/(1−2E[X²]) ≤ 3(n−1)/n, true for these laws.
        for law in [Law::point_half(), Law::beta(1.0).unwrap(), Law::beta(2.0).unwrap(), Law::two_point(0.25).unwrap()] {
            for n in 10..=200 {
                let r = rates(n, &law).unwrap();
                for l in [r.lambda_srm, r.lambda_gam, r.lambda_sem] {
                    assert!((l / r.asymptote() - 1.0).abs() <= 3.0 / n as f64);
                }
            }
        }
    }

    #[test]
    fn degenerate_second_moment_rejected() {
        assert!(matches!(ContractionRates::new(5, 0.5), Err(EquilibriumError::DegenerateLaw(_))));
    }

    #[test]
    fn flat_vector_srm_closed_form() {
        let law = Law::beta(1.0).unwrap();
        let n = 7;
        let v = vec![1.0 / n as f64; n];
        let r = rates(n, &law).unwrap();
        let by_hand = (1.0 - r.lambda_srm) / n as f64 + 4.0 * law.ex2() * n as f64 / (n as f64 - 1.0) / (n * n) as f64;
        let closed = l2_closed_form(&v, law.ex2(), ModelKind::Srm).unwrap();
        assert!((closed - by_hand).abs() < 1e-14);
        // SRM conserves mass and the flat vector is not fixed; enumeration agrees anyway.
        assert!((one_step_l2(&v, &law, ModelKind::Srm).unwrap() - closed).abs() < 1e-14);
    }

    #[test]
    fn mean_zero_vector_kills_second_term() {
        let law = Law::two_point(0.25).unwrap();
        let mut v = vec![0.0; 6];
        v[0] = 1.0;
        v[1] = -1.0;
        let r = rates(6, &law).unwrap();
        assert!((one_step_l2(&v, &law, ModelKind::Srm).unwrap() - 2.0 * (1.0 - r.lambda_srm)).abs() < 1e-14);
        assert!((one_step_l2(&v, &law, ModelKind::Gam).unwrap() - 2.0 * (1.0 - r.lambda_gam)).abs() < 1e-14);
    }

    #[test]
    fn enumeration_matches_closed_form_beta() {
        let law = Law::beta(1.5).unwrap();
        let mut rng = seed_stream(3, 0);
        for n in [2usize, 5, 9] {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.3).collect();
            for kind in ModelKind::ALL {
                let a = one_step_l2(&v, &law, kind).unwrap();
                let b = l2_closed_form(&v, law.ex2(), kind).unwrap();
                assert!((a - b).abs() < 1e-12, "{kind} n={n}");
            }
            let (m1, c1) = mean_square_recursion(&v, law.ex2()).unwrap();
            let (m2, c2) = mean_square_enumerated(&v, &law).unwrap();
            assert!((m1 - m2).abs() < 1e-12 && (c1 - c2).abs() < 1e-12);
        }
    }

    #[test]
    fn sem_examples() {
        let law = Law::two_point(0.25).unwrap();
        let flat = vec![0.3; 5];
        let (m, c) = mean_square_recursion(&flat, law.ex2()).unwrap();
        assert!((m - 0.09).abs() < 1e-15 && c.abs() < 1e-15);

        let mut d = vec![0.0; 4];
        d[0] = 1.0;
        let (m1, c1) = mean_square_recursion(&d, law.ex2()).unwrap();
        let (m2, c2) = mean_square_enumerated(&d, &law).unwrap();
        assert!((m1 - m2).abs() < 1e-12 && (c1 - c2).abs() < 1e-12);

        // Iterating the centered recursion gives (1 − λ_SEM)^t times the start.
        let r = rates(4, &law).unwrap();
        let mut centered = 0.75;
        for _ in 0..30 {
            centered *= 1.0 - r.lambda_sem;
        }
        assert!((centered - (1.0 - r.lambda_sem).powi(30) * 0.75).abs() < 1e-12);
    }

    #[test]
    fn enumeration_size_limits() {
        let law = Law::point_half();
        assert_eq!(one_step_l2(&[1.0], &law, ModelKind::Srm), Err(EquilibriumError::UnsupportedSize(1)));
        assert_eq!(one_step_l2(&vec![0.0; 65], &law, ModelKind::Srm), Err(EquilibriumError::UnsupportedSize(65)));
    }

    #[test]
    fn second_moment_examples() {
        let uni = Law::beta(1.0).unwrap();
        let v = stationary_second_moment(10, &uni).unwrap();
        assert!((v - 20.0 / 11.0).abs() < 1e-14);
        assert!((v - 2.0 * 10.0 / 11.0).abs() < 1e-14);
        assert!((stationary_second_moment_limit(&uni).unwrap() - 2.0).abs() < 1e-14);
        for n in [2usize, 5, 100] {
            assert!((stationary_second_moment(n, &Law::point_half()).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gam_limit_is_flat() {
        let mut rng = seed_stream(4, 0);
        let s = sample_stationary(ModelKind::Gam, 5, &Law::beta(1.0).unwrap(), &mut rng, None).unwrap();
        assert_eq!(s.config.energy(), &[0.2; 5]);
        assert!(!s.approximate);
    }

    #[test]
    fn dirichlet_second_moment() {
        let law = Law::beta(1.0).unwrap();
        let mut rng = seed_stream(5, 0);
        let acc: MeanVar = (0..100_000)
            .map(|_| {
                let s = sample_stationary(ModelKind::Srm, 10, &law, &mut rng, None).unwrap();
                10.0 * s.config.l2_squared()
            })
            .collect();
        assert!((acc.mean() - 20.0 / 11.0).abs() < 4.0 * acc.stderr());
    }

    #[test]
    fn sem_height_mean() {
        let law = Law::beta(1.0).unwrap();
        let mut rng = seed_stream(6, 0);
        let acc: MeanVar = (0..100_000)
            .map(|_| sample_stationary(ModelKind::Sem, 10, &law, &mut rng, None).unwrap().config.energy()[3])
            .collect();
        assert!((acc.mean() - 0.1).abs() < 4.0 * acc.stderr());
    }

    #[test]
    fn non_beta_srm_is_flagged_approximate() {
        let law = Law::new(RedistributionLaw::DiscreteSymmetric(vec![
            Atom { value: 0.2, weight: 0.5 },
            Atom { value: 0.8, weight: 0.5 },
        ]))
        .unwrap();
        let mut rng = seed_stream(7, 0);
        let s = sample_stationary(ModelKind::Srm, 6, &law, &mut rng, Some(500)).unwrap();
        assert!(s.approximate);
        assert_eq!(s.config.step_count(), 500);
        assert!((s.config.total() - 1.0).abs() < 1e-12);
    }

    use rand::Rng;
}
