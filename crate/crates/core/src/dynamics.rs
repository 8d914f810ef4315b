//! Pairwise exchange dynamics (SRM, SEM, GAM) on energy configurations.
//!
//! Every step picks an ordered pair `(x, y)` of distinct sites uniformly and
//! a fraction `X` from the law, then rewrites `η(x)` and `η(y)`:
//!
//! * SRM: `(X(η(x)+η(y)), (1−X)(η(x)+η(y)))`
//! * SEM: both become `Xη(x) + (1−X)η(y)`
//! * GAM: `(Xη(x) + (1−X)η(y), (1−X)η(x) + Xη(y))`
//!
//! Equivalently `η ← η M` for a random matrix `M` that is the identity outside
//! the `(x, y)` block; [`matrix_of`] builds it densely for cross-checks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laws::Law;
use crate::stats::compensated_sum;

/// Largest `n` for which dense exchange matrices are built.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("site index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("at least two particles are required, got n = {0}")]
    TooFewParticles(usize),
    #[error("dense exchange matrices are limited to n <= {DENSE_LIMIT}, got {0}")]
    UnsupportedSize(usize),
    #[error("energies must be finite and nonnegative")]
    NegativeEnergy,
    #[error("unknown model `{0}` (expected srm, sem or gam)")]
    UnknownModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Srm,
    Sem,
    Gam,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Srm, ModelKind::Sem, ModelKind::Gam];

    /// Whether total energy is conserved (SRM and GAM).
    pub fn conserves_mass(self) -> bool {
        !matches!(self, ModelKind::Sem)
    }

    /// New values of `(η(x), η(y))`.
    #[inline(always)]
    pub fn exchange(self, ex: f64, ey: f64, xval: f64) -> (f64, f64) {
        let c = 1.0 - xval;
        match self {
            ModelKind::Srm => {
                let s = ex + ey;
                (xval * s, c * s)
            }
            ModelKind::Sem => {
                let v = xval * ex + c * ey;
                (v, v)
            }
            ModelKind::Gam => (xval * ex + c * ey, c * ex + xval * ey),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Srm => "srm",
            ModelKind::Sem => "sem",
            ModelKind::Gam => "gam",
        })
    }
}

impl FromStr for ModelKind {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "srm" => Ok(ModelKind::Srm),
            "sem" => Ok(ModelKind::Sem),
            "gam" => Ok(ModelKind::Gam),
            other => Err(DynamicsError::UnknownModel(other.to_string())),
        }
    }
}

/// One exchange: ordered pair `(x, y)`, `x ≠ y`, and the realized fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExchangeEvent {
    pub x: usize,
    pub y: usize,
    pub xval: f64,
}

impl ExchangeEvent {
    pub fn check(&self, n: usize) -> Result<(), DynamicsError> {
        for index in [self.x, self.y] {
            if index >= n {
                return Err(DynamicsError::IndexOutOfRange { index, n });
            }
        }
        if self.x == self.y {
            return Err(DynamicsError::IndexOutOfRange { index: self.y, n });
        }
        Ok(())
    }

    /// Relabels both sites by `perm`.
    pub fn relabel(&self, perm: &[usize]) -> ExchangeEvent {
        ExchangeEvent { x: perm[self.x], y: perm[self.y], xval: self.xval }
    }
}

/// Uniform ordered pair of distinct sites plus an independent draw of `X`.
#[inline]
pub fn draw_event<R: Rng + ?Sized>(n: usize, law: &Law, rng: &mut R) -> ExchangeEvent {
    debug_assert!(n >= 2);
    let x = rng.random_range(0..n);
    let mut y = rng.random_range(0..n - 1);
    if y >= x {
        y += 1;
    }
    let xval = law.sample(rng);
    ExchangeEvent { x, y, xval }
}

/// An energy vector evolving under one model.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    model: ModelKind,
    energy: Vec<f64>,
    step: u64,
}

impl Configuration {
    pub fn new(model: ModelKind, energy: Vec<f64>) -> Result<Self, DynamicsError> {
        if energy.len() < 2 {
            return Err(DynamicsError::TooFewParticles(energy.len()));
        }
        if energy.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(DynamicsError::NegativeEnergy);
        }
        Ok(Configuration { model, energy, step: 0 })
    }

    /// Unit mass at `x0`.
    pub fn dirac(model: ModelKind, n: usize, x0: usize) -> Result<Self, DynamicsError> {
        if n < 2 {
            return Err(DynamicsError::TooFewParticles(n));
        }
        if x0 >= n {
            return Err(DynamicsError::IndexOutOfRange { index: x0, n });
        }
        let mut energy = vec![0.0; n];
        energy[x0] = 1.0;
        Ok(Configuration { model, energy, step: 0 })
    }

    /// The flat vector `1/n`.
    pub fn flat(model: ModelKind, n: usize) -> Result<Self, DynamicsError> {
        Self::flat_at(model, n, 1.0 / n as f64)
    }

    pub fn flat_at(model: ModelKind, n: usize, height: f64) -> Result<Self, DynamicsError> {
        Configuration::new(model, vec![height; n])
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn n(&self) -> usize {
        self.energy.len()
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one event in place.
    pub fn apply(&mut self, ev: &ExchangeEvent) -> Result<(), DynamicsError> {
        ev.check(self.n())?;
        self.apply_unchecked(ev);
        Ok(())
    }

    /// Applies an event already known to be valid for this `n`.
    #[inline(always)]
    pub fn apply_unchecked(&mut self, ev: &ExchangeEvent) {
        let (a, b) = self.model.exchange(self.energy[ev.x], self.energy[ev.y], ev.xval);
        self.energy[ev.x] = a;
        self.energy[ev.y] = b;
        self.step += 1;
    }

    /// Returns the configuration after one event.
    pub fn step(&self, ev: &ExchangeEvent) -> Result<Configuration, DynamicsError> {
        let mut next = self.clone();
        next.apply(ev)?;
        Ok(next)
    }

    /// Applies `steps` i.i.d. events.
    pub fn run<R: Rng + ?Sized>(&mut self, law: &Law, steps: u64, rng: &mut R) {
        let n = self.n();
        for _ in 0..steps {
            let ev = draw_event(n, law, rng);
            self.apply_unchecked(&ev);
        }
    }

    /// Total energy (compensated).
    pub fn total(&self) -> f64 {
        compensated_sum(self.energy.iter().copied())
    }

    /// `⟨η⟩ = (1/n) Σ η(x)`.
    pub fn average(&self) -> f64 {
        self.total() / self.n() as f64
    }

    pub fn max_entry(&self) -> f64 {
        self.energy.iter().copied().fold(0.0, f64::max)
    }

    /// `‖η‖₂²`.
    pub fn l2_squared(&self) -> f64 {
        compensated_sum(self.energy.iter().map(|e| e * e))
    }

    /// Relabels sites: entry `x` moves to `perm[x]`.
    pub fn relabel(&self, perm: &[usize]) -> Configuration {
        let mut energy = vec![0.0; self.n()];
        for (x, &e) in self.energy.iter().enumerate() {
            energy[perm[x]] = e;
        }
        Configuration { model: self.model, energy, step: self.step }
    }

    /// Replaces every entry by the average (used to flatten SEM at horizon).
    pub fn flattened(&self) -> Configuration {
        let avg = self.average();
        Configuration { model: self.model, energy: vec![avg; self.n()], step: self.step }
    }
}

/// Which 2×2 block a dense exchange matrix carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// `r = [[X, 1−X], [X, 1−X]]` (SRM).
    R,
    /// `rᵀ` (SEM).
    RTranspose,
    /// `q = [[X, 1−X], [1−X, X]]` (GAM).
    Q,
}

impl From<ModelKind> for MatrixKind {
    fn from(m: ModelKind) -> Self {
        match m {
            ModelKind::Srm => MatrixKind::R,
            ModelKind::Sem => MatrixKind::RTranspose,
            ModelKind::Gam => MatrixKind::Q,
        }
    }
}

/// Dense `n × n` exchange matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeMatrix {
    n: usize,
    kind: MatrixKind,
    data: Vec<f64>,
}

impl ExchangeMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    /// Row vector times matrix: `v M`.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|col| (0..self.n).map(|row| v[row] * self.get(row, col)).sum())
            .collect()
    }
}

/// Dense matrix whose left action on a row vector reproduces one step.
pub fn matrix_of(ev: &ExchangeEvent, n: usize, model: ModelKind) -> Result<ExchangeMatrix, DynamicsError> {
    if n > DENSE_LIMIT {
        return Err(DynamicsError::UnsupportedSize(n));
    }
    ev.check(n)?;
    let kind = MatrixKind::from(model);
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    let (p, c) = (ev.xval, 1.0 - ev.xval);
    let block = match kind {
        MatrixKind::R => [[p, c], [p, c]],
        MatrixKind::RTranspose => [[p, p], [c, c]],
        MatrixKind::Q => [[p, c], [c, p]],
    };
    let idx = [ev.x, ev.y];
    for (bi, &row) in idx.iter().enumerate() {
        for (bj, &col) in idx.iter().enumerate() {
            data[row * n + col] = block[bi][bj];
        }
    }
    Ok(ExchangeMatrix { n, kind, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use rand::Rng;

    fn ev(x: usize, y: usize, xval: f64) -> ExchangeEvent {
        ExchangeEvent { x, y, xval }
    }

    #[test]
    fn dirac_examples() {
        assert_eq!(Configuration::dirac(ModelKind::Srm, 3, 0).unwrap().energy(), &[1.0, 0.0, 0.0]);
        assert_eq!(Configuration::dirac(ModelKind::Srm, 1, 0), Err(DynamicsError::TooFewParticles(1)));
        assert_eq!(Configuration::dirac(ModelKind::Gam, 5, 4).unwrap().energy(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            Configuration::dirac(ModelKind::Gam, 5, 5),
            Err(DynamicsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn step_examples() {
        let c = Configuration::new(ModelKind::Srm, vec![0.4, 0.6]).unwrap();
        let next = c.step(&ev(0, 1, 0.25)).unwrap();
        assert!((next.energy()[0] - 0.25).abs() < 1e-15 && (next.energy()[1] - 0.75).abs() < 1e-15);
        assert_eq!(next.step_count(), 1);

        let c = Configuration::dirac(ModelKind::Sem, 2, 0).unwrap();
        let next = c.step(&ev(0, 1, 0.3)).unwrap();
        assert_eq!(next.energy(), &[0.3, 0.3]);

        let c = Configuration::new(ModelKind::Gam, vec![0.1, 0.2, 0.7]).unwrap();
        let next = c.step(&ev(2, 0, 0.5)).unwrap();
        assert!((next.energy()[0] - 0.4).abs() < 1e-15 && (next.energy()[2] - 0.4).abs() < 1e-15);
        assert_eq!(next.energy()[1], 0.2);

        assert!(c.step(&ev(0, 3, 0.5)).is_err());
        assert!(c.step(&ev(1, 1, 0.5)).is_err());
    }

    #[test]
    fn pair_frequencies_n3() {
        let law = Law::point_half();
        let mut rng = seed_stream(5, 0);
        let draws = 1_000_000;
        let mut counts = [[0u64; 3]; 3];
        for _ in 0..draws {
            let e = draw_event(3, &law, &mut rng);
            assert_ne!(e.x, e.y);
            counts[e.x][e.y] += 1;
        }
        let p = 1.0 / 6.0;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    let f = counts[x][y] as f64 / draws as f64;
                    assert!((f - p).abs() < 4.0 * se, "({x},{y}) freq {f}");
                }
            }
        }
    }

    #[test]
    fn pair_chi_square_n2() {
        let law = Law::point_half();
        let mut rng = seed_stream(6, 0);
        let draws = 100_000;
        let forward = (0..draws).filter(|_| draw_event(2, &law, &mut rng).x == 0).count() as f64;
        let expected = draws as f64 / 2.0;
        let chi2 = 2.0 * (forward - expected).powi(2) / expected;
        // 99.9% quantile of chi-square with one degree of freedom.
        assert!(chi2 < 10.828, "chi2 = {chi2}");
    }

    #[test]
    fn run_zero_steps_is_identity() {
        let law = Law::beta(1.0).unwrap();
        let mut rng = seed_stream(7, 0);
        let mut c = Configuration::dirac(ModelKind::Srm, 10, 3).unwrap();
        let before = c.clone();
        c.run(&law, 0, &mut rng);
        assert_eq!(c, before);
    }

    #[test]
    fn conservation_and_max_principle() {
        let law = Law::beta(0.5).unwrap();
        for model in ModelKind::ALL {
            let mut rng = seed_stream(8, model as u64);
            let mut c = Configuration::dirac(model, 50, 0).unwrap();
            for _ in 0..100 {
                c.run(&law, 10_000, &mut rng);
                assert!(c.energy().iter().all(|&e| e >= 0.0));
                if model.conserves_mass() {
                    assert!((c.total() - 1.0).abs() < 1e-9);
                    assert!((c.average() - 1.0 / 50.0).abs() < 1e-12);
                } else {
                    assert!(c.max_entry() <= 1.0);
                }
            }
            assert_eq!(c.step_count(), 1_000_000);
        }
    }

    #[test]
    fn average_examples() {
        assert_eq!(Configuration::dirac(ModelKind::Srm, 4, 0).unwrap().average(), 0.25);
        let flat = Configuration::flat(ModelKind::Srm, 7).unwrap();
        assert!((flat.average() - 1.0 / 7.0).abs() < 1e-16);
    }

    #[test]
    fn matrix_examples() {
        let m = matrix_of(&ev(0, 1, 0.25), 2, ModelKind::Srm).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.75]);
        assert_eq!(m.row(1), &[0.25, 0.75]);
        let m = matrix_of(&ev(0, 1, 0.25), 2, ModelKind::Gam).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.75]);
        assert_eq!(m.row(1), &[0.75, 0.25]);
        let m = matrix_of(&ev(0, 1, 0.25), 2, ModelKind::Sem).unwrap();
        assert_eq!(m.row(0), &[0.25, 0.25]);
        assert_eq!(m.kind(), MatrixKind::RTranspose);
        assert_eq!(matrix_of(&ev(0, 1, 0.5), 65, ModelKind::Srm), Err(DynamicsError::UnsupportedSize(65)));
    }

    #[test]
    fn matrix_reproduces_step() {
        let law = Law::beta(2.0).unwrap();
        let mut rng = seed_stream(9, 0);
        for _ in 0..100 {
            let n = rng.random_range(2..=12);
            let energy: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let e = draw_event(n, &law, &mut rng);
            for model in ModelKind::ALL {
                let c = Configuration::new(model, energy.clone()).unwrap();
                let direct = c.step(&e).unwrap();
                let via = matrix_of(&e, n, model).unwrap().left_apply(&energy);
                for (a, b) in direct.energy().iter().zip(&via) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn row_sums_of_r_and_q_are_one() {
        let m = matrix_of(&ev(3, 1, 0.3), 6, ModelKind::Srm).unwrap();
        let q = matrix_of(&ev(3, 1, 0.3), 6, ModelKind::Gam).unwrap();
        for row in 0..6 {
            assert!((m.row(row).iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!((q.row(row).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn point_half_collapses_the_three_models() {
        let law = Law::point_half();
        let mut rng = seed_stream(10, 0);
        let events: Vec<_> = (0..2000).map(|_| draw_event(9, &law, &mut rng)).collect();
        let mut cs: Vec<_> = ModelKind::ALL
            .iter()
            .map(|&m| Configuration::dirac(m, 9, 2).unwrap())
            .collect();
        for e in &events {
            for c in &mut cs {
                c.apply(e).unwrap();
            }
            assert_eq!(cs[0].energy(), cs[1].energy());
            assert_eq!(cs[0].energy(), cs[2].energy());
        }
    }

    #[test]
    fn model_parse() {
        assert_eq!("SRM".parse::<ModelKind>().unwrap(), ModelKind::Srm);
        assert!("kac".parse::<ModelKind>().is_err());
        for m in ModelKind::ALL {
            assert_eq!(m.to_string().parse::<ModelKind>().unwrap(), m);
        }
    }
}
