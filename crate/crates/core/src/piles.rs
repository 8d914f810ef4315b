//! Pile dynamics: the fragment-level refinement of the exchange models.
//!
//! Starting from one unit pile at `x0`, every event at `(x, y)` splits each
//! pile sitting at `x` or `y` into two children according to the model. Site
//! energies are the sums of the pile sizes at that site. Sizes are stored as
//! logarithms. Children whose log-size drops below `floor_log` are folded
//! into a per-site residual mass that itself evolves by the model's linear
//! update, so `pile mass + residual` reproduces the direct dynamics exactly.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dynamics::{ExchangeEvent, ModelKind};
use crate::stats::compensated_sum;

/// Default discard threshold for log pile sizes.
pub const DEFAULT_FLOOR_LOG: f64 = -60.0;
/// Default hard cap on the number of live piles.
pub const DEFAULT_PILE_CAP: usize = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PileError {
    #[error("site index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("at least two particles are required, got n = {0}")]
    TooFewParticles(usize),
    #[error("threshold {theta} lies below the discard floor exp({floor_log})")]
    ThresholdBelowFloor { theta: f64, floor_log: f64 },
    #[error("pile count exceeded the cap of {0}")]
    CapExceeded(usize),
}

/// A pile as stored at its site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pile {
    /// `log |ζ|`, never positive.
    pub log_size: f64,
    /// Number of updates this pile's lineage went through.
    pub updates: u32,
}

impl Pile {
    pub fn size(&self) -> f64 {
        self.log_size.exp()
    }
}

/// Threshold `θ = e^ψ / n` with `ψ = γ √(h log n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdSpec {
    pub gamma: f64,
    pub psi: f64,
    pub theta: f64,
}

impl ThresholdSpec {
    pub fn new(gamma: f64, h: f64, n: usize) -> Self {
        let psi = gamma * (h * (n as f64).ln()).sqrt();
        let theta = psi.exp() / n as f64;
        ThresholdSpec { gamma, psi, theta }
    }
}

/// Piles of one replica, grouped by site.
#[derive(Clone, Debug)]
pub struct PileSet {
    model: ModelKind,
    sites: Vec<Vec<Pile>>,
    residual: Vec<f64>,
    step: u64,
    floor_log: f64,
    cap: usize,
    count: usize,
    scratch_x: Vec<Pile>,
    scratch_y: Vec<Pile>,
}

impl PileSet {
    /// One unit pile at `x0`.
    pub fn new(model: ModelKind, n: usize, x0: usize) -> Result<Self, PileError> {
        if n < 2 {
            return Err(PileError::TooFewParticles(n));
        }
        if x0 >= n {
            return Err(PileError::IndexOutOfRange { index: x0, n });
        }
        let mut sites = vec![Vec::new(); n];
        sites[x0].push(Pile { log_size: 0.0, updates: 0 });
        Ok(PileSet {
            model,
            sites,
            residual: vec![0.0; n],
            step: 0,
            floor_log: DEFAULT_FLOOR_LOG,
            cap: DEFAULT_PILE_CAP,
            count: 1,
            scratch_x: Vec::new(),
            scratch_y: Vec::new(),
        })
    }

    /// Sets the discard threshold. Only thresholds `θ ≥ e^floor_log` can be
    /// queried afterwards.
    pub fn with_floor_log(mut self, floor_log: f64) -> Self {
        self.floor_log = floor_log;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn floor_log(&self) -> f64 {
        self.floor_log
    }

    /// Number of live piles.
    pub fn pile_count(&self) -> usize {
        self.count
    }

    /// Piles at site `x` (`A_t(x)`).
    pub fn piles_at(&self, x: usize) -> &[Pile] {
        &self.sites[x]
    }

    /// All live piles with their sites.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Pile)> {
        self.sites.iter().enumerate().flat_map(|(x, ps)| ps.iter().map(move |p| (x, p)))
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_total(&self) -> f64 {
        compensated_sum(self.residual.iter().copied())
    }

    /// Pile mass plus residual at `x`; equals `η_t(x)` of the direct dynamics.
    pub fn site_energy(&self, x: usize) -> f64 {
        compensated_sum(self.sites[x].iter().map(Pile::size)) + self.residual[x]
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n()).map(|x| self.site_energy(x)).collect()
    }

    /// Splits every pile at the event's two sites.
    pub fn apply(&mut self, ev: &ExchangeEvent) -> Result<(), PileError> {
        let n = self.n();
        for index in [ev.x, ev.y] {
            if index >= n {
                return Err(PileError::IndexOutOfRange { index, n });
            }
        }
        if ev.x == ev.y {
            return Err(PileError::IndexOutOfRange { index: ev.y, n });
        }
        self.apply_unchecked(ev)
    }

    /// Like [`PileSet::apply`] without index validation.
    pub fn apply_unchecked(&mut self, ev: &ExchangeEvent) -> Result<(), PileError> {
        let (x, y) = (ev.x, ev.y);
        self.step += 1;

        let (rx, ry) = self.model.exchange(self.residual[x], self.residual[y], ev.xval);
        self.residual[x] = rx;
        self.residual[y] = ry;

        if self.sites[x].is_empty() && self.sites[y].is_empty() {
            return Ok(());
        }

        let lx = ev.xval.ln();
        let lc = (1.0 - ev.xval).ln();
        // (log factor, destination) for the two children of a pile at x and at y.
        let (from_x, from_y) = match self.model {
            ModelKind::Srm => ([(lx, x), (lc, y)], [(lx, x), (lc, y)]),
            ModelKind::Sem => ([(lx, x), (lx, y)], [(lc, x), (lc, y)]),
            ModelKind::Gam => ([(lx, x), (lc, y)], [(lx, y), (lc, x)]),
        };

        std::mem::swap(&mut self.sites[x], &mut self.scratch_x);
        std::mem::swap(&mut self.sites[y], &mut self.scratch_y);
        let parents = self.scratch_x.len() + self.scratch_y.len();
        self.count -= parents;

        let mut xs = std::mem::take(&mut self.scratch_x);
        let mut ys = std::mem::take(&mut self.scratch_y);
        for (list, rule) in [(&xs, from_x), (&ys, from_y)] {
            for p in list.iter() {
                let updates = p.updates.saturating_add(1);
                for (factor, dest) in rule {
                    let log_size = p.log_size + factor;
                    if log_size >= self.floor_log {
                        self.sites[dest].push(Pile { log_size, updates });
                        self.count += 1;
                    } else {
                        self.residual[dest] += log_size.exp();
                    }
                }
            }
        }
        xs.clear();
        ys.clear();
        self.scratch_x = xs;
        self.scratch_y = ys;

        if self.count > self.cap {
            return Err(PileError::CapExceeded(self.cap));
        }
        Ok(())
    }

    fn check_theta(&self, theta: f64) -> Result<(), PileError> {
        if theta > 0.0 && theta.ln() < self.floor_log {
            return Err(PileError::ThresholdBelowFloor { theta, floor_log: self.floor_log });
        }
        Ok(())
    }

    /// `‖η^θ‖₁`: total size of piles with `|ζ| ≥ θ`. For `θ = 0` this is the
    /// whole mass including the residual.
    pub fn threshold_mass(&self, theta: f64) -> Result<f64, PileError> {
        self.check_theta(theta)?;
        if theta <= 0.0 {
            let piles = compensated_sum(self.iter().map(|(_, p)| p.size()));
            return Ok(piles + self.residual_total());
        }
        let lt = theta.ln();
        Ok(compensated_sum(
            self.iter().filter(|(_, p)| p.log_size >= lt).map(|(_, p)| p.size()),
        ))
    }

    /// [`PileSet::threshold_mass`] for several thresholds in one pass over the piles.
    pub fn threshold_masses(&self, thetas: &[f64]) -> Result<Vec<f64>, PileError> {
        for &t in thetas {
            self.check_theta(t)?;
        }
        let logs: Vec<f64> = thetas.iter().map(|t| if *t > 0.0 { t.ln() } else { f64::NEG_INFINITY }).collect();
        let mut sums = vec![0.0; thetas.len()];
        for (_, p) in self.iter() {
            let s = p.size();
            for (acc, &lt) in sums.iter_mut().zip(&logs) {
                if p.log_size >= lt {
                    *acc += s;
                }
            }
        }
        let residual = self.residual_total();
        for (acc, &t) in sums.iter_mut().zip(thetas) {
            if t <= 0.0 {
                *acc += residual;
            }
        }
        Ok(sums)
    }

    /// Histogram `s ↦ |A_{s,t}|` of update counts over live piles.
    /// Piles folded into the residual are not counted.
    pub fn counts_by_updates(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for (_, p) in self.iter() {
            *out.entry(p.updates).or_insert(0) += 1;
        }
        out
    }
}

/// Entry point matching the other modules' naming.
pub fn pile_init(model: ModelKind, n: usize, x0: usize) -> Result<PileSet, PileError> {
    PileSet::new(model, n, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{draw_event, Configuration};
    use crate::laws::Law;
    use crate::rng::seed_stream;

    fn ev(x: usize, y: usize, xval: f64) -> ExchangeEvent {
        ExchangeEvent { x, y, xval }
    }

    #[test]
    fn init_single_pile() {
        let ps = pile_init(ModelKind::Srm, 10, 3).unwrap();
        assert_eq!(ps.pile_count(), 1);
        assert_eq!(ps.piles_at(3), &[Pile { log_size: 0.0, updates: 0 }]);
        assert_eq!(ps.energies(), Configuration::dirac(ModelKind::Srm, 10, 3).unwrap().energy());
        assert_eq!(ps.counts_by_updates(), BTreeMap::from([(0, 1)]));
        assert!(pile_init(ModelKind::Srm, 10, 10).is_err());
        assert!(pile_init(ModelKind::Srm, 1, 0).is_err());
    }

    #[test]
    fn srm_split() {
        let mut ps = pile_init(ModelKind::Srm, 4, 0).unwrap();
        ps.apply(&ev(0, 2, 0.25)).unwrap();
        assert!((ps.piles_at(0)[0].size() - 0.25).abs() < 1e-15);
        assert!((ps.piles_at(2)[0].size() - 0.75).abs() < 1e-15);
        assert_eq!(ps.piles_at(2)[0].updates, 1);
    }

    #[test]
    fn sem_split_duplicates_mass() {
        let mut ps = pile_init(ModelKind::Sem, 4, 1).unwrap();
        ps.apply(&ev(1, 0, 0.3)).unwrap();
        assert!((ps.piles_at(1)[0].size() - 0.3).abs() < 1e-15);
        assert!((ps.piles_at(0)[0].size() - 0.3).abs() < 1e-15);
        assert!((ps.threshold_mass(0.0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn gam_split_from_y() {
        let mut ps = pile_init(ModelKind::Gam, 3, 2).unwrap();
        ps.apply(&ev(0, 2, 0.25)).unwrap();
        // A pile at y keeps X·p at y and sends (1−X)·p to x.
        assert!((ps.piles_at(2)[0].size() - 0.25).abs() < 1e-15);
        assert!((ps.piles_at(0)[0].size() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pile_count_doubles_at_event_sites() {
        let law = Law::beta(1.0).unwrap();
        for model in ModelKind::ALL {
            let mut rng = seed_stream(1, model as u64);
            let mut ps = pile_init(model, 5, 0).unwrap();
            for _ in 0..40 {
                let e = draw_event(5, &law, &mut rng);
                let before = ps.piles_at(e.x).len() + ps.piles_at(e.y).len();
                let others = ps.pile_count() - before;
                ps.apply(&e).unwrap();
                assert_eq!(ps.pile_count(), others + 2 * before);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let ps = pile_init(ModelKind::Gam, 4, 0).unwrap();
        assert_eq!(ps.threshold_mass(0.5).unwrap(), 1.0);
        assert_eq!(ps.threshold_mass(1.0).unwrap(), 1.0);
        assert_eq!(ps.threshold_mass(0.0).unwrap(), 1.0);
        let ps = ps.with_floor_log(-5.0);
        assert!(matches!(ps.threshold_mass(1e-3), Err(PileError::ThresholdBelowFloor { .. })));
        assert!(ps.threshold_mass((-5.0f64).exp()).is_ok());
        let many = ps.threshold_masses(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(many, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn reconstruction_with_aggressive_floor() {
        let law = Law::beta(0.5).unwrap();
        for model in ModelKind::ALL {
            let mut rng = seed_stream(2, model as u64);
            let mut ps = pile_init(model, 8, 0).unwrap().with_floor_log(-3.0);
            let mut c = Configuration::dirac(model, 8, 0).unwrap();
            for _ in 0..500 {
                let e = draw_event(8, &law, &mut rng);
                ps.apply(&e).unwrap();
                c.apply(&e).unwrap();
                for (a, b) in ps.energies().iter().zip(c.energy()) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
            assert!(ps.residual_total() > 0.0);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let law = Law::point_half();
        let mut rng = seed_stream(3, 0);
        let mut ps = pile_init(ModelKind::Srm, 2, 0).unwrap().with_cap(100);
        let mut hit = false;
        for _ in 0..20 {
            if let Err(e) = ps.apply(&draw_event(2, &law, &mut rng)) {
                assert_eq!(e, PileError::CapExceeded(100));
                hit = true;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn threshold_spec_relations() {
        let spec = ThresholdSpec::new(0.3, 0.5, 1024);
        assert!((spec.psi - 0.3 * (0.5 * 1024f64.ln()).sqrt()).abs() < 1e-12);
        assert!((spec.theta / (spec.psi.exp() / 1024.0) - 1.0).abs() < 1e-12);
    }
}
