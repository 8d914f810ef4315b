//! Redistribution laws: validation, sampling of `X` and of its size-biased
//! version `X̂`, moments and entropic constants.
//!
//! `X̂` has CDF `P(X̂ ≤ s) = 2E[X 1{X ≤ s}]`. The entropic constants are
//! `h = E[−log X̂] = E[−2X log X]`, `s² = Var(log X̂)` and `r = s/h`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{digamma, trigamma};
use crate::stats::MeanVar;

/// Tolerance for weight sums and reflection matching of discrete atoms.
pub const ATOM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("law is not symmetric under x -> 1 - x: {0}")]
    AsymmetricLaw(String),
    #[error("law puts all of its mass on {{0, 1}}")]
    DegenerateLaw,
    #[error("invalid law parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse law spec `{0}` (expected point-half, beta:A, two-point:A or discrete:x,w;...)")]
    Parse(String),
}

/// One atom of a discrete law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// The law of the redistribution fraction `X` on [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RedistributionLaw {
    /// `X ≡ 1/2`.
    PointHalf,
    /// `X ~ Beta(α, α)`.
    BetaSymmetric { alpha: f64 },
    /// `X ∈ {a, 1 − a}` with probability 1/2 each.
    TwoPoint { a: f64 },
    /// Finite law closed under `x ↦ 1 − x`.
    DiscreteSymmetric(Vec<Atom>),
}

impl RedistributionLaw {
    /// Checks symmetry, non-degeneracy and parameter ranges.
    pub fn validate(&self) -> Result<(), LawError> {
        match self {
            RedistributionLaw::PointHalf => Ok(()),
            RedistributionLaw::BetaSymmetric { alpha } => {
                if alpha.is_finite() && *alpha > 0.0 {
                    Ok(())
                } else {
                    Err(LawError::InvalidParameter(format!("beta alpha must be > 0, got {alpha}")))
                }
            }
            RedistributionLaw::TwoPoint { a } => {
                if *a > 0.0 && *a < 1.0 {
                    Ok(())
                } else {
                    Err(LawError::InvalidParameter(format!("two-point a must lie in (0,1), got {a}")))
                }
            }
            RedistributionLaw::DiscreteSymmetric(atoms) => validate_atoms(atoms).map(|_| ()),
        }
    }

    /// Atoms of a finite law (merged and sorted), `None` for Beta laws.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match self {
            RedistributionLaw::PointHalf => Some(vec![Atom { value: 0.5, weight: 1.0 }]),
            RedistributionLaw::BetaSymmetric { .. } => None,
            RedistributionLaw::TwoPoint { a } => {
                if (a - 0.5).abs() <= ATOM_TOLERANCE {
                    Some(vec![Atom { value: 0.5, weight: 1.0 }])
                } else {
                    let lo = a.min(1.0 - a);
                    Some(vec![Atom { value: lo, weight: 0.5 }, Atom { value: 1.0 - lo, weight: 0.5 }])
                }
            }
            RedistributionLaw::DiscreteSymmetric(atoms) => Some(merge_atoms(atoms)),
        }
    }

    /// `E[X²]`.
    pub fn second_moment(&self) -> f64 {
        match self {
            RedistributionLaw::BetaSymmetric { alpha } => (alpha + 1.0) / (2.0 * (2.0 * alpha + 1.0)),
            _ => self
                .atoms()
                .expect("finite law")
                .iter()
                .map(|a| a.weight * a.value * a.value)
                .sum(),
        }
    }

    /// `E[X]`; 1/2 for every symmetric law, computed from the atoms when finite.
    pub fn mean(&self) -> f64 {
        match self {
            RedistributionLaw::BetaSymmetric { .. } => 0.5,
            _ => self.atoms().expect("finite law").iter().map(|a| a.weight * a.value).sum(),
        }
    }
}

fn merge_atoms(atoms: &[Atom]) -> Vec<Atom> {
    let mut sorted: Vec<Atom> = atoms.iter().copied().filter(|a| a.weight > 0.0).collect();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut merged: Vec<Atom> = Vec::with_capacity(sorted.len());
    for a in sorted {
        match merged.last_mut() {
            Some(last) if (a.value - last.value).abs() <= ATOM_TOLERANCE => last.weight += a.weight,
            _ => merged.push(a),
        }
    }
    merged
}

fn validate_atoms(atoms: &[Atom]) -> Result<Vec<Atom>, LawError> {
    if atoms.is_empty() {
        return Err(LawError::InvalidParameter("discrete law without atoms".into()));
    }
    for a in atoms {
        if !(0.0..=1.0).contains(&a.value) || !a.value.is_finite() {
            return Err(LawError::InvalidParameter(format!("atom value {} outside [0,1]", a.value)));
        }
        if !(a.weight >= 0.0) || !a.weight.is_finite() {
            return Err(LawError::InvalidParameter(format!("negative atom weight {}", a.weight)));
        }
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > ATOM_TOLERANCE {
        return Err(LawError::InvalidParameter(format!("weights sum to {total}, not 1")));
    }
    let merged = merge_atoms(atoms);
    for a in &merged {
        let mirror: f64 = merged
            .iter()
            .filter(|b| (b.value - (1.0 - a.value)).abs() <= ATOM_TOLERANCE)
            .map(|b| b.weight)
            .sum();
        if (mirror - a.weight).abs() > ATOM_TOLERANCE {
            return Err(LawError::AsymmetricLaw(format!(
                "atom {} has weight {} but its reflection {} has weight {}",
                a.value,
                a.weight,
                1.0 - a.value,
                mirror
            )));
        }
    }
    let interior: f64 = merged
        .iter()
        .filter(|a| a.value > ATOM_TOLERANCE && a.value < 1.0 - ATOM_TOLERANCE)
        .map(|a| a.weight)
        .sum();
    if interior <= 0.0 {
        return Err(LawError::DegenerateLaw);
    }
    Ok(merged)
}

/// Validation entry point: returns the law iff both assumptions hold.
pub fn validate(law: RedistributionLaw) -> Result<RedistributionLaw, LawError> {
    law.validate()?;
    Ok(law)
}

impl fmt::Display for RedistributionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedistributionLaw::PointHalf => write!(f, "point-half"),
            RedistributionLaw::BetaSymmetric { alpha } => write!(f, "beta:{alpha}"),
            RedistributionLaw::TwoPoint { a } => write!(f, "two-point:{a}"),
            RedistributionLaw::DiscreteSymmetric(atoms) => {
                write!(f, "discrete:")?;
                for (i, a) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{},{}", a.value, a.weight)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for RedistributionLaw {
    type Err = LawError;

    /// Parses `point-half`, `beta:ALPHA`, `two-point:A`, `discrete:x1,w1;x2,w2;...`.
    /// The result is not yet validated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || LawError::Parse(s.to_string());
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        if s == "point-half" {
            return Ok(RedistributionLaw::PointHalf);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "beta" => Ok(RedistributionLaw::BetaSymmetric { alpha: num(rest)? }),
            "two-point" => Ok(RedistributionLaw::TwoPoint { a: num(rest)? }),
            "discrete" => {
                let mut atoms = Vec::new();
                for pair in rest.split(';').filter(|p| !p.trim().is_empty()) {
                    let (v, w) = pair.split_once(',').ok_or_else(bad)?;
                    atoms.push(Atom { value: num(v)?, weight: num(w)? });
                }
                Ok(RedistributionLaw::DiscreteSymmetric(atoms))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug)]
enum Sampler {
    Half,
    Beta {
        /// Gamma(α): numerator of X, and both halves of X.
        g_alpha: Gamma<f64>,
        /// Gamma(α + 1): numerator of X̂ ~ Beta(α+1, α).
        g_alpha1: Gamma<f64>,
    },
    Finite {
        values: Vec<f64>,
        cdf: Vec<f64>,
        biased_cdf: Vec<f64>,
    },
}

/// A validated law with its sampling tables. Immutable and shareable.
#[derive(Clone, Debug)]
pub struct Law {
    spec: RedistributionLaw,
    sampler: Sampler,
    ex2: f64,
}

impl Law {
    pub fn new(spec: RedistributionLaw) -> Result<Law, LawError> {
        spec.validate()?;
        let sampler = match &spec {
            RedistributionLaw::PointHalf => Sampler::Half,
            RedistributionLaw::BetaSymmetric { alpha } => Sampler::Beta {
                g_alpha: Gamma::new(*alpha, 1.0)
                    .map_err(|e| LawError::InvalidParameter(e.to_string()))?,
                g_alpha1: Gamma::new(alpha + 1.0, 1.0)
                    .map_err(|e| LawError::InvalidParameter(e.to_string()))?,
            },
            _ => {
                let atoms = spec.atoms().expect("finite law");
                if atoms.len() == 1 {
                    Sampler::Half
                } else {
                    let values: Vec<f64> = atoms.iter().map(|a| a.value).collect();
                    let cdf = cumulative(atoms.iter().map(|a| a.weight));
                    let biased_cdf = cumulative(atoms.iter().map(|a| 2.0 * a.value * a.weight));
                    Sampler::Finite { values, cdf, biased_cdf }
                }
            }
        };
        let ex2 = spec.second_moment();
        Ok(Law { spec, sampler, ex2 })
    }

    pub fn point_half() -> Law {
        Law::new(RedistributionLaw::PointHalf).expect("valid")
    }

    pub fn beta(alpha: f64) -> Result<Law, LawError> {
        Law::new(RedistributionLaw::BetaSymmetric { alpha })
    }

    pub fn two_point(a: f64) -> Result<Law, LawError> {
        Law::new(RedistributionLaw::TwoPoint { a })
    }

    pub fn spec(&self) -> &RedistributionLaw {
        &self.spec
    }

    /// `E[X²]`, in [1/4, 1/2).
    pub fn ex2(&self) -> f64 {
        self.ex2
    }

    /// True when `X ≡ 1/2` (including a two-point law at 1/2).
    pub fn is_point_half(&self) -> bool {
        matches!(self.sampler, Sampler::Half)
    }

    /// Draws `X`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Half => 0.5,
            Sampler::Beta { g_alpha, .. } => {
                let a = g_alpha.sample(rng);
                let b = g_alpha.sample(rng);
                beta_ratio(a, b)
            }
            Sampler::Finite { values, cdf, .. } => values[pick(cdf, rng)],
        }
    }

    /// Draws the size-biased `X̂`.
    #[inline]
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Half => 0.5,
            Sampler::Beta { g_alpha, g_alpha1 } => {
                let a = g_alpha1.sample(rng);
                let b = g_alpha.sample(rng);
                beta_ratio(a, b)
            }
            Sampler::Finite { values, biased_cdf, .. } => values[pick(biased_cdf, rng)],
        }
    }

    /// Finite support of `log X̂` as `(log value, probability)`, skipping
    /// atoms at 0 (they carry no size-biased weight). `None` for Beta laws.
    pub fn size_biased_log_atoms(&self) -> Option<Vec<(f64, f64)>> {
        let atoms = self.spec.atoms()?;
        Some(
            atoms
                .iter()
                .filter(|a| a.value > 0.0)
                .map(|a| (a.value.ln(), 2.0 * a.value * a.weight))
                .collect(),
        )
    }
}

#[inline]
fn beta_ratio(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s > 0.0 {
        a / s
    } else {
        // Both gammas underflowed (tiny α); the ratio is a fair coin.
        if a.to_bits() >= b.to_bits() {
            1.0
        } else {
            0.0
        }
    }
}

fn cumulative<I: Iterator<Item = f64>>(weights: I) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let total = acc;
    for c in &mut out {
        *c /= total;
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

#[inline]
fn pick<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// How a set of entropic constants was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstantsMethod {
    Analytic,
    MonteCarlo { samples: u64, h_stderr: f64, s2_stderr: f64 },
}

/// `h`, `s²`, `r` and `E[X²]` of a law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropicConstants {
    pub h: f64,
    pub s2: f64,
    pub r: f64,
    pub ex2: f64,
    pub method: ConstantsMethod,
}

impl EntropicConstants {
    fn from_h_s2(h: f64, s2: f64, ex2: f64, method: ConstantsMethod) -> Self {
        let s2 = s2.max(0.0);
        EntropicConstants { h, s2, r: s2.sqrt() / h, ex2, method }
    }
}

/// Closed-form entropic constants. Every law of the closed menu has one:
/// digamma/trigamma for Beta, finite sums for atoms.
pub fn analytic_constants(law: &Law) -> EntropicConstants {
    let ex2 = law.ex2();
    match law.spec() {
        RedistributionLaw::BetaSymmetric { alpha } => {
            let h = digamma(2.0 * alpha + 1.0) - digamma(alpha + 1.0);
            let s2 = trigamma(alpha + 1.0) - trigamma(2.0 * alpha + 1.0);
            EntropicConstants::from_h_s2(h, s2, ex2, ConstantsMethod::Analytic)
        }
        _ if law.is_point_half() => EntropicConstants {
            h: std::f64::consts::LN_2,
            s2: 0.0,
            r: 0.0,
            ex2,
            method: ConstantsMethod::Analytic,
        },
        _ => {
            let atoms = law.size_biased_log_atoms().expect("finite law");
            let h: f64 = -atoms.iter().map(|(l, p)| p * l).sum::<f64>();
            let s2: f64 = atoms.iter().map(|(l, p)| p * (l + h) * (l + h)).sum();
            EntropicConstants::from_h_s2(h, s2, ex2, ConstantsMethod::Analytic)
        }
    }
}

/// Monte Carlo entropic constants from `samples` draws of `X̂`, with
/// standard errors for `h` and `s²`.
pub fn monte_carlo_constants<R: Rng + ?Sized>(law: &Law, samples: u64, rng: &mut R) -> EntropicConstants {
    let logs: Vec<f64> = (0..samples).map(|_| law.sample_size_biased(rng).ln()).collect();
    let acc: MeanVar = logs.iter().copied().collect();
    let h = -acc.mean();
    let (s2, s2_se) = crate::stats::variance_with_stderr(&logs);
    EntropicConstants::from_h_s2(
        h,
        s2,
        law.ex2(),
        ConstantsMethod::MonteCarlo { samples, h_stderr: acc.stderr(), s2_stderr: s2_se },
    )
}

/// Entropic constants: Monte Carlo when a budget is given, analytic otherwise.
pub fn entropic_constants<R: Rng + ?Sized>(law: &Law, mc_budget: Option<u64>, rng: &mut R) -> EntropicConstants {
    match mc_budget {
        Some(samples) => monte_carlo_constants(law, samples, rng),
        None => analytic_constants(law),
    }
}

/// `h` estimated as `E[−2X log X]` from plain draws of `X`; returns (mean, SE).
pub fn entropy_from_plain_samples<R: Rng + ?Sized>(law: &Law, samples: u64, rng: &mut R) -> (f64, f64) {
    let acc: MeanVar = (0..samples)
        .map(|_| {
            let x = law.sample(rng);
            if x > 0.0 {
                -2.0 * x * x.ln()
            } else {
                0.0
            }
        })
        .collect();
    (acc.mean(), acc.stderr())
}
