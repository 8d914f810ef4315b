//! Digamma, trigamma and the standard normal CDF.
//!
//! Polygamma functions shift the argument above 6 with the recurrences
//! `ψ(x) = ψ(x+1) − 1/x`, `ψ′(x) = ψ′(x+1) + 1/x²` and then sum six terms of
//! the Bernoulli asymptotic series. Absolute error is below 1e−11 on (0, ∞).

const SHIFT: f64 = 10.0;

/// Digamma function ψ(x) for x > 0. Returns NaN otherwise.
pub fn digamma(mut x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // B2/2, B4/4, ..., B12/12
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 / x - series
}

/// Trigamma function ψ′(x) for x > 0. Returns NaN otherwise.
pub fn trigamma(mut x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < SHIFT {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B2, B4, ..., B12 over x^(2k+1)
    let series = inv2
        * inv
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0))))));
    acc + inv + 0.5 * inv2 + series
}

/// Standard normal CDF Φ(x) = erfc(−x/√2)/2.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}
