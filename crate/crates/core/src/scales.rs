//! Schedule functions and the series evaluators around the critical constant.
//!
//! All logarithms are natural. `log2(x) = ln ln x` and `log3(x) = ln ln ln x`
//! are iterated logarithms, not logarithms to base 2 or 3.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Lane, StreamKey};

pub fn log2(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::domain(format!("ln ln x needs x > 1, got {x}")));
    }
    Ok(x.ln().ln())
}

pub fn log3(x: f64) -> Result<f64> {
    if !(x > 1.0 && x.ln() > 1.0) {
        return Err(Error::domain(format!("ln ln ln x needs x > e, got {x}")));
    }
    Ok(x.ln().ln().ln())
}

/// `f(x) = exp(√(λ log x log₃ x))`, for `x > e^e`.
pub fn f(x: f64, lambda: f64) -> Result<f64> {
    Ok(log_f_from_log(x.ln(), lambda)?.exp())
}

/// `log f(x)` given `log x`, usable when `x` itself overflows.
pub fn log_f_from_log(log_x: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("λ must be nonnegative, got {lambda}")));
    }
    if !(log_x > 1.0 && log_x.ln() > 1.0) {
        return Err(Error::domain(format!("f needs log x > e, got log x = {log_x}")));
    }
    Ok((lambda * log_x * log_x.ln().ln()).sqrt())
}

/// `℘(x) = x (log x)³`.
pub fn wp(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::domain(format!("℘ needs x > 1, got {x}")));
    }
    Ok(x * x.ln().powi(3))
}

/// `φ_x = (log x)² / log₂ x`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x > std::f64::consts::E) {
        return Err(Error::domain(format!("φ needs x > e, got {x}")));
    }
    Ok(phi_from_log(x.ln()))
}

fn phi_from_log(log_x: f64) -> f64 {
    log_x * log_x / log_x.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tn {
    /// `log t_n = α^n`.
    pub log: f64,
    /// `t_n`, or `None` when it overflows.
    pub value: Option<f64>,
}

/// `t_n = e^{α^n}` with its log-domain form.
pub fn t_n(alpha: f64, n: u32) -> Result<Tn> {
    if !(alpha > 1.0) || n < 1 {
        return Err(Error::domain(format!("t_n needs α > 1 and n ≥ 1, got α={alpha}, n={n}")));
    }
    let log = alpha.powi(n as i32);
    if !log.is_finite() {
        return Err(Error::domain(format!("α^n overflows for α={alpha}, n={n}")));
    }
    let v = log.exp();
    Ok(Tn { log, value: v.is_finite().then_some(v) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub lambda: f64,
    pub alpha: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl ScheduleParams {
    /// Accepts the closed lower ends `α = 1`, `ε = 0` so limits can be evaluated.
    pub fn new(lambda: f64, alpha: f64, eps1: f64, eps2: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::domain(format!("λ must be positive, got {lambda}")));
        }
        if !(alpha >= 1.0) {
            return Err(Error::domain(format!("α must be at least 1, got {alpha}")));
        }
        if !(0.0..1.0 / 3.0).contains(&eps1) {
            return Err(Error::domain(format!("ε₁ must lie in [0, 1/3), got {eps1}")));
        }
        if !(0.0..0.5).contains(&eps2) {
            return Err(Error::domain(format!("ε₂ must lie in [0, 1/2), got {eps2}")));
        }
        Ok(ScheduleParams { lambda, alpha, eps1, eps2 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            _ => Err(Error::invalid(format!("side must be upper or lower, got {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesExponent {
    pub exponent: f64,
    pub converges: bool,
}

/// Exponent `p` of the comparison series `Σ n^{-p}`.
pub fn series_exponent(side: Side, p: &ScheduleParams) -> SeriesExponent {
    let exponent = match side {
        Side::Upper => 4.0 * p.lambda / p.alpha * (1.0 - 1.5 * p.eps1) / (1.0 + 2.0 * p.eps2),
        Side::Lower => 4.0 * p.lambda * (1.0 + 1.5 * p.eps1) / (1.0 - 2.0 * p.eps2),
    };
    SeriesExponent { exponent, converges: exponent > 1.0 }
}

/// Rational form of [`series_exponent`], exact for rational parameters.
pub fn series_exponent_exact(
    side: Side,
    lambda: &BigRational,
    alpha: &BigRational,
    eps1: &BigRational,
    eps2: &BigRational,
) -> Result<(BigRational, bool)> {
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let three_halves = BigRational::new(BigInt::from(3), BigInt::from(2));
    let four = BigRational::from_integer(BigInt::from(4));
    let e = match side {
        Side::Upper => {
            if alpha.is_zero() {
                return Err(Error::domain("α must be nonzero"));
            }
            &four * lambda / alpha * (&one - &three_halves * eps1) / (&one + &two * eps2)
        }
        Side::Lower => {
            let den = &one - &two * eps2;
            if den.is_zero() {
                return Err(Error::domain("ε₂ = 1/2 makes the exponent undefined"));
            }
            &four * lambda * (&one + &three_halves * eps1) / den
        }
    };
    let conv = e > one;
    Ok((e, conv))
}

pub fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::invalid(format!("{x} is not finite")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeEvent {
    pub n: u32,
    pub bracket: f64,
    pub exponent_k: f64,
    pub log_prob: f64,
    pub prob: f64,
    pub asymptotic: f64,
    /// `prob / asymptotic`, computed in log domain.
    pub ratio: f64,
    /// The three relative error terms of the asymptotic expansion.
    pub error_terms: [f64; 3],
}

impl TildeEvent {
    pub fn max_error_term(&self) -> f64 {
        self.error_terms.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }
}

/// Product-form probability of the excursion event at step `n`, with the
/// unspecified bounded term in the numerator set to `o1`.
pub fn tilde_event_prob_with(n: u32, p: &ScheduleParams, side: Side, o1: f64) -> Result<TildeEvent> {
    if !(p.alpha > 1.0) {
        return Err(Error::domain("tilde event needs α > 1"));
    }
    if n as f64 * p.alpha.ln() > LOG_DOMAIN_FROM {
        return tilde_event_log_domain(n, p, side, o1);
    }
    tilde_event_direct(n, p, side, o1)
}

fn tilde_event_direct(n: u32, p: &ScheduleParams, side: Side, o1: f64) -> Result<TildeEvent> {
    let log_tn = t_n(p.alpha, n)?.log;
    let lf = log_f_from_log(log_tn, p.lambda)?;
    if !(lf > 1.0) {
        return Err(Error::domain(format!("log f(t_n) = {lf} must exceed 1 at n={n}")));
    }
    let l2f = lf.ln();
    let phi_f = phi_from_log(lf);
    let (big_l, b, k, coef) = match side {
        Side::Upper => {
            let l = t_n(p.alpha, n + 1)?.log;
            let c = 4.0 * (1.0 - 1.5 * p.eps1) / (1.0 + 2.0 * p.eps2);
            (l, (0.5 + p.eps2) * l, ((2.0 / 3.0 - p.eps1) * phi_f).floor(), c)
        }
        Side::Lower => {
            let c = 4.0 * (1.0 + 1.5 * p.eps1) / (1.0 - 2.0 * p.eps2);
            (log_tn, (0.5 - p.eps2) * log_tn, ((2.0 / 3.0 + p.eps1) * phi_f).floor(), c)
        }
    };
    let den = b - (2.0f64.ln() + lf);
    let x = (3.0 * l2f + o1) / den;
    let bracket = 1.0 - x;
    if !(den > 0.0 && bracket > 0.0 && bracket < 1.0) {
        return Err(Error::domain(format!("bracket {bracket} is outside (0, 1) at n={n}")));
    }
    let log_prob = k * (-x).ln_1p();
    let log_asym = -coef * lf * lf / big_l;
    Ok(TildeEvent {
        n,
        bracket,
        exponent_k: k,
        log_prob,
        prob: log_prob.exp(),
        asymptotic: log_asym.exp(),
        ratio: (log_prob - log_asym).exp(),
        error_terms: [l2f * l2f / (big_l * big_l) * phi_f, phi_f / big_l, l2f / big_l],
    })
}

/// Past `log t_n = e^20` the bracket rounds to 1 in f64, so the event is
/// evaluated from `log log t_n` instead.
const LOG_DOMAIN_FROM: f64 = 20.0;

fn tilde_event_log_domain(n: u32, p: &ScheduleParams, side: Side, o1: f64) -> Result<TildeEvent> {
    if !(p.lambda > 0.0) {
        return Err(Error::domain("tilde event needs λ > 0"));
    }
    let ll = n as f64 * p.alpha.ln();
    // log f(t_n)² = λ log t_n log₃ t_n
    let log_lf = 0.5 * (p.lambda.ln() + ll + ll.ln().ln());
    let l2f = log_lf;
    let log_phi = 2.0 * log_lf - l2f.ln();
    let (log_big_l, b_coef, k_coef, coef) = match side {
        Side::Upper => (
            ll + p.alpha.ln(),
            0.5 + p.eps2,
            2.0 / 3.0 - p.eps1,
            4.0 * (1.0 - 1.5 * p.eps1) / (1.0 + 2.0 * p.eps2),
        ),
        Side::Lower => (ll, 0.5 - p.eps2, 2.0 / 3.0 + p.eps1, 4.0 * (1.0 + 1.5 * p.eps1) / (1.0 - 2.0 * p.eps2)),
    };
    let log_b = b_coef.ln() + log_big_l;
    let delta = (log_lf + (2.0f64.ln() * (-log_lf).exp()).ln_1p() - log_b).exp();
    let num = 3.0 * l2f + o1;
    if !(delta < 1.0 && num > 0.0) {
        return Err(Error::domain(format!("bracket is outside (0, 1) at n={n}")));
    }
    let log_x = num.ln() - log_b - (-delta).ln_1p();
    let x = log_x.exp();
    if !(x < 1.0) {
        return Err(Error::domain(format!("bracket is outside (0, 1) at n={n}")));
    }
    let log_kf = k_coef.ln() + log_phi;
    // Flooring is exact below 2^52 and invisible above it.
    let (k, log_k) = if log_kf < 52.0 * 2f64.ln() {
        let k = log_kf.exp().floor();
        (k, k.ln())
    } else {
        (log_kf.exp(), log_kf)
    };
    // −ln(1 − x)/x
    let g = if x < 1e-4 { 1.0 + x / 2.0 + x * x / 3.0 } else { -(-x).ln_1p() / x };
    let log_prob = -(log_k + log_x).exp() * g;
    let log_asym = -coef * (2.0 * log_lf - log_big_l).exp();
    Ok(TildeEvent {
        n,
        bracket: 1.0 - x,
        exponent_k: k,
        log_prob,
        prob: log_prob.exp(),
        asymptotic: log_asym.exp(),
        ratio: (log_prob - log_asym).exp(),
        error_terms: [
            (2.0 * l2f.ln() - 2.0 * log_big_l + log_phi).exp(),
            (log_phi - log_big_l).exp(),
            (l2f.ln() - log_big_l).exp(),
        ],
    })
}

pub fn tilde_event_prob(n: u32, p: &ScheduleParams, side: Side) -> Result<TildeEvent> {
    tilde_event_prob_with(n, p, side, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub central: f64,
    pub minus: f64,
    pub plus: f64,
}

impl Sensitivity {
    pub fn spread(&self) -> f64 {
        (self.plus - self.minus).abs()
    }
}

/// Probability with the bounded term at `0` and at `∓1`.
pub fn tilde_sensitivity(n: u32, p: &ScheduleParams, side: Side) -> Result<Sensitivity> {
    Ok(Sensitivity {
        central: tilde_event_prob_with(n, p, side, 0.0)?.prob,
        minus: tilde_event_prob_with(n, p, side, -1.0)?.prob,
        plus: tilde_event_prob_with(n, p, side, 1.0)?.prob,
    })
}

/// First `n` at which all three error terms are below `threshold`.
pub fn error_terms_settle(p: &ScheduleParams, side: Side, threshold: f64, n_max: u32) -> Option<u32> {
    (1..=n_max).find(|&n| tilde_event_prob(n, p, side).is_ok_and(|t| t.max_error_term() < threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    Est1,
    Est2,
}

/// Scaled residual of the quotient expansion. Requires `|ε| < |a|/2`, `|δ| < |b|/2`.
pub fn est1_residual(a: f64, b: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(eps.abs() < a.abs() / 2.0 || (eps == 0.0 && a == 0.0)) || !(delta.abs() < b.abs() / 2.0 || delta == 0.0) || b == 0.0 {
        return Err(Error::domain("est1 hypotheses |ε| < |a|/2, |δ| < |b|/2 violated"));
    }
    let dev = ((a - eps) / (b + delta) - a / b).abs();
    let scale = (eps / b).abs() + (a * delta / (b * b)).abs();
    Ok(if scale == 0.0 { 0.0 } else { dev / scale })
}

/// Scaled residual of the power expansion.
pub fn est2_residual(alpha: f64, beta: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha < 1.0 && beta >= 0.0 && delta.abs() < 1.0 && 1.0 - alpha + eps > 0.0) {
        return Err(Error::domain("est2 hypotheses violated"));
    }
    let lhs = ((beta + delta) * (eps - alpha).ln_1p()).exp();
    let rhs = (-alpha * beta).exp();
    let dev = (lhs - rhs).abs();
    let scale = rhs * (alpha * alpha * beta + beta * eps.abs() + alpha * delta.abs());
    Ok(if scale == 0.0 { 0.0 } else { dev / scale })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub samples: usize,
    pub max_scaled: f64,
}

/// Largest scaled residual over a randomized hypothesis-respecting sweep.
pub fn expansion_residual_check(kind: Expansion, samples: usize, seed: u64) -> Result<ResidualSweep> {
    let mut rng = StreamKey::new(seed, 0).rng(Lane::Aux, kind as u64);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let c = match kind {
            Expansion::Est1 => {
                let a = sign(&mut rng) * 10f64.powf(rng.random_range(-3.0..3.0));
                let b = sign(&mut rng) * 10f64.powf(rng.random_range(-3.0..3.0));
                let eps = a.abs() * rng.random_range(-0.499..0.499);
                let delta = b.abs() * rng.random_range(-0.499..0.499);
                est1_residual(a, b, eps, delta)?
            }
            Expansion::Est2 => {
                let alpha = 10f64.powf(rng.random_range(-4.0..(0.05f64).log10()));
                let beta = rng.random_range(0.0..0.5 / (alpha * alpha));
                let eb = (alpha / 10.0).min(if beta > 0.0 { 0.5 / beta } else { f64::INFINITY });
                let eps = rng.random_range(-eb..=eb);
                let delta = rng.random_range(-0.999..0.999);
                est2_residual(alpha, beta, eps, delta)?
            }
        };
        worst = worst.max(c);
    }
    Ok(ResidualSweep { samples, max_scaled: worst })
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() { 1.0 } else { -1.0 }
}

/// `(log R)² / (log n · log₃ n)`, defined for `n > e^e`.
pub fn lil_statistic(n: f64, cover_radius: f64) -> Result<f64> {
    let l3 = log3(n)?;
    if l3 <= 0.0 {
        return Err(Error::domain(format!("log₃ n must be positive, got n = {n}")));
    }
    if !(cover_radius >= 1.0) {
        return Err(Error::domain(format!("cover radius must be at least 1, got {cover_radius}")));
    }
    Ok(cover_radius.ln().powi(2) / (n.ln() * l3))
}

/// `64 log r log₃ r / log₂ r`, for `r > e^e`.
pub fn a_threshold(r: f64) -> Result<f64> {
    if !(r > std::f64::consts::E.exp()) {
        return Err(Error::domain(format!("a(r) needs r > e^e, got {r}")));
    }
    Ok(64.0 * r.ln() * log3(r)? / log2(r)?)
}

/// Rational to float, for reporting exact exponents.
pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}
