//! Seeded samplers and analytic survival/quantile functions for every law used
//! by the models, plus an alpha-stable reference sampler.
//!
//! Stable laws use the Samorodnitsky–Taqqu ("S1") parameterization: a standard
//! variable `Z ~ S(alpha, beta, 1, 0)` has characteristic function
//! `exp(-|u|^a (1 - i beta sgn(u) tan(pi a / 2)))` for `a != 1`, and
//! `X = scale * Z + location` (with the usual `(2/pi) beta scale ln(scale)`
//! shift when `a = 1`). In this parameterization a totally skewed law with
//! `alpha < 1`, `beta = 1`, `location = 0` is supported on `[0, inf)`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::rng::{open_unit, RngStream};

/// Probability-scale tolerance of numeric quantile inversion.
pub const QUANTILE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    Pareto { alpha: f64, x_min: f64 },
    StudentT { nu: f64 },
    Gaussian { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    /// Survival `(1 + x)^-2 exp(-3x)` on `[0, inf)`.
    ConvEquivEta,
    Stable {
        alpha: f64,
        beta: f64,
        scale: f64,
        location: f64,
    },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

/// Tail class of `exp(X)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpTail {
    /// `exp(X)` has moments of every order.
    Light,
    /// `exp(X)` is regularly varying with the given index.
    RegularlyVarying(f64),
    /// `exp(X)` has a slowly varying (index 0) or worse tail.
    SuperHeavy,
}

/// How a regularly varying `exp(eta)` behaves under products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRegime {
    /// `E[exp(alpha eta)] = inf`.
    InfiniteMoment,
    /// `P(eta1 + eta2 > x) / P(eta1 > x)` has a finite positive limit.
    ConvolutionEquivalent,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be finite, got {v}")))
    }
}

impl LawSpec {
    pub fn pareto(alpha: f64, x_min: f64) -> Self {
        LawSpec::Pareto { alpha, x_min }
    }

    pub fn student_t(nu: f64) -> Self {
        LawSpec::StudentT { nu }
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        LawSpec::Gaussian { mean, sd }
    }

    pub fn standard_gaussian() -> Self {
        LawSpec::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn exponential(rate: f64) -> Self {
        LawSpec::Exponential { rate }
    }

    pub fn stable(alpha: f64, beta: f64, scale: f64, location: f64) -> Self {
        LawSpec::Stable {
            alpha,
            beta,
            scale,
            location,
        }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        LawSpec::Uniform { low, high }
    }

    pub fn constant(value: f64) -> Self {
        LawSpec::Constant { value }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LawSpec::Pareto { .. } => "pareto",
            LawSpec::StudentT { .. } => "student_t",
            LawSpec::Gaussian { .. } => "gaussian",
            LawSpec::Exponential { .. } => "exponential",
            LawSpec::ConvEquivEta => "conv_equiv_eta",
            LawSpec::Stable { .. } => "stable",
            LawSpec::Uniform { .. } => "uniform",
            LawSpec::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LawSpec::Pareto { alpha, x_min } => {
                positive("alpha", alpha)?;
                positive("x_min", x_min)
            }
            LawSpec::StudentT { nu } => positive("nu", nu),
            LawSpec::Gaussian { mean, sd } => {
                finite("mean", mean)?;
                positive("sd", sd)
            }
            LawSpec::Exponential { rate } => positive("rate", rate),
            LawSpec::ConvEquivEta => Ok(()),
            LawSpec::Stable {
                alpha,
                beta,
                scale,
                location,
            } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(Error::param("alpha", format!("must lie in (0, 2], got {alpha}")));
                }
                if !(-1.0..=1.0).contains(&beta) {
                    return Err(Error::param("beta", format!("must lie in [-1, 1], got {beta}")));
                }
                positive("scale", scale)?;
                finite("location", location)
            }
            LawSpec::Uniform { low, high } => {
                finite("low", low)?;
                finite("high", high)?;
                if high > low {
                    Ok(())
                } else {
                    Err(Error::param("high", format!("must exceed low ({low}), got {high}")))
                }
            }
            LawSpec::Constant { value } => finite("value", value),
        }
    }

    /// Regular-variation index of `|X|`, `None` for light-tailed laws.
    pub fn tail_index(&self) -> Option<f64> {
        match *self {
            LawSpec::Pareto { alpha, .. } => Some(alpha),
            LawSpec::StudentT { nu } => Some(nu),
            LawSpec::Stable { alpha, .. } if alpha < 2.0 => Some(alpha),
            _ => None,
        }
    }

    pub fn exp_tail(&self) -> ExpTail {
        match *self {
            LawSpec::Exponential { rate } => ExpTail::RegularlyVarying(rate),
            LawSpec::ConvEquivEta => ExpTail::RegularlyVarying(3.0),
            LawSpec::Gaussian { .. } | LawSpec::Uniform { .. } | LawSpec::Constant { .. } => {
                ExpTail::Light
            }
            LawSpec::Pareto { .. } | LawSpec::StudentT { .. } => ExpTail::SuperHeavy,
            LawSpec::Stable { alpha, beta, .. } => {
                if alpha == 2.0 {
                    ExpTail::Light
                } else if alpha < 1.0 && beta == -1.0 {
                    // supported on a left half-line
                    ExpTail::Light
                } else {
                    ExpTail::SuperHeavy
                }
            }
        }
    }

    /// Product regime of `exp(eta)` when it is regularly varying.
    pub fn eta_regime(&self) -> Option<EtaRegime> {
        match self {
            LawSpec::Exponential { .. } => Some(EtaRegime::InfiniteMoment),
            LawSpec::ConvEquivEta => Some(EtaRegime::ConvolutionEquivalent),
            _ => None,
        }
    }

    pub fn is_symmetric_about_zero(&self) -> bool {
        match *self {
            LawSpec::StudentT { .. } => true,
            LawSpec::Gaussian { mean, .. } => mean == 0.0,
            LawSpec::Stable { beta, location, alpha, .. } => {
                location == 0.0 && (beta == 0.0 || alpha == 2.0)
            }
            LawSpec::Uniform { low, high } => low == -high,
            LawSpec::Constant { value } => value == 0.0,
            _ => false,
        }
    }

    /// `E[X^2]` when available in closed form.
    pub fn second_moment(&self) -> Option<f64> {
        match *self {
            LawSpec::Pareto { alpha, x_min } if alpha > 2.0 => {
                Some(alpha * x_min * x_min / (alpha - 2.0))
            }
            LawSpec::StudentT { nu } if nu > 2.0 => Some(nu / (nu - 2.0)),
            LawSpec::Gaussian { mean, sd } => Some(mean * mean + sd * sd),
            LawSpec::Exponential { rate } => Some(2.0 / (rate * rate)),
            LawSpec::Uniform { low, high } => {
                Some((high * high + high * low + low * low) / 3.0)
            }
            LawSpec::Constant { value } => Some(value * value),
            LawSpec::Stable {
                alpha: 2.0,
                scale,
                location,
                ..
            } => {
                Some(2.0 * scale * scale + location * location)
            }
            _ => None,
        }
    }

    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match *self {
            LawSpec::Pareto { alpha, x_min } => Sampler::Pareto {
                inv_alpha: 1.0 / alpha,
                x_min,
            },
            LawSpec::StudentT { nu } => Sampler::StudentT(
                StudentT::new(nu).map_err(|e| Error::param("nu", e.to_string()))?,
            ),
            LawSpec::Gaussian { mean, sd } => Sampler::Gaussian { mean, sd },
            LawSpec::Exponential { rate } => Sampler::Exponential { inv_rate: 1.0 / rate },
            LawSpec::ConvEquivEta => Sampler::ConvEquivEta,
            LawSpec::Stable {
                alpha,
                beta,
                scale,
                location,
            } => Sampler::Stable(StableSampler::new(alpha, beta, scale, location)?),
            LawSpec::Uniform { low, high } => Sampler::Uniform {
                low,
                width: high - low,
            },
            LawSpec::Constant { value } => Sampler::Constant(value),
        })
    }

    pub fn survival(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return Err(Error::param("x", "NaN argument"));
        }
        let s = match *self {
            LawSpec::Pareto { alpha, x_min } => {
                if x <= x_min {
                    1.0
                } else {
                    (x / x_min).powf(-alpha)
                }
            }
            LawSpec::StudentT { nu } => StudentsT::new(0.0, 1.0, nu)
                .map_err(|e| Error::param("nu", e.to_string()))?
                .sf(x),
            LawSpec::Gaussian { mean, sd } => 0.5 * erfc((x - mean) / (sd * std::f64::consts::SQRT_2)),
            LawSpec::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            LawSpec::ConvEquivEta => conv_equiv_survival(x),
            LawSpec::Stable {
                alpha,
                beta,
                scale,
                location,
            } => stable_survival(alpha, beta, scale, location, x)?,
            LawSpec::Uniform { low, high } => {
                if x <= low {
                    1.0
                } else if x >= high {
                    0.0
                } else {
                    (high - x) / (high - low)
                }
            }
            LawSpec::Constant { value } => {
                if x < value {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok(s.clamp(0.0, 1.0))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        // complement of the survival, except where a direct form is more accurate
        match *self {
            LawSpec::Gaussian { mean, sd } => {
                self.validate()?;
                Ok(0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)))
            }
            LawSpec::StudentT { nu } => {
                self.validate()?;
                Ok(StudentsT::new(0.0, 1.0, nu)
                    .map_err(|e| Error::param("nu", e.to_string()))?
                    .cdf(x))
            }
            _ => Ok(1.0 - self.survival(x)?),
        }
    }

    /// `P(|X| > x)` for `x >= 0`.
    pub fn abs_survival(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(1.0);
        }
        let upper = self.survival(x)?;
        // P(X < -x) = cdf(-x) minus any atom at -x, atoms only occur for constants
        let lower = match *self {
            LawSpec::Constant { value } => {
                if value < -x {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.cdf(-x)?,
        };
        Ok((upper + lower).clamp(0.0, 1.0))
    }

    /// Inverse of the distribution function: `x` with `P(X > x) = 1 - u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.validate()?;
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::param("u", format!("must lie in (0, 1), got {u}")));
        }
        match *self {
            LawSpec::Pareto { alpha, x_min } => Ok(x_min * (1.0 - u).powf(-1.0 / alpha)),
            LawSpec::Exponential { rate } => Ok(-(-u).ln_1p() / rate),
            LawSpec::Uniform { low, high } => Ok(low + u * (high - low)),
            LawSpec::Constant { value } => Ok(value),
            LawSpec::ConvEquivEta => conv_equiv_inverse_survival(1.0 - u),
            _ => {
                let target = 1.0 - u;
                bisect_decreasing(|x| self.survival(x), target, 0.0, 1.0)
            }
        }
    }

    /// `x` with `P(|X| > x) = tail`, for `tail` in (0, 1).
    pub fn abs_quantile(&self, tail: f64) -> Result<f64> {
        self.validate()?;
        if !(tail > 0.0 && tail < 1.0) {
            return Err(Error::param("tail", format!("must lie in (0, 1), got {tail}")));
        }
        match *self {
            // non-negative support
            LawSpec::Pareto { .. } | LawSpec::Exponential { .. } | LawSpec::ConvEquivEta => {
                self.quantile(1.0 - tail)
            }
            LawSpec::Uniform { low, .. } if low >= 0.0 => self.quantile(1.0 - tail),
            LawSpec::Constant { value } => Ok(value.abs()),
            _ if self.is_symmetric_about_zero() => self.quantile(1.0 - tail / 2.0),
            _ => bisect_decreasing(|x| self.abs_survival(x), tail, 0.0, 1.0),
        }
    }
}

/// Solve `f(x) = target` for a non-increasing `f`, expanding a bracket around `x0`.
fn bisect_decreasing<F>(f: F, target: f64, x0: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut lo = x0;
    let mut hi = x0;
    let mut width = step;
    let mut expansions = 0;
    while f(lo)? < target {
        lo -= width;
        width *= 2.0;
        expansions += 1;
        if expansions > 2000 || !lo.is_finite() {
            return Err(Error::Numeric(format!("could not bracket quantile for target {target}")));
        }
    }
    width = step;
    expansions = 0;
    while f(hi)? > target {
        hi += width;
        width *= 2.0;
        expansions += 1;
        if expansions > 2000 || !hi.is_finite() {
            return Err(Error::Numeric(format!("could not bracket quantile for target {target}")));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = f(mid)?;
        if s > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let err = (f(x)? - target).abs();
    if err > QUANTILE_TOL {
        // a flat survival or an atom: the bracket is a valid generalized inverse
        let flat = (f(lo)? - f(hi)?).abs() > QUANTILE_TOL;
        if !flat {
            return Err(Error::Numeric(format!(
                "quantile inversion stalled with probability error {err:e}"
            )));
        }
    }
    Ok(x)
}

fn conv_equiv_survival(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (1.0 + x).powi(-2) * (-3.0 * x).exp()
    }
}

/// Solves `(1 + x)^-2 exp(-3x) = tail` by Newton iteration in log space.
///
/// `g(x) = 2 ln(1 + x) + 3x + ln(tail)` is increasing and concave, so the
/// iterates approach the root monotonically from the left after the first step.
fn conv_equiv_inverse_survival(tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(Error::param("tail", format!("must lie in (0, 1], got {tail}")));
    }
    if tail == 1.0 {
        return Ok(0.0);
    }
    let log_tail = tail.ln();
    let mut x = -log_tail / 3.0;
    for _ in 0..100 {
        let g = 2.0 * x.ln_1p() + 3.0 * x + log_tail;
        let dg = 2.0 / (1.0 + x) + 3.0;
        let next = (x - g / dg).max(0.0);
        if (next - x).abs() <= 1e-15 * (1.0 + x) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numeric("conv_equiv_eta inversion did not converge".into()))
}

/// Prepared sampler for one law.
#[derive(Debug, Clone)]
pub enum Sampler {
    Pareto { inv_alpha: f64, x_min: f64 },
    StudentT(StudentT<f64>),
    Gaussian { mean: f64, sd: f64 },
    Exponential { inv_rate: f64 },
    ConvEquivEta,
    Stable(StableSampler),
    Uniform { low: f64, width: f64 },
    Constant(f64),
}

impl Sampler {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Pareto { inv_alpha, x_min } => {
                let u: f64 = rng.random();
                x_min * (1.0 - u).powf(-inv_alpha)
            }
            Sampler::StudentT(t) => t.sample(rng),
            Sampler::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Sampler::Exponential { inv_rate } => {
                let e: f64 = rng.sample(Exp1);
                e * inv_rate
            }
            Sampler::ConvEquivEta => {
                let u: f64 = rng.random();
                // 1 - u lies in (0, 1]; the inversion cannot fail on that range
                conv_equiv_inverse_survival(1.0 - u).unwrap_or(0.0)
            }
            Sampler::Stable(s) => s.draw(rng),
            Sampler::Uniform { low, width } => {
                let u: f64 = rng.random();
                low + width * u
            }
            Sampler::Constant(v) => *v,
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for x in out {
            *x = self.draw(rng);
        }
    }
}

/// `count` draws of `law` from `stream`.
pub fn sample(law: &LawSpec, stream: &RngStream, count: usize) -> Result<Vec<f64>> {
    let sampler = law.sampler()?;
    let mut rng = stream.rng();
    Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
}

/// Chambers–Mallows–Stuck sampler in the S1 parameterization.
#[derive(Debug, Clone)]
pub struct StableSampler {
    alpha: f64,
    beta: f64,
    scale: f64,
    location: f64,
    b: f64,
    s: f64,
}

impl StableSampler {
    pub fn new(alpha: f64, beta: f64, scale: f64, location: f64) -> Result<Self> {
        LawSpec::stable(alpha, beta, scale, location).validate()?;
        let (b, s) = if alpha != 1.0 {
            let bt = beta * (PI * alpha / 2.0).tan();
            (bt.atan() / alpha, (1.0 + bt * bt).powf(1.0 / (2.0 * alpha)))
        } else {
            (0.0, 1.0)
        };
        Ok(Self {
            alpha,
            beta,
            scale,
            location,
            b,
            s,
        })
    }

    fn standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = PI * (open_unit(rng) - 0.5);
        let w = -open_unit(rng).ln();
        let a = self.alpha;
        if a == 2.0 {
            return 2.0 * v.sin() * w.sqrt();
        }
        if a == 1.0 {
            let bv = FRAC_PI_2 + self.beta * v;
            return (bv * v.tan() - self.beta * ((FRAC_PI_2 * w * v.cos()) / bv).ln()) / FRAC_PI_2;
        }
        let phi = a * (v + self.b);
        let num = phi.sin() / v.cos().powf(1.0 / a);
        let ratio = ((v - phi).cos() / w).max(f64::MIN_POSITIVE);
        let x = self.s * num * ratio.powf((1.0 - a) / a);
        if self.beta == 1.0 && a < 1.0 {
            // support is [0, inf); rounding must not push draws below it
            x.max(0.0)
        } else if self.beta == -1.0 && a < 1.0 {
            x.min(0.0)
        } else {
            x
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = self.standard(rng);
        if self.alpha == 1.0 {
            self.scale * z + FRAC_PI_2.recip() * self.beta * self.scale * self.scale.ln() + self.location
        } else {
            self.scale * z + self.location
        }
    }
}

/// Stable variates in the S1 parameterization.
pub fn stable_sample(
    alpha: f64,
    beta: f64,
    scale: f64,
    location: f64,
    stream: &RngStream,
    count: usize,
) -> Result<Vec<f64>> {
    let sampler = StableSampler::new(alpha, beta, scale, location)?;
    let mut rng = stream.rng();
    Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
}

fn stable_survival(alpha: f64, beta: f64, scale: f64, location: f64, x: f64) -> Result<f64> {
    let shift = if alpha == 1.0 {
        FRAC_PI_2.recip() * beta * scale * scale.ln()
    } else {
        0.0
    };
    let z = (x - location - shift) / scale;
    if alpha == 2.0 {
        return Ok(0.5 * erfc(z / 2.0));
    }
    Ok(1.0 - standard_stable_cdf(alpha, beta, z)?)
}

/// CDF of the standard S1 stable law via Nolan's integral representation.
fn standard_stable_cdf(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    if alpha == 1.0 {
        if beta == 0.0 {
            return Ok(0.5 + x.atan() / PI);
        }
        if beta < 0.0 {
            return Ok(1.0 - standard_stable_cdf(alpha, -beta, -x)?);
        }
        let c = (-PI * x / (2.0 * beta)).exp();
        let v = |theta: f64| {
            let h = FRAC_PI_2 + beta * theta;
            (2.0 / PI) * (h / theta.cos()) * ((h * theta.tan()) / beta).exp()
        };
        let integrand = |theta: f64| guarded_exp_neg(c * v(theta));
        let integral = adaptive_simpson(&integrand, -FRAC_PI_2, FRAC_PI_2, 1e-13)?;
        return Ok((integral / PI).clamp(0.0, 1.0));
    }
    if x < 0.0 {
        return Ok(1.0 - standard_stable_cdf(alpha, -beta, -x)?);
    }
    let theta0 = (beta * (PI * alpha / 2.0).tan()).atan() / alpha;
    let c1 = if alpha < 1.0 {
        (FRAC_PI_2 - theta0) / PI
    } else {
        1.0
    };
    if x == 0.0 {
        return Ok((FRAC_PI_2 - theta0) / PI);
    }
    let am1 = alpha - 1.0;
    let log_x_pow = (alpha / am1) * x.ln();
    let cos_a_t0 = (alpha * theta0).cos();
    let log_v = |theta: f64| -> f64 {
        let ct = theta.cos();
        let sa = (alpha * (theta0 + theta)).sin();
        let cr = (alpha * theta0 + am1 * theta).cos();
        cos_a_t0.ln() / am1 + (alpha / am1) * (ct / sa).ln() + (cr / ct).ln()
    };
    let integrand = |theta: f64| {
        let lv = log_v(theta);
        if lv.is_nan() {
            // endpoints: V tends to 0 or inf, decided by the neighbouring value
            return f64::NAN;
        }
        guarded_exp_neg((log_x_pow + lv).exp())
    };
    let sign = if alpha < 1.0 { 1.0 } else { -1.0 };
    let eps = 1e-12;
    let integral = adaptive_simpson(&integrand, -theta0 + eps, FRAC_PI_2 - eps, 1e-13)?;
    Ok((c1 + sign * integral / PI).clamp(0.0, 1.0))
}

fn guarded_exp_neg(v: f64) -> f64 {
    if v.is_nan() {
        f64::NAN
    } else if v == f64::INFINITY {
        0.0
    } else {
        (-v).exp()
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            y
        } else {
            // non-finite only at the singular endpoints of the representation
            let dx = 1e-9 * (b - a);
            let probe = if (x - a).abs() < (b - x).abs() { x + dx } else { x - dx };
            let y2 = f(probe);
            if y2.is_finite() {
                y2
            } else {
                0.0
            }
        }
    };
    fn recurse<G: Fn(f64) -> f64>(
        g: &G,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = g(lm);
        let frm = g(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    // split into panels so narrow peaks are not missed by the first estimate
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let hi = lo + h;
        let (fa, fm, fb) = (eval(lo), eval(0.5 * (lo + hi)), eval(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += recurse(&eval, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40);
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Numeric("stable CDF quadrature produced a non-finite value".into()))
    }
}

/// Survival of a Levy law (S1 stable with alpha = 1/2, beta = 1) with scale `c`.
pub fn levy_survival(c: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erf((c / (2.0 * x)).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pareto_inverse_cdf_at_half() {
        assert_abs_diff_eq!(LawSpec::pareto(1.0, 1.0).quantile(0.5).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_survivals() {
        assert_abs_diff_eq!(LawSpec::pareto(3.0, 1.0).survival(2.0).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(
            LawSpec::exponential(3.0).survival(1.0).unwrap(),
            (-3.0f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(LawSpec::ConvEquivEta.survival(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            LawSpec::ConvEquivEta.survival(1.0).unwrap(),
            0.25 * (-3.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn closed_form_quantiles() {
        assert_abs_diff_eq!(LawSpec::pareto(2.0, 1.0).quantile(0.75).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(LawSpec::standard_gaussian().quantile(0.5).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn conv_equiv_quantile_matches_bisection() {
        // independent oracle: plain bisection on the survival function
        let target = 0.1;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (1.0 + mid).powi(-2) * (-3.0 * mid).exp() > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = LawSpec::ConvEquivEta.quantile(0.9).unwrap();
        assert_abs_diff_eq!(q, 0.5 * (lo + hi), epsilon = 1e-12);
        assert_abs_diff_eq!(LawSpec::ConvEquivEta.survival(q).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn parameter_errors_name_field() {
        let err = LawSpec::pareto(-1.0, 1.0).validate().unwrap_err();
        assert!(matches!(err, Error::Parameter { ref field, .. } if field == "alpha"));
        let err = LawSpec::gaussian(0.0, 0.0).validate().unwrap_err();
        assert!(matches!(err, Error::Parameter { ref field, .. } if field == "sd"));
        let err = StableSampler::new(2.5, 0.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Parameter { ref field, .. } if field == "alpha"));
        let err = StableSampler::new(0.0, 0.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Parameter { ref field, .. } if field == "alpha"));
        let err = LawSpec::stable(1.5, 1.5, 1.0, 0.0).validate().unwrap_err();
        assert!(matches!(err, Error::Parameter { ref field, .. } if field == "beta"));
        assert!(LawSpec::pareto(1.0, 1.0).quantile(1.0).is_err());
    }

    #[test]
    fn sample_is_reproducible() {
        let law = LawSpec::student_t(3.0);
        let s = RngStream::new(11, 4);
        assert_eq!(sample(&law, &s, 1000).unwrap(), sample(&law, &s, 1000).unwrap());
        assert_ne!(
            sample(&law, &s, 10).unwrap(),
            sample(&law, &RngStream::new(11, 5), 10).unwrap()
        );
        assert!(sample(&law, &s, 0).unwrap().is_empty());
    }

    #[test]
    fn levy_matches_stable_integral() {
        for &x in &[0.05, 0.3, 1.0, 4.0, 50.0] {
            let s = LawSpec::stable(0.5, 1.0, 1.0, 0.0).survival(x).unwrap();
            assert_abs_diff_eq!(s, levy_survival(1.0, x), epsilon = 1e-8);
        }
        // scale and location
        let s = LawSpec::stable(0.5, 1.0, 2.0, 1.0).survival(3.0).unwrap();
        assert_abs_diff_eq!(s, levy_survival(2.0, 2.0), epsilon = 1e-8);
    }

    #[test]
    fn cauchy_and_gaussian_stable_cases() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 5.0] {
            let s = LawSpec::stable(1.0, 0.0, 1.0, 0.0).survival(x).unwrap();
            assert_abs_diff_eq!(s, 0.5 - f64::atan(x) / PI, epsilon = 1e-12);
            let g = LawSpec::stable(2.0, 0.0, 1.0, 0.0).survival(x).unwrap();
            let oracle = LawSpec::gaussian(0.0, std::f64::consts::SQRT_2).survival(x).unwrap();
            assert_abs_diff_eq!(g, oracle, epsilon = 1e-14);
        }
    }

    #[test]
    fn stable_survival_reflection_and_monotone() {
        let law = LawSpec::stable(1.5, 0.3, 1.0, 0.0);
        let mirror = LawSpec::stable(1.5, -0.3, 1.0, 0.0);
        let mut prev = 1.0;
        for k in -40..=40 {
            let x = k as f64 * 0.25;
            let s = law.survival(x).unwrap();
            assert!(s <= prev + 1e-9, "not monotone at {x}");
            prev = s;
            assert_abs_diff_eq!(s, 1.0 - mirror.survival(-x).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn totally_skewed_small_alpha_nonnegative() {
        let draws = stable_sample(0.8, 1.0, 1.0, 0.0, &RngStream::new(5, 0), 100_000).unwrap();
        assert!(draws.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn abs_quantile_inverts_abs_survival() {
        for law in [
            LawSpec::student_t(3.0),
            LawSpec::pareto(1.5, 1.0),
            LawSpec::gaussian(0.5, 2.0),
            LawSpec::stable(1.5, 1.0, 1.0, 0.0),
        ] {
            let x = law.abs_quantile(0.01).unwrap();
            assert_abs_diff_eq!(law.abs_survival(x).unwrap(), 0.01, epsilon = 1e-9);
        }
    }
}
