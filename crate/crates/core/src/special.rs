//! Log-space special functions and the truncated-normal kernel on `[0, 1]`.
//!
//! Everything here is pure and reentrant. The normal tail primitives are
//! written so that the truncation normalizer stays finite even when the
//! kernel location sits many scales outside the unit interval.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `log β(α) = Σ log Γ(α_k) − log Γ(Σ α_k)`.
pub fn log_mv_beta(alpha: &[f64]) -> Result<f64> {
    if alpha.is_empty() {
        return Err(Error::Domain("multivariate beta of an empty vector".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Domain(format!(
            "multivariate beta requires positive finite entries, got {a}"
        )));
    }
    Ok(log_mv_beta_unchecked(alpha))
}

/// `log_mv_beta` without argument validation, for hot loops whose inputs are
/// already known to be positive.
#[inline]
pub fn log_mv_beta_unchecked(alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut acc = 0.0;
    for &a in alpha {
        total += a;
        acc += ln_gamma(a);
    }
    acc - ln_gamma(total)
}

pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_pos(x))
}

pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("trigamma requires x > 0, got {x}")));
    }
    Ok(trigamma_pos(x))
}

pub(crate) fn digamma_pos(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number series for ψ(x) − ln x + 1/(2x)
    let series = inv2
        * (-1.0 / 12.0
            + inv2
                * (1.0 / 120.0
                    + inv2
                        * (-1.0 / 252.0
                            + inv2
                                * (1.0 / 240.0
                                    + inv2 * (-1.0 / 132.0 + inv2 * (691.0 / 32760.0))))));
    shift + x.ln() - 0.5 * inv + series
}

pub(crate) fn trigamma_pos(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))));
    shift + series
}

/// `log Σ exp(v)`; `−∞` for an empty slice or all-`−∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Complementary error function with close to full relative precision.
///
/// Power series for `erf` when `x² < 1.5`, otherwise the continued fraction
/// for the upper incomplete gamma function `Γ(1/2, x²)/√π`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    let t = x * x;
    if t < 1.5 {
        return 1.0 - erf_series(x);
    }
    if t > 750.0 {
        return 0.0;
    }
    const TINY: f64 = 1e-300;
    // modified Lentz for Γ(a, t), a = 1/2
    let a = 0.5;
    let mut b = t + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-t).exp() * x * h / std::f64::consts::PI.sqrt()
}

fn erf_series(x: f64) -> f64 {
    let t = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..60 {
        term *= -t / n as f64;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum * std::f64::consts::FRAC_2_SQRT_PI
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 − Φ(z)`, accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `log(1 − Φ(z))`, finite far beyond the range where `normal_sf` underflows.
pub fn normal_log_sf(z: f64) -> f64 {
    if z < 30.0 {
        return normal_sf(z).ln();
    }
    // Mills-ratio expansion: sf(z) = φ(z)/z · (1 − 1/z² + 3/z⁴ − 15/z⁶ + 105/z⁸)
    let inv2 = 1.0 / (z * z);
    let series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
    normal_logpdf(z) - z.ln() + series.ln()
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against `erfc`, giving close to full double precision.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    Ok(normal_quantile_unchecked(p))
}

pub(crate) fn normal_quantile_unchecked(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let x = if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    };
    // Halley refinement, measuring the residual on whichever tail is small.
    let e = if x < 0.0 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_sf(x)
    };
    let u = e * (std::f64::consts::TAU.sqrt()) * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// `log(Φ(hi) − Φ(lo))` for `lo < hi`, evaluated on whichever tail keeps
/// both terms well-conditioned.
pub fn normal_log_mass(lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return f64::NEG_INFINITY;
    }
    if lo > 0.0 {
        log_sf_diff(lo, hi)
    } else if hi < 0.0 {
        log_sf_diff(-hi, -lo)
    } else {
        (1.0 - normal_sf(hi) - normal_sf(-lo)).ln()
    }
}

/// Solves `log(1 − Φ(z)) = t` for `z`, including targets below the smallest
/// positive double.
pub fn inverse_log_sf(t: f64) -> f64 {
    if t > -700.0 {
        return -normal_quantile_unchecked(t.exp().min(1.0 - f64::EPSILON));
    }
    let mut z = (-2.0 * t).sqrt();
    for _ in 0..50 {
        let ls = normal_log_sf(z);
        let slope = -(normal_logpdf(z) - ls).exp();
        let step = (ls - t) / slope;
        z -= step;
        if step.abs() < 1e-14 * z.abs() {
            break;
        }
    }
    z
}

// log(sf(a) − sf(b)) for 0 ≤ a < b
fn log_sf_diff(a: f64, b: f64) -> f64 {
    let la = normal_log_sf(a);
    let lb = normal_log_sf(b);
    if lb == f64::NEG_INFINITY {
        return la;
    }
    la + (-(lb - la).exp_m1()).ln()
}

/// A normal density with location `mu` and scale `sigma`, renormalized to
/// the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelParams", into = "KernelParams")]
pub struct TruncNormalKernel {
    mu: f64,
    sigma: f64,
    lower: f64,
    upper: f64,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct KernelParams {
    mu: f64,
    sigma: f64,
}

impl TryFrom<KernelParams> for TruncNormalKernel {
    type Error = Error;
    fn try_from(p: KernelParams) -> Result<Self> {
        TruncNormalKernel::new(p.mu, p.sigma)
    }
}

impl From<TruncNormalKernel> for KernelParams {
    fn from(k: TruncNormalKernel) -> Self {
        KernelParams {
            mu: k.mu,
            sigma: k.sigma,
        }
    }
}

impl TruncNormalKernel {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Domain(format!(
                "kernel location must be finite, got {mu}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "kernel scale must be positive, got {sigma}"
            )));
        }
        let lower = -mu / sigma;
        let upper = (1.0 - mu) / sigma;
        let log_mass = normal_log_mass(lower, upper);
        if !log_mass.is_finite() {
            return Err(Error::Numerical(format!(
                "kernel (mu={mu}, sigma={sigma}) places no representable mass on [0,1]"
            )));
        }
        Ok(TruncNormalKernel {
            mu,
            sigma,
            lower,
            upper,
            log_norm: sigma.ln() + LN_SQRT_2PI + log_mass,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Precision `τ = 1/σ²`.
    pub fn precision(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }

    /// Log of the untruncated probability mass that falls inside `[0, 1]`.
    pub fn log_truncation_mass(&self) -> f64 {
        self.log_norm - self.sigma.ln() - LN_SQRT_2PI
    }

    #[inline]
    pub fn logpdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.log_norm
    }

    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let z = (x - self.mu) / self.sigma;
        (normal_log_mass(self.lower, z) - self.log_truncation_mass())
            .exp()
            .min(1.0)
    }

    /// Complement `1 − F(x)` computed without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        let z = (x - self.mu) / self.sigma;
        (normal_log_mass(z, self.upper) - self.log_truncation_mass())
            .exp()
            .min(1.0)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile requires p in (0,1), got {p}"
            )));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        let log_mass = self.log_truncation_mass();
        let z = if self.lower > 0.0 {
            // whole interval in the upper tail: sf(z) = sf(lower) − p·mass
            let ls = normal_log_sf(self.lower);
            inverse_log_sf(ls + (-p * (log_mass - ls).exp()).ln_1p())
        } else if self.upper < 0.0 {
            let ls = normal_log_sf(-self.upper);
            -inverse_log_sf(ls + (-(1.0 - p) * (log_mass - ls).exp()).ln_1p())
        } else {
            let mass = log_mass.exp();
            // The two targets sum to one; invert whichever is below one half.
            let below = normal_cdf(self.lower) + p * mass;
            if below <= 0.5 {
                normal_quantile_unchecked(below)
            } else {
                -normal_quantile_unchecked(normal_sf(self.upper) + (1.0 - p) * mass)
            }
        };
        (self.mu + self.sigma * z).clamp(0.0, 1.0)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // open interval (0,1)
        let u: f64 = loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        self.quantile_unchecked(u)
    }

    /// Mean of the truncated distribution.
    pub fn mean(&self) -> f64 {
        let log_z = self.log_truncation_mass();
        let a = (normal_logpdf(self.lower) - log_z).exp();
        let b = (normal_logpdf(self.upper) - log_z).exp();
        self.mu + self.sigma * (a - b)
    }

    /// Maps `x` through the truncated CDF and back through the untruncated
    /// quantile, `μ + σ Φ⁻¹(F(x))`. The probability is clamped to
    /// `[clamp, 1 − clamp]` so boundary observations map to finite values.
    pub fn untruncate(&self, x: f64, clamp: f64) -> f64 {
        let lower = self.cdf(x);
        let z = if lower <= 0.5 {
            normal_quantile_unchecked(lower.max(clamp))
        } else {
            -normal_quantile_unchecked(self.sf(x).max(clamp))
        };
        self.mu + self.sigma * z
    }
}

/// A Dirichlet concentration vector with strictly positive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConcentrationVector(Vec<f64>);

impl ConcentrationVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Domain(
                "concentration vector must have length >= 1".into(),
            ));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Domain(format!(
                "concentration entries must be positive and finite, got {a}"
            )));
        }
        Ok(ConcentrationVector(alpha))
    }

    pub fn uniform(k: usize) -> Self {
        ConcentrationVector(vec![1.0; k.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn log_mv_beta(&self) -> f64 {
        log_mv_beta_unchecked(&self.0)
    }
}

impl TryFrom<Vec<f64>> for ConcentrationVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ConcentrationVector::new(v)
    }
}

impl From<ConcentrationVector> for Vec<f64> {
    fn from(c: ConcentrationVector) -> Self {
        c.0
    }
}
