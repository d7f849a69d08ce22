//! Large-sample forms of the conditional Bayes factor and the normalized
//! Bayes factors used in rate studies.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::screening::SiteCounts;
use crate::special::ConcentrationVector;

/// Counts plus the quantities the asymptotic forms depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticInputs {
    pub n0: Vec<u32>,
    pub n1: Vec<u32>,
    pub alpha: ConcentrationVector,
    pub p0: f64,
    pub lambda0: f64,
}

impl AsymptoticInputs {
    /// Builds inputs with `λ0 = N0 / (N0 + N1)` taken from the counts.
    pub fn from_counts(
        counts: &SiteCounts<'_>,
        alpha: ConcentrationVector,
        p0: f64,
    ) -> Result<Self> {
        if counts.k() != alpha.len() {
            return Err(Error::Data(format!(
                "counts have {} kernels, concentration has {}",
                counts.k(),
                alpha.len()
            )));
        }
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::Domain(format!("P0 must lie in (0,1), got {p0}")));
        }
        let (t0, t1) = counts.totals();
        if t0 == 0 || t1 == 0 {
            return Err(Error::Domain(
                "both groups need at least one observation".into(),
            ));
        }
        Ok(AsymptoticInputs {
            n0: counts.n0.to_vec(),
            n1: counts.n1.to_vec(),
            alpha,
            p0,
            lambda0: t0 as f64 / (t0 + t1) as f64,
        })
    }

    pub fn k(&self) -> usize {
        self.n0.len()
    }

    fn totals(&self) -> (f64, f64) {
        let t0: u64 = self.n0.iter().map(|&c| c as u64).sum();
        let t1: u64 = self.n1.iter().map(|&c| c as u64).sum();
        (t0 as f64, t1 as f64)
    }
}

struct Proportions {
    log_p: Vec<f64>,
    log_r0: Vec<f64>,
    log_r1: Vec<f64>,
    n: f64,
}

fn proportions(inputs: &AsymptoticInputs) -> Result<Proportions> {
    let (t0, t1) = inputs.totals();
    let n = t0 + t1;
    let mut log_p = Vec::with_capacity(inputs.k());
    let mut log_r0 = Vec::with_capacity(inputs.k());
    let mut log_r1 = Vec::with_capacity(inputs.k());
    for (k, (&a, &b)) in inputs.n0.iter().zip(&inputs.n1).enumerate() {
        if a == 0 || b == 0 {
            return Err(Error::Domain(format!(
                "kernel {} has a zero count; the asymptotic form needs positive proportions",
                k + 1
            )));
        }
        let lp = ((a as f64 + b as f64) / n).ln();
        log_p.push(lp);
        log_r0.push((a as f64 / t0).ln() - lp);
        log_r1.push((b as f64 / t1).ln() - lp);
    }
    Ok(Proportions {
        log_p,
        log_r0,
        log_r1,
        n,
    })
}

/// Log of the large-sample conditional Bayes factor
/// `c · N^{(K−1)/2} · Π r0k^{−n0k} r1k^{−n1k}` with
/// `c = P0/(1−P0) · β(α) · {λ0(1−λ0)/2π}^{(K−1)/2} · Π p_k^{1/2−α_k} (r0k r1k)^{1/2−α_k}`.
///
/// This is the leading term of the Stirling expansion of the exact odds;
/// see [`log_asymptotic_bf_uncorrected`] for the variant without `β(α)` and
/// with exponent `α_k + 1/2` on `p_k`.
pub fn log_asymptotic_bf(inputs: &AsymptoticInputs) -> Result<f64> {
    let pr = proportions(inputs)?;
    if inputs.k() == 1 {
        return Ok(prior_log_odds(inputs.p0));
    }
    let alpha = inputs.alpha.as_slice();
    let mut total = common_terms(inputs, &pr) + inputs.alpha.log_mv_beta();
    for k in 0..inputs.k() {
        total += (0.5 - alpha[k]) * pr.log_p[k];
    }
    Ok(total)
}

/// The same expression with the constant taken literally as
/// `Π p_k^{α_k+1/2} (r0k r1k)^{1/2−α_k}` and no `β(α)` factor. Kept for
/// comparison; it does not track the exact odds unless `α` makes the two
/// constants coincide.
pub fn log_asymptotic_bf_uncorrected(inputs: &AsymptoticInputs) -> Result<f64> {
    let pr = proportions(inputs)?;
    let alpha = inputs.alpha.as_slice();
    let mut total = common_terms(inputs, &pr);
    for k in 0..inputs.k() {
        total += (alpha[k] + 0.5) * pr.log_p[k];
    }
    Ok(total)
}

fn common_terms(inputs: &AsymptoticInputs, pr: &Proportions) -> f64 {
    let alpha = inputs.alpha.as_slice();
    let half_dof = 0.5 * (inputs.k() as f64 - 1.0);
    let l0 = inputs.lambda0;
    let mut total = prior_log_odds(inputs.p0);
    if inputs.k() > 1 {
        total += half_dof * (l0 * (1.0 - l0) / (2.0 * PI)).ln() + half_dof * pr.n.ln();
    }
    for k in 0..inputs.k() {
        total += (0.5 - alpha[k]) * (pr.log_r0[k] + pr.log_r1[k]);
        total -= inputs.n0[k] as f64 * pr.log_r0[k] + inputs.n1[k] as f64 * pr.log_r1[k];
    }
    total
}

fn prior_log_odds(p0: f64) -> f64 {
    p0.ln() - (1.0 - p0).ln()
}

/// `(2/(K−1)) · log BF`.
pub fn normalized_bf_h0(log_bf: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain("normalization under H0 needs K ≥ 2".into()));
    }
    Ok(2.0 * log_bf / (k as f64 - 1.0))
}

/// `Σ_k λ0 π0k log(π0k/π*k) + (1−λ0) π1k log(π1k/π*k)` with
/// `π* = λ0 π0 + (1−λ0) π1` and `0 · log 0 = 0`.
pub fn h1_rate(pi0: &[f64], pi1: &[f64], lambda0: f64) -> Result<f64> {
    if pi0.len() != pi1.len() {
        return Err(Error::Data("weight vectors differ in length".into()));
    }
    if !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(Error::Domain(format!(
            "lambda0 must lie in (0,1), got {lambda0}"
        )));
    }
    if pi0 == pi1 {
        return Ok(0.0);
    }
    let term = |w: f64, p: f64, star: f64| {
        if p > 0.0 {
            w * p * (p / star).ln()
        } else {
            0.0
        }
    };
    Ok(pi0
        .iter()
        .zip(pi1)
        .map(|(&a, &b)| {
            let star = lambda0 * a + (1.0 - lambda0) * b;
            term(lambda0, a, star) + term(1.0 - lambda0, b, star)
        })
        .sum::<f64>()
        .max(0.0))
}

/// `log BF / h1_rate(π0, π1, λ0)`.
pub fn normalized_bf_h1(log_bf: f64, pi0: &[f64], pi1: &[f64], lambda0: f64) -> Result<f64> {
    let d = h1_rate(pi0, pi1, lambda0)?;
    if d <= 0.0 {
        return Err(Error::Domain(
            "H1 normalization is undefined when the weight vectors are equal".into(),
        ));
    }
    Ok(log_bf / d)
}

fn group_proportions(counts: &SiteCounts<'_>) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let (t0, t1) = counts.totals();
    if t0 == 0 || t1 == 0 {
        return Err(Error::Domain(
            "both groups need at least one observation".into(),
        ));
    }
    let (t0, t1) = (t0 as f64, t1 as f64);
    let p0 = counts.n0.iter().map(|&c| c as f64 / t0).collect();
    let p1 = counts.n1.iter().map(|&c| c as f64 / t1).collect();
    Ok((p0, p1, t0, t1))
}

/// Per-kernel `√(λ0(1−λ0)) · N · (p0k − p1k)²`.
pub fn chi_square_statistic_h0(counts: &SiteCounts<'_>, lambda0: f64) -> Result<Vec<f64>> {
    let (p0, p1, t0, t1) = group_proportions(counts)?;
    let n = t0 + t1;
    let scale = (lambda0 * (1.0 - lambda0)).sqrt() * n;
    Ok(p0
        .iter()
        .zip(&p1)
        .map(|(a, b)| scale * (a - b).powi(2))
        .collect())
}

/// Per-kernel `λ0(1−λ0) · N · (p0k − p1k)² / (p_k(1 − p_k))`, the two-sample
/// proportion statistic whose null limit is exactly χ²₁.
pub fn standardized_chi_square_h0(counts: &SiteCounts<'_>, lambda0: f64) -> Result<Vec<f64>> {
    let (p0, p1, t0, t1) = group_proportions(counts)?;
    let n = t0 + t1;
    Ok(counts
        .n0
        .iter()
        .zip(counts.n1)
        .zip(p0.iter().zip(&p1))
        .map(|((&a, &b), (x, y))| {
            let p = (a as f64 + b as f64) / n;
            let v = p * (1.0 - p);
            if v > 0.0 {
                lambda0 * (1.0 - lambda0) * n * (x - y).powi(2) / v
            } else {
                0.0
            }
        })
        .collect())
}
