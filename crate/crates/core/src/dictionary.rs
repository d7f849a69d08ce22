//! Stage one: learning the shared kernel dictionary.
//!
//! A single-group Gibbs sampler over a subsample of sites alternates kernel
//! allocation, per-site Dirichlet weight draws, normal-gamma updates of the
//! kernel parameters and a maximum-likelihood update of the shared
//! concentration. Kernels are reordered by mean after every iteration and
//! the point estimates are posterior means over retained iterations.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelDictionary, ScreeningDataset};
use crate::rng::{stream_rng, Stream};
use crate::sampling::{categorical_from_log, dirichlet_posterior_into};
use crate::special::{
    digamma_pos, ln_gamma, log_sum_exp, trigamma_pos, ConcentrationVector, TruncNormalKernel,
};

/// Probability clamp used when mapping observations through the truncation
/// transform, so that values on the boundary of `[0, 1]` stay finite.
pub const UNTRUNCATE_CLAMP: f64 = 1e-10;

/// Support of stage-one kernel means. A kernel that is flat over `[0,1]`
/// reproduces its own parameters under the truncation transform and would
/// otherwise drift without bound.
pub const KERNEL_MEAN_RANGE: (f64, f64) = (-1.0, 2.0);
/// Largest stage-one kernel scale; at this scale a kernel is close to uniform on `[0,1]`.
pub const KERNEL_SIGMA_MAX: f64 = 2.0;

/// Normal-gamma prior on a kernel's `(μ, τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaPrior {
    pub mu0: f64,
    pub lambda0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for NormalGammaPrior {
    fn default() -> Self {
        NormalGammaPrior {
            mu0: 0.5,
            lambda0: 1.0,
            a0: 1.0,
            b0: 0.5,
        }
    }
}

impl NormalGammaPrior {
    pub fn new(mu0: f64, lambda0: f64, a0: f64, b0: f64) -> Result<Self> {
        if !(mu0.is_finite() && lambda0 > 0.0 && a0 > 0.0 && b0 > 0.0) {
            return Err(Error::Config(format!(
                "normal-gamma prior needs finite mu0 and positive lambda0, a0, b0; got ({mu0}, {lambda0}, {a0}, {b0})"
            )));
        }
        Ok(NormalGammaPrior {
            mu0,
            lambda0,
            a0,
            b0,
        })
    }

    /// Conjugate update from `n` values with mean `mean` and population
    /// variance `var` (sum of squared deviations divided by `n`).
    pub fn posterior(&self, n: usize, mean: f64, var: f64) -> NormalGammaPrior {
        if n == 0 {
            return *self;
        }
        let nf = n as f64;
        let lambda = self.lambda0 + nf;
        NormalGammaPrior {
            mu0: (self.lambda0 * self.mu0 + nf * mean) / lambda,
            lambda0: lambda,
            a0: self.a0 + 0.5 * nf,
            b0: self.b0
                + 0.5 * nf * var
                + self.lambda0 * nf * (mean - self.mu0).powi(2) / (2.0 * lambda),
        }
    }

    /// Draws `(μ, τ)`: `τ ~ Gamma(a, rate b)`, `μ | τ ~ N(μ0, 1/(λτ))`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let tau = Gamma::new(self.a0, 1.0 / self.b0)
            .expect("positive shape")
            .sample(rng);
        let sd = 1.0 / (self.lambda0 * tau).sqrt();
        let mu = Normal::new(self.mu0, sd).expect("finite sd").sample(rng);
        (mu, tau)
    }
}

/// Draws a kernel membership for each value given site weights.
pub fn gibbs_allocate_single_group<R: Rng + ?Sized>(
    values: &[f64],
    kernels: &[TruncNormalKernel],
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut out = vec![0u32; values.len()];
    allocate_into(values, kernels, weights, &mut out, rng)?;
    Ok(out)
}

fn allocate_into<R: Rng + ?Sized>(
    values: &[f64],
    kernels: &[TruncNormalKernel],
    weights: &[f64],
    out: &mut [u32],
    rng: &mut R,
) -> Result<()> {
    let k = kernels.len();
    if k == 1 {
        out.iter_mut().for_each(|a| *a = 0);
        return Ok(());
    }
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut terms = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    for (x, slot) in values.iter().zip(out.iter_mut()) {
        for ((t, kern), lw) in terms.iter_mut().zip(kernels).zip(&log_w) {
            *t = lw + kern.logpdf(*x);
        }
        let idx = categorical_from_log(&terms, &mut scratch, rng).ok_or_else(|| {
            Error::Numerical(format!(
                "value {x} has zero density under every weighted kernel"
            ))
        })?;
        *slot = idx as u32;
    }
    Ok(())
}

/// One `Dirichlet(α + counts)` draw.
pub fn draw_site_weights<R: Rng + ?Sized>(
    counts: &[u32],
    alpha: &ConcentrationVector,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if counts.len() != alpha.len() {
        return Err(Error::Data(format!(
            "{} counts for a concentration of length {}",
            counts.len(),
            alpha.len()
        )));
    }
    let mut out = vec![0.0; counts.len()];
    dirichlet_posterior_into(alpha.as_slice(), counts, &mut out, rng);
    Ok(out)
}

/// Sufficient statistics of the untruncated values assigned to one kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelStats {
    pub n: usize,
    pub mean: f64,
    /// Population variance (divide by `n`).
    pub var: f64,
}

/// Maps each value through `μ + σ Φ⁻¹(F(x))` under `kernel` and summarizes.
pub fn untruncated_stats(values: &[f64], kernel: &TruncNormalKernel) -> KernelStats {
    let n = values.len();
    if n == 0 {
        return KernelStats {
            n: 0,
            mean: 0.0,
            var: 0.0,
        };
    }
    let ys: Vec<f64> = values
        .iter()
        .map(|&x| kernel.untruncate(x, UNTRUNCATE_CLAMP))
        .collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    KernelStats { n, mean, var }
}

/// Redraws every kernel's `(μ, σ)` from its normal-gamma posterior given the
/// truncation-corrected values currently assigned to it. Empty kernels draw
/// from the prior. Draws are restricted to `μ ∈ KERNEL_MEAN_RANGE` and
/// `σ ≤ KERNEL_SIGMA_MAX` by rejection; a kernel with no representable mass
/// on `[0,1]` is rejected too. After 64 rejections the current kernel is kept.
pub fn update_kernel_params<R: Rng + ?Sized>(
    values_by_kernel: &[Vec<f64>],
    prior: &NormalGammaPrior,
    current: &[TruncNormalKernel],
    rng: &mut R,
) -> Vec<TruncNormalKernel> {
    values_by_kernel
        .iter()
        .zip(current)
        .map(|(vals, kern)| {
            let st = untruncated_stats(vals, kern);
            let post = prior.posterior(st.n, st.mean, st.var);
            for _ in 0..64 {
                let (mu, tau) = post.draw(rng);
                let sigma = 1.0 / tau.sqrt();
                if !(KERNEL_MEAN_RANGE.0..=KERNEL_MEAN_RANGE.1).contains(&mu)
                    || sigma > KERNEL_SIGMA_MAX
                {
                    continue;
                }
                if let Ok(k) = TruncNormalKernel::new(mu, sigma) {
                    return k;
                }
            }
            *kern
        })
        .collect()
}

/// Permutation that sorts kernels by mean; ties go to the smaller scale,
/// then to the original order. `perm[new] = old`.
pub fn mean_order(kernels: &[TruncNormalKernel]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..kernels.len()).collect();
    perm.sort_by(|&a, &b| {
        kernels[a]
            .mu()
            .total_cmp(&kernels[b].mu())
            .then(kernels[a].sigma().total_cmp(&kernels[b].sigma()))
    });
    perm
}

/// Mutable state of one stage-one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub kernels: Vec<TruncNormalKernel>,
    pub alpha: Vec<f64>,
    /// Row-major `M × K` site weights.
    pub weights: Vec<f64>,
    /// Row-major `M × N` 0-based memberships.
    pub assignments: Vec<u32>,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.kernels.len()
    }

    /// `Σ log π_{m,c} + log f_c(x)` over all observations.
    pub fn complete_loglik(&self, values: &[f64], n_subjects: usize) -> f64 {
        let k = self.k();
        let mut total = 0.0;
        for (m, row) in values.chunks_exact(n_subjects).enumerate() {
            for (n, &x) in row.iter().enumerate() {
                let c = self.assignments[m * n_subjects + n] as usize;
                total += self.weights[m * k + c].ln() + self.kernels[c].logpdf(x);
            }
        }
        total
    }
}

/// Reorders kernels by mean and permutes concentration, weights and
/// memberships to match. Returns the permutation applied (`perm[new] = old`).
pub fn relabel_by_mean(state: &mut ChainState) -> Vec<usize> {
    let perm = mean_order(&state.kernels);
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return perm;
    }
    let k = state.k();
    let mut inverse = vec![0u32; k];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new as u32;
    }
    state.kernels = perm.iter().map(|&o| state.kernels[o]).collect();
    state.alpha = perm.iter().map(|&o| state.alpha[o]).collect();
    for row in state.weights.chunks_exact_mut(k) {
        let old: Vec<f64> = row.to_vec();
        for (new, &o) in perm.iter().enumerate() {
            row[new] = old[o];
        }
    }
    for a in state.assignments.iter_mut() {
        *a = inverse[*a as usize];
    }
    perm
}

/// Result of the Dirichlet maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMle {
    pub alpha: ConcentrationVector,
    pub converged: bool,
    pub iterations: usize,
    pub initial_loglik: f64,
    pub final_loglik: f64,
}

const MLE_FLOOR: f64 = 1e-10;
const MLE_TOL: f64 = 1e-8;
const MLE_MAX_ITER: usize = 1000;

/// Dirichlet log-likelihood of rows summarized by their mean log entries.
pub fn dirichlet_loglik(alpha: &[f64], mean_log: &[f64], n_rows: usize) -> f64 {
    let total: f64 = alpha.iter().sum();
    let per_row = ln_gamma(total) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
        + alpha
            .iter()
            .zip(mean_log)
            .map(|(a, l)| (a - 1.0) * l)
            .sum::<f64>();
    n_rows as f64 * per_row
}

/// Inverts the digamma function by Newton's method.
pub fn inverse_digamma(y: f64) -> f64 {
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y - digamma_pos(1.0))
    };
    for _ in 0..8 {
        x -= (digamma_pos(x) - y) / trigamma_pos(x);
        if x <= 0.0 {
            x = 1e-12;
        }
    }
    x
}

/// Moment-matched starting point: the precision implied by each
/// coordinate's mean and second moment, averaged, times the mean vector.
pub fn moment_initial_alpha(rows: &[&[f64]]) -> Vec<f64> {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let mut m1 = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for r in rows {
        for i in 0..k {
            let p = r[i].max(MLE_FLOOR);
            m1[i] += p / n;
            m2[i] += p * p / n;
        }
    }
    let precisions: Vec<f64> = (0..k)
        .filter(|&i| m2[i] - m1[i] * m1[i] > 1e-300)
        .map(|i| (m1[i] - m2[i]) / (m2[i] - m1[i] * m1[i]))
        .filter(|s| s.is_finite() && *s > 0.0)
        .collect();
    let s = if precisions.is_empty() {
        1e6
    } else {
        (precisions.iter().sum::<f64>() / precisions.len() as f64).min(1e6)
    };
    m1.iter().map(|m| (s * m).max(0.01)).collect()
}

/// Maximum-likelihood Dirichlet concentration for a set of simplex rows.
///
/// Entries are floored at `1e-10` before logs are taken. Iterates the fixed
/// point `ψ(α_k) = ψ(Σα) + mean log π_k` from a moment-matched start until
/// `max |Δα_k| < 1e-8` or 1000 iterations; hitting the cap is reported via
/// `converged = false` rather than an error.
pub fn dirichlet_mle(rows: &[&[f64]]) -> Result<DirichletMle> {
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "Dirichlet MLE needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let k = rows[0].len();
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::Data(
            "Dirichlet MLE rows must share a positive length".into(),
        ));
    }
    if k == 1 {
        return Ok(DirichletMle {
            alpha: ConcentrationVector::new(vec![1.0])?,
            converged: true,
            iterations: 0,
            initial_loglik: 0.0,
            final_loglik: 0.0,
        });
    }
    let n = rows.len();
    let mut mean_log = vec![0.0; k];
    for r in rows {
        for (acc, &p) in mean_log.iter_mut().zip(r.iter()) {
            *acc += p.max(MLE_FLOOR).ln();
        }
    }
    mean_log.iter_mut().for_each(|v| *v /= n as f64);

    let mut alpha = moment_initial_alpha(rows);
    let initial_loglik = dirichlet_loglik(&alpha, &mean_log, n);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MLE_MAX_ITER {
        iterations += 1;
        let psi_total = digamma_pos(alpha.iter().sum());
        let mut delta: f64 = 0.0;
        for (a, l) in alpha.iter_mut().zip(&mean_log) {
            let next = inverse_digamma(psi_total + l);
            delta = delta.max((next - *a).abs());
            *a = next;
        }
        if !alpha.iter().all(|a| a.is_finite() && *a > 0.0) {
            return Err(Error::Numerical(
                "Dirichlet fixed point left the positive orthant".into(),
            ));
        }
        if delta < MLE_TOL {
            converged = true;
            break;
        }
    }
    let final_loglik = dirichlet_loglik(&alpha, &mean_log, n);
    Ok(DirichletMle {
        alpha: ConcentrationVector::new(alpha)?,
        converged,
        iterations,
        initial_loglik,
        final_loglik,
    })
}

/// Settings for a stage-one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryFitConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Number of sites drawn (without replacement) for fitting.
    pub subsample: usize,
}

impl Default for DictionaryFitConfig {
    fn default() -> Self {
        DictionaryFitConfig {
            iterations: 2000,
            burn_in: 500,
            seed: 0,
            subsample: 500,
        }
    }
}

/// Summary of one parameter's retained draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error of the mean by batch means.
    pub mc_se: f64,
}

impl TraceSummary {
    fn from_trace(name: String, trace: &[f64]) -> Self {
        let n = trace.len() as f64;
        let mean = trace.iter().sum::<f64>() / n;
        let sd = if trace.len() > 1 {
            (trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let batches = 20.min(trace.len());
        let mc_se = if batches >= 2 {
            let size = trace.len() / batches;
            let means: Vec<f64> = (0..batches)
                .map(|b| trace[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
                .collect();
            let bm = means.iter().sum::<f64>() / batches as f64;
            let var = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
            (var / batches as f64).sqrt()
        } else {
            sd
        };
        TraceSummary {
            name,
            mean,
            sd,
            mc_se,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryFitReport {
    pub dictionary: KernelDictionary,
    /// `K → mean held-out log-likelihood per observation`; empty when `K`
    /// was fixed rather than chosen.
    pub cv_table: BTreeMap<usize, f64>,
    pub n_sites_used: usize,
    pub chain_diagnostics: Vec<TraceSummary>,
    /// Dataset indices of the sites used for fitting.
    pub site_indices: Vec<usize>,
    /// Row-major posterior-mean weights for the fitted sites.
    pub site_weights: Vec<f64>,
    /// Iterations in which the concentration update hit its iteration cap.
    pub mle_nonconverged: usize,
}

/// Picks the fitting subsample: every site when `M ≤ subsample`, otherwise
/// a uniform draw without replacement, returned in dataset order.
pub fn choose_subsample(n_sites: usize, subsample: usize, seed: u64) -> Vec<usize> {
    if n_sites <= subsample {
        return (0..n_sites).collect();
    }
    let mut rng = stream_rng(seed, Stream::DictionarySubsample, 0, 0);
    let mut idx = sample_indices(&mut rng, n_sites, subsample).into_vec();
    idx.sort_unstable();
    idx
}

/// Fits a `K`-kernel dictionary on a subsample of the dataset's sites.
pub fn fit_dictionary(
    dataset: &ScreeningDataset,
    k: usize,
    prior: &NormalGammaPrior,
    config: &DictionaryFitConfig,
) -> Result<DictionaryFitReport> {
    let sites = choose_subsample(dataset.n_sites(), config.subsample, config.seed);
    let sub = dataset.select_sites(&sites);
    let mut report = fit_matrix(sub.values(), sub.n_subjects(), k, prior, config, 0)?;
    report.site_indices = sites;
    Ok(report)
}

fn initial_kernels(values: &[f64], k: usize) -> Result<Vec<TruncNormalKernel>> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sigma = (0.25 / k as f64).max(0.01);
    let mut prev = f64::NEG_INFINITY;
    (0..k)
        .map(|i| {
            let q = (i as f64 + 0.5) / k as f64;
            let idx = ((q * sorted.len() as f64) as usize).min(sorted.len() - 1);
            let mut mu = sorted[idx];
            if mu <= prev {
                mu = prev + 1e-6;
            }
            prev = mu;
            TruncNormalKernel::new(mu, sigma)
        })
        .collect()
}

/// Stage-one Gibbs loop on a row-major site-by-subject value matrix.
/// `chain` separates RNG streams of independent chains sharing a seed.
pub(crate) fn fit_matrix(
    values: &[f64],
    n_subjects: usize,
    k: usize,
    prior: &NormalGammaPrior,
    config: &DictionaryFitConfig,
    chain: u64,
) -> Result<DictionaryFitReport> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if config.iterations == 0 {
        return Err(Error::Config("iterations must be positive".into()));
    }
    if n_subjects == 0 || values.is_empty() {
        return Err(Error::Data("no observations to fit".into()));
    }
    let m = values.len() / n_subjects;
    let mut state = ChainState {
        kernels: initial_kernels(values, k)?,
        alpha: vec![1.0; k],
        weights: vec![1.0 / k as f64; m * k],
        assignments: vec![0; m * n_subjects],
    };

    let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(config.iterations); 3 * k];
    let mut weight_sums = vec![0.0; m * k];
    let mut mle_nonconverged = 0;
    let total = config.burn_in + config.iterations;
    // per-chain stream offset keeps chains disjoint
    let stream_base = chain.wrapping_mul(1 << 40);

    for iter in 0..total {
        let kernels = state.kernels.clone();
        let alpha = state.alpha.clone();
        state
            .assignments
            .par_chunks_mut(n_subjects)
            .zip(state.weights.par_chunks_mut(k))
            .zip(values.par_chunks(n_subjects))
            .enumerate()
            .try_for_each(|(site, ((assign, weights), row))| -> Result<()> {
                let mut rng = stream_rng(
                    config.seed,
                    Stream::DictionaryFit,
                    stream_base + site as u64,
                    iter as u64,
                );
                allocate_into(row, &kernels, weights, assign, &mut rng)?;
                let mut counts = vec![0u32; k];
                for &a in assign.iter() {
                    counts[a as usize] += 1;
                }
                dirichlet_posterior_into(&alpha, &counts, weights, &mut rng);
                Ok(())
            })?;

        let mut by_kernel: Vec<Vec<f64>> = vec![Vec::new(); k];
        for (&x, &a) in values.iter().zip(&state.assignments) {
            by_kernel[a as usize].push(x);
        }
        let mut rng = stream_rng(
            config.seed,
            Stream::DictionaryFit,
            stream_base + (1 << 39),
            iter as u64,
        );
        state.kernels = update_kernel_params(&by_kernel, prior, &state.kernels, &mut rng);
        relabel_by_mean(&mut state);

        if m >= 2 && k >= 2 {
            let rows: Vec<&[f64]> = state.weights.chunks_exact(k).collect();
            let mle = dirichlet_mle(&rows)?;
            if !mle.converged {
                mle_nonconverged += 1;
            }
            state.alpha = mle.alpha.as_slice().to_vec();
        }

        if iter >= config.burn_in {
            for (j, kern) in state.kernels.iter().enumerate() {
                traces[j].push(kern.mu());
                traces[k + j].push(kern.sigma());
                traces[2 * k + j].push(state.alpha[j]);
            }
            for (s, w) in weight_sums.iter_mut().zip(&state.weights) {
                *s += w;
            }
        }
    }

    let mean = |t: &[f64]| t.iter().sum::<f64>() / t.len() as f64;
    let kernels = (0..k)
        .map(|j| TruncNormalKernel::new(mean(&traces[j]), mean(&traces[k + j])))
        .collect::<Result<Vec<_>>>()?;
    let mut alpha: Vec<f64> = (0..k).map(|j| mean(&traces[2 * k + j])).collect();
    if k == 1 {
        alpha = vec![1.0];
    }
    let dictionary =
        KernelDictionary::new(kernels, ConcentrationVector::new(alpha)?).map_err(|e| {
            Error::Numerical(format!(
                "posterior-mean kernels are not strictly ordered: {e}"
            ))
        })?;

    let mut diagnostics = Vec::with_capacity(3 * k);
    for (block, name) in ["mu", "sigma", "alpha"].iter().enumerate() {
        for j in 0..k {
            diagnostics.push(TraceSummary::from_trace(
                format!("{name}_{}", j + 1),
                &traces[block * k + j],
            ));
        }
    }
    let site_weights = weight_sums.chunks_exact(k).flat_map(|row| {
        let t: f64 = row.iter().sum();
        row.iter().map(move |v| v / t).collect::<Vec<_>>()
    });
    Ok(DictionaryFitReport {
        dictionary,
        cv_table: BTreeMap::new(),
        n_sites_used: m,
        chain_diagnostics: diagnostics,
        site_indices: (0..m).collect(),
        site_weights: site_weights.collect(),
        mle_nonconverged,
    })
}

/// Runs an independent chain on the same subsample with a separate stream,
/// for chain-agreement checks.
pub fn fit_dictionary_chain(
    dataset: &ScreeningDataset,
    k: usize,
    prior: &NormalGammaPrior,
    config: &DictionaryFitConfig,
    chain: u64,
) -> Result<DictionaryFitReport> {
    let sites = choose_subsample(dataset.n_sites(), config.subsample, config.seed);
    let sub = dataset.select_sites(&sites);
    let mut report = fit_matrix(sub.values(), sub.n_subjects(), k, prior, config, chain)?;
    report.site_indices = sites;
    Ok(report)
}

/// Mean log-likelihood per observation of `values` (row-major, sites by
/// subjects) under site-specific weights and the dictionary kernels.
pub fn mean_heldout_loglik(
    values: &[f64],
    n_subjects: usize,
    dictionary: &KernelDictionary,
    site_weights: &[f64],
) -> f64 {
    let k = dictionary.k();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut terms = vec![0.0; k];
    for (m, row) in values.chunks_exact(n_subjects).enumerate() {
        let w = &site_weights[m * k..(m + 1) * k];
        for &x in row {
            for ((t, kern), wk) in terms.iter_mut().zip(dictionary.kernels()).zip(w) {
                *t = wk.ln() + kern.logpdf(x);
            }
            total += log_sum_exp(&terms);
            count += 1;
        }
    }
    total / count as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub cv_table: BTreeMap<usize, f64>,
    pub selected_k: usize,
    pub site_indices: Vec<usize>,
}

/// Chooses `K` by subject-wise cross-validation on the fitting subsample.
///
/// Subjects are shuffled once and dealt into `folds` folds. For each `K`
/// and fold the dictionary is fitted on the remaining subjects and scored by
/// the mean held-out log-likelihood under the posterior-mean kernels and
/// each site's posterior-mean weights. Ties favour the smaller `K`.
pub fn choose_k_by_cv(
    dataset: &ScreeningDataset,
    k_range: &[usize],
    folds: usize,
    prior: &NormalGammaPrior,
    config: &DictionaryFitConfig,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if k_range.is_empty() || k_range.contains(&0) {
        return Err(Error::Config(
            "K range must be non-empty and positive".into(),
        ));
    }
    let n = dataset.n_subjects();
    if n < folds {
        return Err(Error::Config(format!(
            "{folds} folds requested for {n} subjects"
        )));
    }
    let sites = choose_subsample(dataset.n_sites(), config.subsample, config.seed);
    let sub = dataset.select_sites(&sites);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(config.seed, Stream::CrossValidation, 0, 0));
    let mut fold_of = vec![0usize; n];
    for (pos, &subject) in order.iter().enumerate() {
        fold_of[subject] = pos % folds;
    }
    let split = |fold: usize, held: bool| -> Vec<f64> {
        let cols: Vec<usize> = (0..n).filter(|&j| (fold_of[j] == fold) == held).collect();
        (0..sub.n_sites())
            .flat_map(|m| {
                let row = sub.row(m);
                cols.iter().map(move |&j| row[j]).collect::<Vec<_>>()
            })
            .collect()
    };

    let jobs: Vec<(usize, usize)> = k_range
        .iter()
        .flat_map(|&k| (0..folds).map(move |f| (k, f)))
        .collect();
    let scores: Vec<(usize, f64, usize)> = jobs
        .par_iter()
        .map(|&(k, fold)| -> Result<(usize, f64, usize)> {
            let train = split(fold, false);
            let test = split(fold, true);
            let n_train = n - test.len() / sub.n_sites().max(1);
            let n_test = n - n_train;
            let fold_config = DictionaryFitConfig {
                seed: crate::rng::derive_seed(
                    config.seed,
                    Stream::CrossValidation,
                    k as u64,
                    fold as u64 + 1,
                ),
                ..config.clone()
            };
            let fit = fit_matrix(&train, n_train, k, prior, &fold_config, 0)?;
            let ll = mean_heldout_loglik(&test, n_test, &fit.dictionary, &fit.site_weights);
            Ok((k, ll * test.len() as f64, test.len()))
        })
        .collect::<Result<_>>()?;

    let mut cv_table = BTreeMap::new();
    for &k in k_range {
        let (sum, count) = scores
            .iter()
            .filter(|s| s.0 == k)
            .fold((0.0, 0usize), |acc, s| (acc.0 + s.1, acc.1 + s.2));
        cv_table.insert(k, sum / count as f64);
    }
    let selected_k = cv_table
        .iter()
        .fold((0usize, f64::NEG_INFINITY), |best, (&k, &v)| {
            if v > best.1 {
                (k, v)
            } else {
                best
            }
        })
        .0;
    Ok(CvReport {
        cv_table,
        selected_k,
        site_indices: sites,
    })
}
