//! Two-group screening with a fixed kernel dictionary.
//!
//! Given kernel memberships, the posterior probability that a site's two
//! groups share mixture weights has a closed form in multivariate beta
//! functions. The sampler alternates allocation, that closed form, weight
//! draws and a Beta update of the shared prior `P0`, and reports the
//! average of the closed-form probabilities over retained sweeps.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    GibbsConfig, KernelDictionary, P0Mode, ScreeningDataset, ScreeningResult, WeightDraw,
};
use crate::rng::{stream_rng, Stream};
use crate::sampling::{beta, categorical_from_log, dirichlet_into};
use crate::special::{log_add_exp, log_mv_beta_unchecked, ConcentrationVector};

/// Per-kernel membership counts for one site, split by group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteCounts<'a> {
    pub n0: &'a [u32],
    pub n1: &'a [u32],
}

impl<'a> SiteCounts<'a> {
    pub fn new(n0: &'a [u32], n1: &'a [u32]) -> Result<Self> {
        if n0.len() != n1.len() {
            return Err(Error::Data(format!(
                "group count vectors differ in length ({} vs {})",
                n0.len(),
                n1.len()
            )));
        }
        Ok(SiteCounts { n0, n1 })
    }

    pub fn k(&self) -> usize {
        self.n0.len()
    }

    pub fn totals(&self) -> (u64, u64) {
        let s0 = self.n0.iter().map(|&c| c as u64).sum();
        let s1 = self.n1.iter().map(|&c| c as u64).sum();
        (s0, s1)
    }
}

fn check_alpha(counts: &SiteCounts<'_>, alpha: &ConcentrationVector) -> Result<()> {
    if counts.k() != alpha.len() {
        return Err(Error::Data(format!(
            "counts have {} kernels, concentration has {}",
            counts.k(),
            alpha.len()
        )));
    }
    Ok(())
}

/// The three multivariate-beta terms `log β(n0+α)`, `log β(n1+α)`,
/// `log β(n+α)`.
fn log_beta_terms(n0: &[u32], n1: &[u32], alpha: &[f64]) -> (f64, f64, f64) {
    let (mut lg0, mut lg1, mut lg) = (0.0, 0.0, 0.0);
    let (mut s0, mut s1) = (0.0, 0.0);
    for ((&c0, &c1), &a) in n0.iter().zip(n1).zip(alpha) {
        let a0 = a + c0 as f64;
        let a1 = a + c1 as f64;
        let at = a + (c0 as u64 + c1 as u64) as f64;
        lg0 += crate::special::ln_gamma(a0);
        lg1 += crate::special::ln_gamma(a1);
        lg += crate::special::ln_gamma(at);
        s0 += a0;
        s1 += a1;
    }
    let sa: f64 = alpha.iter().sum();
    let total: u64 = n0.iter().zip(n1).map(|(&x, &y)| x as u64 + y as u64).sum();
    let st = sa + total as f64;
    (
        lg0 - crate::special::ln_gamma(s0),
        lg1 - crate::special::ln_gamma(s1),
        lg - crate::special::ln_gamma(st),
    )
}

/// `log pr(C | H0) = log β(n + α) − log β(α)` with `n = n0 + n1`.
pub fn log_prob_counts_h0(counts: &SiteCounts<'_>, alpha: &ConcentrationVector) -> Result<f64> {
    check_alpha(counts, alpha)?;
    let (_, _, lt) = log_beta_terms(counts.n0, counts.n1, alpha.as_slice());
    Ok(lt - alpha.log_mv_beta())
}

/// `log pr(C | H1) = log β(n0 + α) + log β(n1 + α) − 2 log β(α)`.
pub fn log_prob_counts_h1(counts: &SiteCounts<'_>, alpha: &ConcentrationVector) -> Result<f64> {
    check_alpha(counts, alpha)?;
    let (l0, l1, _) = log_beta_terms(counts.n0, counts.n1, alpha.as_slice());
    Ok(l0 + l1 - 2.0 * alpha.log_mv_beta())
}

/// `log pr(C | H0) − log pr(C | H1)`, the conditional log Bayes factor
/// without prior odds.
pub fn log_marginal_ratio(counts: &SiteCounts<'_>, alpha: &ConcentrationVector) -> Result<f64> {
    check_alpha(counts, alpha)?;
    Ok(log_marginal_ratio_raw(
        counts.n0,
        counts.n1,
        alpha.as_slice(),
        alpha.log_mv_beta(),
    ))
}

#[inline]
fn log_marginal_ratio_raw(n0: &[u32], n1: &[u32], alpha: &[f64], log_beta_alpha: f64) -> f64 {
    let (l0, l1, lt) = log_beta_terms(n0, n1, alpha);
    log_beta_alpha + lt - (l0 + l1)
}

/// Posterior log-odds of H0 given counts and prior `p0`.
pub fn log_posterior_odds_h0(
    counts: &SiteCounts<'_>,
    alpha: &ConcentrationVector,
    p0: f64,
) -> Result<f64> {
    check_p0(p0)?;
    Ok(prior_log_odds(p0) + log_marginal_ratio(counts, alpha)?)
}

fn check_p0(p0: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::Domain(format!("P0 must lie in [0,1], got {p0}")));
    }
    Ok(())
}

fn prior_log_odds(p0: f64) -> f64 {
    if p0 == 0.0 {
        f64::NEG_INFINITY
    } else if p0 == 1.0 {
        f64::INFINITY
    } else {
        p0.ln() - (-p0).ln_1p()
    }
}

/// `(log p, log(1 − p))` for `p = 1 / (1 + exp(−log_odds))`.
#[inline]
pub fn log_prob_pair(log_odds: f64) -> (f64, f64) {
    if log_odds == f64::INFINITY {
        return (0.0, f64::NEG_INFINITY);
    }
    if log_odds == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, 0.0);
    }
    // softplus evaluated on the side that does not overflow
    let softplus = |x: f64| {
        if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        }
    };
    (-softplus(-log_odds), -softplus(log_odds))
}

/// Closed-form `pr(H0 | C)`:
/// `P0 β(α) β(n+α) / {P0 β(α) β(n+α) + (1−P0) β(n0+α) β(n1+α)}`.
pub fn posterior_h0_given_counts(
    counts: &SiteCounts<'_>,
    alpha: &ConcentrationVector,
    p0: f64,
) -> Result<f64> {
    check_p0(p0)?;
    check_alpha(counts, alpha)?;
    if p0 == 0.0 || p0 == 1.0 {
        return Ok(p0);
    }
    let lo = log_posterior_odds_h0(counts, alpha, p0)?;
    Ok(log_prob_pair(lo).0.exp())
}

/// Draws a membership for each observation of one site.
///
/// `loglik` is row-major `N × K` with `log f_k(x_n)`; weights are the
/// current group-specific mixture weights.
pub fn gibbs_allocate_two_group<R: Rng + ?Sized>(
    loglik: &[f64],
    group: &[u8],
    weights0: &[f64],
    weights1: &[f64],
    out: &mut [u32],
    rng: &mut R,
) -> Result<()> {
    let k = weights0.len();
    let lw0: Vec<f64> = weights0.iter().map(|w| w.ln()).collect();
    let lw1: Vec<f64> = weights1.iter().map(|w| w.ln()).collect();
    let mut terms = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    for (n, (&g, slot)) in group.iter().zip(out.iter_mut()).enumerate() {
        let lw = if g == 0 { &lw0 } else { &lw1 };
        let row = &loglik[n * k..(n + 1) * k];
        for ((t, &l), &w) in terms.iter_mut().zip(row).zip(lw) {
            *t = l + w;
        }
        let idx = categorical_from_log(&terms, &mut scratch, rng).ok_or_else(|| {
            Error::Numerical(format!(
                "observation {} has zero density under every kernel",
                n + 1
            ))
        })?;
        *slot = idx as u32;
    }
    Ok(())
}

/// One draw of the group weights given counts and the site's `p_m`.
///
/// Returns `(weights0, weights1, shared)`; `shared` is the Bernoulli
/// indicator under [`WeightDraw::Augmented`] and `p_m ≥ 0.5` otherwise.
pub fn draw_two_group_weights<R: Rng + ?Sized>(
    counts: &SiteCounts<'_>,
    alpha: &ConcentrationVector,
    p_m: f64,
    mode: WeightDraw,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    check_alpha(counts, alpha)?;
    check_p0(p_m)?;
    let k = counts.k();
    let mut w0 = vec![0.0; k];
    let mut w1 = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    let shared = draw_weights_into(
        counts.n0,
        counts.n1,
        alpha.as_slice(),
        p_m,
        mode,
        &mut w0,
        &mut w1,
        &mut scratch,
        rng,
    );
    Ok((w0, w1, shared))
}

#[allow(clippy::too_many_arguments)]
fn draw_weights_into<R: Rng + ?Sized>(
    n0: &[u32],
    n1: &[u32],
    alpha: &[f64],
    p_m: f64,
    mode: WeightDraw,
    w0: &mut [f64],
    w1: &mut [f64],
    conc: &mut [f64],
    rng: &mut R,
) -> bool {
    match mode {
        WeightDraw::Augmented => {
            let shared = rng.random::<f64>() < p_m;
            if shared {
                for ((c, &a), (&x, &y)) in conc.iter_mut().zip(alpha).zip(n0.iter().zip(n1)) {
                    *c = a + x as f64 + y as f64;
                }
                dirichlet_into(conc, w0, rng);
                w1.copy_from_slice(w0);
            } else {
                fill_posterior(alpha, n0, conc);
                dirichlet_into(conc, w0, rng);
                fill_posterior(alpha, n1, conc);
                dirichlet_into(conc, w1, rng);
            }
            shared
        }
        WeightDraw::ConvexCombination => {
            let k = alpha.len();
            let mut common = vec![0.0; k];
            for ((c, &a), (&x, &y)) in conc.iter_mut().zip(alpha).zip(n0.iter().zip(n1)) {
                *c = a + x as f64 + y as f64;
            }
            dirichlet_into(conc, &mut common, rng);
            fill_posterior(alpha, n0, conc);
            dirichlet_into(conc, w0, rng);
            fill_posterior(alpha, n1, conc);
            dirichlet_into(conc, w1, rng);
            for i in 0..k {
                w0[i] = p_m * common[i] + (1.0 - p_m) * w0[i];
                w1[i] = p_m * common[i] + (1.0 - p_m) * w1[i];
            }
            p_m >= 0.5
        }
    }
}

fn fill_posterior(alpha: &[f64], counts: &[u32], out: &mut [f64]) {
    for ((o, &a), &c) in out.iter_mut().zip(alpha).zip(counts) {
        *o = a + c as f64;
    }
}

/// Draws `P0 ~ Beta(a + Σ p_m, b + M − Σ p_m)`.
pub fn update_p0<R: Rng + ?Sized>(
    site_probs: &[f64],
    prior: (f64, f64),
    rng: &mut R,
) -> Result<f64> {
    if let Some(p) = site_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("site probability {p} outside [0,1]")));
    }
    let (a, b) = prior;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "Beta prior must be positive, got ({a}, {b})"
        )));
    }
    let total: f64 = site_probs.iter().sum();
    let m = site_probs.len() as f64;
    Ok(beta(a + total, b + (m - total).max(0.0), rng))
}

/// Per-site component log-likelihoods, either cached for the whole run or
/// recomputed on demand.
enum LogLik {
    Cached(Vec<Vec<f64>>),
    OnDemand,
}

fn site_loglik(values: &[f64], dictionary: &KernelDictionary) -> Vec<f64> {
    let k = dictionary.k();
    let mut out = vec![0.0; values.len() * k];
    for (x, row) in values.iter().zip(out.chunks_exact_mut(k)) {
        dictionary.log_densities_into(*x, row);
    }
    out
}

struct SiteState {
    assignments: Vec<u32>,
    w0: Vec<f64>,
    w1: Vec<f64>,
    n0: Vec<u32>,
    n1: Vec<u32>,
    conc: Vec<f64>,
    sum_p: f64,
    log_sum_p: f64,
    log_sum_q: f64,
    sum_w0: Vec<f64>,
    sum_w1: Vec<f64>,
}

impl SiteState {
    fn new(n: usize, alpha: &[f64]) -> Self {
        let k = alpha.len();
        let total: f64 = alpha.iter().sum();
        let init: Vec<f64> = alpha.iter().map(|a| a / total).collect();
        SiteState {
            assignments: vec![0; n],
            w0: init.clone(),
            w1: init,
            n0: vec![0; k],
            n1: vec![0; k],
            conc: vec![0.0; k],
            sum_p: 0.0,
            log_sum_p: f64::NEG_INFINITY,
            log_sum_q: f64::NEG_INFINITY,
            sum_w0: vec![0.0; k],
            sum_w1: vec![0.0; k],
        }
    }
}

struct SweepContext<'a> {
    dictionary: &'a KernelDictionary,
    dataset: &'a ScreeningDataset,
    loglik: &'a LogLik,
    log_beta_alpha: f64,
    config: &'a GibbsConfig,
}

/// One site's update within a sweep: allocate, evaluate the closed-form
/// `p_m` under the current P0, redraw the weights. Returns `p_m`.
fn sweep_site(
    ctx: &SweepContext<'_>,
    site: usize,
    state: &mut SiteState,
    prior_lo: f64,
    sweep: usize,
    retain: bool,
) -> Result<f64> {
    let mut rng = stream_rng(ctx.config.seed, Stream::Screen, site as u64, sweep as u64);
    let group = ctx.dataset.group();
    let alpha = ctx.dictionary.alpha().as_slice();
    let recomputed;
    let loglik: &[f64] = match ctx.loglik {
        LogLik::Cached(v) => &v[site],
        LogLik::OnDemand => {
            recomputed = site_loglik(ctx.dataset.row(site), ctx.dictionary);
            &recomputed
        }
    };
    gibbs_allocate_two_group(
        loglik,
        group,
        &state.w0,
        &state.w1,
        &mut state.assignments,
        &mut rng,
    )
    .map_err(|e| Error::Numerical(format!("site {}: {e}", ctx.dataset.site_ids()[site])))?;

    state.n0.iter_mut().for_each(|c| *c = 0);
    state.n1.iter_mut().for_each(|c| *c = 0);
    for (&a, &g) in state.assignments.iter().zip(group) {
        if g == 0 {
            state.n0[a as usize] += 1;
        } else {
            state.n1[a as usize] += 1;
        }
    }

    let lo = prior_lo + log_marginal_ratio_raw(&state.n0, &state.n1, alpha, ctx.log_beta_alpha);
    let (log_p, log_q) = log_prob_pair(lo);
    let p = log_p.exp();

    draw_weights_into(
        &state.n0,
        &state.n1,
        alpha,
        p,
        ctx.config.weight_draw,
        &mut state.w0,
        &mut state.w1,
        &mut state.conc,
        &mut rng,
    );

    if retain {
        state.sum_p += p;
        state.log_sum_p = log_add_exp(state.log_sum_p, log_p);
        state.log_sum_q = log_add_exp(state.log_sum_q, log_q);
        for (s, w) in state.sum_w0.iter_mut().zip(&state.w0) {
            *s += w;
        }
        for (s, w) in state.sum_w1.iter_mut().zip(&state.w1) {
            *s += w;
        }
    }
    Ok(p)
}

/// Runs the two-group sampler over every site with the dictionary held fixed.
///
/// Each sweep updates sites in parallel with per-(site, sweep) RNG streams,
/// then draws `P0` once. Output is identical for any thread count.
pub fn screen(
    dataset: &ScreeningDataset,
    dictionary: &KernelDictionary,
    config: &GibbsConfig,
) -> Result<ScreeningResult> {
    config.validate()?;
    let m = dataset.n_sites();
    let n = dataset.n_subjects();
    let k = dictionary.k();
    let alpha = dictionary.alpha().as_slice();

    let cache_bytes = m.saturating_mul(n).saturating_mul(k).saturating_mul(8);
    let loglik = if cache_bytes <= config.cache_budget_bytes {
        LogLik::Cached(
            (0..m)
                .into_par_iter()
                .map(|s| site_loglik(dataset.row(s), dictionary))
                .collect(),
        )
    } else {
        LogLik::OnDemand
    };
    let ctx = SweepContext {
        dictionary,
        dataset,
        loglik: &loglik,
        log_beta_alpha: log_mv_beta_unchecked(alpha),
        config,
    };

    let mut states: Vec<SiteState> = (0..m).map(|_| SiteState::new(n, alpha)).collect();
    let mut p0 = match config.p0_mode {
        P0Mode::Learned => config.p0_prior.0 / (config.p0_prior.0 + config.p0_prior.1),
        P0Mode::Fixed(v) => v,
    };
    let mut p0_draws = Vec::with_capacity(config.iterations);
    let total_sweeps = config.burn_in + config.iterations;

    for sweep in 0..total_sweeps {
        let retain = sweep >= config.burn_in;
        let prior_lo = prior_log_odds(p0);
        let probs: Vec<f64> = states
            .par_iter_mut()
            .enumerate()
            .map(|(site, st)| sweep_site(&ctx, site, st, prior_lo, sweep, retain))
            .collect::<Result<_>>()?;
        if config.p0_mode == P0Mode::Learned {
            let mut rng = stream_rng(config.seed, Stream::ScreenP0, sweep as u64, 0);
            p0 = update_p0(&probs, config.p0_prior, &mut rng)?;
        }
        if retain {
            p0_draws.push(p0);
        }
    }

    let t = config.iterations as f64;
    let mut post_h0 = Vec::with_capacity(m);
    let mut log_odds = Vec::with_capacity(m);
    let mut mw0 = Vec::with_capacity(m * k);
    let mut mw1 = Vec::with_capacity(m * k);
    for st in &states {
        post_h0.push((st.sum_p / t).clamp(0.0, 1.0));
        log_odds.push(st.log_sum_p - st.log_sum_q);
        push_normalized(&mut mw0, &st.sum_w0);
        push_normalized(&mut mw1, &st.sum_w1);
    }
    Ok(ScreeningResult {
        site_ids: dataset.site_ids().to_vec(),
        k,
        post_h0,
        log_odds_h0: log_odds,
        p0_draws,
        mean_weights0: mw0,
        mean_weights1: mw1,
    })
}

fn push_normalized(out: &mut Vec<f64>, sums: &[f64]) {
    let total: f64 = sums.iter().sum();
    out.extend(sums.iter().map(|s| s / total));
}

/// Uniformly permutes group labels, preserving group sizes.
pub fn permute_labels<R: Rng + ?Sized>(group: &[u8], rng: &mut R) -> Vec<u8> {
    let mut g = group.to_vec();
    g.shuffle(rng);
    g
}

/// Re-runs [`screen`] under `n_perm` random relabelings of the subjects.
/// Row `i` of the result holds `post_h0` for permutation `i`.
pub fn permutation_null(
    dataset: &ScreeningDataset,
    dictionary: &KernelDictionary,
    config: &GibbsConfig,
    n_perm: usize,
    perm_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_perm == 0 {
        return Err(Error::Config("at least one permutation is required".into()));
    }
    (0..n_perm)
        .map(|i| {
            let mut rng = stream_rng(perm_seed, Stream::Permutation, i as u64, 0);
            let permuted = dataset.with_group(permute_labels(dataset.group(), &mut rng))?;
            Ok(screen(&permuted, dictionary, config)?.post_h0)
        })
        .collect()
}
