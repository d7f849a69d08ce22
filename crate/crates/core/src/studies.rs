//! Replicated simulation studies: Bayes factor growth rates, distribution
//! recovery and consistency under misspecification. Replicates run in
//! parallel, each on its own seeded stream.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{normalized_bf_h0, normalized_bf_h1};
use crate::error::{Error, Result};
use crate::model::{tabulate_counts, GibbsConfig, KernelDictionary, P0Mode, ScreeningDataset};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::screening::{log_marginal_ratio, screen, SiteCounts};
use crate::simulation::{
    kl_projection, sample_with_allocations, simulate_spec, total_variation, Density,
    KlProjectionConfig, MixtureDensity, SimSetupConfig, SimulationSpec,
};

/// How the rate study obtains the site's log Bayes factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocations {
    /// Two-group Gibbs sampler with the generative kernels fixed.
    Sampled,
    /// Closed-form odds evaluated at the true memberships.
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyConfig {
    pub replicates: usize,
    pub seed: u64,
    pub sim: SimSetupConfig,
    pub gibbs: GibbsConfig,
    pub allocations: Allocations,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        RateStudyConfig {
            replicates: 200,
            seed: 0,
            sim: SimSetupConfig {
                n_range: (1e2, 1e5),
                k_range: (2, 5),
                ..Default::default()
            },
            gibbs: GibbsConfig {
                iterations: 500,
                burn_in: 100,
                p0_mode: P0Mode::Fixed(0.5),
                ..Default::default()
            },
            allocations: Allocations::Sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub replicate: usize,
    pub n: usize,
    pub k: usize,
    pub h0: bool,
    pub lambda0: f64,
    pub log_bf: f64,
    pub normalized_bf: f64,
}

fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    derive_seed(seed, Stream::Study, replicate as u64, 0)
}

/// Log Bayes factor for one site with the prior odds removed.
fn site_log_bf(
    ds: &ScreeningDataset,
    dict: &KernelDictionary,
    gibbs: &GibbsConfig,
    seed: u64,
) -> Result<f64> {
    let cfg = GibbsConfig {
        seed,
        ..gibbs.clone()
    };
    let res = screen(ds, dict, &cfg)?;
    let prior = match cfg.p0_mode {
        P0Mode::Fixed(p) if p > 0.0 && p < 1.0 => p.ln() - (1.0 - p).ln(),
        _ => {
            return Err(Error::Config(
                "the rate study needs P0 fixed strictly inside (0,1)".into(),
            ))
        }
    };
    Ok(res.log_odds_h0[0] - prior)
}

fn rate_row(replicate: usize, config: &RateStudyConfig) -> Result<RateRow> {
    let seed = replicate_seed(config.seed, replicate);
    let spec = simulate_spec(seed, &config.sim)?;
    let (ds, alloc) = sample_with_allocations(&spec)?;
    let dict = spec.dictionary()?;
    let log_bf = match config.allocations {
        Allocations::Sampled => site_log_bf(&ds, &dict, &config.gibbs, seed)?,
        Allocations::Known => {
            let (n0, n1) = tabulate_counts(&alloc, &spec.group, spec.k)?;
            log_marginal_ratio(&SiteCounts::new(&n0, &n1)?, dict.alpha())?
        }
    };
    let lambda0 = spec.lambda0();
    let normalized_bf = if spec.h0 {
        normalized_bf_h0(log_bf, spec.k)?
    } else {
        let (w0, w1) = spec.group_weights();
        normalized_bf_h1(log_bf, w0, w1, lambda0)?
    };
    Ok(RateRow {
        replicate,
        n: spec.n_total,
        k: spec.k,
        h0: spec.h0,
        lambda0,
        log_bf,
        normalized_bf,
    })
}

/// Simulates `replicates` sites and reports their normalized Bayes factors.
pub fn rate_study(config: &RateStudyConfig) -> Result<Vec<RateRow>> {
    (0..config.replicates)
        .into_par_iter()
        .map(|r| rate_row(r, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub replicates: usize,
    pub n_values: Vec<usize>,
    pub seed: u64,
    pub sim: SimSetupConfig,
    pub gibbs: GibbsConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            replicates: 50,
            n_values: vec![1_000, 10_000],
            seed: 0,
            sim: SimSetupConfig::default(),
            gibbs: GibbsConfig {
                iterations: 500,
                burn_in: 100,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub n: usize,
    pub h0: bool,
    pub replicate: usize,
    pub k: usize,
    pub tv_two_group: f64,
    pub tv_separate: f64,
    pub tv_common: f64,
}

fn group_tv(spec: &SimulationSpec, dict: &KernelDictionary, w0: &[f64], w1: &[f64]) -> Result<f64> {
    let (g0, g1) = spec.group_densities();
    let e0 = MixtureDensity::from_dictionary(dict, w0.to_vec())?;
    let e1 = MixtureDensity::from_dictionary(dict, w1.to_vec())?;
    Ok(0.5 * (total_variation(&e0, &g0) + total_variation(&e1, &g1)))
}

fn recovery_row(
    n: usize,
    h0: bool,
    replicate: usize,
    config: &RecoveryConfig,
) -> Result<RecoveryRow> {
    let seed = derive_seed(
        config.seed,
        Stream::Study,
        replicate as u64,
        (n as u64) << 1 | h0 as u64,
    );
    let sim = SimSetupConfig {
        n_range: (n as f64, n as f64),
        force_h0: Some(h0),
        ..config.sim.clone()
    };
    let spec = simulate_spec(seed, &sim)?;
    let ds = sample_with_allocations(&spec)?.0;
    let dict = spec.dictionary()?;
    let fit = |mode: P0Mode| -> Result<f64> {
        let cfg = GibbsConfig {
            seed,
            p0_mode: mode,
            ..config.gibbs.clone()
        };
        let res = screen(&ds, &dict, &cfg)?;
        group_tv(&spec, &dict, res.weights0(0), res.weights1(0))
    };
    Ok(RecoveryRow {
        n,
        h0,
        replicate,
        k: spec.k,
        tv_two_group: fit(config.gibbs.p0_mode)?,
        tv_separate: fit(P0Mode::Fixed(0.0))?,
        tv_common: fit(P0Mode::Fixed(1.0))?,
    })
}

/// Compares the two-group fit with separate and common fits by total
/// variation to the generative group densities, for both hypotheses.
pub fn recovery_study(config: &RecoveryConfig) -> Result<Vec<RecoveryRow>> {
    let jobs: Vec<(usize, bool, usize)> = config
        .n_values
        .iter()
        .flat_map(|&n| {
            [true, false]
                .into_iter()
                .flat_map(move |h| (0..config.replicates).map(move |r| (n, h, r)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(n, h, r)| recovery_row(n, h, r, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub gibbs: GibbsConfig,
    /// Projections closer than this in max-norm count as equal.
    pub projection_tolerance: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            n_grid: vec![100, 1_000, 10_000],
            replicates: 10,
            seed: 0,
            gibbs: GibbsConfig {
                iterations: 500,
                burn_in: 100,
                p0_mode: P0Mode::Fixed(0.5),
                ..Default::default()
            },
            projection_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub replicate: usize,
    pub post_h0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub projection0: Vec<f64>,
    pub projection1: Vec<f64>,
    /// Both densities project to the same kernel combination, so the test
    /// is not expected to separate them.
    pub degenerate: bool,
    pub rows: Vec<ConsistencyRow>,
}

/// Two-group dataset with alternating labels, group 0 from `f0`.
pub fn sample_pair(
    f0: &dyn Density,
    f1: &dyn Density,
    n: usize,
    seed: u64,
) -> Result<ScreeningDataset> {
    let mut rng = stream_rng(seed, Stream::Study, n as u64, 1);
    let group: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let values = group
        .iter()
        .map(|&g| {
            if g == 0 {
                f0.sample(&mut rng)
            } else {
                f1.sample(&mut rng)
            }
        })
        .collect();
    ScreeningDataset::new(values, group, vec!["pair".into()])
}

/// Screens data from `(f0, f1)` at each sample size with the dictionary held
/// fixed and reports the posterior probability of no difference.
pub fn consistency_study(
    f0: &dyn Density,
    f1: &dyn Density,
    dictionary: &KernelDictionary,
    config: &ConsistencyConfig,
) -> Result<ConsistencyReport> {
    let kp = KlProjectionConfig::default();
    let projection0 = kl_projection(f0, dictionary.kernels(), &kp)?.weights;
    let projection1 = kl_projection(f1, dictionary.kernels(), &kp)?.weights;
    let gap = projection0
        .iter()
        .zip(&projection1)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, replicate)| -> Result<ConsistencyRow> {
            let seed = derive_seed(config.seed, Stream::Study, replicate as u64, n as u64);
            let ds = sample_pair(f0, f1, n, seed)?;
            let res = screen(
                &ds,
                dictionary,
                &GibbsConfig {
                    seed,
                    ..config.gibbs.clone()
                },
            )?;
            Ok(ConsistencyRow {
                n,
                replicate,
                post_h0: res.post_h0[0],
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyReport {
        projection0,
        projection1,
        degenerate: gap < config.projection_tolerance,
        rows,
    })
}

/// Draws `m` sites from a fixed dictionary, a fraction `h0_fraction` of
/// them with shared weights. Returns the dataset and the true H0 flags.
pub fn simulate_screening_panel(
    dictionary: &KernelDictionary,
    m: usize,
    n: usize,
    h0_fraction: f64,
    seed: u64,
) -> Result<(ScreeningDataset, Vec<bool>)> {
    let mut rng = stream_rng(seed, Stream::Simulation, 2, 0);
    let alpha = dictionary.alpha().as_slice();
    let group: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let mut values = Vec::with_capacity(m * n);
    let mut truth = Vec::with_capacity(m);
    for _ in 0..m {
        let h0 = rng.random_bool(h0_fraction);
        let w0 = crate::sampling::dirichlet(alpha, &mut rng);
        let w1 = if h0 {
            w0.clone()
        } else {
            crate::sampling::dirichlet(alpha, &mut rng)
        };
        let d0 = MixtureDensity::new(dictionary.kernels().to_vec(), w0)?;
        let d1 = MixtureDensity::new(dictionary.kernels().to_vec(), w1)?;
        for &g in &group {
            let d = if g == 0 { &d0 } else { &d1 };
            values.push(d.sample_with_component(&mut rng).1);
        }
        truth.push(h0);
    }
    let ids = (0..m).map(|i| format!("site{i}")).collect();
    Ok((ScreeningDataset::new(values, group, ids)?, truth))
}
