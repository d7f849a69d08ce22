//! Domain types shared by dictionary fitting and screening.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log_sum_exp, ConcentrationVector, TruncNormalKernel};

/// An `M × N` matrix of observations in `[0, 1]` (sites by subjects) with a
/// binary group label per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningDataset {
    values: Vec<f64>,
    n_subjects: usize,
    group: Vec<u8>,
    site_ids: Vec<String>,
}

impl ScreeningDataset {
    /// `values` is row-major with one row per site.
    pub fn new(values: Vec<f64>, group: Vec<u8>, site_ids: Vec<String>) -> Result<Self> {
        let n = group.len();
        let m = site_ids.len();
        if values.len() != m * n {
            return Err(Error::Data(format!(
                "value matrix has {} entries, expected {m} sites x {n} subjects",
                values.len()
            )));
        }
        if let Some(g) = group.iter().find(|g| **g > 1) {
            return Err(Error::Data(format!("group labels must be 0 or 1, got {g}")));
        }
        let n1 = group.iter().filter(|g| **g == 1).count();
        if n1 == 0 || n1 == n {
            return Err(Error::Data(
                "both groups must contain at least one subject".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!(
                "value {} at site {}, subject {} is outside [0,1]",
                values[i],
                site_ids[i / n],
                i % n + 1
            )));
        }
        Ok(ScreeningDataset {
            values,
            n_subjects: n,
            group,
            site_ids,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn group(&self) -> &[u8] {
        &self.group
    }

    /// Group sizes `(N0, N1)`.
    pub fn group_sizes(&self) -> (usize, usize) {
        let n1 = self.group.iter().filter(|g| **g == 1).count();
        (self.n_subjects - n1, n1)
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn row(&self, site: usize) -> &[f64] {
        &self.values[site * self.n_subjects..(site + 1) * self.n_subjects]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same observations with a different labelling of the subjects.
    pub fn with_group(&self, group: Vec<u8>) -> Result<Self> {
        ScreeningDataset::new(self.values.clone(), group, self.site_ids.clone())
    }

    /// Keeps the listed sites, in the given order.
    pub fn select_sites(&self, sites: &[usize]) -> Self {
        let mut values = Vec::with_capacity(sites.len() * self.n_subjects);
        let mut ids = Vec::with_capacity(sites.len());
        for &s in sites {
            values.extend_from_slice(self.row(s));
            ids.push(self.site_ids[s].clone());
        }
        ScreeningDataset {
            values,
            n_subjects: self.n_subjects,
            group: self.group.clone(),
            site_ids: ids,
        }
    }

    /// Keeps the listed subjects (columns). Fails if a group ends up empty.
    pub fn select_subjects(&self, subjects: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_sites() * subjects.len());
        for m in 0..self.n_sites() {
            let row = self.row(m);
            values.extend(subjects.iter().map(|&j| row[j]));
        }
        let group = subjects.iter().map(|&j| self.group[j]).collect();
        ScreeningDataset::new(values, group, self.site_ids.clone())
    }
}

/// `K` truncated-normal kernels ordered by mean, plus the shared Dirichlet
/// concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DictionaryParts", into = "DictionaryParts")]
pub struct KernelDictionary {
    kernels: Vec<TruncNormalKernel>,
    alpha: ConcentrationVector,
}

#[derive(Serialize, Deserialize)]
struct DictionaryParts {
    kernels: Vec<TruncNormalKernel>,
    alpha: ConcentrationVector,
}

impl TryFrom<DictionaryParts> for KernelDictionary {
    type Error = Error;
    fn try_from(p: DictionaryParts) -> Result<Self> {
        KernelDictionary::new(p.kernels, p.alpha)
    }
}

impl From<KernelDictionary> for DictionaryParts {
    fn from(d: KernelDictionary) -> Self {
        DictionaryParts {
            kernels: d.kernels,
            alpha: d.alpha,
        }
    }
}

impl KernelDictionary {
    pub fn new(kernels: Vec<TruncNormalKernel>, alpha: ConcentrationVector) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Data("a dictionary needs at least one kernel".into()));
        }
        if kernels.len() != alpha.len() {
            return Err(Error::Data(format!(
                "{} kernels but concentration of length {}",
                kernels.len(),
                alpha.len()
            )));
        }
        if kernels.windows(2).any(|w| !(w[0].mu() < w[1].mu())) {
            return Err(Error::Data(
                "kernel means must be strictly increasing".into(),
            ));
        }
        Ok(KernelDictionary { kernels, alpha })
    }

    pub fn k(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[TruncNormalKernel] {
        &self.kernels
    }

    pub fn alpha(&self) -> &ConcentrationVector {
        &self.alpha
    }

    pub fn with_alpha(&self, alpha: ConcentrationVector) -> Result<Self> {
        KernelDictionary::new(self.kernels.clone(), alpha)
    }

    /// Per-kernel log densities at `x`.
    pub fn log_densities_into(&self, x: f64, out: &mut [f64]) {
        for (o, k) in out.iter_mut().zip(&self.kernels) {
            *o = k.logpdf(x);
        }
    }

    pub fn mixture_logpdf(&self, x: f64, weights: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .kernels
            .iter()
            .zip(weights)
            .map(|(k, w)| {
                if *w > 0.0 {
                    w.ln() + k.logpdf(x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        log_sum_exp(&terms)
    }
}

/// Tabulates per-site kernel counts split by group.
///
/// `assignments` is row-major `M × N` with 0-based kernel indices. Returns
/// row-major `M × K` count matrices for group 0 and group 1.
pub fn tabulate_counts(
    assignments: &[u32],
    group: &[u8],
    k: usize,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let n = group.len();
    if n == 0 {
        if assignments.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        return Err(Error::Data("assignments given for zero subjects".into()));
    }
    if assignments.len() % n != 0 {
        return Err(Error::Data(
            "assignment matrix is not a whole number of sites".into(),
        ));
    }
    let m = assignments.len() / n;
    let mut counts0 = vec![0u32; m * k];
    let mut counts1 = vec![0u32; m * k];
    for (site, row) in assignments.chunks_exact(n).enumerate() {
        for (&a, &g) in row.iter().zip(group) {
            let a = a as usize;
            if a >= k {
                return Err(Error::Data(format!(
                    "kernel index {} out of range 1..={k} at site {}",
                    a + 1,
                    site + 1
                )));
            }
            if g == 0 {
                counts0[site * k + a] += 1;
            } else {
                counts1[site * k + a] += 1;
            }
        }
    }
    Ok((counts0, counts1))
}

/// Kernel memberships for every observation and their per-group tabulation.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState {
    k: usize,
    group: Vec<u8>,
    assignments: Vec<u32>,
    counts0: Vec<u32>,
    counts1: Vec<u32>,
}

impl AllocationState {
    pub fn new(assignments: Vec<u32>, group: Vec<u8>, k: usize) -> Result<Self> {
        let (counts0, counts1) = tabulate_counts(&assignments, &group, k)?;
        Ok(AllocationState {
            k,
            group,
            assignments,
            counts0,
            counts1,
        })
    }

    pub fn n_sites(&self) -> usize {
        if self.group.is_empty() {
            0
        } else {
            self.assignments.len() / self.group.len()
        }
    }

    pub fn assignment(&self, site: usize, subject: usize) -> u32 {
        self.assignments[site * self.group.len() + subject]
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn counts0(&self, site: usize) -> &[u32] {
        &self.counts0[site * self.k..(site + 1) * self.k]
    }

    pub fn counts1(&self, site: usize) -> &[u32] {
        &self.counts1[site * self.k..(site + 1) * self.k]
    }

    /// Moves one observation to `kernel`, updating the two affected cells.
    pub fn reassign(&mut self, site: usize, subject: usize, kernel: u32) -> Result<()> {
        if kernel as usize >= self.k {
            return Err(Error::Data(format!(
                "kernel index {} out of range",
                kernel + 1
            )));
        }
        let idx = site * self.group.len() + subject;
        let old = self.assignments[idx] as usize;
        let counts = if self.group[subject] == 0 {
            &mut self.counts0
        } else {
            &mut self.counts1
        };
        counts[site * self.k + old] -= 1;
        counts[site * self.k + kernel as usize] += 1;
        self.assignments[idx] = kernel;
        Ok(())
    }
}

/// How the global prior probability of "no difference" is handled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P0Mode {
    /// Beta-prior update once per sweep.
    Learned,
    Fixed(f64),
}

/// How the two group weight vectors are drawn given the site's `p_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDraw {
    /// Bernoulli(`p_m`) indicator, then a shared or two independent draws.
    #[default]
    Augmented,
    /// `p_m · shared + (1 − p_m) · group-specific`.
    ConvexCombination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Retained sweeps after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Beta prior `(a, b)` on P0.
    pub p0_prior: (f64, f64),
    pub p0_mode: P0Mode,
    #[serde(default)]
    pub weight_draw: WeightDraw,
    /// Above this many bytes the component log-likelihood cache is skipped
    /// and densities are recomputed per site.
    pub cache_budget_bytes: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iterations: 5000,
            burn_in: 1000,
            seed: 0,
            p0_prior: (1.0, 1.0),
            p0_mode: P0Mode::Learned,
            weight_draw: WeightDraw::Augmented,
            cache_budget_bytes: 1 << 30,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        let (a, b) = self.p0_prior;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!(
                "P0 prior must be positive, got ({a}, {b})"
            )));
        }
        if let P0Mode::Fixed(p) = self.p0_mode {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "fixed P0 must lie in [0,1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Output of a screening run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningResult {
    pub site_ids: Vec<String>,
    pub k: usize,
    /// Rao–Blackwellized posterior probability of no difference per site.
    pub post_h0: Vec<f64>,
    /// `log{pr(H0|X)/pr(H1|X)}` per site, accumulated in log space so it
    /// stays finite when `post_h0` rounds to 0 or 1.
    pub log_odds_h0: Vec<f64>,
    /// Retained P0 draws, one per post-burn-in sweep.
    pub p0_draws: Vec<f64>,
    /// Row-major `M × K` posterior-mean weights for group 0.
    pub mean_weights0: Vec<f64>,
    pub mean_weights1: Vec<f64>,
}

impl ScreeningResult {
    pub fn n_sites(&self) -> usize {
        self.post_h0.len()
    }

    pub fn weights0(&self, site: usize) -> &[f64] {
        &self.mean_weights0[site * self.k..(site + 1) * self.k]
    }

    pub fn weights1(&self, site: usize) -> &[f64] {
        &self.mean_weights1[site * self.k..(site + 1) * self.k]
    }

    pub fn p0_mean(&self) -> f64 {
        if self.p0_draws.is_empty() {
            return f64::NAN;
        }
        self.p0_draws.iter().sum::<f64>() / self.p0_draws.len() as f64
    }
}
