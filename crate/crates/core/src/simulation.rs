//! Synthetic data generation, mixture densities on `[0, 1]`, total
//! variation distance and the KL projection onto a kernel span.

use rand::{Rng, RngCore};
use rand_distr::{Beta as BetaDist, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelDictionary, ScreeningDataset};
use crate::rng::{stream_rng, Stream};
use crate::sampling::dirichlet;
use crate::special::{ln_gamma, ConcentrationVector, TruncNormalKernel};

/// A density on `[0, 1]` that can be evaluated and sampled.
pub trait Density: Sync {
    fn logpdf(&self, x: f64) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }
}

impl Density for TruncNormalKernel {
    fn logpdf(&self, x: f64) -> f64 {
        TruncNormalKernel::logpdf(self, x)
    }
    fn sample(&self, mut rng: &mut dyn RngCore) -> f64 {
        TruncNormalKernel::sample(self, &mut rng)
    }
}

/// Beta density, used as a target outside the kernel family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDensity {
    a: f64,
    b: f64,
    log_norm: f64,
}

impl BetaDensity {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!(
                "Beta parameters must be positive, got ({a}, {b})"
            )));
        }
        Ok(BetaDensity {
            a,
            b,
            log_norm: ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b),
        })
    }
}

impl Density for BetaDensity {
    fn logpdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let la = if self.a == 1.0 {
            0.0
        } else {
            (self.a - 1.0) * x.ln()
        };
        let lb = if self.b == 1.0 {
            0.0
        } else {
            (self.b - 1.0) * (-x).ln_1p()
        };
        let v = self.log_norm + la + lb;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
    fn sample(&self, mut rng: &mut dyn RngCore) -> f64 {
        BetaDist::new(self.a, self.b)
            .expect("validated")
            .sample(&mut rng)
    }
}

/// `Σ π_k f_k` over truncated-normal kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    kernels: Vec<TruncNormalKernel>,
    weights: Vec<f64>,
}

impl MixtureDensity {
    pub fn new(kernels: Vec<TruncNormalKernel>, weights: Vec<f64>) -> Result<Self> {
        if kernels.is_empty() || kernels.len() != weights.len() {
            return Err(Error::Data(format!(
                "{} kernels with {} weights",
                kernels.len(),
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "mixture weights must lie on the simplex (sum {total})"
            )));
        }
        Ok(MixtureDensity { kernels, weights })
    }

    pub fn from_dictionary(dictionary: &KernelDictionary, weights: Vec<f64>) -> Result<Self> {
        MixtureDensity::new(dictionary.kernels().to_vec(), weights)
    }

    pub fn kernels(&self) -> &[TruncNormalKernel] {
        &self.kernels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws a component and then a value from it.
    pub fn sample_with_component<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut c = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                c = k;
                break;
            }
        }
        (c, self.kernels[c].sample(rng))
    }
}

impl Density for MixtureDensity {
    fn pdf(&self, x: f64) -> f64 {
        self.kernels
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| w * k.pdf(x))
            .sum()
    }
    fn logpdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .kernels
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| w.ln() + k.logpdf(x))
            .collect();
        crate::special::log_sum_exp(&terms)
    }
    fn sample(&self, mut rng: &mut dyn RngCore) -> f64 {
        self.sample_with_component(&mut rng).1
    }
}

/// Uniform grid on `[0, 1]` with composite-trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

pub const DEFAULT_GRID_POINTS: usize = 10_000;

impl Grid {
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config(
                "a quadrature grid needs at least 2 points".into(),
            ));
        }
        let h = 1.0 / (points - 1) as f64;
        let x = (0..points).map(|i| i as f64 * h).collect();
        let mut w = vec![h; points];
        w[0] = 0.5 * h;
        w[points - 1] = 0.5 * h;
        Ok(Grid { x, w })
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `½ ∫ |f − g|` on the given grid.
pub fn total_variation_on(f: &dyn Density, g: &dyn Density, grid: &Grid) -> f64 {
    (0.5 * grid.integrate(|x| (f.pdf(x) - g.pdf(x)).abs())).clamp(0.0, 1.0)
}

/// `½ ∫ |f − g|` on the default 10⁴-point grid.
pub fn total_variation(f: &dyn Density, g: &dyn Density) -> f64 {
    total_variation_on(
        f,
        g,
        &Grid::uniform(DEFAULT_GRID_POINTS).expect("valid grid"),
    )
}

/// Quadrature `KL(f0 || Σ π_k f_k)` with `0 · log 0 = 0`.
pub fn kl_divergence(
    f0: &dyn Density,
    kernels: &[TruncNormalKernel],
    weights: &[f64],
    grid: &Grid,
) -> f64 {
    let mix = MixtureDensity {
        kernels: kernels.to_vec(),
        weights: weights.to_vec(),
    };
    grid.integrate(|x| {
        let l0 = f0.logpdf(x);
        if l0 == f64::NEG_INFINITY {
            0.0
        } else {
            l0.exp() * (l0 - mix.logpdf(x))
        }
    })
}

/// Settings for [`kl_projection`].
#[derive(Debug, Clone, PartialEq)]
pub struct KlProjectionConfig {
    pub grid_points: usize,
    pub initial_step: f64,
    /// Spread allowed among `∫ f_k f0 / f*` over kernels with `π_k > support_floor`.
    pub tolerance: f64,
    pub support_floor: f64,
    pub max_iterations: usize,
}

impl Default for KlProjectionConfig {
    fn default() -> Self {
        KlProjectionConfig {
            grid_points: DEFAULT_GRID_POINTS,
            initial_step: 0.5,
            tolerance: 1e-5,
            support_floor: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlProjection {
    pub weights: Vec<f64>,
    pub kl: f64,
    /// `∫ f_k f0 / f*` per kernel at the returned weights.
    pub integrals: Vec<f64>,
    /// Spread of `integrals` over the supported kernels.
    pub stationarity_gap: f64,
    pub iterations: usize,
}

struct Projector {
    /// `w_i f0(x_i)` at grid points with positive target density.
    mass: Vec<f64>,
    log_f0: Vec<f64>,
    /// Row-major `points × K` kernel log-densities.
    log_f: Vec<f64>,
    k: usize,
}

impl Projector {
    fn new(f0: &dyn Density, kernels: &[TruncNormalKernel], grid: &Grid) -> Self {
        let k = kernels.len();
        let mut mass = Vec::new();
        let mut log_f0 = Vec::new();
        let mut log_f = Vec::new();
        for (&x, &w) in grid.x.iter().zip(&grid.w) {
            let l0 = f0.logpdf(x);
            if l0 == f64::NEG_INFINITY {
                continue;
            }
            mass.push(w * l0.exp());
            log_f0.push(l0);
            log_f.extend(kernels.iter().map(|kern| kern.logpdf(x)));
        }
        Projector {
            mass,
            log_f0,
            log_f,
            k,
        }
    }

    /// KL and the integrals `g_k = Σ_i mass_i f_k(x_i) / f*(x_i)`.
    fn evaluate(&self, pi: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
        let mut kl = 0.0;
        let mut terms = vec![0.0; self.k];
        for (i, (&m, &l0)) in self.mass.iter().zip(&self.log_f0).enumerate() {
            let row = &self.log_f[i * self.k..(i + 1) * self.k];
            for ((t, &lf), &lp) in terms.iter_mut().zip(row).zip(&log_pi) {
                *t = lp + lf;
            }
            let log_star = crate::special::log_sum_exp(&terms);
            kl += m * (l0 - log_star);
            for (gk, &lf) in g.iter_mut().zip(row) {
                *gk += m * (lf - log_star).exp();
            }
        }
        kl
    }
}

fn stationarity_gap(pi: &[f64], g: &[f64], floor: f64) -> f64 {
    let (lo, hi) = pi
        .iter()
        .zip(g)
        .filter(|(p, _)| **p > floor)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| {
            (lo.min(v), hi.max(v))
        });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Weights minimizing `KL(f0 || Σ π_k f_k)` over the simplex.
///
/// Exponentiated-gradient descent from uniform weights with step 0.5,
/// halved whenever a step would increase the objective. Stops once the
/// integrals `∫ f_k f0 / f*` agree within `tolerance` across kernels with
/// non-negligible weight.
pub fn kl_projection(
    f0: &dyn Density,
    kernels: &[TruncNormalKernel],
    config: &KlProjectionConfig,
) -> Result<KlProjection> {
    if kernels.is_empty() {
        return Err(Error::Config(
            "KL projection needs at least one kernel".into(),
        ));
    }
    let grid = Grid::uniform(config.grid_points)?;
    let proj = Projector::new(f0, kernels, &grid);
    let k = kernels.len();
    let mut pi = vec![1.0 / k as f64; k];
    let mut g = vec![0.0; k];
    let mut kl = proj.evaluate(&pi, &mut g);
    let mut step = config.initial_step;
    let mut trial = vec![0.0; k];
    let mut g_trial = vec![0.0; k];

    for iter in 0..config.max_iterations {
        let gap = stationarity_gap(&pi, &g, config.support_floor);
        if gap <= config.tolerance {
            return Ok(KlProjection {
                weights: pi,
                kl,
                integrals: g,
                stationarity_gap: gap,
                iterations: iter,
            });
        }
        loop {
            // multiplicative update in log space, normalized
            let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for ((t, &p), &gk) in trial.iter_mut().zip(&pi).zip(&g) {
                *t = p * (step * (gk - gmax)).exp();
            }
            let total: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|t| *t /= total);
            let kl_trial = proj.evaluate(&trial, &mut g_trial);
            if kl_trial <= kl + 1e-15 * kl.abs().max(1.0) || step < 1e-12 {
                pi.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                kl = kl_trial;
                break;
            }
            step *= 0.5;
        }
    }
    let gap = stationarity_gap(&pi, &g, config.support_floor);
    if gap <= config.tolerance {
        return Ok(KlProjection {
            weights: pi,
            kl,
            integrals: g,
            stationarity_gap: gap,
            iterations: config.max_iterations,
        });
    }
    Err(Error::NonConvergence {
        iterations: config.max_iterations,
        residual: gap,
        last: pi,
    })
}

/// Ranges of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetupConfig {
    /// `N` is drawn log-uniformly on this interval and rounded.
    pub n_range: (f64, f64),
    /// `K` is drawn uniformly on this inclusive range.
    pub k_range: (usize, usize),
    /// Lower bound on kernel scales so densities resolve on the quadrature grid.
    pub sigma_floor: f64,
    /// Forces the hypothesis instead of drawing it.
    pub force_h0: Option<bool>,
}

impl Default for SimSetupConfig {
    fn default() -> Self {
        SimSetupConfig {
            n_range: (10.0, 1e6),
            k_range: (2, 9),
            sigma_floor: 0.005,
            force_h0: None,
        }
    }
}

/// One draw of the generative protocol for a single site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_total: usize,
    pub k: usize,
    /// Sorted by mean.
    pub kernels: Vec<TruncNormalKernel>,
    pub h0: bool,
    pub weights_shared: Option<Vec<f64>>,
    pub weights0: Option<Vec<f64>>,
    pub weights1: Option<Vec<f64>>,
    /// Group label per subject.
    pub group: Vec<u8>,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn group_weights(&self) -> (&[f64], &[f64]) {
        match (&self.weights_shared, &self.weights0, &self.weights1) {
            (Some(w), _, _) => (w, w),
            (None, Some(a), Some(b)) => (a, b),
            _ => unreachable!("constructed with one of the two weight layouts"),
        }
    }

    pub fn group_densities(&self) -> (MixtureDensity, MixtureDensity) {
        let (w0, w1) = self.group_weights();
        (
            MixtureDensity {
                kernels: self.kernels.clone(),
                weights: w0.to_vec(),
            },
            MixtureDensity {
                kernels: self.kernels.clone(),
                weights: w1.to_vec(),
            },
        )
    }

    /// The generative kernels with a unit concentration.
    pub fn dictionary(&self) -> Result<KernelDictionary> {
        KernelDictionary::new(self.kernels.clone(), ConcentrationVector::uniform(self.k))
    }

    pub fn lambda0(&self) -> f64 {
        self.group.iter().filter(|&&g| g == 0).count() as f64 / self.n_total as f64
    }
}

/// Draws a generative specification with the `seed`'s simulation stream.
pub fn simulate_spec(seed: u64, config: &SimSetupConfig) -> Result<SimulationSpec> {
    let (n_lo, n_hi) = config.n_range;
    let (k_lo, k_hi) = config.k_range;
    if !(n_lo >= 2.0 && n_hi >= n_lo) || !(k_lo >= 1 && k_hi >= k_lo) {
        return Err(Error::Config("invalid simulation ranges".into()));
    }
    let mut rng = stream_rng(seed, Stream::Simulation, 0, 0);
    let n_total = (n_lo.ln() + rng.random::<f64>() * (n_hi.ln() - n_lo.ln()))
        .exp()
        .round() as usize;
    let k = rng.random_range(k_lo..=k_hi);
    let mut kernels = Vec::with_capacity(k);
    while kernels.len() < k {
        let mu: f64 = rng.random();
        let sigma = (rng.random::<f64>() / k as f64).max(config.sigma_floor);
        kernels.push(TruncNormalKernel::new(mu, sigma)?);
    }
    kernels.sort_by(|a, b| a.mu().total_cmp(&b.mu()));
    let h0 = config.force_h0.unwrap_or_else(|| rng.random_bool(0.5));
    let ones = vec![1.0; k];
    let (weights_shared, weights0, weights1) = if h0 {
        (Some(dirichlet(&ones, &mut rng)), None, None)
    } else {
        (
            None,
            Some(dirichlet(&ones, &mut rng)),
            Some(dirichlet(&ones, &mut rng)),
        )
    };
    let group = loop {
        let g: Vec<u8> = (0..n_total).map(|_| rng.random_bool(0.5) as u8).collect();
        if g.contains(&0) && g.contains(&1) {
            break g;
        }
    };
    Ok(SimulationSpec {
        n_total,
        k,
        kernels,
        h0,
        weights_shared,
        weights0,
        weights1,
        group,
        seed,
    })
}

/// A one-site dataset drawn from `spec`, with the true memberships.
pub fn sample_with_allocations(spec: &SimulationSpec) -> Result<(ScreeningDataset, Vec<u32>)> {
    let mut rng = stream_rng(spec.seed, Stream::Simulation, 1, 0);
    let (f0, f1) = spec.group_densities();
    let mut values = Vec::with_capacity(spec.n_total);
    let mut alloc = Vec::with_capacity(spec.n_total);
    for &g in &spec.group {
        let (c, x) = if g == 0 {
            f0.sample_with_component(&mut rng)
        } else {
            f1.sample_with_component(&mut rng)
        };
        values.push(x);
        alloc.push(c as u32);
    }
    let ds = ScreeningDataset::new(
        values,
        spec.group.clone(),
        vec![format!("sim{}", spec.seed)],
    )?;
    Ok((ds, alloc))
}

/// A one-site dataset drawn from `spec`.
pub fn sample_dataset(spec: &SimulationSpec) -> Result<ScreeningDataset> {
    Ok(sample_with_allocations(spec)?.0)
}
