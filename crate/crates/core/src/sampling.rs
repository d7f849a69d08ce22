//! Random draws used by both Gibbs samplers.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::special::log_sum_exp;

/// Draws `log G` for `G ~ Gamma(shape, 1)`.
///
/// Shapes below one use `G = G' · U^{1/shape}` with `G' ~ Gamma(shape + 1)`,
/// which keeps tiny shapes from underflowing to zero.
pub fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0)
            .expect("positive shape")
            .sample(rng)
            .ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        let u: f64 = loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        g.ln() + u.ln() / shape
    }
}

/// Writes one `Dirichlet(concentration)` draw into `out`.
pub fn dirichlet_into<R: Rng + ?Sized>(concentration: &[f64], out: &mut [f64], rng: &mut R) {
    debug_assert_eq!(concentration.len(), out.len());
    if out.len() == 1 {
        out[0] = 1.0;
        return;
    }
    for (o, &a) in out.iter_mut().zip(concentration) {
        *o = log_gamma_draw(a, rng);
    }
    let norm = log_sum_exp(out);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - norm).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; concentration.len()];
    dirichlet_into(concentration, &mut out, rng);
    out
}

/// Draws `Dirichlet(alpha + counts)`.
pub fn dirichlet_posterior_into<R: Rng + ?Sized>(
    alpha: &[f64],
    counts: &[u32],
    out: &mut [f64],
    rng: &mut R,
) {
    let conc: Vec<f64> = alpha
        .iter()
        .zip(counts)
        .map(|(a, &n)| a + n as f64)
        .collect();
    dirichlet_into(&conc, out, rng);
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b)
        .expect("positive beta parameters")
        .sample(rng)
}

/// Samples an index from unnormalized log-weights. `scratch` must have the
/// same length as `log_weights`. Returns `None` when every weight is `−∞`.
pub fn categorical_from_log<R: Rng + ?Sized>(
    log_weights: &[f64],
    scratch: &mut [f64],
    rng: &mut R,
) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return None;
    }
    let mut total = 0.0;
    for (s, &lw) in scratch.iter_mut().zip(log_weights) {
        let w = (lw - max).exp();
        total += w;
        *s = total;
    }
    let u = rng.random::<f64>() * total;
    let idx = scratch
        .iter()
        .position(|&c| u < c)
        .unwrap_or(log_weights.len() - 1);
    // never land on a zero-weight tail entry through rounding
    let mut idx = idx;
    while log_weights[idx] == f64::NEG_INFINITY && idx > 0 {
        idx -= 1;
    }
    Some(idx)
}
