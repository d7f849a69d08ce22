//! Independent Monte Carlo oracle for Dirichlet-multinomial marginal
//! likelihoods. Simplex points are normalized `rand_distr::Gamma` draws,
//! not the library's own sampler.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Mean and standard error of `Π π_k^{n_k}` under `Dir(α)`.
pub fn mc_moment<R: Rng>(n: &[u32], alpha: &[f64], draws: usize, rng: &mut R) -> (f64, f64) {
    let gammas: Vec<Gamma<f64>> = alpha.iter().map(|&a| Gamma::new(a, 1.0).unwrap()).collect();
    let (mut s, mut s2) = (0.0, 0.0);
    let mut pi = vec![0.0; alpha.len()];
    for _ in 0..draws {
        for (p, g) in pi.iter_mut().zip(&gammas) {
            *p = g.sample(rng);
        }
        let t: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= t);
        let v: f64 = pi.iter().zip(n).map(|(p, &c)| p.powi(c as i32)).product();
        s += v;
        s2 += v * v;
    }
    let m = s / draws as f64;
    let var = (s2 / draws as f64 - m * m).max(0.0);
    (m, (var / draws as f64).sqrt())
}

/// Monte Carlo estimate of `pr(H0 | C)` with a delta-method standard error,
/// using independent draw sets for the three marginal moments.
pub fn mc_posterior_h0<R: Rng>(
    n0: &[u32],
    n1: &[u32],
    alpha: &[f64],
    p0: f64,
    draws: usize,
    rng: &mut R,
) -> (f64, f64) {
    let total: Vec<u32> = n0.iter().zip(n1).map(|(a, b)| a + b).collect();
    let (a, sa) = mc_moment(&total, alpha, draws, rng);
    let (b, sb) = mc_moment(n0, alpha, draws, rng);
    let (c, sc) = mc_moment(n1, alpha, draws, rng);
    let d = p0 * a + (1.0 - p0) * b * c;
    let p = p0 * a / d;
    let k = p0 * (1.0 - p0) / (d * d);
    let da = k * b * c;
    let db = -k * a * c;
    let dc = -k * a * b;
    let se = ((da * sa).powi(2) + (db * sb).powi(2) + (dc * sc).powi(2)).sqrt();
    (p, se)
}
