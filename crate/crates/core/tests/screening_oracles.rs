mod common;

use rand::Rng;
use rayon::ThreadPoolBuilder;

use shared_kernel::rng::{stream_rng, Stream};
use shared_kernel::screening::{
    draw_two_group_weights, log_prob_counts_h0, permutation_null, permute_labels,
    posterior_h0_given_counts, screen, SiteCounts,
};
use shared_kernel::stats::ks_two_sample;
use shared_kernel::studies::simulate_screening_panel;
use shared_kernel::{
    ConcentrationVector, GibbsConfig, KernelDictionary, P0Mode, ScreeningDataset,
    TruncNormalKernel, WeightDraw,
};

fn separated_dictionary() -> KernelDictionary {
    KernelDictionary::new(
        vec![
            TruncNormalKernel::new(0.15, 0.05).unwrap(),
            TruncNormalKernel::new(0.5, 0.05).unwrap(),
            TruncNormalKernel::new(0.85, 0.05).unwrap(),
        ],
        ConcentrationVector::uniform(3),
    )
    .unwrap()
}

#[test]
fn marginal_h0_matches_monte_carlo() {
    let mut rng = stream_rng(21, Stream::Study, 0, 0);
    let n = [2u32, 1, 1];
    let alpha = [1.0, 1.0, 1.0];
    let (m, se) = common::mc_moment(&n, &alpha, 1_000_000, &mut rng);
    let exact = log_prob_counts_h0(
        &SiteCounts::new(&n, &[0, 0, 0]).unwrap(),
        &ConcentrationVector::new(alpha.to_vec()).unwrap(),
    )
    .unwrap()
    .exp();
    assert!((exact - 1.0 / 180.0).abs() < 1e-15);
    assert!((m - exact).abs() < 3.0 * se, "mc {m} ± {se}, exact {exact}");
}

#[test]
fn posterior_matches_monte_carlo_for_small_counts() {
    let mut rng = stream_rng(22, Stream::Study, 0, 0);
    for case in 0..4 {
        let k = rng.random_range(2..=3);
        let n0: Vec<u32> = (0..k).map(|_| rng.random_range(0..=5)).collect();
        let n1: Vec<u32> = (0..k).map(|_| rng.random_range(0..=5)).collect();
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
        let p0 = rng.random_range(0.2..0.8);
        let exact = posterior_h0_given_counts(
            &SiteCounts::new(&n0, &n1).unwrap(),
            &ConcentrationVector::new(alpha.clone()).unwrap(),
            p0,
        )
        .unwrap();
        let (mc, se) = common::mc_posterior_h0(&n0, &n1, &alpha, p0, 300_000, &mut rng);
        assert!(
            (mc - exact).abs() < 3.0 * se,
            "case {case}: mc {mc} ± {se}, exact {exact}"
        );
    }
}

#[test]
fn independent_weights_when_p_is_zero() {
    let mut rng = stream_rng(23, Stream::Study, 0, 0);
    let alpha = ConcentrationVector::new(vec![1.0, 1.0]).unwrap();
    let counts = SiteCounts::new(&[3, 1], &[1, 3]).unwrap();
    let n = 10_000;
    let draws: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let (w0, w1, shared) =
                draw_two_group_weights(&counts, &alpha, 0.0, WeightDraw::Augmented, &mut rng)
                    .unwrap();
            assert!(!shared);
            (w0[0], w1[0])
        })
        .collect();
    let (ma, mb) = draws.iter().fold((0.0, 0.0), |a, d| {
        (a.0 + d.0 / n as f64, a.1 + d.1 / n as f64)
    });
    let cov: f64 = draws.iter().map(|d| (d.0 - ma) * (d.1 - mb)).sum::<f64>() / n as f64;
    let va: f64 = draws.iter().map(|d| (d.0 - ma).powi(2)).sum::<f64>() / n as f64;
    let vb: f64 = draws.iter().map(|d| (d.1 - mb).powi(2)).sum::<f64>() / n as f64;
    let corr = cov / (va * vb).sqrt();
    // the sample correlation of independent draws has standard error ≈ 1/√n
    assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
}

#[test]
fn weight_mixture_mean_identity() {
    let mut rng = stream_rng(24, Stream::Study, 0, 0);
    let alpha = ConcentrationVector::new(vec![1.0, 2.0]).unwrap();
    let (n0, n1) = ([6u32, 1], [1u32, 4]);
    let counts = SiteCounts::new(&n0, &n1).unwrap();
    let p = 0.3;
    for mode in [WeightDraw::Augmented, WeightDraw::ConvexCombination] {
        let n = 200_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let w = draw_two_group_weights(&counts, &alpha, p, mode, &mut rng)
                .unwrap()
                .0[0];
            acc += w;
            acc2 += w * w;
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        // (α+n)/Σ = 8/15, (α+n0)/Σ0 = 7/10
        let want = p * 8.0 / 15.0 + (1.0 - p) * 7.0 / 10.0;
        assert!(
            (mean - want).abs() < 4.0 * se,
            "{mode:?}: {mean} vs {want} (se {se})"
        );
    }
}

#[test]
fn p_one_gives_identical_weights() {
    let mut rng = stream_rng(25, Stream::Study, 0, 0);
    let alpha = ConcentrationVector::uniform(3);
    let c = SiteCounts::new(&[1, 2, 3], &[3, 0, 1]).unwrap();
    for _ in 0..1000 {
        let (w0, w1, shared) =
            draw_two_group_weights(&c, &alpha, 1.0, WeightDraw::Augmented, &mut rng).unwrap();
        assert!(shared);
        assert_eq!(w0, w1);
    }
}

#[test]
fn duplicated_data_favours_no_difference() {
    let mut rng = stream_rng(26, Stream::Study, 0, 0);
    let dict = separated_dictionary();
    let half: Vec<f64> = (0..60)
        .map(|_| dict.kernels()[rng.random_range(0..3)].sample(&mut rng))
        .collect();
    let values: Vec<f64> = half.iter().chain(&half).cloned().collect();
    let group: Vec<u8> = (0..120).map(|i| (i >= 60) as u8).collect();
    let ds = ScreeningDataset::new(values, group, vec!["dup".into()]).unwrap();
    let cfg = GibbsConfig {
        iterations: 1000,
        burn_in: 200,
        seed: 3,
        p0_mode: P0Mode::Fixed(0.5),
        ..Default::default()
    };
    let res = screen(&ds, &dict, &cfg).unwrap();
    assert!(res.post_h0[0] > 0.5, "{}", res.post_h0[0]);
}

fn small_panel() -> (ScreeningDataset, KernelDictionary) {
    let dict = separated_dictionary();
    let (ds, _) = simulate_screening_panel(&dict, 30, 60, 0.7, 9).unwrap();
    (ds, dict)
}

#[test]
fn result_rows_are_simplex_points() {
    let (ds, dict) = small_panel();
    let res = screen(
        &ds,
        &dict,
        &GibbsConfig {
            iterations: 100,
            burn_in: 20,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(res.n_sites(), 30);
    for m in 0..res.n_sites() {
        assert!((0.0..=1.0).contains(&res.post_h0[m]));
        for w in [res.weights0(m), res.weights1(m)] {
            assert!(w.iter().all(|v| *v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    assert_eq!(res.p0_draws.len(), 100);
}

#[test]
fn screening_is_identical_across_thread_counts() {
    let (ds, dict) = small_panel();
    let cfg = GibbsConfig {
        iterations: 60,
        burn_in: 10,
        seed: 77,
        ..Default::default()
    };
    let run = |threads: usize| {
        ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| screen(&ds, &dict, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
    // disabling the cache must not change the draws
    let uncached = screen(
        &ds,
        &dict,
        &GibbsConfig {
            cache_budget_bytes: 0,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(one, uncached);
}

#[test]
fn identity_permutation_reproduces_screen() {
    let (ds, dict) = small_panel();
    let cfg = GibbsConfig {
        iterations: 50,
        burn_in: 10,
        seed: 5,
        ..Default::default()
    };
    let same = ds.with_group(ds.group().to_vec()).unwrap();
    assert_eq!(
        screen(&ds, &dict, &cfg).unwrap(),
        screen(&same, &dict, &cfg).unwrap()
    );
}

#[test]
fn permutations_preserve_group_sizes() {
    let group: Vec<u8> = (0..25).map(|i| (i % 3 == 0) as u8).collect();
    let ones = group.iter().filter(|&&g| g == 1).count();
    let mut rng = stream_rng(4, Stream::Permutation, 0, 0);
    for _ in 0..200 {
        let p = permute_labels(&group, &mut rng);
        assert_eq!(p.iter().filter(|&&g| g == 1).count(), ones);
    }
}

#[test]
fn zero_permutations_is_an_error() {
    let (ds, dict) = small_panel();
    assert!(permutation_null(&ds, &dict, &GibbsConfig::default(), 0, 1).is_err());
}

#[test]
fn permuted_and_original_agree_under_h0() {
    let dict = separated_dictionary();
    // P0 is held fixed: a learned P0 is shared by every site in a run, so the site posteriors
    // shift together and are no longer the iid samples the KS bound assumes
    let cfg = GibbsConfig {
        iterations: 150,
        burn_in: 30,
        seed: 2,
        p0_mode: P0Mode::Fixed(0.5),
        ..Default::default()
    };
    // two-sample KS 1% critical value for equal sizes n: 1.628 √(2/n)
    let m = 60;
    let critical = 1.628 * (2.0 / m as f64).sqrt();
    let replicates = 20;
    let mut passing = 0;
    for r in 0..replicates {
        let (ds, _) = simulate_screening_panel(&dict, m, 40, 1.0, 100 + r).unwrap();
        let original = screen(&ds, &dict, &cfg).unwrap().post_h0;
        let permuted = permutation_null(&ds, &dict, &cfg, 1, 500 + r)
            .unwrap()
            .remove(0);
        if ks_two_sample(&original, &permuted).unwrap().statistic < critical {
            passing += 1;
        }
    }
    assert!(
        passing as f64 >= 0.95 * replicates as f64,
        "{passing}/{replicates}"
    );
}

#[test]
fn calibration_on_a_small_panel() {
    let dict = separated_dictionary();
    let (ds, truth) = simulate_screening_panel(&dict, 100, 200, 0.8, 31).unwrap();
    let res = screen(
        &ds,
        &dict,
        &GibbsConfig {
            iterations: 300,
            burn_in: 100,
            seed: 8,
            ..Default::default()
        },
    )
    .unwrap();
    let frac = truth.iter().filter(|&&t| t).count() as f64 / truth.len() as f64;
    assert!(
        (res.p0_mean() - frac).abs() < 0.1,
        "{} vs {frac}",
        res.p0_mean()
    );
}
