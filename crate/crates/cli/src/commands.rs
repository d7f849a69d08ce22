use std::path::Path;

use serde_json::{json, Value};

use shared_kernel::dictionary::{
    choose_k_by_cv, fit_dictionary, DictionaryFitConfig, NormalGammaPrior,
};
use shared_kernel::screening::{permutation_null, screen};
use shared_kernel::simulation::{simulate_spec, BetaDensity, Density, SimSetupConfig};
use shared_kernel::studies::{
    consistency_study, rate_study, recovery_study, simulate_screening_panel, Allocations,
    ConsistencyConfig, RateStudyConfig, RecoveryConfig,
};
use shared_kernel::{ConcentrationVector, GibbsConfig, KernelDictionary, TruncNormalKernel};

use crate::args::{
    AllocationArg, Common, ConsistencyArgs, FitArgs, PermuteArgs, RateArgs, RecoveryArgs,
    ScreenArgs, SimulateArgs,
};
use crate::failure::{Failure, Outcome};
use crate::io::{
    fmt_float, read_dataset, read_dictionary, write_dataset, write_dictionary, write_json,
    write_table, Metadata,
};

/// Default K scan and fold count when neither `--k` nor `--k-range` is given.
pub const DEFAULT_K_RANGE: (usize, usize) = (2, 12);
pub const DEFAULT_FOLDS: usize = 5;
/// Probabilities at which the retained P0 draws are summarized.
pub const P0_QUANTILES: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

fn echo(command: &str, mut fields: Value) -> Value {
    fields["command"] = json!(command);
    fields
}

fn strings<T: ToString>(items: impl IntoIterator<Item = T>) -> Vec<String> {
    items.into_iter().map(|s| s.to_string()).collect()
}

fn with_sampler(common: &Common, base: GibbsConfig) -> GibbsConfig {
    GibbsConfig {
        iterations: common.iterations.unwrap_or(base.iterations),
        burn_in: common.burn_in.unwrap_or(base.burn_in),
        seed: common.seed,
        ..base
    }
}

/// Linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn cmd_fit_dictionary(args: &FitArgs, out: &Path) -> Outcome<()> {
    let (ds, input_sha) = read_dataset(&args.input)?;
    let defaults = DictionaryFitConfig::default();
    let config = DictionaryFitConfig {
        iterations: args.common.iterations.unwrap_or(defaults.iterations),
        burn_in: args.common.burn_in.unwrap_or(defaults.burn_in),
        seed: args.common.seed,
        subsample: args.subsample,
    };
    let prior = NormalGammaPrior::default();

    let (k, cv, cv_settings) = match args.k {
        Some(k) => (k, None, Value::Null),
        None => {
            let (lo, hi) = args.k_range.unwrap_or(DEFAULT_K_RANGE);
            let folds = args.folds.unwrap_or(DEFAULT_FOLDS);
            let range: Vec<usize> = (lo..=hi).collect();
            let cv = choose_k_by_cv(&ds, &range, folds, &prior, &config)?;
            (
                cv.selected_k,
                Some(cv),
                json!({ "k_range": [lo, hi], "folds": folds }),
            )
        }
    };
    let report = fit_dictionary(&ds, k, &prior, &config)?;
    if report.mle_nonconverged > 0 {
        eprintln!(
            "warning: concentration update hit its iteration cap in {} sweeps",
            report.mle_nonconverged
        );
    }

    let meta = Metadata::new(
        args.common.seed,
        echo(
            "fit-dictionary",
            json!({
                "input_sha256": input_sha,
                "fit": config,
                "prior": prior,
                "k": args.k,
                "cross_validation": cv_settings,
            }),
        ),
    );
    let cv_table = cv.as_ref().map(|c| &c.cv_table);
    let dict_meta = json!({
        "seed": config.seed,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "cv_table": cv_table,
        "n_sites_used": report.n_sites_used,
        "diagnostics": report.chain_diagnostics,
        "run": meta.to_value(),
    });
    write_dictionary(&out.join("dictionary.json"), &report.dictionary, dict_meta)?;
    let rows = cv_table
        .into_iter()
        .flatten()
        .map(|(k, ll)| vec![k.to_string(), fmt_float(*ll)]);
    write_table(
        &out.join("cv_table.csv"),
        &meta,
        &[],
        &strings(["k", "heldout_loglik"]),
        rows,
    )?;
    eprintln!(
        "fitted K={} on {} sites",
        report.dictionary.k(),
        report.n_sites_used
    );
    Ok(())
}

fn screen_inputs(
    args: &ScreenArgs,
) -> Outcome<(
    shared_kernel::ScreeningDataset,
    KernelDictionary,
    GibbsConfig,
    Value,
)> {
    let (ds, input_sha) = read_dataset(&args.input)?;
    let (dict, dict_sha) = read_dictionary(&args.dictionary)?;
    let gibbs = with_sampler(
        &args.common,
        GibbsConfig {
            p0_mode: args.p0,
            ..GibbsConfig::default()
        },
    );
    let fields =
        json!({ "input_sha256": input_sha, "dictionary_sha256": dict_sha, "gibbs": gibbs });
    Ok((ds, dict, gibbs, fields))
}

pub fn cmd_screen(args: &ScreenArgs, out: &Path) -> Outcome<()> {
    let (ds, dict, gibbs, fields) = screen_inputs(args)?;
    let dict_sha = fields["dictionary_sha256"].clone();
    let res = screen(&ds, &dict, &gibbs)?;
    let meta = Metadata::new(gibbs.seed, echo("screen", fields));

    let k = res.k;
    let header: Vec<String> = strings(["site_id", "post_h0", "log_odds_h0"])
        .into_iter()
        .chain((1..=k).map(|j| format!("mean_weight0_{j}")))
        .chain((1..=k).map(|j| format!("mean_weight1_{j}")))
        .collect();
    let rows = (0..res.n_sites()).map(|m| {
        let mut row = vec![
            res.site_ids[m].clone(),
            fmt_float(res.post_h0[m]),
            fmt_float(res.log_odds_h0[m]),
        ];
        row.extend(
            res.weights0(m)
                .iter()
                .chain(res.weights1(m))
                .map(|&w| fmt_float(w)),
        );
        row
    });
    write_table(&out.join("results.csv"), &meta, &[], &header, rows)?;

    let mut draws = res.p0_draws.clone();
    draws.sort_by(f64::total_cmp);
    let quantiles: serde_json::Map<String, Value> = P0_QUANTILES
        .iter()
        .map(|&q| (format!("q{q}"), json!(quantile(&draws, q))))
        .collect();
    let summary = json!({
        "n_sites": res.n_sites(),
        "k": k,
        "p0_mean": res.p0_mean(),
        "p0_draws_quantiles": quantiles,
        "dictionary_sha256": dict_sha,
        "meta": meta.to_value(),
    });
    write_json(&out.join("summary.json"), &summary)?;
    eprintln!(
        "screened {} sites, posterior mean P0 = {:.4}",
        res.n_sites(),
        res.p0_mean()
    );
    Ok(())
}

pub fn cmd_permute(args: &PermuteArgs, out: &Path) -> Outcome<()> {
    let (ds, dict, gibbs, mut fields) = screen_inputs(&args.screen)?;
    let null = permutation_null(&ds, &dict, &gibbs, args.n_perm, gibbs.seed)?;
    fields["n_perm"] = json!(args.n_perm);
    let meta = Metadata::new(gibbs.seed, echo("permute", fields));
    let rows = null.iter().enumerate().flat_map(|(p, post)| {
        post.iter()
            .zip(ds.site_ids())
            .map(move |(v, id)| vec![(p + 1).to_string(), id.clone(), fmt_float(*v)])
    });
    write_table(
        &out.join("permutations.csv"),
        &meta,
        &[],
        &strings(["permutation", "site_id", "post_h0"]),
        rows,
    )
}

pub fn cmd_simulate(args: &SimulateArgs, out: &Path) -> Outcome<()> {
    if !(0.0..=1.0).contains(&args.h0_fraction) {
        return Err(Failure::usage(format!(
            "--h0-fraction must lie in [0,1], got {}",
            args.h0_fraction
        )));
    }
    if args.sites == 0 || args.subjects < 2 || args.k == 0 {
        return Err(Failure::usage(
            "--sites and --k must be positive and --subjects at least 2",
        ));
    }
    let setup = SimSetupConfig {
        n_range: (2.0, 2.0),
        k_range: (args.k, args.k),
        ..SimSetupConfig::default()
    };
    let dict = simulate_spec(args.seed, &setup)?.dictionary()?;
    let (ds, truth) = simulate_screening_panel(
        &dict,
        args.sites,
        args.subjects,
        args.h0_fraction,
        args.seed,
    )?;
    let meta = Metadata::new(
        args.seed,
        echo(
            "simulate",
            json!({ "sites": args.sites, "subjects": args.subjects, "k": args.k, "h0_fraction": args.h0_fraction,
                    "kernel_setup": setup }),
        ),
    );
    write_dataset(&out.join("data.csv"), &meta, &ds)?;
    let rows = ds
        .site_ids()
        .iter()
        .zip(&truth)
        .map(|(id, &h0)| vec![id.clone(), (h0 as u8).to_string()]);
    write_table(
        &out.join("truth.csv"),
        &meta,
        &[],
        &strings(["site_id", "h0"]),
        rows,
    )?;
    write_dictionary(
        &out.join("dictionary.json"),
        &dict,
        json!({ "seed": args.seed, "run": meta.to_value() }),
    )
}

fn regime(h0: bool) -> &'static str {
    if h0 {
        "h0"
    } else {
        "h1"
    }
}

pub fn cmd_rate_study(args: &RateArgs, out: &Path) -> Outcome<()> {
    let defaults = RateStudyConfig::default();
    let config = RateStudyConfig {
        replicates: args.replicates,
        seed: args.common.seed,
        gibbs: with_sampler(&args.common, defaults.gibbs.clone()),
        allocations: match args.allocations {
            AllocationArg::Sampled => Allocations::Sampled,
            AllocationArg::Known => Allocations::Known,
        },
        ..defaults
    };
    let rows = rate_study(&config)?;
    let meta = Metadata::new(config.seed, echo("rate-study", json!({ "study": config })));
    let header = strings([
        "n",
        "replicate",
        "normalized_bf",
        "regime",
        "k",
        "lambda0",
        "log_bf",
    ]);
    let body = rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            r.replicate.to_string(),
            fmt_float(r.normalized_bf),
            regime(r.h0).to_string(),
            r.k.to_string(),
            fmt_float(r.lambda0),
            fmt_float(r.log_bf),
        ]
    });
    write_table(&out.join("rate_study.csv"), &meta, &[], &header, body)
}

pub fn cmd_recovery_study(args: &RecoveryArgs, out: &Path) -> Outcome<()> {
    let defaults = RecoveryConfig::default();
    let config = RecoveryConfig {
        replicates: args.replicates,
        n_values: args.n_values.clone(),
        seed: args.common.seed,
        gibbs: with_sampler(&args.common, defaults.gibbs.clone()),
        ..defaults
    };
    let rows = recovery_study(&config)?;
    let meta = Metadata::new(
        config.seed,
        echo("recovery-study", json!({ "study": config })),
    );
    let header = strings([
        "n",
        "regime",
        "replicate",
        "k",
        "tv_two_group",
        "tv_separate",
        "tv_common",
    ]);
    let body = rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            regime(r.h0).to_string(),
            r.replicate.to_string(),
            r.k.to_string(),
            fmt_float(r.tv_two_group),
            fmt_float(r.tv_separate),
            fmt_float(r.tv_common),
        ]
    });
    write_table(&out.join("recovery_study.csv"), &meta, &[], &header, body)
}

/// Parses `beta:A,B` or `tnorm:MU,SIGMA`.
pub fn parse_density(spec: &str) -> Outcome<Box<dyn Density>> {
    let bad = || {
        Failure::usage(format!(
            "density '{spec}' must look like beta:A,B or tnorm:MU,SIGMA"
        ))
    };
    let (family, params) = spec.split_once(':').ok_or_else(bad)?;
    let (a, b) = params.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let density: Box<dyn Density> = match family {
        "beta" => Box::new(BetaDensity::new(a, b).map_err(|e| Failure::usage(e.to_string()))?),
        "tnorm" => {
            Box::new(TruncNormalKernel::new(a, b).map_err(|e| Failure::usage(e.to_string()))?)
        }
        _ => return Err(bad()),
    };
    Ok(density)
}

/// Five evenly spaced kernels used when no dictionary is supplied.
pub fn default_consistency_dictionary() -> KernelDictionary {
    let kernels = [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .map(|&m| TruncNormalKernel::new(m, 0.1).expect("valid kernel"));
    KernelDictionary::new(kernels.collect(), ConcentrationVector::uniform(5))
        .expect("ordered kernels")
}

pub fn cmd_consistency_study(args: &ConsistencyArgs, out: &Path) -> Outcome<()> {
    let f0 = parse_density(&args.f0)?;
    let f1 = parse_density(&args.f1)?;
    let (dict, dict_sha) = match &args.dictionary {
        Some(path) => {
            let (d, sha) = read_dictionary(path)?;
            (d, Value::String(sha))
        }
        None => (default_consistency_dictionary(), Value::Null),
    };
    let defaults = ConsistencyConfig::default();
    let config = ConsistencyConfig {
        n_grid: args.n_grid.clone(),
        replicates: args.replicates,
        seed: args.common.seed,
        gibbs: with_sampler(&args.common, defaults.gibbs.clone()),
        ..defaults
    };
    let report = consistency_study(f0.as_ref(), f1.as_ref(), &dict, &config)?;
    let meta = Metadata::new(
        config.seed,
        echo(
            "consistency-study",
            json!({ "study": config, "f0": args.f0, "f1": args.f1, "dictionary": dict, "dictionary_sha256": dict_sha }),
        ),
    );
    let join = |v: &[f64]| {
        v.iter()
            .map(|&x| fmt_float(x))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let notes = [
        ("projection0", join(&report.projection0)),
        ("projection1", join(&report.projection1)),
        ("degenerate", report.degenerate.to_string()),
    ];
    let body = report.rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            r.replicate.to_string(),
            fmt_float(r.post_h0),
        ]
    });
    write_table(
        &out.join("consistency_study.csv"),
        &meta,
        &notes,
        &strings(["n", "replicate", "post_h0"]),
        body,
    )
}
