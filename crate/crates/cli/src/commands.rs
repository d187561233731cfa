//! The `synth`, `fit`, `predict`, `assign`, `report` and `sweep-a` verbs.
//!
//! Artifacts (all under `out`):
//!
//! | verb    | files |
//! |---------|-------|
//! | synth   | `od.csv` (unless `data` is set), `truth.txt` |
//! | fit     | `chains.txt`, `summary.txt`, `psrf.txt` |
//! | predict | `ensemble.txt`, `pvalues.txt`, `criteria.txt`, `aggregate.txt`, `density.txt` |
//! | assign  | `link_flows.txt`, `congestion.txt` |
//! | report  | `report.txt` |
//! | sweep-a | `sweep_a/a=<a>/chains.txt`, `sweep_a.txt` |

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use odmix::assign::{congestion_probability, due_assign, ensemble_assign, AssignSettings, LinkFlowEnsemble, ZoneMap};
use odmix::model::{Family, ModelSpec, ODDataset};
use odmix::predict::{aggregate_check, criteria, ppc_pvalues, predictive_draws, CriteriaReport};
use odmix::rng::{stream, Purpose};
use odmix::sampler::{quantile_sorted, summarize, CoordinateSummary};

use crate::artifacts::{chains_artifact, ensemble_artifact, fmt_f64, read_chains, read_ensemble, Artifact};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{load_demand, load_network, load_od_csv, load_zone_map, write_od_csv};
use crate::pipeline::{fit_model, FitOutcome};
use crate::synth::{synth_generate, SynthSpec};

/// Hyperparameter values visited by `sweep-a`.
pub const SWEEP_A: [f64; 3] = [0.001, 0.1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Synth,
    Fit,
    Predict,
    Assign,
    Report,
    SweepA,
}

impl FromStr for Verb {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Ok(match s {
            "synth" => Verb::Synth,
            "fit" => Verb::Fit,
            "predict" => Verb::Predict,
            "assign" => Verb::Assign,
            "report" => Verb::Report,
            "sweep-a" => Verb::SweepA,
            _ => return Err(CliError::Validation(format!("unknown command '{s}'"))),
        })
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verb::Synth => "synth",
            Verb::Fit => "fit",
            Verb::Predict => "predict",
            Verb::Assign => "assign",
            Verb::Report => "report",
            Verb::SweepA => "sweep-a",
        })
    }
}

/// Files written and non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn write(&mut self, art: &Artifact, path: PathBuf) -> CliResult<()> {
        art.write(&path)?;
        self.artifacts.push(path);
        Ok(())
    }
}

pub fn run_command(verb: Verb, cfg: &RunConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    match verb {
        Verb::Synth => synth(cfg),
        Verb::Fit => fit(cfg),
        Verb::Predict => predict(cfg),
        Verb::Assign => assign(cfg),
        Verb::Report => report(cfg),
        Verb::SweepA => sweep_a(cfg),
    }
}

fn data_path(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.data
        .as_deref()
        .ok_or_else(|| CliError::Validation("no OD data file configured (set data = <path>)".into()))
}

fn model_spec(cfg: &RunConfig, data: &ODDataset) -> CliResult<ModelSpec> {
    Ok(ModelSpec::with_gprior(cfg.family, cfg.a, data)?.with_pln_integration(cfg.pln()?))
}

fn synth(cfg: &RunConfig) -> CliResult<Outcome> {
    let seed = cfg.require_seed()?;
    let spec = SynthSpec {
        m: cfg.synth_m,
        family: cfg.family,
        beta: cfg.synth_beta.clone(),
        dispersion: cfg.synth_dispersion,
        zero_fraction: (cfg.synth_zero_fraction > 0.0).then_some(cfg.synth_zero_fraction),
    };
    let (data, truth) = synth_generate(&spec, &mut stream(seed, Purpose::Synthetic, 0))?;
    let path = cfg.data.clone().unwrap_or_else(|| cfg.out.join("od.csv"));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_od_csv(&path, &data)?;
    let mut out = Outcome::default();
    out.artifacts.push(path);
    let mut art = Artifact::new("truth", &["parameter", "value"], cfg);
    for (name, b) in data.covariate_names.iter().zip(&truth.beta) {
        art.push(vec![name.clone(), fmt_f64(*b)]);
    }
    art.push(vec![truth.family.dispersion_name().into(), fmt_f64(truth.dispersion)]);
    let zeros = data.y.iter().filter(|&&y| y == 0).count() as f64 / data.n() as f64;
    art.meta("zero_fraction", fmt_f64(zeros));
    out.write(&art, cfg.out.join("truth.txt"))?;
    Ok(out)
}

fn run_fit(cfg: &RunConfig) -> CliResult<(ODDataset, FitOutcome)> {
    let data = load_od_csv(data_path(cfg)?)?;
    let spec = model_spec(cfg, &data)?;
    let chain = cfg.chain_config()?;
    let fit = fit_model(&spec, &data, &chain, cfg.proposal_inflate, cfg.ml_tol)?;
    Ok((data, fit))
}

fn param_names(data: &ODDataset, family: Family) -> Vec<String> {
    let mut v = data.covariate_names.clone();
    v.push(family.dispersion_name().to_string());
    v
}

fn psrf_warning(cfg: &RunConfig, fit: &FitOutcome, names: &[String]) -> Option<String> {
    let bad: Vec<String> = names
        .iter()
        .zip(&fit.psrf.univariate)
        .filter(|(_, r)| !(**r < cfg.psrf_threshold))
        .map(|(n, r)| format!("{n}={r:.4}"))
        .collect();
    (!bad.is_empty()).then(|| format!("PSRF above {} for {}", cfg.psrf_threshold, bad.join(", ")))
}

fn fit(cfg: &RunConfig) -> CliResult<Outcome> {
    let (data, fit) = run_fit(cfg)?;
    let mut out = Outcome::default();
    let names = param_names(&data, cfg.family);
    out.write(
        &chains_artifact(&fit.chains, &data.covariate_names, cfg.family, cfg),
        cfg.out.join("chains.txt"),
    )?;

    let summary = summarize(&fit.chains, cfg.interval)?;
    let mut art = Artifact::new("summary", &["parameter", "mean", "sd", "lower", "upper", "ml_estimate", "ml_se"], cfg);
    art.meta("ml_log_likelihood", fmt_f64(fit.ml.log_likelihood));
    art.meta("ml_iterations", fit.ml.iterations.to_string());
    art.meta("ml_dispersion_at_guard", fit.ml.dispersion_at_guard.to_string());
    art.meta("interval", fmt_f64(cfg.interval));
    for (j, (name, s)) in names.iter().zip(&summary).enumerate() {
        let (est, se) = if j < data.n_coef() {
            (fit.ml.beta_hat[j], fit.ml.cov_beta[(j, j)].sqrt())
        } else {
            (fit.ml.dispersion_hat, fit.ml.var_dispersion.sqrt())
        };
        art.push(vec![
            name.clone(),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.lower),
            fmt_f64(s.upper),
            fmt_f64(est),
            fmt_f64(se),
        ]);
    }
    out.write(&art, cfg.out.join("summary.txt"))?;

    let mut art = Artifact::new("psrf", &["parameter", "psrf"], cfg);
    art.meta("multivariate", fmt_f64(fit.psrf.multivariate));
    art.meta("acceptance", crate::artifacts::fmt_list(&fit.chains.acceptance_rate));
    for (name, r) in names.iter().zip(&fit.psrf.univariate) {
        art.push(vec![name.clone(), fmt_f64(*r)]);
    }
    out.write(&art, cfg.out.join("psrf.txt"))?;

    if let Some(w) = psrf_warning(cfg, &fit, &names) {
        if cfg.strict {
            return Err(CliError::Convergence(w));
        }
        out.warnings.push(w);
    }
    Ok(out)
}

/// Fit-time settings from the chains artifact, prediction settings from `cfg`.
fn predict_config(cfg: &RunConfig, fit_cfg: &RunConfig) -> CliResult<RunConfig> {
    let mut eff = fit_cfg.clone();
    eff.seed = Some(cfg.require_seed()?);
    eff.ensemble_size = cfg.ensemble_size;
    eff.sidedness = cfg.sidedness;
    eff.out = cfg.out.clone();
    Ok(eff)
}

fn criteria_artifact(rep: &CriteriaReport, cfg: &RunConfig) -> Artifact {
    let mut art = Artifact::new("criteria", &["criterion", "value"], cfg);
    let mut rows = vec![
        ("mean_deviance", rep.mean_deviance),
        ("k", rep.k as f64),
        ("aic", rep.aic),
        ("bic", rep.bic),
        ("dic_marginal", rep.dic_marginal),
        ("pd_marginal", rep.pd_marginal),
    ];
    if let Some(h) = &rep.hierarchical {
        rows.extend([
            ("mean_deviance_hierarchical", h.mean_deviance),
            ("pd_hierarchical", h.pd),
            ("dic_hierarchical", h.dic),
            ("hierarchical_draws", h.draws as f64),
        ]);
    }
    for (k, v) in rows {
        art.push(vec![k.into(), fmt_f64(v)]);
    }
    art
}

fn predict(cfg: &RunConfig) -> CliResult<Outcome> {
    let chains_art = Artifact::read(&cfg.out.join("chains.txt"), "chains")?;
    let (chains, family) = read_chains(&chains_art)?;
    let eff = predict_config(cfg, &chains_art.config)?;
    let seed = eff.require_seed()?;
    let data = load_od_csv(data_path(&eff)?)?;
    let spec = model_spec(&eff, &data)?;
    let mut out = Outcome::default();

    if family == Family::PoissonLognormal {
        let rep = criteria(&chains, &data, &spec, None)?;
        out.write(&criteria_artifact(&rep, &eff), eff.out.join("criteria.txt"))?;
        out.warnings
            .push("PLN has no closed-form latent conditional: no predictive ensemble, p-values or hierarchical DIC".into());
        return Ok(out);
    }

    let count = eff.ensemble_size.min(chains.n_pooled());
    let ens = predictive_draws(&chains, &data, family, seed, Some(count))?;
    out.write(&ensemble_artifact(&ens, &eff), eff.out.join("ensemble.txt"))?;

    let p = ppc_pvalues(&ens, &data, &chains)?;
    let mut art = Artifact::new("pvalues", &["statistic", "p_value"], &eff);
    art.push(vec!["absolute".into(), fmt_f64(p.absolute)]);
    art.push(vec!["squared".into(), fmt_f64(p.squared)]);
    art.push(vec!["deviance".into(), fmt_f64(p.deviance)]);
    out.write(&art, eff.out.join("pvalues.txt"))?;

    let rep = criteria(&chains, &data, &spec, Some(&ens))?;
    out.write(&criteria_artifact(&rep, &eff), eff.out.join("criteria.txt"))?;

    let m = data.m();
    let mut subsets: Vec<(String, Vec<usize>)> = vec![
        ("total".into(), (0..data.n()).collect()),
        ("interzonal".into(), (0..data.n()).filter(|&i| !data.is_intrazonal(i)).collect()),
    ];
    for o in 0..m {
        subsets.push((format!("origin:{}", data.zones[o]), (o * m..(o + 1) * m).collect()));
    }
    let mut agg = Artifact::new("aggregate", &["subset", "observed", "predictive_mean", "p_value", "bandwidth"], &eff);
    let mut dens = Artifact::new("density", &["subset", "x", "density"], &eff);
    for (name, cells) in &subsets {
        let chk = aggregate_check(&ens, &data, cells, eff.sidedness)?;
        let mean = chk.sums.iter().sum::<f64>() / chk.sums.len() as f64;
        agg.push(vec![
            name.clone(),
            fmt_f64(chk.observed),
            fmt_f64(mean),
            fmt_f64(chk.p_value),
            fmt_f64(chk.bandwidth),
        ]);
        for (x, d) in &chk.density {
            dens.push(vec![name.clone(), fmt_f64(*x), fmt_f64(*d)]);
        }
    }
    out.write(&agg, eff.out.join("aggregate.txt"))?;
    out.write(&dens, eff.out.join("density.txt"))?;
    Ok(out)
}

fn network_path(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.network
        .as_deref()
        .ok_or_else(|| CliError::Validation("no network file configured (set network = <path>)".into()))
}

fn zone_pairs(cfg: &RunConfig) -> CliResult<HashMap<String, String>> {
    match &cfg.zone_map {
        Some(p) => load_zone_map(p),
        None => Ok(HashMap::new()),
    }
}

fn assign(cfg: &RunConfig) -> CliResult<Outcome> {
    let network = load_network(network_path(cfg)?, cfg.bpr_alpha, cfg.bpr_beta)?;
    let pairs = zone_pairs(cfg)?;
    let (flows, eff) = if let Some(dpath) = &cfg.demand {
        let demand = load_demand(dpath, &network, &pairs, cfg.peak_factor)?;
        let a = due_assign(&network, &demand, cfg.tol, cfg.max_iter)?;
        let flows = LinkFlowEnsemble {
            volumes: vec![a.volumes],
            iterations: vec![a.iterations],
            gaps: vec![a.relative_gap],
        };
        (flows, cfg.clone())
    } else {
        let ens_art = Artifact::read(&cfg.out.join("ensemble.txt"), "ensemble")?;
        let ens = read_ensemble(&ens_art)?;
        let mut eff = ens_art.config.clone();
        for (k, v) in cfg.pairs() {
            if matches!(
                k,
                "network" | "zone_map" | "tol" | "max_iter" | "peak_factor" | "bpr_alpha" | "bpr_beta" | "vc_threshold" | "out"
            ) {
                eff.set(k, &v)?;
            }
        }
        let data = load_od_csv(data_path(&eff)?)?;
        let zone_map = ZoneMap::new(&data.zones, &network, &pairs)?;
        let settings = AssignSettings {
            scaling: eff.peak_factor,
            tol: eff.tol,
            max_iter: eff.max_iter,
        };
        (ensemble_assign(&network, &ens, &data, &zone_map, settings)?, eff)
    };
    let mut out = Outcome::default();
    let unconverged = flows.gaps.iter().filter(|g| !(**g <= eff.tol)).count();
    if unconverged > 0 {
        out.warnings.push(format!(
            "{unconverged} of {} assignments stopped at max_iter above the gap tolerance",
            flows.gaps.len()
        ));
    }
    let cong = congestion_probability(&flows, &network, eff.vc_threshold)?;

    let mut art = Artifact::new(
        "link_flows",
        &["link_id", "from", "to", "type", "capacity", "mean_volume", "sd_volume", "q05_volume", "q95_volume"],
        &eff,
    );
    art.meta("assignments", flows.volumes.len().to_string());
    art.meta("max_relative_gap", fmt_f64(flows.gaps.iter().copied().fold(0.0, f64::max)));
    for (k, l) in network.links.iter().enumerate() {
        let mut v: Vec<f64> = flows.volumes.iter().map(|row| row[k]).collect();
        let s = describe(&mut v);
        art.push(vec![
            l.id.clone(),
            network.nodes[l.from].clone(),
            network.nodes[l.to].clone(),
            l.link_type.to_string(),
            fmt_f64(l.capacity),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.lower),
            fmt_f64(s.upper),
        ]);
    }
    out.write(&art, eff.out.join("link_flows.txt"))?;

    let mut order: Vec<usize> = (0..network.links.len()).collect();
    order.sort_by(|&a, &b| cong[b].exceedance.total_cmp(&cong[a].exceedance).then(a.cmp(&b)));
    let mut art = Artifact::new("congestion", &["link_id", "type", "mean_vc", "p_exceed"], &eff);
    art.meta("threshold", fmt_f64(eff.vc_threshold));
    for k in order {
        let l = &network.links[k];
        art.push(vec![
            l.id.clone(),
            l.link_type.to_string(),
            fmt_f64(cong[k].mean_vc),
            fmt_f64(cong[k].exceedance),
        ]);
    }
    out.write(&art, eff.out.join("congestion.txt"))?;
    Ok(out)
}

/// Mean, sd and the 5% / 95% quantiles.
fn describe(v: &mut [f64]) -> CoordinateSummary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    v.sort_by(f64::total_cmp);
    CoordinateSummary {
        mean,
        sd,
        lower: quantile_sorted(v, 0.05),
        upper: quantile_sorted(v, 0.95),
    }
}

fn report(cfg: &RunConfig) -> CliResult<Outcome> {
    let sources: [(&str, &str); 6] = [
        ("summary.txt", "summary"),
        ("psrf.txt", "psrf"),
        ("pvalues.txt", "pvalues"),
        ("criteria.txt", "criteria"),
        ("aggregate.txt", "aggregate"),
        ("congestion.txt", "congestion"),
    ];
    let mut art = Artifact::new("report", &["section", "item", "value"], cfg);
    let mut found = 0;
    for (file, kind) in sources {
        let path = cfg.out.join(file);
        if !path.exists() {
            continue;
        }
        found += 1;
        let src = Artifact::read(&path, kind)?;
        for (k, v) in &src.meta {
            art.push(vec![kind.into(), k.clone(), v.replace(',', ";")]);
        }
        for row in &src.rows {
            let value = row[1..]
                .iter()
                .zip(&src.columns[1..])
                .map(|(v, c)| format!("{c}={v}"))
                .collect::<Vec<_>>()
                .join(" ");
            art.push(vec![kind.into(), row[0].clone(), value]);
        }
    }
    if found == 0 {
        return Err(CliError::Dependency(format!(
            "no artifacts to report in {}; run fit first",
            cfg.out.display()
        )));
    }
    let mut out = Outcome::default();
    out.write(&art, cfg.out.join("report.txt"))?;
    Ok(out)
}

/// Largest pairwise difference of the dispersion posterior means in units of
/// the pooled posterior sd `sqrt(mean of variances)`.
pub fn sweep_spread(summaries: &[CoordinateSummary]) -> f64 {
    let pooled = (summaries.iter().map(|s| s.sd * s.sd).sum::<f64>() / summaries.len() as f64).sqrt();
    let mut worst: f64 = 0.0;
    for a in summaries {
        for b in summaries {
            worst = worst.max((a.mean - b.mean).abs());
        }
    }
    worst / pooled
}

fn sweep_a(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut out = Outcome::default();
    let mut art = Artifact::new("sweep_a", &["a", "mean", "sd", "lower", "upper", "max_psrf"], cfg);
    let mut sums = Vec::new();
    for a in SWEEP_A {
        let mut c = cfg.clone();
        c.a = a;
        c.out = cfg.out.join("sweep_a").join(format!("a={a:?}"));
        let (data, fit) = run_fit(&c)?;
        out.write(
            &chains_artifact(&fit.chains, &data.covariate_names, c.family, &c),
            c.out.join("chains.txt"),
        )?;
        let s = summarize(&fit.chains, c.interval)?.pop().expect("dispersion summary");
        art.push(vec![
            fmt_f64(a),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.lower),
            fmt_f64(s.upper),
            fmt_f64(fit.psrf.max_univariate()),
        ]);
        if let Some(w) = psrf_warning(&c, &fit, &param_names(&data, c.family)) {
            out.warnings.push(format!("a={a}: {w}"));
        }
        sums.push(s);
    }
    art.meta("max_mean_difference_pooled_sd", fmt_f64(sweep_spread(&sums)));
    out.write(&art, cfg.out.join("sweep_a.txt"))?;
    if cfg.strict && !out.warnings.is_empty() {
        return Err(CliError::Convergence(out.warnings.join("; ")));
    }
    Ok(out)
}
