//! Command-line pipeline: simulate synthetic datasets, fit the joint
//! model, run cross-validated prediction with baselines, and analyze a
//! finished run into biomarker tables, regressions, and diagnostics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use connectome_core::analysis::{
    condition_effect_regression, label_effect_regression, network_counts, rest_task_average, rhat,
    top_biomarkers, BiomarkerSet, CONDITION_ORDER, TASK_CONDITIONS,
};
use connectome_core::ingest::{load_atlas_csv, load_dataset, Atlas, Dataset, Network};
use connectome_core::model::{
    fit, GenParams, LatentMeanMode, ModelData, NodeSummary, PosteriorSummary, SamplerConfig,
    SelectBy,
};
use connectome_core::predict::{
    accuracy_table, run_cv_cell, split_folds, split_kfold, AccuracyRecord, SplitPlan,
};
use connectome_core::report::{digest_file, emit_run, write_dataset, RunOutputs};
use connectome_core::rng::derive_seed;

#[derive(Parser)]
#[command(
    name = "connectome-predict",
    about = "Joint latent-space connectome/behavior modeling pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the generative equations.
    Simulate(SimulateArgs),
    /// Fit the model on one condition/category with all behaviors observed.
    Fit(FitArgs),
    /// Cross-validated semi-supervised prediction, optionally with baselines.
    Cv(CvArgs),
    /// Turn a finished run directory into biomarkers, regressions, and diagnostics.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct SamplerArgs {
    /// Burn-in sweeps discarded before retention.
    #[arg(long, default_value_t = 5000)]
    burn_in: usize,
    /// Retained draws per chain.
    #[arg(long, default_value_t = 15000)]
    samples: usize,
    /// Keep every thin-th post-burn-in draw.
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Independent chains per restart.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Random restarts; the best by the selection rule is kept.
    #[arg(long, default_value_t = 10)]
    inits: usize,
    /// Root RNG seed (overrides the CP_SEED environment variable).
    #[arg(long)]
    seed: Option<u64>,
    /// Latent mean block: auto, on, or off.
    #[arg(long, default_value = "auto")]
    latent_mean: LatentMeanMode,
    /// Restart selection: train-fit (default) or test-fit (replication).
    #[arg(long, default_value = "train-fit")]
    select_by: SelectBy,
}

impl SamplerArgs {
    fn to_config(&self) -> SamplerConfig {
        let seed = self.seed.unwrap_or_else(|| {
            std::env::var("CP_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0)
        });
        SamplerConfig {
            burn_in: self.burn_in,
            samples: self.samples,
            thin: self.thin,
            chains: self.chains,
            inits: self.inits,
            seed,
            latent_mean: self.latent_mean,
            select_by: self.select_by,
            ..SamplerConfig::default()
        }
    }

    fn echo(&self, config: &SamplerConfig) -> serde_json::Value {
        serde_json::json!({
            "burn_in": config.burn_in,
            "samples": config.samples,
            "thin": config.thin,
            "chains": config.chains,
            "inits": config.inits,
            "seed": config.seed,
            "latent_mean": config.latent_mean,
            "select_by": config.select_by,
            "priors": config.priors,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Node count.
    #[arg(long = "V", default_value_t = 30)]
    v: usize,
    /// Subject count.
    #[arg(long, default_value_t = 80)]
    subjects: usize,
    /// Indicators per category.
    #[arg(long = "P", default_value_t = 4)]
    p: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated true cross covariances for the first nodes.
    #[arg(long, default_value = "0.4,0.3,0.2,-0.4,-0.3,-0.2")]
    cross: String,
    /// Euclidean norm of the shared latent mean direction.
    #[arg(long, default_value_t = 0.0)]
    mu_norm: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma2_c: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma2_b: f64,
    /// Comma-separated condition labels to emit.
    #[arg(long, default_value = "Rest1")]
    conditions: String,
    /// Behavior category label.
    #[arg(long, default_value = "synthetic")]
    category: String,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    condition: String,
    #[arg(long)]
    category: String,
    /// Synthesize the Average condition from all file conditions first.
    #[arg(long, default_value_t = false)]
    with_average: bool,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Limit worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Conditions to run (comma separated; default: all in the dataset).
    #[arg(long)]
    conditions: Option<String>,
    /// Categories to run (comma separated; default: all in the dataset).
    #[arg(long)]
    categories: Option<String>,
    /// Methods: subset of latentsna,cpm,ridge.
    #[arg(long, default_value = "latentsna,cpm,ridge")]
    methods: String,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Partitioned K-fold splits (K from the train fraction) instead of
    /// repeated random splits.
    #[arg(long, default_value_t = false)]
    kfold: bool,
    /// CPM edge-selection p threshold.
    #[arg(long, default_value_t = 0.001)]
    p_threshold: f64,
    /// Ridge penalty grid, comma separated.
    #[arg(long, default_value = "0.01,0.1,1,10,100,1000,10000")]
    lambda_grid: String,
    #[arg(long, default_value_t = false)]
    with_average: bool,
    /// Also write per-fit trace CSVs for the first repeat.
    #[arg(long, default_value_t = false)]
    emit_traces: bool,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// A finished fit/cv run directory.
    #[arg(long)]
    run: PathBuf,
    /// Biomarkers per sign.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Split-R-hat threshold for convergence warnings.
    #[arg(long, default_value_t = 1.1)]
    rhat_warn: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Analyze(args) => cmd_analyze(args),
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim())
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().with_context(|| format!("bad float '{x}'")))
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let seed = args.seed.unwrap_or_else(|| {
        std::env::var("CP_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0)
    });
    let cross = parse_floats(&args.cross)?;
    if cross.len() > args.v {
        bail!("{} cross covariances for {} nodes", cross.len(), args.v);
    }
    let conditions = parse_list(&args.conditions);
    if conditions.is_empty() {
        bail!("no conditions given");
    }

    let mut base = GenParams::isotropic(
        args.v,
        args.subjects,
        args.p,
        &cross,
        args.sigma2_c,
        args.sigma2_b,
    );
    if args.mu_norm > 0.0 {
        base = base.with_mu_norm(args.mu_norm);
    }
    base.category = args.category.clone();

    // first condition defines behaviors and ground truth; further
    // conditions draw fresh connectomes for the same subject roster
    let mut params = base.clone();
    params.condition = conditions[0].clone();
    let (mut dataset, truth) =
        connectome_core::model::simulate(&params, seed).context("simulation failed")?;
    for (i, cond) in conditions.iter().enumerate().skip(1) {
        let mut p = base.clone();
        p.condition = cond.clone();
        let (extra, _) = connectome_core::model::simulate(&p, derive_seed(seed, &[0xC0ED, i as u64]))
            .context("simulation failed")?;
        for ((subj, c), conn) in extra.connectomes {
            dataset.connectomes.insert((subj, c), conn);
        }
        dataset.conditions.push(cond.clone());
    }

    let manifest = write_dataset(&dataset, Some(&truth), &args.out)?;
    println!("wrote dataset: {}", manifest.display());
    Ok(())
}

fn dataset_digests(manifest_path: &Path) -> Result<BTreeMap<String, String>> {
    let mut digests = BTreeMap::new();
    digests.insert(
        manifest_path.file_name().unwrap().to_string_lossy().to_string(),
        digest_file(manifest_path)?,
    );
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: connectome_core::ingest::DatasetManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut paths = vec![manifest.atlas.clone()];
    paths.extend(manifest.behaviors.iter().map(|b| b.path.clone()));
    paths.extend(manifest.connectomes.iter().map(|c| c.path.clone()));
    for p in paths {
        digests.insert(p.clone(), digest_file(&base.join(&p))?);
    }
    Ok(digests)
}

fn load_with_average(manifest: &Path, with_average: bool) -> Result<Dataset> {
    let mut dataset = load_dataset(manifest)?;
    if with_average {
        let sources: Vec<String> = dataset
            .conditions
            .iter()
            .filter(|c| *c != "Average")
            .cloned()
            .collect();
        dataset.add_average_condition(&sources)?;
    }
    Ok(dataset)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    init_threads(args.threads);
    let started = Instant::now();
    let config = args.sampler.to_config();
    config.validate()?;
    let dataset = load_with_average(&args.manifest, args.with_average)?;
    let data = ModelData::prepare(&dataset, &args.condition, &args.category, &[])?;
    let fitted = fit(&data, &config, None)?;

    let mut results = RunOutputs::default();
    results.config = serde_json::json!({
        "subcommand": "fit",
        "manifest": args.manifest.display().to_string(),
        "condition": args.condition,
        "category": args.category,
        "with_average": args.with_average,
        "sampler": args.sampler.echo(&config),
        "chosen_restart": fitted.chosen_restart,
        "mu_enabled": fitted.mu_enabled,
    });
    results.input_digests = dataset_digests(&args.manifest)?;
    results
        .summaries
        .push((args.condition.clone(), args.category.clone(), fitted.summary.clone()));
    results
        .traces
        .push((args.condition.clone(), args.category.clone(), fitted.chains.clone()));
    if dataset.v >= 20 {
        let set = top_biomarkers(&fitted.summary, 10, &args.condition, &args.category)?;
        results.biomarkers.push(set);
    }
    results.atlas = Some(dataset.atlas.clone());
    if !fitted.init_fallbacks.is_empty() {
        results
            .warnings
            .push(format!("init fallback for {} subjects", fitted.init_fallbacks.len()));
    }
    results
        .timings
        .insert("fit_seconds".into(), started.elapsed().as_secs_f64());
    emit_run(&results, &args.out)?;
    println!("fit complete: {}", args.out.display());
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    init_threads(args.threads);
    let started = Instant::now();
    let config = args.sampler.to_config();
    config.validate()?;
    let dataset = load_with_average(&args.manifest, args.with_average)?;

    let conditions: Vec<String> = match &args.conditions {
        Some(s) => parse_list(s),
        None => dataset.conditions.clone(),
    };
    let categories: Vec<String> = match &args.categories {
        Some(s) => parse_list(s),
        None => dataset.behaviors.keys().cloned().collect(),
    };
    let methods = parse_list(&args.methods);
    for m in &methods {
        if !["latentsna", "cpm", "ridge"].contains(&m.as_str()) {
            bail!("unknown method '{m}' (latentsna|cpm|ridge)");
        }
    }
    let lambda_grid = parse_floats(&args.lambda_grid)?;

    // one split plan reused across all cells and methods
    let first_cat = categories
        .first()
        .context("dataset has no behavior categories")?;
    let subjects: Vec<String> = dataset
        .behaviors
        .get(first_cat)
        .with_context(|| format!("category {first_cat} not in dataset"))?
        .subject_ids
        .clone();
    let plan: SplitPlan = if args.kfold {
        let k = (1.0 / (1.0 - args.train_fraction)).round() as usize;
        split_kfold(&subjects, k, config.seed)?
    } else {
        split_folds(&subjects, args.train_fraction, args.repeats, config.seed)?
    };
    let split_hash = plan.hash();

    let mut results = RunOutputs::default();
    let mut all_records: Vec<AccuracyRecord> = Vec::new();
    for condition in &conditions {
        for category in &categories {
            let cell_cfg = SamplerConfig {
                seed: derive_seed(
                    config.seed,
                    &[0xCE11, hash_label(condition), hash_label(category)],
                ),
                ..config.clone()
            };
            let cell = run_cv_cell(
                &dataset,
                condition,
                category,
                &plan,
                &cell_cfg,
                &methods,
                args.p_threshold,
                &lambda_grid,
            )?;
            if let Some(avg) = &cell.averaged_summary {
                results
                    .summaries
                    .push((condition.clone(), category.clone(), avg.clone()));
            }
            let records = accuracy_table(&cell.predictions)?;
            all_records.extend(records);
            results.predictions.extend(cell.predictions);
            results.warnings.extend(cell.flags);
        }
    }
    results.accuracy = all_records;
    results.config = serde_json::json!({
        "subcommand": "cv",
        "manifest": args.manifest.display().to_string(),
        "conditions": conditions,
        "categories": categories,
        "methods": methods,
        "train_fraction": args.train_fraction,
        "repeats": plan.repeats.len(),
        "kfold": args.kfold,
        "p_threshold": args.p_threshold,
        "lambda_grid": lambda_grid,
        "with_average": args.with_average,
        "sampler": args.sampler.echo(&config),
        "split_hash": split_hash,
    });
    results.input_digests = dataset_digests(&args.manifest)?;
    results.split_hash = Some(split_hash);
    results.atlas = Some(dataset.atlas.clone());
    results
        .timings
        .insert("cv_seconds".into(), started.elapsed().as_secs_f64());
    let manifest = emit_run(&results, &args.out)?;
    println!(
        "cv complete: {} ({} outputs, {} warnings)",
        args.out.display(),
        manifest.outputs.len(),
        manifest.warnings.len()
    );
    Ok(())
}

fn hash_label(s: &str) -> u64 {
    s.bytes().fold(1469598103934665603u64, |acc, b| {
        (acc ^ b as u64).wrapping_mul(1099511628211)
    })
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn read_accuracy_csv(path: &Path) -> Result<Vec<AccuracyRecord>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(AccuracyRecord {
            condition: rec[0].to_string(),
            category: rec[1].to_string(),
            indicator: rec[2].to_string(),
            repeat_index: rec[3].parse()?,
            r: rec[4].parse()?,
            n_test: 0,
            method: rec.get(5).unwrap_or("latentsna").to_string(),
        });
    }
    Ok(out)
}

fn read_summary_csv(path: &Path) -> Result<PosteriorSummary> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut nodes = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        nodes.push(NodeSummary {
            node_id: rec[0].parse()?,
            cov_mean: rec[1].parse()?,
            cov_sd: rec[2].parse()?,
            ci05: rec[3].parse()?,
            ci95: rec[4].parse()?,
        });
    }
    Ok(PosteriorSummary { nodes })
}

/// De-sanitizes run filenames back to (condition, category) by matching
/// against the labels observed in accuracy records.
fn summary_files(run: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(run)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with("summary_") && name.ends_with(".csv") {
            out.push((name, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn match_labels(stem: &str, conditions: &[String], categories: &[String]) -> Option<(String, String)> {
    let sanitize = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect()
    };
    for cond in conditions {
        for cat in categories {
            if stem == format!("summary_{}_{}.csv", sanitize(cond), sanitize(cat)) {
                return Some((cond.clone(), cat.clone()));
            }
        }
    }
    None
}

fn read_trace_chains(path: &Path) -> Result<BTreeMap<u64, Vec<Vec<f64>>>> {
    // chain -> per-node series
    let mut rdr = csv::Reader::from_path(path)?;
    let mut per_chain: BTreeMap<u64, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let chain: u64 = rec[0].parse()?;
        let node: u64 = rec[3].parse()?;
        let cov: f64 = rec[4].parse()?;
        per_chain.entry(chain).or_default().entry(node).or_default().push(cov);
    }
    let mut out = BTreeMap::new();
    for (chain, nodes) in per_chain {
        let series: Vec<Vec<f64>> = nodes.into_values().collect();
        out.insert(chain, series);
    }
    Ok(out)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let started = Instant::now();
    let run_manifest_path = args.run.join("run_manifest.json");
    if !run_manifest_path.exists() {
        bail!("{} is not a run directory (no run_manifest.json)", args.run.display());
    }
    let atlas_path = args.run.join("atlas.csv");
    let atlas: Option<Atlas> = if atlas_path.exists() {
        Some(load_atlas_csv(&atlas_path)?)
    } else {
        None
    };

    let mut results = RunOutputs::default();
    let mut warnings = Vec::new();

    // accuracy-driven condition regressions
    let accuracy_path = args.run.join("accuracy.csv");
    let mut conditions: Vec<String> = Vec::new();
    let mut categories: Vec<String> = Vec::new();
    if accuracy_path.exists() {
        let records = read_accuracy_csv(&accuracy_path)?;
        for r in &records {
            if !conditions.contains(&r.condition) {
                conditions.push(r.condition.clone());
            }
            if !categories.contains(&r.category) {
                categories.push(r.category.clone());
            }
        }
        let model_records: Vec<AccuracyRecord> = records
            .iter()
            .filter(|r| r.method == "latentsna")
            .cloned()
            .collect();
        let has_all = CONDITION_ORDER
            .iter()
            .all(|c| model_records.iter().any(|r| &r.condition == c));
        if has_all {
            for cat in &categories {
                match condition_effect_regression(&model_records, cat) {
                    Ok(model) => results.condition_effects.push(model),
                    Err(e) => warnings.push(format!("condition regression for {cat}: {e}")),
                }
            }
        } else {
            warnings.push(format!(
                "condition regression skipped: need all of {:?}",
                CONDITION_ORDER
            ));
        }
    } else {
        warnings.push("no accuracy.csv in run; condition regressions skipped".into());
    }

    // summaries -> biomarkers, counts, label regressions
    let mut counts_by_condition: BTreeMap<String, BTreeMap<String, BTreeMap<Network, f64>>> =
        BTreeMap::new();
    for (name, path) in summary_files(&args.run)? {
        let summary = read_summary_csv(&path)?;
        let (condition, category) = match match_labels(&name, &conditions, &categories) {
            Some(pair) => pair,
            None => {
                // fit runs have no accuracy table; recover labels from the
                // file name directly
                let stem = name.trim_start_matches("summary_").trim_end_matches(".csv");
                let mut parts = stem.splitn(2, '_');
                (
                    parts.next().unwrap_or("unknown").to_string(),
                    parts.next().unwrap_or("unknown").to_string(),
                )
            }
        };
        let v = summary.nodes.len();
        if v >= 2 * args.k {
            let set: BiomarkerSet = top_biomarkers(&summary, args.k, &condition, &category)?;
            if let Some(atlas) = &atlas {
                let counts = network_counts(&set, atlas)?;
                results
                    .spider
                    .push((condition.clone(), category.clone(), counts.clone()));
                counts_by_condition
                    .entry(category.clone())
                    .or_default()
                    .insert(condition.clone(), counts);
            }
            results.biomarkers.push(set);
        } else {
            warnings.push(format!(
                "biomarkers skipped for {condition}/{category}: V = {v} < 2k"
            ));
        }
        if let Some(atlas) = &atlas {
            if atlas.v() == summary.nodes.len() {
                let covs = summary.cov_means();
                for (label, absolute) in [("signed", false), ("absolute", true)] {
                    match label_effect_regression(&covs, atlas, absolute) {
                        Ok(res) => results.label_effects.push((
                            format!("{condition}_{category}"),
                            label.to_string(),
                            res,
                        )),
                        Err(e) => warnings.push(format!(
                            "label regression ({label}) for {condition}/{category}: {e}"
                        )),
                    }
                }
            }
        }
    }

    // rest/task averaged counts per category
    for (category, by_cond) in &counts_by_condition {
        let have_all = ["Rest1", "Rest2"]
            .iter()
            .chain(TASK_CONDITIONS.iter())
            .all(|c| by_cond.contains_key(*c));
        if have_all {
            let (rest, task) = rest_task_average(by_cond)?;
            results.spider.push(("Rest".to_string(), category.clone(), rest));
            results.spider.push(("Task".to_string(), category.clone(), task));
        }
    }

    // convergence warnings from traces
    for entry in std::fs::read_dir(&args.run)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with("trace_") && name.ends_with(".csv") {
            let chains = read_trace_chains(&entry.path())?;
            if chains.len() >= 2 {
                let n_nodes = chains.values().next().map(|s| s.len()).unwrap_or(0);
                for node in 0..n_nodes {
                    let series: Vec<Vec<f64>> = chains.values().map(|s| s[node].clone()).collect();
                    if let Ok(r) = rhat(&series) {
                        if r > args.rhat_warn {
                            warnings.push(format!(
                                "{name}: node {} split-Rhat {r:.3} > {}",
                                node + 1,
                                args.rhat_warn
                            ));
                        }
                    }
                }
            }
        }
    }

    results.config = serde_json::json!({
        "subcommand": "analyze",
        "run": args.run.display().to_string(),
        "k": args.k,
        "rhat_warn": args.rhat_warn,
    });
    results.atlas = atlas;
    results.warnings = warnings;
    results
        .timings
        .insert("analyze_seconds".into(), started.elapsed().as_secs_f64());
    let manifest = emit_run(&results, &args.out)?;
    println!(
        "analyze complete: {} ({} outputs, {} warnings)",
        args.out.display(),
        manifest.outputs.len(),
        manifest.warnings.len()
    );
    Ok(())
}
