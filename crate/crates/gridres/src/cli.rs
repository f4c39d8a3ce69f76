//! The `gridres` command-line pipeline.
//!
//! Stages compose through files: `gen-grid` -> `gen-plans` -> `simulate`
//! (labels) -> `featurize` -> `hyperstruct` -> `train` -> `eval` / `rank`,
//! with `ablate` and `report` as analysis commands. Every stage is
//! deterministic given its inputs and seed, and writes a JSON manifest next
//! to its output. Flags override keys from an optional TOML config file.

use crate::dataset::{self, manifest_path_for, write_manifest};
use crate::features::{classical_metrics, feature_set, metric_cvar_correlation, u_score_summary};
use crate::grid::{
    combine_plan, load_grid, load_plans, save_grid, save_plans, validate_grid, Grid, NodeKind,
};
use crate::hyper::{build_hyperstructure, write_incidence_csv};
use crate::model::{AblationFlags, ModelConfig, Task};
use crate::paths::PathCaps;
use crate::sim::{generate_plans, label_dataset, BinningScheme, FailureConfig, SchemeSpec};
use crate::train::{cross_validate, load_checkpoint, rank_plans, save_checkpoint, train};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Errors split by exit code: validation problems exit 2, runtime failures
/// exit 3.
#[derive(Debug)]
pub enum CliError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Validation(e) | CliError::Runtime(e) => format!("{e:#}"),
        }
    }
}

fn validation(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Validation(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "gridres",
    version,
    about = "Resilience-oriented evaluation and ranking of distribution-grid expansion plans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic distribution grid (spanning forest per substation
    /// plus candidate lines)
    GenGrid(GenGridArgs),
    /// Sample distinct expansion plans from a grid's candidate lines
    GenPlans(GenPlansArgs),
    /// Simulate outage scenarios and label plans with CVaR of loss of load
    Simulate(SimulateArgs),
    /// Compute node/edge feature matrices for each plan
    Featurize(FeaturizeArgs),
    /// Build hyperedge/hypernode incidence matrices for each plan
    Hyperstruct(HyperstructArgs),
    /// Train the classifier/regressor and write a checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint, or cross-validate a configuration
    Eval(EvalArgs),
    /// Rank plans by predicted resilience
    Rank(RankArgs),
    /// Cross-validate the full model against its four ablated variants
    Ablate(AblateArgs),
    /// Tabulate classical metrics, U-score sums, CVaR, and their correlations
    Report(ReportArgs),
}

/// Optional TOML config; any value is overridden by the matching CLI flag.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub simulator: Option<FailureConfig>,
    pub model: Option<ModelConfig>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(runtime)?;
            toml::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))
                .map_err(validation)
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenGrid(args) => gen_grid(args),
        Command::GenPlans(args) => gen_plans(args),
        Command::Simulate(args) => simulate(args),
        Command::Featurize(args) => featurize(args),
        Command::Hyperstruct(args) => hyperstruct(args),
        Command::Train(args) => train_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Rank(args) => rank_cmd(args),
        Command::Ablate(args) => ablate_cmd(args),
        Command::Report(args) => report_cmd(args),
    }
}

// --- gen-grid ---------------------------------------------------------------

#[derive(Args)]
pub struct GenGridArgs {
    #[arg(long, default_value_t = 54)]
    pub nodes: usize,
    #[arg(long, default_value_t = 4)]
    pub substations: usize,
    /// Nodes that neither host demand nor act as substations
    #[arg(long, default_value_t = 0)]
    pub nonload: usize,
    #[arg(long, default_value_t = 22)]
    pub candidates: usize,
    /// Extra existing lines beyond the spanning forest
    #[arg(long, default_value_t = 0)]
    pub extra_existing: usize,
    #[arg(long, default_value_t = 0.5)]
    pub min_weight: f64,
    #[arg(long, default_value_t = 2.0)]
    pub max_weight: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Random grid with one tree component per substation. Existing line count
/// is `nodes - substations (+ extra)`, mirroring the 54-bus shapes (4 subs ->
/// 50 existing, 2 subs -> 52 existing).
pub fn synthesize_grid(args: &GenGridArgs) -> Result<Grid, CliError> {
    if args.substations == 0 || args.nodes <= args.substations + args.nonload {
        return Err(validation(anyhow!(
            "need at least 1 substation and more nodes than substations + nonload"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let n_loads = args.nodes - args.substations - args.nonload;
    let mut node_specs = Vec::with_capacity(args.nodes);
    for i in 0..args.substations {
        node_specs.push((format!("s{i:02}"), NodeKind::Substation, 0.0));
    }
    for i in 0..n_loads {
        node_specs.push((format!("l{i:02}"), NodeKind::Load, 1.0));
    }
    for i in 0..args.nonload {
        node_specs.push((format!("n{i:02}"), NodeKind::NonLoad, 0.0));
    }

    // grow one random tree per substation component
    let mut components: Vec<Vec<usize>> = (0..args.substations).map(|s| vec![s]).collect();
    let mut rest: Vec<usize> = (args.substations..args.nodes).collect();
    rest.shuffle(&mut rng);
    let weight = |rng: &mut ChaCha8Rng| rng.gen_range(args.min_weight..args.max_weight);
    let mut edges = Vec::new();
    let mut pairs = std::collections::HashSet::new();
    for node in rest {
        let comp = rng.gen_range(0..components.len());
        let anchor = components[comp][rng.gen_range(0..components[comp].len())];
        let id = format!("e{:03}", edges.len());
        edges.push((
            id,
            node_specs[anchor].0.clone(),
            node_specs[node].0.clone(),
            weight(&mut rng),
            crate::grid::EdgeStatus::Existing,
        ));
        pairs.insert((anchor.min(node), anchor.max(node)));
        components[comp].push(node);
    }
    for _ in 0..args.extra_existing {
        if let Some((a, b)) = sample_new_pair(args.nodes, &pairs, &mut rng) {
            let id = format!("e{:03}", edges.len());
            edges.push((
                id,
                node_specs[a].0.clone(),
                node_specs[b].0.clone(),
                weight(&mut rng),
                crate::grid::EdgeStatus::Existing,
            ));
            pairs.insert((a, b));
        }
    }
    for c in 0..args.candidates {
        let Some((a, b)) = sample_new_pair(args.nodes, &pairs, &mut rng) else {
            return Err(validation(anyhow!("grid too dense to place {} candidates", args.candidates)));
        };
        edges.push((
            format!("x{c:03}"),
            node_specs[a].0.clone(),
            node_specs[b].0.clone(),
            weight(&mut rng),
            crate::grid::EdgeStatus::Candidate,
        ));
        pairs.insert((a, b));
    }
    Grid::new(node_specs, edges).map_err(validation)
}

fn sample_new_pair(
    n: usize,
    taken: &std::collections::HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    for _ in 0..10_000 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if !taken.contains(&pair) {
            return Some(pair);
        }
    }
    None
}

fn gen_grid(args: GenGridArgs) -> CliResult {
    let grid = synthesize_grid(&args)?;
    let report = validate_grid(&grid);
    if !report.is_clean() {
        return Err(validation(anyhow!("generated grid failed validation: {:?}", report.violations)));
    }
    save_grid(&grid, &args.out).map_err(runtime)?;
    let config = serde_json::json!({
        "nodes": args.nodes,
        "substations": args.substations,
        "nonload": args.nonload,
        "candidates": args.candidates,
        "extra_existing": args.extra_existing,
        "min_weight": args.min_weight,
        "max_weight": args.max_weight,
    });
    write_manifest("gen-grid", args.seed, config, manifest_path_for(&args.out))
        .map_err(runtime)?;
    println!(
        "wrote grid with {} nodes / {} edges -> {}",
        grid.node_count(),
        grid.edge_count(),
        args.out.display()
    );
    Ok(())
}

// --- gen-plans ---------------------------------------------------------------

#[derive(Args)]
pub struct GenPlansArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn gen_plans(args: GenPlansArgs) -> CliResult {
    let grid = load_grid(&args.grid).map_err(validation)?;
    let plans = generate_plans(&grid, args.count, args.seed).map_err(validation)?;
    save_plans(&plans, &args.out).map_err(runtime)?;
    let config = serde_json::json!({"grid": args.grid, "count": args.count});
    write_manifest("gen-plans", args.seed, config, manifest_path_for(&args.out))
        .map_err(runtime)?;
    println!("wrote {} plans -> {}", plans.len(), args.out.display());
    Ok(())
}

// --- simulate ---------------------------------------------------------------

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub routine_rate: Option<f64>,
    #[arg(long)]
    pub hilp_rate: Option<f64>,
    #[arg(long)]
    pub routine_repair_hours: Option<u32>,
    #[arg(long)]
    pub hilp_repair_hours: Option<u32>,
    #[arg(long)]
    pub hours_per_year: Option<u32>,
    #[arg(long)]
    pub per_line_rates: bool,
    /// Binning: `quantile`, `system-i`, or `system-ii`
    #[arg(long, default_value = "quantile")]
    pub bins: String,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
}

fn simulate(args: SimulateArgs) -> CliResult {
    let file_cfg = load_file_config(&args.config)?;
    let mut cfg = file_cfg.simulator.unwrap_or_default();
    if let Some(s) = args.scenarios {
        cfg.scenarios = s;
    }
    if let Some(r) = args.routine_rate {
        cfg.routine_rate = r;
    }
    if let Some(r) = args.hilp_rate {
        cfg.hilp_rate = r;
    }
    if let Some(r) = args.routine_repair_hours {
        cfg.routine_repair_hours = r;
    }
    if let Some(r) = args.hilp_repair_hours {
        cfg.hilp_repair_hours = r;
    }
    if let Some(h) = args.hours_per_year {
        cfg.hours_per_year = h;
    }
    if args.per_line_rates {
        cfg.per_line_rates = true;
    }
    let alpha = args.alpha.or(file_cfg.alpha).unwrap_or(0.95);
    let seed = args.seed.or(file_cfg.seed).unwrap_or(7);

    let grid = load_grid(&args.grid).map_err(validation)?;
    let report = validate_grid(&grid);
    if !report.is_clean() {
        return Err(validation(anyhow!("grid failed validation: {:?}", report.violations)));
    }
    let plans = load_plans(&args.plans).map_err(validation)?;
    let scheme = match args.bins.as_str() {
        "quantile" => SchemeSpec::Quantile { classes: args.classes },
        "system-i" => SchemeSpec::Fixed(BinningScheme::system_i(args.classes).map_err(validation)?),
        "system-ii" => {
            SchemeSpec::Fixed(BinningScheme::system_ii(args.classes).map_err(validation)?)
        }
        other => return Err(validation(anyhow!("unknown binning `{other}`"))),
    };
    let (labeled, resolved_scheme) =
        label_dataset(&grid, &plans, &cfg, &scheme, alpha, seed).map_err(validation)?;
    dataset::write_labels_csv(&labeled, &args.out).map_err(runtime)?;
    let config = serde_json::json!({
        "grid": args.grid,
        "plans": args.plans,
        "alpha": alpha,
        "simulator": cfg,
        "binning": {"mode": args.bins, "classes": args.classes,
                     "breakpoints": resolved_scheme.breakpoints()},
    });
    write_manifest("simulate", seed, config, manifest_path_for(&args.out)).map_err(runtime)?;
    println!(
        "labeled {} plans ({} scenarios each) -> {}",
        labeled.len(),
        cfg.scenarios,
        args.out.display()
    );
    Ok(())
}

// --- featurize ---------------------------------------------------------------

#[derive(Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cap on enumerated paths per node pair (0 = unlimited)
    #[arg(long, default_value_t = 100)]
    pub max_paths: usize,
    /// Cap on path hops (0 = node count)
    #[arg(long, default_value_t = 0)]
    pub max_hops: usize,
}

fn caps_from(max_paths: usize, max_hops: usize) -> PathCaps {
    PathCaps {
        max_paths: if max_paths == 0 { None } else { Some(max_paths) },
        max_hops: if max_hops == 0 { None } else { Some(max_hops) },
    }
}

fn featurize(args: FeaturizeArgs) -> CliResult {
    let grid = load_grid(&args.grid).map_err(validation)?;
    let report = validate_grid(&grid);
    if !report.is_clean() {
        return Err(validation(anyhow!("grid failed validation: {:?}", report.violations)));
    }
    let plans = load_plans(&args.plans).map_err(validation)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(runtime)?;
    let caps = caps_from(args.max_paths, args.max_hops);
    for plan in &plans {
        let combined = combine_plan(&grid, plan).map_err(validation)?;
        let features = feature_set(&combined, &caps);
        dataset::write_feature_csvs(&combined, &features, &args.out).map_err(runtime)?;
    }
    let config = serde_json::json!({
        "grid": args.grid,
        "plans": args.plans,
        "max_paths": args.max_paths,
        "max_hops": args.max_hops,
    });
    write_manifest("featurize", 0, config, manifest_path_for(&args.out)).map_err(runtime)?;
    println!("wrote features for {} plans -> {}", plans.len(), args.out.display());
    Ok(())
}

// --- hyperstruct ---------------------------------------------------------------

#[derive(Args)]
pub struct HyperstructArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub plans: PathBuf,
    /// Feature directory produced by `featurize`; incidence CSVs are written
    /// alongside the inputs
    #[arg(long)]
    pub features: PathBuf,
    /// Neighborhood size for both hyperedges and hypernodes
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

fn hyperstruct(args: HyperstructArgs) -> CliResult {
    let grid = load_grid(&args.grid).map_err(validation)?;
    let plans = load_plans(&args.plans).map_err(validation)?;
    for plan in &plans {
        let combined = combine_plan(&grid, plan).map_err(validation)?;
        let feats =
            dataset::read_plan_features(&args.features, &plan.plan_id).map_err(validation)?;
        let hs = build_hyperstructure(&combined, &feats.x_v, args.k);
        write_incidence_csv(&hs.q_e, dataset::qe_csv_path(&args.features, &plan.plan_id))
            .map_err(|e| runtime(anyhow!("writing q_e: {e}")))?;
        write_incidence_csv(&hs.q_v, dataset::qv_csv_path(&args.features, &plan.plan_id))
            .map_err(|e| runtime(anyhow!("writing q_v: {e}")))?;
    }
    let config = serde_json::json!({
        "grid": args.grid, "plans": args.plans, "features": args.features, "k": args.k,
    });
    write_manifest(
        "hyperstruct",
        0,
        config,
        args.features.join("hyperstruct.manifest.json"),
    )
    .map_err(runtime)?;
    println!("wrote incidence matrices for {} plans -> {}", plans.len(), args.features.display());
    Ok(())
}

// --- shared model-config resolution ---------------------------------------------

#[derive(Args, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `system-i` or `system-ii` hyperparameter preset
    #[arg(long)]
    pub preset: Option<String>,
    /// `classify` or `regress`
    #[arg(long, default_value = "classify")]
    pub task: String,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub no_uscores: bool,
    #[arg(long)]
    pub no_hyperedge: bool,
    #[arg(long)]
    pub no_hypernode: bool,
    #[arg(long)]
    pub no_attention: bool,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(ModelConfig, Option<u64>), CliError> {
        let file_cfg = load_file_config(&self.config)?;
        let task = match self.task.as_str() {
            "classify" => Task::Classify { classes: self.classes },
            "regress" => Task::Regress,
            other => return Err(validation(anyhow!("unknown task `{other}`"))),
        };
        let mut cfg = match (&file_cfg.model, self.preset.as_deref()) {
            (_, Some("system-i")) => ModelConfig::system_i(task),
            (_, Some("system-ii")) => ModelConfig::system_ii(task),
            (_, Some(other)) => return Err(validation(anyhow!("unknown preset `{other}`"))),
            (Some(m), None) => {
                let mut m = m.clone();
                m.task = task;
                m
            }
            (None, None) => ModelConfig::system_i(task),
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(d) = self.dropout {
            cfg.dropout = d;
        }
        if let Some(h) = self.hidden_dim {
            cfg.hidden_dim = h;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        cfg.ablation = AblationFlags {
            no_uscores: self.no_uscores,
            no_hyperedge: self.no_hyperedge,
            no_hypernode: self.no_hypernode,
            no_attention: self.no_attention,
        };
        Ok((cfg, file_cfg.seed))
    }
}

fn load_dataset_for(
    data: &Path,
    features: &Path,
    cfg: &ModelConfig,
) -> Result<dataset::Dataset, CliError> {
    let labels = dataset::read_labels_csv(data).map_err(validation)?;
    let ds = dataset::assemble_dataset(&labels, features, &cfg.task).map_err(validation)?;
    Ok(if cfg.ablation.no_uscores { ds.without_uscores() } else { ds })
}

// --- train ---------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn train_cmd(args: TrainArgs) -> CliResult {
    let (cfg, cfg_seed) = args.model.resolve()?;
    let seed = args.seed.or(cfg_seed).unwrap_or(7);
    let ds = load_dataset_for(&args.data, &args.features, &cfg)?;
    let report = train(&ds.samples, &cfg, seed).map_err(validation)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(runtime)?;
    let ckpt = args.out.join("model.json");
    save_checkpoint(&report.model, &ckpt).map_err(runtime)?;
    let mut history = String::from("epoch,train_loss,eval_metric\n");
    for h in &report.history {
        let _ = writeln!(history, "{},{},{}", h.epoch, h.train_loss, h.eval_metric);
    }
    std::fs::write(args.out.join("history.csv"), history).map_err(|e| runtime(anyhow!(e)))?;
    let config = serde_json::json!({
        "data": args.data, "features": args.features, "model": cfg,
    });
    write_manifest("train", seed, config, args.out.join("manifest.json")).map_err(runtime)?;
    let best = &report.history[report.best_epoch];
    println!(
        "trained {} epochs; best epoch {} (eval metric {:.4}) -> {}",
        report.history.len(),
        report.best_epoch,
        best.eval_metric,
        ckpt.display()
    );
    Ok(())
}

// --- eval ---------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint to evaluate (single-shot mode)
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// When set, cross-validate the configured model instead of loading a
    /// checkpoint
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn eval_cmd(args: EvalArgs) -> CliResult {
    match (args.folds, &args.ckpt) {
        (Some(folds), _) => {
            let (cfg, cfg_seed) = args.model.resolve()?;
            let seed = args.seed.or(cfg_seed).unwrap_or(7);
            let ds = load_dataset_for(&args.data, &args.features, &cfg)?;
            let report = cross_validate(&ds.samples, &cfg, folds, seed).map_err(validation)?;
            let mut out = String::from("fold,accuracy_or_rmse,epochs,wall_seconds\n");
            for f in &report.folds {
                let _ =
                    writeln!(out, "{},{},{},{:.3}", f.fold, f.metric, f.epochs, f.wall_seconds);
            }
            std::fs::write(&args.out, out).map_err(|e| runtime(anyhow!(e)))?;
            let config = serde_json::json!({
                "data": args.data, "features": args.features, "model": cfg, "folds": folds,
                "mean": report.mean, "std_error": report.std_error,
            });
            write_manifest("eval", seed, config, manifest_path_for(&args.out))
                .map_err(runtime)?;
            println!(
                "{folds}-fold cross-validation: {:.4} +/- {:.4} -> {}",
                report.mean,
                report.std_error,
                args.out.display()
            );
            Ok(())
        }
        (None, Some(ckpt_path)) => {
            let model = load_checkpoint(ckpt_path).map_err(validation)?;
            let ds = load_dataset_for(&args.data, &args.features, &model.config)?;
            let refs: Vec<&crate::model::PlanSample> = ds.samples.iter().collect();
            let metric = crate::train::evaluate(&model, &refs).map_err(validation)?;
            let out = format!("metric,value\naccuracy_or_rmse,{metric}\n");
            std::fs::write(&args.out, out).map_err(|e| runtime(anyhow!(e)))?;
            let config = serde_json::json!({
                "data": args.data, "features": args.features, "ckpt": ckpt_path,
            });
            write_manifest("eval", args.seed.unwrap_or(0), config, manifest_path_for(&args.out))
                .map_err(runtime)?;
            println!("evaluation metric {metric:.4} -> {}", args.out.display());
            Ok(())
        }
        (None, None) => Err(validation(anyhow!("pass either --ckpt or --folds"))),
    }
}

// --- rank ---------------------------------------------------------------

#[derive(Args)]
pub struct RankArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn rank_cmd(args: RankArgs) -> CliResult {
    let model = load_checkpoint(&args.ckpt).map_err(validation)?;
    let plans = load_plans(&args.plans).map_err(validation)?;
    let labels: Vec<dataset::LabelRow> = plans
        .iter()
        .map(|p| dataset::LabelRow {
            plan_id: p.plan_id.clone(),
            cvar_kwh: 0.0,
            label: 0,
            mean_loss: 0.0,
            scenario_count: 0,
        })
        .collect();
    let mut ds =
        dataset::assemble_dataset(&labels, &args.features, &model.config.task).map_err(validation)?;
    if model.config.ablation.no_uscores {
        ds = ds.without_uscores();
    }
    let ranked = rank_plans(&model, &ds.samples).map_err(validation)?;
    let mut out = String::from("position,plan_id,predicted_label,confidence,predicted_cvar\n");
    for (i, r) in ranked.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i,
            r.plan_id,
            r.predicted_label.map_or(String::new(), |l| l.to_string()),
            r.confidence.map_or(String::new(), |c| c.to_string()),
            r.predicted_cvar.map_or(String::new(), |c| c.to_string()),
        );
    }
    std::fs::write(&args.out, out).map_err(|e| runtime(anyhow!(e)))?;
    let config = serde_json::json!({
        "ckpt": args.ckpt, "plans": args.plans, "features": args.features,
    });
    write_manifest("rank", 0, config, manifest_path_for(&args.out)).map_err(runtime)?;
    println!("ranked {} plans -> {}", ranked.len(), args.out.display());
    Ok(())
}

// --- ablate ---------------------------------------------------------------

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// The four ablated variants compared against the full model.
pub fn ablation_variants() -> Vec<(&'static str, AblationFlags)> {
    vec![
        ("full", AblationFlags::default()),
        ("no_uscores", AblationFlags { no_uscores: true, ..Default::default() }),
        ("no_hyperedge", AblationFlags { no_hyperedge: true, ..Default::default() }),
        ("no_hypernode", AblationFlags { no_hypernode: true, ..Default::default() }),
        ("no_attention", AblationFlags { no_attention: true, ..Default::default() }),
    ]
}

fn ablate_cmd(args: AblateArgs) -> CliResult {
    let (base_cfg, cfg_seed) = args.model.resolve()?;
    let seed = args.seed.or(cfg_seed).unwrap_or(7);
    let labels = dataset::read_labels_csv(&args.data).map_err(validation)?;
    let ds = dataset::assemble_dataset(&labels, &args.features, &base_cfg.task)
        .map_err(validation)?;
    let mut out = String::from("variant,mean_metric,std_error\n");
    for (name, flags) in ablation_variants() {
        let mut cfg = base_cfg.clone();
        cfg.ablation = flags;
        let view = if flags.no_uscores { ds.without_uscores() } else {
            dataset::Dataset { samples: ds.samples.clone(), uscore_cols: ds.uscore_cols }
        };
        let report = cross_validate(&view.samples, &cfg, args.folds, seed).map_err(validation)?;
        let _ = writeln!(out, "{},{},{}", name, report.mean, report.std_error);
        println!("{name}: {:.4} +/- {:.4}", report.mean, report.std_error);
    }
    std::fs::write(&args.out, out).map_err(|e| runtime(anyhow!(e)))?;
    let config = serde_json::json!({
        "data": args.data, "features": args.features, "model": base_cfg, "folds": args.folds,
    });
    write_manifest("ablate", seed, config, manifest_path_for(&args.out)).map_err(runtime)?;
    println!("wrote ablation table -> {}", args.out.display());
    Ok(())
}

// --- report ---------------------------------------------------------------

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub plans: PathBuf,
    /// Labels CSV produced by `simulate`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub max_paths: usize,
    #[arg(long, default_value_t = 0)]
    pub max_hops: usize,
}

fn report_cmd(args: ReportArgs) -> CliResult {
    let grid = load_grid(&args.grid).map_err(validation)?;
    let plans = load_plans(&args.plans).map_err(validation)?;
    let labels = dataset::read_labels_csv(&args.data).map_err(validation)?;
    let cvar_by_plan: std::collections::HashMap<&str, f64> =
        labels.iter().map(|l| (l.plan_id.as_str(), l.cvar_kwh)).collect();
    let caps = caps_from(args.max_paths, args.max_hops);

    let mut rows = Vec::new();
    for plan in &plans {
        let Some(&cvar) = cvar_by_plan.get(plan.plan_id.as_str()) else {
            return Err(validation(anyhow!("plan `{}` missing from {}", plan.plan_id, args.data.display())));
        };
        let combined = combine_plan(&grid, plan).map_err(validation)?;
        let metrics = classical_metrics(&combined);
        let uscores = u_score_summary(&combined, &caps);
        rows.push((plan.plan_id.clone(), metrics, uscores, cvar));
    }
    let mut out = String::from("plan_id,apl,diameter,avg_betweenness,uscore_sum,cvar_kwh\n");
    for (id, m, u, c) in &rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", id, m.apl, m.diameter, m.avg_betweenness, u, c);
    }
    std::fs::write(&args.out, out).map_err(|e| runtime(anyhow!(e)))?;

    let cvars: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let mut corr = String::from("metric,r_vs_inverse_cvar\n");
    let metric_columns: [(&str, Vec<f64>); 4] = [
        ("apl", rows.iter().map(|r| r.1.apl).collect()),
        ("diameter", rows.iter().map(|r| r.1.diameter).collect()),
        ("avg_betweenness", rows.iter().map(|r| r.1.avg_betweenness).collect()),
        ("uscore_sum", rows.iter().map(|r| r.2).collect()),
    ];
    for (name, values) in metric_columns {
        match metric_cvar_correlation(&values, &cvars) {
            Ok(r) => {
                let _ = writeln!(corr, "{name},{r}");
            }
            Err(e) => {
                let _ = writeln!(corr, "{name},error: {e}");
            }
        }
    }
    let corr_path = correlations_path(&args.out);
    std::fs::write(&corr_path, corr).map_err(|e| runtime(anyhow!(e)))?;
    let config = serde_json::json!({
        "grid": args.grid, "plans": args.plans, "data": args.data,
        "max_paths": args.max_paths, "max_hops": args.max_hops,
    });
    write_manifest("report", 0, config, manifest_path_for(&args.out)).map_err(runtime)?;
    println!(
        "wrote metric report for {} plans -> {} (+ {})",
        rows.len(),
        args.out.display(),
        corr_path.display()
    );
    Ok(())
}

/// `report.csv` -> `report_correlations.csv`
pub fn correlations_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().to_string()).unwrap_or_default();
    let name =
        if ext.is_empty() { format!("{stem}_correlations") } else { format!("{stem}_correlations.{ext}") };
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_gen_args() -> GenGridArgs {
        GenGridArgs {
            nodes: 54,
            substations: 4,
            nonload: 0,
            candidates: 22,
            extra_existing: 0,
            min_weight: 0.5,
            max_weight: 2.0,
            seed: 7,
            out: PathBuf::from("/dev/null"),
        }
    }

    #[test]
    fn synthetic_grid_matches_target_shape() {
        let g = synthesize_grid(&base_gen_args()).unwrap();
        assert_eq!(g.node_count(), 54);
        assert_eq!(g.substations().len(), 4);
        let existing = g
            .edges()
            .iter()
            .filter(|e| e.status == crate::grid::EdgeStatus::Existing)
            .count();
        let candidates = g.edge_count() - existing;
        assert_eq!(existing, 50);
        assert_eq!(candidates, 22);
        assert!(validate_grid(&g).is_clean());
    }

    #[test]
    fn synthetic_grid_is_deterministic_per_seed() {
        let a = synthesize_grid(&base_gen_args()).unwrap();
        let b = synthesize_grid(&base_gen_args()).unwrap();
        assert_eq!(a, b);
        let mut args = base_gen_args();
        args.seed = 8;
        assert_ne!(synthesize_grid(&args).unwrap(), a);
    }

    #[test]
    fn system_ii_shape_with_nonload_nodes() {
        let mut args = base_gen_args();
        args.substations = 2;
        args.nonload = 2;
        args.candidates = 20;
        let g = synthesize_grid(&args).unwrap();
        let existing = g
            .edges()
            .iter()
            .filter(|e| e.status == crate::grid::EdgeStatus::Existing)
            .count();
        assert_eq!(existing, 52);
        assert_eq!(g.edge_count(), 72);
        let nonload =
            g.nodes().iter().filter(|n| n.kind == NodeKind::NonLoad).count();
        assert_eq!(nonload, 2);
    }

    #[test]
    fn correlations_path_is_derived_from_out() {
        assert_eq!(
            correlations_path(Path::new("/tmp/report.csv")),
            Path::new("/tmp/report_correlations.csv")
        );
    }

    #[test]
    fn rejects_zero_substations() {
        let mut args = base_gen_args();
        args.substations = 0;
        assert!(synthesize_grid(&args).is_err());
    }
}
