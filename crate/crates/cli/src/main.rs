//! `ltlf`: multi-year feeder peak forecasting from the command line.
//!
//! Every subcommand reads the same flat `key=value` configuration. Stages
//! write into the configured run directory and later stages read what the
//! earlier ones wrote, so `cluster`, `features`, `train`, `select` and
//! `forecast` can be run one at a time or all at once with `pipeline`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ltlf_core::config::RunConfig;
use ltlf_core::domain::{load_truth, Season};
use ltlf_core::features::PcaModel;
use ltlf_core::metrics::{breakdown, GroupBy};
use ltlf_core::pipeline::{
    comparison_table, fit_area_pca, forecast_all, growth_table, load_models, merge_truth, method_metrics, prepare_seasons,
    read_forecasts, run_pipeline, save_models, score, select_configs, train_baselines, train_bundles, with_jobs,
    write_clusters, write_comparison, write_features, write_forecasts, write_growth, write_k_scores, write_merges,
    write_metrics, GrowthRow, Inputs, MethodMetrics, SeasonPrep,
};
use ltlf_core::selector::ConfigurationRegistry;
use ltlf_core::seqdata::ConfigKind;
use ltlf_core::synthetic::{generate, SyntheticSpec};

#[derive(Parser, Debug)]
#[command(name = "ltlf", version, about = "Multi-year feeder peak demand forecasting")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores); overrides the configuration.
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic planning area and a configuration pointing at it.
    Generate {
        /// Destination directory.
        dir: PathBuf,
        /// Plain feeders only, without the planted configuration families.
        #[arg(long)]
        plain: bool,
    },
    /// Virtual feeder merge and composition clustering.
    Cluster,
    /// Area driver PCA and per-year feature rows.
    Features,
    /// Train every (season, cluster, configuration) model.
    Train,
    /// Register the best configuration per feeder.
    Select,
    /// Forecast the horizon with SSL, single configurations and baselines.
    Forecast,
    /// Score forecasts against true peaks.
    Evaluate {
        #[arg(long)]
        forecasts: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Break one method down by cluster, year, config or season.
        #[arg(long)]
        group_by: Option<String>,
        /// Method broken down by `--group-by`.
        #[arg(long, default_value = "ssl")]
        method: String,
    },
    /// Method comparison table (SSL against the baselines, per season).
    Compare {
        #[arg(long)]
        forecasts: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Every stage end to end.
    Pipeline,
}

/// Bad command-line usage; exits with the validation status.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut c = RunConfig::load(path).with_context(|| format!("config {}", path.display()))?;
            let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            c.resolve_paths(base);
            c
        }
        None => RunConfig::default(),
    };
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate().context("config")?;
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare(inputs: &Inputs, cfg: &RunConfig) -> Result<Vec<SeasonPrep>> {
    let preps = prepare_seasons(inputs, cfg).context("cluster")?;
    for p in &preps {
        info!("{}: {} feeders in {} clusters", p.season, p.histories.len(), p.n_clusters());
    }
    Ok(preps)
}

/// The PCA written by `features`, or a fresh fit when there is none.
fn area_pca(inputs: &Inputs, cfg: &RunConfig) -> Result<PcaModel<f64>> {
    let path = cfg.out_dir.join("pca.txt");
    if path.exists() {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        return PcaModel::from_text(&text).with_context(|| format!("features: {}", path.display()));
    }
    fit_area_pca(inputs).context("features")
}

fn cmd_generate(cfg: &RunConfig, dir: &Path, plain: bool) -> Result<()> {
    let mut spec = SyntheticSpec::default_area(cfg.seed);
    spec.n_feeders = cfg.synthetic_n_feeders;
    spec.n_years = cfg.synthetic_n_years;
    spec.first_year = cfg.synthetic_first_year;
    spec.horizon = cfg.horizon;
    spec.families = cfg.synthetic_families && !plain;
    spec.transfer_pairs = cfg.synthetic_transfer_pairs;
    let data = generate(&spec).context("synthetic")?;
    data.write(dir).context("synthetic")?;
    let run = RunConfig {
        feeders: "feeders.csv".into(),
        area: "area.csv".into(),
        transfers: Some("transfers.csv".into()),
        scenario: "scenario.csv".into(),
        truth: Some("truth.csv".into()),
        out_dir: "run".into(),
        ..cfg.clone()
    };
    write_text(&dir.join("config.txt"), &run.to_text())?;
    println!(
        "wrote {} feeders x {} years to {} (config: {})",
        spec.n_feeders,
        spec.n_years,
        dir.display(),
        dir.join("config.txt").display()
    );
    Ok(())
}

fn cmd_cluster(cfg: &RunConfig) -> Result<()> {
    let inputs = Inputs::load_history(cfg).context("cluster")?;
    let preps = prepare(&inputs, cfg)?;
    write_clusters(out_path(cfg, "clusters.csv")?, &preps)?;
    write_k_scores(out_path(cfg, "k_scores.csv")?, &preps)?;
    write_merges(out_path(cfg, "merges.csv")?, &preps)?;
    for p in &preps {
        let sizes = p.clustering.assignment.cluster_sizes();
        println!("{}: K = {} with sizes {:?}", p.season, p.n_clusters(), sizes);
    }
    Ok(())
}

fn cmd_features(cfg: &RunConfig) -> Result<()> {
    let inputs = Inputs::load_history(cfg).context("features")?;
    let preps = prepare(&inputs, cfg)?;
    let pca = fit_area_pca(&inputs).context("features")?;
    write_text(&out_path(cfg, "pca.txt")?, &pca.to_text())?;
    write_features(out_path(cfg, "features.csv")?, &preps, &inputs.area, &pca).context("features")?;
    let share: Vec<String> = pca.explained_share().iter().map(|s| format!("{:.1}%", 100.0 * s)).collect();
    println!("area PCA explained variance: {}", share.join(", "));
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let inputs = Inputs::load_history(cfg).context("train")?;
    let preps = prepare(&inputs, cfg)?;
    let pca = area_pca(&inputs, cfg)?;
    let models = train_bundles(&preps, &inputs.area, &pca, cfg).context("train")?;
    save_models(out_path(cfg, "models")?, &models).context("train")?;
    println!("trained {} model pools into {}", models.len(), cfg.out_dir.join("models").display());
    Ok(())
}

fn print_shares(registry: &ConfigurationRegistry) {
    for season in Season::ALL {
        if registry.entries.keys().any(|(s, _)| *s == season) {
            let sh = registry.shares(Some(season));
            let parts: Vec<String> = ConfigKind::ALL
                .iter()
                .zip(sh)
                .map(|(k, v)| format!("{k} {:.1}%", 100.0 * v))
                .collect();
            println!("{season}: {}", parts.join(", "));
        }
    }
}

fn cmd_select(cfg: &RunConfig) -> Result<()> {
    let inputs = Inputs::load_history(cfg).context("select")?;
    let preps = prepare(&inputs, cfg)?;
    let pca = area_pca(&inputs, cfg)?;
    let models = load_models(cfg.out_dir.join("models"), &preps, cfg).context("select: loading models (run `train` first)")?;
    let registry = select_configs(&preps, &inputs.area, &pca, &models, cfg).context("select")?;
    registry.write_csv(out_path(cfg, "registry.csv")?)?;
    print_shares(&registry);
    Ok(())
}

fn growth_text(rows: &[GrowthRow]) -> String {
    let mut s = format!("{:<8} {:>7} {:>6} {:>12} {:>9}\n", "season", "cluster", "year", "mean_peak", "growth_%");
    for g in rows {
        s += &format!(
            "{:<8} {:>7} {:>6} {:>12.2} {:>9.2}\n",
            g.season.to_string(),
            g.cluster,
            g.year,
            g.mean_peak,
            g.growth_pct
        );
    }
    s
}

fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(cfg).context("forecast")?;
    let preps = prepare(&inputs, cfg)?;
    let pca = area_pca(&inputs, cfg)?;
    let models = load_models(cfg.out_dir.join("models"), &preps, cfg).context("forecast: loading models (run `train` first)")?;
    let registry = ConfigurationRegistry::read_csv(cfg.out_dir.join("registry.csv"))
        .context("forecast: loading registry (run `select` first)")?;
    let baselines = if cfg.baselines {
        Some(train_baselines(&preps, &inputs.area, &pca, cfg).context("baselines")?)
    } else {
        None
    };
    let rows = forecast_all(&preps, &inputs, &pca, &models, &registry, baselines.as_deref(), cfg).context("forecast")?;
    write_forecasts(out_path(cfg, "forecasts.csv")?, &rows)?;
    let growth = growth_table(&preps, &rows);
    write_growth(out_path(cfg, "growth.csv")?, &growth)?;
    print!("{}", growth_text(&growth));
    Ok(())
}

fn scored_metrics(cfg: &RunConfig, forecasts: Option<PathBuf>, truth: Option<PathBuf>) -> Result<(Vec<MethodMetrics>, Vec<ltlf_core::metrics::ForecastOutcome>)> {
    let fpath = forecasts.unwrap_or_else(|| cfg.out_dir.join("forecasts.csv"));
    let tpath = truth
        .or_else(|| cfg.truth.clone())
        .ok_or_else(|| usage("no truth file: pass --truth or set `truth` in the configuration"))?;
    let rows = read_forecasts(&fpath).context("evaluate")?;
    let truth = load_truth(&tpath).context("evaluate")?;
    let outcomes = score(&rows, &merge_truth(&truth, &[])).context("evaluate")?;
    Ok((method_metrics(&outcomes).context("evaluate")?, outcomes))
}

fn metrics_text(metrics: &[MethodMetrics]) -> String {
    let mut s = format!("{:<10} {:<7} {:>9} {:>10} {:>8} {:>6}\n", "method", "season", "amape_%", "rmse", "r2", "n");
    for m in metrics {
        s += &format!(
            "{:<10} {:<7} {:>9.3} {:>10.3} {:>8} {:>6}\n",
            m.method,
            m.season.map_or("all".to_string(), |x| x.to_string()),
            m.summary.amape,
            m.summary.rmse,
            m.summary.r_squared.map_or("-".to_string(), |r| format!("{r:.4}")),
            m.summary.n
        );
    }
    s
}

fn cmd_evaluate(cfg: &RunConfig, forecasts: Option<PathBuf>, truth: Option<PathBuf>, group_by: Option<String>, method: &str) -> Result<()> {
    let by = group_by
        .map(|g| g.parse::<GroupBy>().map_err(|e| usage(e.to_string())))
        .transpose()?;
    let (metrics, outcomes) = scored_metrics(cfg, forecasts, truth)?;
    write_metrics(out_path(cfg, "metrics.csv")?, &metrics)?;
    print!("{}", metrics_text(&metrics));
    if let Some(by) = by {
        let picked: Vec<_> = outcomes.into_iter().filter(|o| o.config == method).collect();
        if picked.is_empty() {
            return Err(usage(format!("no forecasts for method `{method}`")));
        }
        println!("\n{method} by {by}:");
        for (k, m) in breakdown(&picked, by).context("evaluate")? {
            println!(
                "{k:<12} amape {:>8.3}  rmse {:>9.3}  r2 {}",
                m.amape,
                m.rmse,
                m.r_squared.map_or("-".to_string(), |r| format!("{r:.4}"))
            );
        }
    }
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, forecasts: Option<PathBuf>, truth: Option<PathBuf>) -> Result<()> {
    let (metrics, _) = scored_metrics(cfg, forecasts, truth)?;
    write_comparison(out_path(cfg, "comparison.csv")?, &metrics)?;
    print!("{}", comparison_table(&metrics));
    Ok(())
}

fn cmd_pipeline(cfg: &RunConfig) -> Result<()> {
    let inputs = Inputs::load(cfg).context("pipeline: loading inputs")?;
    let report = run_pipeline(&inputs, cfg, Some(&cfg.out_dir)).context("pipeline")?;
    println!("run directory: {} (seed {})", cfg.out_dir.display(), cfg.seed);
    print_shares(&report.registry);
    match &report.metrics {
        Some(m) => print!("{}", comparison_table(m)),
        None => print!("{}", growth_text(&growth_table(&report.preps, &report.forecasts))),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let jobs = cfg.jobs;
    with_jobs(jobs, move || match cli.command {
        Command::Generate { dir, plain } => cmd_generate(&cfg, &dir, plain),
        Command::Cluster => cmd_cluster(&cfg),
        Command::Features => cmd_features(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Select => cmd_select(&cfg),
        Command::Forecast => cmd_forecast(&cfg),
        Command::Evaluate {
            forecasts,
            truth,
            group_by,
            method,
        } => cmd_evaluate(&cfg, forecasts, truth, group_by, &method),
        Command::Compare { forecasts, truth } => cmd_compare(&cfg, forecasts, truth),
        Command::Pipeline => cmd_pipeline(&cfg),
    })?
}

/// 1 for invalid input or usage, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<ltlf_core::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
