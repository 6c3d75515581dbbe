//! End-to-end orchestration: virtual feeder merge, clustering, PCA, model
//! training per (season, cluster), per-feeder selection, forecasting and
//! scoring, with every artifact written to a run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::baselines::{bottom_up_forecast, fit_ar2, forecast_ar2, forecast_fnn_baseline, train_fnn_baseline, FnnKind, FnnModel};
use crate::clustering::{cluster_feeders, FeederClustering};
use crate::config::RunConfig;
use crate::domain::{
    load_area_history, load_feeder_histories, load_scenario, load_transfers, load_truth, AreaHistory, FeederHistory,
    LoadTransferEvent, ScenarioInput, Season, TruthRow,
};
use crate::error::{Error, Result};
use crate::features::{fit_pca, merge_scenario, virtual_feeder_merge, FeederTimeline, MergeMap, PcaModel};
use crate::metrics::{evaluate, ForecastOutcome, MetricSummary};
use crate::nets::{derive_seed, train, ModelBundle, TrainedModel, YearForecasts};
use crate::selector::{performance_index, ConfigurationRegistry};
use crate::seqdata::{apply_scaling, build_records, fit_scaling, ConfigKind, SeqConfig};

/// Forecasting methods, in output order.
pub const METHODS: [&str; 9] = ["ssl", "recursive", "interval", "multiyear", "bottom_up", "ar2", "orf", "trf", "tnf"];

/// Rows of the comparison table.
pub const COMPARE_METHODS: [&str; 6] = ["ssl", "bottom_up", "ar2", "orf", "trf", "tnf"];

/// Raw inputs of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub histories: Vec<FeederHistory>,
    pub area: AreaHistory,
    pub transfers: Vec<LoadTransferEvent>,
    pub scenario: ScenarioInput,
    pub truth: Option<Vec<TruthRow>>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            histories: load_feeder_histories(&cfg.feeders)?,
            area: load_area_history(&cfg.area)?,
            transfers: match &cfg.transfers {
                Some(p) if p.exists() => load_transfers(p)?,
                _ => Vec::new(),
            },
            scenario: load_scenario(&cfg.scenario)?,
            truth: match &cfg.truth {
                Some(p) if p.exists() => Some(load_truth(p)?),
                _ => None,
            },
        })
    }

    /// Histories without the scenario, for stages that only need the past.
    pub fn load_history(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            histories: load_feeder_histories(&cfg.feeders)?,
            area: load_area_history(&cfg.area)?,
            transfers: match &cfg.transfers {
                Some(p) if p.exists() => load_transfers(p)?,
                _ => Vec::new(),
            },
            scenario: ScenarioInput::default(),
            truth: None,
        })
    }
}

/// Merged and clustered feeders of one season.
#[derive(Debug, Clone)]
pub struct SeasonPrep {
    pub season: Season,
    pub histories: Vec<FeederHistory>,
    pub merges: MergeMap,
    pub clustering: FeederClustering,
}

impl SeasonPrep {
    pub fn n_clusters(&self) -> usize {
        self.clustering.assignment.centroids.len()
    }

    pub fn cluster(&self, i: usize) -> usize {
        self.clustering.assignment.labels[i]
    }

    pub fn members(&self, cluster: usize) -> Vec<&FeederHistory> {
        self.histories
            .iter()
            .enumerate()
            .filter(|(i, _)| self.cluster(*i) == cluster)
            .map(|(_, h)| h)
            .collect()
    }

    pub fn first_year(&self) -> Result<i32> {
        self.histories
            .iter()
            .filter_map(|h| h.first_year())
            .min()
            .ok_or_else(|| Error::InsufficientHistory(format!("no {} records", self.season)))
    }

    pub fn last_year(&self) -> Result<i32> {
        self.histories
            .iter()
            .filter_map(|h| h.last_year())
            .max()
            .ok_or_else(|| Error::InsufficientHistory(format!("no {} records", self.season)))
    }
}

/// Seasons present in the histories, in [`Season::ALL`] order.
pub fn seasons_present(histories: &[FeederHistory]) -> Vec<Season> {
    Season::ALL
        .into_iter()
        .filter(|s| histories.iter().any(|h| h.season == *s))
        .collect()
}

/// Virtual feeder merge, then composition clustering, per season.
pub fn prepare_seasons(inputs: &Inputs, cfg: &RunConfig) -> Result<Vec<SeasonPrep>> {
    let k_range: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
    let years = (cfg.composition_years > 0).then_some(cfg.composition_years);
    seasons_present(&inputs.histories)
        .into_iter()
        .map(|season| {
            let hs: Vec<FeederHistory> = inputs.histories.iter().filter(|h| h.season == season).cloned().collect();
            let ts: Vec<LoadTransferEvent> = inputs.transfers.iter().filter(|t| t.season == season).cloned().collect();
            let (histories, merges) = virtual_feeder_merge(&hs, &ts)?;
            let clustering = cluster_feeders(
                &histories,
                years,
                &k_range,
                derive_seed(cfg.seed, &format!("kmeans/{season}")),
                cfg.kmeans_restarts,
            )?;
            Ok(SeasonPrep {
                season,
                histories,
                merges,
                clustering,
            })
        })
        .collect()
}

/// PCA of the area drivers over the years covered by the histories.
pub fn fit_area_pca(inputs: &Inputs) -> Result<PcaModel<f64>> {
    let first = inputs.histories.iter().filter_map(|h| h.first_year()).min();
    let last = inputs.histories.iter().filter_map(|h| h.last_year()).max();
    match (first, last) {
        (Some(a), Some(b)) => fit_pca(&inputs.area, a..=b),
        _ => Err(Error::InsufficientHistory("no feeder records".into())),
    }
}

/// Model pool of one (season, cluster).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModels {
    pub season: Season,
    pub cluster: usize,
    pub bundle: ModelBundle<f64>,
}

/// Configurations trained per pool: Recursive (which doubles as Interval
/// with f = 1), Interval for f = 2..=horizon, and MultiYear.
pub fn trained_configs(horizon: usize) -> Vec<SeqConfig> {
    let mut v = vec![SeqConfig::Recursive];
    v.extend((2..=horizon).map(SeqConfig::Interval));
    v.push(SeqConfig::MultiYear(horizon));
    v
}

fn model_seed(master: u64, season: Season, cluster: usize, config: SeqConfig) -> u64 {
    derive_seed(master, &format!("model/{season}/c{cluster}/{config}"))
}

fn train_one(members: &[&FeederHistory], area: &AreaHistory, pca: &PcaModel<f64>, config: SeqConfig, cfg: &RunConfig, seed: u64) -> Result<TrainedModel<f64>> {
    let mut records = Vec::new();
    for h in members {
        records.extend(build_records(h, area, pca, config, cfg.t_in)?);
    }
    let scaling = fit_scaling(&records, cfg.include_der_ev)?;
    let samples = apply_scaling::<f64>(&scaling, &records);
    train(&samples, config, scaling, &cfg.hyperparams(seed))
}

/// Runs `f` on the configured number of worker threads.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains every (season, cluster, configuration) model. Each model has its
/// own seed derived from the master seed, so results do not depend on the
/// number of threads.
pub fn train_bundles(preps: &[SeasonPrep], area: &AreaHistory, pca: &PcaModel<f64>, cfg: &RunConfig) -> Result<Vec<ClusterModels>> {
    let configs = trained_configs(cfg.horizon);
    let mut jobs = Vec::new();
    for (pi, p) in preps.iter().enumerate() {
        for c in 0..p.n_clusters() {
            for &sc in &configs {
                jobs.push((pi, c, sc));
            }
        }
    }
    let models: Vec<TrainedModel<f64>> = jobs
        .par_iter()
        .map(|&(pi, c, sc)| {
            let p = &preps[pi];
            let members = p.members(c);
            train_one(&members, area, pca, sc, cfg, model_seed(cfg.seed, p.season, c, sc)).map_err(|e| match e {
                Error::InvalidArgument(m) | Error::InsufficientHistory(m) => {
                    Error::InsufficientHistory(format!("{} cluster {c} ({sc}): {m}", p.season))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let mut it = models.into_iter();
    let mut out = Vec::new();
    for p in preps {
        for cluster in 0..p.n_clusters() {
            let mut group: Vec<TrainedModel<f64>> = it.by_ref().take(configs.len()).collect();
            let multiyear = group.pop().expect("multiyear model");
            let recursive = group[0].clone();
            out.push(ClusterModels {
                season: p.season,
                cluster,
                bundle: ModelBundle {
                    t_in: cfg.t_in,
                    recursive,
                    intervals: group,
                    multiyear,
                },
            });
        }
    }
    Ok(out)
}

fn bundle_of<'a>(models: &'a [ClusterModels], season: Season, cluster: usize) -> Result<&'a ModelBundle<f64>> {
    models
        .iter()
        .find(|m| m.season == season && m.cluster == cluster)
        .map(|m| &m.bundle)
        .ok_or_else(|| Error::InvalidArgument(format!("no models for {season} cluster {cluster}")))
}

/// Backtests every feeder's configurations over its history and registers
/// the best one.
pub fn select_configs(
    preps: &[SeasonPrep],
    area: &AreaHistory,
    pca: &PcaModel<f64>,
    models: &[ClusterModels],
    cfg: &RunConfig,
) -> Result<ConfigurationRegistry> {
    let mut jobs = Vec::new();
    for (pi, p) in preps.iter().enumerate() {
        for i in 0..p.histories.len() {
            jobs.push((pi, i));
        }
    }
    let indices = jobs
        .par_iter()
        .map(|&(pi, i)| {
            let p = &preps[pi];
            let h = &p.histories[i];
            let tl = FeederTimeline::from_history(h, area);
            let first = h.first_year().ok_or_else(|| Error::InsufficientHistory(h.feeder_id.clone()))?;
            let bundle = bundle_of(models, p.season, p.cluster(i))?;
            performance_index(&tl, first, h.len(), bundle, pca, cfg.window)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reg = ConfigurationRegistry::default();
    for (&(pi, i), idx) in jobs.iter().zip(indices) {
        reg.register(preps[pi].season, &preps[pi].histories[i].feeder_id, idx);
    }
    Ok(reg)
}

/// Feed-forward baselines of one season, trained on all of its feeders.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonBaselines {
    pub season: Season,
    pub nets: Vec<FnnModel<f64>>,
}

pub const FNN_KINDS: [FnnKind; 3] = [FnnKind::Orf, FnnKind::Trf, FnnKind::Tnf];

pub fn train_baselines(preps: &[SeasonPrep], area: &AreaHistory, pca: &PcaModel<f64>, cfg: &RunConfig) -> Result<Vec<SeasonBaselines>> {
    let jobs: Vec<(usize, FnnKind)> = (0..preps.len()).flat_map(|pi| FNN_KINDS.map(|k| (pi, k))).collect();
    let nets = jobs
        .par_iter()
        .map(|&(pi, kind)| {
            let p = &preps[pi];
            let config = match kind {
                FnnKind::Tnf => SeqConfig::MultiYear(cfg.horizon),
                _ => kind.config(),
            };
            let mut records = Vec::new();
            for h in &p.histories {
                records.extend(build_records(h, area, pca, config, kind.t_in())?);
            }
            let seed = derive_seed(cfg.seed, &format!("fnn/{}/{kind}", p.season));
            train_fnn_baseline::<f64>(kind, &records, cfg.include_der_ev, &cfg.fnn_hyperparams(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = nets.into_iter();
    Ok(preps
        .iter()
        .map(|p| SeasonBaselines {
            season: p.season,
            nets: it.by_ref().take(FNN_KINDS.len()).collect(),
        })
        .collect())
}

/// One forecast year of one feeder by one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub season: Season,
    pub feeder_id: String,
    pub cluster: usize,
    pub method: String,
    /// Configuration used; for SSL the registered one, otherwise the method.
    pub config: String,
    pub year: i32,
    pub year_index: usize,
    pub forecast: f64,
}

fn rows_of(season: Season, id: &str, cluster: usize, method: &str, config: &str, f: YearForecasts) -> Vec<ForecastRow> {
    f.into_iter()
        .enumerate()
        .map(|(k, (year, y))| ForecastRow {
            season,
            feeder_id: id.to_string(),
            cluster,
            method: method.to_string(),
            config: config.to_string(),
            year,
            year_index: k + 1,
            forecast: y,
        })
        .collect()
}

/// Forecasts the horizon after each feeder's last observed year with SSL,
/// each single configuration and (when given) the baselines.
pub fn forecast_all(
    preps: &[SeasonPrep],
    inputs: &Inputs,
    pca: &PcaModel<f64>,
    models: &[ClusterModels],
    registry: &ConfigurationRegistry,
    baselines: Option<&[SeasonBaselines]>,
    cfg: &RunConfig,
) -> Result<Vec<ForecastRow>> {
    let horizon = cfg.horizon;
    let mut jobs = Vec::new();
    for (pi, p) in preps.iter().enumerate() {
        for i in 0..p.histories.len() {
            jobs.push((pi, i));
        }
    }
    let scenarios: Vec<ScenarioInput> = preps.iter().map(|p| merge_scenario(&inputs.scenario, &p.merges)).collect();
    let per_feeder = jobs
        .par_iter()
        .map(|&(pi, i)| -> Result<Vec<ForecastRow>> {
            let p = &preps[pi];
            let h = &p.histories[i];
            let id = h.feeder_id.as_str();
            let cluster = p.cluster(i);
            let tl = FeederTimeline::with_scenario(h, &inputs.area, &scenarios[pi], horizon)?;
            let last = h.last_year().ok_or_else(|| Error::InsufficientHistory(id.to_string()))?;
            let bundle = bundle_of(models, p.season, cluster)?;
            let mut out = Vec::new();
            let selected = registry.get(p.season, id)?.selected;
            let singles = bundle.forecast_all(&tl, pca, last, horizon)?;
            let ssl = singles.iter().find(|(k, _)| *k == selected).expect("all kinds forecast").1.clone();
            out.extend(rows_of(p.season, id, cluster, "ssl", selected.as_str(), ssl));
            for (kind, f) in singles {
                out.extend(rows_of(p.season, id, cluster, kind.as_str(), kind.as_str(), f));
            }
            if let Some(bs) = baselines {
                out.extend(rows_of(p.season, id, cluster, "bottom_up", "bottom_up", bottom_up_forecast(&tl, last, horizon)?));
                let series = tl.peaks_through(last);
                let ar = fit_ar2(&series)?;
                let f: YearForecasts = forecast_ar2(&ar, &series, horizon)
                    .into_iter()
                    .enumerate()
                    .map(|(k, y)| (last + 1 + k as i32, y))
                    .collect();
                out.extend(rows_of(p.season, id, cluster, "ar2", "ar2", f));
                let b = bs
                    .iter()
                    .find(|b| b.season == p.season)
                    .ok_or_else(|| Error::InvalidArgument(format!("no baselines for {}", p.season)))?;
                for net in &b.nets {
                    let name = net.kind.to_string().to_ascii_lowercase();
                    out.extend(rows_of(p.season, id, cluster, &name, &name, forecast_fnn_baseline(net, &tl, pca, last, horizon)?));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ForecastRow> = per_feeder.into_iter().flatten().collect();
    let order = |m: &str| METHODS.iter().position(|x| *x == m).unwrap_or(METHODS.len());
    rows.sort_by(|a, b| {
        (a.season, order(&a.method), &a.feeder_id, a.year).cmp(&(b.season, order(&b.method), &b.feeder_id, b.year))
    });
    Ok(rows)
}

/// Truth keyed by (season, merged feeder id, year); members of a virtual
/// feeder are summed.
pub fn merge_truth(truth: &[TruthRow], preps: &[SeasonPrep]) -> BTreeMap<(Season, String, i32), f64> {
    let mut out = BTreeMap::new();
    for t in truth {
        let id = preps
            .iter()
            .find(|p| p.season == t.season)
            .and_then(|p| p.merges.get(&t.feeder_id).cloned())
            .unwrap_or_else(|| t.feeder_id.clone());
        *out.entry((t.season, id, t.year)).or_insert(0.0) += t.true_peak;
    }
    out
}

/// Pairs forecasts with truth. A virtual feeder missing from `truth` is
/// scored against the sum of its members. Forecasts without a true value
/// are an error.
pub fn score(rows: &[ForecastRow], truth: &BTreeMap<(Season, String, i32), f64>) -> Result<Vec<ForecastOutcome>> {
    rows.iter()
        .map(|r| {
            let missing = || Error::MissingYear {
                year: r.year,
                what: format!("true peak of {} ({})", r.feeder_id, r.season),
            };
            let actual = match truth.get(&(r.season, r.feeder_id.clone(), r.year)) {
                Some(v) => *v,
                None if r.feeder_id.contains(crate::features::VIRTUAL_ID_SEPARATOR) => r
                    .feeder_id
                    .split(crate::features::VIRTUAL_ID_SEPARATOR)
                    .map(|m| truth.get(&(r.season, m.to_string(), r.year)).copied().ok_or_else(missing))
                    .sum::<Result<f64>>()?,
                None => return Err(missing()),
            };
            Ok(ForecastOutcome {
                feeder_id: r.feeder_id.clone(),
                season: r.season,
                cluster: r.cluster,
                year_index: r.year_index,
                config: r.method.clone(),
                actual,
                forecast: r.forecast,
            })
        })
        .collect()
}

/// Metrics of one method over one season, or over both when `season` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: String,
    pub season: Option<Season>,
    pub summary: MetricSummary,
}

/// Metrics per method (the `config` field of each outcome) per season and overall.
pub fn method_metrics(outcomes: &[ForecastOutcome]) -> Result<Vec<MethodMetrics>> {
    let mut methods: Vec<&str> = outcomes.iter().map(|o| o.config.as_str()).collect();
    let order = |m: &str| METHODS.iter().position(|x| *x == m).unwrap_or(METHODS.len());
    methods.sort_by_key(|m| (order(m), m.to_string()));
    methods.dedup();
    let mut out = Vec::new();
    for m in methods {
        for season in Season::ALL.map(Some).into_iter().chain([None]) {
            let group: Vec<ForecastOutcome> = outcomes
                .iter()
                .filter(|o| o.config == m && season.map_or(true, |s| o.season == s))
                .cloned()
                .collect();
            if group.is_empty() {
                continue;
            }
            out.push(MethodMetrics {
                method: m.to_string(),
                season,
                summary: evaluate(&group)?,
            });
        }
    }
    Ok(out)
}

pub fn lookup<'a>(metrics: &'a [MethodMetrics], method: &str, season: Option<Season>) -> Option<&'a MetricSummary> {
    metrics
        .iter()
        .find(|m| m.method == method && m.season == season)
        .map(|m| &m.summary)
}

/// Mean forecast peak per (season, cluster, year) from SSL rows and the
/// year-over-year growth of that mean, starting from the last observed year.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub season: Season,
    pub cluster: usize,
    pub year: i32,
    pub mean_peak: f64,
    pub growth_pct: f64,
}

pub fn growth_table(preps: &[SeasonPrep], rows: &[ForecastRow]) -> Vec<GrowthRow> {
    let mut out = Vec::new();
    for p in preps {
        for c in 0..p.n_clusters() {
            let members = p.members(c);
            if members.is_empty() {
                continue;
            }
            let ids: Vec<&str> = members.iter().map(|h| h.feeder_id.as_str()).collect();
            let last: f64 = members
                .iter()
                .filter_map(|h| h.records.last().map(|r| r.peak_demand))
                .sum::<f64>()
                / members.len() as f64;
            let mut by_year: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
            for r in rows
                .iter()
                .filter(|r| r.method == "ssl" && r.season == p.season && ids.contains(&r.feeder_id.as_str()))
            {
                let e = by_year.entry(r.year).or_insert((0.0, 0));
                e.0 += r.forecast;
                e.1 += 1;
            }
            let mut prev = last;
            for (year, (s, n)) in by_year {
                let mean = s / n as f64;
                let growth = if prev.abs() > 0.0 { 100.0 * (mean - prev) / prev } else { 0.0 };
                out.push(GrowthRow {
                    season: p.season,
                    cluster: c,
                    year,
                    mean_peak: mean,
                    growth_pct: growth,
                });
                prev = mean;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// run directory

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_all<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_clusters(path: impl AsRef<Path>, preps: &[SeasonPrep]) -> Result<()> {
    let mut rows = Vec::new();
    for p in preps {
        for (i, comp) in p.clustering.compositions.iter().enumerate() {
            let n = p.clustering.normalized[i];
            rows.push(vec![
                comp.feeder_id.clone(),
                p.season.to_string(),
                p.cluster(i).to_string(),
                comp.r.to_string(),
                comp.c.to_string(),
                comp.i.to_string(),
                n[0].to_string(),
                n[1].to_string(),
            ]);
        }
    }
    write_all(
        path.as_ref(),
        &["feeder_id", "season", "cluster_id", "r", "c", "i", "r_norm", "c_norm"],
        rows,
    )
}

/// Reads the cluster ids back, keyed by (season, feeder id).
pub fn read_clusters(path: impl AsRef<Path>) -> Result<BTreeMap<(Season, String), usize>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = BTreeMap::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let bad = |m: &str| Error::Row {
            path: path.to_path_buf(),
            row: i + 1,
            message: m.to_string(),
        };
        if row.len() < 3 {
            return Err(bad("expected feeder_id, season and cluster_id"));
        }
        let season: Season = row[1].parse().map_err(|_| bad("bad season"))?;
        let c: usize = row[2].parse().map_err(|_| bad("bad cluster id"))?;
        out.insert((season, row[0].to_string()), c);
    }
    Ok(out)
}

pub fn write_k_scores(path: impl AsRef<Path>, preps: &[SeasonPrep]) -> Result<()> {
    let rows = preps.iter().flat_map(|p| {
        p.clustering.scores.iter().map(move |s| {
            vec![
                p.season.to_string(),
                s.k.to_string(),
                s.q_avg.to_string(),
                s.objective.to_string(),
                (s.k == p.n_clusters()).to_string(),
            ]
        })
    });
    write_all(path.as_ref(), &["season", "k", "q_avg", "objective", "selected"], rows)
}

pub fn write_merges(path: impl AsRef<Path>, preps: &[SeasonPrep]) -> Result<()> {
    let rows = preps
        .iter()
        .flat_map(|p| p.merges.iter().map(move |(from, to)| vec![p.season.to_string(), from.clone(), to.clone()]));
    write_all(path.as_ref(), &["season", "feeder_id", "virtual_id"], rows)
}

fn model_file(season: Season, cluster: usize, config: SeqConfig) -> String {
    let tag = match config {
        SeqConfig::Recursive => "recursive".to_string(),
        SeqConfig::Interval(f) => format!("interval{f}"),
        SeqConfig::MultiYear(t) => format!("multiyear{t}"),
    };
    format!("{season}_c{cluster}_{tag}.txt")
}

/// Saves each bundle as one file per trained configuration.
pub fn save_models(dir: impl AsRef<Path>, models: &[ClusterModels]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for m in models {
        let b = &m.bundle;
        b.recursive.save(dir.join(model_file(m.season, m.cluster, SeqConfig::Recursive)))?;
        for im in b.intervals.iter().skip(1) {
            im.save(dir.join(model_file(m.season, m.cluster, im.config())))?;
        }
        b.multiyear.save(dir.join(model_file(m.season, m.cluster, b.multiyear.config())))?;
    }
    Ok(())
}

pub fn load_models(dir: impl AsRef<Path>, preps: &[SeasonPrep], cfg: &RunConfig) -> Result<Vec<ClusterModels>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for p in preps {
        for cluster in 0..p.n_clusters() {
            let load = |c| TrainedModel::<f64>::load(dir.join(model_file(p.season, cluster, c)));
            let recursive = load(SeqConfig::Recursive)?;
            let mut intervals = vec![recursive.clone()];
            for f in 2..=cfg.horizon {
                intervals.push(load(SeqConfig::Interval(f))?);
            }
            out.push(ClusterModels {
                season: p.season,
                cluster,
                bundle: ModelBundle {
                    t_in: cfg.t_in,
                    recursive,
                    intervals,
                    multiyear: load(SeqConfig::MultiYear(cfg.horizon))?,
                },
            });
        }
    }
    Ok(out)
}

pub const FORECAST_COLUMNS: [&str; 8] = ["season", "feeder_id", "cluster", "method", "config", "year", "year_index", "forecast"];

pub fn write_forecasts(path: impl AsRef<Path>, rows: &[ForecastRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            r.season.to_string(),
            r.feeder_id.clone(),
            r.cluster.to_string(),
            r.method.clone(),
            r.config.clone(),
            r.year.to_string(),
            r.year_index.to_string(),
            r.forecast.to_string(),
        ]
    });
    write_all(path.as_ref(), &FORECAST_COLUMNS, rows)
}

pub fn read_forecasts(path: impl AsRef<Path>) -> Result<Vec<ForecastRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let idx: Vec<usize> = FORECAST_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let bad = |m: String| Error::Row {
            path: path.to_path_buf(),
            row: i + 1,
            message: m,
        };
        let get = |k: usize| row.get(idx[k]).unwrap_or("").trim().to_string();
        let num = |k: usize| get(k).parse::<f64>().map_err(|_| bad(format!("bad {} `{}`", FORECAST_COLUMNS[k], get(k))));
        let int = |k: usize| get(k).parse::<i64>().map_err(|_| bad(format!("bad {} `{}`", FORECAST_COLUMNS[k], get(k))));
        out.push(ForecastRow {
            season: get(0).parse().map_err(|_| bad(format!("bad season `{}`", get(0))))?,
            feeder_id: get(1),
            cluster: int(2)? as usize,
            method: get(3),
            config: get(4),
            year: int(5)? as i32,
            year_index: int(6)? as usize,
            forecast: num(7)?,
        });
    }
    Ok(out)
}

fn season_label(s: Option<Season>) -> String {
    s.map_or("all".to_string(), |s| s.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_metrics(path: impl AsRef<Path>, metrics: &[MethodMetrics]) -> Result<()> {
    let rows = metrics.iter().map(|m| {
        vec![
            m.method.clone(),
            season_label(m.season),
            m.summary.amape.to_string(),
            m.summary.rmse.to_string(),
            opt(m.summary.r_squared),
            m.summary.n.to_string(),
            m.summary.excluded.to_string(),
        ]
    });
    write_all(path.as_ref(), &["method", "season", "amape", "rmse", "r_squared", "n", "excluded"], rows)
}

/// Method by season comparison, one row per method and three metrics per season.
pub fn comparison_table(metrics: &[MethodMetrics]) -> String {
    let mut s = String::new();
    write!(s, "{:<10}", "method").unwrap();
    for season in Season::ALL {
        for m in ["amape", "rmse", "r2"] {
            write!(s, " {:>12}", format!("{season}_{m}")).unwrap();
        }
    }
    s.push('\n');
    for method in COMPARE_METHODS {
        write!(s, "{method:<10}").unwrap();
        for season in Season::ALL {
            match lookup(metrics, method, Some(season)) {
                Some(m) => {
                    write!(s, " {:>12.3} {:>12.3} {:>12}", m.amape, m.rmse, m.r_squared.map_or("-".to_string(), |r| format!("{r:.4}")))
                        .unwrap();
                }
                None => write!(s, " {:>12} {:>12} {:>12}", "-", "-", "-").unwrap(),
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_comparison(path: impl AsRef<Path>, metrics: &[MethodMetrics]) -> Result<()> {
    let mut header = vec!["method".to_string()];
    for season in Season::ALL {
        for m in ["amape", "rmse", "r_squared"] {
            header.push(format!("{season}_{m}"));
        }
    }
    let rows = COMPARE_METHODS.iter().map(|method| {
        let mut row = vec![method.to_string()];
        for season in Season::ALL {
            match lookup(metrics, method, Some(season)) {
                Some(m) => row.extend([m.amape.to_string(), m.rmse.to_string(), opt(m.r_squared)]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        row
    });
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_all(path.as_ref(), &h, rows)
}

/// Feature rows of every merged feeder and observed year after its first.
pub fn write_features(path: impl AsRef<Path>, preps: &[SeasonPrep], area: &AreaHistory, pca: &PcaModel<f64>) -> Result<()> {
    let mut rows = Vec::new();
    for p in preps {
        for h in &p.histories {
            let tl = FeederTimeline::from_history(h, area);
            for r in h.records.iter().skip(1) {
                let v = tl.assemble(pca, r.year)?;
                rows.push(vec![
                    p.season.to_string(),
                    h.feeder_id.clone(),
                    p.clustering.cluster_of(&h.feeder_id).map_or(String::new(), |c| c.to_string()),
                    r.year.to_string(),
                    r.peak_demand.to_string(),
                    v.base_peak.to_string(),
                    v.ep1.to_string(),
                    v.ep2.to_string(),
                    v.etaa.to_string(),
                    v.mcnlc.to_string(),
                    v.der_ev.to_string(),
                ]);
            }
        }
    }
    write_all(
        path.as_ref(),
        &["season", "feeder_id", "cluster", "year", "peak", "base_peak", "ep1", "ep2", "etaa", "mcnlc", "der_ev"],
        rows,
    )
}

pub fn write_growth(path: impl AsRef<Path>, rows: &[GrowthRow]) -> Result<()> {
    let rows = rows.iter().map(|g| {
        vec![
            g.season.to_string(),
            g.cluster.to_string(),
            g.year.to_string(),
            g.mean_peak.to_string(),
            g.growth_pct.to_string(),
        ]
    });
    write_all(path.as_ref(), &["season", "cluster", "year", "mean_peak", "growth_pct"], rows)
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub out_dir: PathBuf,
    pub preps: Vec<SeasonPrep>,
    pub pca: PcaModel<f64>,
    pub models: Vec<ClusterModels>,
    pub registry: ConfigurationRegistry,
    pub forecasts: Vec<ForecastRow>,
    pub outcomes: Option<Vec<ForecastOutcome>>,
    pub metrics: Option<Vec<MethodMetrics>>,
}

impl PipelineReport {
    pub fn amape(&self, method: &str) -> Option<f64> {
        self.metrics.as_deref().and_then(|m| lookup(m, method, None)).map(|s| s.amape)
    }
}

/// Runs every stage in memory and writes the run directory if `out_dir` is given.
pub fn run_pipeline(inputs: &Inputs, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<PipelineReport> {
    cfg.validate()?;
    with_jobs(cfg.jobs, || run_stages(inputs, cfg, out_dir))?
}

fn run_stages(inputs: &Inputs, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<PipelineReport> {
    let preps = prepare_seasons(inputs, cfg)?;
    for p in &preps {
        log::info!("{}: {} feeders in {} clusters", p.season, p.histories.len(), p.n_clusters());
    }
    let pca = fit_area_pca(inputs)?;
    let models = train_bundles(&preps, &inputs.area, &pca, cfg)?;
    log::info!("trained {} model pools", models.len());
    let registry = select_configs(&preps, &inputs.area, &pca, &models, cfg)?;
    let baselines = if cfg.baselines {
        Some(train_baselines(&preps, &inputs.area, &pca, cfg)?)
    } else {
        None
    };
    let forecasts = forecast_all(&preps, inputs, &pca, &models, &registry, baselines.as_deref(), cfg)?;
    let (outcomes, metrics) = match &inputs.truth {
        Some(t) => {
            let o = score(&forecasts, &merge_truth(t, &preps))?;
            let m = method_metrics(&o)?;
            (Some(o), Some(m))
        }
        None => (None, None),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = cfg.to_text();
        std::fs::write(dir.join("config.txt"), text).map_err(|e| Error::io(dir.join("config.txt"), e))?;
        write_clusters(dir.join("clusters.csv"), &preps)?;
        write_k_scores(dir.join("k_scores.csv"), &preps)?;
        write_merges(dir.join("merges.csv"), &preps)?;
        std::fs::write(dir.join("pca.txt"), pca.to_text()).map_err(|e| Error::io(dir.join("pca.txt"), e))?;
        save_models(dir.join("models"), &models)?;
        registry.write_csv(dir.join("registry.csv"))?;
        write_forecasts(dir.join("forecasts.csv"), &forecasts)?;
        write_growth(dir.join("growth.csv"), &growth_table(&preps, &forecasts))?;
        if let Some(m) = &metrics {
            write_metrics(dir.join("metrics.csv"), m)?;
            write_comparison(dir.join("comparison.csv"), m)?;
        }
    }
    Ok(PipelineReport {
        out_dir: out_dir.map(Path::to_path_buf).unwrap_or_default(),
        preps,
        pca,
        models,
        registry,
        forecasts,
        outcomes,
        metrics,
    })
}

/// Share of a family's feeders whose registered configuration is `kind`.
pub fn registration_share(registry: &ConfigurationRegistry, ids: &[&str], kind: ConfigKind) -> f64 {
    let mut hit = 0usize;
    let mut n = 0usize;
    for ((_, id), e) in &registry.entries {
        let member = id.split(crate::features::VIRTUAL_ID_SEPARATOR).any(|m| ids.contains(&m));
        if member {
            n += 1;
            if e.selected == kind {
                hit += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn small() -> (Inputs, RunConfig) {
        let spec = SyntheticSpec {
            n_feeders: 16,
            n_years: 12,
            ..SyntheticSpec::default_area(5)
        };
        let d = generate(&spec).unwrap();
        let inputs = Inputs {
            histories: d.histories,
            area: d.area,
            transfers: d.transfers,
            scenario: d.scenario,
            truth: Some(d.truth),
        };
        let cfg = RunConfig {
            max_epochs: 5,
            k_max: 3,
            jobs: 2,
            ..RunConfig::default()
        };
        (inputs, cfg)
    }

    #[test]
    fn small_run_produces_every_method() {
        let (inputs, cfg) = small();
        let r = run_pipeline(&inputs, &cfg, None).unwrap();
        let m = r.metrics.as_ref().unwrap();
        for method in METHODS {
            assert!(lookup(m, method, None).is_some(), "{method}");
        }
        let n_feeders: usize = r.preps.iter().map(|p| p.histories.len()).sum();
        assert_eq!(r.forecasts.len(), n_feeders * cfg.horizon * METHODS.len());
        assert_eq!(r.registry.entries.len(), n_feeders);
        assert!(comparison_table(m).lines().count() == 1 + COMPARE_METHODS.len());
    }

    #[test]
    fn perfect_forecasts_score_perfectly() {
        let (inputs, _) = small();
        let truth = inputs.truth.unwrap();
        let rows: Vec<ForecastRow> = truth
            .iter()
            .map(|t| ForecastRow {
                season: t.season,
                feeder_id: t.feeder_id.clone(),
                cluster: 0,
                method: "ssl".into(),
                config: "interval".into(),
                year: t.year,
                year_index: 1,
                forecast: t.true_peak,
            })
            .collect();
        let o = score(&rows, &merge_truth(&truth, &[])).unwrap();
        let m = method_metrics(&o).unwrap();
        let all = lookup(&m, "ssl", None).unwrap();
        assert_eq!(all.amape, 0.0);
        assert_eq!(all.r_squared, Some(1.0));
    }

    #[test]
    fn forecast_csv_round_trip() {
        let rows = vec![ForecastRow {
            season: Season::Winter,
            feeder_id: "A+B".into(),
            cluster: 2,
            method: "ar2".into(),
            config: "ar2".into(),
            year: 2021,
            year_index: 1,
            forecast: 412.125,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_forecasts(&p, &rows).unwrap();
        assert_eq!(read_forecasts(&p).unwrap(), rows);
    }
}
