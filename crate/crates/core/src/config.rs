//! Flat `key=value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nets::{HeadMode, Hyperparams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub t_in: usize,
    pub horizon: usize,
    /// Backtest window used for configuration selection.
    pub window: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans_restarts: usize,
    /// Most recent years averaged for load composition; 0 uses all.
    pub composition_years: usize,
    pub include_der_ev: bool,
    pub baselines: bool,
    pub head_mode: HeadMode,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub patience: usize,
    pub validation_fraction: f64,
    pub hidden_size: usize,
    pub fnn_learning_rate: f64,
    pub feeders: PathBuf,
    pub area: PathBuf,
    pub transfers: Option<PathBuf>,
    pub scenario: PathBuf,
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub synthetic_n_feeders: usize,
    pub synthetic_n_years: usize,
    pub synthetic_first_year: i32,
    pub synthetic_families: bool,
    pub synthetic_transfer_pairs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            seed: 42,
            jobs: 0,
            t_in: 3,
            horizon: 3,
            window: 3,
            k_min: 2,
            k_max: 8,
            kmeans_restarts: 10,
            composition_years: 3,
            include_der_ev: false,
            baselines: true,
            head_mode: hp.head_mode,
            learning_rate: hp.learning_rate,
            max_epochs: hp.max_epochs,
            batch_size: hp.batch_size,
            dropout: hp.dropout_rate,
            patience: hp.early_stop_patience,
            validation_fraction: hp.validation_fraction,
            hidden_size: hp.hidden_size,
            fnn_learning_rate: hp.learning_rate,
            feeders: "feeders.csv".into(),
            area: "area.csv".into(),
            transfers: Some("transfers.csv".into()),
            scenario: "scenario.csv".into(),
            truth: Some("truth.csv".into()),
            out_dir: "run".into(),
            synthetic_n_feeders: 72,
            synthetic_n_years: 20,
            synthetic_first_year: 2000,
            synthetic_families: true,
            synthetic_transfer_pairs: 2,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("config: bad value `{v}` for `{key}`")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Hyperparameters for the sequence models, with `seed` substituted.
    pub fn hyperparams(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            dropout_rate: self.dropout,
            early_stop_patience: self.patience,
            validation_fraction: self.validation_fraction,
            hidden_size: self.hidden_size,
            head_mode: self.head_mode,
            seed,
        }
    }

    pub fn fnn_hyperparams(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            learning_rate: self.fnn_learning_rate,
            dropout_rate: 0.0,
            ..self.hyperparams(seed)
        }
    }

    /// Parses `text`, starting from the defaults. Unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "seed" => c.seed = parse(k, v)?,
                "jobs" => c.jobs = parse(k, v)?,
                "t_in" => c.t_in = parse(k, v)?,
                "horizon" => c.horizon = parse(k, v)?,
                "window" => c.window = parse(k, v)?,
                "k_min" => c.k_min = parse(k, v)?,
                "k_max" => c.k_max = parse(k, v)?,
                "kmeans_restarts" => c.kmeans_restarts = parse(k, v)?,
                "composition_years" => c.composition_years = parse(k, v)?,
                "include_der_ev" => c.include_der_ev = parse(k, v)?,
                "baselines" => c.baselines = parse(k, v)?,
                "head_mode" => c.head_mode = v.parse()?,
                "learning_rate" => c.learning_rate = parse(k, v)?,
                "max_epochs" => c.max_epochs = parse(k, v)?,
                "batch_size" => c.batch_size = parse(k, v)?,
                "dropout" => c.dropout = parse(k, v)?,
                "patience" => c.patience = parse(k, v)?,
                "validation_fraction" => c.validation_fraction = parse(k, v)?,
                "hidden_size" => c.hidden_size = parse(k, v)?,
                "fnn_learning_rate" => c.fnn_learning_rate = parse(k, v)?,
                "feeders" => c.feeders = v.into(),
                "area" => c.area = v.into(),
                "transfers" => c.transfers = opt_path(v),
                "scenario" => c.scenario = v.into(),
                "truth" => c.truth = opt_path(v),
                "out_dir" => c.out_dir = v.into(),
                "synthetic.n_feeders" => c.synthetic_n_feeders = parse(k, v)?,
                "synthetic.n_years" => c.synthetic_n_years = parse(k, v)?,
                "synthetic.first_year" => c.synthetic_first_year = parse(k, v)?,
                "synthetic.families" => c.synthetic_families = parse(k, v)?,
                "synthetic.transfer_pairs" => c.synthetic_transfer_pairs = parse(k, v)?,
                other => return Err(Error::Parse(format!("config: unknown key `{other}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("config: {m}")));
        if self.t_in == 0 || self.horizon == 0 || self.window == 0 {
            return bad("t_in, horizon and window must be positive".into());
        }
        if self.t_in > self.window {
            return bad(format!("t_in {} exceeds window {}", self.t_in, self.window));
        }
        if self.window > self.horizon {
            return bad(format!("window {} exceeds horizon {}", self.window, self.horizon));
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return bad(format!("bad k range {}..={}", self.k_min, self.k_max));
        }
        self.hyperparams(0).validate()
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let p = |p: &Path| p.display().to_string();
        let o = |p: &Option<PathBuf>| p.as_deref().map_or("none".to_string(), |x| x.display().to_string());
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("seed", self.seed.to_string());
        kv.insert("jobs", self.jobs.to_string());
        kv.insert("t_in", self.t_in.to_string());
        kv.insert("horizon", self.horizon.to_string());
        kv.insert("window", self.window.to_string());
        kv.insert("k_min", self.k_min.to_string());
        kv.insert("k_max", self.k_max.to_string());
        kv.insert("kmeans_restarts", self.kmeans_restarts.to_string());
        kv.insert("composition_years", self.composition_years.to_string());
        kv.insert("include_der_ev", self.include_der_ev.to_string());
        kv.insert("baselines", self.baselines.to_string());
        kv.insert("head_mode", self.head_mode.to_string());
        kv.insert("learning_rate", self.learning_rate.to_string());
        kv.insert("max_epochs", self.max_epochs.to_string());
        kv.insert("batch_size", self.batch_size.to_string());
        kv.insert("dropout", self.dropout.to_string());
        kv.insert("patience", self.patience.to_string());
        kv.insert("validation_fraction", self.validation_fraction.to_string());
        kv.insert("hidden_size", self.hidden_size.to_string());
        kv.insert("fnn_learning_rate", self.fnn_learning_rate.to_string());
        kv.insert("feeders", p(&self.feeders));
        kv.insert("area", p(&self.area));
        kv.insert("transfers", o(&self.transfers));
        kv.insert("scenario", p(&self.scenario));
        kv.insert("truth", o(&self.truth));
        kv.insert("out_dir", p(&self.out_dir));
        kv.insert("synthetic.n_feeders", self.synthetic_n_feeders.to_string());
        kv.insert("synthetic.n_years", self.synthetic_n_years.to_string());
        kv.insert("synthetic.first_year", self.synthetic_first_year.to_string());
        kv.insert("synthetic.families", self.synthetic_families.to_string());
        kv.insert("synthetic.transfer_pairs", self.synthetic_transfer_pairs.to_string());
        let mut s = String::new();
        for (k, v) in kv {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Resolves relative data paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.feeders);
        fix(&mut self.area);
        fix(&mut self.scenario);
        fix(&mut self.out_dir);
        if let Some(p) = self.transfers.as_mut() {
            fix(p);
        }
        if let Some(p) = self.truth.as_mut() {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn overrides_and_errors() {
        let c = RunConfig::from_text("# comment\nseed = 7\nhorizon=5\nwindow=3\ntruth=none\n").unwrap();
        assert_eq!((c.seed, c.horizon, c.truth), (7, 5, None));
        assert!(RunConfig::from_text("colour=blue").is_err());
        assert!(RunConfig::from_text("seed=x").is_err());
        assert!(RunConfig::from_text("t_in=4").is_err());
        assert!(RunConfig::from_text("dropout=1.0").is_err());
    }
}
