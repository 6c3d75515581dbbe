//! Per-feeder configuration selection by sliding-window backtests over the
//! training years.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::Season;
use crate::error::{Error, Result};
use crate::features::{FeederTimeline, PcaModel};
use crate::nets::{ModelBundle, YearForecasts};
use crate::scalar::Scalar;
use crate::seqdata::ConfigKind;

pub const TIE_TOLERANCE: f64 = 1e-9;

/// Order used to break ties between equal indices.
pub const PRIORITY: [ConfigKind; 3] = [ConfigKind::Interval, ConfigKind::MultiYear, ConfigKind::Recursive];

/// Performance indices of the three configurations for one feeder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceIndex {
    pub recursive: f64,
    pub interval: f64,
    pub multiyear: f64,
    pub windows: usize,
}

impl PerformanceIndex {
    pub fn get(&self, kind: ConfigKind) -> f64 {
        match kind {
            ConfigKind::Recursive => self.recursive,
            ConfigKind::Interval => self.interval,
            ConfigKind::MultiYear => self.multiyear,
        }
    }
}

/// Number of backtest windows of width `window` in `n_years` training years.
pub fn window_count(n_years: usize, window: usize) -> usize {
    (n_years + 1).saturating_sub(2 * window)
}

/// Backtests each configuration on windows of `window` consecutive years.
///
/// Window `j` forecasts the years at positions `window + j .. 2 * window + j`
/// of the history from the peaks before it and the recorded drivers inside
/// it. The index is the mean, over windows, of the summed absolute errors.
pub fn performance_index<T: Scalar>(
    timeline: &FeederTimeline,
    first_year: i32,
    n_years: usize,
    bundle: &ModelBundle<T>,
    pca: &PcaModel<f64>,
    window: usize,
) -> Result<PerformanceIndex> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1 year".into()));
    }
    if bundle.t_in > window {
        return Err(Error::InvalidArgument(format!(
            "input length {} exceeds window {window}: first window lacks context",
            bundle.t_in
        )));
    }
    let windows = window_count(n_years, window);
    if windows == 0 {
        return Err(Error::InsufficientHistory(format!(
            "{}: {n_years} years cannot hold a {window}-year backtest window",
            timeline.feeder_id
        )));
    }
    let mut sums = [0.0; 3];
    for j in 0..windows {
        let last_observed = first_year + (window + j) as i32 - 1;
        for (k, kind) in ConfigKind::ALL.into_iter().enumerate() {
            let f = bundle.forecast(kind, timeline, pca, last_observed, window)?;
            for (year, y) in f {
                let actual = timeline
                    .peak(year)
                    .ok_or_else(|| Error::MissingYear { year, what: format!("peak of {}", timeline.feeder_id) })?;
                sums[k] += (actual - y).abs();
            }
        }
    }
    let w = windows as f64;
    Ok(PerformanceIndex {
        recursive: sums[0] / w,
        interval: sums[1] / w,
        multiyear: sums[2] / w,
        windows,
    })
}

/// Smallest index wins; near-ties go to the earlier entry of [`PRIORITY`].
pub fn register_best(p: &PerformanceIndex) -> ConfigKind {
    let min = ConfigKind::ALL.iter().map(|k| p.get(*k)).fold(f64::INFINITY, f64::min);
    PRIORITY
        .into_iter()
        .find(|k| p.get(*k) <= min + TIE_TOLERANCE)
        .unwrap_or(ConfigKind::Interval)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub selected: ConfigKind,
    pub index: PerformanceIndex,
}

/// Selected configuration per (season, feeder).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigurationRegistry {
    pub entries: BTreeMap<(Season, String), RegistryEntry>,
}

pub const REGISTRY_COLUMNS: [&str; 7] = [
    "feeder_id",
    "season",
    "selected_config",
    "p_recursive",
    "p_interval",
    "p_multiyear",
    "windows",
];

impl ConfigurationRegistry {
    pub fn register(&mut self, season: Season, feeder_id: &str, index: PerformanceIndex) -> ConfigKind {
        let selected = register_best(&index);
        self.entries
            .insert((season, feeder_id.to_string()), RegistryEntry { selected, index });
        selected
    }

    pub fn get(&self, season: Season, feeder_id: &str) -> Result<&RegistryEntry> {
        self.entries
            .get(&(season, feeder_id.to_string()))
            .ok_or_else(|| Error::UnknownFeeder(format!("{feeder_id} ({season}) is not registered")))
    }

    /// Share of feeders per selected configuration, in [`ConfigKind::ALL`] order.
    pub fn shares(&self, season: Option<Season>) -> [f64; 3] {
        let sel: Vec<ConfigKind> = self
            .entries
            .iter()
            .filter(|((s, _), _)| season.map_or(true, |x| x == *s))
            .map(|(_, e)| e.selected)
            .collect();
        let n = sel.len().max(1) as f64;
        ConfigKind::ALL.map(|k| sel.iter().filter(|s| **s == k).count() as f64 / n)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(REGISTRY_COLUMNS).map_err(|e| Error::csv(path, e))?;
        for ((season, id), e) in &self.entries {
            w.write_record([
                id.clone(),
                season.to_string(),
                e.selected.to_string(),
                e.index.recursive.to_string(),
                e.index.interval.to_string(),
                e.index.multiyear.to_string(),
                e.index.windows.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut reg = Self::default();
        for (i, row) in r.records().enumerate() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            let bad = |m: String| Error::Row {
                path: path.to_path_buf(),
                row: i + 1,
                message: m,
            };
            if row.len() != REGISTRY_COLUMNS.len() {
                return Err(bad(format!("expected {} fields", REGISTRY_COLUMNS.len())));
            }
            let num = |k: usize| row[k].parse::<f64>().map_err(|_| bad(format!("bad number `{}`", &row[k])));
            let season: Season = row[1].parse().map_err(|_| bad(format!("bad season `{}`", &row[1])))?;
            let index = PerformanceIndex {
                recursive: num(3)?,
                interval: num(4)?,
                multiyear: num(5)?,
                windows: row[6].parse().map_err(|_| bad("bad window count".into()))?,
            };
            let selected: ConfigKind = row[2].parse().map_err(|_| bad(format!("bad config `{}`", &row[2])))?;
            reg.entries
                .insert((season, row[0].to_string()), RegistryEntry { selected, index });
        }
        Ok(reg)
    }
}

/// One feeder to forecast: its timeline (with scenario drivers) and the
/// bundle of its cluster.
pub struct FeederJob<'a, T> {
    pub timeline: &'a FeederTimeline,
    pub bundle: &'a ModelBundle<T>,
    pub last_observed: i32,
}

/// Forecasts each feeder with its registered configuration only.
pub fn forecast_selected<T: Scalar>(
    registry: &ConfigurationRegistry,
    jobs: &[FeederJob<'_, T>],
    pca: &PcaModel<f64>,
    horizon: usize,
) -> Result<Vec<(String, ConfigKind, YearForecasts)>> {
    jobs.iter()
        .map(|j| {
            let id = &j.timeline.feeder_id;
            let kind = registry.get(j.timeline.season, id)?.selected;
            let f = j.bundle.forecast(kind, j.timeline, pca, j.last_observed, horizon)?;
            Ok((id.clone(), kind, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(r: f64, i: f64, m: f64) -> PerformanceIndex {
        PerformanceIndex {
            recursive: r,
            interval: i,
            multiyear: m,
            windows: 1,
        }
    }

    #[test]
    fn argmin_and_ties() {
        assert_eq!(register_best(&p(5.0, 3.2, 4.1)), ConfigKind::Interval);
        assert_eq!(register_best(&p(5.0, 3.0, 3.0)), ConfigKind::Interval);
        assert_eq!(register_best(&p(1.0, 1.0, 1.0)), ConfigKind::Interval);
        assert_eq!(register_best(&p(2.0, 3.0, 2.0 + 1e-12)), ConfigKind::MultiYear);
        assert_eq!(register_best(&p(1.0, 3.0, 2.0)), ConfigKind::Recursive);
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(20, 3), 15);
        assert_eq!(window_count(6, 3), 1);
        assert_eq!(window_count(5, 3), 0);
    }

    #[test]
    fn registry_csv_round_trip() {
        let mut reg = ConfigurationRegistry::default();
        reg.register(Season::Summer, "F1", p(1.0, 2.0, 3.0));
        reg.register(Season::Winter, "F1", p(3.0, 2.0, 2.5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.csv");
        reg.write_csv(&path).unwrap();
        assert_eq!(ConfigurationRegistry::read_csv(&path).unwrap(), reg);
        assert!(reg.get(Season::Summer, "F2").is_err());
        assert_eq!(reg.shares(Some(Season::Summer)), [1.0, 0.0, 0.0]);
    }
}
