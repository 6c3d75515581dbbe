//! Sequence datasets for the three learning configurations and their scaling.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{AreaHistory, FeederHistory};
use crate::error::{Error, Result};
use crate::features::{FeederTimeline, PcaModel, YearlyFeatureVector};
use crate::scalar::Scalar;

pub const DEFAULT_T_IN: usize = 3;
pub const DEFAULT_HORIZON: usize = 3;

/// Which target layout a dataset (and the model trained on it) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeqConfig {
    /// Next year only; multi-year forecasts iterate.
    Recursive,
    /// Directly the `f`-th year ahead.
    Interval(usize),
    /// All `t` years at once.
    MultiYear(usize),
}

/// Configuration family without its horizon parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfigKind {
    Recursive,
    Interval,
    MultiYear,
}

impl ConfigKind {
    pub const ALL: [ConfigKind; 3] = [ConfigKind::Recursive, ConfigKind::Interval, ConfigKind::MultiYear];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigKind::Recursive => "recursive",
            ConfigKind::Interval => "interval",
            ConfigKind::MultiYear => "multiyear",
        }
    }
}

impl fmt::Display for ConfigKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "recursive" => Ok(ConfigKind::Recursive),
            "interval" => Ok(ConfigKind::Interval),
            "multiyear" | "multi-year" => Ok(ConfigKind::MultiYear),
            other => Err(Error::Parse(format!("unknown configuration `{other}`"))),
        }
    }
}

impl SeqConfig {
    pub fn kind(self) -> ConfigKind {
        match self {
            SeqConfig::Recursive => ConfigKind::Recursive,
            SeqConfig::Interval(_) => ConfigKind::Interval,
            SeqConfig::MultiYear(_) => ConfigKind::MultiYear,
        }
    }

    /// Number of network outputs.
    pub fn n_outputs(self) -> usize {
        match self {
            SeqConfig::MultiYear(t) => t,
            _ => 1,
        }
    }

    /// Offsets of the target years from the last input year.
    pub fn target_offsets(self) -> Vec<i32> {
        match self {
            SeqConfig::Recursive => vec![0],
            SeqConfig::Interval(f) => vec![f as i32 - 1],
            SeqConfig::MultiYear(t) => (0..t as i32).collect(),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            SeqConfig::Interval(0) | SeqConfig::MultiYear(0) => {
                Err(Error::InvalidArgument(format!("{self}: horizon must be at least 1")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SeqConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqConfig::Recursive => f.write_str("recursive"),
            SeqConfig::Interval(k) => write!(f, "interval:{k}"),
            SeqConfig::MultiYear(t) => write!(f, "multiyear:{t}"),
        }
    }
}

impl FromStr for SeqConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = || -> Result<usize> {
            arg.ok_or_else(|| Error::Parse(format!("`{s}` needs a horizon, e.g. {name}:3")))?
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad horizon in `{s}`")))
        };
        let cfg = match name.parse::<ConfigKind>()? {
            ConfigKind::Recursive => SeqConfig::Recursive,
            ConfigKind::Interval => SeqConfig::Interval(num()?),
            ConfigKind::MultiYear => SeqConfig::MultiYear(num()?),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One training sample: `t_in` consecutive feature rows and the actual
/// peaks the configuration is asked to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub feeder_id: String,
    pub config: SeqConfig,
    pub input_years: Vec<i32>,
    pub steps: Vec<YearlyFeatureVector>,
    pub targets: Vec<(i32, f64)>,
}

impl SequenceRecord {
    pub fn last_input_year(&self) -> i32 {
        *self.input_years.last().expect("record has input years")
    }
}

/// Feature rows for a window whose last input year is `last_input_year`.
///
/// Works on any timeline, so the same code builds training records and
/// inference inputs (where later years carry scenario drivers).
pub fn input_steps(
    timeline: &FeederTimeline,
    pca: &PcaModel<f64>,
    config: SeqConfig,
    last_input_year: i32,
    t_in: usize,
) -> Result<Vec<YearlyFeatureVector>> {
    if t_in == 0 {
        return Err(Error::InvalidArgument("t_in must be at least 1".into()));
    }
    let first = last_input_year - t_in as i32 + 1;
    let mut steps = (first..last_input_year)
        .map(|y| timeline.assemble(pca, y))
        .collect::<Result<Vec<_>>>()?;
    steps.push(match config {
        SeqConfig::Interval(f) => timeline.sum_interval(pca, last_input_year - 1, last_input_year + f as i32 - 1)?,
        _ => timeline.assemble(pca, last_input_year)?,
    });
    Ok(steps)
}

/// All records of one configuration that the history supports. Histories
/// too short for any window yield an empty list.
pub fn build_records(
    feeder: &FeederHistory,
    area: &AreaHistory,
    pca: &PcaModel<f64>,
    config: SeqConfig,
    t_in: usize,
) -> Result<Vec<SequenceRecord>> {
    config.validate()?;
    if t_in == 0 {
        return Err(Error::InvalidArgument("t_in must be at least 1".into()));
    }
    let (Some(first), Some(last)) = (feeder.first_year(), feeder.last_year()) else {
        return Ok(Vec::new());
    };
    let timeline = FeederTimeline::from_history(feeder, area);
    let offsets = config.target_offsets();
    let max_off = *offsets.iter().max().unwrap();
    let first_l = first + t_in as i32;
    let last_l = last - max_off;
    (first_l..=last_l)
        .map(|l| {
            Ok(SequenceRecord {
                feeder_id: feeder.feeder_id.clone(),
                config,
                input_years: (l - t_in as i32 + 1..=l).collect(),
                steps: input_steps(&timeline, pca, config, l, t_in)?,
                targets: offsets
                    .iter()
                    .map(|o| (l + o, timeline.peak(l + o).expect("target year inside history")))
                    .collect(),
            })
        })
        .collect()
}

pub fn build_recursive(feeder: &FeederHistory, area: &AreaHistory, pca: &PcaModel<f64>, t_in: usize) -> Result<Vec<SequenceRecord>> {
    build_records(feeder, area, pca, SeqConfig::Recursive, t_in)
}

pub fn build_interval(
    feeder: &FeederHistory,
    area: &AreaHistory,
    pca: &PcaModel<f64>,
    f: usize,
    t_in: usize,
) -> Result<Vec<SequenceRecord>> {
    build_records(feeder, area, pca, SeqConfig::Interval(f), t_in)
}

pub fn build_multiyear(
    feeder: &FeederHistory,
    area: &AreaHistory,
    pca: &PcaModel<f64>,
    t: usize,
    t_in: usize,
) -> Result<Vec<SequenceRecord>> {
    build_records(feeder, area, pca, SeqConfig::MultiYear(t), t_in)
}

/// Closed-form record count for a history of `n_years`.
pub fn window_count(n_years: usize, config: SeqConfig, t_in: usize) -> usize {
    let span = t_in + config.target_offsets().into_iter().max().unwrap_or(0) as usize;
    n_years.saturating_sub(span)
}

/// A record in network units: `inputs[step][feature]` and scaled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSample<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
}

pub const TARGET_LOW: f64 = 0.1;
pub const TARGET_HIGH: f64 = 0.9;

/// Min-max statistics of one training pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStats {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
}

impl ScalingStats {
    pub fn n_features(&self) -> usize {
        self.feature_min.len()
    }

    pub fn include_der_ev(&self) -> bool {
        self.n_features() == YearlyFeatureVector::n_features(true)
    }

    pub fn scale_feature(&self, j: usize, x: f64) -> f64 {
        let span = self.feature_max[j] - self.feature_min[j];
        if span > 0.0 {
            (x - self.feature_min[j]) / span
        } else {
            0.0
        }
    }

    fn target_span(&self) -> f64 {
        let span = self.target_max - self.target_min;
        if span > 0.0 {
            span
        } else {
            self.target_min.abs().max(1.0)
        }
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        TARGET_LOW + (TARGET_HIGH - TARGET_LOW) * (y - self.target_min) / self.target_span()
    }

    pub fn invert_target(&self, s: f64) -> f64 {
        self.target_min + (s - TARGET_LOW) / (TARGET_HIGH - TARGET_LOW) * self.target_span()
    }

    pub fn scale_steps<T: Scalar>(&self, steps: &[YearlyFeatureVector]) -> Vec<Vec<T>> {
        let der = self.include_der_ev();
        steps
            .iter()
            .map(|s| {
                s.to_vec(der)
                    .into_iter()
                    .enumerate()
                    .map(|(j, x)| T::lit(self.scale_feature(j, x)))
                    .collect()
            })
            .collect()
    }

    pub fn apply<T: Scalar>(&self, record: &SequenceRecord) -> ScaledSample<T> {
        ScaledSample {
            inputs: self.scale_steps(&record.steps),
            targets: record.targets.iter().map(|(_, y)| T::lit(self.scale_target(*y))).collect(),
        }
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        use std::fmt::Write as _;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(out, "scaling.feature_min={}", join(&self.feature_min)).unwrap();
        writeln!(out, "scaling.feature_max={}", join(&self.feature_max)).unwrap();
        writeln!(out, "scaling.target_min={}", self.target_min).unwrap();
        writeln!(out, "scaling.target_max={}", self.target_max).unwrap();
    }

    pub(crate) fn read_text(get: &dyn Fn(&str) -> Result<String>) -> Result<Self> {
        let vec = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::Parse(format!("{k}: bad number `{x}`"))))
                .collect()
        };
        let num = |k: &str| -> Result<f64> { get(k)?.trim().parse().map_err(|_| Error::Parse(format!("{k}: bad number"))) };
        Ok(Self {
            feature_min: vec("scaling.feature_min")?,
            feature_max: vec("scaling.feature_max")?,
            target_min: num("scaling.target_min")?,
            target_max: num("scaling.target_max")?,
        })
    }
}

/// Fits per-feature and target ranges over every step and target of `records`.
pub fn fit_scaling(records: &[SequenceRecord], include_der_ev: bool) -> Result<ScalingStats> {
    if records.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "scaling needs at least 2 records, have {}",
            records.len()
        )));
    }
    let d = YearlyFeatureVector::n_features(include_der_ev);
    let mut fmin = vec![f64::INFINITY; d];
    let mut fmax = vec![f64::NEG_INFINITY; d];
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in records {
        for s in &r.steps {
            for (j, x) in s.to_vec(include_der_ev).into_iter().enumerate() {
                fmin[j] = fmin[j].min(x);
                fmax[j] = fmax[j].max(x);
            }
        }
        for &(_, y) in &r.targets {
            tmin = tmin.min(y);
            tmax = tmax.max(y);
        }
    }
    for j in 0..d {
        if fmax[j] <= fmin[j] {
            warn!("feature {j} is constant ({}) over the pool; it will scale to 0", fmin[j]);
        }
    }
    if tmax <= tmin {
        warn!("target is constant ({tmin}) over the pool");
    }
    Ok(ScalingStats {
        feature_min: fmin,
        feature_max: fmax,
        target_min: tmin,
        target_max: tmax,
    })
}

pub fn apply_scaling<T: Scalar>(stats: &ScalingStats, records: &[SequenceRecord]) -> Vec<ScaledSample<T>> {
    records.iter().map(|r| stats.apply(r)).collect()
}

/// Maps scaled network outputs back to amperes.
pub fn invert_scaling<T: Scalar>(stats: &ScalingStats, outputs: &[T]) -> Vec<f64> {
    outputs.iter().map(|s| stats.invert_target(s.as_f64())).collect()
}

/// Audit dump, one row per step, targets repeated as `year:amps` pairs.
pub fn write_records_csv(path: impl AsRef<Path>, records: &[SequenceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "record", "feeder_id", "config", "year", "base_peak_a", "ep1", "ep2", "etaa_c", "mcnlc_a", "der_ev_a", "targets",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for (i, r) in records.iter().enumerate() {
        let targets = r.targets.iter().map(|(y, v)| format!("{y}:{v}")).collect::<Vec<_>>().join(";");
        for (year, s) in r.input_years.iter().zip(&r.steps) {
            w.write_record([
                i.to_string(),
                r.feeder_id.clone(),
                r.config.to_string(),
                year.to_string(),
                s.base_peak.to_string(),
                s.ep1.to_string(),
                s.ep2.to_string(),
                s.etaa.to_string(),
                s.mcnlc.to_string(),
                s.der_ev.to_string(),
                targets.clone(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::fixture;

    fn fx(config: SeqConfig) -> Vec<SequenceRecord> {
        build_records(&fixture::feeder(), &fixture::area(), &fixture::pca(), config, DEFAULT_T_IN).unwrap()
    }

    fn by_last(rs: &[SequenceRecord], l: i32) -> &SequenceRecord {
        rs.iter().find(|r| r.last_input_year() == l).unwrap()
    }

    #[test]
    fn recursive_fixture_record() {
        let rs = fx(SeqConfig::Recursive);
        let r = by_last(&rs, 2011);
        assert_eq!(r.input_years, vec![2009, 2010, 2011]);
        assert_eq!(r.targets, vec![(2011, 550.0)]);
        assert_eq!(r.steps[0].base_peak, 433.0);
        assert_eq!(r.steps[2].mcnlc, 0.0);
    }

    #[test]
    fn interval_fixture_records() {
        let rs = fx(SeqConfig::Interval(2));
        let r = by_last(&rs, 2011);
        assert_eq!(r.targets, vec![(2012, 521.0)]);
        assert_eq!(r.steps[2].mcnlc, -21.0);
        assert_eq!(r.steps[2].etaa, -2.2);
        assert_eq!(r.steps[2].base_peak, 554.0);
        let rs = fx(SeqConfig::Interval(3));
        let r = by_last(&rs, 2011);
        assert_eq!(r.targets, vec![(2013, 537.0)]);
        assert_eq!(r.steps[2].etaa, 1.8);
    }

    #[test]
    fn multiyear_fixture_records() {
        let rs = fx(SeqConfig::MultiYear(3));
        assert_eq!(by_last(&rs, 2011).targets, vec![(2011, 550.0), (2012, 521.0), (2013, 537.0)]);
        assert_eq!(by_last(&rs, 2012).targets, vec![(2012, 521.0), (2013, 537.0), (2014, 549.0)]);
    }

    #[test]
    fn degenerate_horizons_match_recursive() {
        let rec = fx(SeqConfig::Recursive);
        let strip = |rs: Vec<SequenceRecord>| -> Vec<_> {
            rs.into_iter().map(|r| (r.input_years, r.steps, r.targets)).collect()
        };
        let base = strip(rec);
        assert_eq!(strip(fx(SeqConfig::Interval(1))), base);
        assert_eq!(strip(fx(SeqConfig::MultiYear(1))), base);
    }

    #[test]
    fn short_history_yields_no_records() {
        let f = fixture::feeder().truncated(2010);
        assert_eq!(f.len(), 3);
        let rs = build_recursive(&f, &fixture::area(), &fixture::pca(), 3).unwrap();
        assert!(rs.is_empty());
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(18, SeqConfig::Recursive, 3), 15);
        assert_eq!(window_count(18, SeqConfig::Interval(3), 3), 13);
        assert_eq!(window_count(18, SeqConfig::MultiYear(3), 3), 13);
        assert_eq!(window_count(3, SeqConfig::Recursive, 3), 0);
        assert_eq!(fx(SeqConfig::Recursive).len(), window_count(7, SeqConfig::Recursive, 3));
    }

    #[test]
    fn config_text_round_trip() {
        for c in [SeqConfig::Recursive, SeqConfig::Interval(2), SeqConfig::MultiYear(3)] {
            assert_eq!(c.to_string().parse::<SeqConfig>().unwrap(), c);
        }
        assert!("interval".parse::<SeqConfig>().is_err());
        assert!("interval:0".parse::<SeqConfig>().is_err());
        assert!("lstm".parse::<SeqConfig>().is_err());
    }

    fn rec(targets: &[f64], feat: f64) -> SequenceRecord {
        let step = YearlyFeatureVector {
            base_peak: 400.0 + feat,
            ep1: feat,
            ep2: 1.0,
            etaa: -feat,
            mcnlc: 2.0 * feat,
            der_ev: 0.0,
        };
        SequenceRecord {
            feeder_id: "F".into(),
            config: SeqConfig::Recursive,
            input_years: vec![1, 2, 3],
            steps: vec![step; 3],
            targets: targets.iter().enumerate().map(|(i, &y)| (i as i32, y)).collect(),
        }
    }

    #[test]
    fn target_endpoints_map_to_band() {
        let rs = [rec(&[433.0], 0.0), rec(&[554.0], 1.0)];
        let st = fit_scaling(&rs, false).unwrap();
        let s: Vec<ScaledSample<f64>> = apply_scaling(&st, &rs);
        assert!((s[0].targets[0] - 0.1).abs() < 1e-15);
        assert!((s[1].targets[0] - 0.9).abs() < 1e-15);
        // constant ep2 column scales to 0
        assert!(s.iter().all(|x| x.inputs.iter().all(|row| row[2] == 0.0)));
        assert_eq!(s[1].inputs[0][1], 1.0);
    }

    #[test]
    fn scaling_round_trip() {
        let rs = [rec(&[433.0], 0.0), rec(&[554.0], 1.0), rec(&[480.5], 0.3)];
        let st = fit_scaling(&rs, false).unwrap();
        for y in [433.0, 480.5, 554.0, 12.25, 900.0] {
            assert!((st.invert_target(st.scale_target(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_target_still_round_trips() {
        let rs = [rec(&[500.0], 0.0), rec(&[500.0], 1.0)];
        let st = fit_scaling(&rs, false).unwrap();
        assert_eq!(st.scale_target(500.0), 0.1);
        assert!((st.invert_target(st.scale_target(510.0)) - 510.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_needs_two_records() {
        assert!(fit_scaling(&[rec(&[1.0], 0.0)], false).is_err());
    }

    #[test]
    fn dump_writes_one_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_records_csv(&p, &fx(SeqConfig::MultiYear(3))).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
        assert!(text.contains("2011:550;2012:521;2013:537"));
    }
}
