//! Forecast accuracy: AMAPE, RMSE and R², overall and per group.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::domain::Season;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Actuals below this many amperes are left out of AMAPE.
pub const AMAPE_MIN_ACTUAL: f64 = 1.0;

fn check_pairs<T>(actuals: &[T], forecasts: &[T]) -> Result<()> {
    if actuals.len() != forecasts.len() {
        return Err(Error::Shape(format!(
            "{} actuals vs {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::InvalidArgument("no forecast pairs".into()));
    }
    Ok(())
}

/// Mean absolute percentage error in percent and the number of pairs
/// skipped for a near-zero actual.
pub fn amape<T: Scalar>(actuals: &[T], forecasts: &[T]) -> Result<(T, usize)> {
    check_pairs(actuals, forecasts)?;
    let floor = T::lit(AMAPE_MIN_ACTUAL);
    let kept: Vec<T> = actuals
        .iter()
        .zip(forecasts)
        .filter(|(a, _)| **a >= floor)
        .map(|(a, f)| (*a - *f).abs() / *a)
        .collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("every actual is below the AMAPE floor".into()));
    }
    let n = T::from_usize_lossy(kept.len());
    Ok((kept.iter().copied().sum::<T>() / n * T::lit(100.0), actuals.len() - kept.len()))
}

pub fn rmse<T: Scalar>(actuals: &[T], forecasts: &[T]) -> Result<T> {
    check_pairs(actuals, forecasts)?;
    let sse: T = actuals.iter().zip(forecasts).map(|(a, f)| (*a - *f) * (*a - *f)).sum();
    Ok((sse / T::from_usize_lossy(actuals.len())).sqrt())
}

pub fn r_squared<T: Scalar>(actuals: &[T], forecasts: &[T]) -> Result<T> {
    check_pairs(actuals, forecasts)?;
    let mean = actuals.iter().copied().sum::<T>() / T::from_usize_lossy(actuals.len());
    let sst: T = actuals.iter().map(|a| (*a - mean) * (*a - mean)).sum();
    if sst <= T::zero() {
        return Err(Error::Degenerate("actuals have zero variance".into()));
    }
    let sse: T = actuals.iter().zip(forecasts).map(|(a, f)| (*a - *f) * (*a - *f)).sum();
    Ok(T::one() - sse / sst)
}

/// One scored forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutcome {
    pub feeder_id: String,
    pub season: Season,
    pub cluster: usize,
    /// 1 for the first forecast year.
    pub year_index: usize,
    pub config: String,
    pub actual: f64,
    pub forecast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub amape: f64,
    pub rmse: f64,
    /// `None` when the actuals of the group have no spread.
    pub r_squared: Option<f64>,
    pub n: usize,
    pub excluded: usize,
}

pub fn summarize(actuals: &[f64], forecasts: &[f64]) -> Result<MetricSummary> {
    let (a, excluded) = amape(actuals, forecasts)?;
    Ok(MetricSummary {
        amape: a,
        rmse: rmse(actuals, forecasts)?,
        r_squared: r_squared(actuals, forecasts).ok(),
        n: actuals.len(),
        excluded,
    })
}

pub fn evaluate(outcomes: &[ForecastOutcome]) -> Result<MetricSummary> {
    let a: Vec<f64> = outcomes.iter().map(|o| o.actual).collect();
    let f: Vec<f64> = outcomes.iter().map(|o| o.forecast).collect();
    summarize(&a, &f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Cluster,
    YearIndex,
    Config,
    Season,
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::Cluster => "cluster",
            GroupBy::YearIndex => "year",
            GroupBy::Config => "config",
            GroupBy::Season => "season",
        })
    }
}

impl FromStr for GroupBy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cluster" => Ok(GroupBy::Cluster),
            "year" | "year_index" | "forecast-year" => Ok(GroupBy::YearIndex),
            "config" => Ok(GroupBy::Config),
            "season" => Ok(GroupBy::Season),
            other => Err(Error::InvalidArgument(format!("unknown group key `{other}`"))),
        }
    }
}

fn group_key(o: &ForecastOutcome, by: GroupBy) -> String {
    match by {
        GroupBy::Cluster => o.cluster.to_string(),
        GroupBy::YearIndex => o.year_index.to_string(),
        GroupBy::Config => o.config.clone(),
        GroupBy::Season => o.season.to_string(),
    }
}

/// Metrics per group, groups in key order.
pub fn breakdown(outcomes: &[ForecastOutcome], by: GroupBy) -> Result<Vec<(String, MetricSummary)>> {
    let mut groups: BTreeMap<String, Vec<&ForecastOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(group_key(o, by)).or_default().push(o);
    }
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no outcomes to break down".into()));
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let a: Vec<f64> = v.iter().map(|o| o.actual).collect();
            let f: Vec<f64> = v.iter().map(|o| o.forecast).collect();
            Ok((k, summarize(&a, &f)?))
        })
        .collect()
}
