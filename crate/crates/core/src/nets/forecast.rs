//! Multi-year inference under each configuration.

use crate::error::{Error, Result};
use crate::features::{FeederTimeline, PcaModel};
use crate::scalar::Scalar;
use crate::seqdata::{input_steps, ConfigKind, SeqConfig};

use super::train::TrainedModel;

/// Every model trained for one (cluster, season) pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub t_in: usize,
    pub recursive: TrainedModel<T>,
    /// `intervals[f - 1]` forecasts `f` years ahead.
    pub intervals: Vec<TrainedModel<T>>,
    pub multiyear: TrainedModel<T>,
}

/// Forecast `(year, amperes)` pairs.
pub type YearForecasts = Vec<(i32, f64)>;

impl<T: Scalar> ModelBundle<T> {
    pub fn max_horizon(&self) -> usize {
        self.intervals.len().min(self.multiyear.config().n_outputs())
    }

    /// Forecasts years `last_observed + 1 ..= last_observed + horizon`.
    ///
    /// `timeline` must hold observed peaks through `last_observed` (later
    /// peaks are ignored) and drivers for every horizon year.
    pub fn forecast(
        &self,
        kind: ConfigKind,
        timeline: &FeederTimeline,
        pca: &PcaModel<f64>,
        last_observed: i32,
        horizon: usize,
    ) -> Result<YearForecasts> {
        if horizon == 0 {
            return Ok(Vec::new());
        }
        let mut tl = timeline.clone();
        tl.forget_peaks_after(last_observed);
        let first = last_observed + 1;
        match kind {
            ConfigKind::Recursive => {
                let mut out = Vec::with_capacity(horizon);
                for k in 0..horizon as i32 {
                    let l = first + k;
                    let steps = input_steps(&tl, pca, SeqConfig::Recursive, l, self.t_in)?;
                    let y = self.recursive.predict(&steps)?[0];
                    tl.set_peak(l, y);
                    out.push((l, y));
                }
                Ok(out)
            }
            ConfigKind::Interval => {
                if horizon > self.intervals.len() {
                    return Err(Error::InvalidArgument(format!(
                        "horizon {horizon} exceeds the {} interval models",
                        self.intervals.len()
                    )));
                }
                (1..=horizon)
                    .map(|f| {
                        let m = &self.intervals[f - 1];
                        let steps = input_steps(&tl, pca, m.config(), first, self.t_in)?;
                        Ok((first + f as i32 - 1, m.predict(&steps)?[0]))
                    })
                    .collect()
            }
            ConfigKind::MultiYear => {
                let n = self.multiyear.config().n_outputs();
                if horizon > n {
                    return Err(Error::InvalidArgument(format!("horizon {horizon} exceeds multi-year width {n}")));
                }
                let steps = input_steps(&tl, pca, self.multiyear.config(), first, self.t_in)?;
                let ys = self.multiyear.predict(&steps)?;
                Ok(ys.into_iter().take(horizon).enumerate().map(|(k, y)| (first + k as i32, y)).collect())
            }
        }
    }

    pub fn forecast_all(
        &self,
        timeline: &FeederTimeline,
        pca: &PcaModel<f64>,
        last_observed: i32,
        horizon: usize,
    ) -> Result<[(ConfigKind, YearForecasts); 3]> {
        let f = |k| self.forecast(k, timeline, pca, last_observed, horizon).map(|v| (k, v));
        Ok([f(ConfigKind::Recursive)?, f(ConfigKind::Interval)?, f(ConfigKind::MultiYear)?])
    }
}
