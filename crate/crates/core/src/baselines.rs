//! Comparison forecasters: bottom-up customer additions, AR(2) and three
//! feed-forward networks.

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::features::{FeederTimeline, PcaModel};
use crate::nets::{train_mlp, Hyperparams, Mlp, YearForecasts};
use crate::scalar::Scalar;
use crate::seqdata::{fit_scaling, input_steps, ScalingStats, SeqConfig, SequenceRecord};

/// Last actual peak plus cumulative customer changes.
pub fn bottom_up(last_peak: f64, mcnlc: &[f64]) -> Vec<f64> {
    mcnlc
        .iter()
        .scan(last_peak, |y, m| {
            *y += m;
            Some(*y)
        })
        .collect()
}

pub fn bottom_up_forecast(timeline: &FeederTimeline, last_observed: i32, horizon: usize) -> Result<YearForecasts> {
    let last = timeline.peak(last_observed).ok_or_else(|| Error::MissingYear {
        year: last_observed,
        what: format!("peak of {}", timeline.feeder_id),
    })?;
    let years: Vec<i32> = (1..=horizon as i32).map(|k| last_observed + k).collect();
    let m = years
        .iter()
        .map(|&y| {
            timeline.mcnlc(y).ok_or_else(|| Error::MissingYear {
                year: y,
                what: format!("mcnlc of {}", timeline.feeder_id),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(years.into_iter().zip(bottom_up(last, &m)).collect())
}

/// `y_t = c + phi1 y_{t-1} + phi2 y_{t-2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2 {
    pub c: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Set when the design was singular and only the mean was fitted.
    pub intercept_only: bool,
}

pub const AR2_MIN_OBSERVATIONS: usize = 6;

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let scale: f64 = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    if d.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det(m) / d;
    }
    Some(out)
}

/// Ordinary least squares through the normal equations.
pub fn fit_ar2(series: &[f64]) -> Result<Ar2> {
    if series.len() < AR2_MIN_OBSERVATIONS {
        return Err(Error::InsufficientHistory(format!(
            "AR(2) needs {AR2_MIN_OBSERVATIONS} observations, have {}",
            series.len()
        )));
    }
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for t in 2..series.len() {
        let x = [1.0, series[t - 1], series[t - 2]];
        for i in 0..3 {
            xty[i] += x[i] * series[t];
            for j in 0..3 {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    match solve3(xtx, xty) {
        Some([c, phi1, phi2]) => Ok(Ar2 {
            c,
            phi1,
            phi2,
            intercept_only: false,
        }),
        None => {
            warn!("AR(2) design is singular; falling back to the series mean");
            Ok(Ar2 {
                c: series.iter().sum::<f64>() / series.len() as f64,
                phi1: 0.0,
                phi2: 0.0,
                intercept_only: true,
            })
        }
    }
}

/// Iterated forecasts from the end of `history`.
pub fn forecast_ar2(model: &Ar2, history: &[f64], horizon: usize) -> Vec<f64> {
    let n = history.len();
    let (mut y1, mut y2) = (
        history.last().copied().unwrap_or(model.c),
        if n >= 2 { history[n - 2] } else { model.c },
    );
    (0..horizon)
        .map(|_| {
            let y = model.c + model.phi1 * y1 + model.phi2 * y2;
            (y2, y1) = (y1, y);
            y
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FnnKind {
    /// One input year, recursive.
    Orf,
    /// Three input years flattened, recursive.
    Trf,
    /// Three input years flattened, three outputs at once.
    Tnf,
}

impl FnnKind {
    pub const ALL: [FnnKind; 3] = [FnnKind::Orf, FnnKind::Trf, FnnKind::Tnf];

    pub fn t_in(self) -> usize {
        match self {
            FnnKind::Orf => 1,
            _ => 3,
        }
    }

    pub fn hidden(self) -> usize {
        match self {
            FnnKind::Orf => 6,
            FnnKind::Trf => 10,
            FnnKind::Tnf => 12,
        }
    }

    pub fn config(self) -> SeqConfig {
        match self {
            FnnKind::Tnf => SeqConfig::MultiYear(3),
            _ => SeqConfig::Recursive,
        }
    }

    pub fn layer_sizes(self, n_features: usize) -> Vec<usize> {
        let h = self.hidden();
        vec![n_features * self.t_in(), h, h, self.config().n_outputs()]
    }
}

impl fmt::Display for FnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FnnKind::Orf => "orf",
            FnnKind::Trf => "trf",
            FnnKind::Tnf => "tnf",
        })
    }
}

impl FromStr for FnnKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "orf" => Ok(FnnKind::Orf),
            "trf" => Ok(FnnKind::Trf),
            "tnf" => Ok(FnnKind::Tnf),
            other => Err(Error::Parse(format!("unknown baseline network `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel<T> {
    pub kind: FnnKind,
    pub net: Mlp<T>,
    pub scaling: ScalingStats,
}

impl<T: Scalar> FnnModel<T> {
    fn flatten(&self, steps: &[crate::features::YearlyFeatureVector]) -> Vec<T> {
        self.scaling.scale_steps::<T>(steps).concat()
    }

    /// Amperes, clamped at 0.
    pub fn predict(&self, steps: &[crate::features::YearlyFeatureVector]) -> Vec<f64> {
        self.net
            .forward(&self.flatten(steps))
            .into_iter()
            .map(|s| self.scaling.invert_target(s.as_f64()).max(0.0))
            .collect()
    }
}

/// Trains a baseline network on records built with `kind.t_in()` and the
/// configuration of `kind.config()`; TNF accepts any multi-year width.
pub fn train_fnn_baseline<T: Scalar>(
    kind: FnnKind,
    records: &[SequenceRecord],
    include_der_ev: bool,
    hp: &Hyperparams,
) -> Result<FnnModel<T>> {
    let config = records.first().map_or(kind.config(), |r| r.config);
    if let Some(r) = records
        .iter()
        .find(|r| r.config != config || r.config.kind() != kind.config().kind() || r.steps.len() != kind.t_in())
    {
        return Err(Error::Shape(format!(
            "{kind} expects {} records with {} steps, got {} with {}",
            kind.config(),
            kind.t_in(),
            r.config,
            r.steps.len()
        )));
    }
    let scaling = fit_scaling(records, include_der_ev)?;
    let samples: Vec<(Vec<T>, Vec<T>)> = records
        .iter()
        .map(|r| {
            let s = scaling.apply::<T>(r);
            (s.inputs.concat(), s.targets)
        })
        .collect();
    let mut sizes = kind.layer_sizes(scaling.n_features());
    *sizes.last_mut().expect("output layer") = config.n_outputs();
    let (net, _) = train_mlp(&samples, &sizes, hp)?;
    Ok(FnnModel { kind, net, scaling })
}

/// ORF and TRF iterate one year at a time; TNF emits the window at once.
pub fn forecast_fnn_baseline<T: Scalar>(
    model: &FnnModel<T>,
    timeline: &FeederTimeline,
    pca: &PcaModel<f64>,
    last_observed: i32,
    horizon: usize,
) -> Result<YearForecasts> {
    let mut tl = timeline.clone();
    tl.forget_peaks_after(last_observed);
    let first = last_observed + 1;
    let t_in = model.kind.t_in();
    match model.kind {
        FnnKind::Orf | FnnKind::Trf => (0..horizon as i32)
            .map(|k| {
                let l = first + k;
                let y = model.predict(&input_steps(&tl, pca, SeqConfig::Recursive, l, t_in)?)[0];
                tl.set_peak(l, y);
                Ok((l, y))
            })
            .collect(),
        FnnKind::Tnf => {
            let n = model.net.out_size();
            if horizon > n {
                return Err(Error::InvalidArgument(format!("horizon {horizon} exceeds TNF width {n}")));
            }
            let steps = input_steps(&tl, pca, SeqConfig::MultiYear(n), first, t_in)?;
            Ok(model
                .predict(&steps)
                .into_iter()
                .take(horizon)
                .enumerate()
                .map(|(k, y)| (first + k as i32, y))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::YearlyFeatureVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bottom_up_examples() {
        assert_eq!(bottom_up(500.0, &[20.0, -10.0, 0.0]), vec![520.0, 510.0, 510.0]);
        assert_eq!(bottom_up(300.0, &[0.0; 3]), vec![300.0; 3]);
        assert!(bottom_up(300.0, &[]).is_empty());
    }

    #[test]
    fn ar2_recovers_exact_coefficients() {
        let mut e = vec![100.0, 120.0];
        for t in 2..12 {
            e.push(10.0 + 0.5 * e[t - 1] + 0.25 * e[t - 2]);
        }
        let m = fit_ar2(&e).unwrap();
        assert!((m.phi1 - 0.5).abs() < 1e-8, "{m:?}");
        assert!((m.phi2 - 0.25).abs() < 1e-8);
        assert!((m.c - 10.0).abs() < 1e-6);
        let f = forecast_ar2(&m, &e, 2);
        let n = e.len();
        assert!((f[0] - (10.0 + 0.5 * e[n - 1] + 0.25 * e[n - 2])).abs() < 1e-6);
        assert!((f[1] - (10.0 + 0.5 * f[0] + 0.25 * e[n - 1])).abs() < 1e-6);
        assert!(fit_ar2(&e[..5]).is_err());
    }

    #[test]
    fn ar2_constant_series_falls_back() {
        let m = fit_ar2(&[500.0; 10]).unwrap();
        assert!(m.intercept_only);
        assert_eq!(forecast_ar2(&m, &[500.0; 10], 4), vec![500.0; 4]);
    }

    #[test]
    fn zero_tnf_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f64>::init(&FnnKind::Tnf.layer_sizes(5), &mut rng).unwrap().zeros_like();
        assert_eq!(net.forward(&[0.3; 15]), vec![0.0; 3]);
    }

    #[test]
    fn orf_learns_identity_on_base_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<SequenceRecord> = (0..200)
            .map(|i| {
                let base = rng.gen_range(100.0..600.0);
                SequenceRecord {
                    feeder_id: format!("F{i}"),
                    config: SeqConfig::Recursive,
                    input_years: vec![2000],
                    steps: vec![YearlyFeatureVector {
                        base_peak: base,
                        ep1: rng.gen_range(-1.0..1.0),
                        ep2: rng.gen_range(-1.0..1.0),
                        etaa: rng.gen_range(-2.0..2.0),
                        mcnlc: rng.gen_range(-20.0..20.0),
                        der_ev: 0.0,
                    }],
                    targets: vec![(2000, base)],
                }
            })
            .collect();
        let hp = Hyperparams {
            learning_rate: 1e-2,
            ..Hyperparams::default()
        };
        let m = train_fnn_baseline::<f64>(FnnKind::Orf, &records, false, &hp).unwrap();
        let mae: f64 = records
            .iter()
            .map(|r| {
                let s = m.scaling.apply::<f64>(r);
                (m.net.forward(&s.inputs.concat())[0] - s.targets[0]).abs()
            })
            .sum::<f64>()
            / records.len() as f64;
        assert!(mae < 0.01, "{mae}");
    }
}
