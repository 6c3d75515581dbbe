//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ltlf_core::domain::{AreaHistory, AreaYearFeatures, FeederHistory, FeederYearRecord, Season, N_AREA_ECON};
use ltlf_core::features::PcaModel;

/// Direct O(n²) silhouette: a is the mean distance to the rest of the own
/// cluster, b the smallest mean distance to another cluster, singletons 0.
pub fn silhouette_oracle(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = points.len();
    let d = |i: usize, j: usize| ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(i, j)).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|&c| c != labels[i]) {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            if !members.is_empty() {
                b = b.min(members.iter().map(|&j| d(i, j)).sum::<f64>() / members.len() as f64);
            }
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Feeder 0050, 2008-2014, whose records reproduce the worked example rows.
pub const PEAKS: [(i32, f64); 7] = [
    (2008, 433.0),
    (2009, 502.0),
    (2010, 554.0),
    (2011, 550.0),
    (2012, 521.0),
    (2013, 537.0),
    (2014, 549.0),
];
/// (year, ep1, ep2, etaa, mcnlc)
pub const YEARLY: [(i32, f64, f64, f64, f64); 7] = [
    (2008, 0.0, 0.0, 0.0, 0.0),
    (2009, -0.64, 0.44, 0.7, 42.0),
    (2010, -0.16, 0.31, -1.3, 34.0),
    (2011, 0.33, -0.31, 3.4, 0.0),
    (2012, -0.06, -0.17, -2.2, -21.0),
    (2013, -0.24, 0.80, 1.8, 41.0),
    (2014, 0.10, 0.10, 0.5, 5.0),
];

/// Identity projection onto the first two drivers.
pub fn example_pca() -> PcaModel<f64> {
    let unit = |i: usize| (0..N_AREA_ECON).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
    PcaModel {
        feature_means: vec![0.0; N_AREA_ECON],
        feature_stds: vec![1.0; N_AREA_ECON],
        components: vec![unit(0), unit(1)],
        explained_variance: vec![1.0, 1.0],
        total_variance: 2.0,
    }
}

pub fn example_area() -> AreaHistory {
    let years = YEARLY
        .iter()
        .map(|&(y, e1, e2, etaa, _)| {
            let mut v = [0.0; N_AREA_ECON];
            v[0] = e1;
            v[1] = e2;
            AreaYearFeatures::from_economic(y, v, etaa, 0.0)
        })
        .collect();
    AreaHistory::new(years).unwrap()
}

pub fn example_feeder() -> FeederHistory {
    let recs = PEAKS
        .iter()
        .zip(YEARLY)
        .map(|(&(year, p), (_, _, _, _, m))| record("0050", year, Season::Summer, p, m))
        .collect();
    FeederHistory::new("0050", Season::Summer, recs).unwrap()
}

pub fn record(id: &str, year: i32, season: Season, peak: f64, mcnlc: f64) -> FeederYearRecord {
    FeederYearRecord {
        feeder_id: id.into(),
        year,
        season,
        peak_demand: peak,
        residential_at_peak: 0.5 * peak,
        commercial_at_peak: 0.3 * peak,
        industrial_at_peak: 0.2 * peak,
        mcnlc,
        der_ev_change: 0.0,
    }
}

/// A feeder with the given peaks starting at `first_year`.
pub fn feeder(id: &str, first_year: i32, peaks: &[f64]) -> FeederHistory {
    let recs = peaks
        .iter()
        .enumerate()
        .map(|(i, &p)| record(id, first_year + i as i32, Season::Summer, p, 0.0))
        .collect();
    FeederHistory::new(id, Season::Summer, recs).unwrap()
}

/// An area covering `years` with smoothly varying drivers.
pub fn area(years: std::ops::RangeInclusive<i32>) -> AreaHistory {
    let ys = years
        .map(|y| {
            let t = y as f64;
            let mut v = [0.0; N_AREA_ECON];
            for (j, x) in v.iter_mut().enumerate() {
                *x = (0.3 * t + j as f64).sin() + 0.1 * j as f64;
            }
            AreaYearFeatures::from_economic(y, v, (0.7 * t).cos(), (0.5 * t).sin())
        })
        .collect();
    AreaHistory::new(ys).unwrap()
}
