//! Property tests of the module invariants.

mod common;

use ltlf_core::baselines::{fit_ar2, forecast_ar2};
use ltlf_core::clustering::{kmeans, minmax_normalize, silhouette};
use ltlf_core::domain::{
    compute_etaa, load_feeder_histories, write_feeder_histories, FeederHistory, LoadTransferEvent, Season,
};
use ltlf_core::features::{virtual_feeder_merge, PcaModel};
use ltlf_core::metrics::{amape, r_squared, rmse};
use ltlf_core::selector::{register_best, window_count as selection_windows, PerformanceIndex};
use ltlf_core::seqdata::{build_records, window_count, SeqConfig};
use proptest::prelude::*;

fn history_strategy() -> impl Strategy<Value = FeederHistory> {
    (1995i32..2005, prop::collection::vec((1.0f64..2000.0, -80.0f64..80.0, 0.0f64..1.0, 0.0f64..1.0), 1..25)).prop_map(
        |(first, rows)| {
            let recs = rows
                .iter()
                .enumerate()
                .map(|(i, &(peak, m, a, b))| {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    let mut r = common::record("X7", first + i as i32, Season::Winter, peak, m);
                    r.residential_at_peak = lo * peak;
                    r.commercial_at_peak = (hi - lo) * peak;
                    r.industrial_at_peak = (1.0 - hi) * peak * 0.99;
                    r.der_ev_change = m / 3.0;
                    r
                })
                .collect();
            FeederHistory::new("X7", Season::Winter, recs).unwrap()
        },
    )
}

fn points_strategy(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| [a, b]), 6..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn history_csv_round_trip_is_exact(h in history_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feeders.csv");
        write_feeder_histories(&path, std::slice::from_ref(&h)).unwrap();
        let back = load_feeder_histories(&path).unwrap();
        prop_assert_eq!(back, vec![h]);
    }

    #[test]
    fn constant_temperatures_have_zero_etaa(t in -40.0f64..40.0, n in 11usize..30, window in 1usize..10) {
        let raw: Vec<(i32, f64)> = (0..n).map(|i| (2000 + i as i32, t)).collect();
        for season in Season::ALL {
            for (_, e) in compute_etaa(&raw, window, season).unwrap() {
                prop_assert_eq!(e, 0.0);
            }
        }
    }

    #[test]
    fn minmax_preserves_order(v in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        prop_assume!(v.iter().any(|x| *x != v[0]));
        let s = minmax_normalize(&v).unwrap();
        for i in 0..v.len() {
            for j in 0..v.len() {
                prop_assert_eq!(v[i] < v[j], s[i] < s[j]);
            }
        }
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn kmeans_objective_never_increases(pts in points_strategy(120), k in 2usize..6, seed in 0u64..1000) {
        prop_assume!(pts.len() >= k);
        let a = kmeans(&pts, k, seed, 3).unwrap();
        for w in a.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", a.objective_trace);
        }
        // labels are ordered by centroid R then C
        for w in a.centroids.windows(2) {
            prop_assert!(w[0][0] < w[1][0] || (w[0][0] == w[1][0] && w[0][1] <= w[1][1]));
        }
    }

    #[test]
    fn silhouette_matches_direct_evaluation(pts in points_strategy(200), labels_seed in prop::collection::vec(0usize..5, 200)) {
        let labels: Vec<usize> = pts.iter().zip(&labels_seed).map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().collect::<std::collections::BTreeSet<_>>().len() >= 2);
        let (_, q) = silhouette(&pts, &labels).unwrap();
        prop_assert!((q - common::silhouette_oracle(&pts, &labels)).abs() < 1e-12);
    }

    #[test]
    fn pca_components_are_orthonormal(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 6..30), standardize: bool) {
        let m = match PcaModel::fit(&rows, 3, standardize) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = m.components[i].iter().zip(&m.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-9);
            }
        }
        for w in m.explained_variance.windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-12);
        }
        let proj: Vec<Vec<f64>> = rows.iter().map(|r| m.project(r)).collect();
        for c in 0..3 {
            let mean = proj.iter().map(|p| p[c]).sum::<f64>() / proj.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn merge_conserves_totals_and_is_idempotent(
        peaks in prop::collection::vec(prop::collection::vec(1.0f64..500.0, 6), 3..8),
        links in prop::collection::vec((0usize..8, 0usize..8, 2001i32..2005), 0..4),
    ) {
        let hs: Vec<FeederHistory> = peaks
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut h = common::feeder(&format!("F{i}"), 2000, p);
                for r in &mut h.records {
                    r.season = Season::Summer;
                }
                h
            })
            .collect();
        let events: Vec<LoadTransferEvent> = links
            .iter()
            .filter(|(a, b, _)| a != b && *a < hs.len() && *b < hs.len())
            .map(|&(a, b, year)| LoadTransferEvent {
                year,
                from_feeder: format!("F{a}"),
                to_feeder: format!("F{b}"),
                season: Season::Summer,
            })
            .collect();
        let (merged, _) = virtual_feeder_merge(&hs, &events).unwrap();
        for year in 2000..2006 {
            let before: f64 = hs.iter().map(|h| h.records.iter().find(|r| r.year == year).unwrap().peak_demand).sum();
            let after: f64 = merged.iter().map(|h| h.records.iter().find(|r| r.year == year).unwrap().peak_demand).sum();
            prop_assert!((before - after).abs() <= 1e-9 * before);
        }
        let (again, _) = virtual_feeder_merge(&merged, &events).unwrap();
        prop_assert_eq!(again, merged);
    }

    #[test]
    fn record_counts_and_target_years(n in 1usize..26, t_in in 1usize..5, f in 1usize..5) {
        let peaks: Vec<f64> = (0..n).map(|i| 100.0 + i as f64).collect();
        let h = common::feeder("A", 2000, &peaks);
        let area = common::area(2000..=2000 + n as i32);
        let pca = common::example_pca();
        for config in [SeqConfig::Recursive, SeqConfig::Interval(f), SeqConfig::MultiYear(f)] {
            let rs = build_records(&h, &area, &pca, config, t_in).unwrap();
            // exhaustive enumeration of valid last-input years
            let expected = (2000..2000 + n as i32)
                .filter(|&l| l - t_in as i32 >= 2000 && config.target_offsets().iter().all(|o| l + o < 2000 + n as i32))
                .count();
            prop_assert_eq!(rs.len(), expected);
            prop_assert_eq!(rs.len(), window_count(n, config, t_in));
            for r in &rs {
                let l = r.last_input_year();
                prop_assert_eq!(r.input_years.clone(), (l - t_in as i32 + 1..=l).collect::<Vec<_>>());
                let want: Vec<i32> = match config {
                    SeqConfig::Recursive => vec![l],
                    SeqConfig::Interval(f) => vec![l + f as i32 - 1],
                    SeqConfig::MultiYear(t) => (l..l + t as i32).collect(),
                };
                prop_assert_eq!(r.targets.iter().map(|t| t.0).collect::<Vec<_>>(), want);
                for (y, v) in &r.targets {
                    prop_assert_eq!(*v, 100.0 + (*y - 2000) as f64);
                }
                prop_assert_eq!(r.steps[0].base_peak, 100.0 + (l - t_in as i32 - 2000) as f64);
            }
        }
        let strip = |c| -> Vec<_> {
            build_records(&h, &area, &pca, c, t_in).unwrap().into_iter().map(|r| (r.input_years, r.steps, r.targets)).collect()
        };
        prop_assert_eq!(strip(SeqConfig::Interval(1)), strip(SeqConfig::Recursive));
    }

    #[test]
    fn metric_identities(actual in prop::collection::vec(1.0f64..1000.0, 2..30), noise in prop::collection::vec(-50.0f64..50.0, 30), lambda in 0.01f64..100.0) {
        prop_assume!(actual.iter().any(|a| (a - actual[0]).abs() > 1e-6));
        let n = actual.len();
        let forecast: Vec<f64> = actual.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let mean = actual.iter().sum::<f64>() / n as f64;
        prop_assert_eq!(r_squared(&actual, &actual).unwrap(), 1.0);
        prop_assert!(r_squared(&actual, &vec![mean; n]).unwrap().abs() < 1e-9);
        let sa: Vec<f64> = actual.iter().map(|a| a * lambda).collect();
        let sf: Vec<f64> = forecast.iter().map(|f| f * lambda).collect();
        let (a1, _) = amape(&actual, &forecast).unwrap();
        let (a2, _) = amape(&sa, &sf).unwrap();
        prop_assert!((a1 - a2).abs() <= 1e-9 * a1.max(1.0));
        let (r1, r2) = (rmse(&actual, &forecast).unwrap(), rmse(&sa, &sf).unwrap());
        prop_assert!((r2 - lambda * r1).abs() <= 1e-9 * (lambda * r1).max(1.0));
    }

    #[test]
    fn selected_index_is_the_minimum(r in 0.0f64..10.0, i in 0.0f64..10.0, m in 0.0f64..10.0) {
        let p = PerformanceIndex { recursive: r, interval: i, multiyear: m, windows: 15 };
        let k = register_best(&p);
        prop_assert!(p.get(k) <= r.min(i).min(m) + 1e-9);
    }

    #[test]
    fn ar2_solves_the_normal_equations(series in prop::collection::vec(10.0f64..500.0, 6..30)) {
        let ar = fit_ar2(&series).unwrap();
        prop_assume!(!ar.intercept_only);
        let rows: Vec<[f64; 3]> = (2..series.len()).map(|t| [1.0, series[t - 1], series[t - 2]]).collect();
        let x = nalgebra::DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
        let y = nalgebra::DVector::from_iterator(rows.len(), series[2..].iter().copied());
        let xtx = x.transpose() * &x;
        prop_assume!(xtx.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min) > 1e-6);
        let beta = xtx.lu().solve(&(x.transpose() * &y)).unwrap();
        let sse = |b: [f64; 3]| rows.iter().zip(&series[2..]).map(|(r, v)| (v - b[0] - b[1] * r[1] - b[2] * r[2]).powi(2)).sum::<f64>();
        let ours = sse([ar.c, ar.phi1, ar.phi2]);
        let oracle = sse([beta[0], beta[1], beta[2]]);
        prop_assert!(ours <= oracle * (1.0 + 1e-6) + 1e-6);
        prop_assert_eq!(forecast_ar2(&ar, &series, 3).len(), 3);
    }
}

#[test]
fn twenty_years_give_fifteen_selection_windows() {
    assert_eq!(selection_windows(20, 3), 15);
}

#[test]
fn metric_ranking_agrees() {
    let actual = [100.0, 140.0, 90.0, 170.0, 120.0];
    let noisy = [104.0, 133.0, 95.0, 160.0, 126.0];
    let mean = actual.iter().sum::<f64>() / 5.0;
    let anti: Vec<f64> = actual.iter().map(|a| 2.0 * mean - a).collect();
    let score = |f: &[f64]| (amape(&actual, f).unwrap().0, rmse(&actual, f).unwrap(), r_squared(&actual, f).unwrap());
    let (p, n, a) = (score(&actual), score(&noisy), score(&anti));
    assert!(p.0 < n.0 && n.0 < a.0);
    assert!(p.1 < n.1 && n.1 < a.1);
    assert!(p.2 > n.2 && n.2 > a.2);
}
