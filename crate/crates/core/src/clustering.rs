//! Feeder grouping by load composition: K-means with silhouette selection of K.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::FeederHistory;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Residential, commercial and industrial shares at feeder peak.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadComposition {
    pub feeder_id: String,
    pub r: f64,
    pub c: f64,
    pub i: f64,
}

/// Average per-type share of the peak over the most recent `n_years` years.
pub fn compute_composition(history: &FeederHistory, n_years: usize) -> Result<LoadComposition> {
    if n_years == 0 || history.len() < n_years {
        return Err(Error::InsufficientHistory(format!(
            "feeder {}: composition over {n_years} years needs at least that many records, have {}",
            history.feeder_id,
            history.len()
        )));
    }
    let window = &history.records[history.len() - n_years..];
    let (mut r, mut c) = (0.0, 0.0);
    for rec in window {
        if rec.peak_demand == 0.0 {
            return Err(Error::Degenerate(format!(
                "feeder {}: zero peak demand in {}",
                history.feeder_id, rec.year
            )));
        }
        r += rec.residential_at_peak / rec.peak_demand;
        c += rec.commercial_at_peak / rec.peak_demand;
    }
    let n = n_years as f64;
    let (r, c) = (r / n, c / n);
    Ok(LoadComposition {
        feeder_id: history.feeder_id.clone(),
        r,
        c,
        i: 1.0 - r - c,
    })
}

/// Min-max normalization onto `[0, 1]`.
pub fn minmax_normalize<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    let (lo, hi) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() || !(hi > lo) {
        return Err(Error::Degenerate("min-max normalization of a constant range".into()));
    }
    let span = hi - lo;
    Ok(values.iter().map(|&v| (v - lo) / span).collect())
}

#[inline]
fn dist2<T: Scalar>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
fn dist<T: Scalar>(a: &[T; 2], b: &[T; 2]) -> T {
    dist2(a, b).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<T> {
    pub k: usize,
    /// Cluster index per input point, in input order.
    pub labels: Vec<usize>,
    pub centroids: Vec<[T; 2]>,
    /// Sum of squared distances to assigned centroids.
    pub objective: T,
    /// Average silhouette; `None` until scored (undefined for `k = 1`).
    pub q_avg: Option<T>,
    /// Objective after each Lloyd iteration of the winning restart.
    pub objective_trace: Vec<T>,
}

impl<T: Scalar> ClusterAssignment<T> {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const DEFAULT_RESTARTS: usize = 10;

fn objective<T: Scalar>(points: &[[T; 2]], labels: &[usize], centroids: &[[T; 2]]) -> T {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, &centroids[l]))
        .sum()
}

fn update_centroids<T: Scalar>(points: &[[T; 2]], labels: &[usize], k: usize) -> (Vec<[T; 2]>, Vec<usize>) {
    let mut sums = vec![[T::zero(); 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    let centroids = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n == 0 {
                *s
            } else {
                let n = T::from_usize_lossy(n);
                [s[0] / n, s[1] / n]
            }
        })
        .collect();
    (centroids, counts)
}

fn nearest<T: Scalar>(p: &[T; 2], centroids: &[[T; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = dist2(p, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// One seeded Lloyd run: Forgy initialization, then alternate assignment and
/// centroid update until assignments stop changing.
fn lloyd<T: Scalar>(points: &[[T; 2]], k: usize, seed: u64) -> ClusterAssignment<T> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<[T; 2]> = sample(&mut rng, n, k).iter().map(|i| points[i]).collect();
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let j = nearest(p, &centroids);
            if j != *l {
                *l = j;
                changed = true;
            }
        }
        let (mut next, mut counts) = update_centroids(points, &labels, k);
        // Empty cluster: move the point farthest from its centroid into it.
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let (far, _) = points
                .iter()
                .zip(&labels)
                .enumerate()
                .filter(|(_, (_, &l))| counts[l] > 1)
                .map(|(i, (p, &l))| (i, dist2(p, &next[l])))
                .fold((usize::MAX, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
            labels[far] = empty;
            (next, counts) = update_centroids(points, &labels, k);
            changed = true;
        }
        centroids = next;
        let obj = objective(points, &labels, &centroids);
        debug_assert!(
            trace.last().map_or(true, |&prev: &T| obj <= prev + prev.abs() * T::lit(1e-12) + T::epsilon()),
            "k-means objective increased"
        );
        trace.push(obj);
        if !changed {
            break;
        }
    }
    ClusterAssignment {
        k,
        objective: *trace.last().expect("at least one iteration"),
        labels,
        centroids,
        q_avg: None,
        objective_trace: trace,
    }
}

/// Relabels clusters in ascending order of centroid (first, then second coordinate).
fn canonicalize<T: Scalar>(mut a: ClusterAssignment<T>) -> ClusterAssignment<T> {
    let mut order: Vec<usize> = (0..a.k).collect();
    order.sort_by(|&x, &y| {
        let (cx, cy) = (a.centroids[x], a.centroids[y]);
        cx[0]
            .partial_cmp(&cy[0])
            .unwrap()
            .then(cx[1].partial_cmp(&cy[1]).unwrap())
            .then(x.cmp(&y))
    });
    let mut rank = vec![0; a.k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    a.centroids = order.iter().map(|&o| a.centroids[o]).collect();
    for l in &mut a.labels {
        *l = rank[*l];
    }
    a
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed ^ (restart as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// K-means over 2-D points, best of `restarts` seeded runs by objective.
pub fn kmeans<T: Scalar>(points: &[[T; 2]], k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment<T>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of points {}",
            points.len()
        )));
    }
    let runs: Vec<ClusterAssignment<T>> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(points, k, restart_seed(seed, r)))
        .collect();
    // ties keep the earliest restart
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.objective < best.objective { run } else { best })
        .expect("at least one restart");
    Ok(canonicalize(best))
}

/// Per-point silhouette coefficients and their average.
///
/// Points in singleton clusters score 0. Requires at least two non-empty clusters.
pub fn silhouette<T: Scalar>(points: &[[T; 2]], labels: &[usize]) -> Result<(Vec<T>, T)> {
    if points.len() != labels.len() {
        return Err(Error::Shape("points and labels differ in length".into()));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Degenerate("silhouette needs at least two clusters".into()));
    }
    let q: Vec<T> = points
        .par_iter()
        .zip(labels.par_iter())
        .map(|(p, &own)| {
            if sizes[own] == 1 {
                return T::zero();
            }
            let mut sums = vec![T::zero(); k];
            for (o, &l) in points.iter().zip(labels) {
                sums[l] += dist(p, o);
            }
            let a = sums[own] / T::from_usize_lossy(sizes[own] - 1);
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / T::from_usize_lossy(sizes[c]))
                .fold(T::infinity(), T::min);
            let m = a.max(b);
            if m > T::zero() {
                (b - a) / m
            } else {
                T::zero()
            }
        })
        .collect();
    let avg = q.iter().copied().sum::<T>() / T::from_usize_lossy(q.len());
    Ok((q, avg))
}

/// Silhouette score and objective for one candidate K.
#[derive(Debug, Clone, PartialEq)]
pub struct KScore<T> {
    pub k: usize,
    pub q_avg: T,
    pub objective: T,
}

/// Runs K-means for every K in `k_range` and keeps the one with the highest
/// average silhouette (smaller K on ties).
pub fn select_k<T: Scalar>(
    points: &[[T; 2]],
    k_range: &[usize],
    seed: u64,
    restarts: usize,
) -> Result<(ClusterAssignment<T>, Vec<KScore<T>>)> {
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty k range".into()));
    }
    if let Some(&k) = k_range.iter().find(|&&k| k < 2 || k > points.len()) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 2..={} for silhouette selection",
            points.len()
        )));
    }
    let scored: Vec<(ClusterAssignment<T>, KScore<T>)> = k_range
        .par_iter()
        .map(|&k| {
            let mut a = kmeans(points, k, seed.wrapping_add(k as u64), restarts)?;
            let (_, q) = silhouette(points, &a.labels)?;
            a.q_avg = Some(q);
            let score = KScore {
                k,
                q_avg: q,
                objective: a.objective,
            };
            Ok((a, score))
        })
        .collect::<Result<_>>()?;
    let scores = scored.iter().map(|(_, s)| s.clone()).collect();
    let best = scored
        .into_iter()
        .reduce(|best, cand| {
            let better = cand.1.q_avg > best.1.q_avg || (cand.1.q_avg == best.1.q_avg && cand.1.k < best.1.k);
            if better {
                cand
            } else {
                best
            }
        })
        .expect("non-empty range");
    Ok((best.0, scores))
}

/// Compositions, normalized coordinates and the selected clustering for a set of feeders.
#[derive(Debug, Clone)]
pub struct FeederClustering {
    pub compositions: Vec<LoadComposition>,
    pub normalized: Vec<[f64; 2]>,
    pub assignment: ClusterAssignment<f64>,
    pub scores: Vec<KScore<f64>>,
}

impl FeederClustering {
    pub fn cluster_of(&self, feeder_id: &str) -> Option<usize> {
        self.compositions
            .iter()
            .position(|c| c.feeder_id == feeder_id)
            .map(|i| self.assignment.labels[i])
    }
}

/// Composition, normalization and silhouette-selected K-means in one call.
///
/// `n_years = None` uses each feeder's full history. The K range is clipped to
/// the number of feeders; with fewer than three feeders every feeder lands in
/// one cluster.
pub fn cluster_feeders(
    histories: &[FeederHistory],
    n_years: Option<usize>,
    k_range: &[usize],
    seed: u64,
    restarts: usize,
) -> Result<FeederClustering> {
    let compositions = histories
        .iter()
        .map(|h| compute_composition(h, n_years.unwrap_or(h.len()).min(h.len())))
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<f64> = compositions.iter().map(|c| c.r).collect();
    let cs: Vec<f64> = compositions.iter().map(|c| c.c).collect();
    let norm = |v: &[f64]| minmax_normalize(v).unwrap_or_else(|_| vec![0.0; v.len()]);
    let (rn, cn) = (norm(&rs), norm(&cs));
    let normalized: Vec<[f64; 2]> = rn.into_iter().zip(cn).map(|(r, c)| [r, c]).collect();
    let ks: Vec<usize> = k_range.iter().copied().filter(|&k| k >= 2 && k < normalized.len()).collect();
    let distinct = {
        let mut d = normalized.clone();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d.dedup();
        d.len()
    };
    let (assignment, scores) = if ks.is_empty() || distinct < 2 {
        let a = kmeans(&normalized, 1, seed, 1)?;
        (a, Vec::new())
    } else {
        select_k(&normalized, &ks, seed, restarts)?
    };
    Ok(FeederClustering {
        compositions,
        normalized,
        assignment,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeederYearRecord, Season};

    fn history(id: &str, shares: &[(f64, f64, f64)]) -> FeederHistory {
        let recs = shares
            .iter()
            .enumerate()
            .map(|(k, &(peak, res, com))| FeederYearRecord {
                feeder_id: id.into(),
                year: 2001 + k as i32,
                season: Season::Summer,
                peak_demand: peak,
                residential_at_peak: res,
                commercial_at_peak: com,
                industrial_at_peak: 0.0,
                mcnlc: 0.0,
                der_ev_change: 0.0,
            })
            .collect();
        FeederHistory::new(id, Season::Summer, recs).unwrap()
    }

    #[test]
    fn composition_single_year() {
        let h = history("F", &[(100.0, 60.0, 30.0)]);
        let c = compute_composition(&h, 1).unwrap();
        assert!((c.r - 0.6).abs() < 1e-12 && (c.c - 0.3).abs() < 1e-12 && (c.i - 0.1).abs() < 1e-12);
    }

    #[test]
    fn composition_two_year_average() {
        let h = history("F", &[(100.0, 50.0, 30.0), (200.0, 140.0, 20.0)]);
        let c = compute_composition(&h, 2).unwrap();
        assert!((c.r - 0.6).abs() < 1e-12 && (c.c - 0.2).abs() < 1e-12 && (c.i - 0.2).abs() < 1e-12);
    }

    #[test]
    fn composition_uses_most_recent_years() {
        let h = history("F", &[(100.0, 0.0, 100.0), (100.0, 100.0, 0.0)]);
        let c = compute_composition(&h, 1).unwrap();
        assert_eq!((c.r, c.c, c.i), (1.0, 0.0, 0.0));
    }

    #[test]
    fn composition_zero_peak_is_error() {
        let h = history("F", &[(0.0, 0.0, 0.0)]);
        assert!(compute_composition(&h, 1).is_err());
    }

    #[test]
    fn minmax_examples() {
        let v = minmax_normalize(&[433.0f64, 502.0, 554.0]).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 69.0 / 121.0).abs() < 1e-12);
        assert!((v[1] - 0.5702).abs() < 1e-4);
        assert_eq!(v[2], 1.0);
        assert_eq!(minmax_normalize(&[0.0f32, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(minmax_normalize(&[5.0, 5.0, 5.0]).is_err());
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = [[0.0, 0.0], [0.5, 0.1], [1.0, 1.0]];
        let a = kmeans(&pts, 3, 1, 3).unwrap();
        assert_eq!(a.objective, 0.0);
        assert_eq!(a.cluster_sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let a = kmeans::<f64>(&pts, 1, 7, 2).unwrap();
        assert_eq!(a.centroids[0], [0.5, 0.5]);
        assert!((a.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let pts = [[0.0, 0.0], [1.0, 1.0]];
        assert!(kmeans(&pts, 0, 1, 1).is_err());
        assert!(kmeans(&pts, 3, 1, 1).is_err());
    }

    #[test]
    fn kmeans_separates_tight_pairs_for_any_seed() {
        let pts = [[0.0, 0.0], [0.01, 0.0], [1.0, 1.0], [0.99, 1.0]];
        for seed in 0..25 {
            let a = kmeans(&pts, 2, seed, 1).unwrap();
            assert_eq!(a.labels, vec![0, 0, 1, 1], "seed {seed}");
        }
    }

    #[test]
    fn kmeans_labels_are_canonical() {
        let pts = [[0.9, 0.9], [0.0, 0.1], [0.91, 0.88], [0.02, 0.1]];
        let a = kmeans(&pts, 2, 3, 4).unwrap();
        assert_eq!(a.labels, vec![1, 0, 1, 0]);
        assert!(a.centroids[0][0] < a.centroids[1][0]);
    }

    #[test]
    fn silhouette_1d_example() {
        let pts: [[f64; 2]; 4] = [[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]];
        let (q, _) = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!((q[0] - (10.05 - 0.1) / 10.05).abs() < 1e-12);
        assert!((q[0] - 0.9900).abs() < 1e-4);
    }

    #[test]
    fn silhouette_perfect_separation_is_one() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let (_, avg) = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert_eq!(avg, 1.0);
    }

    #[test]
    fn silhouette_coincident_clusters_near_zero() {
        // two clusters drawn from the same interleaved set
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let (_, avg) = silhouette(&pts, &labels).unwrap();
        assert!(avg.abs() < 0.1, "{avg}");
    }

    #[test]
    fn silhouette_singleton_scores_zero() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [5.0, 0.0]];
        let (q, _) = silhouette(&pts, &[0, 0, 1]).unwrap();
        assert_eq!(q[2], 0.0);
    }

    #[test]
    fn silhouette_single_cluster_is_error() {
        assert!(silhouette(&[[0.0, 0.0], [1.0, 0.0]], &[0, 0]).is_err());
    }

    #[test]
    fn select_k_singleton_range_and_errors() {
        let pts: Vec<[f64; 2]> = (0..12).map(|i| [i as f64 / 11.0, ((i * 7) % 5) as f64 / 4.0]).collect();
        let (a, scores) = select_k(&pts, &[3], 5, 3).unwrap();
        assert_eq!(a.k, 3);
        assert_eq!(scores.len(), 1);
        assert!(select_k(&pts, &[], 5, 3).is_err());
        assert!(select_k(&pts, &[1, 2], 5, 3).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let pts: [[f32; 2]; 4] = [[0.0, 0.0], [0.01, 0.0], [1.0, 1.0], [0.99, 1.0]];
        let a = kmeans(&pts, 2, 0, 2).unwrap();
        let (_, q) = silhouette(&pts, &a.labels).unwrap();
        assert!(q > 0.95);
    }
}
