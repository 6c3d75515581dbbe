//! Area feature reduction (PCA), virtual feeder conversion and per-year
//! feature vectors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::domain::{AreaHistory, FeederHistory, FeederYearRecord, LoadTransferEvent, ScenarioInput, Season, N_AREA_ECON};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors.
pub fn symmetric_eigen<T: Scalar>(matrix: &[Vec<T>]) -> (Vec<T>, Vec<Vec<T>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<T>> = matrix.to_vec();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let scale: T = a.iter().flatten().map(|x| *x * *x).sum::<T>().sqrt();
    let tol = T::epsilon() * scale.max(T::min_positive_value());
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<T>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Fitted principal component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub feature_means: Vec<T>,
    /// All ones when the model was fitted without standardization.
    pub feature_stds: Vec<T>,
    /// Row-major loadings, one row per component.
    pub components: Vec<Vec<T>>,
    pub explained_variance: Vec<T>,
    pub total_variance: T,
}

impl<T: Scalar> PcaModel<T> {
    /// Fits on `rows` (observations by features). With `standardize`, every
    /// column is z-scored first and constant columns are rejected.
    ///
    /// In every component the loading of largest magnitude is made positive.
    pub fn fit(rows: &[Vec<T>], n_components: usize, standardize: bool) -> Result<Self> {
        let n = rows.len();
        if n < 3 {
            return Err(Error::InsufficientHistory(format!("PCA needs at least 3 observations, have {n}")));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged PCA input".into()));
        }
        if n_components == 0 || n_components > d {
            return Err(Error::InvalidArgument(format!("{n_components} components of {d} features")));
        }
        let nf = T::from_usize_lossy(n);
        let means: Vec<T> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<T>() / nf).collect();
        let stds: Vec<T> = if standardize {
            (0..d)
                .map(|j| {
                    let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<T>() / (nf - T::one());
                    let sd = var.sqrt();
                    if sd > T::zero() {
                        Ok(sd)
                    } else {
                        Err(Error::Degenerate(format!("feature column {j} has zero variance")))
                    }
                })
                .collect::<Result<_>>()?
        } else {
            vec![T::one(); d]
        };
        let z: Vec<Vec<T>> = rows
            .iter()
            .map(|r| (0..d).map(|j| (r[j] - means[j]) / stds[j]).collect())
            .collect();
        let cov: Vec<Vec<T>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| z.iter().map(|r| r[i] * r[j]).sum::<T>() / (nf - T::one()))
                    .collect()
            })
            .collect();
        let total_variance = (0..d).map(|i| cov[i][i]).sum();
        let (values, vectors) = symmetric_eigen(&cov);
        let components = vectors
            .into_iter()
            .take(n_components)
            .map(|mut v| {
                let lead = v
                    .iter()
                    .copied()
                    .fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
                if lead < T::zero() {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Ok(Self {
            feature_means: means,
            feature_stds: stds,
            components,
            explained_variance: values.into_iter().take(n_components).map(|v| v.max(T::zero())).collect(),
            total_variance,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, raw: &[T]) -> Vec<T> {
        let z: Vec<T> = raw
            .iter()
            .zip(&self.feature_means)
            .zip(&self.feature_stds)
            .map(|((x, m), s)| (*x - *m) / *s)
            .collect();
        self.components
            .iter()
            .map(|c| c.iter().zip(&z).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    /// Fraction of total variance captured by each retained component.
    pub fn explained_share(&self) -> Vec<T> {
        self.explained_variance.iter().map(|v| *v / self.total_variance).collect()
    }

    /// Plain-text `key=value` form; floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let join = |v: &[T]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        writeln!(s, "n_features={}", self.feature_means.len()).unwrap();
        writeln!(s, "n_components={}", self.components.len()).unwrap();
        writeln!(s, "means={}", join(&self.feature_means)).unwrap();
        writeln!(s, "stds={}", join(&self.feature_stds)).unwrap();
        for (i, c) in self.components.iter().enumerate() {
            writeln!(s, "component.{i}={}", join(c)).unwrap();
        }
        writeln!(s, "explained_variance={}", join(&self.explained_variance)).unwrap();
        writeln!(s, "total_variance={}", self.total_variance).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| l.split_once('=').ok_or_else(|| Error::Parse(format!("pca: bad line `{l}`"))))
            .collect::<Result<_>>()?;
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Parse(format!("pca: missing `{k}`")));
        let parse_vec = |s: &str| -> Result<Vec<T>> {
            s.split(',')
                .map(|x| x.trim().parse::<T>().map_err(|_| Error::Parse(format!("pca: bad number `{x}`"))))
                .collect()
        };
        let n_comp: usize = get("n_components")?
            .parse()
            .map_err(|_| Error::Parse("pca: bad n_components".into()))?;
        let components = (0..n_comp)
            .map(|i| parse_vec(get(&format!("component.{i}"))?))
            .collect::<Result<_>>()?;
        Ok(Self {
            feature_means: parse_vec(get("means")?)?,
            feature_stds: parse_vec(get("stds")?)?,
            components,
            explained_variance: parse_vec(get("explained_variance")?)?,
            total_variance: get("total_variance")?
                .parse()
                .map_err(|_| Error::Parse("pca: bad total_variance".into()))?,
        })
    }
}

pub const DEFAULT_PCA_COMPONENTS: usize = 2;

/// Fits the area PCA on the seven economic/demographic columns over `training_years`.
pub fn fit_pca(area: &AreaHistory, training_years: RangeInclusive<i32>) -> Result<PcaModel<f64>> {
    let rows: Vec<Vec<f64>> = training_years
        .clone()
        .map(|y| {
            area.get(y)
                .map(|a| a.economic_vector().to_vec())
                .ok_or_else(|| Error::MissingYear {
                    year: y,
                    what: "area history".into(),
                })
        })
        .collect::<Result<_>>()?;
    PcaModel::fit(&rows, DEFAULT_PCA_COMPONENTS, true)
}

/// Projects one raw area vector onto the first two components.
pub fn apply_pca(model: &PcaModel<f64>, raw: &[f64; N_AREA_ECON]) -> (f64, f64) {
    let p = model.project(raw);
    (p[0], p.get(1).copied().unwrap_or(0.0))
}

/// The per-year feature row of one sequence step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearlyFeatureVector {
    /// Peak of the year before the step year, amperes.
    pub base_peak: f64,
    pub ep1: f64,
    pub ep2: f64,
    pub etaa: f64,
    pub mcnlc: f64,
    pub der_ev: f64,
}

impl YearlyFeatureVector {
    pub const BASE_PEAK: usize = 0;

    pub fn n_features(include_der_ev: bool) -> usize {
        if include_der_ev {
            6
        } else {
            5
        }
    }

    pub fn to_vec(&self, include_der_ev: bool) -> Vec<f64> {
        let mut v = vec![self.base_peak, self.ep1, self.ep2, self.etaa, self.mcnlc];
        if include_der_ev {
            v.push(self.der_ev);
        }
        v
    }
}

/// Year-indexed view of one feeder's peaks and drivers, optionally extended
/// with scenario years. Forecast peaks can be written back for recursion.
#[derive(Debug, Clone)]
pub struct FeederTimeline {
    pub feeder_id: String,
    pub season: Season,
    peaks: BTreeMap<i32, f64>,
    mcnlc: BTreeMap<i32, f64>,
    der_ev: BTreeMap<i32, f64>,
    area_raw: BTreeMap<i32, [f64; N_AREA_ECON]>,
    etaa: BTreeMap<i32, f64>,
}

impl FeederTimeline {
    pub fn from_history(feeder: &FeederHistory, area: &AreaHistory) -> Self {
        let mut t = Self {
            feeder_id: feeder.feeder_id.clone(),
            season: feeder.season,
            peaks: BTreeMap::new(),
            mcnlc: BTreeMap::new(),
            der_ev: BTreeMap::new(),
            area_raw: BTreeMap::new(),
            etaa: BTreeMap::new(),
        };
        for r in &feeder.records {
            t.peaks.insert(r.year, r.peak_demand);
            t.mcnlc.insert(r.year, r.mcnlc);
            t.der_ev.insert(r.year, r.der_ev_change);
        }
        for a in &area.years {
            t.area_raw.insert(a.year, a.economic_vector());
            t.etaa.insert(a.year, a.etaa(feeder.season));
        }
        t
    }

    /// History plus scenario drivers for years after the last observed year.
    /// `scenario_id` selects the scenario rows (for virtual feeders, the
    /// caller sums member rows beforehand).
    pub fn with_scenario(feeder: &FeederHistory, area: &AreaHistory, scenario: &ScenarioInput, horizon: usize) -> Result<Self> {
        let mut t = Self::from_history(feeder, area);
        let last = feeder
            .last_year()
            .ok_or_else(|| Error::InsufficientHistory(format!("feeder {} has no records", feeder.feeder_id)))?;
        for year in last + 1..=last + horizon as i32 {
            let a = scenario.area_year(year).or_else(|| area.get(year)).ok_or_else(|| Error::MissingYear {
                year,
                what: "scenario area drivers".into(),
            })?;
            t.area_raw.insert(year, a.economic_vector());
            t.etaa.insert(year, a.etaa(feeder.season));
            let fs = scenario.feeder(&feeder.feeder_id, feeder.season, year);
            t.mcnlc.insert(year, fs.mcnlc);
            t.der_ev.insert(year, fs.der_ev_change);
        }
        Ok(t)
    }

    pub fn peak(&self, year: i32) -> Option<f64> {
        self.peaks.get(&year).copied()
    }

    pub fn mcnlc(&self, year: i32) -> Option<f64> {
        self.mcnlc.get(&year).copied()
    }

    /// Observed peaks in year order up to and including `year`.
    pub fn peaks_through(&self, year: i32) -> Vec<f64> {
        self.peaks.range(..=year).map(|(_, v)| *v).collect()
    }

    pub fn set_peak(&mut self, year: i32, value: f64) {
        self.peaks.insert(year, value);
    }

    /// Drops observed peaks after `year`, leaving drivers in place.
    pub fn forget_peaks_after(&mut self, year: i32) {
        self.peaks.retain(|&y, _| y <= year);
    }

    fn missing(&self, year: i32, what: &str) -> Error {
        Error::MissingYear {
            year,
            what: format!("{what} for feeder {}", self.feeder_id),
        }
    }

    fn get(&self, map: &BTreeMap<i32, f64>, year: i32, what: &str) -> Result<f64> {
        map.get(&year).copied().ok_or_else(|| self.missing(year, what))
    }

    /// Feature row for a single year.
    pub fn assemble(&self, pca: &PcaModel<f64>, year: i32) -> Result<YearlyFeatureVector> {
        self.sum_interval(pca, year - 1, year)
    }

    /// Feature row spanning the years `(base_year, target_year]`: raw area
    /// drivers and customer changes are summed over the interval before
    /// projection; etaa is the target year's; base peak is `base_year`'s.
    pub fn sum_interval(&self, pca: &PcaModel<f64>, base_year: i32, target_year: i32) -> Result<YearlyFeatureVector> {
        if target_year <= base_year {
            return Err(Error::InvalidArgument(format!(
                "interval ({base_year}, {target_year}] is empty"
            )));
        }
        let base_peak = self.get(&self.peaks, base_year, "peak demand")?;
        let mut raw = [0.0; N_AREA_ECON];
        let (mut mcnlc, mut der_ev) = (0.0, 0.0);
        for y in base_year + 1..=target_year {
            let a = self.area_raw.get(&y).ok_or_else(|| self.missing(y, "area drivers"))?;
            for (s, v) in raw.iter_mut().zip(a) {
                *s += v;
            }
            mcnlc += self.get(&self.mcnlc, y, "mcnlc")?;
            der_ev += self.get(&self.der_ev, y, "der/ev change")?;
        }
        let (ep1, ep2) = apply_pca(pca, &raw);
        Ok(YearlyFeatureVector {
            base_peak,
            ep1,
            ep2,
            etaa: self.get(&self.etaa, target_year, "etaa")?,
            mcnlc,
            der_ev,
        })
    }
}

/// Feature row for `year`: previous year's peak, projected area drivers,
/// etaa and the feeder's customer change for `year`.
pub fn assemble_features(feeder: &FeederHistory, area: &AreaHistory, pca: &PcaModel<f64>, year: i32) -> Result<YearlyFeatureVector> {
    FeederTimeline::from_history(feeder, area).assemble(pca, year)
}

/// Feature row over `(base_year, target_year]`, see [`FeederTimeline::sum_interval`].
pub fn sum_interval_features(
    feeder: &FeederHistory,
    area: &AreaHistory,
    pca: &PcaModel<f64>,
    base_year: i32,
    target_year: i32,
) -> Result<YearlyFeatureVector> {
    FeederTimeline::from_history(feeder, area).sum_interval(pca, base_year, target_year)
}

/// Physical feeder id to the (possibly virtual) feeder id it was merged into.
pub type MergeMap = BTreeMap<String, String>;

pub const VIRTUAL_ID_SEPARATOR: char = '+';

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Merges feeders linked (transitively) by load transfers of the same season
/// into virtual feeders whose series are the elementwise sums of their members.
///
/// Transfer endpoints may name either a history id or a member of an existing
/// virtual id, so re-merging merged output with the same events is a no-op.
pub fn virtual_feeder_merge(histories: &[FeederHistory], transfers: &[LoadTransferEvent]) -> Result<(Vec<FeederHistory>, MergeMap)> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, h) in histories.iter().enumerate() {
        index.insert(h.feeder_id.as_str(), i);
        if h.feeder_id.contains(VIRTUAL_ID_SEPARATOR) {
            for member in h.feeder_id.split(VIRTUAL_ID_SEPARATOR) {
                index.entry(member).or_insert(i);
            }
        }
    }
    let mut parent: Vec<usize> = (0..histories.len()).collect();
    let season = histories.first().map(|h| h.season);
    for t in transfers {
        if Some(t.season) != season {
            continue;
        }
        let resolve = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownFeeder(id.to_string()));
        let (a, b) = (resolve(&t.from_feeder)?, resolve(&t.to_feeder)?);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..histories.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out = Vec::with_capacity(groups.len());
    let mut map = MergeMap::new();
    for members in groups.values() {
        if members.len() == 1 {
            let h = &histories[members[0]];
            for m in h.feeder_id.split(VIRTUAL_ID_SEPARATOR) {
                map.insert(m.to_string(), h.feeder_id.clone());
            }
            out.push(h.clone());
            continue;
        }
        let mut ids: Vec<&str> = members
            .iter()
            .flat_map(|&i| histories[i].feeder_id.split(VIRTUAL_ID_SEPARATOR))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let vid = ids.join(&VIRTUAL_ID_SEPARATOR.to_string());
        let first = &histories[members[0]];
        for &i in &members[1..] {
            let h = &histories[i];
            if h.first_year() != first.first_year() || h.last_year() != first.last_year() {
                return Err(Error::InvalidArgument(format!(
                    "cannot merge {} and {}: year ranges differ",
                    first.feeder_id, h.feeder_id
                )));
            }
        }
        let records = first
            .records
            .iter()
            .enumerate()
            .map(|(k, r0)| {
                let mut acc = FeederYearRecord {
                    feeder_id: vid.clone(),
                    year: r0.year,
                    season: r0.season,
                    peak_demand: 0.0,
                    residential_at_peak: 0.0,
                    commercial_at_peak: 0.0,
                    industrial_at_peak: 0.0,
                    mcnlc: 0.0,
                    der_ev_change: 0.0,
                };
                for &i in members {
                    let r = &histories[i].records[k];
                    acc.peak_demand += r.peak_demand;
                    acc.residential_at_peak += r.residential_at_peak;
                    acc.commercial_at_peak += r.commercial_at_peak;
                    acc.industrial_at_peak += r.industrial_at_peak;
                    acc.mcnlc += r.mcnlc;
                    acc.der_ev_change += r.der_ev_change;
                }
                acc
            })
            .collect();
        for id in &ids {
            map.insert((*id).to_string(), vid.clone());
        }
        out.push(FeederHistory::new(vid, first.season, records)?);
    }
    out.sort_by(|a, b| a.feeder_id.cmp(&b.feeder_id));
    Ok((out, map))
}

/// Sums scenario customer changes of merged feeders onto their virtual ids.
pub fn merge_scenario(scenario: &ScenarioInput, map: &MergeMap) -> ScenarioInput {
    let mut out = ScenarioInput {
        area: scenario.area.clone(),
        feeders: BTreeMap::new(),
    };
    for ((id, season, year), fs) in &scenario.feeders {
        let vid = map.get(id).cloned().unwrap_or_else(|| id.clone());
        let e = out.feeders.entry((vid, *season, *year)).or_default();
        e.mcnlc += fs.mcnlc;
        e.der_ev_change += fs.der_ev_change;
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AreaYearFeatures;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn table_rows_reproduced() {
        let (f, a, p) = (fixture::feeder(), fixture::area(), fixture::pca());
        let v = assemble_features(&f, &a, &p, 2009).unwrap();
        assert_eq!(v.base_peak, 433.0);
        assert!(close(v.ep1, -0.64) && close(v.ep2, 0.44));
        assert_eq!((v.etaa, v.mcnlc), (0.7, 42.0));
        let v = assemble_features(&f, &a, &p, 2011).unwrap();
        assert_eq!(v.base_peak, 554.0);
        assert!(close(v.ep1, 0.33) && close(v.ep2, -0.31));
        assert_eq!((v.etaa, v.mcnlc), (3.4, 0.0));
    }

    #[test]
    fn interval_rows_reproduced() {
        let (f, a, p) = (fixture::feeder(), fixture::area(), fixture::pca());
        let v = sum_interval_features(&f, &a, &p, 2010, 2012).unwrap();
        assert_eq!(v.base_peak, 554.0);
        assert!(close(v.ep1, 0.29) && close(v.ep2, -0.50), "{v:?}");
        assert_eq!((v.etaa, v.mcnlc), (-2.2, -21.0));
        let v = sum_interval_features(&f, &a, &p, 2010, 2013).unwrap();
        assert!(close(v.ep1, 0.07) && close(v.ep2, 0.28), "{v:?}");
        assert_eq!((v.etaa, v.mcnlc), (1.8, 20.0));
    }

    #[test]
    fn one_year_interval_equals_assemble() {
        let (f, a, p) = (fixture::feeder(), fixture::area(), fixture::pca());
        for y in 2009..=2014 {
            assert_eq!(
                sum_interval_features(&f, &a, &p, y - 1, y).unwrap(),
                assemble_features(&f, &a, &p, y).unwrap()
            );
        }
    }

    #[test]
    fn zero_change_year_projects_to_origin() {
        let (f, p) = (fixture::feeder(), fixture::pca());
        let mut a = fixture::area();
        let mean: Vec<f64> = p.feature_means.clone();
        let y = a.years.iter_mut().find(|y| y.year == 2012).unwrap();
        *y = AreaYearFeatures::from_economic(2012, mean.try_into().unwrap(), 0.0, 0.0);
        let mut f = f;
        f.records.iter_mut().find(|r| r.year == 2012).unwrap().mcnlc = 0.0;
        let v = assemble_features(&f, &a, &p, 2012).unwrap();
        assert_eq!((v.base_peak, v.ep1, v.ep2, v.etaa, v.mcnlc), (550.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn two_year_sum_differs_by_centering_offset() {
        let (f, a, p) = (fixture::feeder(), fixture::area(), fixture::pca());
        let one = assemble_features(&f, &a, &p, 2011).unwrap();
        // second year replaced by its mean-raw (zero projected change)
        let mut a2 = a.clone();
        let y = a2.years.iter_mut().find(|y| y.year == 2012).unwrap();
        y.gdp_growth = fixture::MEAN[0];
        y.employment_growth = fixture::MEAN[1];
        let two = sum_interval_features(&f, &a2, &p, 2010, 2012).unwrap();
        assert!(close(two.ep1 - one.ep1, fixture::MEAN[0]));
        assert!(close(two.ep2 - one.ep2, fixture::MEAN[1]));
    }

    #[test]
    fn missing_year_errors() {
        let (f, a, p) = (fixture::feeder(), fixture::area(), fixture::pca());
        assert!(assemble_features(&f, &a, &p, 2008).is_err());
        assert!(assemble_features(&f, &a, &p, 2015).is_err());
    }

    #[test]
    fn single_axis_data_gives_unit_component() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let mut r = vec![1.0, 2.0, 100.0, 50.0, 1.0, 1000.0, 500.0];
                r[0] = (i as f64 * 0.7).sin() * 3.0;
                r
            })
            .collect();
        let m = PcaModel::fit(&rows, 2, false).unwrap();
        assert!((m.components[0][0] - 1.0).abs() < 1e-12);
        assert!(m.components[0][1..].iter().all(|x| x.abs() < 1e-12));
        assert!((m.explained_share()[0] - 1.0).abs() < 1e-12);
        assert!(matches!(PcaModel::fit(&rows, 2, true), Err(Error::Degenerate(_))));
    }

    #[test]
    fn projection_of_mean_is_zero_and_linear() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..7).map(|j| ((i * 7 + j * 3) as f64 * 0.61).sin() + j as f64).collect())
            .collect();
        let m = PcaModel::fit(&rows, 2, true).unwrap();
        let p = m.project(&m.feature_means);
        assert!(p.iter().all(|x| x.abs() < 1e-12));
        let alpha = 0.3;
        let x = &rows[4];
        let mixed: Vec<f64> = x.iter().zip(&m.feature_means).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let (px, pm) = (m.project(x), m.project(&mixed));
        for k in 0..2 {
            assert!((pm[k] - alpha * px[k]).abs() < 1e-12);
        }
        // along component 1 only
        let along: Vec<f64> = (0..7)
            .map(|j| m.feature_means[j] + m.feature_stds[j] * m.components[0][j])
            .collect();
        let pa = m.project(&along);
        assert!((pa[0] - 1.0).abs() < 1e-12 && pa[1].abs() < 1e-12);
    }

    #[test]
    fn pca_text_round_trip() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..7).map(|j| ((i * 5 + j) as f64 * 1.3).cos() * (j + 1) as f64).collect())
            .collect();
        let m = PcaModel::fit(&rows, 2, true).unwrap();
        assert_eq!(PcaModel::from_text(&m.to_text()).unwrap(), m);
    }

    fn flat_history(id: &str, peaks: &[f64]) -> FeederHistory {
        let recs = peaks
            .iter()
            .enumerate()
            .map(|(k, &p)| FeederYearRecord {
                feeder_id: id.into(),
                year: 2005 + k as i32,
                season: Season::Summer,
                peak_demand: p,
                residential_at_peak: p / 2.0,
                commercial_at_peak: p / 4.0,
                industrial_at_peak: p / 4.0,
                mcnlc: 1.0,
                der_ev_change: 0.0,
            })
            .collect();
        FeederHistory::new(id, Season::Summer, recs).unwrap()
    }

    fn transfer(from: &str, to: &str) -> LoadTransferEvent {
        LoadTransferEvent {
            year: 2010,
            from_feeder: from.into(),
            to_feeder: to.into(),
            season: Season::Summer,
        }
    }

    #[test]
    fn merge_removes_transfer_step() {
        let f1 = flat_history("F1", &[300.0, 300.0, 300.0, 300.0, 300.0, 200.0, 200.0, 200.0]);
        let f2 = flat_history("F2", &[100.0, 100.0, 100.0, 100.0, 100.0, 200.0, 200.0, 200.0]);
        let f3 = flat_history("F3", &[50.0; 8]);
        let (out, map) = virtual_feeder_merge(&[f1, f2, f3.clone()], &[transfer("F1", "F2")]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].feeder_id, "F1+F2");
        assert!(out[0].records.iter().all(|r| r.peak_demand == 400.0 && r.mcnlc == 2.0));
        assert_eq!(out[1], f3);
        assert_eq!(map["F1"], "F1+F2");
        assert_eq!(map["F3"], "F3");
    }

    #[test]
    fn merge_without_events_is_identity() {
        let hs = vec![flat_history("A", &[1.0, 2.0]), flat_history("B", &[3.0, 4.0])];
        let (out, _) = virtual_feeder_merge(&hs, &[]).unwrap();
        assert_eq!(out, hs);
    }

    #[test]
    fn merge_is_transitive_and_idempotent() {
        let hs = vec![
            flat_history("F3", &[1.0, 2.0]),
            flat_history("F1", &[3.0, 4.0]),
            flat_history("F2", &[5.0, 6.0]),
        ];
        let ev = [transfer("F1", "F2"), transfer("F2", "F3")];
        let (out, _) = virtual_feeder_merge(&hs, &ev).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].feeder_id, "F1+F2+F3");
        assert_eq!(out[0].records[1].peak_demand, 12.0);
        let (again, _) = virtual_feeder_merge(&out, &ev).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn merge_unknown_feeder_is_error() {
        let hs = vec![flat_history("A", &[1.0])];
        assert!(matches!(
            virtual_feeder_merge(&hs, &[transfer("A", "Z")]),
            Err(Error::UnknownFeeder(id)) if id == "Z"
        ));
    }

    #[test]
    fn merge_ignores_other_season() {
        let hs = vec![flat_history("A", &[1.0]), flat_history("B", &[1.0])];
        let mut t = transfer("A", "B");
        t.season = Season::Winter;
        let (out, _) = virtual_feeder_merge(&hs, &[t]).unwrap();
        assert_eq!(out.len(), 2);
    }
}
