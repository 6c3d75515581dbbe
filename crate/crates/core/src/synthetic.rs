//! Seeded synthetic planning areas with planted composition clusters and
//! feeder families whose dynamics favour one configuration each.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    compute_etaa, write_area_history, write_feeder_histories, write_scenario, write_transfers, write_truth, AreaHistory,
    AreaYearFeatures, FeederHistory, FeederScenario, FeederYearRecord, LoadTransferEvent, ScenarioInput, Season,
    TruthRow, N_AREA_ECON,
};
use crate::error::{Error, Result};
use crate::nets::derive_seed;
use crate::seqdata::ConfigKind;

/// Centre of a composition blob; the industrial share is the remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCenter {
    pub r: f64,
    pub c: f64,
    pub spread: f64,
}

/// Planted dynamics of a feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Composition-weighted linear response to the area drivers.
    Plain,
    /// Quiet feeders whose growth reacts nonlinearly to each year's drivers.
    Smooth,
    /// Industrial feeders with large year-to-year swings around a steep trend.
    Volatile,
    /// Saturated feeders whose recorded connection changes never show up.
    Saturated,
}

impl Family {
    /// The configuration this family is built to favour.
    pub fn intended(self) -> Option<ConfigKind> {
        match self {
            Family::Plain => None,
            Family::Smooth => Some(ConfigKind::Recursive),
            Family::Volatile => Some(ConfigKind::Interval),
            Family::Saturated => Some(ConfigKind::MultiYear),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Plain => "plain",
            Family::Smooth => "smooth",
            Family::Volatile => "volatile",
            Family::Saturated => "saturated",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Family::Plain),
            "smooth" => Ok(Family::Smooth),
            "volatile" => Ok(Family::Volatile),
            "saturated" => Ok(Family::Saturated),
            other => Err(Error::Parse(format!("unknown family `{other}`"))),
        }
    }
}

/// Dynamics knobs of the planted families, as fractions of feeder size.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    pub smooth_trend: f64,
    /// Smooth growth per unit of positive driver.
    pub smooth_gain: f64,
    pub smooth_noise: f64,
    /// Range of the per-feeder volatile trend.
    pub volatile_trend: (f64, f64),
    pub volatile_gain: f64,
    pub volatile_noise: f64,
    pub saturated_noise: f64,
    /// Yearly probability of a recorded connection event.
    pub event_rate: f64,
    /// Mean event size.
    pub event_size: f64,
    /// Share of smooth feeder events that are recorded disconnections; these
    /// never materialize.
    pub smooth_negative_share: f64,
    /// Share of negative events for the other families.
    pub negative_share: f64,
    /// Recorded events of saturated feeders.
    pub saturated_event_rate: f64,
    pub saturated_event_size: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            smooth_trend: 0.02,
            smooth_gain: 0.06,
            smooth_noise: 0.005,
            volatile_trend: (0.0, 0.02),
            volatile_gain: 0.01,
            volatile_noise: 0.05,
            saturated_noise: 0.005,
            event_rate: 0.35,
            event_size: 0.08,
            smooth_negative_share: 0.4,
            negative_share: 0.15,
            saturated_event_rate: 0.5,
            saturated_event_size: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_feeders: usize,
    /// Observed history length.
    pub n_years: usize,
    /// Held-out years after the history.
    pub horizon: usize,
    pub first_year: i32,
    pub centers: Vec<ClusterCenter>,
    /// Plant the three families; otherwise every feeder is [`Family::Plain`].
    pub families: bool,
    /// Share of feeders per family (smooth, volatile, saturated).
    pub family_mix: [f64; 3],
    pub family_params: FamilyParams,
    /// Plain growth per unit driver for residential, commercial, industrial load.
    pub response: [f64; 3],
    /// Plain transient noise per load type.
    pub noise: [f64; 3],
    /// Peak change per degree of etaa, per load type.
    pub temperature_sensitivity: [f64; 3],
    /// Connection events of plain feeders, as for families.
    pub event_rate: f64,
    pub event_size: f64,
    /// Driver volatility; zero freezes the area.
    pub driver_scale: f64,
    pub transfer_pairs: usize,
    pub peak_range: (f64, f64),
}

impl SyntheticSpec {
    /// Default evaluation area: a residential and an industrial blob, with
    /// all three families planted.
    pub fn default_area(seed: u64) -> Self {
        Self {
            seed,
            n_feeders: 72,
            n_years: 20,
            horizon: 3,
            first_year: 2000,
            centers: vec![
                ClusterCenter {
                    r: 0.75,
                    c: 0.15,
                    spread: 0.04,
                },
                ClusterCenter {
                    r: 0.15,
                    c: 0.15,
                    spread: 0.04,
                },
            ],
            families: true,
            family_mix: [0.45, 0.35, 0.2],
            family_params: FamilyParams::default(),
            response: [0.015, 0.02, 0.03],
            noise: [0.01, 0.015, 0.05],
            temperature_sensitivity: [0.03, 0.02, 0.01],
            event_rate: 0.3,
            event_size: 0.05,
            driver_scale: 1.0,
            transfer_pairs: 2,
            peak_range: (200.0, 600.0),
        }
    }

    /// Four well separated composition blobs and plain dynamics.
    pub fn planted_clusters(seed: u64, n_feeders: usize) -> Self {
        let center = |r, c| ClusterCenter { r, c, spread: 0.03 };
        Self {
            n_feeders,
            centers: vec![center(0.8, 0.1), center(0.1, 0.8), center(0.1, 0.1), center(0.45, 0.45)],
            families: false,
            transfer_pairs: 0,
            ..Self::default_area(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.n_feeders < 2 {
            return bad("need at least 2 feeders".into());
        }
        if self.centers.is_empty() {
            return bad("need at least one cluster centre".into());
        }
        for c in &self.centers {
            if c.r < 0.0 || c.c < 0.0 || c.r + c.c > 1.0 || c.spread < 0.0 {
                return bad(format!("invalid centre {c:?}"));
            }
        }
        if self.n_years < 2 * self.horizon + 3 + 2 {
            return bad(format!("{} years is too short for horizon {}", self.n_years, self.horizon));
        }
        if self.family_mix.iter().any(|x| *x < 0.0) || self.family_mix.iter().sum::<f64>() <= 0.0 {
            return bad("family mix must be non-negative with a positive sum".into());
        }
        if !(self.peak_range.0 > 0.0 && self.peak_range.1 >= self.peak_range.0) {
            return bad("bad peak range".into());
        }
        if 2 * self.transfer_pairs > self.n_feeders {
            return bad("too many transfer pairs".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederLabel {
    pub feeder_id: String,
    pub planted_cluster: usize,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Both seasons, history years only.
    pub histories: Vec<FeederHistory>,
    pub area: AreaHistory,
    pub transfers: Vec<LoadTransferEvent>,
    /// Area drivers and recorded connection changes of the held-out years.
    pub scenario: ScenarioInput,
    pub truth: Vec<TruthRow>,
    pub labels: Vec<FeederLabel>,
}

impl SyntheticData {
    pub fn family_of(&self, feeder_id: &str) -> Option<Family> {
        self.labels.iter().find(|l| l.feeder_id == feeder_id).map(|l| l.family)
    }

    /// Writes feeders, area, transfers, scenario, truth and labels CSVs.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_feeder_histories(dir.join("feeders.csv"), &self.histories)?;
        write_area_history(dir.join("area.csv"), &self.area)?;
        write_transfers(dir.join("transfers.csv"), &self.transfers)?;
        write_scenario(dir.join("scenario.csv"), &self.scenario)?;
        write_truth(dir.join("truth.csv"), &self.truth)?;
        let path = dir.join("labels.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["feeder_id", "planted_cluster", "family"])
            .map_err(|e| Error::csv(&path, e))?;
        for l in &self.labels {
            w.write_record([l.feeder_id.clone(), l.planted_cluster.to_string(), l.family.to_string()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

struct Area {
    years: Vec<i32>,
    drivers: Vec<[f64; 2]>,
    econ: Vec<[f64; N_AREA_ECON]>,
    etaa: Vec<[f64; 2]>,
}

const LOADINGS: [([f64; 2], f64, f64); N_AREA_ECON] = [
    // (driver loadings, offset, noise)
    ([1.5, 0.0], 2.0, 0.2),
    ([1.0, 0.3], 1.0, 0.2),
    ([3.0, 0.0], 1.5, 0.5),
    ([6.0, -2.0], 0.0, 2.0),
    ([0.0, 0.8], 1.5, 0.1),
    ([0.0, 6.0], 10.0, 1.0),
    ([1.0, 3.0], 8.0, 0.5),
];

fn simulate_area(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Area> {
    let total = spec.n_years + spec.horizon;
    let warmup = AreaHistory::DEFAULT_BASELINE_WINDOW;
    let std = Normal::new(0.0, 1.0).unwrap();
    let s = spec.driver_scale;
    let mut d = [0.0f64; 2];
    let mut drivers = Vec::with_capacity(total);
    let mut econ = Vec::with_capacity(total);
    for _ in 0..total {
        d[0] = 0.2 * d[0] + std.sample(rng);
        d[1] = 0.5 * d[1] + std.sample(rng);
        let dd = [s * d[0], s * d[1]];
        drivers.push(dd);
        let mut v = [0.0; N_AREA_ECON];
        for (k, (load, off, noise)) in LOADINGS.iter().enumerate() {
            v[k] = off + load[0] * dd[0] + load[1] * dd[1] + s * noise * std.sample(rng);
        }
        econ.push(v);
    }
    let first_raw = spec.first_year - warmup as i32;
    let summer: Vec<(i32, f64)> = (0..warmup + total)
        .map(|k| (first_raw + k as i32, 31.0 + s * 1.5 * std.sample(rng)))
        .collect();
    let winter: Vec<(i32, f64)> = (0..warmup + total)
        .map(|k| (first_raw + k as i32, -27.0 + s * 3.0 * std.sample(rng)))
        .collect();
    let es = compute_etaa(&summer, warmup, Season::Summer)?;
    let ew = compute_etaa(&winter, warmup, Season::Winter)?;
    Ok(Area {
        years: (0..total).map(|k| spec.first_year + k as i32).collect(),
        drivers,
        econ,
        etaa: es.iter().zip(&ew).map(|(a, b)| [a.1, b.1]).collect(),
    })
}

struct FeederPlan {
    id: String,
    cluster: usize,
    family: Family,
    shares: [f64; 3],
    size: f64,
    winter_ratio: f64,
    trend: f64,
}

fn draw_shares(center: &ClusterCenter, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let n = Normal::new(0.0, center.spread.max(1e-12)).unwrap();
    loop {
        let r = center.r + if center.spread > 0.0 { n.sample(rng) } else { 0.0 };
        let c = center.c + if center.spread > 0.0 { n.sample(rng) } else { 0.0 };
        let i = 1.0 - r - c;
        if r >= 0.0 && c >= 0.0 && i >= 0.0 {
            return [r, c, i];
        }
    }
}

/// Assigns families: smooth feeders go to the first blob, volatile ones to
/// the second (or the first if there is only one) and saturated feeders
/// join the volatile ones.
pub fn plant_config_families(spec: &SyntheticSpec) -> Vec<(usize, Family)> {
    let n = spec.n_feeders;
    if !spec.families {
        return (0..n).map(|i| (i % spec.centers.len(), Family::Plain)).collect();
    }
    let total: f64 = spec.family_mix.iter().sum();
    let n_smooth = (n as f64 * spec.family_mix[0] / total).round() as usize;
    let n_volatile = ((n as f64 * spec.family_mix[1] / total).round() as usize).min(n - n_smooth);
    let n_sat = n - n_smooth - n_volatile;
    let second = 1.min(spec.centers.len() - 1);
    let mut out = Vec::with_capacity(n);
    out.extend((0..n_smooth).map(|_| (0, Family::Smooth)));
    out.extend((0..n_volatile).map(|_| (second, Family::Volatile)));
    out.extend((0..n_sat).map(|_| (second, Family::Saturated)));
    out
}

struct SeasonSeries {
    peaks: Vec<f64>,
    recorded: Vec<f64>,
}

fn simulate_feeder(spec: &SyntheticSpec, plan: &FeederPlan, area: &Area, season: Season, rng: &mut ChaCha8Rng) -> SeasonSeries {
    let fp = &spec.family_params;
    let total = area.years.len();
    let size = match season {
        Season::Summer => plan.size,
        Season::Winter => plan.size * plan.winter_ratio,
    };
    let std = Normal::new(0.0, 1.0).unwrap();
    let si = match season {
        Season::Summer => 0,
        Season::Winter => 1,
    };
    let sh = plan.shares;
    let temp: f64 = (0..3).map(|k| sh[k] * spec.temperature_sensitivity[k]).sum();
    let (rate, ev_size) = match plan.family {
        Family::Plain => (spec.event_rate, spec.event_size),
        Family::Saturated => (fp.saturated_event_rate, fp.saturated_event_size),
        _ => (fp.event_rate, fp.event_size),
    };
    let mut level = size;
    let mut peaks = Vec::with_capacity(total);
    let mut recorded = Vec::with_capacity(total);
    for t in 0..total {
        let d = area.drivers[t];
        let event = if rng.gen::<f64>() < rate {
            let neg = match plan.family {
                Family::Smooth => fp.smooth_negative_share,
                Family::Plain => 0.15,
                _ => fp.negative_share,
            };
            let sign = if rng.gen::<f64>() < neg { -1.0 } else { 1.0 };
            sign * size * ev_size * rng.gen_range(0.5..1.5)
        } else {
            0.0
        };
        let (growth, realized, noise) = match plan.family {
            Family::Plain => {
                let g = (0..3).map(|k| sh[k] * spec.response[k]).sum::<f64>() * (d[0] + 0.5 * d[1]);
                let nz = (0..3).map(|k| sh[k] * spec.noise[k]).sum::<f64>();
                (g, event, nz)
            }
            Family::Smooth => (fp.smooth_trend + fp.smooth_gain * d[0].max(0.0), event.max(0.0), fp.smooth_noise),
            Family::Volatile => (plan.trend + fp.volatile_gain * d[0], event, fp.volatile_noise),
            Family::Saturated => (0.0, 0.0, fp.saturated_noise),
        };
        if t > 0 {
            level = (level * (1.0 + growth) + realized).max(0.05 * size);
        }
        let observed = level * (1.0 + temp * area.etaa[t][si] + noise * std.sample(rng));
        peaks.push(observed.max(0.0));
        recorded.push(if t > 0 { event } else { 0.0 });
    }
    SeasonSeries { peaks, recorded }
}

/// Generates a full synthetic area. Identical specs give identical data.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "area"));
    let area = simulate_area(spec, &mut rng)?;
    let mut assign = plant_config_families(spec);
    assign.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "shuffle")));
    let width = (spec.n_feeders.max(2) - 1).to_string().len().max(3);
    let plans: Vec<FeederPlan> = assign
        .into_iter()
        .enumerate()
        .map(|(i, (cluster, family))| {
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("plan/{i}")));
            FeederPlan {
                id: format!("F{i:0width$}"),
                cluster,
                family,
                shares: draw_shares(&spec.centers[cluster], &mut r),
                size: r.gen_range(spec.peak_range.0..=spec.peak_range.1),
                winter_ratio: r.gen_range(0.7..0.9),
                trend: r.gen_range(spec.family_params.volatile_trend.0..=spec.family_params.volatile_trend.1),
            }
        })
        .collect();

    let mut series: BTreeMap<(usize, Season), SeasonSeries> = BTreeMap::new();
    for (i, p) in plans.iter().enumerate() {
        for season in Season::ALL {
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("feeder/{i}/{season}")));
            series.insert((i, season), simulate_feeder(spec, p, &area, season, &mut r));
        }
    }

    // load transfers between pairs of the same family and blob
    let mut transfers = Vec::new();
    let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "transfers"));
    let mut used = vec![false; plans.len()];
    for _ in 0..spec.transfer_pairs {
        let Some(a) = (0..plans.len()).find(|&i| !used[i]) else { break };
        let Some(b) = (a + 1..plans.len())
            .find(|&j| !used[j] && plans[j].family == plans[a].family && plans[j].cluster == plans[a].cluster)
        else {
            used[a] = true;
            continue;
        };
        used[a] = true;
        used[b] = true;
        let year_idx = trng.gen_range(3..spec.n_years - 3);
        let frac = trng.gen_range(0.15..0.3);
        for season in Season::ALL {
            let moved: Vec<f64> = series[&(a, season)].peaks[year_idx..].iter().map(|p| p * frac).collect();
            for (k, m) in moved.iter().enumerate() {
                series.get_mut(&(a, season)).unwrap().peaks[year_idx + k] -= m;
                series.get_mut(&(b, season)).unwrap().peaks[year_idx + k] += m;
            }
            transfers.push(LoadTransferEvent {
                year: area.years[year_idx],
                from_feeder: plans[a].id.clone(),
                to_feeder: plans[b].id.clone(),
                season,
            });
        }
    }

    let mut histories = Vec::new();
    let mut truth = Vec::new();
    let mut scenario = ScenarioInput::default();
    for (i, p) in plans.iter().enumerate() {
        for season in Season::ALL {
            let s = &series[&(i, season)];
            let records = (0..spec.n_years)
                .map(|t| {
                    let peak = s.peaks[t];
                    let typed = 0.98 * peak;
                    FeederYearRecord {
                        feeder_id: p.id.clone(),
                        year: area.years[t],
                        season,
                        peak_demand: peak,
                        residential_at_peak: typed * p.shares[0],
                        commercial_at_peak: typed * p.shares[1],
                        industrial_at_peak: typed * p.shares[2],
                        mcnlc: s.recorded[t],
                        der_ev_change: 0.0,
                    }
                })
                .collect();
            histories.push(FeederHistory::new(p.id.clone(), season, records)?);
            for t in spec.n_years..area.years.len() {
                truth.push(TruthRow {
                    feeder_id: p.id.clone(),
                    season,
                    year: area.years[t],
                    true_peak: s.peaks[t],
                });
                scenario.feeders.insert(
                    (p.id.clone(), season, area.years[t]),
                    FeederScenario {
                        mcnlc: s.recorded[t],
                        der_ev_change: 0.0,
                    },
                );
            }
        }
    }
    let area_rows: Vec<AreaYearFeatures> = (0..area.years.len())
        .map(|t| AreaYearFeatures::from_economic(area.years[t], area.econ[t], area.etaa[t][0], area.etaa[t][1]))
        .collect();
    scenario.area = area_rows[spec.n_years..].to_vec();
    let area_hist = AreaHistory::new(area_rows[..spec.n_years].to_vec())?;
    let labels = plans
        .iter()
        .map(|p| FeederLabel {
            feeder_id: p.id.clone(),
            planted_cluster: p.cluster,
            family: p.family,
        })
        .collect();
    Ok(SyntheticData {
        histories,
        area: area_hist,
        transfers,
        scenario,
        truth,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = generate(&SyntheticSpec::default_area(3)).unwrap();
        let b = generate(&SyntheticSpec::default_area(3)).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticSpec::default_area(4)).unwrap();
        assert_ne!(a.histories, c.histories);
    }

    #[test]
    fn frozen_area_gives_constant_peaks() {
        let spec = SyntheticSpec {
            families: false,
            response: [0.0; 3],
            noise: [0.0; 3],
            temperature_sensitivity: [0.0; 3],
            event_rate: 0.0,
            driver_scale: 0.0,
            transfer_pairs: 0,
            ..SyntheticSpec::default_area(1)
        };
        let d = generate(&spec).unwrap();
        for h in &d.histories {
            let p0 = h.records[0].peak_demand;
            assert!(h.records.iter().all(|r| r.peak_demand == p0));
        }
    }

    #[test]
    fn family_sizes_sum_to_feeder_count() {
        for n in [10, 61, 72, 100] {
            let spec = SyntheticSpec {
                n_feeders: n,
                ..SyntheticSpec::default_area(0)
            };
            let fams = plant_config_families(&spec);
            assert_eq!(fams.len(), n);
            assert!(fams.iter().any(|f| f.1 == Family::Saturated));
        }
    }

    #[test]
    fn shares_are_valid_and_typed_loads_fit() {
        let d = generate(&SyntheticSpec::default_area(9)).unwrap();
        for h in &d.histories {
            for r in &h.records {
                r.validate().unwrap();
            }
        }
        assert_eq!(d.truth.len(), 72 * 2 * 3);
        assert_eq!(d.scenario.area.len(), 3);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = SyntheticSpec {
            n_years: 8,
            ..SyntheticSpec::default_area(0)
        };
        assert!(generate(&spec).is_err());
    }
}
