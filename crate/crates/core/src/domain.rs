//! Feeder and area data model plus CSV ingestion.
//!
//! Demand quantities are amperes, temperatures are °C and growth rates are
//! percent values, matching the CSV schemas below.
//!
//! ```text
//! feeders.csv   feeder_id,year,season,peak_demand_a,res_at_peak_a,com_at_peak_a,ind_at_peak_a,mcnlc_a,der_ev_a
//! area.csv      year,gdp_growth_pct,emp_growth_pct,ipi,commodity_price,pop_growth_pct,net_migration,housing_starts,etaa_summer_c,etaa_winter_c
//! transfers.csv year,from_feeder,to_feeder,season
//! scenario.csv  kind,feeder_id,season,year,<area columns>,mcnlc_a,der_ev_a
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Season {
    Summer,
    Winter,
}

impl Season {
    pub const ALL: [Season; 2] = [Season::Summer, Season::Winter];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Summer => "summer",
            Season::Winter => "winter",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summer" | "s" => Ok(Season::Summer),
            "winter" | "w" => Ok(Season::Winter),
            other => Err(Error::Parse(format!("unknown season `{other}`"))),
        }
    }
}

/// One feeder, one season, one year.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederYearRecord {
    pub feeder_id: String,
    pub year: i32,
    pub season: Season,
    pub peak_demand: f64,
    pub residential_at_peak: f64,
    pub commercial_at_peak: f64,
    pub industrial_at_peak: f64,
    /// Major customer net load change, signed.
    pub mcnlc: f64,
    pub der_ev_change: f64,
}

impl FeederYearRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let fields = [
            ("peak_demand_a", self.peak_demand),
            ("res_at_peak_a", self.residential_at_peak),
            ("com_at_peak_a", self.commercial_at_peak),
            ("ind_at_peak_a", self.industrial_at_peak),
            ("mcnlc_a", self.mcnlc),
            ("der_ev_a", self.der_ev_change),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if self.peak_demand < 0.0 {
            return Err(format!("negative peak demand {}", self.peak_demand));
        }
        for (name, v) in &fields[1..4] {
            if *v < 0.0 {
                return Err(format!("negative {name} {v}"));
            }
        }
        let typed = self.residential_at_peak + self.commercial_at_peak + self.industrial_at_peak;
        if typed > self.peak_demand * (1.0 + 1e-6) {
            return Err(format!(
                "per-type loads at peak sum to {typed} which exceeds peak demand {}",
                self.peak_demand
            ));
        }
        Ok(())
    }
}

/// A feeder's consecutive-year history for one season.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederHistory {
    pub feeder_id: String,
    pub season: Season,
    pub records: Vec<FeederYearRecord>,
}

impl FeederHistory {
    /// Builds a history, sorting by year and checking the consecutive-year invariant.
    pub fn new(feeder_id: impl Into<String>, season: Season, mut records: Vec<FeederYearRecord>) -> Result<Self> {
        let feeder_id = feeder_id.into();
        records.sort_by_key(|r| r.year);
        for w in records.windows(2) {
            if w[0].year == w[1].year {
                return Err(Error::DuplicateYear {
                    feeder: Some(feeder_id),
                    year: w[0].year,
                });
            }
            if w[1].year != w[0].year + 1 {
                return Err(Error::YearGap {
                    feeder: feeder_id,
                    before: w[0].year,
                    after: w[1].year,
                });
            }
        }
        Ok(Self {
            feeder_id,
            season,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_year(&self) -> Option<i32> {
        self.records.first().map(|r| r.year)
    }

    pub fn last_year(&self) -> Option<i32> {
        self.records.last().map(|r| r.year)
    }

    pub fn record(&self, year: i32) -> Option<&FeederYearRecord> {
        let first = self.first_year()?;
        let idx = usize::try_from(year - first).ok()?;
        self.records.get(idx)
    }

    pub fn peak(&self, year: i32) -> Option<f64> {
        self.record(year).map(|r| r.peak_demand)
    }

    /// The history restricted to years `<= last_year`.
    pub fn truncated(&self, last_year: i32) -> FeederHistory {
        FeederHistory {
            feeder_id: self.feeder_id.clone(),
            season: self.season,
            records: self.records.iter().filter(|r| r.year <= last_year).cloned().collect(),
        }
    }
}

/// Number of economic and demographic area columns that feed PCA.
pub const N_AREA_ECON: usize = 7;

pub const AREA_ECON_COLUMNS: [&str; N_AREA_ECON] = [
    "gdp_growth_pct",
    "emp_growth_pct",
    "ipi",
    "commodity_price",
    "pop_growth_pct",
    "net_migration",
    "housing_starts",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AreaYearFeatures {
    pub year: i32,
    pub gdp_growth: f64,
    pub employment_growth: f64,
    pub industrial_production_index: f64,
    pub commodity_price: f64,
    pub population_growth: f64,
    pub net_migration: f64,
    pub housing_starts: f64,
    /// Extreme temperature above average, summer convention.
    pub etaa_summer: f64,
    /// Extreme temperature above average, winter convention (colder is positive).
    pub etaa_winter: f64,
}

impl AreaYearFeatures {
    pub fn economic_vector(&self) -> [f64; N_AREA_ECON] {
        [
            self.gdp_growth,
            self.employment_growth,
            self.industrial_production_index,
            self.commodity_price,
            self.population_growth,
            self.net_migration,
            self.housing_starts,
        ]
    }

    pub fn from_economic(year: i32, v: [f64; N_AREA_ECON], etaa_summer: f64, etaa_winter: f64) -> Self {
        Self {
            year,
            gdp_growth: v[0],
            employment_growth: v[1],
            industrial_production_index: v[2],
            commodity_price: v[3],
            population_growth: v[4],
            net_migration: v[5],
            housing_starts: v[6],
            etaa_summer,
            etaa_winter,
        }
    }

    pub fn etaa(&self, season: Season) -> f64 {
        match season {
            Season::Summer => self.etaa_summer,
            Season::Winter => self.etaa_winter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaHistory {
    pub years: Vec<AreaYearFeatures>,
    pub temperature_baseline_window: usize,
}

impl AreaHistory {
    pub const DEFAULT_BASELINE_WINDOW: usize = 10;

    pub fn new(mut years: Vec<AreaYearFeatures>) -> Result<Self> {
        years.sort_by_key(|y| y.year);
        for w in years.windows(2) {
            if w[0].year == w[1].year {
                return Err(Error::DuplicateYear {
                    feeder: None,
                    year: w[0].year,
                });
            }
            if w[1].year != w[0].year + 1 {
                return Err(Error::AreaYearGap {
                    before: w[0].year,
                    after: w[1].year,
                });
            }
        }
        Ok(Self {
            years,
            temperature_baseline_window: Self::DEFAULT_BASELINE_WINDOW,
        })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn first_year(&self) -> Option<i32> {
        self.years.first().map(|y| y.year)
    }

    pub fn last_year(&self) -> Option<i32> {
        self.years.last().map(|y| y.year)
    }

    pub fn get(&self, year: i32) -> Option<&AreaYearFeatures> {
        let first = self.first_year()?;
        let idx = usize::try_from(year - first).ok()?;
        self.years.get(idx)
    }

    /// Appends forecast years from a scenario, which must continue the history without gaps.
    pub fn extended_with(&self, scenario: &ScenarioInput) -> Result<AreaHistory> {
        let mut years = self.years.clone();
        let last = self.last_year();
        for y in &scenario.area {
            if last.map_or(true, |l| y.year > l) {
                years.push(y.clone());
            }
        }
        let mut out = AreaHistory::new(years)?;
        out.temperature_baseline_window = self.temperature_baseline_window;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadTransferEvent {
    pub year: i32,
    pub from_feeder: String,
    pub to_feeder: String,
    pub season: Season,
}

/// Per-feeder assumed values for one future year.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeederScenario {
    pub mcnlc: f64,
    pub der_ev_change: f64,
}

/// Assumed future area drivers and per-feeder customer changes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioInput {
    pub area: Vec<AreaYearFeatures>,
    pub feeders: BTreeMap<(String, Season, i32), FeederScenario>,
}

impl ScenarioInput {
    pub fn area_year(&self, year: i32) -> Option<&AreaYearFeatures> {
        self.area.iter().find(|a| a.year == year)
    }

    /// Per-feeder values; absent entries mean no announced change.
    pub fn feeder(&self, feeder_id: &str, season: Season, year: i32) -> FeederScenario {
        self.feeders
            .get(&(feeder_id.to_string(), season, year))
            .copied()
            .unwrap_or_default()
    }

    /// Checks that every year in `first..=last` has area drivers.
    pub fn check_covers(&self, first: i32, last: i32) -> Result<()> {
        for year in first..=last {
            if self.area_year(year).is_none() {
                return Err(Error::MissingYear {
                    year,
                    what: "scenario area drivers".into(),
                });
            }
        }
        Ok(())
    }
}

/// Extreme temperature above average.
///
/// `raw` holds `(year, extreme)` pairs with consecutive years; the extreme is
/// the seasonal maximum for summer and the minimum for winter. A value is
/// produced for every year preceded by at least `baseline_window` years.
/// Winter values are negated so a colder-than-average year is positive.
pub fn compute_etaa(raw: &[(i32, f64)], baseline_window: usize, season: Season) -> Result<Vec<(i32, f64)>> {
    if baseline_window == 0 {
        return Err(Error::InvalidArgument("baseline window must be at least 1".into()));
    }
    for w in raw.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            return Err(Error::AreaYearGap {
                before: w[0].0,
                after: w[1].0,
            });
        }
    }
    if raw.len() <= baseline_window {
        return Err(Error::InsufficientHistory(format!(
            "{} years of temperature extremes, need more than {baseline_window}",
            raw.len()
        )));
    }
    let out = (baseline_window..raw.len())
        .map(|i| {
            // mean of (current - past) is exactly zero for a constant series
            let diff = raw[i - baseline_window..i]
                .iter()
                .map(|(_, t)| raw[i].1 - t)
                .sum::<f64>()
                / baseline_window as f64;
            let etaa = match season {
                Season::Summer => diff,
                Season::Winter => -diff,
            };
            (raw[i].0, etaa)
        })
        .collect();
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV ingestion

pub const FEEDER_COLUMNS: [&str; 9] = [
    "feeder_id",
    "year",
    "season",
    "peak_demand_a",
    "res_at_peak_a",
    "com_at_peak_a",
    "ind_at_peak_a",
    "mcnlc_a",
    "der_ev_a",
];

pub const AREA_COLUMNS: [&str; 10] = [
    "year",
    "gdp_growth_pct",
    "emp_growth_pct",
    "ipi",
    "commodity_price",
    "pop_growth_pct",
    "net_migration",
    "housing_starts",
    "etaa_summer_c",
    "etaa_winter_c",
];

pub const TRANSFER_COLUMNS: [&str; 4] = ["year", "from_feeder", "to_feeder", "season"];

struct Table {
    path: std::path::PathBuf,
    index: Vec<usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, columns: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let mut index = Vec::with_capacity(columns.len());
        for col in columns {
            let i = headers
                .iter()
                .position(|h| h == *col)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: (*col).to_string(),
                })?;
            index.push(i);
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            rows.push((i + 1, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            index,
            rows,
        })
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, col: usize) -> &'r str {
        rec.get(self.index[col]).unwrap_or("")
    }

    fn err(&self, row: usize, message: impl Into<String>) -> Error {
        Error::Row {
            path: self.path.clone(),
            row,
            message: message.into(),
        }
    }

    fn num(&self, row: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64> {
        let s = self.field(rec, col);
        let v: f64 = s
            .parse()
            .map_err(|_| self.err(row, format!("column `{name}`: non-numeric value `{s}`")))?;
        if !v.is_finite() {
            return Err(self.err(row, format!("column `{name}`: non-finite value `{s}`")));
        }
        Ok(v)
    }

    fn opt_num(&self, row: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<Option<f64>> {
        if self.field(rec, col).is_empty() {
            Ok(None)
        } else {
            self.num(row, rec, col, name).map(Some)
        }
    }

    fn year(&self, row: usize, rec: &csv::StringRecord, col: usize) -> Result<i32> {
        let s = self.field(rec, col);
        s.parse()
            .map_err(|_| self.err(row, format!("column `year`: invalid year `{s}`")))
    }
}

/// Reads `feeders.csv` rows of one season, grouped into one history per feeder.
pub fn load_feeder_history(path: impl AsRef<Path>, season: Season) -> Result<Vec<FeederHistory>> {
    Ok(load_feeder_histories(path)?
        .into_iter()
        .filter(|h| h.season == season)
        .collect())
}

/// Reads every row of `feeders.csv`, grouped by `(feeder_id, season)`.
pub fn load_feeder_histories(path: impl AsRef<Path>) -> Result<Vec<FeederHistory>> {
    let path = path.as_ref();
    let table = Table::read(path, &FEEDER_COLUMNS)?;
    let mut groups: BTreeMap<(String, Season), Vec<(usize, FeederYearRecord)>> = BTreeMap::new();
    for (row, rec) in &table.rows {
        let row = *row;
        let feeder_id = table.field(rec, 0).to_string();
        if feeder_id.is_empty() {
            return Err(table.err(row, "empty feeder_id"));
        }
        let season: Season = table
            .field(rec, 2)
            .parse()
            .map_err(|e: Error| table.err(row, e.to_string()))?;
        let r = FeederYearRecord {
            feeder_id: feeder_id.clone(),
            year: table.year(row, rec, 1)?,
            season,
            peak_demand: table.num(row, rec, 3, FEEDER_COLUMNS[3])?,
            residential_at_peak: table.num(row, rec, 4, FEEDER_COLUMNS[4])?,
            commercial_at_peak: table.num(row, rec, 5, FEEDER_COLUMNS[5])?,
            industrial_at_peak: table.num(row, rec, 6, FEEDER_COLUMNS[6])?,
            mcnlc: table.num(row, rec, 7, FEEDER_COLUMNS[7])?,
            der_ev_change: table.num(row, rec, 8, FEEDER_COLUMNS[8])?,
        };
        r.validate().map_err(|m| table.err(row, m))?;
        groups.entry((feeder_id, season)).or_default().push((row, r));
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((feeder_id, season), rows) in groups {
        out.push(FeederHistory::new(feeder_id, season, rows.into_iter().map(|(_, r)| r).collect())?);
    }
    Ok(out)
}

fn area_row(table: &Table, row: usize, rec: &csv::StringRecord, year_col: usize, first: usize) -> Result<(i32, [f64; 7], Option<f64>, Option<f64>)> {
    let year = table.year(row, rec, year_col)?;
    let mut v = [0.0; N_AREA_ECON];
    for (k, slot) in v.iter_mut().enumerate() {
        *slot = table.num(row, rec, first + k, AREA_ECON_COLUMNS[k])?;
    }
    let es = table.opt_num(row, rec, first + 7, "etaa_summer_c")?;
    let ew = table.opt_num(row, rec, first + 8, "etaa_winter_c")?;
    Ok((year, v, es, ew))
}

pub fn load_area_history(path: impl AsRef<Path>) -> Result<AreaHistory> {
    let path = path.as_ref();
    let table = Table::read(path, &AREA_COLUMNS)?;
    let mut years = Vec::with_capacity(table.rows.len());
    let mut seen = BTreeSet::new();
    for (row, rec) in &table.rows {
        let (year, v, es, ew) = area_row(&table, *row, rec, 0, 1)?;
        if !seen.insert(year) {
            return Err(Error::DuplicateYear { feeder: None, year });
        }
        let es = es.ok_or_else(|| table.err(*row, "column `etaa_summer_c`: missing value"))?;
        let ew = ew.ok_or_else(|| table.err(*row, "column `etaa_winter_c`: missing value"))?;
        years.push(AreaYearFeatures::from_economic(year, v, es, ew));
    }
    AreaHistory::new(years)
}

pub fn load_transfers(path: impl AsRef<Path>) -> Result<Vec<LoadTransferEvent>> {
    let path = path.as_ref();
    let table = Table::read(path, &TRANSFER_COLUMNS)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let from = table.field(rec, 1).to_string();
        let to = table.field(rec, 2).to_string();
        if from.is_empty() || to.is_empty() {
            return Err(table.err(*row, "empty feeder id"));
        }
        if from == to {
            return Err(table.err(*row, format!("transfer from `{from}` to itself")));
        }
        let season = table
            .field(rec, 3)
            .parse()
            .map_err(|e: Error| table.err(*row, e.to_string()))?;
        out.push(LoadTransferEvent {
            year: table.year(*row, rec, 0)?,
            from_feeder: from,
            to_feeder: to,
            season,
        });
    }
    Ok(out)
}

pub const SCENARIO_COLUMNS: [&str; 15] = [
    "kind",
    "feeder_id",
    "season",
    "year",
    "gdp_growth_pct",
    "emp_growth_pct",
    "ipi",
    "commodity_price",
    "pop_growth_pct",
    "net_migration",
    "housing_starts",
    "etaa_summer_c",
    "etaa_winter_c",
    "mcnlc_a",
    "der_ev_a",
];

/// Reads `scenario.csv`. Rows with `kind=area` carry area drivers (etaa may be
/// empty and defaults to 0); rows with `kind=feeder` carry `mcnlc_a`/`der_ev_a`
/// for one `(feeder_id, season, year)`; an empty season applies to both.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioInput> {
    let path = path.as_ref();
    let table = Table::read(path, &SCENARIO_COLUMNS)?;
    let mut scenario = ScenarioInput::default();
    for (row, rec) in &table.rows {
        let row = *row;
        match table.field(rec, 0) {
            "area" => {
                let (year, v, es, ew) = area_row(&table, row, rec, 3, 4)?;
                if scenario.area_year(year).is_some() {
                    return Err(Error::DuplicateYear { feeder: None, year });
                }
                scenario
                    .area
                    .push(AreaYearFeatures::from_economic(year, v, es.unwrap_or(0.0), ew.unwrap_or(0.0)));
            }
            "feeder" => {
                let feeder_id = table.field(rec, 1).to_string();
                if feeder_id.is_empty() {
                    return Err(table.err(row, "empty feeder_id"));
                }
                let year = table.year(row, rec, 3)?;
                let seasons: Vec<Season> = match table.field(rec, 2) {
                    "" => Season::ALL.to_vec(),
                    s => vec![s.parse().map_err(|e: Error| table.err(row, e.to_string()))?],
                };
                let fs = FeederScenario {
                    mcnlc: table.opt_num(row, rec, 13, "mcnlc_a")?.unwrap_or(0.0),
                    der_ev_change: table.opt_num(row, rec, 14, "der_ev_a")?.unwrap_or(0.0),
                };
                for s in seasons {
                    scenario.feeders.insert((feeder_id.clone(), s, year), fs);
                }
            }
            other => return Err(table.err(row, format!("unknown row kind `{other}`"))),
        }
    }
    scenario.area.sort_by_key(|a| a.year);
    Ok(scenario)
}

// ---------------------------------------------------------------------------
// CSV output

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_feeder_histories(path: impl AsRef<Path>, histories: &[FeederHistory]) -> Result<()> {
    let rows = histories.iter().flat_map(|h| {
        h.records.iter().map(|r| {
            vec![
                r.feeder_id.clone(),
                r.year.to_string(),
                r.season.to_string(),
                r.peak_demand.to_string(),
                r.residential_at_peak.to_string(),
                r.commercial_at_peak.to_string(),
                r.industrial_at_peak.to_string(),
                r.mcnlc.to_string(),
                r.der_ev_change.to_string(),
            ]
        })
    });
    write_rows(path.as_ref(), &FEEDER_COLUMNS, rows)
}

fn area_fields(a: &AreaYearFeatures) -> Vec<String> {
    let mut v: Vec<String> = a.economic_vector().iter().map(|x| x.to_string()).collect();
    v.push(a.etaa_summer.to_string());
    v.push(a.etaa_winter.to_string());
    v
}

pub fn write_area_history(path: impl AsRef<Path>, area: &AreaHistory) -> Result<()> {
    let rows = area.years.iter().map(|a| {
        let mut r = vec![a.year.to_string()];
        r.extend(area_fields(a));
        r
    });
    write_rows(path.as_ref(), &AREA_COLUMNS, rows)
}

pub fn write_transfers(path: impl AsRef<Path>, transfers: &[LoadTransferEvent]) -> Result<()> {
    let rows = transfers.iter().map(|t| {
        vec![
            t.year.to_string(),
            t.from_feeder.clone(),
            t.to_feeder.clone(),
            t.season.to_string(),
        ]
    });
    write_rows(path.as_ref(), &TRANSFER_COLUMNS, rows)
}

pub fn write_scenario(path: impl AsRef<Path>, scenario: &ScenarioInput) -> Result<()> {
    let area_rows = scenario.area.iter().map(|a| {
        let mut r = vec!["area".into(), String::new(), String::new(), a.year.to_string()];
        r.extend(area_fields(a));
        r.extend([String::new(), String::new()]);
        r
    });
    let feeder_rows = scenario.feeders.iter().map(|((id, season, year), fs)| {
        let mut r = vec!["feeder".into(), id.clone(), season.to_string(), year.to_string()];
        r.extend(std::iter::repeat(String::new()).take(9));
        r.push(fs.mcnlc.to_string());
        r.push(fs.der_ev_change.to_string());
        r
    });
    write_rows(path.as_ref(), &SCENARIO_COLUMNS, area_rows.chain(feeder_rows))
}

/// Realized peak of a held-out year, used to score forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub feeder_id: String,
    pub season: Season,
    pub year: i32,
    pub true_peak: f64,
}

pub const TRUTH_COLUMNS: [&str; 4] = ["feeder_id", "season", "year", "true_peak"];

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRow>> {
    let table = Table::read(path.as_ref(), &TRUTH_COLUMNS)?;
    table
        .rows
        .iter()
        .map(|(row, rec)| {
            let season = table
                .field(rec, 1)
                .parse()
                .map_err(|_| table.err(*row, format!("bad season `{}`", table.field(rec, 1))))?;
            Ok(TruthRow {
                feeder_id: table.field(rec, 0).to_string(),
                season,
                year: table.year(*row, rec, 2)?,
                true_peak: table.num(*row, rec, 3, "true_peak")?,
            })
        })
        .collect()
}

pub fn write_truth(path: impl AsRef<Path>, rows: &[TruthRow]) -> Result<()> {
    let rows = rows.iter().map(|t| {
        vec![
            t.feeder_id.clone(),
            t.season.to_string(),
            t.year.to_string(),
            t.true_peak.to_string(),
        ]
    });
    write_rows(path.as_ref(), &TRUTH_COLUMNS, rows)
}
