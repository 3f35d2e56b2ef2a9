//! The (firm, technology, year) estimation panel: assembly from upstream
//! tables, Box-Cox transformation by year, and sample splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::advantage::{
    advantage_matrix, competitor_counts, compute_rta, detect_entries, AdvantageMatrix, RtaSeries,
    RtaSlice,
};
use crate::complexity::{mor, tci_transform, TciConfig, TciSlice, DEFAULT_ITERATIONS};
use crate::corpus::{Category, CountCube, FirmRecord, GovFlags, I4TMap};
use crate::error::{Error, Result};
use crate::par::*;
use crate::relatedness::{density_panel, WindowConfig};
use crate::table::{cell, fmt_f64, fmt_opt, CsvSink, RawTable};

/// Numeric panel columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    Entry,
    Omega,
    Tci,
    Gov,
    Age,
    NumEmployee,
    NumCompetitor,
    NumRta,
    ProfitRatio,
    DebtRatio,
}

impl Var {
    pub const ALL: [Var; 10] = [
        Var::Entry,
        Var::Omega,
        Var::Tci,
        Var::Gov,
        Var::Age,
        Var::NumEmployee,
        Var::NumCompetitor,
        Var::NumRta,
        Var::ProfitRatio,
        Var::DebtRatio,
    ];

    /// Continuous variables that are Box-Cox transformed by default
    /// (everything except the binaries and TCI).
    pub const TRANSFORMED: [Var; 7] = [
        Var::Omega,
        Var::Age,
        Var::NumEmployee,
        Var::NumCompetitor,
        Var::NumRta,
        Var::ProfitRatio,
        Var::DebtRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Var::Entry => "entry",
            Var::Omega => "omega",
            Var::Tci => "tci",
            Var::Gov => "gov",
            Var::Age => "age",
            Var::NumEmployee => "num_employee",
            Var::NumCompetitor => "num_competitor",
            Var::NumRta => "num_rta",
            Var::ProfitRatio => "profit_ratio",
            Var::DebtRatio => "debt_ratio",
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Var::Entry | Var::Gov)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Var {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Var::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown panel variable `{s}`")))
    }
}

/// One (firm, technology, year) observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub firm_id: Arc<str>,
    pub tech_code: Arc<str>,
    pub year: i32,
    /// Entry two years ahead (1/0).
    pub entry: f64,
    pub omega: f64,
    /// Missing when the technology has no complexity score that year.
    pub tci: Option<f64>,
    pub gov: f64,
    pub age: f64,
    pub num_employee: f64,
    pub num_competitor: f64,
    pub num_rta: f64,
    pub profit_ratio: f64,
    pub debt_ratio: f64,
    pub industry_code: Arc<str>,
    pub i4t_category: Option<Category>,
}

impl PanelRow {
    pub fn value(&self, v: Var) -> Option<f64> {
        Some(match v {
            Var::Entry => self.entry,
            Var::Omega => self.omega,
            Var::Tci => return self.tci,
            Var::Gov => self.gov,
            Var::Age => self.age,
            Var::NumEmployee => self.num_employee,
            Var::NumCompetitor => self.num_competitor,
            Var::NumRta => self.num_rta,
            Var::ProfitRatio => self.profit_ratio,
            Var::DebtRatio => self.debt_ratio,
        })
    }

    pub fn set(&mut self, v: Var, x: f64) {
        match v {
            Var::Entry => self.entry = x,
            Var::Omega => self.omega = x,
            Var::Tci => self.tci = Some(x),
            Var::Gov => self.gov = x,
            Var::Age => self.age = x,
            Var::NumEmployee => self.num_employee = x,
            Var::NumCompetitor => self.num_competitor = x,
            Var::NumRta => self.num_rta = x,
            Var::ProfitRatio => self.profit_ratio = x,
            Var::DebtRatio => self.debt_ratio = x,
        }
    }

    pub fn key(&self) -> (&str, &str, i32) {
        (&self.firm_id, &self.tech_code, self.year)
    }
}

pub const PANEL_HEADER: [&str; 15] = [
    "firm_id",
    "tech_code",
    "year",
    "entry",
    "omega",
    "tci",
    "gov",
    "age",
    "num_employee",
    "num_competitor",
    "num_rta",
    "profit_ratio",
    "debt_ratio",
    "industry_code",
    "i4t_category",
];

/// Panel rows ordered by year, firm, technology.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    pub rows: Vec<PanelRow>,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, v: Var) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.value(v)).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Panel {
        Panel {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&PanelRow) -> bool) -> Panel {
        Panel {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvSink::create(path, &PANEL_HEADER)?;
        for r in &self.rows {
            out.row([
                r.firm_id.to_string(),
                r.tech_code.to_string(),
                r.year.to_string(),
                fmt_f64(r.entry),
                fmt_f64(r.omega),
                fmt_opt(r.tci),
                fmt_f64(r.gov),
                fmt_f64(r.age),
                fmt_f64(r.num_employee),
                fmt_f64(r.num_competitor),
                fmt_f64(r.num_rta),
                fmt_f64(r.profit_ratio),
                fmt_f64(r.debt_ratio),
                r.industry_code.to_string(),
                r.i4t_category
                    .map(|c| c.name().to_owned())
                    .unwrap_or_default(),
            ])?;
        }
        out.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Panel> {
        let table = RawTable::read(path)?;
        let idx: Vec<usize> = PANEL_HEADER
            .iter()
            .map(|c| table.column(c))
            .collect::<Result<_>>()?;
        let mut interner: HashMap<String, Arc<str>> = HashMap::new();
        let mut intern = |s: &str| -> Arc<str> {
            interner
                .entry(s.to_owned())
                .or_insert_with(|| Arc::from(s))
                .clone()
        };
        let mut rows = Vec::with_capacity(table.rows.len());
        for (n, row) in &table.rows {
            let num = |k: usize| -> Result<f64> {
                cell(row, idx[k]).parse::<f64>().map_err(|_| {
                    Error::schema(path, format!("row {n}: bad value in `{}`", PANEL_HEADER[k]))
                })
            };
            let tci = match cell(row, idx[5]) {
                "" => None,
                _ => Some(num(5)?),
            };
            let cat = match cell(row, idx[14]) {
                "" => None,
                c => Some(c.parse::<Category>().map_err(|e| Error::schema(path, e))?),
            };
            rows.push(PanelRow {
                firm_id: intern(cell(row, idx[0])),
                tech_code: intern(cell(row, idx[1])),
                year: cell(row, idx[2])
                    .parse()
                    .map_err(|_| Error::schema(path, format!("row {n}: bad year")))?,
                entry: num(3)?,
                omega: num(4)?,
                tci,
                gov: num(6)?,
                age: num(7)?,
                num_employee: num(8)?,
                num_competitor: num(9)?,
                num_rta: num(10)?,
                profit_ratio: num(11)?,
                debt_ratio: num(12)?,
                industry_code: intern(cell(row, idx[13])),
                i4t_category: cat,
            });
        }
        Ok(Panel { rows })
    }
}

// ---------------------------------------------------------------------------
// Assembly

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    /// Keep (firm, tech, t) pairs where the firm already holds the advantage.
    pub include_incumbents: bool,
    /// Count the focal firm among its own competitors.
    pub competitors_include_self: bool,
    /// Years between the observation and the entry transition.
    pub lead: usize,
    /// Years the advantage must persist after the transition.
    pub persistence: usize,
    pub iterations: usize,
    pub window: WindowConfig,
    pub tci: TciConfig,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            include_incumbents: false,
            competitors_include_self: false,
            lead: 2,
            persistence: 2,
            iterations: DEFAULT_ITERATIONS,
            window: WindowConfig::default(),
            tci: TciConfig::default(),
        }
    }
}

/// Upstream tables the panel is built from.
#[derive(Debug, Clone, Copy)]
pub struct PanelSources<'a> {
    pub cube: &'a CountCube,
    pub firms: &'a [FirmRecord],
    pub gov: &'a GovFlags,
    pub taxonomy: &'a I4TMap,
}

/// Per-year intermediate results, kept for export.
#[derive(Debug, Clone)]
pub struct YearState {
    pub year: i32,
    pub rta: RtaSlice,
    pub adv: AdvantageMatrix,
    pub tci: Option<TciSlice>,
}

#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: Panel,
    pub years: Vec<YearState>,
    pub dropped_years: Vec<i32>,
    pub warnings: Vec<String>,
}

/// Years of `cube` that have a complete forward window for the entry outcome.
pub fn panel_years(cube: &CountCube, config: &PanelConfig) -> Vec<i32> {
    let reach = (config.lead + config.persistence) as i32;
    cube.years()
        .filter(|&t| t + reach <= cube.last_year())
        .collect()
}

pub fn assemble_panel(
    src: PanelSources<'_>,
    years: Option<&[i32]>,
    config: &PanelConfig,
) -> Result<PanelBuild> {
    let cube = src.cube;
    let reach = (config.lead + config.persistence) as i32;
    let requested: Vec<i32> = match years {
        Some(y) => y.to_vec(),
        None => cube.years().collect(),
    };
    let mut warnings = Vec::new();
    let mut dropped_years = Vec::new();
    let mut use_years = Vec::new();
    for &t in &requested {
        if !cube.has_year(t) {
            return Err(Error::Validation(format!("panel year {t} outside corpus")));
        }
        if t + reach > cube.last_year() {
            dropped_years.push(t);
            warnings.push(format!(
                "year {t} dropped: entry outcome needs data through {}",
                t + reach
            ));
        } else {
            use_years.push(t);
        }
    }

    let industry_of: HashMap<String, String> = src
        .firms
        .iter()
        .map(|f| (f.firm_id.clone(), f.industry_code.clone()))
        .collect();

    // RTA for every year feeds the entry series; advantage, TCI and
    // competitors are only needed for panel years.
    let all_years: Vec<i32> = cube.years().collect();
    let rta: Vec<Result<RtaSlice>> = all_years
        .par_iter()
        .map(|&y| compute_rta(cube, y))
        .collect();
    let mut slices = Vec::new();
    for (y, r) in all_years.iter().zip(rta) {
        match r {
            Ok(s) => slices.push(s),
            Err(_) => warnings.push(format!("year {y} has no patents")),
        }
    }
    let series = RtaSeries::from_slices(cube, &slices);
    let events: HashSet<(usize, usize, i32)> =
        detect_entries(&series, config.lead, config.persistence)
            .into_iter()
            .map(|e| {
                (
                    cube.firm_index(&e.firm_id).unwrap(),
                    cube.tech_index(&e.tech_code).unwrap(),
                    e.event_year,
                )
            })
            .collect();

    let density = density_panel(cube, &use_years, &config.window)?;

    let states: Vec<Result<YearState>> = use_years
        .par_iter()
        .map(|&t| {
            let rta = slices
                .iter()
                .find(|s| s.year == t)
                .cloned()
                .ok_or_else(|| Error::Data(format!("no activity in year {t}")))?;
            let adv = advantage_matrix(&rta);
            let tci = mor(&adv, config.iterations)
                .and_then(|s| tci_transform(&s, t, &config.tci))
                .ok();
            Ok(YearState {
                year: t,
                rta,
                adv,
                tci,
            })
        })
        .collect();
    let states: Vec<YearState> = states.into_iter().collect::<Result<_>>()?;
    for s in &states {
        if s.tci.is_none() {
            warnings.push(format!(
                "year {}: complexity undefined, tci missing",
                s.year
            ));
        }
    }

    let techs: Vec<Arc<str>> = cube.techs().iter().map(|t| Arc::from(t.as_str())).collect();
    let categories: Vec<Option<Category>> = cube
        .techs()
        .iter()
        .map(|t| src.taxonomy.classify(t))
        .collect();
    let firms: Vec<(&FirmRecord, usize, Arc<str>, Arc<str>)> = src
        .firms
        .iter()
        .filter_map(|f| {
            cube.firm_index(&f.firm_id).map(|i| {
                (
                    f,
                    i,
                    Arc::from(f.firm_id.as_str()),
                    Arc::from(f.industry_code.as_str()),
                )
            })
        })
        .collect();
    let gov_index = GovIndex::new(src.gov, cube);

    let nt = cube.techs().len();
    let per_year: Vec<Result<Vec<PanelRow>>> = states
        .par_iter()
        .map(|state| {
            let t = state.year;
            let comp =
                competitor_counts(&state.adv, &industry_of, config.competitors_include_self)?;
            let adv_row: HashMap<&str, usize> = state
                .adv
                .firms
                .iter()
                .enumerate()
                .map(|(r, f)| (f.as_str(), r))
                .collect();
            let tci: Vec<Option<f64>> = match &state.tci {
                Some(s) => cube.techs().iter().map(|c| s.get(c)).collect(),
                None => vec![None; nt],
            };
            let dens = density.year_slice(t).expect("density year");
            let mut rows = Vec::new();
            for (firm, i, fid, ind) in &firms {
                let Some(fy) = firm.years.get(&t).filter(|fy| fy.is_complete()) else {
                    continue;
                };
                let held = adv_row
                    .get(firm.firm_id.as_str())
                    .map(|&r| state.adv.row(r));
                let num_rta = held.map(|h| h.iter().filter(|&&b| b).count()).unwrap_or(0);
                for a in 0..nt {
                    let incumbent = held.is_some_and(|h| h[a]);
                    if incumbent && !config.include_incumbents {
                        continue;
                    }
                    rows.push(PanelRow {
                        firm_id: fid.clone(),
                        tech_code: techs[a].clone(),
                        year: t,
                        entry: events.contains(&(*i, a, t + config.lead as i32)) as u8 as f64,
                        omega: dens[i * nt + a],
                        tci: tci[a],
                        gov: gov_index.get(*i, a, t) as u8 as f64,
                        age: (t - firm.founding_year) as f64,
                        num_employee: fy.employees.unwrap(),
                        num_competitor: comp.num_competitor(&firm.firm_id, ind, a) as f64,
                        num_rta: num_rta as f64,
                        profit_ratio: fy.profit_ratio.unwrap(),
                        debt_ratio: fy.debt_ratio.unwrap(),
                        industry_code: ind.clone(),
                        i4t_category: categories[a],
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_year {
        rows.extend(r?);
    }
    Ok(PanelBuild {
        panel: Panel { rows },
        years: states,
        dropped_years,
        warnings,
    })
}

/// Gov flags re-keyed by cube indices.
struct GovIndex {
    cells: HashSet<(usize, usize, i32)>,
}

impl GovIndex {
    fn new(gov: &GovFlags, cube: &CountCube) -> Self {
        let cells = gov
            .iter()
            .filter_map(|(f, t, y)| Some((cube.firm_index(f)?, cube.tech_index(t)?, y)))
            .collect();
        Self { cells }
    }

    fn get(&self, firm: usize, tech: usize, year: i32) -> bool {
        self.cells.contains(&(firm, tech, year))
    }
}

// ---------------------------------------------------------------------------
// Box-Cox by year

/// Candidate λ values for the profile-likelihood search.
pub fn default_lambda_grid() -> Vec<f64> {
    (-20..=20).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformEntry {
    pub variable: Var,
    pub year: i32,
    /// `None` when the variable is constant within the year.
    pub lambda: Option<f64>,
    pub shift: f64,
    pub pre_mean: f64,
    pub pre_sd: f64,
    pub post_mean: f64,
    pub post_sd: f64,
    pub flag: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    pub entries: Vec<TransformEntry>,
}

impl TransformReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvSink::create(
            path,
            &[
                "variable",
                "year",
                "lambda",
                "shift",
                "pre_mean",
                "pre_sd",
                "post_mean",
                "post_sd",
                "flag",
            ],
        )?;
        for e in &self.entries {
            out.row([
                e.variable.name().to_owned(),
                e.year.to_string(),
                fmt_opt(e.lambda),
                fmt_f64(e.shift),
                fmt_f64(e.pre_mean),
                fmt_f64(e.pre_sd),
                fmt_f64(e.post_mean),
                fmt_f64(e.post_sd),
                e.flag.clone(),
            ])?;
        }
        out.finish()
    }
}

pub fn box_cox(x: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        x.ln()
    } else {
        (x.powf(lambda) - 1.0) / lambda
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Box-Cox profile log-likelihood (up to a constant) for positive data.
pub fn box_cox_llf(x: &[f64], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let transformed: Vec<f64> = x.iter().map(|&v| box_cox(v, lambda)).collect();
    let (_, sd) = mean_sd(&transformed);
    let log_sum: f64 = x.iter().map(|v| v.ln()).sum();
    -0.5 * n * (sd * sd).ln() + (lambda - 1.0) * log_sum
}

/// Picks λ from `grid` maximizing the profile log-likelihood. Ties keep the
/// earlier grid value.
pub fn select_lambda(x: &[f64], grid: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &l in grid {
        let ll = box_cox_llf(x, l);
        if !ll.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((l, ll));
        }
    }
    best.map(|(l, _)| l)
}

/// Transforms one vector: shift to a minimum of 1 when needed, choose λ,
/// transform, center.
pub fn transform_values(values: &[f64], grid: &[f64]) -> (Vec<f64>, Option<f64>, f64, String) {
    let (mean, sd) = mean_sd(values);
    if values.is_empty() {
        return (Vec::new(), None, 0.0, "empty".into());
    }
    if !(sd > 0.0) {
        return (
            values.iter().map(|v| v - mean).collect(),
            None,
            0.0,
            "constant".into(),
        );
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };
    let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
    let Some(lambda) = select_lambda(&shifted, grid) else {
        return (
            values.iter().map(|v| v - mean).collect(),
            None,
            shift,
            "no finite lambda".into(),
        );
    };
    let mut out: Vec<f64> = shifted.iter().map(|&v| box_cox(v, lambda)).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return (
            values.iter().map(|v| v - mean).collect(),
            None,
            shift,
            "non-finite transform".into(),
        );
    }
    let (m, _) = mean_sd(&out);
    out.iter_mut().for_each(|v| *v -= m);
    (out, Some(lambda), shift, String::new())
}

pub fn box_cox_by_year(
    panel: &Panel,
    variables: &[Var],
    grid: &[f64],
) -> Result<(Panel, TransformReport)> {
    if let Some(v) = variables.iter().find(|v| v.is_binary() || **v == Var::Tci) {
        return Err(Error::Validation(format!(
            "`{v}` is not Box-Cox transformed"
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, r) in panel.rows.iter().enumerate() {
        by_year.entry(r.year).or_default().push(i);
    }
    let cells: Vec<(Var, i32)> = variables
        .iter()
        .flat_map(|&v| by_year.keys().map(move |&y| (v, y)))
        .collect();
    let results: Vec<(Var, i32, Vec<f64>, TransformEntry)> = cells
        .par_iter()
        .map(|&(v, y)| {
            let idx = &by_year[&y];
            let vals: Vec<f64> = idx
                .iter()
                .map(|&i| panel.rows[i].value(v).unwrap())
                .collect();
            let (pre_mean, pre_sd) = mean_sd(&vals);
            let (out, lambda, shift, flag) = transform_values(&vals, grid);
            let (post_mean, post_sd) = mean_sd(&out);
            let entry = TransformEntry {
                variable: v,
                year: y,
                lambda,
                shift,
                pre_mean,
                pre_sd,
                post_mean,
                post_sd,
                flag,
            };
            (v, y, out, entry)
        })
        .collect();
    let mut transformed = panel.clone();
    let mut report = TransformReport::default();
    for (v, y, out, entry) in results {
        for (&i, x) in by_year[&y].iter().zip(out) {
            transformed.rows[i].set(v, x);
        }
        report.entries.push(entry);
    }
    Ok((transformed, report))
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    /// Bottom and top 10% by key.
    DecileExtremes,
    /// Four groups cut at the quartiles.
    Quartiles,
}

impl FromStr for SplitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decile-extremes" => Ok(SplitScheme::DecileExtremes),
            "quartiles" => Ok(SplitScheme::Quartiles),
            _ => Err(Error::Config(format!("unknown split scheme `{s}`"))),
        }
    }
}

/// Labelled groups of row indices into the panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub groups: Vec<(String, Vec<usize>)>,
}

/// Sorts rows with a present key by value (stable on row order) and cuts
/// the order into groups.
pub fn split(panel: &Panel, key: Var, scheme: SplitScheme) -> Result<Split> {
    let mut order: Vec<(usize, f64)> = panel
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.value(key).filter(|v| v.is_finite()).map(|v| (i, v)))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    let n = order.len();
    let idx = |range: std::ops::Range<usize>| -> Vec<usize> {
        let mut v: Vec<usize> = order[range].iter().map(|p| p.0).collect();
        v.sort_unstable();
        v
    };
    let groups = match scheme {
        SplitScheme::DecileExtremes => {
            if n < 10 {
                return Err(Error::Validation(format!(
                    "{n} rows cannot form decile groups"
                )));
            }
            let k = n / 10;
            vec![
                ("bottom10".to_owned(), idx(0..k)),
                ("top10".to_owned(), idx(n - k..n)),
            ]
        }
        SplitScheme::Quartiles => {
            if n < 4 {
                return Err(Error::Validation(format!("{n} rows cannot form quartiles")));
            }
            (0..4)
                .map(|g| (format!("q{}", g + 1), idx(g * n / 4..(g + 1) * n / 4)))
                .collect()
        }
    };
    Ok(Split { groups })
}
