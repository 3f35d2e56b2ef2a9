//! Input tables and the firm × technology × year count cube.
//!
//! Patents are merged into families before counting: every family contributes
//! one incidence to each distinct (truncated) CPC code in the union of its
//! members' codes, at the earliest application year among its members.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{cell, CsvSink, RawTable};

/// Granularity at which CPC codes are treated as technologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "LevelRepr", into = "LevelRepr")]
pub enum CpcLevel {
    /// Three characters, e.g. `G06`.
    Class,
    /// Four characters, e.g. `G06N`.
    #[default]
    Subclass,
    /// The full normalized code, e.g. `G06N20/00`.
    Full,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LevelRepr {
    Int(u32),
    Str(String),
}

impl TryFrom<LevelRepr> for CpcLevel {
    type Error = String;
    fn try_from(v: LevelRepr) -> std::result::Result<Self, String> {
        match v {
            LevelRepr::Int(n) => n.to_string().parse(),
            LevelRepr::Str(s) => s.parse(),
        }
    }
}

impl From<CpcLevel> for LevelRepr {
    fn from(l: CpcLevel) -> Self {
        match l {
            CpcLevel::Class => LevelRepr::Int(3),
            CpcLevel::Subclass => LevelRepr::Int(4),
            CpcLevel::Full => LevelRepr::Str("full".into()),
        }
    }
}

impl FromStr for CpcLevel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "3" | "class" => Ok(CpcLevel::Class),
            "4" | "subclass" => Ok(CpcLevel::Subclass),
            "full" => Ok(CpcLevel::Full),
            other => Err(format!(
                "unknown CPC level `{other}` (expected 3, 4 or full)"
            )),
        }
    }
}

impl fmt::Display for CpcLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CpcLevel::Class => f.write_str("3"),
            CpcLevel::Subclass => f.write_str("4"),
            CpcLevel::Full => f.write_str("full"),
        }
    }
}

/// Uppercases and strips whitespace, so `g06n 20/00` and `G06N20/00` agree.
pub fn normalize_cpc(code: &str) -> String {
    code.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

pub fn truncate_cpc(code: &str, level: CpcLevel) -> String {
    let code = normalize_cpc(code);
    let keep = match level {
        CpcLevel::Class => 3,
        CpcLevel::Subclass => 4,
        CpcLevel::Full => return code,
    };
    code.chars().take(keep).collect()
}

// ---------------------------------------------------------------------------
// Schema configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatentColumns {
    pub patent_id: String,
    pub family_id: String,
    pub firm_id: String,
    pub year: String,
    pub cpc_codes: String,
    pub separator: String,
}

impl Default for PatentColumns {
    fn default() -> Self {
        Self {
            patent_id: "patent_id".into(),
            family_id: "family_id".into(),
            firm_id: "firm_id".into(),
            year: "year".into(),
            cpc_codes: "cpc_codes".into(),
            separator: "|".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmColumns {
    pub firm_id: String,
    pub founding_year: String,
    pub industry_code: String,
    pub year: String,
    pub employees: String,
    pub profit_ratio: String,
    pub debt_ratio: String,
}

impl Default for FirmColumns {
    fn default() -> Self {
        Self {
            firm_id: "firm_id".into(),
            founding_year: "founding_year".into(),
            industry_code: "industry_code".into(),
            year: "year".into(),
            employees: "employees".into(),
            profit_ratio: "profit_ratio".into(),
            debt_ratio: "debt_ratio".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportColumns {
    pub project_id: String,
    pub firm_id: String,
    pub contribution_share: String,
    pub year: String,
    pub cpc_codes: String,
    pub separator: String,
}

impl Default for SupportColumns {
    fn default() -> Self {
        Self {
            project_id: "project_id".into(),
            firm_id: "firm_id".into(),
            contribution_share: "contribution_share".into(),
            year: "year".into(),
            cpc_codes: "cpc_codes".into(),
            separator: "|".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxonomyColumns {
    pub cpc_prefix: String,
    pub category: String,
}

impl Default for TaxonomyColumns {
    fn default() -> Self {
        Self {
            cpc_prefix: "cpc_prefix".into(),
            category: "category".into(),
        }
    }
}

/// Column bindings for every input table, so exports with different headers
/// can be mapped without code changes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub patents: PatentColumns,
    pub firms: FirmColumns,
    pub support: SupportColumns,
    pub taxonomy: TaxonomyColumns,
}

// ---------------------------------------------------------------------------
// Records and rejects

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub row_number: usize,
    pub reason: String,
}

/// Records that passed validation plus the rows that did not.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

pub fn write_rejects(path: &Path, rejects: &[(String, Reject)]) -> Result<()> {
    let mut out = CsvSink::create(path, &["table", "row_number", "reason"])?;
    for (table, r) in rejects {
        out.row([table.as_str(), &r.row_number.to_string(), &r.reason])?;
    }
    out.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub patent_id: String,
    pub family_id: String,
    pub firm_id: String,
    pub year: i32,
    pub cpc_codes: Vec<String>,
}

fn split_codes(raw: &str, sep: &str) -> Vec<String> {
    let sep = if sep.is_empty() { "|" } else { sep };
    raw.split(sep)
        .map(normalize_cpc)
        .filter(|c| !c.is_empty())
        .collect()
}

/// Loads patent rows. `years` bounds the corpus; rows outside it are rejected.
pub fn load_patents(
    path: &Path,
    schema: &SchemaConfig,
    years: Option<(i32, i32)>,
) -> Result<Loaded<PatentRecord>> {
    let table = RawTable::read(path)?;
    let cols = &schema.patents;
    let i_pid = table.column(&cols.patent_id)?;
    let i_fam = table.column(&cols.family_id)?;
    let i_firm = table.column(&cols.firm_id)?;
    let i_year = table.column(&cols.year)?;
    let i_cpc = table.column(&cols.cpc_codes)?;

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(table.rows.len());
    let mut rejects = Vec::new();
    for (row_number, row) in &table.rows {
        let reject = |reason: &str| Reject {
            row_number: *row_number,
            reason: reason.to_owned(),
        };
        let patent_id = cell(row, i_pid);
        let firm_id = cell(row, i_firm);
        if patent_id.is_empty() {
            rejects.push(reject("missing patent_id"));
            continue;
        }
        if firm_id.is_empty() {
            rejects.push(reject("missing firm_id"));
            continue;
        }
        let Ok(year) = cell(row, i_year).parse::<i32>() else {
            rejects.push(reject("unparsable year"));
            continue;
        };
        if let Some((lo, hi)) = years {
            if year < lo || year > hi {
                rejects.push(reject("year out of range"));
                continue;
            }
        }
        let cpc_codes = split_codes(cell(row, i_cpc), &cols.separator);
        if cpc_codes.is_empty() {
            rejects.push(reject("empty CPC"));
            continue;
        }
        if !seen.insert(patent_id.to_owned()) {
            rejects.push(reject("duplicate"));
            continue;
        }
        let family_id = match cell(row, i_fam) {
            "" => patent_id.to_owned(),
            f => f.to_owned(),
        };
        records.push(PatentRecord {
            patent_id: patent_id.to_owned(),
            family_id,
            firm_id: firm_id.to_owned(),
            year,
            cpc_codes,
        });
    }
    Ok(Loaded { records, rejects })
}

/// One patent family as held by one firm: the union of its members' codes,
/// dated at the earliest member application year.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyTech {
    pub family_id: String,
    pub firm_id: String,
    pub year: i32,
    pub codes: BTreeSet<String>,
}

impl FamilyTech {
    pub fn as_record(&self) -> PatentRecord {
        PatentRecord {
            patent_id: self.family_id.clone(),
            family_id: self.family_id.clone(),
            firm_id: self.firm_id.clone(),
            year: self.year,
            cpc_codes: self.codes.iter().cloned().collect(),
        }
    }
}

pub fn merge_families(records: &[PatentRecord]) -> Vec<FamilyTech> {
    let mut merged: BTreeMap<(&str, &str), FamilyTech> = BTreeMap::new();
    for r in records {
        let entry = merged
            .entry((r.family_id.as_str(), r.firm_id.as_str()))
            .or_insert_with(|| FamilyTech {
                family_id: r.family_id.clone(),
                firm_id: r.firm_id.clone(),
                year: r.year,
                codes: BTreeSet::new(),
            });
        entry.year = entry.year.min(r.year);
        entry
            .codes
            .extend(r.cpc_codes.iter().map(|c| normalize_cpc(c)));
    }
    merged.into_values().collect()
}

// ---------------------------------------------------------------------------
// Count cube

/// Patent-family counts per (firm, technology, year), stored densely as
/// `years × firms × techs` in row-major order. Firms and technologies are
/// sorted; the year axis is contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountCube {
    firms: Vec<String>,
    techs: Vec<String>,
    first_year: i32,
    n_years: usize,
    counts: Vec<u32>,
}

impl CountCube {
    /// Builds a cube from `(firm, tech, year, count)` triplets. Repeated keys
    /// are summed. When `years` is `None` the span of the triplets is used.
    pub fn from_triplets<'a, I>(triplets: I, years: Option<(i32, i32)>) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, i32, u32)>,
    {
        let triplets: Vec<_> = triplets.into_iter().filter(|t| t.3 > 0).collect();
        let firms: Vec<String> = triplets
            .iter()
            .map(|t| t.0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        let techs: Vec<String> = triplets
            .iter()
            .map(|t| t.1)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        let (lo, hi) = match years {
            Some(r) => r,
            None => {
                let lo = triplets.iter().map(|t| t.2).min();
                let hi = triplets.iter().map(|t| t.2).max();
                match (lo, hi) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    _ => return Err(Error::Data("count cube has no patents".into())),
                }
            }
        };
        if hi < lo {
            return Err(Error::Config(format!("empty year range {lo}..={hi}")));
        }
        let n_years = (hi - lo + 1) as usize;
        let fidx: HashMap<&str, usize> = firms
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_str(), i))
            .collect();
        let tidx: HashMap<&str, usize> = techs
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut counts = vec![0u32; n_years * firms.len() * techs.len()];
        for (f, t, y, c) in triplets {
            if y < lo || y > hi {
                return Err(Error::Data(format!(
                    "count for year {y} outside {lo}..={hi}"
                )));
            }
            let at = ((y - lo) as usize * firms.len() + fidx[f]) * techs.len() + tidx[t];
            counts[at] += c;
        }
        Ok(Self {
            firms,
            techs,
            first_year: lo,
            n_years,
            counts,
        })
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn techs(&self) -> &[String] {
        &self.techs
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + Clone {
        let lo = self.first_year;
        (0..self.n_years as i32).map(move |k| lo + k)
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }

    pub fn has_year(&self, year: i32) -> bool {
        year >= self.first_year && year <= self.last_year()
    }

    pub fn firm_index(&self, firm: &str) -> Option<usize> {
        self.firms.binary_search_by(|f| f.as_str().cmp(firm)).ok()
    }

    pub fn tech_index(&self, tech: &str) -> Option<usize> {
        self.techs.binary_search_by(|t| t.as_str().cmp(tech)).ok()
    }

    /// Row-major `firms × techs` counts for one year.
    pub fn slice(&self, year: i32) -> Option<&[u32]> {
        if !self.has_year(year) {
            return None;
        }
        let size = self.firms.len() * self.techs.len();
        let k = (year - self.first_year) as usize;
        Some(&self.counts[k * size..(k + 1) * size])
    }

    pub fn count(&self, firm: usize, tech: usize, year: i32) -> u32 {
        self.slice(year)
            .map(|s| s[firm * self.techs.len() + tech])
            .unwrap_or(0)
    }

    /// Element-wise sum of the slices for `years` (years outside the cube
    /// contribute nothing).
    pub fn pooled(&self, years: impl IntoIterator<Item = i32>) -> Vec<u64> {
        let mut out = vec![0u64; self.firms.len() * self.techs.len()];
        for y in years {
            if let Some(s) = self.slice(y) {
                for (o, &c) in out.iter_mut().zip(s) {
                    *o += c as u64;
                }
            }
        }
        out
    }

    /// Non-zero cells as `(firm, tech, year, count)`, ordered by year, firm, tech.
    pub fn triplets(&self) -> impl Iterator<Item = (&str, &str, i32, u32)> + '_ {
        let nt = self.techs.len();
        let nf = self.firms.len();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| {
                let tech = i % nt;
                let firm = (i / nt) % nf;
                let year = self.first_year + (i / (nt * nf)) as i32;
                (
                    self.firms[firm].as_str(),
                    self.techs[tech].as_str(),
                    year,
                    c,
                )
            })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Same cube with every count multiplied by `k`.
    pub fn scaled(&self, k: u32) -> Self {
        Self {
            counts: self.counts.iter().map(|&c| c * k).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvSink::create(path, &["firm_id", "tech_code", "year", "count"])?;
        for (f, t, y, c) in self.triplets() {
            out.row([f, t, &y.to_string(), &c.to_string()])?;
        }
        out.finish()
    }
}

/// Counts distinct family entries per (firm, truncated code, year).
pub fn build_counts(families: &[FamilyTech], level: CpcLevel) -> Result<CountCube> {
    build_counts_in(families, level, None)
}

/// As [`build_counts`] with an explicit year axis.
pub fn build_counts_in(
    families: &[FamilyTech],
    level: CpcLevel,
    years: Option<(i32, i32)>,
) -> Result<CountCube> {
    let mut acc: BTreeMap<(&str, String, i32), u32> = BTreeMap::new();
    for fam in families {
        let truncated: BTreeSet<String> =
            fam.codes.iter().map(|c| truncate_cpc(c, level)).collect();
        for code in truncated {
            *acc.entry((fam.firm_id.as_str(), code, fam.year))
                .or_default() += 1;
        }
    }
    CountCube::from_triplets(
        acc.iter().map(|((f, t, y), c)| (*f, t.as_str(), *y, *c)),
        years,
    )
}

// ---------------------------------------------------------------------------
// Firms

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FirmYear {
    pub employees: Option<f64>,
    pub profit_ratio: Option<f64>,
    pub debt_ratio: Option<f64>,
}

impl FirmYear {
    pub fn is_complete(&self) -> bool {
        self.employees.is_some() && self.profit_ratio.is_some() && self.debt_ratio.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: String,
    pub founding_year: i32,
    pub industry_code: String,
    pub years: BTreeMap<i32, FirmYear>,
}

fn parse_opt(raw: &str) -> std::result::Result<Option<f64>, ()> {
    match raw.trim() {
        "" | "NA" | "na" | "NaN" | "nan" => Ok(None),
        s => s.parse::<f64>().map(Some).map_err(|_| ()),
    }
}

/// Loads firm-year rows and groups them per firm, ordered by firm id.
pub fn load_firms(path: &Path, schema: &SchemaConfig) -> Result<Loaded<FirmRecord>> {
    let table = RawTable::read(path)?;
    let cols = &schema.firms;
    let i_firm = table.column(&cols.firm_id)?;
    let i_found = table.column(&cols.founding_year)?;
    let i_ind = table.column(&cols.industry_code)?;
    let i_year = table.column(&cols.year)?;
    let i_emp = table.column(&cols.employees)?;
    let i_profit = table.column(&cols.profit_ratio)?;
    let i_debt = table.column(&cols.debt_ratio)?;

    let mut firms: BTreeMap<String, FirmRecord> = BTreeMap::new();
    let mut rejects = Vec::new();
    for (row_number, row) in &table.rows {
        let reject = |reason: &str| Reject {
            row_number: *row_number,
            reason: reason.to_owned(),
        };
        let firm_id = cell(row, i_firm);
        if firm_id.is_empty() {
            rejects.push(reject("missing firm_id"));
            continue;
        }
        let (Ok(founding_year), Ok(year)) = (
            cell(row, i_found).parse::<i32>(),
            cell(row, i_year).parse::<i32>(),
        ) else {
            rejects.push(reject("unparsable year"));
            continue;
        };
        if founding_year > year {
            rejects.push(reject("founding year after observation year"));
            continue;
        }
        let parsed = (
            parse_opt(cell(row, i_emp)),
            parse_opt(cell(row, i_profit)),
            parse_opt(cell(row, i_debt)),
        );
        let (Ok(employees), Ok(profit_ratio), Ok(debt_ratio)) = parsed else {
            rejects.push(reject("unparsable financial field"));
            continue;
        };
        if employees.is_some_and(|e| e < 0.0) {
            rejects.push(reject("negative employees"));
            continue;
        }
        let industry_code = cell(row, i_ind).to_owned();
        let rec = firms
            .entry(firm_id.to_owned())
            .or_insert_with(|| FirmRecord {
                firm_id: firm_id.to_owned(),
                founding_year,
                industry_code: industry_code.clone(),
                years: BTreeMap::new(),
            });
        if rec.founding_year != founding_year || rec.industry_code != industry_code {
            rejects.push(reject("inconsistent firm attributes"));
            continue;
        }
        if rec.years.contains_key(&year) {
            rejects.push(reject("duplicate"));
            continue;
        }
        rec.years.insert(
            year,
            FirmYear {
                employees,
                profit_ratio,
                debt_ratio,
            },
        );
    }
    Ok(Loaded {
        records: firms.into_values().collect(),
        rejects,
    })
}

// ---------------------------------------------------------------------------
// Government support

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub project_id: String,
    pub firm_id: String,
    pub contribution_share: f64,
    pub year: i32,
    pub cpc_codes: Vec<String>,
}

pub fn load_support(path: &Path, schema: &SchemaConfig) -> Result<Loaded<SupportRecord>> {
    let table = RawTable::read(path)?;
    let cols = &schema.support;
    let i_proj = table.column(&cols.project_id)?;
    let i_firm = table.column(&cols.firm_id)?;
    let i_share = table.column(&cols.contribution_share)?;
    let i_year = table.column(&cols.year)?;
    let i_cpc = table.column(&cols.cpc_codes)?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (row_number, row) in &table.rows {
        let reject = |reason: &str| Reject {
            row_number: *row_number,
            reason: reason.to_owned(),
        };
        let Ok(share) = cell(row, i_share).parse::<f64>() else {
            rejects.push(reject("unparsable contribution_share"));
            continue;
        };
        if !(0.0..=1.0).contains(&share) {
            rejects.push(reject("contribution_share outside [0,1]"));
            continue;
        }
        let Ok(year) = cell(row, i_year).parse::<i32>() else {
            rejects.push(reject("unparsable year"));
            continue;
        };
        let firm_id = cell(row, i_firm);
        if firm_id.is_empty() {
            rejects.push(reject("missing firm_id"));
            continue;
        }
        let cpc_codes = split_codes(cell(row, i_cpc), &cols.separator);
        if cpc_codes.is_empty() {
            rejects.push(reject("empty CPC"));
            continue;
        }
        records.push(SupportRecord {
            project_id: cell(row, i_proj).to_owned(),
            firm_id: firm_id.to_owned(),
            contribution_share: share,
            year,
            cpc_codes,
        });
    }
    Ok(Loaded { records, rejects })
}

/// Set of (firm, technology, year) cells that received direct support.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GovFlags {
    cells: BTreeSet<(String, String, i32)>,
}

/// Minimum contribution share (exclusive) for a project to count as the
/// firm's own.
pub const SUPPORT_SHARE_THRESHOLD: f64 = 0.5;

impl GovFlags {
    /// Flags every (firm, truncated code) of a project whose share is strictly
    /// above one half, for `persistence` years starting at the project year.
    pub fn from_records(records: &[SupportRecord], level: CpcLevel, persistence: u32) -> Self {
        let mut cells = BTreeSet::new();
        for r in records
            .iter()
            .filter(|r| r.contribution_share > SUPPORT_SHARE_THRESHOLD)
        {
            for code in &r.cpc_codes {
                let tech = truncate_cpc(code, level);
                for k in 0..persistence.max(1) as i32 {
                    cells.insert((r.firm_id.clone(), tech.clone(), r.year + k));
                }
            }
        }
        Self { cells }
    }

    pub fn get(&self, firm: &str, tech: &str, year: i32) -> bool {
        // BTreeSet lookup on a borrowed tuple needs owned keys.
        self.cells
            .contains(&(firm.to_owned(), tech.to_owned(), year))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, i32)> {
        self.cells
            .iter()
            .map(|(f, t, y)| (f.as_str(), t.as_str(), *y))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvSink::create(path, &["firm_id", "tech_code", "year", "gov"])?;
        for (f, t, y) in self.iter() {
            out.row([f, t, &y.to_string(), "1"])?;
        }
        out.finish()
    }
}

/// Loads support records and derives the flag table in one step.
pub fn load_gov_support(
    path: &Path,
    schema: &SchemaConfig,
    level: CpcLevel,
    persistence: u32,
) -> Result<(GovFlags, Vec<Reject>)> {
    let loaded = load_support(path, schema)?;
    Ok((
        GovFlags::from_records(&loaded.records, level, persistence),
        loaded.rejects,
    ))
}

// ---------------------------------------------------------------------------
// Industry 4.0 taxonomy

/// The ten Industry 4.0 technology groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    AdditiveManufacturing,
    ArtificialIntelligence,
    AugmentedReality,
    AutonomousRobots,
    AutonomousVehicles,
    CloudComputing,
    Cybersecurity,
    QuantumComputers,
    MachineTools,
    SystemIntegration,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::AdditiveManufacturing,
        Category::ArtificialIntelligence,
        Category::AugmentedReality,
        Category::AutonomousRobots,
        Category::AutonomousVehicles,
        Category::CloudComputing,
        Category::Cybersecurity,
        Category::QuantumComputers,
        Category::MachineTools,
        Category::SystemIntegration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::AdditiveManufacturing => "additive_manufacturing",
            Category::ArtificialIntelligence => "artificial_intelligence",
            Category::AugmentedReality => "augmented_reality",
            Category::AutonomousRobots => "autonomous_robots",
            Category::AutonomousVehicles => "autonomous_vehicles",
            Category::CloudComputing => "cloud_computing",
            Category::Cybersecurity => "cybersecurity",
            Category::QuantumComputers => "quantum_computers",
            Category::MachineTools => "machine_tools",
            Category::SystemIntegration => "system_integration",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        Category::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| format!("unknown I4T category `{s}`"))
    }
}

/// CPC-prefix → category map. Lookups use the longest matching prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct I4TMap {
    prefixes: BTreeMap<String, Category>,
}

impl I4TMap {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Category)>,
        S: AsRef<str>,
    {
        let mut prefixes = BTreeMap::new();
        for (p, c) in entries {
            let p = normalize_cpc(p.as_ref());
            if p.is_empty() {
                return Err(Error::Validation("empty taxonomy prefix".into()));
            }
            match prefixes.insert(p.clone(), c) {
                Some(prev) if prev != c => {
                    return Err(Error::Validation(format!(
                        "taxonomy prefix `{p}` maps to both {prev} and {c}"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { prefixes })
    }

    pub fn classify(&self, code: &str) -> Option<Category> {
        let code = normalize_cpc(code);
        (1..=code.len())
            .rev()
            .filter(|&n| code.is_char_boundary(n))
            .find_map(|n| self.prefixes.get(&code[..n]).copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Category)> {
        self.prefixes.iter().map(|(p, c)| (p.as_str(), *c))
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    /// Partitions `codes` into categories; `None` collects the non-I4T codes.
    pub fn partition<'a>(
        &self,
        codes: impl IntoIterator<Item = &'a str>,
    ) -> BTreeMap<Option<Category>, Vec<&'a str>> {
        let mut out: BTreeMap<Option<Category>, Vec<&'a str>> = BTreeMap::new();
        for code in codes {
            out.entry(self.classify(code)).or_default().push(code);
        }
        out
    }
}

pub fn load_taxonomy(path: &Path, schema: &SchemaConfig) -> Result<(I4TMap, Vec<Reject>)> {
    let table = RawTable::read(path)?;
    let i_prefix = table.column(&schema.taxonomy.cpc_prefix)?;
    let i_cat = table.column(&schema.taxonomy.category)?;
    let mut entries = Vec::new();
    let mut rejects = Vec::new();
    for (row_number, row) in &table.rows {
        match cell(row, i_cat).parse::<Category>() {
            Ok(c) if !cell(row, i_prefix).is_empty() => {
                entries.push((cell(row, i_prefix).to_owned(), c))
            }
            Ok(_) => rejects.push(Reject {
                row_number: *row_number,
                reason: "empty prefix".into(),
            }),
            Err(e) => rejects.push(Reject {
                row_number: *row_number,
                reason: e,
            }),
        }
    }
    Ok((I4TMap::new(entries)?, rejects))
}
