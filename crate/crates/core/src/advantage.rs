//! Revealed technological advantage, the binary advantage matrix, entry
//! events, and the per-firm / per-industry counts derived from them.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::corpus::CountCube;
use crate::error::{Error, Result};
use crate::par::*;
use crate::table::{fmt_f64, CsvSink};

/// Threshold at or above which a firm holds an advantage.
pub const RTA_THRESHOLD: f64 = 1.0;

/// Firm × technology RTA values for one year. Firms with no patents that
/// year are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct RtaSlice {
    pub year: i32,
    pub firms: Vec<String>,
    pub techs: Vec<String>,
    /// Row-major `firms × techs`.
    pub values: Vec<f64>,
}

impl RtaSlice {
    pub fn get(&self, firm: usize, tech: usize) -> f64 {
        self.values[firm * self.techs.len() + tech]
    }

    pub fn row(&self, firm: usize) -> &[f64] {
        let nt = self.techs.len();
        &self.values[firm * nt..(firm + 1) * nt]
    }

    pub fn firm_index(&self, firm: &str) -> Option<usize> {
        self.firms.binary_search_by(|f| f.as_str().cmp(firm)).ok()
    }

    pub fn write_csv(&self, out: &mut CsvSink) -> Result<()> {
        let year = self.year.to_string();
        for (i, f) in self.firms.iter().enumerate() {
            for (a, t) in self.techs.iter().enumerate() {
                let v = self.get(i, a);
                if v > 0.0 {
                    out.row([f.as_str(), t, &year, &fmt_f64(v)])?;
                }
            }
        }
        Ok(())
    }
}

/// RTA from a dense `firms × techs` count matrix (any integer width). Rows
/// with zero total are dropped. Each value is computed as
/// `(count · grand_total) / (row_total · column_total)` in one division, so
/// scaling every count by a constant leaves the result bit-identical.
pub fn rta_from_counts(
    year: i32,
    firms: &[String],
    techs: &[String],
    counts: &[u64],
) -> Result<RtaSlice> {
    let nt = techs.len();
    let row_tot: Vec<u64> = counts.chunks(nt.max(1)).map(|r| r.iter().sum()).collect();
    let mut col_tot = vec![0u64; nt];
    for row in counts.chunks(nt.max(1)) {
        for (c, &v) in col_tot.iter_mut().zip(row) {
            *c += v;
        }
    }
    let grand: u64 = row_tot.iter().sum();
    if grand == 0 {
        return Err(Error::Data(format!("no activity in year {year}")));
    }
    let kept: Vec<usize> = (0..firms.len()).filter(|&i| row_tot[i] > 0).collect();
    let mut values = vec![0.0; kept.len() * nt];
    values
        .par_chunks_mut(nt.max(1))
        .zip(kept.par_iter())
        .for_each(|(out, &i)| {
            let row = &counts[i * nt..(i + 1) * nt];
            for a in 0..nt {
                if row[a] > 0 {
                    out[a] =
                        (row[a] as f64 * grand as f64) / (row_tot[i] as f64 * col_tot[a] as f64);
                }
            }
        });
    Ok(RtaSlice {
        year,
        firms: kept.iter().map(|&i| firms[i].clone()).collect(),
        techs: techs.to_vec(),
        values,
    })
}

pub fn compute_rta(cube: &CountCube, year: i32) -> Result<RtaSlice> {
    let slice = cube
        .slice(year)
        .ok_or_else(|| Error::Data(format!("year {year} not in count cube")))?;
    let counts: Vec<u64> = slice.iter().map(|&c| c as u64).collect();
    rta_from_counts(year, cube.firms(), cube.techs(), &counts)
}

/// RTA on counts pooled over `years`; the slice is labelled with `label_year`.
pub fn compute_rta_pooled(cube: &CountCube, years: &[i32], label_year: i32) -> Result<RtaSlice> {
    let counts = cube.pooled(years.iter().copied());
    rta_from_counts(label_year, cube.firms(), cube.techs(), &counts)
        .map_err(|_| Error::Data(format!("no activity in years {years:?}")))
}

/// Binary firm × technology matrix: `true` where RTA ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvantageMatrix {
    pub firms: Vec<String>,
    pub techs: Vec<String>,
    /// Row-major `firms × techs`.
    pub cells: Vec<bool>,
}

impl AdvantageMatrix {
    pub fn from_rows(firms: Vec<String>, techs: Vec<String>, rows: &[Vec<bool>]) -> Self {
        let cells = rows
            .iter()
            .flat_map(|r| r.iter().copied())
            .collect::<Vec<_>>();
        assert_eq!(cells.len(), firms.len() * techs.len(), "shape mismatch");
        Self {
            firms,
            techs,
            cells,
        }
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn n_techs(&self) -> usize {
        self.techs.len()
    }

    pub fn get(&self, firm: usize, tech: usize) -> bool {
        self.cells[firm * self.techs.len() + tech]
    }

    pub fn row(&self, firm: usize) -> &[bool] {
        let nt = self.techs.len();
        &self.cells[firm * nt..(firm + 1) * nt]
    }

    pub fn firm_index(&self, firm: &str) -> Option<usize> {
        self.firms.iter().position(|f| f == firm)
    }

    pub fn tech_index(&self, tech: &str) -> Option<usize> {
        self.techs.iter().position(|t| t == tech)
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.n_firms())
            .map(|i| self.row(i).iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_techs()];
        for i in 0..self.n_firms() {
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o += b as usize;
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&b| b)
    }

    pub fn write_csv(&self, out: &mut CsvSink, year: i32) -> Result<()> {
        let year = year.to_string();
        for (i, f) in self.firms.iter().enumerate() {
            for (a, t) in self.techs.iter().enumerate() {
                if self.get(i, a) {
                    out.row([f.as_str(), t, &year, "1"])?;
                }
            }
        }
        Ok(())
    }
}

pub fn advantage_matrix(rta: &RtaSlice) -> AdvantageMatrix {
    AdvantageMatrix {
        firms: rta.firms.clone(),
        techs: rta.techs.clone(),
        cells: rta.values.iter().map(|&v| v >= RTA_THRESHOLD).collect(),
    }
}

/// Row sum of one firm's advantage row.
pub fn num_rta(adv: &AdvantageMatrix, firm: &str) -> Result<usize> {
    let i = adv
        .firm_index(firm)
        .ok_or_else(|| Error::Validation(format!("unknown firm `{firm}`")))?;
    Ok(adv.row(i).iter().filter(|&&b| b).count())
}

// ---------------------------------------------------------------------------
// Entry events

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryEvent {
    pub firm_id: String,
    pub tech_code: String,
    /// Year of the transition to RTA ≥ 1.
    pub event_year: i32,
}

/// Positions `k` in `series` where an entry occurs: `series[k-1] < 1` and
/// `series[k..=k+persistence] ≥ 1`. With `lead > 0` the event must also be
/// observable `lead` years earlier, i.e. `k ≥ lead`.
pub fn entry_positions(series: &[f64], lead: usize, persistence: usize) -> Vec<usize> {
    let start = lead.max(1);
    let mut out = Vec::new();
    if series.len() < persistence + 2 {
        return out;
    }
    for k in start..series.len() - persistence {
        if series[k - 1] < RTA_THRESHOLD
            && series[k..=k + persistence]
                .iter()
                .all(|&v| v >= RTA_THRESHOLD)
        {
            out.push(k);
        }
    }
    out
}

/// RTA values for every (firm, tech) of a cube across its year axis; years in
/// which a firm has no patents read as 0.
#[derive(Debug, Clone)]
pub struct RtaSeries {
    pub firms: Vec<String>,
    pub techs: Vec<String>,
    pub first_year: i32,
    pub n_years: usize,
    /// `firms × techs × years`, year fastest.
    values: Vec<f64>,
}

impl RtaSeries {
    pub fn from_slices(cube: &CountCube, slices: &[RtaSlice]) -> Self {
        let nf = cube.firms().len();
        let nt = cube.techs().len();
        let ny = cube.years().count();
        let mut values = vec![0.0; nf * nt * ny];
        for s in slices {
            let k = (s.year - cube.first_year()) as usize;
            for (row, firm) in s.firms.iter().enumerate() {
                let i = cube.firm_index(firm).expect("slice firm in cube");
                for a in 0..nt {
                    values[(i * nt + a) * ny + k] = s.get(row, a);
                }
            }
        }
        Self {
            firms: cube.firms().to_vec(),
            techs: cube.techs().to_vec(),
            first_year: cube.first_year(),
            n_years: ny,
            values,
        }
    }

    pub fn series(&self, firm: usize, tech: usize) -> &[f64] {
        let at = (firm * self.techs.len() + tech) * self.n_years;
        &self.values[at..at + self.n_years]
    }

    pub fn get(&self, firm: usize, tech: usize, year: i32) -> f64 {
        let k = year - self.first_year;
        if k < 0 || k as usize >= self.n_years {
            return 0.0;
        }
        self.series(firm, tech)[k as usize]
    }
}

/// All entry events in the series, ordered by firm, tech, year.
pub fn detect_entries(series: &RtaSeries, lead: usize, persistence: usize) -> Vec<EntryEvent> {
    let nt = series.techs.len();
    let per_firm: Vec<Vec<EntryEvent>> = (0..series.firms.len())
        .into_par_iter()
        .map(|i| {
            let mut ev = Vec::new();
            for a in 0..nt {
                for k in entry_positions(series.series(i, a), lead, persistence) {
                    ev.push(EntryEvent {
                        firm_id: series.firms[i].clone(),
                        tech_code: series.techs[a].clone(),
                        event_year: series.first_year + k as i32,
                    });
                }
            }
            ev
        })
        .collect();
    per_firm.into_iter().flatten().collect()
}

pub fn write_entries(path: &Path, events: &[EntryEvent]) -> Result<()> {
    let mut out = CsvSink::create(path, &["firm_id", "tech_code", "event_year"])?;
    for e in events {
        out.row([e.firm_id.as_str(), &e.tech_code, &e.event_year.to_string()])?;
    }
    out.finish()
}

// ---------------------------------------------------------------------------
// Competitors

/// Number of advantage-holding firms per (industry, technology) for one year.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetitorTable {
    pub techs: Vec<String>,
    counts: BTreeMap<String, Vec<usize>>,
    firm_industry: HashMap<String, String>,
    holds: HashMap<String, Vec<bool>>,
    include_self: bool,
}

impl CompetitorTable {
    pub fn industry_count(&self, industry: &str, tech: usize) -> usize {
        self.counts.get(industry).map(|v| v[tech]).unwrap_or(0)
    }

    /// Competitors a firm faces in `tech`: holders in its industry, minus
    /// itself when it holds the advantage and self-inclusion is off.
    /// Firms absent from the advantage matrix use `industry` directly.
    pub fn num_competitor(&self, firm: &str, industry: &str, tech: usize) -> usize {
        let n = self.industry_count(industry, tech);
        let own = !self.include_self
            && self.holds.get(firm).map(|row| row[tech]).unwrap_or(false)
            && self.firm_industry.get(firm).map(String::as_str) == Some(industry);
        n - own as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, usize)> {
        self.counts.iter().flat_map(move |(ind, v)| {
            v.iter()
                .enumerate()
                .map(move |(a, &c)| (ind.as_str(), self.techs[a].as_str(), c))
        })
    }
}

pub fn competitor_counts(
    adv: &AdvantageMatrix,
    industry_of: &HashMap<String, String>,
    include_self: bool,
) -> Result<CompetitorTable> {
    let missing: Vec<&str> = adv
        .firms
        .iter()
        .filter(|f| !industry_of.contains_key(f.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "firms without an industry: {}",
            missing.join(", ")
        )));
    }
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut holds = HashMap::new();
    let mut firm_industry = HashMap::new();
    for (i, f) in adv.firms.iter().enumerate() {
        let ind = &industry_of[f];
        let slot = counts
            .entry(ind.clone())
            .or_insert_with(|| vec![0; adv.n_techs()]);
        for (c, &b) in slot.iter_mut().zip(adv.row(i)) {
            *c += b as usize;
        }
        holds.insert(f.clone(), adv.row(i).to_vec());
        firm_industry.insert(f.clone(), ind.clone());
    }
    Ok(CompetitorTable {
        techs: adv.techs.clone(),
        counts,
        firm_industry,
        holds,
        include_self,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    /// Literal evaluation of the share-of-shares ratio.
    fn rta_oracle(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
        let total: u64 = counts.iter().flatten().sum();
        let nt = counts[0].len();
        counts
            .iter()
            .map(|row| {
                let rt: u64 = row.iter().sum();
                (0..nt)
                    .map(|a| {
                        let ct: u64 = counts.iter().map(|r| r[a]).sum();
                        if row[a] == 0 {
                            0.0
                        } else {
                            (row[a] as f64 / rt as f64) / (ct as f64 / total as f64)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_cell_is_one() {
        let r = rta_from_counts(2010, &s(&["A"]), &s(&["T"]), &[5]).unwrap();
        assert_eq!(r.values, vec![1.0]);
    }

    #[test]
    fn diagonal_counts() {
        let counts = vec![vec![4, 0], vec![0, 4]];
        let r = rta_from_counts(2010, &s(&["A", "B"]), &s(&["X", "Y"]), &[4, 0, 0, 4]).unwrap();
        assert_eq!(r.values, vec![2.0, 0.0, 0.0, 2.0]);
        let oracle = rta_oracle(&counts);
        assert_eq!(oracle, vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
    }

    #[test]
    fn equal_counts_give_unit_rta() {
        let r = rta_from_counts(2010, &s(&["A", "B", "C"]), &s(&["X", "Y"]), &[3; 6]).unwrap();
        assert!(r.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_year_errors() {
        let err = rta_from_counts(2010, &s(&["A"]), &s(&["X"]), &[0]).unwrap_err();
        assert!(err.to_string().contains("no activity"));
    }

    #[test]
    fn inactive_firms_are_omitted() {
        let r = rta_from_counts(2010, &s(&["A", "B"]), &s(&["X", "Y"]), &[0, 0, 1, 2]).unwrap();
        assert_eq!(r.firms, s(&["B"]));
    }

    #[test]
    fn threshold_is_inclusive() {
        let rta = RtaSlice {
            year: 2010,
            firms: s(&["A"]),
            techs: s(&["X", "Y", "Z"]),
            values: vec![1.0, 0.999, 3.0],
        };
        assert_eq!(advantage_matrix(&rta).cells, vec![true, false, true]);
    }

    #[test]
    fn num_rta_counts_row() {
        let adv = AdvantageMatrix::from_rows(
            s(&["A", "B"]),
            s(&["W", "X", "Y", "Z"]),
            &[vec![false; 4], vec![true, false, true, true]],
        );
        assert_eq!(num_rta(&adv, "A").unwrap(), 0);
        assert_eq!(num_rta(&adv, "B").unwrap(), 3);
        assert!(num_rta(&adv, "C").is_err());
    }

    #[test]
    fn entry_rule_examples() {
        assert_eq!(entry_positions(&[0.5, 1.2, 1.3, 1.1], 0, 2), vec![1]);
        assert!(entry_positions(&[0.5, 1.2, 0.9, 1.1], 0, 2).is_empty());
        assert_eq!(entry_positions(&[0.5, 1.0, 1.0, 1.0], 0, 2), vec![1]);
        assert!(entry_positions(&[1.0, 1.2, 1.3, 1.1], 0, 2).is_empty());
        // no full forward window
        assert!(entry_positions(&[0.5, 1.2, 1.3], 0, 2).is_empty());
        // lead requires the observation year to exist
        assert!(entry_positions(&[0.5, 1.2, 1.3, 1.1], 2, 2).is_empty());
        assert_eq!(entry_positions(&[0.1, 0.5, 1.2, 1.3, 1.1], 2, 2), vec![2]);
    }

    #[test]
    fn competitors_exclude_self() {
        let adv = AdvantageMatrix::from_rows(
            s(&["F1", "F2", "F3"]),
            s(&["A", "B"]),
            &[vec![true, false], vec![true, true], vec![true, false]],
        );
        let ind: HashMap<String, String> = [("F1", "I1"), ("F2", "I1"), ("F3", "I2")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let table = competitor_counts(&adv, &ind, false).unwrap();
        assert_eq!(table.num_competitor("F1", "I1", 0), 1);
        assert_eq!(table.num_competitor("F1", "I1", 1), 1);
        assert_eq!(table.num_competitor("F3", "I2", 0), 0);
        assert_eq!(table.num_competitor("F3", "I2", 1), 0);
        let incl = competitor_counts(&adv, &ind, true).unwrap();
        assert_eq!(incl.num_competitor("F1", "I1", 0), 2);

        let mut partial = ind.clone();
        partial.remove("F2");
        let err = competitor_counts(&adv, &partial, false).unwrap_err();
        assert!(err.to_string().contains("F2"));
    }
}
