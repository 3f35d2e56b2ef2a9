//! Synthetic corpora with planted entry dynamics, and brute-force oracles.
//!
//! Holdings evolve year by year as a set of "in" cells per firm. Every held
//! cell of a firm-year receives the same family count and a residual firm
//! (without financials, so it never enters the panel) tops every technology
//! column up to a common total. Under that balance a firm's RTA is
//! `n_techs / n_held` on held cells and 0 elsewhere, so the advantage matrix
//! reproduces the simulated holdings exactly.

pub mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::advantage::{advantage_matrix, rta_from_counts};
use crate::complexity::{mor, tci_transform, TciConfig, DEFAULT_ITERATIONS};
use crate::corpus::Category;
use crate::error::{Error, Result};
use crate::relatedness::{density_of_row, proximity};
use crate::table::{fmt_f64, CsvSink};

/// Identifier of the residual firm.
pub const RESIDUAL_FIRM: &str = "FZZZZ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub n_firms: usize,
    pub n_techs: usize,
    pub first_year: i32,
    pub n_years: usize,
    pub seed: u64,
    pub n_industries: usize,
    /// Initial holding probability is
    /// `logistic(capability_intercept + capability_slope·(skill − difficulty))`.
    pub capability_intercept: f64,
    pub capability_slope: f64,
    pub skill_sd: f64,
    pub difficulty_sd: f64,
    /// Entry probability is `logistic(base + b_omega·ω + b_tci·tci + b_gov·gov)`.
    pub base: f64,
    pub b_omega: f64,
    pub b_tci: f64,
    pub b_gov: f64,
    /// When set, the gov term applies only to cells with ω below this value.
    pub gov_max_omega: Option<f64>,
    /// Per-cell, per-year probability of a qualifying support project.
    pub gov_rate: f64,
    /// Years a project flags its cell, counted from its start year.
    pub gov_persistence: u32,
    /// Yearly probability that a held cell outside its entry window is lost.
    pub exit_rate: f64,
    /// Largest per-cell family count in a firm-year.
    pub max_cell_count: u32,
    /// Share of technologies that belong to an I4T category.
    pub i4t_share: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_firms: 200,
            n_techs: 60,
            first_year: 2007,
            n_years: 12,
            seed: 7,
            n_industries: 8,
            capability_intercept: -2.0,
            capability_slope: 1.5,
            skill_sd: 1.0,
            difficulty_sd: 1.0,
            base: -4.5,
            b_omega: 4.0,
            b_tci: 0.1,
            b_gov: 1.0,
            gov_max_omega: None,
            gov_rate: 0.02,
            gov_persistence: 1,
            exit_rate: 0.05,
            max_cell_count: 3,
            i4t_share: 0.4,
        }
    }
}

/// Largest attainable entry probability before the generator refuses.
const SATURATION: f64 = 0.9;

impl GeneratorParams {
    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }

    /// Checks ranges; returns warnings for degenerate but valid designs.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |m: &str| Err(Error::Validation(m.to_owned()));
        if self.n_firms < 2 || self.n_techs < 2 {
            return bad("need at least 2 firms and 2 technologies");
        }
        if self.n_years < 5 {
            return bad("need at least 5 years for the entry outcome window");
        }
        if self.n_industries == 0 {
            return bad("need at least one industry");
        }
        if self.max_cell_count == 0 {
            return bad("max_cell_count must be positive");
        }
        for (name, p) in [
            ("gov_rate", self.gov_rate),
            ("exit_rate", self.exit_rate),
            ("i4t_share", self.i4t_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} must lie in [0,1]")));
            }
        }
        let coefs = [
            self.capability_intercept,
            self.capability_slope,
            self.skill_sd,
            self.difficulty_sd,
            self.base,
            self.b_omega,
            self.b_tci,
            self.b_gov,
        ];
        if coefs.iter().any(|c| !c.is_finite()) || self.skill_sd < 0.0 || self.difficulty_sd < 0.0 {
            return bad("non-finite or negative generator coefficient");
        }
        let tci_max = (1.0 + TciConfig::default().scale).ln();
        let top = self.base
            + self.b_omega.max(0.0)
            + (self.b_tci * tci_max).max(0.0)
            + self.b_gov.max(0.0);
        if logistic(top) > SATURATION {
            return Err(Error::Validation(format!(
                "entry probability saturates: up to {:.3}",
                logistic(top)
            )));
        }
        let mut warnings = Vec::new();
        if self.b_gov != 0.0 && self.gov_rate == 0.0 {
            warnings.push(
                "b_gov is set but gov_rate is 0: the gov coefficient is not identified".into(),
            );
        }
        Ok(warnings)
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPatent {
    pub patent_id: String,
    pub family_id: String,
    pub firm_id: String,
    pub year: i32,
    pub cpc_codes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFirmYear {
    pub firm_id: String,
    pub founding_year: i32,
    pub industry_code: String,
    pub year: i32,
    pub employees: Option<f64>,
    pub profit_ratio: Option<f64>,
    pub debt_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSupport {
    pub project_id: String,
    pub firm_id: String,
    pub contribution_share: f64,
    pub year: i32,
    pub cpc_codes: Vec<String>,
}

/// Planted entry probability for a candidate (firm, tech, year).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub firm_id: String,
    pub tech_code: String,
    pub year: i32,
    pub p_entry: f64,
    pub converted: bool,
    pub omega: f64,
    pub gov: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub params: GeneratorParams,
    pub techs: Vec<String>,
    pub patents: Vec<SynthPatent>,
    pub firms: Vec<SynthFirmYear>,
    pub support: Vec<SynthSupport>,
    pub taxonomy: Vec<(String, Category)>,
    /// Candidate cells of every year with a complete outcome window.
    pub truth: Vec<TruthRow>,
    pub warnings: Vec<String>,
}

/// Four-character subclass code for technology `k`.
pub fn tech_code(k: usize) -> String {
    const SECTIONS: &[u8] = b"ABCDEFGH";
    let section = SECTIONS[k % 8] as char;
    let class = 1 + (k / 8) % 99;
    let letter = (b'A' + ((k / (8 * 99)) % 26) as u8) as char;
    format!("{section}{class:02}{letter}")
}

pub fn firm_code(i: usize) -> String {
    format!("F{i:05}")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cell {
    Out,
    /// Converted last year: still out, held from next year on.
    Pending,
    /// Held; cannot be lost before `lock_until`.
    In {
        lock_until: i32,
    },
}

pub fn gen_corpus(params: &GeneratorParams) -> Result<SynthCorpus> {
    let warnings = params.validate()?;
    let p = params;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let nf = p.n_firms;
    let nt = p.n_techs;
    let techs: Vec<String> = (0..nt).map(tech_code).collect();
    let mut order: Vec<usize> = (0..nt).collect();
    order.sort_by(|&a, &b| techs[a].cmp(&techs[b]));
    let techs_sorted: Vec<String> = order.iter().map(|&a| techs[a].clone()).collect();
    let techs = techs_sorted;
    let firm_ids: Vec<String> = (0..nf).map(firm_code).collect();

    let skill_dist = Normal::new(0.0, p.skill_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let diff_dist =
        Normal::new(0.0, p.difficulty_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let skill: Vec<f64> = (0..nf).map(|_| skill_dist.sample(&mut rng)).collect();
    let difficulty: Vec<f64> = (0..nt).map(|_| diff_dist.sample(&mut rng)).collect();

    // Initial holdings from the nested capability model; every firm holds
    // at least its most likely technology.
    let mut state = vec![Cell::Out; nf * nt];
    for i in 0..nf {
        let mut any = false;
        for a in 0..nt {
            let prob =
                logistic(p.capability_intercept + p.capability_slope * (skill[i] - difficulty[a]));
            if rng.random::<f64>() < prob {
                state[i * nt + a] = Cell::In {
                    lock_until: p.first_year,
                };
                any = true;
            }
        }
        if !any {
            let easiest = (0..nt)
                .min_by(|&x, &y| difficulty[x].total_cmp(&difficulty[y]))
                .unwrap();
            state[i * nt + easiest] = Cell::In {
                lock_until: p.first_year,
            };
        }
    }

    // Static firm attributes.
    let industries: Vec<String> = (0..nf)
        .map(|_| format!("I{:02}", rng.random_range(1..=p.n_industries)))
        .collect();
    let founding: Vec<i32> = (0..nf)
        .map(|_| p.first_year - rng.random_range(1..=40))
        .collect();
    let size = LogNormal::new(4.0, 1.0).unwrap();
    let base_employees: Vec<f64> = (0..nf)
        .map(|i| {
            (size.sample(&mut rng) * (0.5 * skill[i]).exp())
                .round()
                .max(1.0)
        })
        .collect();

    let mut patents = Vec::new();
    let mut support = Vec::new();
    let mut firms = Vec::new();
    let mut truth = Vec::new();
    let mut gov_until = vec![i32::MIN; nf * nt];
    let mut family_seq = 0usize;
    let mut patent_seq = 0usize;
    let mut project_seq = 0usize;
    let profit = Normal::new(0.05, 0.1).unwrap();

    for k in 0..p.n_years {
        let year = p.first_year + k as i32;
        let held: Vec<bool> = state.iter().map(|c| matches!(c, Cell::In { .. })).collect();

        // Family counts realizing the holdings.
        let mut counts = vec![0u64; (nf + 1) * nt];
        for i in 0..nf {
            if !held[i * nt..(i + 1) * nt].iter().any(|&h| h) {
                continue;
            }
            let h = rng.random_range(1..=p.max_cell_count);
            for a in 0..nt {
                if held[i * nt + a] {
                    counts[i * nt + a] = h as u64;
                }
            }
        }
        let col: Vec<u64> = (0..nt)
            .map(|a| (0..nf).map(|i| counts[i * nt + a]).sum())
            .collect();
        let total = col.iter().copied().max().unwrap_or(0) + 1;
        for a in 0..nt {
            counts[nf * nt + a] = total - col[a];
        }

        // Structures the entry model conditions on.
        let mut all_firms = firm_ids.clone();
        all_firms.push(RESIDUAL_FIRM.to_owned());
        let rta = rta_from_counts(year, &all_firms, &techs, &counts)?;
        let adv = advantage_matrix(&rta);
        let prox = proximity(&adv);
        let tci: Vec<f64> = match mor(&adv, DEFAULT_ITERATIONS)
            .and_then(|s| tci_transform(&s, year, &TciConfig::default()))
        {
            Ok(s) => techs.iter().map(|t| s.get(t).unwrap_or(0.0)).collect(),
            Err(_) => vec![0.0; nt],
        };

        // Support projects starting this year.
        for i in 0..nf {
            let mut cells: Vec<usize> = (0..nt)
                .filter(|_| rng.random::<f64>() < p.gov_rate)
                .collect();
            cells.shuffle(&mut rng);
            for chunk in cells.chunks(2) {
                project_seq += 1;
                support.push(SynthSupport {
                    project_id: format!("P{project_seq:07}"),
                    firm_id: firm_ids[i].clone(),
                    contribution_share: rng.random_range(0.6..=1.0),
                    year,
                    cpc_codes: chunk
                        .iter()
                        .map(|&a| full_code(&techs[a], &mut rng))
                        .collect(),
                });
                for &a in chunk {
                    gov_until[i * nt + a] = year + p.gov_persistence.max(1) as i32 - 1;
                }
            }
            // Minority participations never qualify.
            if rng.random::<f64>() < p.gov_rate * 5.0 {
                project_seq += 1;
                let a = rng.random_range(0..nt);
                support.push(SynthSupport {
                    project_id: format!("P{project_seq:07}"),
                    firm_id: firm_ids[i].clone(),
                    contribution_share: rng.random_range(0.0..=0.5),
                    year,
                    cpc_codes: vec![full_code(&techs[a], &mut rng)],
                });
            }
        }

        // Entry draws for the candidate cells.
        let in_window = year + 4 <= p.last_year();
        let row_of: BTreeMap<&str, usize> = adv
            .firms
            .iter()
            .enumerate()
            .map(|(r, f)| (f.as_str(), r))
            .collect();
        let mut next = state.clone();
        for i in 0..nf {
            let held_row = row_of.get(firm_ids[i].as_str()).map(|&r| adv.row(r));
            for a in 0..nt {
                let idx = i * nt + a;
                let omega = held_row.map_or(0.0, |h| density_of_row(&prox, h, a));
                let gov = gov_until[idx] >= year;
                match state[idx] {
                    Cell::In { lock_until } => {
                        if year >= lock_until && rng.random::<f64>() < p.exit_rate {
                            next[idx] = Cell::Out;
                        }
                    }
                    Cell::Pending => {
                        next[idx] = Cell::In {
                            lock_until: year + 3,
                        };
                        if in_window {
                            truth.push(truth_row(
                                &firm_ids[i],
                                &techs[a],
                                year,
                                0.0,
                                false,
                                omega,
                                gov,
                            ));
                        }
                    }
                    Cell::Out => {
                        let gov_on = gov && p.gov_max_omega.is_none_or(|m| omega < m);
                        let z = p.base
                            + p.b_omega * omega
                            + p.b_tci * tci[a]
                            + p.b_gov * gov_on as u8 as f64;
                        let prob = logistic(z);
                        let converted = rng.random::<f64>() < prob;
                        if converted {
                            next[idx] = Cell::Pending;
                        }
                        if in_window {
                            truth.push(truth_row(
                                &firm_ids[i],
                                &techs[a],
                                year,
                                prob,
                                converted,
                                omega,
                                gov,
                            ));
                        }
                    }
                }
            }
        }

        // Patents for this year's counts.
        for i in 0..=nf {
            let firm = if i == nf {
                RESIDUAL_FIRM
            } else {
                firm_ids[i].as_str()
            };
            let mut remaining: Vec<(usize, u64)> = (0..nt)
                .map(|a| (a, counts[i * nt + a]))
                .filter(|c| c.1 > 0)
                .collect();
            let max_codes = if i == nf { 8 } else { 3 };
            while !remaining.is_empty() {
                remaining.shuffle(&mut rng);
                let mut start = 0;
                while start < remaining.len() {
                    let size = rng.random_range(1..=max_codes).min(remaining.len() - start);
                    let group: Vec<usize> =
                        remaining[start..start + size].iter().map(|c| c.0).collect();
                    start += size;
                    family_seq += 1;
                    emit_family(
                        &mut patents,
                        &mut patent_seq,
                        family_seq,
                        firm,
                        year,
                        p.last_year(),
                        &group,
                        &techs,
                        &mut rng,
                    );
                }
                for c in remaining.iter_mut() {
                    c.1 -= 1;
                }
                remaining.retain(|c| c.1 > 0);
            }
        }

        // Financials.
        for i in 0..nf {
            let growth = 1.0 + 0.02 * k as f64;
            firms.push(SynthFirmYear {
                firm_id: firm_ids[i].clone(),
                founding_year: founding[i],
                industry_code: industries[i].clone(),
                year,
                employees: Some(
                    (base_employees[i] * growth * rng.random_range(0.9..1.1))
                        .round()
                        .max(1.0),
                ),
                profit_ratio: Some(profit.sample(&mut rng) + 0.02 * skill[i]),
                debt_ratio: Some(rng.random_range(0.05..0.95)),
            });
        }
        firms.push(SynthFirmYear {
            firm_id: RESIDUAL_FIRM.to_owned(),
            founding_year: p.first_year - 50,
            industry_code: "I00".to_owned(),
            year,
            employees: None,
            profit_ratio: None,
            debt_ratio: None,
        });
        state = next;
    }

    let n_i4t = ((p.i4t_share * nt as f64).round() as usize).min(nt);
    let mut pick: Vec<usize> = (0..nt).collect();
    pick.shuffle(&mut rng);
    let mut taxonomy: Vec<(String, Category)> = pick[..n_i4t]
        .iter()
        .enumerate()
        .map(|(j, &a)| (techs[a].clone(), Category::ALL[j % Category::ALL.len()]))
        .collect();
    taxonomy.sort();

    Ok(SynthCorpus {
        params: p.clone(),
        techs,
        patents,
        firms,
        support,
        taxonomy,
        truth,
        warnings,
    })
}

fn truth_row(
    firm: &str,
    tech: &str,
    year: i32,
    p: f64,
    converted: bool,
    omega: f64,
    gov: bool,
) -> TruthRow {
    TruthRow {
        firm_id: firm.to_owned(),
        tech_code: tech.to_owned(),
        year,
        p_entry: p,
        converted,
        omega,
        gov,
    }
}

/// A full CPC code under the subclass `tech`.
fn full_code(tech: &str, rng: &mut ChaCha8Rng) -> String {
    format!(
        "{tech}{}/{:02}",
        rng.random_range(1..100),
        rng.random_range(0..20) * 2
    )
}

/// One family: a first filing with every code, and sometimes further
/// offices filing a subset, possibly a year later.
#[allow(clippy::too_many_arguments)]
fn emit_family(
    out: &mut Vec<SynthPatent>,
    patent_seq: &mut usize,
    family: usize,
    firm: &str,
    year: i32,
    last_year: i32,
    group: &[usize],
    techs: &[String],
    rng: &mut ChaCha8Rng,
) {
    let family_id = format!("D{family:08}");
    let members = rng.random_range(1..=3usize);
    for m in 0..members {
        *patent_seq += 1;
        let codes: Vec<String> = if m == 0 {
            group.iter().map(|&a| full_code(&techs[a], rng)).collect()
        } else {
            let keep = rng.random_range(1..=group.len());
            group[..keep]
                .iter()
                .map(|&a| full_code(&techs[a], rng))
                .collect()
        };
        let later = m > 0 && year < last_year && rng.random::<f64>() < 0.3;
        out.push(SynthPatent {
            patent_id: format!("A{:09}", *patent_seq),
            family_id: family_id.clone(),
            firm_id: firm.to_owned(),
            year: if later { year + 1 } else { year },
            cpc_codes: codes,
        });
    }
}

/// Paths of a written corpus.
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub patents: std::path::PathBuf,
    pub firms: std::path::PathBuf,
    pub support: std::path::PathBuf,
    pub taxonomy: std::path::PathBuf,
    pub truth: std::path::PathBuf,
    pub params: std::path::PathBuf,
}

impl SynthCorpus {
    pub fn write(&self, dir: &Path) -> Result<CorpusFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = CorpusFiles {
            patents: dir.join("patents.csv"),
            firms: dir.join("firms.csv"),
            support: dir.join("support.csv"),
            taxonomy: dir.join("taxonomy.csv"),
            truth: dir.join("truth.csv"),
            params: dir.join("params.toml"),
        };
        let mut out = CsvSink::create(
            &files.patents,
            &["patent_id", "family_id", "firm_id", "year", "cpc_codes"],
        )?;
        for r in &self.patents {
            out.row([
                r.patent_id.as_str(),
                &r.family_id,
                &r.firm_id,
                &r.year.to_string(),
                &r.cpc_codes.join("|"),
            ])?;
        }
        out.finish()?;

        let mut out = CsvSink::create(
            &files.firms,
            &[
                "firm_id",
                "founding_year",
                "industry_code",
                "year",
                "employees",
                "profit_ratio",
                "debt_ratio",
            ],
        )?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "NA".into());
        for r in &self.firms {
            out.row([
                r.firm_id.clone(),
                r.founding_year.to_string(),
                r.industry_code.clone(),
                r.year.to_string(),
                opt(r.employees),
                opt(r.profit_ratio),
                opt(r.debt_ratio),
            ])?;
        }
        out.finish()?;

        let mut out = CsvSink::create(
            &files.support,
            &[
                "project_id",
                "firm_id",
                "contribution_share",
                "year",
                "cpc_codes",
            ],
        )?;
        for r in &self.support {
            out.row([
                r.project_id.clone(),
                r.firm_id.clone(),
                fmt_f64(r.contribution_share),
                r.year.to_string(),
                r.cpc_codes.join("|"),
            ])?;
        }
        out.finish()?;

        let mut out = CsvSink::create(&files.taxonomy, &["cpc_prefix", "category"])?;
        for (prefix, c) in &self.taxonomy {
            out.row([prefix.as_str(), c.name()])?;
        }
        out.finish()?;

        let mut out = CsvSink::create(
            &files.truth,
            &[
                "firm_id",
                "tech_code",
                "year",
                "p_entry",
                "converted",
                "omega",
                "gov",
            ],
        )?;
        for r in &self.truth {
            out.row([
                r.firm_id.clone(),
                r.tech_code.clone(),
                r.year.to_string(),
                fmt_f64(r.p_entry),
                (r.converted as u8).to_string(),
                fmt_f64(r.omega),
                (r.gov as u8).to_string(),
            ])?;
        }
        out.finish()?;

        let text = toml::to_string(&self.params)
            .map_err(|e| Error::Config(format!("cannot serialize generator params: {e}")))?;
        std::fs::write(&files.params, text).map_err(|e| Error::io(&files.params, e))?;
        Ok(files)
    }
}

pub fn load_params(path: &Path) -> Result<GeneratorParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorParams {
        GeneratorParams {
            n_firms: 30,
            n_techs: 12,
            n_years: 6,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(gen_corpus(&small()).unwrap(), gen_corpus(&small()).unwrap());
    }

    #[test]
    fn tech_codes_are_distinct_subclasses() {
        let codes: std::collections::BTreeSet<String> = (0..2000).map(tech_code).collect();
        assert_eq!(codes.len(), 2000);
        assert!(codes.iter().all(|c| c.len() == 4));
    }

    #[test]
    fn saturation_is_refused() {
        let p = GeneratorParams {
            base: 3.0,
            ..small()
        };
        assert!(gen_corpus(&p).is_err());
    }

    #[test]
    fn unidentified_gov_warns() {
        let p = GeneratorParams {
            gov_rate: 0.0,
            ..small()
        };
        assert_eq!(gen_corpus(&p).unwrap().warnings.len(), 1);
    }
}
