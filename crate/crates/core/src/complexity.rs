//! Method of reflections on the firm–technology advantage network, the TCI
//! rescaling used as a regressor, and the per-category complexity dataset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advantage::{advantage_matrix, compute_rta_pooled, AdvantageMatrix};
use crate::corpus::{Category, CountCube, I4TMap};
use crate::error::{Error, Result};
use crate::table::{fmt_f64, fmt_opt, CsvSink};

/// Default number of reflections.
pub const DEFAULT_ITERATIONS: usize = 20;

/// Vectors whose standard deviation falls below this are treated as constant.
const DEGENERATE_SD: f64 = 1e-10;

/// Result of removing all-zero rows and columns until none remain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pruned {
    pub adv: AdvantageMatrix,
    pub removed_firms: Vec<String>,
    pub removed_techs: Vec<String>,
}

pub fn prune_degenerates(adv: &AdvantageMatrix) -> Pruned {
    let mut keep_f: Vec<bool> = vec![true; adv.n_firms()];
    let mut keep_t: Vec<bool> = vec![true; adv.n_techs()];
    loop {
        let mut changed = false;
        for i in 0..adv.n_firms() {
            if keep_f[i] && !(0..adv.n_techs()).any(|a| keep_t[a] && adv.get(i, a)) {
                keep_f[i] = false;
                changed = true;
            }
        }
        for a in 0..adv.n_techs() {
            if keep_t[a] && !(0..adv.n_firms()).any(|i| keep_f[i] && adv.get(i, a)) {
                keep_t[a] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let fi: Vec<usize> = (0..adv.n_firms()).filter(|&i| keep_f[i]).collect();
    let ti: Vec<usize> = (0..adv.n_techs()).filter(|&a| keep_t[a]).collect();
    let cells = fi
        .iter()
        .flat_map(|&i| ti.iter().map(move |&a| adv.get(i, a)))
        .collect();
    Pruned {
        adv: AdvantageMatrix {
            firms: fi.iter().map(|&i| adv.firms[i].clone()).collect(),
            techs: ti.iter().map(|&a| adv.techs[a].clone()).collect(),
            cells,
        },
        removed_firms: (0..adv.n_firms())
            .filter(|&i| !keep_f[i])
            .map(|i| adv.firms[i].clone())
            .collect(),
        removed_techs: (0..adv.n_techs())
            .filter(|&a| !keep_t[a])
            .map(|a| adv.techs[a].clone())
            .collect(),
    }
}

/// Per-iteration firm and technology scores.
///
/// Iterations are stored standardized (mean 0, sd 1) and un-oriented;
/// [`ComplexityScores::tech`] and [`ComplexityScores::firm`] apply the
/// orientation sign, chosen so the final technology vector is negatively
/// correlated with ubiquity.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityScores {
    pub firms: Vec<String>,
    pub techs: Vec<String>,
    /// Diversification `K_{f,0}`.
    pub diversification: Vec<usize>,
    /// Ubiquity `K_{t,0}`.
    pub ubiquity: Vec<usize>,
    pub firm_iterations: Vec<Vec<f64>>,
    pub tech_iterations: Vec<Vec<f64>>,
    pub sign: f64,
    pub removed_firms: Vec<String>,
    pub removed_techs: Vec<String>,
}

impl ComplexityScores {
    pub fn n_max(&self) -> usize {
        self.tech_iterations.len() - 1
    }

    pub fn tech(&self, iteration: usize) -> Vec<f64> {
        self.tech_iterations[iteration]
            .iter()
            .map(|v| v * self.sign)
            .collect()
    }

    pub fn firm(&self, iteration: usize) -> Vec<f64> {
        self.firm_iterations[iteration]
            .iter()
            .map(|v| v * self.sign)
            .collect()
    }

    pub fn final_tech(&self) -> Vec<f64> {
        self.tech(self.n_max())
    }

    pub fn final_firm(&self) -> Vec<f64> {
        self.firm(self.n_max())
    }

    pub fn write_csv(&self, out: &mut CsvSink, year: i32) -> Result<()> {
        let ys = year.to_string();
        for n in 0..=self.n_max() {
            let ns = n.to_string();
            for (f, v) in self.firms.iter().zip(self.firm(n)) {
                out.row([ys.as_str(), "firm", f, &ns, &fmt_f64(v)])?;
            }
            for (t, v) in self.techs.iter().zip(self.tech(n)) {
                out.row([ys.as_str(), "tech", t, &ns, &fmt_f64(v)])?;
            }
        }
        Ok(())
    }
}

/// Centers and scales to unit population sd; near-constant input becomes 0.
pub(crate) fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > DEGENERATE_SD) {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Runs `n_max` reflections on the pruned matrix.
pub fn mor(adv: &AdvantageMatrix, n_max: usize) -> Result<ComplexityScores> {
    let pruned = prune_degenerates(adv);
    let m = &pruned.adv;
    if m.n_firms() == 0 || m.n_techs() == 0 {
        return Err(Error::Numeric(
            "advantage matrix is empty after pruning".into(),
        ));
    }
    let firm_holdings: Vec<Vec<usize>> = (0..m.n_firms())
        .map(|i| (0..m.n_techs()).filter(|&a| m.get(i, a)).collect())
        .collect();
    let mut tech_holders: Vec<Vec<usize>> = vec![Vec::new(); m.n_techs()];
    for (i, held) in firm_holdings.iter().enumerate() {
        for &a in held {
            tech_holders[a].push(i);
        }
    }
    let diversification: Vec<usize> = firm_holdings.iter().map(Vec::len).collect();
    let ubiquity: Vec<usize> = tech_holders.iter().map(Vec::len).collect();

    let mut kf: Vec<f64> = diversification.iter().map(|&d| d as f64).collect();
    let mut kt: Vec<f64> = ubiquity.iter().map(|&d| d as f64).collect();
    standardize(&mut kf);
    standardize(&mut kt);
    let mut firm_iterations = vec![kf.clone()];
    let mut tech_iterations = vec![kt.clone()];
    for _ in 1..=n_max {
        let mut next_f: Vec<f64> = firm_holdings
            .iter()
            .map(|held| held.iter().map(|&a| kt[a]).sum::<f64>() / held.len() as f64)
            .collect();
        let mut next_t: Vec<f64> = tech_holders
            .iter()
            .map(|holders| holders.iter().map(|&i| kf[i]).sum::<f64>() / holders.len() as f64)
            .collect();
        standardize(&mut next_f);
        standardize(&mut next_t);
        firm_iterations.push(next_f.clone());
        tech_iterations.push(next_t.clone());
        kf = next_f;
        kt = next_t;
    }
    let ub: Vec<f64> = ubiquity.iter().map(|&u| u as f64).collect();
    let sign = if pearson(tech_iterations.last().unwrap(), &ub) > 0.0 {
        -1.0
    } else {
        1.0
    };
    Ok(ComplexityScores {
        firms: m.firms.clone(),
        techs: m.techs.clone(),
        diversification,
        ubiquity,
        firm_iterations,
        tech_iterations,
        sign,
        removed_firms: pruned.removed_firms,
        removed_techs: pruned.removed_techs,
    })
}

/// Ranks with 1 = highest score. Scores are compared on a 1e-9 grid so that
/// structurally tied technologies tie exactly; ties go to code order.
pub fn complexity_ranks(techs: &[String], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let key = |i: usize| (scores[i] * 1e9).round() as i64;
    order.sort_by(|&a, &b| key(b).cmp(&key(a)).then_with(|| techs[a].cmp(&techs[b])));
    let mut ranks = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TciConfig {
    /// `S` in `ln(1 + S·x)` applied after min-max rescaling.
    pub scale: f64,
}

impl Default for TciConfig {
    fn default() -> Self {
        Self { scale: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TciSlice {
    pub year: i32,
    pub techs: Vec<String>,
    pub raw: Vec<f64>,
    pub rank: Vec<usize>,
    pub tci: Vec<f64>,
}

impl TciSlice {
    pub fn get(&self, tech: &str) -> Option<f64> {
        self.techs
            .binary_search_by(|t| t.as_str().cmp(tech))
            .ok()
            .map(|i| self.tci[i])
    }

    pub fn write_csv(&self, out: &mut CsvSink) -> Result<()> {
        let ys = self.year.to_string();
        for i in 0..self.techs.len() {
            out.row([
                self.techs[i].as_str(),
                &ys,
                &fmt_f64(self.raw[i]),
                &self.rank[i].to_string(),
                &fmt_f64(self.tci[i]),
            ])?;
        }
        Ok(())
    }
}

pub fn tci_transform(scores: &ComplexityScores, year: i32, config: &TciConfig) -> Result<TciSlice> {
    let raw = scores.final_tech();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > DEGENERATE_SD) {
        return Err(Error::Numeric(format!("degenerate complexity in {year}")));
    }
    let tci = raw
        .iter()
        .map(|&v| (config.scale * ((v - lo) / (hi - lo))).ln_1p())
        .collect();
    Ok(TciSlice {
        year,
        techs: scores.techs.clone(),
        rank: complexity_ranks(&scores.techs, &raw),
        raw,
        tci,
    })
}

// ---------------------------------------------------------------------------
// Category complexity over periods

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Row {
    pub category: Category,
    pub period_start: i32,
    pub period_end: i32,
    pub total_patents: u64,
    pub log_total_patents: Option<f64>,
    pub mean_complexity_rank: Option<f64>,
    pub ranked_codes: usize,
    pub flag: String,
}

pub fn default_periods() -> Vec<(i32, i32)> {
    vec![(2007, 2010), (2011, 2014), (2015, 2018)]
}

/// For each category of `taxonomy` and each period: log total patent count
/// over its member technologies and the mean complexity rank of those
/// members on the period-pooled advantage matrix.
pub fn figure2_dataset(
    cube: &CountCube,
    taxonomy: &I4TMap,
    periods: &[(i32, i32)],
    n_max: usize,
) -> Result<Vec<Figure2Row>> {
    let mut members: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (a, t) in cube.techs().iter().enumerate() {
        if let Some(c) = taxonomy.classify(t) {
            members.entry(c).or_default().push(a);
        }
    }
    let categories: Vec<Category> = {
        let mut v: Vec<Category> = taxonomy.entries().map(|(_, c)| c).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut rows = Vec::new();
    for &(start, end) in periods {
        if end < start {
            return Err(Error::Config(format!("period {start}-{end} is empty")));
        }
        let years: Vec<i32> = (start..=end).filter(|&y| cube.has_year(y)).collect();
        let pooled = cube.pooled(years.iter().copied());
        let ranks: BTreeMap<String, usize> = if pooled.iter().any(|&c| c > 0) {
            let adv = advantage_matrix(&compute_rta_pooled(cube, &years, start)?);
            let scores = mor(&adv, n_max)?;
            let r = complexity_ranks(&scores.techs, &scores.final_tech());
            scores.techs.iter().cloned().zip(r).collect()
        } else {
            BTreeMap::new()
        };
        let nt = cube.techs().len();
        for &cat in &categories {
            let codes = members.get(&cat).map(Vec::as_slice).unwrap_or(&[]);
            let total: u64 = codes
                .iter()
                .map(|&a| pooled.iter().skip(a).step_by(nt).sum::<u64>())
                .sum();
            let ranked: Vec<usize> = codes
                .iter()
                .filter_map(|&a| ranks.get(&cube.techs()[a]).copied())
                .collect();
            let mean_rank = (!ranked.is_empty())
                .then(|| ranked.iter().sum::<usize>() as f64 / ranked.len() as f64);
            let flag = if total == 0 {
                "no_patents"
            } else if ranked.is_empty() {
                "no_ranked_codes"
            } else {
                ""
            };
            rows.push(Figure2Row {
                category: cat,
                period_start: start,
                period_end: end,
                total_patents: total,
                log_total_patents: (total > 0).then(|| (total as f64).ln()),
                mean_complexity_rank: mean_rank,
                ranked_codes: ranked.len(),
                flag: flag.to_owned(),
            });
        }
    }
    Ok(rows)
}

pub const FIGURE2_HEADER: [&str; 8] = [
    "category",
    "period_start",
    "period_end",
    "total_patents",
    "log_total_patents",
    "mean_complexity_rank",
    "ranked_codes",
    "flag",
];

pub fn write_figure2(path: &Path, rows: &[Figure2Row]) -> Result<()> {
    let mut out = CsvSink::create(path, &FIGURE2_HEADER)?;
    for r in rows {
        out.row([
            r.category.name(),
            &r.period_start.to_string(),
            &r.period_end.to_string(),
            &r.total_patents.to_string(),
            &fmt_opt(r.log_total_patents),
            &fmt_opt(r.mean_complexity_rank),
            &r.ranked_codes.to_string(),
            &r.flag,
        ])?;
    }
    out.finish()
}
