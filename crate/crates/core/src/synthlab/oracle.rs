//! Straightforward nested-loop re-implementations of every numeric stage.
//! They share no code with the main path beyond the input types and exist
//! to be compared against it.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::complexity::Figure2Row;
use crate::corpus::{Category, CountCube, FirmRecord, GovFlags, I4TMap};

/// Dense counts for one year: `counts[firm][tech]`.
pub fn year_counts(cube: &CountCube, year: i32) -> Vec<Vec<u64>> {
    let nt = cube.techs().len();
    (0..cube.firms().len())
        .map(|i| (0..nt).map(|a| cube.count(i, a, year) as u64).collect())
        .collect()
}

/// Counts summed over `years`.
pub fn pooled_counts(cube: &CountCube, years: &[i32]) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64; cube.techs().len()]; cube.firms().len()];
    for &y in years {
        for (i, row) in year_counts(cube, y).into_iter().enumerate() {
            for (a, c) in row.into_iter().enumerate() {
                out[i][a] += c;
            }
        }
    }
    out
}

/// Balassa ratio `(x/row) / (col/grand)`; `None` for firms without counts.
pub fn rta(counts: &[Vec<u64>]) -> Vec<Option<Vec<f64>>> {
    let nt = counts.first().map_or(0, Vec::len);
    let mut grand = 0.0;
    let mut col = vec![0.0; nt];
    for row in counts {
        for a in 0..nt {
            col[a] += row[a] as f64;
            grand += row[a] as f64;
        }
    }
    counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().map(|&c| c as f64).sum();
            if total == 0.0 {
                return None;
            }
            Some(
                (0..nt)
                    .map(|a| {
                        if row[a] == 0 {
                            0.0
                        } else {
                            (row[a] as f64 / total) / (col[a] / grand)
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Advantage rows of the active firms, with their original indices.
pub fn advantage(rta: &[Option<Vec<f64>>]) -> (Vec<usize>, Vec<Vec<bool>>) {
    let mut idx = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in rta.iter().enumerate() {
        if let Some(r) = r {
            idx.push(i);
            rows.push(r.iter().map(|&v| v >= 1.0).collect());
        }
    }
    (idx, rows)
}

/// Minimum of the two conditional co-advantage probabilities.
pub fn proximity(adv: &[Vec<bool>], n_techs: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n_techs]; n_techs];
    for a in 0..n_techs {
        for b in 0..n_techs {
            if a == b {
                out[a][b] = 1.0;
                continue;
            }
            let mut na = 0.0;
            let mut nb = 0.0;
            let mut both = 0.0;
            for row in adv {
                if row[a] {
                    na += 1.0;
                }
                if row[b] {
                    nb += 1.0;
                }
                if row[a] && row[b] {
                    both += 1.0;
                }
            }
            if na > 0.0 && nb > 0.0 {
                out[a][b] = f64::min(both / na, both / nb);
            }
        }
    }
    out
}

pub fn density(held: &[bool], prox: &[Vec<f64>], tech: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in 0..held.len() {
        den += prox[tech][b];
        if held[b] {
            num += prox[tech][b];
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Oriented MOR scores on the pruned matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MorOracle {
    /// Row indices (into the input) that survive pruning.
    pub firms: Vec<usize>,
    pub techs: Vec<usize>,
    pub ubiquity: Vec<f64>,
    pub firm_scores: Vec<Vec<f64>>,
    pub tech_scores: Vec<Vec<f64>>,
}

fn standardized(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 1e-10 {
        v.iter().map(|x| (x - mean) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

pub fn mor(adv: &[Vec<bool>], n_techs: usize, n_max: usize) -> Option<MorOracle> {
    let mut firms: Vec<usize> = (0..adv.len()).collect();
    let mut techs: Vec<usize> = (0..n_techs).collect();
    loop {
        let f2: Vec<usize> = firms
            .iter()
            .copied()
            .filter(|&i| techs.iter().any(|&a| adv[i][a]))
            .collect();
        let t2: Vec<usize> = techs
            .iter()
            .copied()
            .filter(|&a| f2.iter().any(|&i| adv[i][a]))
            .collect();
        if f2.len() == firms.len() && t2.len() == techs.len() {
            break;
        }
        firms = f2;
        techs = t2;
    }
    if firms.is_empty() || techs.is_empty() {
        return None;
    }
    let m = |i: usize, a: usize| if adv[firms[i]][techs[a]] { 1.0 } else { 0.0 };
    let (nf, nt) = (firms.len(), techs.len());
    let div: Vec<f64> = (0..nf).map(|i| (0..nt).map(|a| m(i, a)).sum()).collect();
    let ubi: Vec<f64> = (0..nt).map(|a| (0..nf).map(|i| m(i, a)).sum()).collect();
    let mut f = vec![standardized(&div)];
    let mut t = vec![standardized(&ubi)];
    for n in 1..=n_max {
        let nf_: Vec<f64> = (0..nf)
            .map(|i| (0..nt).map(|a| m(i, a) * t[n - 1][a]).sum::<f64>() / div[i])
            .collect();
        let nt_: Vec<f64> = (0..nt)
            .map(|a| (0..nf).map(|i| m(i, a) * f[n - 1][i]).sum::<f64>() / ubi[a])
            .collect();
        f.push(standardized(&nf_));
        t.push(standardized(&nt_));
    }
    let last = &t[n_max];
    let mu = ubi.iter().sum::<f64>() / nt as f64;
    let ml = last.iter().sum::<f64>() / nt as f64;
    let cov: f64 = (0..nt).map(|a| (last[a] - ml) * (ubi[a] - mu)).sum();
    let flip = if cov > 0.0 { -1.0 } else { 1.0 };
    let orient = |v: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        v.into_iter()
            .map(|r| r.into_iter().map(|x| x * flip).collect())
            .collect()
    };
    Some(MorOracle {
        firms,
        techs,
        ubiquity: ubi,
        firm_scores: orient(f),
        tech_scores: orient(t),
    })
}

/// 1 = highest; equal scores on the 1e-9 grid ordered by code.
pub fn ranks(codes: &[String], scores: &[f64]) -> Vec<usize> {
    let key: Vec<i64> = scores.iter().map(|s| (s * 1e9).round() as i64).collect();
    (0..scores.len())
        .map(|i| {
            1 + (0..scores.len())
                .filter(|&j| key[j] > key[i] || (key[j] == key[i] && codes[j] < codes[i]))
                .count()
        })
        .collect()
}

/// `ln(1 + scale · minmax(x))`; `None` when the range is degenerate.
pub fn tci(scores: &[f64], scale: f64) -> Option<Vec<f64>> {
    let lo = scores.iter().cloned().fold(f64::MAX, f64::min);
    let hi = scores.iter().cloned().fold(f64::MIN, f64::max);
    if hi - lo <= 1e-10 {
        return None;
    }
    Some(
        scores
            .iter()
            .map(|s| (1.0 + scale * (s - lo) / (hi - lo)).ln())
            .collect(),
    )
}

/// Sliding-window entry detection written directly from the rule.
pub fn entries(series: &[f64], lead: usize, persistence: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0..series.len() {
        if k == 0 || k < lead || k + persistence >= series.len() {
            continue;
        }
        let mut ok = series[k - 1] < 1.0;
        for j in 0..=persistence {
            ok = ok && series[k + j] >= 1.0;
        }
        if ok {
            out.push(k);
        }
    }
    out
}

/// Panel row as produced by the nested-loop construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub firm_id: String,
    pub tech_code: String,
    pub year: i32,
    pub entry: f64,
    pub omega: f64,
    pub tci: Option<f64>,
    pub gov: f64,
    pub age: f64,
    pub num_employee: f64,
    pub num_competitor: f64,
    pub num_rta: f64,
    pub profit_ratio: f64,
    pub debt_ratio: f64,
    pub industry_code: String,
    pub i4t_category: Option<Category>,
}

/// Panel under the default rules: entry two years ahead with two years of
/// persistence, single-year proximity and density, incumbents excluded.
pub fn panel(
    cube: &CountCube,
    firms: &[FirmRecord],
    gov: &GovFlags,
    taxonomy: &I4TMap,
    n_max: usize,
) -> Vec<OracleRow> {
    let nf = cube.firms().len();
    let nt = cube.techs().len();
    let years: Vec<i32> = cube.years().collect();
    let rtas: Vec<Vec<Option<Vec<f64>>>> =
        years.iter().map(|&y| rta(&year_counts(cube, y))).collect();
    let value = |k: usize, i: usize, a: usize| rtas[k][i].as_ref().map_or(0.0, |r| r[a]);
    let industry: HashMap<&str, &str> = firms
        .iter()
        .map(|f| (f.firm_id.as_str(), f.industry_code.as_str()))
        .collect();

    let mut out = Vec::new();
    for (k, &t) in years.iter().enumerate() {
        if k + 4 >= years.len() {
            continue;
        }
        let (active, adv) = advantage(&rtas[k]);
        let prox = proximity(&adv, nt);
        let tci_vals: Vec<Option<f64>> = match mor(&adv, nt, n_max) {
            Some(m) => {
                let mut v = vec![None; nt];
                if let Some(s) = tci(&m.tech_scores[n_max], 100.0) {
                    for (j, &a) in m.techs.iter().enumerate() {
                        v[a] = Some(s[j]);
                    }
                }
                v
            }
            None => vec![None; nt],
        };
        for f in firms {
            let Some(i) = (0..nf).find(|&i| cube.firms()[i] == f.firm_id) else {
                continue;
            };
            let Some(fy) = f.years.get(&t) else { continue };
            let (Some(emp), Some(pr), Some(dr)) = (fy.employees, fy.profit_ratio, fy.debt_ratio)
            else {
                continue;
            };
            let row = active.iter().position(|&x| x == i);
            let held: Vec<bool> = match row {
                Some(r) => adv[r].clone(),
                None => vec![false; nt],
            };
            let n_rta = held.iter().filter(|&&h| h).count();
            for a in 0..nt {
                if held[a] {
                    continue;
                }
                let series: Vec<f64> = (0..years.len()).map(|kk| value(kk, i, a)).collect();
                let entry = entries(&series, 2, 2).contains(&(k + 2));
                let mut competitors = 0;
                for (r, &j) in active.iter().enumerate() {
                    if j != i
                        && adv[r][a]
                        && industry.get(cube.firms()[j].as_str()) == Some(&f.industry_code.as_str())
                    {
                        competitors += 1;
                    }
                }
                out.push(OracleRow {
                    firm_id: f.firm_id.clone(),
                    tech_code: cube.techs()[a].clone(),
                    year: t,
                    entry: if entry { 1.0 } else { 0.0 },
                    omega: if row.is_some() {
                        density(&held, &prox, a)
                    } else {
                        0.0
                    },
                    tci: tci_vals[a],
                    gov: if gov.get(&f.firm_id, &cube.techs()[a], t) {
                        1.0
                    } else {
                        0.0
                    },
                    age: (t - f.founding_year) as f64,
                    num_employee: emp,
                    num_competitor: competitors as f64,
                    num_rta: n_rta as f64,
                    profit_ratio: pr,
                    debt_ratio: dr,
                    industry_code: f.industry_code.clone(),
                    i4t_category: taxonomy.classify(&cube.techs()[a]),
                });
            }
        }
    }
    out
}

/// Coefficients and conventional standard errors of the listed regressors
/// from OLS with an intercept and explicit dummies (first level dropped) for
/// each factor, solved through the normal equations.
pub fn ols_dummies(
    y: &[f64],
    columns: &[Vec<f64>],
    factors: &[Vec<usize>],
) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let levels: Vec<usize> = factors
        .iter()
        .map(|f| f.iter().max().map_or(0, |m| m + 1))
        .collect();
    let p = 1 + columns.len() + levels.iter().map(|l| l.saturating_sub(1)).sum::<usize>();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[0] = 1.0;
        for (j, c) in columns.iter().enumerate() {
            row[1 + j] = c[i];
        }
        let mut off = 1 + columns.len();
        for (f, &l) in factors.iter().zip(&levels) {
            if f[i] > 0 {
                row[off + f[i] - 1] = 1.0;
            }
            off += l.saturating_sub(1);
        }
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            xty[a] += row[a] * y[i];
            for b in 0..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let lu = xtx.clone().lu();
    let beta = lu.solve(&xty).expect("nonsingular design");
    let inv = lu.try_inverse().expect("nonsingular design");
    let mut rss = 0.0;
    for i in 0..n {
        let mut fit = beta[0];
        for (j, c) in columns.iter().enumerate() {
            fit += beta[1 + j] * c[i];
        }
        let mut off = 1 + columns.len();
        for (f, &l) in factors.iter().zip(&levels) {
            if f[i] > 0 {
                fit += beta[off + f[i] - 1];
            }
            off += l.saturating_sub(1);
        }
        rss += (y[i] - fit).powi(2);
    }
    let sigma2 = rss / (n - p) as f64;
    let coefs = (0..columns.len()).map(|j| beta[1 + j]).collect();
    let ses = (0..columns.len())
        .map(|j| (sigma2 * inv[(1 + j, 1 + j)]).sqrt())
        .collect();
    (coefs, ses)
}

/// Per-category totals and mean complexity ranks over pooled periods.
pub fn figure2(
    cube: &CountCube,
    taxonomy: &I4TMap,
    periods: &[(i32, i32)],
    n_max: usize,
) -> Vec<Figure2Row> {
    let nt = cube.techs().len();
    let mut categories: Vec<Category> = taxonomy.entries().map(|(_, c)| c).collect();
    categories.sort();
    categories.dedup();
    let mut out = Vec::new();
    for &(start, end) in periods {
        let years: Vec<i32> = (start..=end).filter(|&y| cube.has_year(y)).collect();
        let counts = pooled_counts(cube, &years);
        let mut rank_of: BTreeMap<usize, usize> = BTreeMap::new();
        let (_, adv) = advantage(&rta(&counts));
        if let Some(m) = mor(&adv, nt, n_max) {
            let codes: Vec<String> = m.techs.iter().map(|&a| cube.techs()[a].clone()).collect();
            for (j, r) in ranks(&codes, &m.tech_scores[n_max]).into_iter().enumerate() {
                rank_of.insert(m.techs[j], r);
            }
        }
        for &cat in &categories {
            let members: Vec<usize> = (0..nt)
                .filter(|&a| taxonomy.classify(&cube.techs()[a]) == Some(cat))
                .collect();
            let total: u64 = members
                .iter()
                .map(|&a| counts.iter().map(|r| r[a]).sum::<u64>())
                .sum();
            let ranked: Vec<usize> = members
                .iter()
                .filter_map(|a| rank_of.get(a).copied())
                .collect();
            let flag = if total == 0 {
                "no_patents"
            } else if ranked.is_empty() {
                "no_ranked_codes"
            } else {
                ""
            };
            out.push(Figure2Row {
                category: cat,
                period_start: start,
                period_end: end,
                total_patents: total,
                log_total_patents: if total > 0 {
                    Some((total as f64).ln())
                } else {
                    None
                },
                mean_complexity_rank: if ranked.is_empty() {
                    None
                } else {
                    Some(ranked.iter().sum::<usize>() as f64 / ranked.len() as f64)
                },
                ranked_codes: ranked.len(),
                flag: flag.to_owned(),
            });
        }
    }
    out
}
