//! Co-advantage proximity between technologies and the relatedness density
//! of a firm's portfolio around each technology.

use serde::{Deserialize, Serialize};

use crate::advantage::{advantage_matrix, compute_rta, compute_rta_pooled, AdvantageMatrix};
use crate::corpus::CountCube;
use crate::error::{Error, Result};
use crate::par::*;
use crate::table::{fmt_f64, CsvSink};

/// Symmetric technology × technology proximity with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    pub techs: Vec<String>,
    /// Row-major `techs × techs`.
    pub values: Vec<f64>,
}

impl ProximityMatrix {
    pub fn n(&self) -> usize {
        self.techs.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.techs.len() + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let n = self.techs.len();
        &self.values[a * n..(a + 1) * n]
    }

    pub fn tech_index(&self, tech: &str) -> Option<usize> {
        self.techs.iter().position(|t| t == tech)
    }

    pub fn write_dense(&self, path: &std::path::Path) -> Result<()> {
        let mut header = vec!["tech_code"];
        header.extend(self.techs.iter().map(String::as_str));
        let mut out = CsvSink::create(path, &header)?;
        for (a, t) in self.techs.iter().enumerate() {
            let mut row = vec![t.clone()];
            row.extend(self.row(a).iter().map(|&v| fmt_f64(v)));
            out.row(&row)?;
        }
        out.finish()
    }

    /// Upper-triangle non-zero off-diagonal entries.
    pub fn write_triplets(&self, out: &mut CsvSink, year: i32) -> Result<()> {
        let year = year.to_string();
        for a in 0..self.n() {
            for b in a + 1..self.n() {
                let v = self.get(a, b);
                if v > 0.0 {
                    out.row([year.as_str(), &self.techs[a], &self.techs[b], &fmt_f64(v)])?;
                }
            }
        }
        Ok(())
    }
}

/// Column bitsets of an advantage matrix: one bit per firm for each tech.
fn tech_bitsets(adv: &AdvantageMatrix) -> Vec<Vec<u64>> {
    let words = adv.n_firms().div_ceil(64);
    let mut sets = vec![vec![0u64; words]; adv.n_techs()];
    for i in 0..adv.n_firms() {
        for (a, &b) in adv.row(i).iter().enumerate() {
            if b {
                sets[a][i / 64] |= 1 << (i % 64);
            }
        }
    }
    sets
}

/// `φ(α,β) = n_αβ / max(n_α, n_β)`, the smaller of the two conditional
/// co-advantage frequencies. Zero when either technology has no holders;
/// the diagonal is 1.
pub fn proximity(adv: &AdvantageMatrix) -> ProximityMatrix {
    let n = adv.n_techs();
    let sets = tech_bitsets(adv);
    let holders: Vec<u32> = sets
        .iter()
        .map(|s| s.iter().map(|w| w.count_ones()).sum())
        .collect();
    let mut values = vec![0.0; n * n];
    values
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(a, row)| {
            for b in 0..n {
                if a == b {
                    row[b] = 1.0;
                    continue;
                }
                let denom = holders[a].max(holders[b]);
                if holders[a] == 0 || holders[b] == 0 {
                    continue;
                }
                let both: u32 = sets[a]
                    .iter()
                    .zip(&sets[b])
                    .map(|(x, y)| (x & y).count_ones())
                    .sum();
                row[b] = both as f64 / denom as f64;
            }
        });
    ProximityMatrix {
        techs: adv.techs.clone(),
        values,
    }
}

/// Proximity-weighted share of a firm's held technologies around `tech`.
/// `held` is the firm's advantage row over `prox.techs`.
pub fn density_of_row(prox: &ProximityMatrix, held: &[bool], tech: usize) -> f64 {
    let row = prox.row(tech);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&phi, &h) in row.iter().zip(held) {
        den += phi;
        if h {
            num += phi;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn density(
    adv: &AdvantageMatrix,
    prox: &ProximityMatrix,
    firm: &str,
    tech: &str,
) -> Result<f64> {
    let a = prox
        .tech_index(tech)
        .ok_or_else(|| Error::Validation(format!("unknown technology `{tech}`")))?;
    if adv.techs != prox.techs {
        return Err(Error::Validation(
            "advantage and proximity technology axes differ".into(),
        ));
    }
    match adv.firm_index(firm) {
        Some(i) => Ok(density_of_row(prox, adv.row(i), a)),
        None => Ok(0.0),
    }
}

/// How proximity is estimated for year `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Years of counts pooled into the advantage matrix behind φ (1 = that
    /// year only, 3 = t−2..t).
    pub proximity_years: usize,
    /// Years of density averaged into the reported value (1 = ω at t only,
    /// 3 = mean over t−2..t of the years inside the corpus).
    pub density_years: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            proximity_years: 1,
            density_years: 1,
        }
    }
}

/// Advantage matrix for year `t` and proximity under the window config.
pub fn year_structures(
    cube: &CountCube,
    year: i32,
    window: &WindowConfig,
) -> Result<(AdvantageMatrix, ProximityMatrix)> {
    let adv = advantage_matrix(&compute_rta(cube, year)?);
    let prox = if window.proximity_years <= 1 {
        proximity(&adv)
    } else {
        let span: Vec<i32> = (0..window.proximity_years as i32)
            .map(|k| year - k)
            .filter(|&y| cube.has_year(y))
            .rev()
            .collect();
        proximity(&advantage_matrix(&compute_rta_pooled(cube, &span, year)?))
    };
    Ok((adv, prox))
}

/// ω for every (firm, tech, year) of a cube; firms absent in a year have
/// density 0 there.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCube {
    pub firms: Vec<String>,
    pub techs: Vec<String>,
    pub years: Vec<i32>,
    /// `years × firms × techs`.
    pub values: Vec<f64>,
}

impl DensityCube {
    pub fn get(&self, firm: usize, tech: usize, year: i32) -> Option<f64> {
        let k = self.years.iter().position(|&y| y == year)?;
        Some(self.values[(k * self.firms.len() + firm) * self.techs.len() + tech])
    }

    pub fn year_slice(&self, year: i32) -> Option<&[f64]> {
        let k = self.years.iter().position(|&y| y == year)?;
        let size = self.firms.len() * self.techs.len();
        Some(&self.values[k * size..(k + 1) * size])
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = CsvSink::create(path, &["firm_id", "tech_code", "year", "omega"])?;
        for &y in &self.years {
            let s = self.year_slice(y).expect("year present");
            let ys = y.to_string();
            for (i, f) in self.firms.iter().enumerate() {
                for (a, t) in self.techs.iter().enumerate() {
                    let v = s[i * self.techs.len() + a];
                    if v > 0.0 {
                        out.row([f.as_str(), t, &ys, &fmt_f64(v)])?;
                    }
                }
            }
        }
        out.finish()
    }
}

/// Single-year density for every cube firm × tech at `year`.
fn density_slice(cube: &CountCube, year: i32, window: &WindowConfig) -> Result<Vec<f64>> {
    let nt = cube.techs().len();
    let (adv, prox) = year_structures(cube, year, window)?;
    let mut out = vec![0.0; cube.firms().len() * nt];
    let rows: Vec<(usize, usize)> = adv
        .firms
        .iter()
        .enumerate()
        .map(|(r, f)| (r, cube.firm_index(f).expect("firm in cube")))
        .collect();
    let computed: Vec<(usize, Vec<f64>)> = rows
        .par_iter()
        .map(|&(r, i)| {
            let held = adv.row(r);
            (i, (0..nt).map(|a| density_of_row(&prox, held, a)).collect())
        })
        .collect();
    for (i, vals) in computed {
        out[i * nt..(i + 1) * nt].copy_from_slice(&vals);
    }
    Ok(out)
}

pub fn density_panel(
    cube: &CountCube,
    years: &[i32],
    window: &WindowConfig,
) -> Result<DensityCube> {
    for &y in years {
        if !cube.has_year(y) {
            return Err(Error::Validation(format!("year {y} outside corpus")));
        }
    }
    let span = window.density_years.max(1) as i32;
    let mut needed: Vec<i32> = years
        .iter()
        .flat_map(|&y| (0..span).map(move |k| y - k))
        .filter(|&y| cube.has_year(y))
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let slices: Vec<(i32, Result<Vec<f64>>)> = needed
        .par_iter()
        .map(|&y| (y, density_slice(cube, y, window)))
        .collect();
    let mut by_year = std::collections::BTreeMap::new();
    for (y, s) in slices {
        by_year.insert(y, s?);
    }
    let size = cube.firms().len() * cube.techs().len();
    let mut values = Vec::with_capacity(years.len() * size);
    for &y in years {
        let members: Vec<&Vec<f64>> = (0..span).filter_map(|k| by_year.get(&(y - k))).collect();
        if members.len() == 1 {
            values.extend_from_slice(members[0]);
        } else {
            let m = members.len() as f64;
            values.extend((0..size).map(|c| members.iter().map(|s| s[c]).sum::<f64>() / m));
        }
    }
    Ok(DensityCube {
        firms: cube.firms().to_vec(),
        techs: cube.techs().to_vec(),
        years: years.to_vec(),
        values,
    })
}
