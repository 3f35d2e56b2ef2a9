//! Fixed-effects linear probability estimation and the descriptive
//! diagnostics that accompany it.
//!
//! The estimator is OLS. Fixed effects are absorbed exactly: the factor with
//! the most levels is swept out by group demeaning, and any remaining factor
//! enters as demeaned dummies that are partialled out before the slope
//! solve. The result equals dummy-variable OLS.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::panel::{Panel, Var};
use crate::par::*;
use crate::table::{fmt_f64, CsvSink};

/// Rows per cross-product chunk. Fixed so sums do not depend on threads.
const CHUNK: usize = 4096;
/// Relative pivot below which a column counts as linearly dependent.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffect {
    Year,
    Industry,
}

impl FixedEffect {
    pub fn name(self) -> &'static str {
        match self {
            FixedEffect::Year => "year",
            FixedEffect::Industry => "industry",
        }
    }
}

impl FromStr for FixedEffect {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "year" => Ok(FixedEffect::Year),
            "industry" => Ok(FixedEffect::Industry),
            _ => Err(Error::Config(format!("unknown fixed effect `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Linear probability model (OLS on the binary outcome).
    #[default]
    Lpm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    #[serde(default = "default_dependent")]
    pub dependent: Var,
    pub regressors: Vec<Var>,
    #[serde(default)]
    pub fixed_effects: Vec<FixedEffect>,
    #[serde(default)]
    pub estimator: Estimator,
    /// HC1 heteroskedasticity-robust standard errors.
    #[serde(default)]
    pub robust: bool,
}

fn default_dependent() -> Var {
    Var::Entry
}

impl RegressionSpec {
    /// Entry on all panel covariates with year and industry effects.
    pub fn full_model() -> Self {
        Self {
            dependent: Var::Entry,
            regressors: vec![
                Var::Omega,
                Var::Tci,
                Var::Gov,
                Var::Age,
                Var::NumEmployee,
                Var::NumCompetitor,
                Var::NumRta,
                Var::ProfitRatio,
                Var::DebtRatio,
            ],
            fixed_effects: vec![FixedEffect::Year, FixedEffect::Industry],
            estimator: Estimator::Lpm,
            robust: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.is_empty() {
            return Err(Error::Validation("regression has no regressors".into()));
        }
        if self.regressors.contains(&self.dependent) {
            return Err(Error::Validation(format!(
                "dependent `{}` is also a regressor",
                self.dependent
            )));
        }
        for (i, v) in self.regressors.iter().enumerate() {
            if self.regressors[..i].contains(v) {
                return Err(Error::Validation(format!("regressor `{v}` listed twice")));
            }
        }
        for (i, f) in self.fixed_effects.iter().enumerate() {
            if self.fixed_effects[..i].contains(f) {
                return Err(Error::Validation(format!(
                    "fixed effect `{}` listed twice",
                    f.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

impl Coefficient {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub dependent: String,
    pub coefficients: Vec<Coefficient>,
    /// Present only when no fixed effect absorbs the constant.
    pub intercept: Option<Coefficient>,
    pub fixed_effects: Vec<String>,
    pub observations: usize,
    /// Rows removed by listwise deletion.
    pub deleted: usize,
    /// Columns absorbed by the fixed effects.
    pub fe_rank: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_se: f64,
    pub robust: bool,
    pub estimator: String,
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

pub const ESTIMATOR_NOTE: &str = "linear probability model estimated by OLS";

/// A categorical factor given as a level id per row.
#[derive(Debug, Clone)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<usize>,
}

impl Factor {
    /// Builds level ids from arbitrary ordered keys.
    pub fn from_keys<K: Ord + Clone>(name: &str, keys: &[K]) -> Self {
        let mut ids: BTreeMap<K, usize> = keys.iter().map(|k| (k.clone(), 0)).collect();
        for (i, v) in ids.values_mut().enumerate() {
            *v = i;
        }
        Self {
            name: name.to_owned(),
            levels: keys.iter().map(|k| ids[k]).collect(),
        }
    }

    fn n_levels(&self) -> usize {
        self.levels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Least squares of `y` on named columns with absorbed factors.
pub fn ols_columns(
    dependent: &str,
    y: &[f64],
    columns: &[(String, Vec<f64>)],
    factors: &[Factor],
    robust: bool,
) -> Result<RegressionResult> {
    let n = y.len();
    if columns.iter().any(|(_, c)| c.len() != n) || factors.iter().any(|f| f.levels.len() != n) {
        return Err(Error::Validation("design columns differ in length".into()));
    }
    let mut names: Vec<String> = columns.iter().map(|(s, _)| s.clone()).collect();
    let mut x: Vec<Vec<f64>> = columns.iter().map(|(_, c)| c.clone()).collect();
    for (name, col) in columns {
        if centered_ss(col) == 0.0 {
            return Err(Error::Numeric(format!("zero-variance regressor `{name}`")));
        }
    }
    let intercept = factors.is_empty();
    if intercept {
        names.insert(0, "(Intercept)".into());
        x.insert(0, vec![1.0; n]);
    }
    let k = x.len();

    let mut yw = y.to_vec();
    let fe_rank = absorb(&mut yw, &mut x, factors)?;
    if n < k + fe_rank + 1 {
        return Err(Error::Validation(format!(
            "{n} observations cannot identify {k} coefficients and {fe_rank} fixed effects"
        )));
    }
    for (j, (name, col)) in columns.iter().enumerate() {
        let within: f64 = x[j + intercept as usize].iter().map(|v| v * v).sum();
        if within <= PIVOT_TOL * centered_ss(col) {
            return Err(Error::Numeric(format!(
                "regressor `{name}` is constant after fixed-effect absorption"
            )));
        }
    }

    let (xtx, xty) = cross_products(&x, &yw);
    let chol = match Cholesky::new(&xtx) {
        Ok(c) => c,
        Err(j) => {
            let partners = dependence(&xtx, j);
            let mut cols: Vec<&str> = partners.iter().map(|&p| names[p].as_str()).collect();
            cols.push(&names[j]);
            return Err(Error::Numeric(format!(
                "perfect collinearity among regressors: {}",
                cols.join(", ")
            )));
        }
    };
    let beta = chol.solve(&xty);
    let resid: Vec<f64> = (0..n)
        .map(|i| yw[i] - (0..k).map(|j| x[j][i] * beta[j]).sum::<f64>())
        .collect();
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    let tss = centered_ss(y);
    let df = n - k - fe_rank;
    let sigma2 = rss / df as f64;
    let inv = chol.inverse();
    let cov = if robust {
        let meat = weighted_cross(&x, &resid);
        let scale = n as f64 / df as f64;
        let mut c = mat_mul(&mat_mul(&inv, &meat), &inv);
        c.iter_mut().flatten().for_each(|v| *v *= scale);
        c
    } else {
        inv.iter()
            .map(|r| r.iter().map(|v| v * sigma2).collect())
            .collect()
    };
    let tdist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::Numeric(format!("t distribution: {e}")))?;
    let mut coefs: Vec<Coefficient> = (0..k)
        .map(|j| {
            let se = cov[j][j].max(0.0).sqrt();
            let t = beta[j] / se;
            let p = if t.is_nan() {
                f64::NAN
            } else if t.is_infinite() {
                0.0
            } else {
                2.0 * tdist.sf(t.abs())
            };
            Coefficient {
                term: names[j].clone(),
                estimate: beta[j],
                std_error: se,
                t_value: t,
                p_value: p,
            }
        })
        .collect();
    let intercept_coef = intercept.then(|| coefs.remove(0));
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };
    let adj = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df as f64;
    Ok(RegressionResult {
        dependent: dependent.to_owned(),
        coefficients: coefs,
        intercept: intercept_coef,
        fixed_effects: factors.iter().map(|f| f.name.clone()).collect(),
        observations: n,
        deleted: 0,
        fe_rank,
        df_resid: df,
        r_squared: r2,
        adj_r_squared: adj,
        residual_se: sigma2.sqrt(),
        robust,
        estimator: ESTIMATOR_NOTE.to_owned(),
    })
}

/// Estimates `spec` on the panel after listwise deletion.
pub fn ols_fe(panel: &Panel, spec: &RegressionSpec) -> Result<RegressionResult> {
    spec.validate()?;
    let keep: Vec<usize> = (0..panel.len())
        .filter(|&i| {
            let r = &panel.rows[i];
            let ok = |v: Var| r.value(v).is_some_and(f64::is_finite);
            ok(spec.dependent) && spec.regressors.iter().all(|&v| ok(v))
        })
        .collect();
    let y: Vec<f64> = keep
        .iter()
        .map(|&i| panel.rows[i].value(spec.dependent).unwrap())
        .collect();
    let columns: Vec<(String, Vec<f64>)> = spec
        .regressors
        .iter()
        .map(|&v| {
            (
                v.name().to_owned(),
                keep.iter()
                    .map(|&i| panel.rows[i].value(v).unwrap())
                    .collect(),
            )
        })
        .collect();
    let factors: Vec<Factor> = spec
        .fixed_effects
        .iter()
        .map(|fe| match fe {
            FixedEffect::Year => {
                let keys: Vec<i32> = keep.iter().map(|&i| panel.rows[i].year).collect();
                Factor::from_keys("year", &keys)
            }
            FixedEffect::Industry => {
                let keys: Vec<&str> = keep
                    .iter()
                    .map(|&i| &*panel.rows[i].industry_code)
                    .collect();
                Factor::from_keys("industry", &keys)
            }
        })
        .collect();
    let mut res = ols_columns(spec.dependent.name(), &y, &columns, &factors, spec.robust)?;
    res.deleted = panel.len() - keep.len();
    Ok(res)
}

fn centered_ss(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Sweeps the factors out of `y` and `x` in place; returns the number of
/// absorbed dimensions.
fn absorb(y: &mut [f64], x: &mut [Vec<f64>], factors: &[Factor]) -> Result<usize> {
    if factors.is_empty() {
        return Ok(0);
    }
    let n = y.len();
    let mut order: Vec<usize> = (0..factors.len()).collect();
    order.sort_by_key(|&f| std::cmp::Reverse(factors[f].n_levels()));
    let primary = &factors[order[0]];
    let g = primary.n_levels();
    let mut sizes = vec![0usize; g];
    for &l in &primary.levels {
        sizes[l] += 1;
    }
    let present = sizes.iter().filter(|&&s| s > 0).count();
    let demean = |v: &mut [f64]| {
        let mut sums = vec![0.0; g];
        for (i, &l) in primary.levels.iter().enumerate() {
            sums[l] += v[i];
        }
        for (i, &l) in primary.levels.iter().enumerate() {
            v[i] -= sums[l] / sizes[l] as f64;
        }
    };
    demean(y);
    x.par_iter_mut().for_each(|c| demean(c));

    // Secondary dummies: one id per row per factor, first level dropped.
    let mut offsets = Vec::new();
    let mut m = 0;
    for &f in &order[1..] {
        offsets.push(m);
        m += factors[f].n_levels().saturating_sub(1);
    }
    if m == 0 {
        return Ok(present);
    }
    let dummies = |i: usize| {
        order[1..].iter().zip(&offsets).filter_map(move |(&f, &o)| {
            let l = factors[f].levels[i];
            (l > 0).then(|| o + l - 1)
        })
    };
    // Within-group dummy means and their Gram matrix.
    let mut means = vec![0.0; g * m];
    for i in 0..n {
        let l = primary.levels[i];
        for d in dummies(i) {
            means[l * m + d] += 1.0;
        }
    }
    for l in 0..g {
        if sizes[l] > 0 {
            means[l * m..(l + 1) * m]
                .iter_mut()
                .for_each(|v| *v /= sizes[l] as f64);
        }
    }
    let mut gram = vec![vec![0.0; m]; m];
    for i in 0..n {
        let ds: Vec<usize> = dummies(i).collect();
        for &a in &ds {
            for &b in &ds {
                gram[a][b] += 1.0;
            }
        }
    }
    for l in 0..g {
        let row = &means[l * m..(l + 1) * m];
        let s = sizes[l] as f64;
        for a in 0..m {
            if row[a] == 0.0 {
                continue;
            }
            for b in 0..m {
                gram[a][b] -= s * row[a] * row[b];
            }
        }
    }
    let (chol, kept) = Cholesky::new_pivoting(&gram);
    let residualize = |v: &mut [f64]| {
        let mut rhs = vec![0.0; m];
        for i in 0..n {
            for d in dummies(i) {
                rhs[d] += v[i];
            }
        }
        let rhs_kept: Vec<f64> = kept.iter().map(|&d| rhs[d]).collect();
        let b_kept = chol.solve(&rhs_kept);
        let mut b = vec![0.0; m];
        for (&d, &bv) in kept.iter().zip(&b_kept) {
            b[d] = bv;
        }
        let shift: Vec<f64> = (0..g)
            .map(|l| {
                means[l * m..(l + 1) * m]
                    .iter()
                    .zip(&b)
                    .map(|(a, c)| a * c)
                    .sum()
            })
            .collect();
        for i in 0..n {
            let own: f64 = dummies(i).map(|d| b[d]).sum();
            v[i] -= own - shift[primary.levels[i]];
        }
    };
    residualize(y);
    x.par_iter_mut().for_each(|c| residualize(c));
    Ok(present + kept.len())
}

/// X'X and X'y summed per fixed-size chunk, chunks combined in order.
fn cross_products(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = x.len();
    let n = y.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partial: Vec<(Vec<f64>, Vec<f64>)> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + CHUNK).min(n);
            let mut xtx = vec![0.0; k * k];
            let mut xty = vec![0.0; k];
            for i in s..e {
                for a in 0..k {
                    let xa = x[a][i];
                    xty[a] += xa * y[i];
                    for b in a..k {
                        xtx[a * k + b] += xa * x[b][i];
                    }
                }
            }
            (xtx, xty)
        })
        .collect();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (pxx, pxy) in partial {
        for a in 0..k {
            xty[a] += pxy[a];
            for b in a..k {
                xtx[a][b] += pxx[a * k + b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[a][b] = xtx[b][a];
        }
    }
    (xtx, xty)
}

fn weighted_cross(x: &[Vec<f64>], e: &[f64]) -> Vec<Vec<f64>> {
    let w: Vec<f64> = e.iter().map(|v| v * v).collect();
    let k = x.len();
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a..k {
            let s: f64 = (0..e.len()).map(|i| w[i] * x[a][i] * x[b][i]).sum();
            out[a][b] = s;
            out[b][a] = s;
        }
    }
    out
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..b.len()).map(|t| a[i][t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

/// Earlier columns that `j` depends on, found by regressing it on them.
fn dependence(xtx: &[Vec<f64>], j: usize) -> Vec<usize> {
    let sub: Vec<Vec<f64>> = (0..j).map(|a| xtx[a][..j].to_vec()).collect();
    let (chol, kept) = Cholesky::new_pivoting(&sub);
    let rhs: Vec<f64> = kept.iter().map(|&a| xtx[a][j]).collect();
    let b = chol.solve(&rhs);
    kept.into_iter()
        .zip(b)
        .filter(|(_, v)| v.abs() > 1e-8)
        .map(|(a, _)| a)
        .collect()
}

/// Dense lower-triangular Cholesky factor.
struct Cholesky {
    l: Vec<Vec<f64>>,
}

impl Cholesky {
    /// Fails with the index of the first column that is (numerically) a
    /// combination of the earlier ones.
    fn new(a: &[Vec<f64>]) -> std::result::Result<Self, usize> {
        let n = a.len();
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            let d = a[j][j] - (0..j).map(|t| l[j][t] * l[j][t]).sum::<f64>();
            if !(d > PIVOT_TOL * a[j][j]) {
                return Err(j);
            }
            l[j][j] = d.sqrt();
            for i in j + 1..n {
                let s = a[i][j] - (0..j).map(|t| l[i][t] * l[j][t]).sum::<f64>();
                l[i][j] = s / l[j][j];
            }
        }
        Ok(Self { l })
    }

    /// Factors the submatrix of columns that are independent of the ones
    /// before them; returns the factor and the kept indices.
    fn new_pivoting(a: &[Vec<f64>]) -> (Self, Vec<usize>) {
        let mut kept: Vec<usize> = Vec::new();
        for j in 0..a.len() {
            let mut trial = kept.clone();
            trial.push(j);
            let sub: Vec<Vec<f64>> = trial
                .iter()
                .map(|&r| trial.iter().map(|&c| a[r][c]).collect())
                .collect();
            if a[j][j] > 0.0 && Cholesky::new(&sub).is_ok() {
                kept = trial;
            }
        }
        let sub: Vec<Vec<f64>> = kept
            .iter()
            .map(|&r| kept.iter().map(|&c| a[r][c]).collect())
            .collect();
        (
            Cholesky::new(&sub).expect("kept columns are independent"),
            kept,
        )
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let l = &self.l;
        let mut z = vec![0.0; n];
        for i in 0..n {
            z[i] = (b[i] - (0..i).map(|t| l[i][t] * z[t]).sum::<f64>()) / l[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (z[i] - (i + 1..n).map(|t| l[t][i] * x[t]).sum::<f64>()) / l[i][i];
        }
        x
    }

    fn inverse(&self) -> Vec<Vec<f64>> {
        let n = self.l.len();
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.solve(&e)
            })
            .collect();
        // Symmetrize round-off.
        for a in 0..n {
            for b in 0..a {
                let m = 0.5 * (cols[a][b] + cols[b][a]);
                cols[a][b] = m;
                cols[b][a] = m;
            }
        }
        cols
    }
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub variable: Var,
    /// Infinite under perfect collinearity.
    pub vif: f64,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifTable {
    pub entries: Vec<VifEntry>,
    pub mean: f64,
    pub observations: usize,
}

fn complete_columns(panel: &Panel, vars: &[Var]) -> Vec<Vec<f64>> {
    let keep: Vec<usize> = (0..panel.len())
        .filter(|&i| {
            vars.iter()
                .all(|&v| panel.rows[i].value(v).is_some_and(f64::is_finite))
        })
        .collect();
    vars.iter()
        .map(|&v| {
            keep.iter()
                .map(|&i| panel.rows[i].value(v).unwrap())
                .collect()
        })
        .collect()
}

/// VIF from auxiliary regressions of each column on the others.
pub fn vif_columns(names: &[Var], cols: &[Vec<f64>]) -> Result<VifTable> {
    if cols.len() < 2 {
        return Err(Error::Validation(
            "VIF needs at least two regressors".into(),
        ));
    }
    let entries: Vec<VifEntry> = (0..cols.len())
        .map(|j| {
            let others: Vec<(String, Vec<f64>)> = (0..cols.len())
                .filter(|&o| o != j)
                .map(|o| (names[o].name().to_owned(), cols[o].clone()))
                .collect();
            let (vif, flag) = if centered_ss(&cols[j]) == 0.0 {
                (f64::INFINITY, "constant".to_owned())
            } else {
                match ols_columns(names[j].name(), &cols[j], &others, &[], false) {
                    Ok(r) if r.r_squared < 1.0 - 1e-12 => {
                        ((1.0 / (1.0 - r.r_squared)).max(1.0), String::new())
                    }
                    Ok(_) => (f64::INFINITY, "collinear".to_owned()),
                    Err(Error::Numeric(m)) => (f64::INFINITY, format!("collinear: {m}")),
                    Err(e) => return Err(e),
                }
            };
            Ok(VifEntry {
                variable: names[j],
                vif,
                flag,
            })
        })
        .collect::<Result<_>>()?;
    let mean = entries.iter().map(|e| e.vif).sum::<f64>() / entries.len() as f64;
    Ok(VifTable {
        entries,
        mean,
        observations: cols[0].len(),
    })
}

pub fn vif(panel: &Panel, regressors: &[Var]) -> Result<VifTable> {
    vif_columns(regressors, &complete_columns(panel, regressors))
}

impl VifTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvSink::create(path, &["variable", "vif", "flag"])?;
        for e in &self.entries {
            out.row([e.variable.name().to_owned(), fmt_vif(e.vif), e.flag.clone()])?;
        }
        out.row(["mean".to_owned(), fmt_vif(self.mean), String::new()])?;
        out.finish()
    }
}

fn fmt_vif(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        fmt_f64(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub variables: Vec<Var>,
    /// `None` where a column is constant.
    pub values: Vec<Vec<Option<f64>>>,
    pub observations: usize,
}

pub fn correlation_columns(names: &[Var], cols: &[Vec<f64>]) -> CorrelationTable {
    let k = cols.len();
    let n = cols.first().map_or(0, Vec::len);
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let ss: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let mut values = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            if ss[a] == 0.0 || ss[b] == 0.0 {
                continue;
            }
            let r = if a == b {
                1.0
            } else {
                let s: f64 = centered[a]
                    .iter()
                    .zip(&centered[b])
                    .map(|(x, y)| x * y)
                    .sum();
                (s / (ss[a].sqrt() * ss[b].sqrt())).clamp(-1.0, 1.0)
            };
            values[a][b] = Some(r);
            values[b][a] = Some(r);
        }
    }
    CorrelationTable {
        variables: names.to_vec(),
        values,
        observations: n,
    }
}

pub fn correlation_table(panel: &Panel, variables: &[Var]) -> CorrelationTable {
    correlation_columns(variables, &complete_columns(panel, variables))
}

impl CorrelationTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["variable"];
        header.extend(self.variables.iter().map(|v| v.name()));
        let mut out = CsvSink::create(path, &header)?;
        for (v, row) in self.variables.iter().zip(&self.values) {
            let mut cells = vec![v.name().to_owned()];
            cells.extend(
                row.iter()
                    .map(|c| c.map(fmt_f64).unwrap_or_else(|| "NA".into())),
            );
            out.row(cells)?;
        }
        out.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Alternative: mean(a) < mean(b).
    Less,
    /// Alternative: mean(a) > mean(b).
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_one_sided(a: &[f64], b: &[f64], direction: Direction) -> Result<WelchResult> {
    let moments = |s: &[f64], label: &str| -> Result<(f64, f64, f64)> {
        if s.len() < 2 {
            return Err(Error::Validation(format!(
                "sample {label} has fewer than 2 values"
            )));
        }
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        if !(v > 0.0) {
            return Err(Error::Validation(format!(
                "sample {label} has zero variance"
            )));
        }
        Ok((n, m, v))
    };
    let (na, ma, va) = moments(a, "a")?;
    let (nb, mb, vb) = moments(b, "b")?;
    let (qa, qb) = (va / na, vb / nb);
    let se = (qa + qb).sqrt();
    let t = (ma - mb) / se;
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist =
        StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(format!("t distribution: {e}")))?;
    let p = match direction {
        Direction::Less => dist.cdf(t),
        Direction::Greater => dist.sf(t),
    };
    Ok(WelchResult { t, df, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variable: Var,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summary_stats(panel: &Panel, variables: &[Var]) -> Vec<SummaryRow> {
    variables
        .iter()
        .map(|&v| {
            let vals: Vec<f64> = panel.rows.iter().filter_map(|r| r.value(v)).collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let sd = if n < 2 {
                0.0
            } else {
                (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            SummaryRow {
                variable: v,
                n,
                mean,
                sd,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut out = CsvSink::create(path, &["variable", "n", "mean", "sd", "min", "max"])?;
    for r in rows {
        out.row([
            r.variable.name().to_owned(),
            r.n.to_string(),
            fmt_f64(r.mean),
            fmt_f64(r.sd),
            fmt_f64(r.min),
            fmt_f64(r.max),
        ])?;
    }
    out.finish()
}

// ---------------------------------------------------------------------------
// Rendering

/// Side-by-side text table: estimate with stars, standard error beneath.
pub fn render_text(models: &[(&str, &RegressionResult)]) -> String {
    let mut terms: Vec<String> = Vec::new();
    for (_, m) in models {
        for c in &m.coefficients {
            if !terms.contains(&c.term) {
                terms.push(c.term.clone());
            }
        }
    }
    let has_intercept = models.iter().any(|(_, m)| m.intercept.is_some());
    let mut lines: Vec<(String, Vec<String>)> = Vec::new();
    let cell = |c: Option<&Coefficient>| -> (String, String) {
        match c {
            Some(c) => (
                format!("{:.6}{}", c.estimate, c.stars()),
                format!("({:.6})", c.std_error),
            ),
            None => (String::new(), String::new()),
        }
    };
    for t in &terms {
        let (est, se): (Vec<_>, Vec<_>) =
            models.iter().map(|(_, m)| cell(m.coefficient(t))).unzip();
        lines.push((t.clone(), est));
        lines.push((String::new(), se));
    }
    if has_intercept {
        let (est, se): (Vec<_>, Vec<_>) = models
            .iter()
            .map(|(_, m)| cell(m.intercept.as_ref()))
            .unzip();
        lines.push(("Constant".into(), est));
        lines.push((String::new(), se));
    }
    let stat = |f: &dyn Fn(&RegressionResult) -> String| models.iter().map(|(_, m)| f(m)).collect();
    let stats: Vec<(String, Vec<String>)> = vec![
        (
            "Fixed effects".into(),
            stat(&|m| {
                if m.fixed_effects.is_empty() {
                    "none".into()
                } else {
                    m.fixed_effects.join("+")
                }
            }),
        ),
        ("Observations".into(), stat(&|m| m.observations.to_string())),
        (
            "Adjusted R2".into(),
            stat(&|m| format!("{:.6}", m.adj_r_squared)),
        ),
        (
            "Residual Std. Error".into(),
            stat(&|m| format!("{:.6} (df = {})", m.residual_se, m.df_resid)),
        ),
    ];
    let label_w = lines
        .iter()
        .chain(&stats)
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max(8);
    let col_w: Vec<usize> = (0..models.len())
        .map(|j| {
            lines
                .iter()
                .chain(&stats)
                .map(|(_, c)| c[j].len())
                .chain([models[j].0.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let total = label_w + col_w.iter().map(|w| w + 2).sum::<usize>();
    let rule = "-".repeat(total);
    let mut out = String::new();
    let dep = models.first().map_or("", |(_, m)| m.dependent.as_str());
    let _ = writeln!(out, "Dependent variable: {dep}");
    out.push_str(&rule);
    out.push('\n');
    let mut header = format!("{:label_w$}", "");
    for ((name, _), w) in models.iter().zip(&col_w) {
        let _ = write!(header, "  {name:>w$}");
    }
    out.push_str(header.trim_end());
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    let emit = |rows: &[(String, Vec<String>)], out: &mut String| {
        for (label, cells) in rows {
            let mut line = format!("{label:label_w$}");
            for (c, w) in cells.iter().zip(&col_w) {
                let _ = write!(line, "  {c:>w$}");
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
    };
    emit(&lines, &mut out);
    out.push_str(&rule);
    out.push('\n');
    emit(&stats, &mut out);
    out.push_str(&rule);
    out.push('\n');
    let robust = models.iter().any(|(_, m)| m.robust);
    let _ = writeln!(out, "Note: *p<0.1; **p<0.05; ***p<0.01");
    let _ = writeln!(
        out,
        "Standard errors: {}",
        if robust {
            "heteroskedasticity-robust (HC1)"
        } else {
            "conventional"
        }
    );
    let _ = writeln!(out, "Estimator: {ESTIMATOR_NOTE}");
    out
}

pub const RESULT_HEADER: [&str; 8] = [
    "model",
    "term",
    "estimate",
    "std_error",
    "t_value",
    "p_value",
    "stars",
    "note",
];

/// Long-format CSV: one line per coefficient, then fit statistics.
pub fn write_results_csv(models: &[(&str, &RegressionResult)], path: &Path) -> Result<()> {
    let mut out = CsvSink::create(path, &RESULT_HEADER)?;
    for (name, m) in models {
        for c in m.intercept.iter().chain(&m.coefficients) {
            out.row([
                name.to_string(),
                c.term.clone(),
                fmt_f64(c.estimate),
                fmt_f64(c.std_error),
                fmt_f64(c.t_value),
                fmt_f64(c.p_value),
                c.stars().to_owned(),
                String::new(),
            ])?;
        }
        let stats = [
            ("observations", m.observations as f64),
            ("deleted", m.deleted as f64),
            ("df_resid", m.df_resid as f64),
            ("r_squared", m.r_squared),
            ("adj_r_squared", m.adj_r_squared),
            ("residual_se", m.residual_se),
        ];
        for (label, v) in stats {
            out.row([
                name.to_string(),
                label.to_owned(),
                fmt_f64(v),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        out.row([
            name.to_string(),
            "fixed_effects".to_owned(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            m.fixed_effects.join("+"),
        ])?;
    }
    out.finish()
}
