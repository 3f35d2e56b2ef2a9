//! Exports (technology-space graph, category heatmap) and the end-to-end
//! pipeline with its run manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::advantage::{compute_rta, detect_entries, write_entries, RtaSeries, RtaSlice};
use crate::complexity::{
    default_periods, figure2_dataset, mor, tci_transform, write_figure2, ComplexityScores, TciSlice,
};
use crate::corpus::{
    build_counts_in, load_firms, load_gov_support, load_patents, load_taxonomy, merge_families,
    write_rejects, Category, CountCube, CpcLevel, FirmRecord, GovFlags, I4TMap, Reject,
    SchemaConfig,
};
use crate::econometrics::{
    correlation_table, ols_fe, render_text, summary_stats, vif, welch_one_sided, write_results_csv,
    write_summary, Direction, FixedEffect, RegressionResult, RegressionSpec, ESTIMATOR_NOTE,
};
use crate::error::{Error, Result};
use crate::panel::{
    assemble_panel, box_cox_by_year, default_lambda_grid, split, Panel, PanelBuild, PanelConfig,
    PanelSources, SplitScheme, Var,
};
use crate::relatedness::{density_panel, year_structures, ProximityMatrix};
use crate::table::{fmt_f64, write_text, CsvSink};

// ---------------------------------------------------------------------------
// Technology space

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeptReason {
    SpanningTree,
    AboveThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceNode {
    pub tech_code: String,
    pub patent_count: u64,
    pub i4t_category: Option<Category>,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceEdge {
    pub a: String,
    pub b: String,
    pub weight: f64,
    pub kept_reason: KeptReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGraph {
    pub threshold: f64,
    pub nodes: Vec<SpaceNode>,
    pub edges: Vec<SpaceEdge>,
    /// Sizes of the connected components, indexed by `SpaceNode::component`.
    pub components: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

/// Maximum spanning forest of the positive-proximity graph over technologies
/// with at least one patent, plus every other edge with `φ ≥ threshold`.
/// `patent_counts` is aligned with `prox.techs`.
pub fn export_space(
    prox: &ProximityMatrix,
    patent_counts: &[u64],
    taxonomy: &I4TMap,
    threshold: f64,
) -> Result<SpaceGraph> {
    if prox.n() == 0 {
        return Err(Error::Validation("empty proximity matrix".into()));
    }
    if patent_counts.len() != prox.n() {
        return Err(Error::Validation(
            "patent counts do not match proximity axis".into(),
        ));
    }
    let kept: Vec<usize> = (0..prox.n()).filter(|&a| patent_counts[a] > 0).collect();
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (x, &a) in kept.iter().enumerate() {
        for (y, &b) in kept.iter().enumerate().skip(x + 1) {
            let w = prox.get(a, b);
            if w > 0.0 {
                candidates.push((x, y, w));
            }
        }
    }
    candidates.sort_by(|p, q| q.2.total_cmp(&p.2).then((p.0, p.1).cmp(&(q.0, q.1))));
    let mut uf = UnionFind::new(kept.len());
    let mut edges = Vec::new();
    for &(x, y, w) in &candidates {
        let reason = if uf.union(x, y) {
            KeptReason::SpanningTree
        } else if w >= threshold {
            KeptReason::AboveThreshold
        } else {
            continue;
        };
        edges.push(SpaceEdge {
            a: prox.techs[kept[x]].clone(),
            b: prox.techs[kept[y]].clone(),
            weight: w,
            kept_reason: reason,
        });
    }
    let mut comp_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut components = Vec::new();
    let mut nodes = Vec::with_capacity(kept.len());
    for (x, &a) in kept.iter().enumerate() {
        let root = uf.find(x);
        let next = comp_id.len();
        let id = *comp_id.entry(root).or_insert(next);
        if id == components.len() {
            components.push(0);
        }
        components[id] += 1;
        nodes.push(SpaceNode {
            tech_code: prox.techs[a].clone(),
            patent_count: patent_counts[a],
            i4t_category: taxonomy.classify(&prox.techs[a]),
            component: id,
        });
    }
    Ok(SpaceGraph {
        threshold,
        nodes,
        edges,
        components,
    })
}

impl SpaceGraph {
    pub fn tree_edges(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| e.kept_reason == KeptReason::SpanningTree)
            .count()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("cannot serialize space graph: {e}")))?;
        write_text(path, &(text + "\n"))
    }

    pub fn write_edges_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvSink::create(path, &["a", "b", "weight", "kept_reason"])?;
        for e in &self.edges {
            let reason = match e.kept_reason {
                KeptReason::SpanningTree => "spanning_tree",
                KeptReason::AboveThreshold => "above_threshold",
            };
            out.row([e.a.as_str(), &e.b, &fmt_f64(e.weight), reason])?;
        }
        out.finish()
    }
}

// ---------------------------------------------------------------------------
// Category heatmap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// Categories in clustering order.
    pub categories: Vec<Category>,
    pub values: Vec<Vec<f64>>,
    pub codes: Vec<usize>,
    /// Categories of the taxonomy with no technology in the matrix.
    pub omitted: Vec<Category>,
}

/// Mean proximity between and within categories, ordered by average-linkage
/// clustering on `1 − value`.
pub fn export_i4t_heatmap(prox: &ProximityMatrix, taxonomy: &I4TMap) -> Result<Heatmap> {
    let mut members: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (a, t) in prox.techs.iter().enumerate() {
        if let Some(c) = taxonomy.classify(t) {
            members.entry(c).or_default().push(a);
        }
    }
    let listed: BTreeSet<Category> = taxonomy.entries().map(|(_, c)| c).collect();
    let omitted: Vec<Category> = listed
        .iter()
        .filter(|c| !members.contains_key(c))
        .copied()
        .collect();
    if members.len() < 2 {
        return Err(Error::Validation(format!(
            "heatmap needs at least 2 categories with codes, found {}",
            members.len()
        )));
    }
    let cats: Vec<Category> = members.keys().copied().collect();
    let k = cats.len();
    let mut values = vec![vec![0.0; k]; k];
    for x in 0..k {
        for y in x..k {
            let (ma, mb) = (&members[&cats[x]], &members[&cats[y]]);
            let v = if x == y {
                if ma.len() == 1 {
                    1.0
                } else {
                    let mut s = 0.0;
                    let mut n = 0usize;
                    for (i, &a) in ma.iter().enumerate() {
                        for &b in &ma[i + 1..] {
                            s += prox.get(a, b);
                            n += 1;
                        }
                    }
                    s / n as f64
                }
            } else {
                let s: f64 = ma
                    .iter()
                    .flat_map(|&a| mb.iter().map(move |&b| (a, b)))
                    .map(|(a, b)| prox.get(a, b))
                    .sum();
                s / (ma.len() * mb.len()) as f64
            };
            values[x][y] = v;
            values[y][x] = v;
        }
    }
    let order = average_linkage_order(&values);
    Ok(Heatmap {
        categories: order.iter().map(|&i| cats[i]).collect(),
        values: order
            .iter()
            .map(|&i| order.iter().map(|&j| values[i][j]).collect())
            .collect(),
        codes: order.iter().map(|&i| members[&cats[i]].len()).collect(),
        omitted,
    })
}

/// Leaf order of UPGMA on distances `1 − similarity`. Ties merge the pair
/// with the lowest indices; a merged cluster lists its lower-indexed side
/// first.
pub fn average_linkage_order(similarity: &[Vec<f64>]) -> Vec<usize> {
    let n = similarity.len();
    let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let dist = |a: &[usize], b: &[usize]| -> f64 {
        let s: f64 = a
            .iter()
            .flat_map(|&i| b.iter().map(move |&j| 1.0 - similarity[i][j]))
            .sum();
        s / (a.len() * b.len()) as f64
    };
    loop {
        let live: Vec<usize> = (0..n).filter(|&i| clusters[i].is_some()).collect();
        if live.len() <= 1 {
            return live
                .first()
                .and_then(|&i| clusters[i].clone())
                .unwrap_or_default();
        }
        let mut best = (f64::INFINITY, 0, 0);
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                let d = dist(clusters[i].as_ref().unwrap(), clusters[j].as_ref().unwrap());
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let right = clusters[j].take().unwrap();
        clusters[i].as_mut().unwrap().extend(right);
    }
}

impl Heatmap {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["category", "codes"];
        header.extend(self.categories.iter().map(|c| c.name()));
        let mut out = CsvSink::create(path, &header)?;
        for (x, c) in self.categories.iter().enumerate() {
            let mut row = vec![c.name().to_owned(), self.codes[x].to_string()];
            row.extend(self.values[x].iter().map(|&v| fmt_f64(v)));
            out.row(row)?;
        }
        out.finish()
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub patents: PathBuf,
    pub firms: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub first_year: Option<i32>,
    pub last_year: Option<i32>,
    pub cpc_level: CpcLevel,
    /// Years a qualifying support project flags its cells.
    pub gov_persistence: u32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            first_year: None,
            last_year: None,
            cpc_level: CpcLevel::Subclass,
            gov_persistence: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub box_cox: bool,
    pub variables: Vec<Var>,
    pub lambda_grid: Vec<f64>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            box_cox: true,
            variables: Var::TRANSFORMED.to_vec(),
            lambda_grid: default_lambda_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sample {
    #[default]
    All,
    /// Rows whose technology belongs to an I4T category.
    I4t,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub name: String,
    #[serde(default)]
    pub sample: Sample,
    #[serde(default = "entry_var")]
    pub dependent: Var,
    pub regressors: Vec<Var>,
    #[serde(default = "both_effects")]
    pub fixed_effects: Vec<FixedEffect>,
    #[serde(default)]
    pub robust: bool,
}

fn entry_var() -> Var {
    Var::Entry
}

fn both_effects() -> Vec<FixedEffect> {
    vec![FixedEffect::Year, FixedEffect::Industry]
}

impl RegressionConfig {
    pub fn spec(&self) -> RegressionSpec {
        RegressionSpec {
            dependent: self.dependent,
            regressors: self.regressors.clone(),
            fixed_effects: self.fixed_effects.clone(),
            estimator: Default::default(),
            robust: self.robust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub name: String,
    pub key: Var,
    pub scheme: SplitScheme,
    /// Name of the regression re-estimated on every group.
    pub regression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    pub threshold: f64,
    /// Year of the exported graph and heatmap; the last corpus year if unset.
    pub year: Option<i32>,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            threshold: 0.25,
            year: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure2Config {
    pub periods: Vec<(i32, i32)>,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Self {
            periods: default_periods(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Overridden by the command line when given there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub inputs: InputPaths,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub schema: SchemaConfig,
    #[serde(default)]
    pub panel: PanelConfig,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default = "default_regressions")]
    pub regressions: Vec<RegressionConfig>,
    #[serde(default = "default_splits")]
    pub splits: Vec<SplitConfig>,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub figure2: Figure2Config,
}

pub fn default_regressions() -> Vec<RegressionConfig> {
    let controls = vec![
        Var::Age,
        Var::NumEmployee,
        Var::NumCompetitor,
        Var::NumRta,
        Var::ProfitRatio,
        Var::DebtRatio,
    ];
    let core = vec![Var::Omega, Var::Tci, Var::Gov];
    let mk = |name: &str, regressors: Vec<Var>| RegressionConfig {
        name: name.into(),
        sample: Sample::All,
        dependent: Var::Entry,
        regressors,
        fixed_effects: both_effects(),
        robust: false,
    };
    vec![
        mk("core", core.clone()),
        mk("full", core.iter().chain(&controls).copied().collect()),
        mk("controls", controls),
    ]
}

pub fn default_splits() -> Vec<SplitConfig> {
    vec![
        SplitConfig {
            name: "relatedness".into(),
            key: Var::Omega,
            scheme: SplitScheme::DecileExtremes,
            regression: "full".into(),
        },
        SplitConfig {
            name: "tech_stock".into(),
            key: Var::NumRta,
            scheme: SplitScheme::Quartiles,
            regression: "full".into(),
        },
        SplitConfig {
            name: "size".into(),
            key: Var::NumEmployee,
            scheme: SplitScheme::Quartiles,
            regression: "full".into(),
        },
    ]
}

impl PipelineConfig {
    /// Minimal configuration over the given inputs.
    pub fn new(inputs: InputPaths) -> Self {
        Self {
            seed: 0,
            out_dir: None,
            inputs,
            corpus: CorpusConfig::default(),
            schema: SchemaConfig::default(),
            panel: PanelConfig::default(),
            transform: TransformConfig::default(),
            regressions: default_regressions(),
            splits: default_splits(),
            space: SpaceConfig::default(),
            figure2: Figure2Config::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        match (self.corpus.first_year, self.corpus.last_year) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }

    /// Checks everything that can be checked without reading the inputs.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if let (Some(a), Some(b)) = (self.corpus.first_year, self.corpus.last_year) {
            if a > b {
                return Err(Error::Config(format!("empty year range {a}..{b}")));
            }
        }
        if self.corpus.first_year.is_some() != self.corpus.last_year.is_some() {
            return Err(Error::Config(
                "set both first_year and last_year or neither".into(),
            ));
        }
        for (role, p) in self.input_list() {
            let full = base.join(p);
            if !full.is_file() {
                return Err(Error::Validation(format!(
                    "{role} input not found: {}",
                    full.display()
                )));
            }
        }
        let mut names = BTreeSet::new();
        for r in &self.regressions {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!(
                    "regression `{}` defined twice",
                    r.name
                )));
            }
            r.spec().validate()?;
        }
        for s in &self.splits {
            if !names.contains(s.regression.as_str()) {
                return Err(Error::Config(format!(
                    "split `{}` refers to unknown regression `{}`",
                    s.name, s.regression
                )));
            }
        }
        if self.transform.box_cox && self.transform.lambda_grid.is_empty() {
            return Err(Error::Config("empty lambda grid".into()));
        }
        if !(self.space.threshold >= 0.0) {
            return Err(Error::Config("space threshold must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn input_list(&self) -> Vec<(&'static str, &Path)> {
        let mut v = vec![
            ("patents", self.inputs.patents.as_path()),
            ("firms", self.inputs.firms.as_path()),
        ];
        if let Some(p) = &self.inputs.support {
            v.push(("support", p));
        }
        if let Some(p) = &self.inputs.taxonomy {
            v.push(("taxonomy", p));
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Stages

/// Cleaned inputs and the count cube.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub cube: CountCube,
    pub firms: Vec<FirmRecord>,
    pub gov: GovFlags,
    pub taxonomy: I4TMap,
    /// `(table, reject)` for every dropped input row.
    pub rejects: Vec<(String, Reject)>,
    pub families: usize,
}

pub fn ingest(config: &PipelineConfig, base: &Path) -> Result<Ingested> {
    let years = config.year_range();
    let schema = &config.schema;
    let level = config.corpus.cpc_level;
    let patents = load_patents(&base.join(&config.inputs.patents), schema, years)?;
    let firms = load_firms(&base.join(&config.inputs.firms), schema)?;
    let mut rejects: Vec<(String, Reject)> = Vec::new();
    rejects.extend(
        patents
            .rejects
            .into_iter()
            .map(|r| ("patents".to_owned(), r)),
    );
    rejects.extend(firms.rejects.into_iter().map(|r| ("firms".to_owned(), r)));

    let known: BTreeSet<&str> = firms.records.iter().map(|f| f.firm_id.as_str()).collect();
    let mut matched = Vec::with_capacity(patents.records.len());
    for (k, r) in patents.records.into_iter().enumerate() {
        if known.contains(r.firm_id.as_str()) {
            matched.push(r);
        } else {
            rejects.push((
                "patents".into(),
                Reject {
                    row_number: k + 1,
                    reason: format!("unmatched firm {}", r.firm_id),
                },
            ));
        }
    }
    let families = merge_families(&matched);
    if families.is_empty() {
        return Err(Error::Data("no usable patents".into()));
    }
    let cube = build_counts_in(&families, level, years)?;

    let gov = match &config.inputs.support {
        Some(p) => {
            let (g, rej) =
                load_gov_support(&base.join(p), schema, level, config.corpus.gov_persistence)?;
            rejects.extend(rej.into_iter().map(|r| ("support".to_owned(), r)));
            g
        }
        None => GovFlags::default(),
    };
    let taxonomy = match &config.inputs.taxonomy {
        Some(p) => {
            let (t, rej) = load_taxonomy(&base.join(p), schema)?;
            rejects.extend(rej.into_iter().map(|r| ("taxonomy".to_owned(), r)));
            t
        }
        None => I4TMap::default(),
    };
    Ok(Ingested {
        cube,
        firms: firms.records,
        gov,
        taxonomy,
        rejects,
        families: families.len(),
    })
}

pub fn rta_all_years(cube: &CountCube) -> Vec<RtaSlice> {
    cube.years()
        .filter_map(|y| compute_rta(cube, y).ok())
        .collect()
}

pub fn write_rta(path: &Path, slices: &[RtaSlice]) -> Result<()> {
    let mut out = CsvSink::create(path, &["firm_id", "tech_code", "year", "rta"])?;
    for s in slices {
        s.write_csv(&mut out)?;
    }
    out.finish()
}

pub fn write_proximity(
    path: &Path,
    cube: &CountCube,
    window: &crate::relatedness::WindowConfig,
) -> Result<()> {
    let mut out = CsvSink::create(path, &["year", "a", "b", "phi"])?;
    for y in cube.years() {
        if let Ok((_, prox)) = year_structures(cube, y, window) {
            prox.write_triplets(&mut out, y)?;
        }
    }
    out.finish()
}

/// MOR and TCI for every year of the cube; years where complexity is
/// undefined are reported in the warnings.
pub fn complexity_all_years(
    cube: &CountCube,
    config: &PanelConfig,
) -> (Vec<(i32, ComplexityScores)>, Vec<TciSlice>, Vec<String>) {
    let mut scores = Vec::new();
    let mut tci = Vec::new();
    let mut warnings = Vec::new();
    for y in cube.years() {
        let adv = match compute_rta(cube, y) {
            Ok(r) => crate::advantage::advantage_matrix(&r),
            Err(e) => {
                warnings.push(format!("complexity {y}: {e}"));
                continue;
            }
        };
        match mor(&adv, config.iterations) {
            Ok(s) => {
                match tci_transform(&s, y, &config.tci) {
                    Ok(t) => tci.push(t),
                    Err(e) => warnings.push(format!("tci {y}: {e}")),
                }
                scores.push((y, s));
            }
            Err(e) => warnings.push(format!("complexity {y}: {e}")),
        }
    }
    (scores, tci, warnings)
}

pub fn write_complexity(path: &Path, scores: &[(i32, ComplexityScores)]) -> Result<()> {
    let mut out = CsvSink::create(path, &["year", "side", "id", "iteration", "score"])?;
    for (y, s) in scores {
        s.write_csv(&mut out, *y)?;
    }
    out.finish()
}

pub fn write_tci(path: &Path, slices: &[TciSlice]) -> Result<()> {
    let mut out = CsvSink::create(path, &["tech_code", "year", "raw", "rank", "tci"])?;
    for s in slices {
        s.write_csv(&mut out)?;
    }
    out.finish()
}

/// Patent-family incidences per technology over `years`.
pub fn tech_totals(cube: &CountCube, years: &[i32]) -> Vec<u64> {
    let nt = cube.techs().len();
    let pooled = cube.pooled(years.iter().copied());
    (0..nt)
        .map(|a| pooled.iter().skip(a).step_by(nt).sum())
        .collect()
}

/// Regression on the selected sample, as named in the config.
pub fn run_regression(panel: &Panel, config: &RegressionConfig) -> Result<RegressionResult> {
    match config.sample {
        Sample::All => ols_fe(panel, &config.spec()),
        Sample::I4t => ols_fe(&panel.filter(|r| r.i4t_category.is_some()), &config.spec()),
    }
}

/// Per-group estimates of one split; failed groups carry their error.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub name: String,
    pub groups: Vec<(String, usize, std::result::Result<RegressionResult, String>)>,
}

/// Groups by `key` on `raw` and estimates on the aligned rows of `estimation`.
pub fn split_regress(
    raw: &Panel,
    estimation: &Panel,
    split_cfg: &SplitConfig,
    regression: &RegressionConfig,
) -> Result<SplitOutcome> {
    if raw.len() != estimation.len() {
        return Err(Error::Validation(
            "split and estimation panels are not aligned".into(),
        ));
    }
    let sample_rows: Vec<usize> = match regression.sample {
        Sample::All => (0..raw.len()).collect(),
        Sample::I4t => (0..raw.len())
            .filter(|&i| raw.rows[i].i4t_category.is_some())
            .collect(),
    };
    let raw_sample = raw.select(&sample_rows);
    let est_sample = estimation.select(&sample_rows);
    let s = split(&raw_sample, split_cfg.key, split_cfg.scheme)?;
    let spec = regression.spec();
    let groups = s
        .groups
        .into_iter()
        .map(|(label, idx)| {
            let n = idx.len();
            let res = ols_fe(&est_sample.select(&idx), &spec).map_err(|e| e.to_string());
            (label, n, res)
        })
        .collect();
    Ok(SplitOutcome {
        name: split_cfg.name.clone(),
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub year: i32,
    pub variable: String,
    pub direction: Direction,
    pub n_i4t: usize,
    pub n_all: usize,
    pub mean_i4t: f64,
    pub mean_all: f64,
    pub result: Option<crate::econometrics::WelchResult>,
}

/// Age (I4T firms younger) and size (I4T firms larger) of firms with any I4T
/// patent against all patenting firms, per year.
pub fn i4t_firm_tests(ing: &Ingested) -> Vec<TTestRow> {
    let cube = &ing.cube;
    let nt = cube.techs().len();
    let i4t: Vec<bool> = cube
        .techs()
        .iter()
        .map(|t| ing.taxonomy.classify(t).is_some())
        .collect();
    let records: HashMap<&str, &FirmRecord> =
        ing.firms.iter().map(|f| (f.firm_id.as_str(), f)).collect();
    let mut out = Vec::new();
    for y in cube.years() {
        let slice = cube.slice(y).expect("year in cube");
        let mut age = (Vec::new(), Vec::new());
        let mut size = (Vec::new(), Vec::new());
        for (i, f) in cube.firms().iter().enumerate() {
            let row = &slice[i * nt..(i + 1) * nt];
            if row.iter().all(|&c| c == 0) {
                continue;
            }
            let Some(rec) = records.get(f.as_str()) else {
                continue;
            };
            let has_i4t = row.iter().zip(&i4t).any(|(&c, &m)| m && c > 0);
            let a = (y - rec.founding_year) as f64;
            age.1.push(a);
            if has_i4t {
                age.0.push(a);
            }
            if let Some(e) = rec.years.get(&y).and_then(|fy| fy.employees) {
                size.1.push(e);
                if has_i4t {
                    size.0.push(e);
                }
            }
        }
        for (name, (a, b), dir) in [
            ("age", age, Direction::Less),
            ("num_employee", size, Direction::Greater),
        ] {
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            out.push(TTestRow {
                year: y,
                variable: name.into(),
                direction: dir,
                n_i4t: a.len(),
                n_all: b.len(),
                mean_i4t: mean(&a),
                mean_all: mean(&b),
                result: welch_one_sided(&a, &b, dir).ok(),
            });
        }
    }
    out
}

pub fn write_ttests(path: &Path, rows: &[TTestRow]) -> Result<()> {
    let mut out = CsvSink::create(
        path,
        &[
            "year",
            "variable",
            "alternative",
            "n_i4t",
            "n_all",
            "mean_i4t",
            "mean_all",
            "t",
            "df",
            "p",
        ],
    )?;
    for r in rows {
        let alt = match r.direction {
            Direction::Less => "i4t_less",
            Direction::Greater => "i4t_greater",
        };
        let (t, df, p) = r
            .result
            .map_or((String::new(), String::new(), String::new()), |w| {
                (fmt_f64(w.t), fmt_f64(w.df), fmt_f64(w.p))
            });
        out.row([
            r.year.to_string(),
            r.variable.clone(),
            alt.to_owned(),
            r.n_i4t.to_string(),
            r.n_all.to_string(),
            fmt_f64(r.mean_i4t),
            fmt_f64(r.mean_all),
            t,
            df,
            p,
        ])?;
    }
    out.finish()
}

pub fn write_splits(txt: &Path, csv: &Path, outcomes: &[SplitOutcome]) -> Result<()> {
    let mut text = String::new();
    let mut models: Vec<(String, RegressionResult)> = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        let ok: Vec<(String, &RegressionResult)> = o
            .groups
            .iter()
            .filter_map(|(label, _, r)| r.as_ref().ok().map(|r| (format!("{}:{label}", o.name), r)))
            .collect();
        text.push_str(&format!("Split: {}\n", o.name));
        let refs: Vec<(&str, &RegressionResult)> =
            ok.iter().map(|(l, r)| (l.as_str(), *r)).collect();
        if !refs.is_empty() {
            text.push_str(&render_text(&refs));
        }
        for (label, n, r) in &o.groups {
            if let Err(e) = r {
                text.push_str(&format!("group {label} ({n} rows) failed: {e}\n"));
                failures.push((format!("{}:{label}", o.name), e.clone()));
            }
        }
        text.push('\n');
        models.extend(ok.into_iter().map(|(l, r)| (l, r.clone())));
    }
    write_text(txt, &text)?;
    let refs: Vec<(&str, &RegressionResult)> =
        models.iter().map(|(l, r)| (l.as_str(), r)).collect();
    write_results_csv(&refs, csv)?;
    if !failures.is_empty() {
        let mut out = CsvSink::create(&csv.with_extension("failures.csv"), &["model", "error"])?;
        for (m, e) in failures {
            out.row([m, e])?;
        }
        out.finish()?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<(String, FileDigest)>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
    pub estimator: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
const LOCK_FILE: &str = ".techspace.lock";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::Validation(format!(
                        "output directory {} is in use (lock file present)",
                        dir.display()
                    ))
                } else {
                    Error::io(&path, e)
                }
            })?;
        Ok(Self { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Removes written files unless the run is committed.
struct RunDir {
    dir: PathBuf,
    written: Vec<String>,
    committed: bool,
    _lock: DirLock,
}

impl RunDir {
    fn open(dir: &Path) -> Result<Self> {
        let lock = DirLock::acquire(dir)?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
            committed: false,
            _lock: lock,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_owned());
        self.dir.join(name)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.committed {
            for name in &self.written {
                let _ = fs::remove_file(self.dir.join(name));
            }
        }
    }
}

/// Everything a pipeline run computed, for callers that continue in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub panel: Panel,
    pub regressions: Vec<(String, RegressionResult)>,
}

/// Runs every stage and writes all artifacts to `out_dir`. Relative input
/// paths resolve against `base`.
pub fn run_pipeline(config: &PipelineConfig, base: &Path, out_dir: &Path) -> Result<RunOutput> {
    config.validate(base)?;
    let mut run = RunDir::open(out_dir)?;
    let mut timings: Vec<(&'static str, f64)> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let ing = ingest(config, base).map_err(|e| e.in_stage("corpus"))?;
    (|| -> Result<()> {
        write_rejects(&run.path("rejects.csv"), &ing.rejects)?;
        ing.cube.write_csv(&run.path("counts.csv"))?;
        ing.gov.write_csv(&run.path("gov.csv"))
    })()
    .map_err(|e| e.in_stage("corpus"))?;
    if !ing.rejects.is_empty() {
        warnings.push(format!("{} input rows rejected", ing.rejects.len()));
    }
    lap("corpus", &mut timings);

    let cube = &ing.cube;
    (|| -> Result<()> {
        let slices = rta_all_years(cube);
        write_rta(&run.path("rta.csv"), &slices)?;
        let series = RtaSeries::from_slices(cube, &slices);
        write_entries(
            &run.path("entries.csv"),
            &detect_entries(&series, config.panel.lead, config.panel.persistence),
        )
    })()
    .map_err(|e| e.in_stage("advantage"))?;
    lap("advantage", &mut timings);

    (|| -> Result<()> {
        write_proximity(&run.path("proximity.csv"), cube, &config.panel.window)?;
        let years: Vec<i32> = cube.years().collect();
        density_panel(cube, &years, &config.panel.window)?.write_csv(&run.path("density.csv"))
    })()
    .map_err(|e| e.in_stage("relatedness"))?;
    lap("relatedness", &mut timings);

    (|| -> Result<()> {
        let (scores, tci, w) = complexity_all_years(cube, &config.panel);
        warnings.extend(w);
        write_complexity(&run.path("complexity.csv"), &scores)?;
        write_tci(&run.path("tci.csv"), &tci)?;
        if !ing.taxonomy.is_empty() {
            let rows = figure2_dataset(
                cube,
                &ing.taxonomy,
                &config.figure2.periods,
                config.panel.iterations,
            )?;
            write_figure2(&run.path("figure2.csv"), &rows)?;
        }
        Ok(())
    })()
    .map_err(|e| e.in_stage("complexity"))?;
    lap("complexity", &mut timings);

    let sources = PanelSources {
        cube,
        firms: &ing.firms,
        gov: &ing.gov,
        taxonomy: &ing.taxonomy,
    };
    let (build, estimation) = (|| -> Result<(PanelBuild, Panel)> {
        let build = assemble_panel(sources, None, &config.panel)?;
        if build.panel.is_empty() {
            return Err(Error::Data("panel is empty".into()));
        }
        build.panel.write_csv(&run.path("panel.csv"))?;
        let estimation = if config.transform.box_cox {
            let (t, report) = box_cox_by_year(
                &build.panel,
                &config.transform.variables,
                &config.transform.lambda_grid,
            )?;
            t.write_csv(&run.path("panel_transformed.csv"))?;
            report.write_csv(&run.path("transform_report.csv"))?;
            t
        } else {
            build.panel.clone()
        };
        Ok((build, estimation))
    })()
    .map_err(|e| e.in_stage("panel"))?;
    warnings.extend(build.warnings.iter().cloned());
    lap("panel", &mut timings);

    let regressions = (|| -> Result<Vec<(String, RegressionResult)>> {
        let raw = &build.panel;
        write_summary(
            &summary_stats(raw, &Var::ALL),
            &run.path("summary_stats.csv"),
        )?;
        let diag_vars: Vec<Var> = config
            .regressions
            .iter()
            .max_by_key(|r| r.regressors.len())
            .map(|r| r.regressors.clone())
            .unwrap_or_default();
        let mut corr_vars = vec![Var::Entry];
        corr_vars.extend(diag_vars.iter().copied().filter(|v| *v != Var::Entry));
        correlation_table(&estimation, &corr_vars).write_csv(&run.path("correlation.csv"))?;
        if diag_vars.len() >= 2 {
            vif(&estimation, &diag_vars)?.write_csv(&run.path("vif.csv"))?;
        }
        write_ttests(&run.path("ttests.csv"), &i4t_firm_tests(&ing))?;

        let mut results = Vec::new();
        for r in &config.regressions {
            let res = run_regression(&estimation, r).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("regression `{}`: {m}", r.name)),
                other => other,
            })?;
            results.push((r.name.clone(), res));
        }
        let refs: Vec<(&str, &RegressionResult)> =
            results.iter().map(|(n, r)| (n.as_str(), r)).collect();
        write_text(&run.path("regressions.txt"), &render_text(&refs))?;
        write_results_csv(&refs, &run.path("regressions.csv"))?;

        let mut outcomes = Vec::new();
        for s in &config.splits {
            let reg = config
                .regressions
                .iter()
                .find(|r| r.name == s.regression)
                .expect("validated");
            match split_regress(raw, &estimation, s, reg) {
                Ok(o) => outcomes.push(o),
                Err(e) => warnings.push(format!("split `{}` skipped: {e}", s.name)),
            }
        }
        for o in &outcomes {
            for (label, _, r) in &o.groups {
                if let Err(e) = r {
                    warnings.push(format!("split `{}` group {label}: {e}", o.name));
                }
            }
        }
        run.written.push("splits.failures.csv".into());
        write_splits(&run.path("splits.txt"), &run.path("splits.csv"), &outcomes)?;
        Ok(results)
    })()
    .map_err(|e| e.in_stage("econometrics"))?;
    lap("econometrics", &mut timings);

    (|| -> Result<()> {
        let year = config.space.year.unwrap_or(cube.last_year());
        if !cube.has_year(year) {
            return Err(Error::Validation(format!(
                "space year {year} outside corpus"
            )));
        }
        let (_, prox) = year_structures(cube, year, &config.panel.window)?;
        let totals = tech_totals(cube, &[year]);
        let graph = export_space(&prox, &totals, &ing.taxonomy, config.space.threshold)?;
        graph.write_json(&run.path("space.json"))?;
        graph.write_edges_csv(&run.path("space_edges.csv"))?;
        if graph.components.len() > 1 {
            warnings.push(format!(
                "technology space has {} components",
                graph.components.len()
            ));
        }
        match export_i4t_heatmap(&prox, &ing.taxonomy) {
            Ok(h) => {
                h.write_csv(&run.path("heatmap.csv"))?;
                for c in h.omitted {
                    warnings.push(format!("heatmap: category {c} has no codes"));
                }
            }
            Err(e) => warnings.push(format!("heatmap skipped: {e}")),
        }
        Ok(())
    })()
    .map_err(|e| e.in_stage("exports"))?;
    lap("exports", &mut timings);

    // Manifest: hashes of every artifact present, config echo without the
    // output location.
    let mut echo = config.clone();
    echo.out_dir = None;
    let mut outputs = Vec::new();
    let mut names: Vec<String> = run.written.clone();
    names.sort();
    names.dedup();
    for name in names {
        let p = out_dir.join(&name);
        if p.is_file() {
            outputs.push(FileDigest {
                sha256: sha256_file(&p)?,
                path: name,
            });
        }
    }
    let inputs = config
        .input_list()
        .into_iter()
        .map(|(role, p)| {
            Ok((
                role.to_owned(),
                FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(&base.join(p))?,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config: serde_json::to_value(&echo).map_err(|e| Error::Config(e.to_string()))?,
        inputs,
        outputs,
        warnings,
        estimator: ESTIMATOR_NOTE.into(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    write_text(&run.path(MANIFEST_FILE), &(text + "\n"))?;
    let timing_map: BTreeMap<&str, f64> = timings.into_iter().collect();
    let text = serde_json::to_string_pretty(&timing_map).map_err(|e| Error::Data(e.to_string()))?;
    write_text(&run.path(TIMINGS_FILE), &(text + "\n"))?;
    run.committed = true;
    Ok(RunOutput {
        manifest,
        panel: build.panel,
        regressions,
    })
}
