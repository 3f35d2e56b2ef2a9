//! Random corpora and shared paths for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use techspace::corpus::{
    Category, CountCube, CpcLevel, FirmRecord, FirmYear, GovFlags, I4TMap, SupportRecord,
};
use techspace::synthlab::{firm_code, tech_code};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/golden")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small corpus with every table needed by the panel.
pub struct SmallCorpus {
    pub cube: CountCube,
    pub firms: Vec<FirmRecord>,
    pub gov: GovFlags,
    pub taxonomy: I4TMap,
}

/// Sparse counts with a persistent firm-specific portfolio so that advantage
/// series contain runs (and therefore entries).
pub fn random_cube(
    rng: &mut ChaCha8Rng,
    nf: usize,
    nt: usize,
    ny: usize,
    first_year: i32,
) -> CountCube {
    let firms: Vec<String> = (0..nf).map(firm_code).collect();
    let techs: Vec<String> = (0..nt).map(tech_code).collect();
    let mut held: Vec<bool> = (0..nf * nt).map(|_| rng.random::<f64>() < 0.2).collect();
    let mut triplets = Vec::new();
    for k in 0..ny {
        let year = first_year + k as i32;
        for i in 0..nf {
            for a in 0..nt {
                let cell = &mut held[i * nt + a];
                if rng.random::<f64>() < 0.15 {
                    *cell = !*cell;
                }
                let c = if *cell {
                    rng.random_range(1..6u32)
                } else if rng.random::<f64>() < 0.05 {
                    1
                } else {
                    0
                };
                if c > 0 {
                    triplets.push((i, a, year, c));
                }
            }
        }
    }
    CountCube::from_triplets(
        triplets
            .iter()
            .map(|&(i, a, y, c)| (firms[i].as_str(), techs[a].as_str(), y, c)),
        Some((first_year, first_year + ny as i32 - 1)),
    )
    .expect("nonempty cube")
}

pub fn random_corpus(
    seed: u64,
    max_firms: usize,
    max_techs: usize,
    max_years: usize,
) -> SmallCorpus {
    let mut r = rng(seed);
    let nf = r.random_range(6..=max_firms);
    let nt = r.random_range(5..=max_techs);
    let ny = r.random_range(5..=max_years);
    let first_year = 2010;
    let cube = random_cube(&mut r, nf, nt, ny, first_year);
    let n_ind = r.random_range(1..=4);
    let mut firms = Vec::new();
    for f in cube.firms() {
        let mut years = BTreeMap::new();
        for y in cube.years() {
            if r.random::<f64>() >= 0.9 {
                continue;
            }
            let missing = r.random::<f64>() < 0.05;
            years.insert(
                y,
                FirmYear {
                    employees: Some(r.random_range(1..500) as f64),
                    profit_ratio: if missing {
                        None
                    } else {
                        Some(r.random_range(-0.3..0.3))
                    },
                    debt_ratio: Some(r.random_range(0.0..1.5)),
                },
            );
        }
        firms.push(FirmRecord {
            firm_id: f.clone(),
            founding_year: r.random_range(1960..2009),
            industry_code: format!("I{:02}", r.random_range(0..n_ind)),
            years,
        });
    }
    let support: Vec<SupportRecord> = (0..nf * 2)
        .map(|k| SupportRecord {
            project_id: format!("P{k}"),
            firm_id: cube.firms()[r.random_range(0..cube.firms().len())].clone(),
            contribution_share: r.random_range(0.0..1.0),
            year: r.random_range(first_year..first_year + ny as i32),
            cpc_codes: vec![cube.techs()[r.random_range(0..cube.techs().len())].clone()],
        })
        .collect();
    let gov = GovFlags::from_records(&support, CpcLevel::Subclass, 1);
    let taxonomy = random_taxonomy(&mut r, cube.techs());
    SmallCorpus {
        cube,
        firms,
        gov,
        taxonomy,
    }
}

pub fn random_taxonomy(r: &mut ChaCha8Rng, techs: &[String]) -> I4TMap {
    let mut entries: Vec<(String, Category)> = Vec::new();
    for t in techs {
        if r.random::<f64>() < 0.5 {
            entries.push((t.clone(), Category::ALL[r.random_range(0..10)]));
        }
    }
    I4TMap::new(entries).expect("distinct prefixes")
}
