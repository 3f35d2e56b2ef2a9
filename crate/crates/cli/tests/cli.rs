//! Exit codes and artifacts of the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/testdata/golden")
}

fn techspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_techspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Golden inputs and config copied into `dir` so they can be edited.
fn golden_copy(dir: &Path) -> PathBuf {
    for name in [
        "patents.csv",
        "firms.csv",
        "support.csv",
        "taxonomy.csv",
        "config.toml",
    ] {
        fs::copy(golden().join(name), dir.join(name)).unwrap();
    }
    dir.join("config.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_run() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("params.toml");
    fs::write(&params, "n_firms = 40\nn_techs = 20\nn_years = 8\n").unwrap();
    let data = tmp.path().join("data");
    let o = techspace(&[
        "--out",
        s(&data),
        "--seed",
        "11",
        "synth",
        "--params",
        s(&params),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = data.join("config.toml");
    assert!(cfg.is_file() && data.join("truth.csv").is_file());
    let out = tmp.path().join("out");
    let o = techspace(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--threads",
        "1",
        "run",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("regressions.txt").is_file());
}

#[test]
fn missing_config_is_a_validation_error() {
    let o = techspace(&["rta"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&techspace(&["frobnicate"])), 2);
}

#[test]
fn missing_input_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden_copy(tmp.path());
    fs::remove_file(tmp.path().join("patents.csv")).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        code(&techspace(&["--config", s(&cfg), "--out", s(&out), "run"])),
        2
    );
}

#[test]
fn locked_output_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".techspace.lock"), "").unwrap();
    let cfg = golden().join("config.toml");
    assert_eq!(
        code(&techspace(&["--config", s(&cfg), "--out", s(&out), "rta"])),
        2
    );
    assert_eq!(
        code(&techspace(&["--config", s(&cfg), "--out", s(&out), "run"])),
        2
    );
}

#[test]
fn empty_patents_are_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden_copy(tmp.path());
    fs::write(
        tmp.path().join("patents.csv"),
        "patent_id,family_id,firm_id,year,cpc_codes\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = techspace(&["--config", s(&cfg), "--out", s(&out), "ingest"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn constant_regressor_is_a_numeric_error() {
    // Without support data every gov flag is zero.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden_copy(tmp.path());
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("support = \"support.csv\"\n", "");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = techspace(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "regress",
        "--model",
        "core",
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn each_stage_writes_its_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = golden().join("config.toml");
    let out = tmp.path().join("out");
    let cases: &[(&[&str], &[&str])] = &[
        (&["ingest"], &["counts.csv", "gov.csv", "rejects.csv"]),
        (&["rta"], &["rta.csv"]),
        (&["entries"], &["entries.csv"]),
        (&["proximity"], &["proximity.csv"]),
        (&["density"], &["density.csv"]),
        (&["complexity"], &["complexity.csv", "tci.csv"]),
        (&["panel"], &["panel.csv", "panel_transformed.csv"]),
        (
            &["regress", "--model", "full"],
            &["regressions.txt", "regressions.csv"],
        ),
        (
            &["split-regress", "--split", "size"],
            &["splits.txt", "splits.csv"],
        ),
        (
            &["export-space", "--threshold", "0.4"],
            &["space.json", "space_edges.csv"],
        ),
        (&["export-heatmap", "--year", "2015"], &["heatmap.csv"]),
        (&["figure2"], &["figure2.csv"]),
    ];
    for (args, files) in cases {
        let mut full = vec!["--config", s(&cfg), "--out", s(&out)];
        full.extend_from_slice(args);
        let o = techspace(&full);
        assert_eq!(
            code(&o),
            0,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        for f in *files {
            assert!(out.join(f).is_file(), "{args:?} did not write {f}");
        }
    }
    assert!(!out.join(".techspace.lock").exists());
    let o = techspace(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "regress",
        "--model",
        "nope",
    ]);
    assert_eq!(code(&o), 2);
}
