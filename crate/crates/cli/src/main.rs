//! `techspace` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use techspace::advantage::{detect_entries, write_entries, RtaSeries};
use techspace::atlas::{
    self, complexity_all_years, export_i4t_heatmap, export_space, ingest, rta_all_years,
    run_regression, split_regress, tech_totals, write_complexity, write_proximity, write_rta,
    write_splits, write_tci, DirLock, InputPaths, PipelineConfig,
};
use techspace::complexity::{figure2_dataset, write_figure2};
use techspace::corpus::write_rejects;
use techspace::econometrics::{render_text, write_results_csv, RegressionResult};
use techspace::panel::{assemble_panel, box_cox_by_year, Panel, PanelSources};
use techspace::relatedness::{density_panel, year_structures};
use techspace::synthlab::{gen_corpus, load_params, GeneratorParams};
use techspace::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "techspace",
    version,
    about = "Technology relatedness, complexity and entry regressions"
)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` in the config, `out` if neither.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and clean inputs; write counts, gov flags and rejects.
    Ingest,
    /// Revealed technological advantage for every year.
    Rta,
    /// Entry events under the configured lead and persistence.
    Entries,
    /// Proximity triplets for every year.
    Proximity,
    /// Density of every firm-technology cell for every year.
    Density,
    /// Method of reflections scores and TCI.
    Complexity,
    /// Regression panel, plus the transformed panel when enabled.
    Panel,
    /// Configured regressions.
    Regress(RegressArgs),
    /// Configured split regressions.
    SplitRegress(SplitArgs),
    /// Technology-space graph for one year.
    ExportSpace(SpaceArgs),
    /// Category-level proximity heatmap for one year.
    ExportHeatmap(SpaceArgs),
    /// Complexity by category and period.
    Figure2,
    /// Full pipeline with manifest.
    Run,
    /// Generate a synthetic corpus and a matching pipeline config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RegressArgs {
    /// Only the named model.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Only the named split.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Debug, Args)]
struct SpaceArgs {
    #[arg(long)]
    year: Option<i32>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator parameters (TOML); defaults when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_threads(n: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("warning: built without the `parallel` feature; --threads {n} ignored");
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<(PipelineConfig, PathBuf)> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut config = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config.validate(&base)?;
    Ok((config, base))
}

fn out_dir(cli: &Cli, config: &PipelineConfig, base: &Path) -> PathBuf {
    match (&cli.out, &config.out_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => base.join(d),
        (None, None) => PathBuf::from("out"),
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    init_threads(cli.threads)?;
    if let Command::Synth(args) = &cli.command {
        return synth(cli, args);
    }
    let (config, base) = load_config(cli)?;
    let out = out_dir(cli, &config, &base);
    if let Command::Run = cli.command {
        let result = atlas::run_pipeline(&config, &base, &out)?;
        for w in &result.manifest.warnings {
            eprintln!("warning: {w}");
        }
        println!(
            "{} artifacts in {}",
            result.manifest.outputs.len(),
            out.display()
        );
        return Ok(());
    }
    let _lock = DirLock::acquire(&out)?;
    let ing = ingest(&config, &base)?;
    let cube = &ing.cube;
    let p = |name: &str| out.join(name);
    let mut wrote = Vec::new();
    match &cli.command {
        Command::Ingest => {
            write_rejects(&p("rejects.csv"), &ing.rejects)?;
            cube.write_csv(&p("counts.csv"))?;
            ing.gov.write_csv(&p("gov.csv"))?;
            wrote.extend([p("rejects.csv"), p("counts.csv"), p("gov.csv")]);
        }
        Command::Rta => {
            write_rta(&p("rta.csv"), &rta_all_years(cube))?;
            wrote.push(p("rta.csv"));
        }
        Command::Entries => {
            let series = RtaSeries::from_slices(cube, &rta_all_years(cube));
            write_entries(
                &p("entries.csv"),
                &detect_entries(&series, config.panel.lead, config.panel.persistence),
            )?;
            wrote.push(p("entries.csv"));
        }
        Command::Proximity => {
            write_proximity(&p("proximity.csv"), cube, &config.panel.window)?;
            wrote.push(p("proximity.csv"));
        }
        Command::Density => {
            let years: Vec<i32> = cube.years().collect();
            density_panel(cube, &years, &config.panel.window)?.write_csv(&p("density.csv"))?;
            wrote.push(p("density.csv"));
        }
        Command::Complexity => {
            let (scores, tci, warnings) = complexity_all_years(cube, &config.panel);
            for w in warnings {
                eprintln!("warning: {w}");
            }
            write_complexity(&p("complexity.csv"), &scores)?;
            write_tci(&p("tci.csv"), &tci)?;
            wrote.extend([p("complexity.csv"), p("tci.csv")]);
        }
        Command::Panel => {
            let (raw, transformed) = build_panels(&config, &ing)?;
            raw.write_csv(&p("panel.csv"))?;
            wrote.push(p("panel.csv"));
            if config.transform.box_cox {
                transformed.write_csv(&p("panel_transformed.csv"))?;
                wrote.push(p("panel_transformed.csv"));
            }
        }
        Command::Regress(args) => {
            let (_, est) = build_panels(&config, &ing)?;
            let mut models: Vec<(String, RegressionResult)> = Vec::new();
            for r in &config.regressions {
                if args.model.as_ref().is_some_and(|m| *m != r.name) {
                    continue;
                }
                models.push((r.name.clone(), run_regression(&est, r)?));
            }
            if models.is_empty() {
                return Err(Error::Config("no regression matches --model".into()));
            }
            let refs: Vec<(&str, &RegressionResult)> =
                models.iter().map(|(n, r)| (n.as_str(), r)).collect();
            let text = render_text(&refs);
            print!("{text}");
            std::fs::write(p("regressions.txt"), &text)
                .map_err(|e| Error::io(p("regressions.txt"), e))?;
            write_results_csv(&refs, &p("regressions.csv"))?;
            wrote.extend([p("regressions.txt"), p("regressions.csv")]);
        }
        Command::SplitRegress(args) => {
            let (raw, est) = build_panels(&config, &ing)?;
            let mut outcomes = Vec::new();
            for s in &config.splits {
                if args.split.as_ref().is_some_and(|m| *m != s.name) {
                    continue;
                }
                let reg = config
                    .regressions
                    .iter()
                    .find(|r| r.name == s.regression)
                    .expect("validated config");
                outcomes.push(split_regress(&raw, &est, s, reg)?);
            }
            if outcomes.is_empty() {
                return Err(Error::Config("no split matches --split".into()));
            }
            write_splits(&p("splits.txt"), &p("splits.csv"), &outcomes)?;
            wrote.extend([p("splits.txt"), p("splits.csv")]);
        }
        Command::ExportSpace(args) | Command::ExportHeatmap(args) => {
            let year = args.year.or(config.space.year).unwrap_or(cube.last_year());
            if !cube.has_year(year) {
                return Err(Error::Validation(format!("year {year} outside corpus")));
            }
            let (_, prox) = year_structures(cube, year, &config.panel.window)?;
            if matches!(cli.command, Command::ExportSpace(_)) {
                let threshold = args.threshold.unwrap_or(config.space.threshold);
                let g = export_space(&prox, &tech_totals(cube, &[year]), &ing.taxonomy, threshold)?;
                g.write_json(&p("space.json"))?;
                g.write_edges_csv(&p("space_edges.csv"))?;
                wrote.extend([p("space.json"), p("space_edges.csv")]);
            } else {
                let h = export_i4t_heatmap(&prox, &ing.taxonomy)?;
                for c in &h.omitted {
                    eprintln!("warning: category {c} has no codes");
                }
                h.write_csv(&p("heatmap.csv"))?;
                wrote.push(p("heatmap.csv"));
            }
        }
        Command::Figure2 => {
            let rows = figure2_dataset(
                cube,
                &ing.taxonomy,
                &config.figure2.periods,
                config.panel.iterations,
            )?;
            write_figure2(&p("figure2.csv"), &rows)?;
            wrote.push(p("figure2.csv"));
        }
        Command::Run | Command::Synth(_) => unreachable!("handled above"),
    }
    report(&wrote);
    Ok(())
}

fn build_panels(config: &PipelineConfig, ing: &atlas::Ingested) -> Result<(Panel, Panel)> {
    let sources = PanelSources {
        cube: &ing.cube,
        firms: &ing.firms,
        gov: &ing.gov,
        taxonomy: &ing.taxonomy,
    };
    let build = assemble_panel(sources, None, &config.panel)?;
    for w in &build.warnings {
        eprintln!("warning: {w}");
    }
    let transformed = if config.transform.box_cox {
        box_cox_by_year(
            &build.panel,
            &config.transform.variables,
            &config.transform.lambda_grid,
        )?
        .0
    } else {
        build.panel.clone()
    };
    Ok((build.panel, transformed))
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let mut params = match &args.params {
        Some(path) => load_params(path)?,
        None => GeneratorParams::default(),
    };
    if let Some(seed) = cli.seed {
        params.seed = seed;
    }
    let corpus = gen_corpus(&params)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let _lock = DirLock::acquire(&out)?;
    corpus.write(&out)?;
    let mut config = PipelineConfig::new(InputPaths {
        patents: "patents.csv".into(),
        firms: "firms.csv".into(),
        support: Some("support.csv".into()),
        taxonomy: Some("taxonomy.csv".into()),
    });
    config.seed = params.seed;
    config.corpus.first_year = Some(params.first_year);
    config.corpus.last_year = Some(params.last_year());
    config.corpus.gov_persistence = params.gov_persistence;
    // Two periods split at the middle year of the generated range.
    let mid = params.first_year + (params.n_years as i32) / 2;
    config.figure2.periods = vec![(params.first_year, mid - 1), (mid, params.last_year())];
    let path = out.join("config.toml");
    std::fs::write(&path, config.to_toml()?).map_err(|e| Error::io(&path, e))?;
    println!(
        "{} patents, {} firm-years, {} truth rows in {}",
        corpus.patents.len(),
        corpus.firms.len(),
        corpus.truth.len(),
        out.display()
    );
    Ok(())
}
