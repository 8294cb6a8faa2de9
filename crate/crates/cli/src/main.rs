//! `ppi`: build, evaluate and apply poverty probability scorecards.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use ppi_core::error::{Error, Result};
use ppi_core::pipeline::{self, parse_stages, Run, RunConfig, Stage};
use ppi_core::scorecard::{import_scorecard, Scorecard};

#[derive(Parser)]
#[command(
    name = "ppi",
    version,
    about = "Poverty probability scorecards from household survey data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stage or stage group to run (repeatable): split, alpha_cv,
    /// selection, fit, scorecard, evaluation, select, evaluate-only, all.
    #[arg(long = "stage")]
    stages: Vec<String>,
    /// Derive every seed in the config from this value.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline (every stage unless --stage or the config says otherwise).
    Run(Common),
    /// Write the synthetic dataset described by the config.
    Generate(Common),
    /// Split, cross-validate alpha and select questions.
    Select(Common),
    /// Fit the selected questions.
    Fit(Common),
    /// Build and export the scorecard from the stored fit.
    Scorecard(Common),
    /// Evaluate the stored fit and scorecard on the test split.
    Evaluate(Common),
    /// Score households from a responses CSV with a scorecard JSON.
    Score {
        #[arg(long)]
        scorecard: PathBuf,
        /// CSV with a `region` column and one column per scorecard question.
        #[arg(long)]
        responses: PathBuf,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn open_run(common: &Common) -> Result<Run> {
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed_override {
        config.override_seeds(seed);
    }
    let dir = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            Error::Validation("no run directory: pass --out or set output_dir".into())
        })?;
    Run::new(config, dir)
}

fn run_stages(common: &Common, default: &[Stage]) -> Result<()> {
    let run = open_run(common)?;
    let stages = if !common.stages.is_empty() {
        parse_stages(&common.stages)?
    } else if let Some(s) = &run.config.stages {
        parse_stages(s)?
    } else {
        default.to_vec()
    };
    let manifest = run.execute(&stages)?;
    for e in &manifest.stages {
        info!("{} -> {}", e.stage, run.dir.join(&e.file).display());
    }
    Ok(())
}

fn generate(common: &Common) -> Result<()> {
    let run = open_run(common)?;
    let source = run.config.synthetic.as_ref().ok_or_else(|| {
        Error::Validation("`generate` needs a `synthetic` section in the config".into())
    })?;
    pipeline::write_synthetic(&source.config(), &run.dir)?;
    run.write_manifest()?;
    Ok(())
}

fn score(card_path: &Path, responses: &Path, output: Option<&Path>) -> Result<()> {
    let card: Scorecard = import_scorecard(card_path)?;
    let mut rdr = csv::Reader::from_path(responses)
        .map_err(|e| Error::Validation(format!("{}: {e}", responses.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let region_col = col("region")
        .ok_or_else(|| Error::Schema("responses CSV has no `region` column".into()))?;
    let id_col = col("id");
    let question_cols = card
        .questions
        .iter()
        .map(|q| {
            col(&q.id).map(|c| (q.id.clone(), c)).ok_or_else(|| {
                Error::Schema(format!(
                    "responses CSV has no column for question `{}`",
                    q.id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sink: Box<dyn std::io::Write> = match output {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "region", "score", "probability"])?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |c: usize| rec.get(c).unwrap_or("").trim().to_string();
        let responses: BTreeMap<String, String> = question_cols
            .iter()
            .map(|(q, c)| (q.clone(), field(*c)))
            .collect();
        let region = field(region_col);
        let (s, p) = card
            .score_and_probability(&region, &responses)
            .map_err(|e| Error::Row {
                row,
                message: e.to_string(),
            })?;
        let id = id_col.map(field).unwrap_or_else(|| row.to_string());
        w.write_record([id, region, s.to_string(), format!("{p:?}")])?;
    }
    w.flush()
        .map_err(|e| Error::io(output.unwrap_or(Path::new("<stdout>")), e))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run_stages(c, &Stage::ALL),
        Command::Generate(c) => generate(c),
        Command::Select(c) => run_stages(c, &[Stage::Split, Stage::AlphaCv, Stage::Selection]),
        Command::Fit(c) => run_stages(c, &[Stage::Fit]),
        Command::Scorecard(c) => run_stages(c, &[Stage::Scorecard]),
        Command::Evaluate(c) => run_stages(c, &[Stage::Evaluation]),
        Command::Score {
            scorecard,
            responses,
            output,
        } => score(scorecard, responses, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
