use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use crackrom::harness::{self, ModelKind, PipelineConfig};
use crackrom::Error;

#[derive(Parser)]
#[command(name = "crackrom", version, about = "Reduced-order fracture models: generate, train, predict, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON pipeline configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First scenario seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of spa,op,mcpic,nfpz,epz.
    #[arg(long, default_value = "spa,op,mcpic,nfpz,epz")]
    models: String,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenarios and reference traces.
    Generate(Common),
    /// Fit the trainable models on the training split.
    Train(Common),
    /// Write per-scenario predictions for the validation split.
    Predict(Common),
    /// Score predictions and write the report tree.
    Evaluate(Common),
    /// Print the summary of an existing report.
    Report(Common),
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.oracle.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_dataset(out: &Path) -> Result<harness::Dataset> {
    harness::read_dataset(out).with_context(|| format!("reading dataset under {} (run `generate` first)", out.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let config = load_config(&c)?;
            let dataset = harness::with_jobs(c.jobs, || harness::build_dataset(&config))??;
            harness::write_dataset(&dataset, &c.out)?;
            let failed = dataset.validation.iter().filter(|(_, t)| t.failure_time.is_some()).count();
            println!(
                "generated {} training and {} validation scenarios ({failed} validation failures) in {}",
                dataset.train.len(),
                dataset.validation.len(),
                c.out.display()
            );
        }
        Command::Train(c) => {
            let kinds = harness::parse_models(&c.models)?;
            let dataset = load_dataset(&c.out)?;
            let config = match &c.config {
                Some(_) => load_config(&c)?,
                None => dataset.config.clone(),
            };
            let models = harness::with_jobs(c.jobs, || harness::train_models(&dataset.train, &config, &kinds))??;
            harness::write_models(&models, &c.out)?;
            let trained: Vec<&str> = kinds.iter().filter(|k| k.needs_training()).map(|k| k.name()).collect();
            println!("trained [{}] -> {}", trained.join(","), c.out.join("models").display());
        }
        Command::Predict(c) => {
            let kinds = harness::parse_models(&c.models)?;
            let dataset = load_dataset(&c.out)?;
            let models = harness::read_models(&c.out)?;
            let preds = harness::with_jobs(c.jobs, || {
                harness::predict_validation(&dataset.validation, &models, &kinds, &dataset.config.nfpz)
            })??;
            let dir = c.out.join("predictions");
            fs::create_dir_all(&dir)?;
            for ((scenario, _), p) in dataset.validation.iter().zip(&preds) {
                let path = dir.join(format!("{:04}.json", scenario.seed));
                serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), p)?;
            }
            if let (Some(params), true) = (&models.epz, kinds.contains(&ModelKind::Epz)) {
                for (scenario, _) in &dataset.validation {
                    let pred = crackrom::epz::predict_epz(scenario, params)?;
                    let path = dir.join(format!("epz_{:04}.jsonl", scenario.seed));
                    pred.network.write_jsonl(BufWriter::new(File::create(&path)?))?;
                }
            }
            println!("wrote {} predictions to {}", preds.len(), dir.display());
        }
        Command::Evaluate(c) => {
            let kinds = harness::parse_models(&c.models)?;
            let dataset = load_dataset(&c.out)?;
            let models = harness::read_models(&c.out)?;
            let report = harness::with_jobs(c.jobs, || harness::evaluate(&dataset, &models, &kinds))??;
            harness::write_report(&report, &dataset.validation, &c.out)?;
            print!("{}", harness::summary(&report));
        }
        Command::Report(c) => {
            let report = harness::read_report(&c.out)
                .with_context(|| format!("reading report under {} (run `evaluate` first)", c.out.display()))?;
            print!("{}", harness::summary(&report));
            println!("digest {}", report.digest()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<Error>(),
                    Some(Error::InvalidArgument(_) | Error::InvalidScenario(_))
                )
            });
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}
