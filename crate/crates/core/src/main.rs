use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use safety_triage::cli::{
    self, cmd_compare, cmd_pipeline, cmd_predict, parse_stages, verify_log, AugmentSettings,
    CliError, DataPaths, RunConfig,
};
use safety_triage::corpus::{
    dataset_stats, generate_synthetic, load_corpus, write_corpus, SplitSpec, SynthSpec,
};

#[derive(Parser)]
#[command(
    name = "safety-triage",
    version,
    about = "Rare-event comment triage pipeline"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages against an output directory.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Comma list of split,mine,augment,train,calibrate,evaluate.
        #[arg(long, default_value = "split,mine,augment,train,calibrate,evaluate")]
        stages: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Pinned clock, ISO-8601 UTC.
        #[arg(long)]
        clock: Option<String>,
    },
    /// Score a corpus and append the predictions to a log.
    Predict {
        /// Artifact file, or a pipeline output directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        clock: Option<String>,
        /// Precomputed vectors for models trained on them.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Check that every logged prediction links to a stored model.
    VerifyLog {
        #[arg(long)]
        log: PathBuf,
        /// Directory holding model-<version>.json files.
        #[arg(long)]
        models: PathBuf,
    },
    /// Compare a candidate KPI report against a baseline.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
    },
    /// Write a synthetic corpus and a matching pipeline config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML file overriding generator parameters.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print size / average word count per corpus.
    Stats { corpora: Vec<PathBuf> },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Pipeline {
            config,
            stages,
            out,
            seed,
            clock,
        } => {
            let stages = parse_stages(&stages)?;
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            let out = out.or_else(|| cfg.out.clone()).ok_or_else(|| {
                CliError::Validation("no output directory: pass --out or set `out`".into())
            })?;
            let clock = cli::resolve_clock(clock.as_deref(), cfg.clock.as_deref())?;
            let res = cmd_pipeline(&cfg, &stages, &out, clock)?;
            for path in &res.written {
                println!("wrote {}", path.display());
            }
            if let Some(report) = &res.report {
                print!("{}", report.to_table());
            }
        }
        Command::Predict {
            model,
            corpus,
            log,
            clock,
            vectors,
        } => {
            let at = cli::resolve_clock(clock.as_deref(), None)?;
            let records = cmd_predict(&model, &corpus, &log, at, vectors.as_deref())?;
            let flagged = records.iter().filter(|r| r.decision).count();
            println!(
                "{} predictions appended to {} ({flagged} flagged)",
                records.len(),
                log.display()
            );
        }
        Command::VerifyLog { log, models } => {
            let n = verify_log(&log, &models)?;
            println!("{n} records verified");
        }
        Command::Compare {
            baseline,
            candidate,
        } => print!("{}", cmd_compare(&baseline, &candidate)?.to_table()),
        Command::Synth { out, spec, seed } => synth(&out, spec.as_deref(), seed)?,
        Command::Stats { corpora } => {
            for path in corpora {
                let d = load_corpus(&path, false)?;
                println!("{}\t{}", path.display(), dataset_stats(&d));
            }
        }
    }
    Ok(())
}

fn synth(out: &Path, spec_path: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: SynthSpec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("spec: {e}")))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (name, d) in [
        ("labeled", &corpus.labeled),
        ("unlabeled", &corpus.unlabeled),
        ("traffic", &corpus.traffic),
    ] {
        write_corpus(out.join(format!("{name}.jsonl")), d)?;
    }
    let truth: String = corpus
        .truth
        .iter()
        .map(|(id, label)| format!("{}\n", serde_json::json!({"id": id, "label": label})))
        .collect();
    std::fs::write(out.join("truth.jsonl"), truth).map_err(|e| CliError::io(out, e))?;

    let mut cfg = RunConfig {
        data: DataPaths {
            labeled: "labeled.jsonl".into(),
            unlabeled: Some("unlabeled.jsonl".into()),
            traffic: "traffic.jsonl".into(),
            vectors: None,
        },
        split: SplitSpec::new(spec.test_cutoff, spec.seed),
        embed: Default::default(),
        mine: Default::default(),
        augment: AugmentSettings {
            languages: spec.languages.clone(),
            ..AugmentSettings::default()
        },
        train: Default::default(),
        calibrate: Default::default(),
        out: Some("run".into()),
        clock: None,
    };
    cfg.set_seed(spec.seed);
    std::fs::write(out.join("pipeline.toml"), cfg.to_toml()).map_err(|e| CliError::io(out, e))?;
    println!(
        "wrote {} labeled, {} unlabeled, {} traffic comments to {}",
        corpus.labeled.len(),
        corpus.unlabeled.len(),
        corpus.traffic.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let err = CliError::Validation(first.lines().next().unwrap_or("bad arguments").into());
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
