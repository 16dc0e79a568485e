use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use builder_core::agent::DEFAULT_MAX_STEPS;
use builder_core::corpus::{dataset_stats, parse_corpus, synth_generate, taxonomy_stats, write_jsonl, GrammarConfig, Split};
use builder_core::evaluation::PredictionRecord;
use builder_core::model::{Model, ModelConfig};
use builder_core::task::TaskKind;
use builder_core::training::{evaluate_checkpoint, score_records, train_corpus, MetricBundle, TaskSpec, TrainConfig};
use builder_service::server::{self, ServerConfig};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "builder", version, about = "Train, evaluate and play with the voxel builder agent")]
struct Cli {
    /// Seed for data generation and training (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the train split, selecting on the valid split.
    Train {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        data: PathBuf,
        /// JSON file with optional `model` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the best checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSONL log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Prediction log of the best model on the test split.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score a checkpoint on a split, or re-score a prediction log.
    Eval {
        #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions", requires = "data")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Write the prediction log here.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Existing prediction log to score instead of running a model.
        #[arg(long, requires = "task")]
        predictions: Option<PathBuf>,
        /// Task the prediction log was produced for.
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        /// Print the metrics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Per-split label counts and builder-utterance taxonomy of a corpus.
    DataStats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Execution / ask / others shares, e.g. `2,1,1`.
        #[arg(long, value_delimiter = ',')]
        mix: Option<Vec<f64>>,
        /// Execution samples only, all in the train split.
        #[arg(long, conflicts_with = "mix")]
        execution_only: bool,
    },
    /// Serve the play UI and WebSocket endpoint.
    Play {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        /// Static files for the console; a minimal page is served otherwise.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match cli.command {
        Command::Train {
            task,
            data,
            config,
            out,
            log,
            predictions,
        } => cmd_train(task, &data, config.as_deref(), &out, log.as_deref(), predictions.as_deref(), cli.seed),
        Command::Eval {
            ckpt,
            data,
            split,
            dump,
            predictions,
            task,
            max_steps,
            json,
        } => {
            let bundle = match (ckpt, predictions) {
                (_, Some(p)) => rescore(&p, task.expect("clap enforces --task"))?,
                (Some(c), None) => run_eval(&c, &data.expect("clap enforces --data"), split.into(), dump.as_deref(), max_steps)?,
                (None, None) => unreachable!("clap enforces --ckpt or --predictions"),
            };
            print_bundle(&bundle, json)
        }
        Command::DataStats { data, json } => {
            let samples = parse_corpus(&data)?;
            let d = dataset_stats(&samples);
            let t = taxonomy_stats(&samples);
            if json {
                println!("{}", serde_json::json!({ "splits": d, "taxonomy": t }));
            } else {
                print!("{}\n{}", d.render(), t.render());
            }
            Ok(())
        }
        Command::Synth { n, out, mix, execution_only } => {
            let mut grammar = if execution_only {
                GrammarConfig::execution_only()
            } else {
                GrammarConfig::default()
            };
            if let Some(m) = mix {
                if m.len() != 3 || m.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || m.iter().sum::<f64>() <= 0.0 {
                    bail!("--mix needs three non-negative shares with a positive sum");
                }
                grammar.mix = [m[0], m[1], m[2]];
            }
            let samples = synth_generate(n, cli.seed.unwrap_or(0), &grammar);
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            write_jsonl(&mut w, &samples)?;
            w.flush()?;
            eprintln!("wrote {} samples to {}", samples.len(), out.display());
            Ok(())
        }
        Command::Play {
            ckpt,
            port,
            assets,
            max_steps,
        } => {
            let model = Model::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = server::bind(port).await.with_context(|| format!("binding port {port}"))?;
                tracing::info!(addr = %listener.local_addr()?, task = %model.task, "serving");
                server::serve(listener, Arc::new(model), ServerConfig { assets, max_steps }).await?;
                Ok(())
            })
        }
    }
}

fn cmd_train(task: TaskKind, data: &Path, config: Option<&Path>, out: &Path, log: Option<&Path>, predictions: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut run: RunConfig = match config {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        run.train.seed = s;
    }
    let samples = parse_corpus(data)?;
    let spec = TaskSpec::new(task);
    let mut log_file = match log {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let mut log_err = None;
    let outcome = train_corpus(&samples, &spec, &run.train, &run.model, &mut |e| {
        if let Some(f) = log_file.as_mut() {
            if let Err(err) = writeln!(f, "{}", serde_json::to_string(e).expect("epoch log serializes")) {
                log_err.get_or_insert(err);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing the epoch log");
    }
    if let Some(mut f) = log_file {
        f.flush()?;
    }
    outcome.model.save(out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("best epoch {} ({} = {:.4}); checkpoint at {}", outcome.best_epoch, metric_name(task), outcome.best_metric, out.display());
    if let Some(p) = predictions {
        let test: Vec<_> = samples.iter().filter(|s| s.split == Split::Test).cloned().collect();
        let (bundle, records) = evaluate_checkpoint(&outcome.model, &test, &spec, run.train.max_rollout_steps)?;
        write_records(p, &records)?;
        eprintln!("test {} = {:.4} over {} samples; predictions at {}", metric_name(task), bundle.metric, bundle.samples, p.display());
    }
    Ok(())
}

fn run_eval(ckpt: &Path, data: &Path, split: Split, dump: Option<&Path>, max_steps: usize) -> Result<MetricBundle> {
    let model = Model::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let samples: Vec<_> = parse_corpus(data)?.into_iter().filter(|s| s.split == split).collect();
    let spec = TaskSpec::new(model.task);
    let (bundle, records) = evaluate_checkpoint(&model, &samples, &spec, max_steps)?;
    if let Some(p) = dump {
        write_records(p, &records)?;
    }
    Ok(bundle)
}

fn rescore(path: &Path, task: TaskKind) -> Result<MetricBundle> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        records.push(r);
    }
    Ok(score_records(task, &records)?)
}

fn write_records(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Ask => "accuracy",
        TaskKind::Building | TaskKind::Joint => "F1",
    }
}

fn print_bundle(b: &MetricBundle, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string(b)?);
        return Ok(());
    }
    println!("task {}  samples {}  {} {:.4}", b.task, b.samples, metric_name(b.task), b.metric);
    if let Some(f) = &b.f1 {
        println!(
            "net-change F1 {:.4}  precision {:.4}  recall {:.4}  (matched {} / predicted {} / gold {})",
            f.f1, f.precision, f.recall, f.matched, f.predicted, f.gold
        );
    }
    if let Some(c) = &b.confusion {
        print!("{}", c.render());
    }
    Ok(())
}
