//! The `slu` command line: prepare, stats, train, eval and sweep.
//!
//! Data goes to files (or stdout for `stats` and `eval`); progress and
//! errors go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{build_kvret_star, build_vocab, load_kvret, read_jsonl, write_jsonl, DatasetStats, Vocab};
use crate::error::{Error, Result};
use crate::model::SluVariant;
use crate::train::{evaluate, fit, lambda_sweep, EncodedDataset, TrainConfig, TrainedModel};

pub const DATA_DIR_ENV: &str = "SLU_DATA_DIR";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";

#[derive(Debug, Parser)]
#[command(name = "slu", version, about = "Contextual SLU with memory networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the raw KVRET splits into JSONL plus vocabulary and statistics.
    Prepare(PrepareArgs),
    /// Print statistics of a prepared data directory.
    Stats(StatsArgs),
    /// Train a model and write its checkpoint and per-epoch metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train over a grid of lambda values and seeds; write a CSV table.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory holding kvret_{train,dev,test}_public.json.
    #[arg(long, env = DATA_DIR_ENV)]
    pub raw_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Recombine sessions of different domains into multi-domain sessions.
    #[arg(long)]
    pub kvret_star: bool,
    #[arg(long, default_value_t = 0.5)]
    pub prob: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Prepared data directory.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: PathBuf,
}

/// Flags shared by `train` and `sweep`; each one overrides the config file.
#[derive(Debug, Default, Args)]
pub struct RunOverrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<SluVariant>,
    #[arg(long)]
    pub dli: Option<bool>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, conflicts_with = "no_patience")]
    pub patience: Option<usize>,
    /// Train for the full epoch budget.
    #[arg(long)]
    pub no_patience: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "dev")]
    pub split: String,
    /// Prepared data directory.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// Comma-separated; overrides the config's `lambdas`.
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Comma-separated; overrides the config's `seeds`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV destination; defaults to `<out_dir>/sweep.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training hyperparameters plus paths and sweep grids, as one flat JSON
/// object. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: None,
            seeds: vec![1, 2, 3],
            lambdas: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut cfg = RunConfig::default();
        if let Some(v) = map.remove("data_dir") {
            cfg.data_dir = serde_json::from_value(v)?;
        }
        if let Some(v) = map.remove("out_dir") {
            cfg.out_dir = serde_json::from_value(v)?;
        }
        if let Some(v) = map.remove("seeds") {
            cfg.seeds = serde_json::from_value(v)?;
        }
        if let Some(v) = map.remove("lambdas") {
            cfg.lambdas = serde_json::from_value(v)?;
        }
        cfg.train = serde_json::from_value(serde_json::Value::Object(map))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    /// Config file (if any), then flags, then the environment for `data_dir`.
    pub fn resolve(o: &RunOverrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        let t = &mut cfg.train;
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {$(
                if let Some(v) = o.$field.clone() { $target = v; }
            )*};
        }
        set!(variant => t.variant, dli => t.dli, lambda => t.lambda, seed => t.seed,
             max_epochs => t.max_epochs, batch_size => t.batch_size,
             embedding_dim => t.embedding_dim, hidden_dim => t.hidden_dim, dropout => t.dropout);
        if let Some(p) = o.patience {
            t.patience = Some(p);
        }
        if o.no_patience {
            t.patience = None;
        }
        if let Some(d) = &o.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(d) = &o.out_dir {
            cfg.out_dir = Some(d.clone());
        }
        if cfg.data_dir.is_none() {
            cfg.data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("no data directory: pass --data-dir or set {DATA_DIR_ENV}")))
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::invalid("no output directory: pass --out-dir"))
    }
}

/// Train, dev and test sessions plus the vocabulary of a prepared directory.
pub struct PreparedData {
    pub train: Vec<crate::data::DialogueSession>,
    pub dev: Vec<crate::data::DialogueSession>,
    pub test: Vec<crate::data::DialogueSession>,
    pub vocab: Vocab,
}

impl PreparedData {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(PreparedData {
            train: read_jsonl(&dir.join("train.jsonl"))?,
            dev: read_jsonl(&dir.join("dev.jsonl"))?,
            test: read_jsonl(&dir.join("test.jsonl"))?,
            vocab: Vocab::load(&dir.join(VOCAB_FILE))?,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[crate::data::DialogueSession]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            _ => Err(Error::invalid(format!("unknown split {name:?} (train, dev, test)"))),
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_pretty(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn prepare(args: &PrepareArgs) -> Result<DatasetStats> {
    if !(0.0..=1.0).contains(&args.prob) {
        return Err(Error::invalid(format!("prob {} not in [0, 1]", args.prob)));
    }
    let mut corpus = load_kvret(&args.raw_dir)?;
    if args.kvret_star {
        corpus.train = build_kvret_star(&corpus.train, args.prob, args.seed)?;
        corpus.dev = build_kvret_star(&corpus.dev, args.prob, args.seed.wrapping_add(1))?;
        corpus.test = build_kvret_star(&corpus.test, args.prob, args.seed.wrapping_add(2))?;
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    for (name, sessions) in corpus.splits() {
        write_jsonl(&args.out_dir.join(format!("{name}.jsonl")), sessions)?;
    }
    build_vocab(&corpus.train, args.min_freq).save(&args.out_dir.join(VOCAB_FILE))?;
    let stats = DatasetStats::compute(&corpus.train, &corpus.dev, &corpus.test);
    write_file(&args.out_dir.join("stats.json"), &to_pretty(&stats)?)?;
    write_file(&args.out_dir.join("skipped.txt"), corpus.skipped.to_string().as_bytes())?;
    eprintln!(
        "prepared {} / {} / {} sessions, {} skip-report lines",
        stats.train,
        stats.dev,
        stats.test,
        corpus.skipped.lines.len()
    );
    Ok(stats)
}

pub fn stats(args: &StatsArgs) -> Result<DatasetStats> {
    let d = &args.data_dir;
    Ok(DatasetStats::compute(
        &read_jsonl(&d.join("train.jsonl"))?,
        &read_jsonl(&d.join("dev.jsonl"))?,
        &read_jsonl(&d.join("test.jsonl"))?,
    ))
}

/// Trains on the prepared train split, selects on dev, and writes the
/// checkpoint and metrics lines under the output directory.
pub fn train(cfg: &RunConfig) -> Result<crate::train::FitOutcome> {
    let data = PreparedData::load(cfg.data_dir()?)?;
    let out_dir = cfg.out_dir()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut write_err = None;
    let out = fit(&cfg.train, &data.vocab, &data.train, &data.dev, |m| {
        eprintln!(
            "epoch {:>2}  train {:.4}  val {:.4}  slot F1 {:.2}  intent {:.4}",
            m.epoch, m.train_loss, m.val_loss, m.slot_f1, m.intent_acc
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&metrics_path, e));
    }
    out.best.save(&out_dir.join(CHECKPOINT_FILE))?;
    eprintln!(
        "best epoch {} (val loss {:.6}) saved to {}",
        out.best.header.best_epoch,
        out.best.header.best_val_loss,
        out_dir.join(CHECKPOINT_FILE).display()
    );
    Ok(out)
}

pub fn eval(args: &EvalArgs) -> Result<crate::eval::EvalReport> {
    let trained = TrainedModel::load(&args.checkpoint)?;
    let data = PreparedData::load(&args.data_dir)?;
    trained.check_vocab(&data.vocab)?;
    let encoded = EncodedDataset::new(data.split(&args.split)?, &data.vocab)?;
    let outcome = evaluate(
        &trained.model,
        &trained.store,
        &encoded,
        &data.vocab,
        trained.header.config.effective_lambda(),
    )?;
    if let Some(out) = &args.out {
        write_file(out, &to_pretty(&outcome.report)?)?;
    }
    Ok(outcome.report)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Error::invalid(format!("bad {what} value {x:?}"))))
        .collect()
}

pub fn sweep(args: &SweepArgs) -> Result<crate::train::SweepTable> {
    let mut cfg = RunConfig::resolve(&args.run)?;
    if let Some(l) = &args.lambdas {
        cfg.lambdas = parse_list(l, "lambda")?;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_list(s, "seed")?;
    }
    if let Some(l) = cfg.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("lambda {l} not in [0, 1]")));
    }
    let out = match (&args.out, &cfg.out_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join("sweep.csv"),
        (None, None) => return Err(Error::invalid("no output: pass --out or --out-dir")),
    };
    let table = if cfg.lambdas.is_empty() || cfg.seeds.is_empty() {
        Default::default()
    } else {
        let data = PreparedData::load(cfg.data_dir()?)?;
        lambda_sweep(
            &cfg.train,
            &cfg.lambdas,
            &cfg.seeds,
            &data.vocab,
            &data.train,
            &data.dev,
            args.jobs,
        )?
    };
    write_file(&out, table.to_csv().as_bytes())?;
    eprintln!("{} runs written to {}", table.rows.len(), out.display());
    Ok(table)
}

fn print_json(value: &impl Serialize) -> Result<()> {
    std::io::stdout()
        .lock()
        .write_all(&to_pretty(value)?)
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => prepare(&a).map(drop),
        Command::Stats(a) => print_json(&stats(&a)?),
        Command::Train(a) => train(&RunConfig::resolve(&a.run)?).map(drop),
        Command::Eval(a) => print_json(&eval(&a)?),
        Command::Sweep(a) => sweep(&a).map(drop),
    }
}
