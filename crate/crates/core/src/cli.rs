//! Command-line harness: `train | attack | eval | predict | bounds | toy`.
//!
//! Every command that takes `--out` writes `config.json` (the resolved
//! configuration) next to its artifacts.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attack::{
    build_adversarial_dataset, write_records_jsonl, AdversarialRecord, AttackContext, AttackError, AttackKind,
};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{read_dataset, toy_corpus, write_dataset, DatasetError, LabeledText};
use crate::error::Error;
use crate::eval::{after_attack_metrics, asr, clean_metrics, verify_all, BoundScenario, EvalError, MetricsReport};
use crate::model::{EnsembleModel, InferenceMode, Pipeline};
use crate::rng::derive_seed_str;
use crate::train::{iat_train, TrainContext};
use crate::Result;

pub const CONFIG_FILE: &str = "config.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BOUNDS_FILE: &str = "bounds.csv";

#[derive(Debug, Parser)]
#[command(name = "robust-ensemble", version, about = "Paraphrase-aggregated ensemble text detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterative adversarial training; writes a checkpoint directory.
    Train(TrainArgs),
    /// Crafts adversarial samples against a checkpoint and reports ASR.
    Attack(AttackArgs),
    /// Metrics of a checkpoint on a dataset or an adversarial record file.
    Eval(EvalArgs),
    /// Verdict for one text as JSON on standard output.
    Predict(PredictArgs),
    /// Runs bound scenarios through the Monte-Carlo verifiers.
    Bounds(BoundsArgs),
    /// Writes the synthetic keyword-labeled corpus.
    Toy(ToyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<InferenceMode>,
}

fn parse_mode(s: &str) -> std::result::Result<InferenceMode, String> {
    s.parse().map_err(|e: ConfigError| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train the assignor only.
    #[arg(long)]
    pub fixed_detectors: bool,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// char, word, sentence, multilevel or all.
    #[arg(long, default_value = "all")]
    pub attack: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model directory; zero-weight detectors when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub text: String,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    /// JSONL file with one scenario per line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub size: usize,
    #[arg(long, default_value_t = 0.4)]
    pub harmful_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Loads the config file, applies flag overrides and validates.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(n: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::debug!("thread pool already initialized: {e}");
    }
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| ConfigError::Invalid(format!("--{flag} (or paths.{flag} in the config) is required")).into())
}

fn load_data(path: &Path) -> Result<Vec<LabeledText>> {
    let data = read_dataset(path)?;
    if data.is_empty() {
        return Err(DatasetError::Empty.into());
    }
    Ok(data)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    write_file(&out.join(CONFIG_FILE), cfg.to_json().as_bytes())
}

fn load_model(cfg: &RunConfig) -> Result<EnsembleModel> {
    match &cfg.paths.checkpoint {
        Some(dir) => EnsembleModel::load(dir),
        None => Ok(EnsembleModel::init(cfg.detectors, cfg.feature_dim, cfg.assignor, cfg.seed)),
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a, stdout),
        Command::Attack(a) => cmd_attack(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Predict(a) => cmd_predict(a, stdout),
        Command::Bounds(a) => cmd_bounds(a, stdout),
        Command::Toy(a) => cmd_toy(a),
    }
}

fn override_paths(cfg: &mut RunConfig, data: Option<PathBuf>, out: Option<PathBuf>, checkpoint: Option<PathBuf>) {
    cfg.paths.data = data.or(cfg.paths.data.take());
    cfg.paths.out = out.or(cfg.paths.out.take());
    cfg.paths.checkpoint = checkpoint.or(cfg.paths.checkpoint.take());
}

pub fn cmd_train(args: TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    override_paths(&mut cfg, args.data, args.out, None);
    if args.fixed_detectors {
        cfg.train.fixed_detectors = true;
    }
    init_threads(cfg.threads);
    let data = load_data(&required(cfg.paths.data.clone(), "data")?)?;
    let out = required(cfg.paths.out.clone(), "out")?;
    let init = load_model(&cfg)?;
    prepare_out(&out, &cfg)?;

    let lexicon = cfg.generator.load_lexicon()?;
    let generator = cfg.generator.build(lexicon.clone());
    let ctx = TrainContext {
        generator: generator.as_ref(),
        lexicon: &lexicon,
        budget: cfg.budget,
        prior: cfg.prior,
        attacks: cfg.attacks.clone(),
    };
    let result = iat_train(&data, &cfg.train, &ctx, init)?;
    result.model.save(&out)?;
    write_file(&out.join(TRAIN_LOG_FILE), result.log.to_jsonl().as_bytes())?;
    if let Some(reason) = &result.aborted {
        return Err(crate::train::TrainError::Diverged(reason.clone()).into());
    }
    writeln!(stdout, "{}", out.display()).map_err(|e| Error::io("stdout", e))?;
    Ok(())
}

fn parse_attacks(name: &str) -> Result<Vec<AttackKind>, AttackError> {
    if name == "all" {
        Ok(AttackKind::ALL.to_vec())
    } else {
        Ok(vec![name.parse()?])
    }
}

pub fn cmd_attack(args: AttackArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    override_paths(&mut cfg, args.data, args.out, args.checkpoint);
    init_threads(cfg.threads);
    let kinds = parse_attacks(&args.attack)?;
    let data = load_data(&required(cfg.paths.data.clone(), "data")?)?;
    let out = required(cfg.paths.out.clone(), "out")?;
    let model = EnsembleModel::load(&required(cfg.paths.checkpoint.clone(), "checkpoint")?)?;
    prepare_out(&out, &cfg)?;

    let lexicon = cfg.generator.load_lexicon()?;
    let generator = cfg.generator.build(lexicon.clone());
    let target = Pipeline::new(&model, generator.as_ref(), cfg.inference());
    let ctx = AttackContext { lexicon: &lexicon, generator: generator.as_ref(), budget: cfg.budget };

    let mut csv = format!("attack,{}\n", MetricsReport::CSV_HEADER);
    let mut worst: Option<(AttackKind, f64)> = None;
    for kind in &kinds {
        let seed = derive_seed_str(cfg.seed, kind.name());
        let (records, skipped) = build_adversarial_dataset(&data, &target, *kind, &ctx, seed)?;
        let mut buf = Vec::new();
        write_records_jsonl(&records, &mut buf).map_err(|e| Error::io("records", e))?;
        write_file(&out.join(format!("adversarial_{}.jsonl", kind.name())), &buf)?;
        let mut report = after_attack_metrics(&records, &skipped, &target)?;
        report.asr = asr(&records).unwrap_or(0.0);
        csv.push_str(&format!("{},{}\n", kind.name(), report.csv_row()));
        if worst.is_none_or(|(_, a)| report.asr > a) {
            worst = Some((*kind, report.asr));
        }
    }
    if kinds.len() > 1 {
        if let Some((kind, a)) = worst {
            csv.push_str(&format!("worst_case,{a:.4},,,,,,,,,,,\n"));
            log::info!("worst-case ASR {a:.2}% under the {kind} attack");
        }
    }
    write_file(&out.join(METRICS_FILE), csv.as_bytes())?;
    stdout.write_all(csv.as_bytes()).map_err(|e| Error::io("stdout", e))?;
    Ok(())
}

enum EvalInput {
    Clean(Vec<LabeledText>),
    Adversarial(Vec<AdversarialRecord>),
}

fn read_eval_input(path: &Path) -> Result<EvalInput> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let first = lines.iter().find(|l| !l.trim().is_empty()).ok_or(DatasetError::Empty)?;
    let is_records = serde_json::from_str::<serde_json::Value>(first)
        .ok()
        .and_then(|v| v.get("adversarial").cloned())
        .is_some();
    if !is_records {
        return Ok(EvalInput::Clean(load_data(path)?));
    }
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| DatasetError::Invalid { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    Ok(EvalInput::Adversarial(records))
}

pub fn cmd_eval(args: EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    override_paths(&mut cfg, args.data, args.out, args.checkpoint);
    init_threads(cfg.threads);
    let input = read_eval_input(&required(cfg.paths.data.clone(), "data")?)?;
    let model = EnsembleModel::load(&required(cfg.paths.checkpoint.clone(), "checkpoint")?)?;
    let lexicon = cfg.generator.load_lexicon()?;
    let generator = cfg.generator.build(lexicon);
    let target = Pipeline::new(&model, generator.as_ref(), cfg.inference());
    let report = match &input {
        EvalInput::Clean(data) => clean_metrics(data, &target)?,
        EvalInput::Adversarial(records) => {
            if records.is_empty() {
                return Err(EvalError::EmptyRecordSet.into());
            }
            after_attack_metrics(records, &[], &target)?
        }
    };
    let csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row());
    if let Some(out) = &cfg.paths.out {
        prepare_out(out, &cfg)?;
        write_file(&out.join(METRICS_FILE), csv.as_bytes())?;
    }
    stdout.write_all(csv.as_bytes()).map_err(|e| Error::io("stdout", e))?;
    Ok(())
}

pub fn cmd_predict(args: PredictArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    override_paths(&mut cfg, None, None, args.checkpoint);
    let model = load_model(&cfg)?;
    let lexicon = cfg.generator.load_lexicon()?;
    let generator = cfg.generator.build(lexicon);
    let verdict = Pipeline::new(&model, generator.as_ref(), cfg.inference()).verdict(&args.text)?;
    let json = serde_json::to_string(&verdict).expect("serializable");
    writeln!(stdout, "{json}").map_err(|e| Error::io("stdout", e))?;
    Ok(())
}

pub fn read_scenarios(path: &Path) -> Result<Vec<BoundScenario>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: BoundScenario =
            serde_json::from_str(line).map_err(|e| DatasetError::Invalid { line: i + 1, message: e.to_string() })?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty.into());
    }
    Ok(out)
}

pub const BOUNDS_HEADER: &str = "scenario,detectors,generated,delta,bound,empirical,std_error,holds";

/// One row per scenario; `holds` allows three standard errors.
pub fn bounds_table(scenarios: &[BoundScenario]) -> Result<String> {
    let mut csv = format!("{BOUNDS_HEADER}\n");
    for (i, (s, check)) in scenarios.iter().zip(verify_all(scenarios)).enumerate() {
        let c = check?;
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{}\n",
            s.detectors(),
            s.generated,
            s.delta(),
            c.bound,
            c.empirical,
            c.std_error,
            c.holds(3.0)
        ));
    }
    Ok(csv)
}

pub fn cmd_bounds(args: BoundsArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    init_threads(cfg.threads);
    let scenarios = read_scenarios(&args.data)?;
    let csv = bounds_table(&scenarios)?;
    if let Some(out) = &args.out {
        prepare_out(out, &cfg)?;
        write_file(&out.join(BOUNDS_FILE), csv.as_bytes())?;
    }
    stdout.write_all(csv.as_bytes()).map_err(|e| Error::io("stdout", e))?;
    Ok(())
}

pub fn cmd_toy(args: ToyArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.harmful_fraction) || args.size == 0 {
        return Err(ConfigError::Invalid("size must be positive and harmful_fraction in [0, 1]".into()).into());
    }
    let data = toy_corpus(args.size, args.harmful_fraction, args.seed);
    let mut buf = Vec::new();
    write_dataset(&data, &mut buf).map_err(|e| Error::io("dataset", e))?;
    write_file(&args.out, &buf)
}
