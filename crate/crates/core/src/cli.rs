//! The `mcresanet` command line: argument parsing, config resolution and the
//! six subcommands. `main.rs` only parses and calls [`run`].
//!
//! A run's configuration is resolved as built-in defaults, overlaid with the
//! JSON file given by `--config`, overlaid with flags (`--set a.b=v` reaches
//! any nested field). The result is written to `<out>/config_<command>.json`
//! before any stage runs, and feeding that file back with `--config`
//! reproduces the run.
//!
//! Output names inside `--out`:
//!
//! | command       | files |
//! |---------------|-------|
//! | `synth`       | `dataset.csv`, `ground_truth.json` |
//! | `train`       | `checkpoint_<model>.json`, `history_<model>.json` |
//! | `evaluate`    | `metrics_<model>.csv`, `metrics_<model>.json` |
//! | `compare`     | `improvement.csv`, `improvement.json` |
//! | `explain`     | `shap_raw.csv`, `shap_normalized.csv`, `explain_manifest.json` |
//! | `uncertainty` | `uncertainty_<model>.json` |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::synth::{synthesize, GenConfig};
use crate::data::{load_csv, preprocess, write_csv, Prepared, PreprocessConfig};
use crate::error::{Error, Result};
use crate::explain::{explain, Estimator, ExplainConfig};
use crate::metrics::{evaluate, improvement, MetricsReport, RSquaredMode};
use crate::models::checkpoint::Checkpoint;
use crate::models::{McresanetConfig, Model, ModelKind};
use crate::train::{train, uncertainty, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "mcresanet", version, about = "Harmonic current emission models from harmonic voltages")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Preprocess a dataset and train one model.
    Train(TrainArgs),
    /// Test-split metrics of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Improvement of the first checkpoint over the others.
    Compare(CompareArgs),
    /// Shapley feature-importance matrix of a checkpoint.
    Explain(ExplainArgs),
    /// Repeated fresh trainings, mean and spread of the test errors.
    Uncertainty(UncertaintyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Compare(_) => "compare",
            Command::Explain(_) => "explain",
            Command::Uncertainty(_) => "uncertainty",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Top-level seed every random stream is derived from.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.patience=5`. Values are JSON, or bare strings.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Disable percentile outlier removal.
    #[arg(long)]
    pub no_outliers: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of records.
    #[arg(long)]
    pub n: Option<usize>,
    /// Relative current noise level.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Run every epoch and keep the final parameters.
    #[arg(long)]
    pub no_early_stopping: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `standard` or `predicted_mean`.
    #[arg(long)]
    pub r2_mode: Option<RSquaredMode>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Candidate first, then one or more baselines.
    #[arg(long = "checkpoint", num_args = 1..)]
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `exact` or `mc`.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Permutations per sample for `--estimator mc`.
    #[arg(long)]
    pub m: Option<usize>,
    /// Background rows.
    #[arg(long)]
    pub background: Option<usize>,
    /// Explained test rows.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct UncertaintyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Fully resolved settings of one command.
///
/// `seed` is authoritative: it is copied into the generator, training and
/// explanation sections, which derive their own streams from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub model: ModelKind,
    pub checkpoint: Option<PathBuf>,
    /// Baseline checkpoints for `compare`.
    pub baselines: Vec<PathBuf>,
    pub synth: GenConfig,
    pub preprocess: PreprocessConfig,
    pub mcresanet: McresanetConfig,
    pub train: TrainConfig,
    pub r2_mode: RSquaredMode,
    pub explain: ExplainConfig,
    /// Repetitions for `uncertainty`.
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            data: None,
            model: ModelKind::Mcresanet,
            checkpoint: None,
            baselines: Vec::new(),
            synth: GenConfig::default(),
            preprocess: PreprocessConfig::default(),
            mcresanet: McresanetConfig::default(),
            train: TrainConfig::default(),
            r2_mode: RSquaredMode::Standard,
            explain: ExplainConfig::default(),
            runs: 5,
        }
    }
}

/// Recursively overlays `top` onto `base`; objects merge, everything else replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets the dotted `path` in `root`, creating objects along the way.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Usage(format!("bad config path `{path}`")));
    }
    for part in &parts[..parts.len() - 1] {
        let Value::Object(map) = node else {
            return Err(Error::Usage(format!("`{path}`: `{part}` is not a section")));
        };
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let Value::Object(map) = node else {
        return Err(Error::Usage(format!("`{path}` does not name a field")));
    };
    map.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (path, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--set expects PATH=VALUE, got `{s}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

/// Flag-level overrides of one command, as `(path, value)` pairs applied last.
fn flag_overrides(cmd: &Command) -> Result<(Common, Vec<(String, Value)>)> {
    let mut o: Vec<(String, Value)> = Vec::new();
    let mut put = |p: &str, v: Value| o.push((p.to_string(), v));
    let common = match cmd {
        Command::Synth(a) => {
            if let Some(n) = a.n {
                put("synth.n", json(&n));
            }
            if let Some(x) = a.noise {
                put("synth.noise", json(&x));
            }
            a.common.clone()
        }
        Command::Train(a) => {
            data_flags(&a.data, &mut put);
            if let Some(m) = a.model {
                put("model", json(&m));
            }
            if let Some(c) = &a.checkpoint {
                put("checkpoint", json(c));
            }
            if let Some(e) = a.epochs {
                put("train.max_epochs", json(&e));
            }
            if let Some(b) = a.batch_size {
                put("train.batch_size", json(&b));
            }
            if let Some(lr) = a.learning_rate {
                put("train.learning_rate", json(&lr));
            }
            if a.no_early_stopping {
                put("train.early_stopping", Value::Bool(false));
            }
            a.common.clone()
        }
        Command::Evaluate(a) => {
            data_flags(&a.data, &mut put);
            if let Some(c) = &a.checkpoint {
                put("checkpoint", json(c));
            }
            if let Some(m) = a.r2_mode {
                put("r2_mode", json(&m));
            }
            a.common.clone()
        }
        Command::Compare(a) => {
            data_flags(&a.data, &mut put);
            if let Some((first, rest)) = a.checkpoints.split_first() {
                put("checkpoint", json(first));
                put("baselines", json(&rest.to_vec()));
            }
            a.common.clone()
        }
        Command::Explain(a) => {
            data_flags(&a.data, &mut put);
            if let Some(c) = &a.checkpoint {
                put("checkpoint", json(c));
            }
            if let Some(b) = a.background {
                put("explain.background", json(&b));
            }
            if let Some(s) = a.samples {
                put("explain.samples", json(&s));
            }
            match (a.estimator.as_deref(), a.m) {
                (Some("exact"), None) => put("explain.estimator", json(&Estimator::Exact)),
                (Some("exact"), Some(_)) => return Err(Error::Usage("--m only applies to --estimator mc".into())),
                (Some("mc"), m) => put(
                    "explain.estimator",
                    json(&Estimator::MonteCarlo { permutations: m.unwrap_or(1000) }),
                ),
                (None, Some(m)) => put("explain.estimator", json(&Estimator::MonteCarlo { permutations: m })),
                (None, None) => {}
                (Some(other), _) => return Err(Error::Usage(format!("unknown estimator `{other}` (exact or mc)"))),
            }
            a.common.clone()
        }
        Command::Uncertainty(a) => {
            data_flags(&a.data, &mut put);
            if let Some(m) = a.model {
                put("model", json(&m));
            }
            if let Some(r) = a.runs {
                put("runs", json(&r));
            }
            if let Some(e) = a.epochs {
                put("train.max_epochs", json(&e));
            }
            a.common.clone()
        }
    };
    if let Some(s) = common.seed {
        o.push(("seed".into(), Value::from(s)));
    }
    if let Some(out) = &common.out {
        o.push(("out".into(), Value::String(out.display().to_string())));
    }
    for s in &common.set {
        o.push(parse_assignment(s)?);
    }
    Ok((common, o))
}

fn data_flags(d: &DataArgs, put: &mut impl FnMut(&str, Value)) {
    if let Some(p) = &d.data {
        put("data", Value::String(p.display().to_string()));
    }
    if d.no_outliers {
        put("preprocess.remove_outliers", Value::Bool(false));
    }
}

fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// Defaults, then the `--config` file, then flags.
pub fn resolve(cmd: &Command) -> Result<RunConfig> {
    let (common, overrides) = flag_overrides(cmd)?;
    let mut value = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        }
        merge(&mut value, file);
    }
    for (path, v) in overrides {
        set_path(&mut value, &path, v)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| {
        let origin = common.config.as_ref().map_or("flags".to_string(), |p| p.display().to_string());
        Error::Config(format!("{origin}: {e}"))
    })?;
    cfg.synth.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.explain.seed = cfg.seed;
    cfg.train.validate()?;
    cfg.mcresanet.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn with_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn require<'a>(field: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    field.as_ref().ok_or_else(|| Error::Usage(format!("missing {flag}")))
}

/// Loads, cleans, splits and standardizes the configured dataset.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let path = require(&cfg.data, "--data")?;
    let raw = load_csv(path)?;
    preprocess(&raw, &cfg.preprocess, cfg.seed)
}

/// Loads a checkpoint and makes sure it was fitted on the split `prepared` reproduces.
pub fn load_for(path: &Path, prepared: &Prepared) -> Result<Model> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(stats) = &ckpt.standardization {
        if *stats != prepared.stats {
            return Err(Error::Config(format!(
                "{}: standardization differs from this dataset's training split (different data, seed or preprocessing?)",
                path.display()
            )));
        }
    }
    ckpt.to_model()
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.command)?;
    execute(cli.command.name(), &cfg)
}

/// Runs `command` with an already resolved config.
pub fn execute(command: &str, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_json(&cfg.out.join(format!("config_{command}.json")), cfg)?;
    let out = &cfg.out;
    match command {
        "synth" => {
            let (ds, truth) = synthesize(&cfg.synth)?;
            with_file(&out.join("dataset.csv"), |w| write_csv(&ds, w))?;
            write_json(&out.join("ground_truth.json"), &truth)?;
            log::info!("wrote {} records to {}", ds.len(), out.join("dataset.csv").display());
        }
        "train" => {
            let p = prepare(cfg)?;
            let mut model = match &cfg.checkpoint {
                Some(path) => load_for(path, &p)?,
                None => Model::new(cfg.model, cfg.mcresanet, cfg.seed)?,
            };
            let kind = model.kind();
            let history_path = out.join(format!("history_{kind}.json"));
            let histories = match train(&mut model, &p.dataset, &cfg.train) {
                Ok(h) => h,
                Err(Error::Diverged { epoch, history }) => {
                    write_json(&history_path, &[&*history])?;
                    return Err(Error::Diverged { epoch, history });
                }
                Err(e) => return Err(e),
            };
            write_json(&history_path, &histories)?;
            Checkpoint::from_model(&model, Some(&p.stats)).save(out.join(format!("checkpoint_{kind}.json")))?;
        }
        "evaluate" => {
            let p = prepare(cfg)?;
            let path = require(&cfg.checkpoint, "--checkpoint")?;
            let model = load_for(path, &p)?;
            let kind = model.kind();
            let report = evaluate(&model, kind.as_str(), &p.dataset, &p.stats, cfg.r2_mode)?;
            with_file(&out.join(format!("metrics_{kind}.csv")), |w| report.write_csv(w))?;
            write_json(&out.join(format!("metrics_{kind}.json")), &report)?;
            log::info!("{kind}: pooled r2 {:.4}, mae {:.4e}", report.total().r2, report.total().mae);
        }
        "compare" => {
            let p = prepare(cfg)?;
            let cand = require(&cfg.checkpoint, "--checkpoint")?;
            if cfg.baselines.is_empty() {
                return Err(Error::Usage("compare needs a candidate and at least one baseline checkpoint".into()));
            }
            let mut names: Vec<String> = Vec::new();
            let mut reports: Vec<MetricsReport> = Vec::new();
            for path in std::iter::once(cand).chain(&cfg.baselines) {
                let model = load_for(path, &p)?;
                let base = model.kind().to_string();
                let count = names.iter().filter(|n| n.split('#').next() == Some(base.as_str())).count();
                let name = if count == 0 { base } else { format!("{base}#{}", count + 1) };
                reports.push(evaluate(&model, &name, &p.dataset, &p.stats, cfg.r2_mode)?);
                names.push(name);
            }
            let table = improvement(&reports[0], &reports[1..])?;
            with_file(&out.join("improvement.csv"), |w| table.write_csv(w))?;
            write_json(&out.join("improvement.json"), &table)?;
        }
        "explain" => {
            let p = prepare(cfg)?;
            let path = require(&cfg.checkpoint, "--checkpoint")?;
            let model = load_for(path, &p)?;
            let (matrix, manifest) = explain(&model, &p.dataset, &cfg.explain)?;
            with_file(&out.join("shap_raw.csv"), |w| matrix.write_raw_csv(w))?;
            with_file(&out.join("shap_normalized.csv"), |w| matrix.write_normalized_csv(w))?;
            write_json(&out.join("explain_manifest.json"), &manifest)?;
        }
        "uncertainty" => {
            let p = prepare(cfg)?;
            let report = uncertainty(cfg.model, cfg.mcresanet, &p.dataset, &p.stats, &cfg.train, cfg.runs)?;
            write_json(&out.join(format!("uncertainty_{}.json", cfg.model)), &report)?;
        }
        other => return Err(Error::Usage(format!("unknown command `{other}`"))),
    }
    Ok(())
}
