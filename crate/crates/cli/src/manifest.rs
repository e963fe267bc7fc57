//! Run manifests: one `key = value` text describing a whole experiment.

use std::fs;
use std::path::{Path, PathBuf};

use cautious::bandit::{make_dataset, read_contexts_csv, BanditKind, BanditTaskSpec, Context, DatasetConfig};
use cautious::config::KeyValues;
use cautious::driving::{Action, GridConfig};
use cautious::eval::EvalMethod;
use cautious::kofn::{KofnConfig, OutputMode};
use cautious::trainer::{Optimizer, TrainConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Which contexts the ensemble is tabulated over and policies are run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Familiar,
    HeldOut,
    Novel,
}

#[derive(Debug, Clone)]
pub struct BanditTask {
    pub spec: BanditTaskSpec,
    pub familiar: Vec<Context>,
    pub held_out: Vec<Context>,
    pub novel: Vec<Context>,
    pub eval_set: EvalSet,
    /// Share of the familiar contexts used for training.
    pub fraction: f64,
    pub noise: f64,
    /// Per-context runs instead of one run over all contexts.
    pub single_image: bool,
}

impl BanditTask {
    pub fn eval_contexts(&self) -> &[Context] {
        match self.eval_set {
            EvalSet::Familiar => &self.familiar,
            EvalSet::HeldOut => &self.held_out,
            EvalSet::Novel => &self.novel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridTask {
    /// World the reward models are trained on.
    pub train: GridConfig,
    /// World policies are optimized and assessed in.
    pub eval: GridConfig,
    /// Constant-action policies reported next to k-of-N policies.
    pub fixtures: Vec<Action>,
}

#[derive(Debug, Clone)]
pub enum Task {
    Bandit(Box<BanditTask>),
    Grid(GridTask),
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    /// SHA-256 of the canonical manifest text.
    pub hash: String,
    pub seed: u64,
    pub task: Task,
    pub members: usize,
    pub train: TrainConfig,
    pub ensemble_dir: PathBuf,
    pub output_dir: PathBuf,
    /// `k` values swept; `kofn.k` is overwritten per run.
    pub ks: Vec<usize>,
    pub kofn: KofnConfig,
    pub replacement: bool,
    pub repetitions: usize,
    pub format: Format,
}

/// Reads the manifest at `path` (if any), applies `overrides` and resolves
/// every field. Unknown keys are an error.
pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<RunManifest> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut kv = KeyValues::parse("manifest", &text)?;
    for (k, v) in overrides {
        kv.set(k, v.clone());
    }
    resolve(kv)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("`{key}` must be true or false, got `{v}`"))),
    }
}

pub fn resolve(mut kv: KeyValues) -> CliResult<RunManifest> {
    // the output format does not change results, so it stays out of the hash
    let format = match kv.take_str("format").as_deref() {
        None | Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        Some(other) => return Err(CliError::Usage(format!("unknown format `{other}` (csv or json)"))),
    };
    let hash = hex(&Sha256::digest(kv.canonical_text().as_bytes()));
    let seed: u64 = kv.take_or("seed", 0)?;
    let task_name = kv.take_str("task").unwrap_or_else(|| "ask_for_help".into());

    let task = if task_name == "gridworld" {
        Task::Grid(grid_task(&mut kv, seed)?)
    } else {
        let kind = BanditKind::from_name(&task_name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown task `{task_name}` (expected gridworld, ask_for_help, risk_reward, help_availability or perturbed_help)"
            ))
        })?;
        Task::Bandit(Box::new(bandit_task(&mut kv, kind, seed)?))
    };

    let members: usize = kv.take_or("members", 50)?;
    if members == 0 {
        return Err(CliError::Usage("members must be at least 1".into()));
    }
    let mut train = match task {
        Task::Grid(_) => TrainConfig::gridworld(),
        Task::Bandit(_) => TrainConfig::default(),
    };
    train.hidden = kv.take_or("hidden", train.hidden)?;
    train.epochs = kv.take_or("epochs", train.epochs)?;
    train.batch_size = kv.take_or("batch_size", train.batch_size)?;
    train.learning_rate = kv.take_or("learning_rate", train.learning_rate)?;
    train.weight_decay = kv.take_or("weight_decay", train.weight_decay)?;
    train.optimizer = match kv.take_str("optimizer").as_deref() {
        None | Some("adam") => Optimizer::adam(),
        Some("sgd") => Optimizer::Sgd,
        Some(other) => return Err(CliError::Usage(format!("unknown optimizer `{other}` (adam or sgd)"))),
    };
    if let Task::Bandit(b) = &task {
        train.output_weights = b.spec.output_weights();
    }
    train.validate()?;

    let ks: Vec<usize> = kv.take_list("k")?.unwrap_or_else(|| vec![1]);
    if ks.is_empty() {
        return Err(CliError::Usage("`k` lists no values".into()));
    }
    let mut kofn = KofnConfig::new(ks[0], kv.take_or("n", 20)?, kv.take_or("iterations", 100)?);
    kofn.seed = seed;
    kofn.output_mode = match kv.take_str("output_mode") {
        None => OutputMode::Last,
        Some(m) => OutputMode::from_name(&m)
            .ok_or_else(|| CliError::Usage(format!("unknown output_mode `{m}` (last, best or sampled)")))?,
    };
    kofn.eval = match kv.take_str("eval").as_deref() {
        None | Some("direct") => EvalMethod::Direct,
        Some("iterative") => EvalMethod::Iterative {
            tol: kv.take_or("eval_tol", 1e-10)?,
            max_sweeps: cautious::eval::DEFAULT_MAX_SWEEPS,
        },
        Some(other) => return Err(CliError::Usage(format!("unknown eval `{other}` (direct or iterative)"))),
    };
    kofn.snapshot_stride = kv.take("snapshot_stride")?;
    kofn.value_repetitions = kv.take_or("value_repetitions", kofn.value_repetitions)?;
    for &k in &ks {
        KofnConfig { k, ..kofn.clone() }.validate()?;
    }

    let replacement = match kv.take_str("replacement") {
        None => false,
        Some(v) => parse_bool("replacement", &v)?,
    };
    let repetitions: usize = kv.take_or("repetitions", 1)?;
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be at least 1".into()));
    }
    let ensemble_dir = PathBuf::from(kv.take_str("ensemble_dir").unwrap_or_else(|| "ensemble".into()));
    let output_dir = PathBuf::from(kv.take_str("output_dir").unwrap_or_else(|| "results".into()));
    kv.finish()?;

    Ok(RunManifest {
        hash,
        seed,
        task,
        members,
        train,
        ensemble_dir,
        output_dir,
        ks,
        kofn,
        replacement,
        repetitions,
        format,
    })
}

fn bandit_task(kv: &mut KeyValues, kind: BanditKind, seed: u64) -> CliResult<BanditTask> {
    let defaults = DatasetConfig::default();
    let (familiar, held_out, novel, n_classes) = match kv.take_str("contexts") {
        Some(path) => {
            let path = PathBuf::from(path);
            if !path.is_file() {
                return Err(CliError::Usage(format!("contexts file {} does not exist", path.display())));
            }
            let all = read_contexts_csv(&path)?;
            let n_classes = match kv.take("n_classes")? {
                Some(n) => n,
                None => all.iter().filter_map(|c| c.label).max().map_or(0, |m| m + 1),
            };
            let (familiar, novel): (Vec<Context>, Vec<Context>) = all.into_iter().partition(|c| c.label.is_some());
            (familiar, Vec::new(), novel, n_classes)
        }
        None => {
            let cfg = DatasetConfig {
                n_classes: kv.take_or("n_classes", defaults.n_classes)?,
                per_class: kv.take_or("per_class", defaults.per_class)?,
                held_out_per_class: kv.take_or("held_out_per_class", defaults.held_out_per_class)?,
                n_novel: kv.take_or("n_novel", defaults.n_novel)?,
                dim: kv.take_or("dim", defaults.dim)?,
                latent_dim: kv.take_or("latent_dim", defaults.latent_dim)?,
                class_separation: kv.take_or("class_separation", defaults.class_separation)?,
                cluster_spread: kv.take_or("cluster_spread", defaults.cluster_spread)?,
                novel_shift: kv.take_or("novel_shift", defaults.novel_shift)?,
                help_prob: kv.take_or("help_prob", defaults.help_prob)?,
                seed,
            };
            let d = make_dataset(&cfg)?;
            (d.familiar, d.held_out, d.novel, cfg.n_classes)
        }
    };
    let spec = BanditTaskSpec::new(kind, n_classes)?;
    let eval_set = match kv.take_str("evaluate_on").as_deref() {
        None | Some("novel") => EvalSet::Novel,
        Some("familiar") => EvalSet::Familiar,
        Some("held_out") => EvalSet::HeldOut,
        Some(other) => return Err(CliError::Usage(format!("unknown evaluate_on `{other}` (novel, familiar or held_out)"))),
    };
    let single_image = match kv.take_str("regime").as_deref() {
        None | Some("single") => true,
        Some("all") => false,
        Some(other) => return Err(CliError::Usage(format!("unknown regime `{other}` (single or all)"))),
    };
    let task = BanditTask {
        spec,
        familiar,
        held_out,
        novel,
        eval_set,
        fraction: kv.take_or("fraction", 1.0)?,
        noise: kv.take_or("noise", spec.default_noise())?,
        single_image,
    };
    if task.familiar.is_empty() {
        return Err(CliError::Usage("no labelled contexts to train on".into()));
    }
    if task.eval_contexts().is_empty() {
        return Err(CliError::Usage("the evaluation context set is empty".into()));
    }
    Ok(task)
}

fn columns(key: &str, value: Option<String>, default: GridConfig) -> CliResult<Vec<usize>> {
    let Some(v) = value else {
        return Ok(default.obstacle_columns);
    };
    let mut one = KeyValues::parse("manifest", &format!("obstacle_columns = {v}"))?;
    let cfg = GridConfig::take_from(&mut one).map_err(|e| CliError::Usage(format!("`{key}`: {e}")))?;
    Ok(cfg.obstacle_columns)
}

fn grid_task(kv: &mut KeyValues, seed: u64) -> CliResult<GridTask> {
    let train_cols = columns("obstacle_columns", kv.take_str("obstacle_columns"), GridConfig::familiar())?;
    let eval_cols = columns("eval_obstacle_columns", kv.take_str("eval_obstacle_columns"), GridConfig::novel())?;
    let mut train = GridConfig::take_from(kv)?;
    train.seed = seed;
    train.obstacle_columns = train_cols;
    let eval = GridConfig { obstacle_columns: eval_cols, ..train.clone() };
    eval.validate()?;
    let fixtures = kv
        .take_list::<String>("fixtures")?
        .unwrap_or_default()
        .iter()
        .map(|name| {
            Action::ALL
                .into_iter()
                .find(|a| a.name() == name)
                .ok_or_else(|| CliError::Usage(format!("unknown fixture action `{name}`")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(GridTask { train, eval, fixtures })
}
