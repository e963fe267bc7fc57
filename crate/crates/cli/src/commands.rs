//! Subcommand implementations. Each returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use cautious::bandit::{caution_metrics, single_image_kofn, to_bandit_mdp, training_examples, Regime};
use cautious::belief::RewardEnsemble;
use cautious::driving::{DrivingGridworld, SafetyStats};
use cautious::eval::{optimal_policy, EvalMethod};
use cautious::kofn::{self, KofnConfig};
use cautious::mdp::format::{read_policy, write_atomic, write_policy};
use cautious::mdp::{StationaryPolicy, TabularMdp};
use cautious::rng::derive_seed;
use cautious::trainer::{ensemble_train, FeatureMap};

use crate::error::{CliError, CliResult};
use crate::manifest::{BanditTask, GridTask, RunManifest, Task};
use crate::output::{ci95_half_width, Cell, Table};

/// Value-iteration tolerance for greedy baseline policies.
const GREEDY_TOL: f64 = 1e-10;

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

/// Task-specific policy metrics: column names and a row builder.
enum Assessor {
    Bandit(Box<BanditTask>),
    Grid(Box<DrivingGridworld>),
}

impl Assessor {
    fn new(task: &Task) -> CliResult<Self> {
        Ok(match task {
            Task::Bandit(b) => Assessor::Bandit(b.clone()),
            Task::Grid(g) => Assessor::Grid(Box::new(DrivingGridworld::new(g.eval.clone())?)),
        })
    }

    /// MDP the ensemble is tabulated over and policies are optimized in.
    fn mdp(&self) -> CliResult<TabularMdp> {
        Ok(match self {
            Assessor::Bandit(b) => to_bandit_mdp(&b.spec, b.eval_contexts(), Regime::AllImages)?.0,
            Assessor::Grid(w) => w.mdp().clone(),
        })
    }

    fn columns(&self) -> Vec<String> {
        match self {
            Assessor::Bandit(b) => {
                let mut c: Vec<String> =
                    ["help_frequency", "mean_action_index", "accuracy"].iter().map(|s| s.to_string()).collect();
                c.extend((0..b.spec.n_actions()).map(|a| format!("action_{a}")));
                c
            }
            Assessor::Grid(_) => SafetyStats::NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn assess(&self, policy: &StationaryPolicy) -> CliResult<Vec<f64>> {
        Ok(match self {
            Assessor::Bandit(b) => {
                let m = caution_metrics(policy, &b.spec, b.eval_contexts())?;
                let mut row = vec![m.help_frequency.unwrap_or(f64::NAN), m.mean_action_index, m.accuracy.unwrap_or(f64::NAN)];
                row.extend(m.action_frequency);
                row
            }
            Assessor::Grid(w) => w.safety_stats_with(policy, EvalMethod::Direct)?.as_array().to_vec(),
        })
    }
}

/// Metric values as cells; `NaN` marks a metric the task does not define.
fn metric_cells(values: Vec<f64>) -> Vec<Cell> {
    values.into_iter().map(|v| if v.is_nan() { Cell::Missing } else { Cell::Num(v) }).collect()
}

fn load_ensemble(manifest: &RunManifest, mdp: &TabularMdp) -> CliResult<RewardEnsemble> {
    let dir = &manifest.ensemble_dir;
    if !dir.join(cautious::belief::MANIFEST_NAME).is_file() {
        return Err(CliError::Usage(format!("{} holds no ensemble; run train-ensemble first", dir.display())));
    }
    let ensemble = RewardEnsemble::read_dir(dir)?;
    if ensemble.n_states() != mdp.n_states() || ensemble.n_actions() != mdp.n_actions() {
        return Err(CliError::Usage(format!(
            "ensemble in {} is {}x{} but the task MDP is {}x{}",
            dir.display(),
            ensemble.n_states(),
            ensemble.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(ensemble)
}

fn run_name(k: usize, n: usize, rep: usize) -> String {
    format!("k{k}_n{n}_rep{rep}")
}

fn policy_path(manifest: &RunManifest, k: usize, rep: usize) -> PathBuf {
    manifest.output_dir.join("policies").join(format!("{}.pol", run_name(k, manifest.kofn.n, rep)))
}

fn run_config(manifest: &RunManifest, k: usize, rep: usize) -> KofnConfig {
    KofnConfig { k, seed: manifest.seed + rep as u64, ..manifest.kofn.clone() }
}

pub fn train_ensemble(manifest: &RunManifest) -> CliResult<Vec<PathBuf>> {
    let member_seed = derive_seed(manifest.seed, 1);
    let training = match &manifest.task {
        Task::Bandit(b) => {
            let data = training_examples(&b.spec, &b.familiar, b.fraction, b.noise, derive_seed(manifest.seed, 0))?;
            let contexts = b.eval_contexts();
            let features: Vec<Vec<f64>> = contexts.iter().map(|c| b.spec.features(c)).collect();
            let (mdp, _) = to_bandit_mdp(&b.spec, contexts, Regime::AllImages)?;
            ensemble_train(&data, manifest.members, member_seed, &manifest.train, FeatureMap::PerState(&features), &mdp)?
        }
        Task::Grid(GridTask { train, eval, .. }) => {
            let data = DrivingGridworld::new(train.clone())?.transition_examples();
            let world = DrivingGridworld::new(eval.clone())?;
            let (features, outcomes) = world.transition_frames();
            let map = FeatureMap::PerOutcome { features: &features, outcomes: &outcomes };
            ensemble_train(&data, manifest.members, member_seed, &manifest.train, map, world.mdp())?
        }
    };
    let dir = &manifest.ensemble_dir;
    training.ensemble.write_dir(dir)?;
    let mut losses = Table::new(["member", "epoch", "loss"]);
    for (m, curve) in training.epoch_losses.iter().enumerate() {
        for (e, &loss) in curve.iter().enumerate() {
            losses.push(vec![m.into(), (e + 1).into(), loss.into()]);
        }
    }
    let loss_path = losses.write(dir, "training_loss", manifest)?;
    Ok(vec![dir.join(cautious::belief::MANIFEST_NAME), loss_path])
}

pub fn run_kofn(manifest: &RunManifest) -> CliResult<Vec<PathBuf>> {
    let assessor = Assessor::new(&manifest.task)?;
    let mdp = assessor.mdp()?;
    let ensemble = load_ensemble(manifest, &mdp)?;
    let policy_dir = manifest.output_dir.join("policies");
    let log_dir = manifest.output_dir.join("logs");
    create_dir(&policy_dir)?;

    let mut columns = vec!["k".to_string(), "n".into(), "repetition".into(), "seed".into()];
    columns.extend(assessor.columns());
    let mut table = Table::new(columns);
    let mut written = Vec::new();
    for &k in &manifest.ks {
        for rep in 0..manifest.repetitions {
            let cfg = run_config(manifest, k, rep);
            let policy = match &manifest.task {
                Task::Bandit(b) if b.single_image => {
                    single_image_kofn(&b.spec, b.eval_contexts(), &ensemble, &cfg, manifest.replacement)?
                }
                _ => {
                    let mut belief = ensemble.clone();
                    if manifest.replacement {
                        belief = belief.with_replacement(cfg.seed);
                    } else {
                        belief.shuffle(cfg.seed);
                    }
                    let (policy, record) = kofn::run(&mdp, &mut belief, &cfg)?;
                    create_dir(&log_dir)?;
                    let log = log_dir.join(format!("{}.log", run_name(k, cfg.n, rep)));
                    write_atomic(&log, &record.to_log())?;
                    written.push(log);
                    policy
                }
            };
            let path = policy_path(manifest, k, rep);
            write_policy(&path, &policy)?;
            written.push(path);
            let mut row: Vec<Cell> = vec![k.into(), cfg.n.into(), rep.into(), cfg.seed.into()];
            row.extend(metric_cells(assessor.assess(&policy)?));
            table.push(row);
        }
    }
    written.push(table.write(&manifest.output_dir, "kofn", manifest)?);
    Ok(written)
}

pub fn baseline(manifest: &RunManifest) -> CliResult<Vec<PathBuf>> {
    let assessor = Assessor::new(&manifest.task)?;
    let mdp = assessor.mdp()?;
    let ensemble = load_ensemble(manifest, &mdp)?;
    create_dir(&manifest.output_dir)?;

    let metric_names = assessor.columns();
    let mut columns = vec!["member".to_string()];
    columns.extend(metric_names.iter().cloned());
    let mut table = Table::new(columns);
    let mut per_metric: Vec<Vec<f64>> = vec![Vec::new(); metric_names.len()];
    for (i, member) in ensemble.members().enumerate() {
        let (policy, _) = optimal_policy(&mdp, member, GREEDY_TOL)?;
        let values = assessor.assess(&policy)?;
        for (col, &v) in per_metric.iter_mut().zip(&values) {
            col.push(v);
        }
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(metric_cells(values));
        table.push(row);
    }
    let defined = |col: &Vec<f64>| !col.iter().any(|v| v.is_nan());
    let mut mean: Vec<Cell> = vec!["mean".into()];
    let mut ci: Vec<Cell> = vec!["ci95_half_width".into()];
    for col in &per_metric {
        if defined(col) {
            mean.push((col.iter().sum::<f64>() / col.len() as f64).into());
            ci.push(ci95_half_width(col).into());
        } else {
            mean.push(Cell::Missing);
            ci.push(Cell::Missing);
        }
    }
    table.push(mean);
    table.push(ci);
    Ok(vec![table.write(&manifest.output_dir, "baseline", manifest)?])
}

fn read_run_policy(manifest: &RunManifest, k: usize, rep: usize) -> CliResult<StationaryPolicy> {
    let path = policy_path(manifest, k, rep);
    if !path.is_file() {
        return Err(CliError::Usage(format!("missing policy {}; run run-kofn first", path.display())));
    }
    Ok(read_policy(&path)?)
}

/// One row per `(k, N, repetition)` policy written by `run-kofn`, after any
/// fixed-policy rows.
fn policy_table(manifest: &RunManifest, assessor: &Assessor, fixed: &[(String, StationaryPolicy)]) -> CliResult<Table> {
    let mut columns = vec!["policy".to_string(), "k".into(), "n".into(), "repetition".into()];
    columns.extend(assessor.columns());
    let mut table = Table::new(columns);
    for (name, policy) in fixed {
        let mut row = vec![name.as_str().into(), Cell::Missing, Cell::Missing, Cell::Missing];
        row.extend(metric_cells(assessor.assess(policy)?));
        table.push(row);
    }
    for &k in &manifest.ks {
        for rep in 0..manifest.repetitions {
            let policy = read_run_policy(manifest, k, rep)?;
            let mut row = vec!["kofn".into(), k.into(), manifest.kofn.n.into(), rep.into()];
            row.extend(metric_cells(assessor.assess(&policy)?));
            table.push(row);
        }
    }
    Ok(table)
}

pub fn gridworld_stats(manifest: &RunManifest) -> CliResult<Vec<PathBuf>> {
    let Task::Grid(task) = &manifest.task else {
        return Err(CliError::Usage("gridworld-stats needs `task = gridworld`".into()));
    };
    let assessor = Assessor::new(&manifest.task)?;
    let Assessor::Grid(world) = &assessor else { unreachable!("gridworld task") };
    let fixed: Vec<(String, StationaryPolicy)> =
        task.fixtures.iter().map(|&a| (format!("always_{}", a.name()), world.policy_from_fn(|_| a))).collect();
    let table = policy_table(manifest, &assessor, &fixed)?;
    Ok(vec![table.write(&manifest.output_dir, "gridworld_stats", manifest)?])
}

pub fn bandit_metrics(manifest: &RunManifest) -> CliResult<Vec<PathBuf>> {
    let Task::Bandit(task) = &manifest.task else {
        return Err(CliError::Usage("bandit-metrics needs a bandit task".into()));
    };
    let assessor = Assessor::new(&manifest.task)?;
    let regime = if task.single_image { "single" } else { "all" };
    let key = |row: Vec<Cell>| -> Vec<Cell> {
        let mut out = vec![task.spec.kind.name().into(), regime.into()];
        out.extend(row);
        out
    };

    let mut table = policy_table(manifest, &assessor, &[])?;
    table.columns.splice(0..0, ["task".to_string(), "regime".into()]);
    table.rows = table.rows.drain(..).map(key).collect();

    // raw action frequencies per true class, for labelled evaluation sets
    let n_actions = task.spec.n_actions();
    let mut columns = vec!["task".to_string(), "regime".into(), "k".into(), "n".into(), "repetition".into(), "class".into()];
    columns.extend((0..n_actions).map(|a| format!("action_{a}")));
    let mut classes = Table::new(columns);
    let contexts = task.eval_contexts();
    let mut present = vec![false; task.spec.n_classes];
    for c in contexts.iter().filter_map(|c| c.label) {
        present[c] = true;
    }
    if present.iter().any(|&p| p) {
        for &k in &manifest.ks {
            for rep in 0..manifest.repetitions {
                let m = caution_metrics(&read_run_policy(manifest, k, rep)?, &task.spec, contexts)?;
                for (class, freq) in m.per_class_action_frequency.into_iter().enumerate().filter(|&(c, _)| present[c]) {
                    let mut row = vec![k.into(), manifest.kofn.n.into(), rep.into(), class.into()];
                    row.extend(freq.into_iter().map(Cell::from));
                    classes.push(key(row));
                }
            }
        }
    }
    Ok(vec![
        table.write(&manifest.output_dir, "bandit_metrics", manifest)?,
        classes.write(&manifest.output_dir, "bandit_class_actions", manifest)?,
    ])
}
