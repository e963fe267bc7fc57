//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Pass criterion numbers as arguments to run a subset.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cautious::bandit::{
    caution_metrics, make_dataset, single_image_kofn, to_bandit_mdp, training_examples, BanditKind, BanditTaskSpec,
    Context, DatasetConfig, Regime,
};
use cautious::belief::{synthetic_belief, RewardEnsemble};
use cautious::driving::{successors, Action, DrivingGridworld, GridConfig, Obstacle, N_ACTIONS};
use cautious::eval::{advantages, optimal_policy, point_mass, q_values, EvalMethod, PolicyEvaluator};
use cautious::kofn::{parse_log, regret_curve, run, Competitor, KofnConfig};
use cautious::mdp::{RewardLayout, RewardTable, StateActionValues, StationaryPolicy, TabularMdp};
use cautious::regret::{regret_bound, RegretMatcher};
use cautious::trainer::{ensemble_train, grad_check, Example, FeatureMap, MlpRewardModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// random small MDPs

const DISCOUNTS: [f64; 4] = [0.0, 0.5, 0.9, 0.99];

fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() + 1e-3 }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn small_mdp(rng: &mut impl Rng) -> TabularMdp {
    let (n, a) = (rng.gen_range(1..=6), rng.gen_range(1..=4));
    let g = DISCOUNTS[rng.gen_range(0..DISCOUNTS.len())];
    let transition = (0..n * a).flat_map(|_| random_distribution(rng, n)).collect();
    let initial = random_distribution(rng, n);
    TabularMdp::new(n, a, transition, initial, g).unwrap()
}

fn random_reward(rng: &mut impl Rng, n: usize, a: usize) -> RewardTable {
    let values = (0..n * a * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RewardTable::new(n, a, RewardLayout::Full, values, 1.0).unwrap()
}

fn random_policy(rng: &mut impl Rng, n: usize, a: usize) -> StationaryPolicy {
    let probs = (0..n).flat_map(|_| random_distribution(rng, a)).collect();
    StationaryPolicy::new(n, a, probs).unwrap()
}

fn deterministic_policies(n: usize, a: usize) -> Vec<StationaryPolicy> {
    (0..a.pow(n as u32))
        .map(|mut code| {
            let actions: Vec<usize> = (0..n)
                .map(|_| {
                    let x = code % a;
                    code /= a;
                    x
                })
                .collect();
            StationaryPolicy::deterministic(a, &actions).unwrap()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1-4: exact oracles

fn performance_difference() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let mdp = small_mdp(&mut rng);
        let (n, a, g) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
        let r = random_reward(&mut rng, n, a);
        let (pi, pi2) = (random_policy(&mut rng, n, a), random_policy(&mut rng, n, a));
        let v = PolicyEvaluator::new(&mdp, &pi).map_err(fail)?.evaluate(&r).map_err(fail)?;
        let eval2 = PolicyEvaluator::new(&mdp, &pi2).map_err(fail)?;
        let v2 = eval2.evaluate(&r).map_err(fail)?;
        let rho = advantages(&q_values(&mdp, &pi, &r, &v).map_err(fail)?, &pi).map_err(fail)?;
        for s in 0..n {
            let d = eval2.state_distribution(&point_mass(n, s)).map_err(fail)?;
            let rhs = (0..n)
                .map(|x| d[x] * (0..a).map(|b| pi2.prob(x, b) * rho.values.get(x, b)).sum::<f64>())
                .sum::<f64>()
                / (1.0 - g);
            worst = worst.max((v2.values[s] - v.values[s] - rhs).abs());
        }
    }
    Ok((worst < 1e-8, format!("max |lhs - rhs| = {worst:.2e} over 100 MDPs")))
}

fn cfr_fixed_reward() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = 2000;
    let (mut worst_gap, mut worst_ratio) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..20 {
        let mdp = small_mdp(&mut rng);
        let (n, a, g) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
        let r = random_reward(&mut rng, n, a);
        let (best_value, best_policy) = deterministic_policies(n, a)
            .into_iter()
            .map(|pi| (PolicyEvaluator::new(&mdp, &pi).unwrap().expected_return(&r).unwrap(), pi))
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .expect("at least one policy");
        let mut belief = RewardEnsemble::new(vec![r.clone()]).map_err(fail)?.with_replacement(0);
        let mut cfg = KofnConfig::new(1, 1, t);
        cfg.snapshot_stride = Some(1);
        let (_, record) = run(&mdp, &mut belief, &cfg).map_err(fail)?;
        let curve = regret_curve(&record, &mdp, &belief, &Competitor::Policy(best_policy)).map_err(fail)?;
        for (i, c) in curve.iter().enumerate() {
            worst_ratio = worst_ratio.max(c / (regret_bound(r.bound(), a, i + 1) / (1.0 - g)));
        }
        let best_iterate = record.iterations.iter().map(|it| it.mixed_return).fold(f64::NEG_INFINITY, f64::max);
        worst_gap = worst_gap.max(best_value - best_iterate);
    }
    Ok((
        worst_gap < 1e-3 && worst_ratio <= 1.0,
        format!("worst best-iterate gap {worst_gap:.2e}, worst regret / bound {worst_ratio:.3}"),
    ))
}

fn regret_matching_bound() -> Check {
    fn worst_ratio(n: usize, t: usize, mut adversary: impl FnMut(&[f64], usize) -> Vec<f64>) -> f64 {
        let mut m = RegretMatcher::new(n);
        let mut worst = f64::NEG_INFINITY;
        for step in 1..=t {
            let policy = m.current_policy();
            let q = adversary(&policy, step);
            m.observe(&q, &policy).expect("matching shapes");
            let positive: f64 = m.cumulative_regret().iter().map(|r| r.max(0.0)).fold(0.0, f64::max);
            worst = worst.max(positive / regret_bound(1.0, n, step));
        }
        worst
    }
    let t = 10_000;
    let mut worst = f64::NEG_INFINITY;
    for n in [2, 5, 11] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let ratios = [
            worst_ratio(n, t, |_, _| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()),
            // pay only the least-played action
            worst_ratio(n, t, |p, _| {
                let low = (0..n).min_by(|&x, &y| p[x].total_cmp(&p[y])).unwrap();
                (0..n).map(|x| if x == low { 1.0 } else { -1.0 }).collect()
            }),
            // punish the most-played action
            worst_ratio(n, t, |p, _| {
                let high = (0..n).max_by(|&x, &y| p[x].total_cmp(&p[y])).unwrap();
                (0..n).map(|x| if x == high { -1.0 } else { 1.0 }).collect()
            }),
            worst_ratio(n, t, |_, step| {
                (0..n).map(|x| if x == n - 1 { 0.1 } else if (step + x) % 2 == 0 { 1.0 } else { -1.0 }).collect()
            }),
        ];
        worst = ratios.into_iter().fold(worst, f64::max);
    }
    Ok((worst <= 1.0, format!("largest positive regret reached {worst:.3} of the bound")))
}

fn mixing_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for (k, n, g) in [(1, 10, 0.9), (3, 10, 0.99), (5, 5, 0.5), (7, 20, 0.0)] {
        let transition = (0..6 * 3).flat_map(|_| random_distribution(&mut rng, 6)).collect();
        let mdp = TabularMdp::new(6, 3, transition, random_distribution(&mut rng, 6), g).map_err(fail)?;
        let base = random_reward(&mut rng, 6, 3);
        let noise = StateActionValues::new(6, 3, vec![0.4; 18]).map_err(fail)?;
        let belief = synthetic_belief(&base, &noise, 2000, 5).map_err(fail)?;
        let mut queue = belief.clone();
        queue.shuffle(9);
        let mut cfg = KofnConfig::new(k, n, 2000 / n);
        cfg.snapshot_stride = Some(1);
        cfg.seed = 9;
        let (_, record) = run(&mdp, &mut queue, &cfg).map_err(fail)?;
        // everything below comes from the textual log and the stored snapshots
        for (line, (t, policy)) in parse_log(&record.to_log()).map_err(fail)?.iter().zip(&record.snapshots) {
            if line.0 != *t {
                return Err(format!("log line {} does not match snapshot {t}", line.0));
            }
            let eval = PolicyEvaluator::new(&mdp, policy).map_err(fail)?;
            let chosen: Vec<&RewardTable> = line.2.iter().map(|&j| queue.member(line.1[j])).collect();
            let mean_of_returns = chosen.iter().map(|r| eval.expected_return(r).unwrap()).sum::<f64>() / k as f64;
            let mixed = eval.expected_return(&RewardTable::mean(chosen).map_err(fail)?).map_err(fail)?;
            worst = worst.max((mixed - mean_of_returns).abs()).max((line.3 - mean_of_returns).abs());
            checked += 1;
        }
    }
    Ok((worst < 1e-10, format!("{checked} logged iterations, max deviation {worst:.2e}")))
}

// ---------------------------------------------------------------------------
// 5-6: bandit caution

struct BanditSetup {
    spec: BanditTaskSpec,
    novel: Vec<Context>,
    ensemble: RewardEnsemble,
}

fn bandit_ensemble(kind: BanditKind, fraction: f64, cfg: &TrainConfig) -> Result<BanditSetup, String> {
    let spec = BanditTaskSpec::new(kind, 10).map_err(fail)?;
    let defaults = DatasetConfig::default();
    let data = make_dataset(&DatasetConfig {
        held_out_per_class: 20,
        novel_shift: 10.0 * defaults.cluster_spread,
        ..defaults
    })
    .map_err(fail)?;
    let examples = training_examples(&spec, &data.familiar, fraction, spec.default_noise(), 7).map_err(fail)?;
    let features: Vec<Vec<f64>> = data.novel.iter().map(|c| spec.features(c)).collect();
    let (mdp, _) = to_bandit_mdp(&spec, &data.novel, Regime::AllImages).map_err(fail)?;
    let cfg = TrainConfig { output_weights: spec.output_weights(), ..cfg.clone() };
    let trained = ensemble_train(&examples, 200, 100, &cfg, FeatureMap::PerState(&features), &mdp).map_err(fail)?;
    Ok(BanditSetup { spec, novel: data.novel, ensemble: trained.ensemble })
}

/// Help frequency of k-of-N single-image policies, averaged over 10 repetitions.
fn help_frequency(setup: &BanditSetup, k: usize, n: usize) -> Result<f64, String> {
    let mut total = 0.0;
    for rep in 0..10 {
        let mut cfg = KofnConfig::new(k, n, 100);
        cfg.seed = rep;
        let policy = single_image_kofn(&setup.spec, &setup.novel, &setup.ensemble, &cfg, true).map_err(fail)?;
        total += caution_metrics(&policy, &setup.spec, &setup.novel).map_err(fail)?.help_frequency.unwrap_or(0.0);
    }
    Ok(total / 10.0)
}

fn caution_emergence() -> Check {
    let setup = bandit_ensemble(BanditKind::AskForHelp, 1.0, &TrainConfig::default())?;
    let (mdp, _) = to_bandit_mdp(&setup.spec, &setup.novel, Regime::AllImages).map_err(fail)?;
    let mut baseline = 0.0;
    for member in setup.ensemble.members() {
        let (policy, _) = optimal_policy(&mdp, member, 1e-10).map_err(fail)?;
        baseline += caution_metrics(&policy, &setup.spec, &setup.novel).map_err(fail)?.help_frequency.unwrap_or(0.0);
    }
    baseline /= setup.ensemble.len() as f64;
    let configs = [(1, 20), (1, 10), (5, 10), (10, 10)];
    let help = configs.iter().map(|&(k, n)| help_frequency(&setup, k, n)).collect::<Result<Vec<_>, _>>()?;
    let increases: Vec<f64> = help.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    let monotone = increases.is_empty() || (increases.len() == 1 && increases[0] <= 0.02);
    let ratio = help[0] / baseline;
    let shown: Vec<String> = configs.iter().zip(&help).map(|((k, n), h)| format!("{k}-of-{n} {h:.4}")).collect();
    Ok((monotone && ratio >= 3.0, format!("{}, baseline {baseline:.4}, ratio {ratio:.1}", shown.join(", "))))
}

fn data_extent() -> Check {
    let full = TrainConfig::default();
    // the 1% subset is a single full batch; more epochs give it a comparable
    // number of optimizer steps
    let small = TrainConfig { batch_size: 10, epochs: 10_000, ..TrainConfig::default() };
    let mut gaps = Vec::new();
    for (fraction, cfg) in [(0.01, &small), (1.0, &full)] {
        let setup = bandit_ensemble(BanditKind::PerturbedHelp, fraction, cfg)?;
        gaps.push(help_frequency(&setup, 1, 20)? - help_frequency(&setup, 10, 10)?);
    }
    Ok((gaps[1] > gaps[0], format!("1-of-20 minus 10-of-10 help gap: 1% {:.4}, 100% {:.4}", gaps[0], gaps[1])))
}

// ---------------------------------------------------------------------------
// 7-8: gridworld

/// Every combination of car column, speed and per-half obstacle that the
/// world description allows, counted without the library's enumeration.
fn brute_force_states(cfg: &GridConfig) -> usize {
    let mut obstacles: Vec<Option<Obstacle>> = vec![None];
    for row in 0..cfg.vision_rows {
        for column in 0..4 {
            obstacles.push(Some(Obstacle { row, column }));
        }
    }
    let in_half = |o: &Option<Obstacle>, half: usize| match o {
        None => true,
        Some(o) => o.column / 2 == half && cfg.obstacle_columns.contains(&o.column),
    };
    let mut count = 0;
    for _car_column in 0..4 {
        for _speed in 0..=cfg.speed_limit() {
            for _left in obstacles.iter().filter(|o| in_half(o, 0)) {
                for _right in obstacles.iter().filter(|o| in_half(o, 1)) {
                    count += 1;
                }
            }
        }
    }
    count
}

fn gridworld_exactness() -> Check {
    let familiar = DrivingGridworld::new(GridConfig::familiar()).map_err(fail)?;
    let novel = DrivingGridworld::new(GridConfig::novel()).map_err(fail)?;
    let counts = (familiar.n_states(), novel.n_states());
    let oracle = (brute_force_states(&GridConfig::familiar()), brute_force_states(&GridConfig::novel()));
    let mut row_error = 0.0_f64;
    for world in [&familiar, &novel] {
        for s in 0..world.n_states() {
            for a in 0..N_ACTIONS {
                row_error = row_error.max((world.mdp().transition_row(s, a).iter().sum::<f64>() - 1.0).abs());
                let branch_total: f64 =
                    successors(world.config(), world.state(s), Action::ALL[a]).iter().map(|o| o.probability).sum();
                row_error = row_error.max((branch_total - 1.0).abs());
            }
        }
    }
    let policies = [
        novel.policy_from_fn(|_| Action::Accelerate),
        novel.policy_from_fn(|s| if s.speed < 2 { Action::Accelerate } else { Action::Cruise }),
        StationaryPolicy::uniform(novel.n_states(), N_ACTIONS),
    ];
    let mut worst_z = 0.0_f64;
    for (i, p) in policies.iter().enumerate() {
        let exact = novel.safety_stats_with(p, EvalMethod::Direct).map_err(fail)?.as_array();
        let (mean, se) = novel.monte_carlo_safety(p, 100_000, i as u64).map_err(fail)?;
        for j in 0..3 {
            let (m, s) = (mean.as_array()[j], se.as_array()[j]);
            worst_z = worst_z.max((m - exact[j]).abs() / s.max(1e-12));
        }
    }
    let pass = counts == (144, 400) && oracle == counts && row_error < 1e-12 && worst_z <= 3.0;
    Ok((
        pass,
        format!(
            "states {counts:?} (oracle {oracle:?}), max row error {row_error:.1e}, worst Monte-Carlo deviation {worst_z:.2} SE"
        ),
    ))
}

/// Non-increasing along `values`, allowing one adjacent increase of at most
/// 5% relative.
fn non_increasing_with_slack(values: &[f64]) -> bool {
    let bad: Vec<(f64, f64)> = values.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect();
    bad.is_empty() || (bad.len() == 1 && bad[0].1 - bad[0].0 <= 0.05 * bad[0].0.abs())
}

fn gridworld_caution() -> Check {
    let familiar = DrivingGridworld::new(GridConfig::familiar()).map_err(fail)?;
    let novel = DrivingGridworld::new(GridConfig::novel()).map_err(fail)?;
    let data = familiar.transition_examples();
    let (features, outcomes) = novel.transition_frames();
    let map = FeatureMap::PerOutcome { features: &features, outcomes: &outcomes };
    let trained = ensemble_train(&data, 100, 100, &TrainConfig::gridworld(), map, novel.mdp()).map_err(fail)?;
    // k decreasing: 20, 5, 1
    let mut speed = Vec::new();
    let mut collisions = Vec::new();
    for k in [20, 5, 1] {
        let mut total = [0.0; 3];
        for rep in 0..5 {
            let mut belief = trained.ensemble.clone().with_replacement(rep);
            let mut cfg = KofnConfig::new(k, 20, 100);
            cfg.seed = rep;
            let (policy, _) = run(novel.mdp(), &mut belief, &cfg).map_err(fail)?;
            let stats = novel.safety_stats_with(&policy, EvalMethod::Direct).map_err(fail)?.as_array();
            total.iter_mut().zip(stats).for_each(|(t, s)| *t += s / 5.0);
        }
        speed.push(total[0]);
        collisions.push(total[1]);
    }
    Ok((
        non_increasing_with_slack(&speed) && non_increasing_with_slack(&collisions),
        format!("k = 20, 5, 1: discounted speed {speed:.3?}, collision rate {collisions:.4?}"),
    ))
}

// ---------------------------------------------------------------------------
// 9-10

fn gradient_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (n_in, n_hidden, n_out) = (rng.gen_range(1..10), rng.gen_range(1..20), rng.gen_range(1..6));
        let model = MlpRewardModel::init(n_in, n_hidden, n_out, &mut rng);
        let ex = Example {
            features: (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            target: (0..n_out).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            weights: (0..n_out).map(|_| rng.gen_range(0.1..1.0)).collect(),
        };
        worst = worst.max(grad_check(&model, &ex, 1e-5).map_err(fail)?);
    }
    Ok((worst < 1e-4, format!("worst relative error {worst:.2e} over 100 checks")))
}

/// Every regular file below `dir`, as (relative path, contents), sorted.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable directory") {
            let p = entry.expect("directory entry").path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "run.manifest") {
                let rel = p.strip_prefix(dir).expect("below root").display().to_string();
                out.push((rel, fs::read(&p).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn cli_determinism() -> Check {
    let bandit = "task = ask_for_help\nmembers = 20\nper_class = 20\nn_novel = 30\nepochs = 20\n\
                  k = 1, 5\nn = 5\niterations = 40\nrepetitions = 2\nreplacement = true\nseed = 3\n";
    let grid = "task = gridworld\nmembers = 3\nepochs = 20\nk = 1, 2\nn = 3\niterations = 10\nreplacement = true\n\
                fixtures = brake, cruise\n";
    let cases: [(&str, &[&str]); 2] = [
        (bandit, &["train-ensemble", "run-kofn", "baseline", "bandit-metrics"]),
        (grid, &["train-ensemble", "run-kofn", "baseline", "gridworld-stats"]),
    ];
    let mut files = 0;
    for (manifest, commands) in cases {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::TempDir::new().map_err(fail)?;
            fs::write(dir.path().join("run.manifest"), manifest).map_err(fail)?;
            for cmd in commands {
                for format in ["csv", "json"] {
                    let out = Command::new(env!("CARGO_BIN_EXE_cautious"))
                        .current_dir(dir.path())
                        .args([cmd, "--manifest", "run.manifest", "--format", format])
                        .output()
                        .map_err(fail)?;
                    if !out.status.success() {
                        return Err(format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr)));
                    }
                }
            }
            runs.push(snapshot(dir.path()));
        }
        if runs[0] != runs[1] {
            let differing: Vec<&str> =
                runs[0].iter().zip(&runs[1]).filter(|(a, b)| a != b).map(|(a, _)| a.0.as_str()).collect();
            return Ok((false, format!("outputs differ: {differing:?}")));
        }
        files += runs[0].len();
    }
    Ok((true, format!("{files} output files byte-identical across reruns")))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "performance-difference identity", budget: Duration::from_secs(10), check: performance_difference },
        Criterion { id: 2, name: "CFR optimality under a fixed reward", budget: Duration::from_secs(120), check: cfr_fixed_reward },
        Criterion { id: 3, name: "regret-matching bound", budget: Duration::from_secs(10), check: regret_matching_bound },
        Criterion { id: 4, name: "k-of-N mixing exactness", budget: Duration::from_secs(60), check: mixing_exactness },
        Criterion { id: 5, name: "caution emergence", budget: Duration::from_secs(30 * 60), check: caution_emergence },
        Criterion { id: 6, name: "data-extent effect", budget: Duration::from_secs(45 * 60), check: data_extent },
        Criterion { id: 7, name: "gridworld exactness", budget: Duration::from_secs(5 * 60), check: gridworld_exactness },
        Criterion { id: 8, name: "gridworld caution trend", budget: Duration::from_secs(60 * 60), check: gridworld_caution },
        Criterion { id: 9, name: "gradient correctness", budget: Duration::from_secs(10), check: gradient_correctness },
        Criterion { id: 10, name: "CLI determinism", budget: Duration::from_secs(5 * 60), check: cli_determinism },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.check)();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok((ok, detail)) => (ok && elapsed <= c.budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<36} {} ({detail}; {:.1}s of {}s)",
            c.id,
            c.name,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
