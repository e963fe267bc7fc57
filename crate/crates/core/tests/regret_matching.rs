use cautious::regret::{regret_bound, RegretMatcher};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plays `t` rounds against `adversary` and returns the largest cumulative
/// regret seen at any prefix, scaled by that prefix's bound.
fn worst_ratio(n_actions: usize, t: usize, mut adversary: impl FnMut(&[f64], usize) -> Vec<f64>) -> f64 {
    let mut m = RegretMatcher::new(n_actions);
    let mut worst = f64::NEG_INFINITY;
    for step in 1..=t {
        let policy = m.current_policy();
        let q = adversary(&policy, step);
        assert!(q.iter().all(|x| x.abs() <= 1.0));
        m.observe(&q, &policy).unwrap();
        worst = worst.max(m.max_regret() / regret_bound(1.0, n_actions, step));
    }
    worst
}

#[test]
fn regret_stays_below_the_bound_against_adversaries() {
    let t = 10_000;
    for n in [2, 5, 11] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let random = worst_ratio(n, t, |_, _| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        // pay off only the action currently played least
        let starve = worst_ratio(n, t, |p, _| {
            let low = (0..n).min_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            (0..n).map(|a| if a == low { 1.0 } else { -1.0 }).collect()
        });
        // punish the action currently played most
        let chase = worst_ratio(n, t, |p, _| {
            let high = (0..n).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            (0..n).map(|a| if a == high { -1.0 } else { 1.0 }).collect()
        });
        // a fixed best action hidden under alternating noise
        let phase = worst_ratio(n, t, |_, step| {
            (0..n).map(|a| if a == n - 1 { 0.1 } else if (step + a) % 2 == 0 { 1.0 } else { -1.0 }).collect()
        });
        for (name, ratio) in [("random", random), ("starve", starve), ("chase", chase), ("phase", phase)] {
            assert!(ratio <= 1.0, "|A|={n} {name}: regret reached {ratio} of the bound");
        }
    }
}

proptest! {
    #[test]
    fn policy_is_a_distribution(regrets in prop::collection::vec(-10.0..10.0f64, 1..12)) {
        let p = RegretMatcher::from_regrets(regrets, 1).current_policy();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn policy_is_scale_invariant(regrets in prop::collection::vec(-10.0..10.0f64, 1..12), scale in 1e-3..1e3f64) {
        let p = RegretMatcher::from_regrets(regrets.clone(), 1).current_policy();
        let q = RegretMatcher::from_regrets(regrets.iter().map(|r| r * scale).collect(), 1).current_policy();
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
