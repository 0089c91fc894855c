use std::f64::consts::PI;

use fairpursuit::env::{
    self, angle_diff, observe, step, wrap_angle, EnvConfig, JointAction, Permutation, Permute,
    Pose2D, RewardMode, WorldState,
};
use fairpursuit::fairness::{team_fairness, OutcomeRecord};
use fairpursuit::harness::{aggregate, ResultRow};
use fairpursuit::tinynet::{polyak_blend, Gradients, Head, Mlp};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pose() -> impl Strategy<Value = Pose2D> {
    (-1.0..1.0f64, -1.0..1.0f64, -PI..PI).prop_map(|(x, y, h)| Pose2D::new(x, y, h))
}

fn state(n: usize) -> impl Strategy<Value = WorldState> {
    (prop::collection::vec(pose(), n), pose()).prop_map(|(pursuers, evader)| WorldState {
        pursuers,
        evader,
        step_index: 0,
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|m| Permutation::new(m).unwrap())
}

fn state_and_perm() -> impl Strategy<Value = (WorldState, Permutation)> {
    (2usize..=5).prop_flat_map(|n| (state(n), permutation(n)))
}

proptest! {
    #[test]
    fn wrapped_angles_stay_in_range(a in -1e6..1e6f64) {
        let w = wrap_angle(a);
        prop_assert!((-PI..PI).contains(&w));
        prop_assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-6
            || (1.0 - ((a - w) / (2.0 * PI)).fract().abs()) < 1e-6);
    }

    #[test]
    fn permutation_then_inverse_is_identity((s, sigma) in state_and_perm()) {
        let back = s.permute(&sigma).unwrap().permute(&sigma.inverse()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn observations_are_label_free((s, sigma) in state_and_perm()) {
        let moved = s.permute(&sigma).unwrap();
        for i in 0..s.n_pursuers() {
            let a = observe(&s, i).unwrap().to_vec();
            let b = observe(&moved, sigma.image(i)).unwrap().to_vec();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn step_commutes_with_relabeling((s, sigma) in state_and_perm(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let headings: Vec<f64> = (0..s.n_pursuers()).map(|_| rand::Rng::random_range(&mut rng, -PI..PI)).collect();
        let action = JointAction::new(headings);
        let cfg = EnvConfig { n_pursuers: s.n_pursuers(), ..EnvConfig::default() };
        let a = step(&s, &action, &cfg).unwrap();
        let b = step(&s.permute(&sigma).unwrap(), &action.permute(&sigma).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a.state.permute(&sigma).unwrap(), b.state);
        prop_assert_eq!(a.rewards.permute(&sigma).unwrap(), b.rewards);
    }

    #[test]
    fn kinematics_respect_speed(s in state(3), h in prop::collection::vec(-PI..PI, 3), v in 0.1..2.0f64) {
        let cfg = EnvConfig { pursuer_speed: v, ..EnvConfig::default() };
        let next = step(&s, &JointAction::new(h), &cfg).unwrap().state;
        for (a, b) in s.pursuers.iter().zip(&next.pursuers) {
            let moved = (b.x - a.x).hypot(b.y - a.y);
            prop_assert!(moved <= v * cfg.dt + 1e-12);
            let clipped = b.x.abs() == 1.0 || b.y.abs() == 1.0;
            if !clipped {
                prop_assert!((moved - v * cfg.dt).abs() < 1e-12);
            }
        }
        let e = (next.evader.x - s.evader.x).hypot(next.evader.y - s.evader.y);
        prop_assert!(e <= cfg.evader_speed * cfg.dt + 1e-12);
    }

    #[test]
    fn rewards_are_conserved(s in state(3), h in prop::collection::vec(-PI..PI, 3), mutual in any::<bool>()) {
        let mode = if mutual { RewardMode::Mutual } else { RewardMode::Individual };
        let cfg = EnvConfig { reward_mode: mode, pursuer_speed: 1.0, ..EnvConfig::default() };
        let r = step(&s, &JointAction::new(h), &cfg).unwrap();
        let contribution = |i: usize| if r.capturers.contains(&i) { 50.0 } else { -0.1 };
        let total: f64 = (0..3).map(contribution).sum();
        for (i, c) in r.rewards.components.iter().enumerate() {
            let expected = if mutual { total } else { contribution(i) };
            prop_assert!((c - expected).abs() < 1e-12);
        }
        prop_assert_eq!(r.done, !r.capturers.is_empty());
    }

    #[test]
    fn evader_heading_maximizes_potential(s in state(3), probe in -PI..PI) {
        let best = env::evader_heading(&s);
        prop_assert!(env::evader_utility(&s, best) >= env::evader_utility(&s, probe) - 1e-9);
    }

    #[test]
    fn fairness_score_is_bounded(capturers in prop::collection::vec(prop::option::of(0usize..3), 1..200)) {
        let outcomes: Vec<_> = capturers.iter().map(|c| match c {
            Some(i) => OutcomeRecord::from_capturers(&[*i], 5, vec![0.0; 3]),
            None => OutcomeRecord::from_capturers(&[], 200, vec![0.0; 3]),
        }).collect();
        let score = team_fairness(&outcomes, 3).unwrap();
        prop_assert!(score.bits >= 0.0);
        prop_assert!(score.bits <= 3f64.log2() + 1e-12);
    }

    #[test]
    fn fairness_is_invariant_to_relabeling(capturers in prop::collection::vec(prop::option::of(0usize..3), 1..100), sigma in permutation(3)) {
        let outcomes: Vec<_> = capturers.iter().map(|c| OutcomeRecord::from_capturers(c.as_slice(), 5, vec![0.0; 3])).collect();
        let moved: Vec<_> = outcomes.iter().map(|o| o.permute(&sigma).unwrap()).collect();
        let a = team_fairness(&outcomes, 3).unwrap().bits;
        let b = team_fairness(&moved, 3).unwrap().bits;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn clipping_never_increases_norm(scale in 1e-3..1e3f64, clip in 1e-2..10.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::init(&mut rng, &[3, 5, 1], Head::Critic).unwrap();
        let mut g = Gradients::zeros_like(&net);
        for layer in &mut g.layers {
            layer.weights.mapv_inplace(|_| scale * rand::Rng::random_range(&mut rng, -1.0..1.0));
        }
        let before = g.global_norm();
        let reported = g.clip_global_norm(clip);
        prop_assert_eq!(reported, before);
        prop_assert!(g.global_norm() <= before.max(clip) + 1e-9);
        prop_assert!(g.global_norm() <= clip * (1.0 + 1e-12) || before <= clip);
        if before <= clip {
            prop_assert_eq!(g.global_norm(), before);
        }
    }

    #[test]
    fn polyak_moves_monotonically_toward_online(tau in 1e-3..1.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::init(&mut rng, &[4, 6, 1], Head::Actor).unwrap();
        let mut target = Mlp::init(&mut rng, &[4, 6, 1], Head::Actor).unwrap();
        let dist = |a: &Mlp, b: &Mlp| a.flat_params().iter().zip(b.flat_params()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let mut last = dist(&target, &online);
        for _ in 0..20 {
            polyak_blend(&mut target, &online, tau);
            let d = dist(&target, &online);
            prop_assert!(d <= last + 1e-15);
            prop_assert!((d - (1.0 - tau) * last).abs() <= 1e-9 * (1.0 + last));
            last = d;
        }
    }

    #[test]
    fn aggregate_means_ignore_row_order(values in prop::collection::vec(0.0..1.0f64, 1..8), rot in 0usize..8) {
        let rows: Vec<ResultRow> = values.iter().enumerate().map(|(k, &v)| ResultRow {
            strategy: "mutual".into(), velocity: 0.8, lambda: 0.0, seed: k as u64,
            success_rate: v, fairness_bits: v / 2.0, mean_steps: 10.0,
            captures: [0.0; 3], no_capture_count: 0,
        }).collect();
        let mut rotated = rows.clone();
        rotated.rotate_left(rot % rows.len());
        let a = aggregate(&rows);
        let b = aggregate(&rotated);
        prop_assert!((a[0].success.mean - b[0].success.mean).abs() < 1e-12);
        prop_assert!((a[0].fairness.std - b[0].fairness.std).abs() < 1e-12);
    }
}

#[test]
fn angle_diff_is_antisymmetric_off_the_cut() {
    for (a, b) in [(0.3, -2.9), (3.0, -3.0), (1.0, 1.5)] {
        assert!((angle_diff(a, b) + angle_diff(b, a)).abs() < 1e-12);
    }
}
