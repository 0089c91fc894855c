use fairpursuit::env::{self, EnvConfig};
use fairpursuit::harness;
use fairpursuit::tinynet::Mlp;
use fairpursuit::train::{
    self, actor_objective_and_gradient, actor_update, critic_loss_and_gradient, critic_update,
    AgentNets, Batch, CheckpointTag, ReplayBuffer, Strategy, TrainConfig, Transition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 3;

fn obs_dim() -> usize {
    env::observation_dim(N)
}

fn random_transition(rng: &mut ChaCha8Rng) -> Transition {
    let mut v = |len: usize, lim: f64| {
        (0..len)
            .map(|_| rng.random_range(-lim..lim))
            .collect::<Vec<_>>()
    };
    Transition {
        observations: v(N * obs_dim(), 1.0),
        actions: v(N, 3.0),
        rewards: v(N, 1.0),
        next_observations: v(N * obs_dim(), 1.0),
        terminal: false,
    }
}

fn random_batch(seed: u64, m: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = ReplayBuffer::new(m, N, obs_dim());
    for _ in 0..m {
        buf.push(&random_transition(&mut rng)).unwrap();
    }
    buf.gather(&(0..m).collect::<Vec<_>>())
}

fn team(seed: u64) -> Vec<AgentNets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..N)
        .map(|_| AgentNets::new(&mut rng, obs_dim(), &[8, 8], &[8, 8], 0.05).unwrap())
        .collect()
}

fn perturb(net: &mut Mlp, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = net
        .flat_params()
        .iter()
        .map(|x| x + rng.random_range(-0.3..0.3))
        .collect();
    net.set_flat_params(&p).unwrap();
}

#[test]
fn replay_sampling_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut buf = ReplayBuffer::new(100, N, obs_dim());
    for _ in 0..100 {
        buf.push(&random_transition(&mut rng)).unwrap();
    }
    let draws = 100_000;
    let mut counts = [0usize; 100];
    for i in buf.sample_indices(&mut rng, draws) {
        counts[i] += 1;
    }
    let p = 0.01;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - draws as f64 * p).abs() <= 5.0 * sd, "count {c}");
    }
}

fn agent_zero_after_update(nets: &[AgentNets], lambda: f64) -> AgentNets {
    let batch = random_batch(4, 32);
    let cfg = TrainConfig {
        strategy: if lambda > 0.0 {
            Strategy::FairEr { lambda }
        } else {
            Strategy::IndividualReward
        },
        actor_lr: 0.05,
        critic_lr: 0.05,
        clip: 10.0,
        ..TrainConfig::desk()
    };
    let mut nets = nets.to_vec();
    critic_update(0, &batch, &mut nets, &cfg).unwrap();
    actor_update(0, &batch, &mut nets, &cfg).unwrap();
    nets.swap_remove(0)
}

#[test]
fn updates_ignore_teammates_without_the_regularizer() {
    let base = team(1);
    let mut changed = base.clone();
    perturb(&mut changed[1].actor.online, 2);
    perturb(&mut changed[2].critic.online, 3);
    assert_eq!(
        agent_zero_after_update(&base, 0.0),
        agent_zero_after_update(&changed, 0.0)
    );
    assert_ne!(
        agent_zero_after_update(&base, 0.5),
        agent_zero_after_update(&changed, 0.5)
    );
}

fn flat_fd(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += eps;
            down[k] -= eps;
            (f(&up) - f(&down)) / (2.0 * eps)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[test]
fn actor_gradient_matches_objective_differences() {
    let nets = team(5);
    let batch = random_batch(6, 16);
    let obs = batch.obs[1].view();
    for lambda in [0.0, 0.7] {
        let actors: Vec<&Mlp> = nets.iter().map(|n| &n.actor.online).collect();
        let critic = &nets[1].critic.online;
        let (_, g) = actor_objective_and_gradient(1, &actors, critic, obs, lambda).unwrap();
        let fd = flat_fd(
            |p| {
                let mut moved = nets[1].actor.online.clone();
                moved.set_flat_params(p).unwrap();
                let mut team = actors.clone();
                team[1] = &moved;
                actor_objective_and_gradient(1, &team, critic, obs, lambda)
                    .unwrap()
                    .0
            },
            &nets[1].actor.online.flat_params(),
            1e-6,
        );
        let g = g.flat();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(
            norm(&diff) <= 1e-4 * norm(&fd).max(norm(&g)),
            "lambda {lambda}"
        );
    }
}

#[test]
fn actor_steps_ascend_and_critic_steps_descend() {
    let batch = random_batch(8, 32);
    let cfg = TrainConfig {
        strategy: Strategy::FairEr { lambda: 0.3 },
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        clip: 100.0,
        ..TrainConfig::desk()
    };
    let mut nets = team(7);
    let objective = |nets: &[AgentNets]| {
        let actors: Vec<&Mlp> = nets.iter().map(|n| &n.actor.online).collect();
        actor_objective_and_gradient(0, &actors, &nets[0].critic.online, batch.obs[0].view(), 0.3)
            .unwrap()
            .0
    };
    let loss = |nets: &[AgentNets]| {
        critic_loss_and_gradient(&nets[0], &batch.for_agent(0), cfg.gamma)
            .unwrap()
            .0
    };
    let (j0, l0) = (objective(&nets), loss(&nets));
    critic_update(0, &batch, &mut nets, &cfg).unwrap();
    assert!(loss(&nets) < l0);
    let j1 = objective(&nets);
    actor_update(0, &batch, &mut nets, &cfg).unwrap();
    assert!(objective(&nets) > j1);
    assert!(j0.is_finite());
}

#[test]
fn zero_episodes_keep_only_the_initial_checkpoint() {
    let cfg = TrainConfig {
        episodes: 0,
        ..TrainConfig::desk()
    };
    let run = train::train(&cfg, &EnvConfig::default(), &[1.0, 0.8]).unwrap();
    assert_eq!(run.checkpoints.len(), 1);
    assert_eq!(run.checkpoints[0].tag, CheckpointTag::Initial);
    assert!(run.log.is_empty());
}

#[test]
fn mutual_team_learns_to_capture_at_high_speed() {
    let cfg = TrainConfig {
        episodes: 2000,
        strategy: Strategy::MutualReward,
        curriculum: train::Curriculum {
            v_start: 1.2,
            v_end: 1.2,
        },
        updates_per_episode: None,
        seed: 3,
        ..TrainConfig::desk()
    };
    let run = train::train(&cfg, &EnvConfig::default(), &[]).unwrap();
    let team = run.checkpoints.last().unwrap().team().unwrap();
    let r = harness::evaluate(&team, "mutual", 0.0, &EnvConfig::default(), 1.2, 100, 1).unwrap();
    assert!(r.success_rate >= 0.9, "success {}", r.success_rate);
}
