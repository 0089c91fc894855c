//! Decentralized DDPG for the pursuer team.
//!
//! Each pursuer owns an actor `μ_i(o_i)` and a critic `Q_i(o_i, a_i)` with
//! Polyak-averaged targets, and updates them from its own slots of a shared
//! replay buffer of joint transitions. Under Fair-E every pursuer resolves to a
//! single tied parameter set and per-agent gradients are averaged; under
//! Fair-ER the actor objective gains the equivariance penalty.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{self, wrap_angle, EnvConfig, Episode, JointAction, RewardMode};
use crate::error::{Error, Result};
use crate::fairness::{self, tie_parameters, OutcomeRecord, SharedPolicyHandle};
use crate::io;
use crate::policy::ActorTeam;
use crate::tinynet::{Direction, Gradients, Head, Mlp, NetCheckpoint, Sgd, TargetPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    IndividualReward,
    MutualReward,
    /// Tied parameters across pursuers.
    FairE,
    /// Independent parameters plus the equivariance penalty weighted by `lambda`.
    FairEr {
        lambda: f64,
    },
}

impl Strategy {
    pub fn reward_mode(&self) -> RewardMode {
        match self {
            Strategy::IndividualReward => RewardMode::Individual,
            _ => RewardMode::Mutual,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Strategy::FairEr { lambda } => *lambda,
            _ => 0.0,
        }
    }

    pub fn is_tied(&self) -> bool {
        matches!(self, Strategy::FairE)
    }

    /// Short label used in file names and result tables.
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::IndividualReward => "individual",
            Strategy::MutualReward => "mutual",
            Strategy::FairE => "fair-e",
            Strategy::FairEr { .. } => "fair-er",
        }
    }
}

/// Linearly decaying exploration noise on headings (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// Length of the decay; `None` means the first half of the run.
    pub decay_episodes: Option<usize>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_start: 0.5,
            sigma_end: 0.05,
            decay_episodes: None,
        }
    }
}

impl NoiseSpec {
    /// Noise scale at `episode` of a run lasting `episodes`.
    pub fn sigma(&self, episode: usize, episodes: usize) -> f64 {
        let decay = self.decay_episodes.unwrap_or(episodes / 2);
        if decay == 0 || episode >= decay {
            return self.sigma_end;
        }
        let t = episode as f64 / decay as f64;
        self.sigma_start * (1.0 - t) + self.sigma_end * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub v_start: f64,
    pub v_end: f64,
}

impl Default for Curriculum {
    fn default() -> Self {
        Self {
            v_start: 1.2,
            v_end: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub clip: f64,
    /// Gradient updates per agent after each episode; `None` means one update
    /// per agent after every environment step.
    pub updates_per_episode: Option<usize>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub curriculum: Curriculum,
    pub strategy: Strategy,
    pub noise: NoiseSpec,
    /// Extra checkpoint every this many episodes.
    pub checkpoint_every: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            batch_size: 512,
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.001,
            clip: 0.5,
            updates_per_episode: None,
            actor_hidden: vec![128, 128],
            critic_hidden: vec![128, 128, 128],
            buffer_capacity: 500_000,
            curriculum: Curriculum::default(),
            strategy: Strategy::MutualReward,
            noise: NoiseSpec::default(),
            checkpoint_every: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Single-CPU budget: 20,000 episodes with small nets, larger steps and a
    /// faster target. One run takes a few minutes on one core.
    pub fn desk() -> Self {
        Self {
            batch_size: 64,
            actor_lr: 1e-2,
            critic_lr: 1e-1,
            tau: 0.02,
            updates_per_episode: Some(5),
            actor_hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            buffer_capacity: 100_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma {} must lie in (0, 1)", self.gamma));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("tau", self.tau),
            ("clip", self.clip),
            ("curriculum.v_start", self.curriculum.v_start),
            ("curriculum.v_end", self.curriculum.v_end),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.tau > 1.0 {
            return fail(format!("tau {} must not exceed 1", self.tau));
        }
        if self.buffer_capacity < self.batch_size {
            return fail("buffer_capacity must hold at least one batch".into());
        }
        if self.updates_per_episode == Some(0) {
            return fail("updates_per_episode must be positive when set".into());
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return fail("hidden layers must be non-empty".into());
        }
        let n = &self.noise;
        if !(n.sigma_start >= n.sigma_end && n.sigma_end >= 0.0) {
            return fail("noise requires sigma_start >= sigma_end >= 0".into());
        }
        if self.strategy.lambda() < 0.0 || !self.strategy.lambda().is_finite() {
            return fail("lambda must be non-negative".into());
        }
        Ok(())
    }

    fn sgd_actor(&self) -> Sgd {
        Sgd {
            learning_rate: self.actor_lr,
            clip_norm: self.clip,
        }
    }

    fn sgd_critic(&self) -> Sgd {
        Sgd {
            learning_rate: self.critic_lr,
            clip_norm: self.clip,
        }
    }
}

/// Pursuer speed at `episode`: linear from `v_start` (first episode) to
/// `v_end` (last episode).
pub fn curriculum_velocity(episode: usize, config: &TrainConfig) -> f64 {
    let c = config.curriculum;
    if config.episodes <= 1 {
        return c.v_start;
    }
    let t = (episode.min(config.episodes - 1)) as f64 / (config.episodes - 1) as f64;
    c.v_start * (1.0 - t) + c.v_end * t
}

/// First episode whose curriculum velocity is at or below `velocity`.
pub fn crossing_episode(velocity: f64, config: &TrainConfig) -> Option<usize> {
    const SLACK: f64 = 1e-9;
    let c = config.curriculum;
    if config.episodes == 0 {
        return None;
    }
    if c.v_start <= velocity + SLACK {
        return Some(0);
    }
    if config.episodes == 1 || c.v_end > velocity + SLACK {
        return None;
    }
    // solve v_start(1−t) + v_end t ≤ v, then walk to the exact boundary
    let span = (config.episodes - 1) as f64;
    let guess = ((c.v_start - velocity) / (c.v_start - c.v_end) * span).floor() as usize;
    let mut e = guess.saturating_sub(2).min(config.episodes - 1);
    while curriculum_velocity(e, config) > velocity + SLACK {
        e += 1;
    }
    while e > 0 && curriculum_velocity(e - 1, config) <= velocity + SLACK {
        e -= 1;
    }
    Some(e)
}

/// Actor and critic of one learner, each with a Polyak target.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: TargetPair,
    pub critic: TargetPair,
}

impl AgentNets {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        obs_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        tau: f64,
    ) -> Result<Self> {
        let sizes = |input: usize, hidden: &[usize]| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(1);
            s
        };
        let actor = Mlp::init(rng, &sizes(obs_dim, actor_hidden), Head::Actor)?;
        let critic = Mlp::init(rng, &sizes(obs_dim + 2, critic_hidden), Head::Critic)?;
        Ok(Self {
            actor: TargetPair::new(actor, tau)?,
            critic: TargetPair::new(critic, tau)?,
        })
    }

    fn polyak_update(&mut self) {
        self.actor.polyak_update();
        self.critic.polyak_update();
    }
}

/// One joint transition; observation rows are per agent, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<f64>,
    /// True only when the episode ended by capture; horizon truncation keeps
    /// the bootstrap term.
    pub terminal: bool,
}

/// Ring buffer of joint transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    n_agents: usize,
    obs_dim: usize,
    observations: Vec<f64>,
    next_observations: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    cursor: usize,
    len: usize,
}

/// A sampled batch, split per agent.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `obs[i]` is `M × obs_dim` for agent `i`.
    pub obs: Vec<Array2<f64>>,
    pub next_obs: Vec<Array2<f64>>,
    /// `M × n`
    pub actions: Array2<f64>,
    /// `M × n`
    pub rewards: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub terminal: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_agents: usize, obs_dim: usize) -> Self {
        Self {
            capacity,
            n_agents,
            obs_dim,
            observations: Vec::new(),
            next_observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
            cursor: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        let row = self.n_agents * self.obs_dim;
        if t.observations.len() != row
            || t.next_observations.len() != row
            || t.actions.len() != self.n_agents
            || t.rewards.len() != self.n_agents
        {
            return Err(Error::Contract(
                "transition does not match buffer layout".into(),
            ));
        }
        if self.len < self.capacity {
            self.observations.extend_from_slice(&t.observations);
            self.next_observations
                .extend_from_slice(&t.next_observations);
            self.actions.extend_from_slice(&t.actions);
            self.rewards.extend_from_slice(&t.rewards);
            self.terminal.push(t.terminal);
            self.len += 1;
        } else {
            let c = self.cursor;
            self.observations[c * row..(c + 1) * row].copy_from_slice(&t.observations);
            self.next_observations[c * row..(c + 1) * row].copy_from_slice(&t.next_observations);
            let n = self.n_agents;
            self.actions[c * n..(c + 1) * n].copy_from_slice(&t.actions);
            self.rewards[c * n..(c + 1) * n].copy_from_slice(&t.rewards);
            self.terminal[c] = t.terminal;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Transition stored at slot `index` (insertion order until the ring wraps).
    pub fn get(&self, index: usize) -> Option<Transition> {
        if index >= self.len {
            return None;
        }
        let row = self.n_agents * self.obs_dim;
        let n = self.n_agents;
        Some(Transition {
            observations: self.observations[index * row..(index + 1) * row].to_vec(),
            actions: self.actions[index * n..(index + 1) * n].to_vec(),
            rewards: self.rewards[index * n..(index + 1) * n].to_vec(),
            next_observations: self.next_observations[index * row..(index + 1) * row].to_vec(),
            terminal: self.terminal[index],
        })
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Vec<usize> {
        (0..batch_size)
            .map(|_| rng.random_range(0..self.len))
            .collect()
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let m = indices.len();
        let (n, d) = (self.n_agents, self.obs_dim);
        let mut obs = vec![Array2::zeros((m, d)); n];
        let mut next_obs = vec![Array2::zeros((m, d)); n];
        let mut actions = Array2::zeros((m, n));
        let mut rewards = Array2::zeros((m, n));
        let mut terminal = Array1::zeros(m);
        for (b, &idx) in indices.iter().enumerate() {
            for i in 0..n {
                let start = (idx * n + i) * d;
                obs[i]
                    .row_mut(b)
                    .assign(&ArrayView1::from(&self.observations[start..start + d]));
                next_obs[i]
                    .row_mut(b)
                    .assign(&ArrayView1::from(&self.next_observations[start..start + d]));
                actions[[b, i]] = self.actions[idx * n + i];
                rewards[[b, i]] = self.rewards[idx * n + i];
            }
            terminal[b] = if self.terminal[idx] { 1.0 } else { 0.0 };
        }
        Batch {
            obs,
            next_obs,
            actions,
            rewards,
            terminal,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::Contract("cannot sample from an empty buffer".into()));
        }
        Ok(self.gather(&self.sample_indices(rng, batch_size)))
    }
}

/// Steps one episode with noisy actors, storing transitions as it goes.
pub struct EpisodeCollector {
    episode: Episode,
    observations: Vec<f64>,
    sigma: f64,
}

impl EpisodeCollector {
    pub fn start<R: Rng + ?Sized>(rng: &mut R, config: EnvConfig, sigma: f64) -> Result<Self> {
        let episode = Episode::start(rng, config)?;
        let observations = env::observe_all(episode.state());
        Ok(Self {
            episode,
            observations,
            sigma,
        })
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    /// Act, step and store one transition. Returns the outcome once the
    /// episode has ended.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        actors: &[&Mlp],
        rng: &mut R,
        buffer: &mut ReplayBuffer,
    ) -> Result<Option<OutcomeRecord>> {
        let n = actors.len();
        let dim = self.observations.len() / n;
        let noise = if self.sigma > 0.0 {
            Some(Normal::new(0.0, self.sigma).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        let mut headings = Vec::with_capacity(n);
        for (i, actor) in actors.iter().enumerate() {
            let mut a = actor.actor_heading(&self.observations[i * dim..(i + 1) * dim])?;
            if let Some(noise) = &noise {
                a += noise.sample(rng);
            }
            headings.push(wrap_angle(a));
        }
        let action = JointAction { headings };
        let result = self.episode.step(&action)?;
        let next = env::observe_all(&result.state);
        buffer.push(&Transition {
            observations: std::mem::take(&mut self.observations),
            actions: action.headings,
            rewards: result.rewards.components,
            next_observations: next.clone(),
            terminal: !result.capturers.is_empty(),
        })?;
        self.observations = next;
        Ok(self.episode.outcome().cloned())
    }
}

/// Roll one full episode with exploration noise, appending every transition
/// to `buffer`.
pub fn collect_episode<R: Rng + ?Sized>(
    config: &EnvConfig,
    actors: &[&Mlp],
    sigma: f64,
    rng: &mut R,
    buffer: &mut ReplayBuffer,
) -> Result<OutcomeRecord> {
    if actors.len() != config.n_pursuers {
        return Err(Error::Contract(format!(
            "{} actors for {} pursuers",
            actors.len(),
            config.n_pursuers
        )));
    }
    let mut collector = EpisodeCollector::start(rng, config.clone(), sigma)?;
    loop {
        if let Some(outcome) = collector.step(actors, rng, buffer)? {
            return Ok(outcome);
        }
    }
}

/// Borrowed slices of a batch consumed by a single critic/actor step.
#[derive(Debug, Clone, Copy)]
pub struct LearnerBatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: ArrayView1<'a, f64>,
    pub rewards: ArrayView1<'a, f64>,
    pub next_obs: ArrayView2<'a, f64>,
    pub terminal: ArrayView1<'a, f64>,
}

impl Batch {
    pub fn for_agent(&self, agent: usize) -> LearnerBatch<'_> {
        LearnerBatch {
            obs: self.obs[agent].view(),
            actions: self.actions.column(agent),
            rewards: self.rewards.column(agent),
            next_obs: self.next_obs[agent].view(),
            terminal: self.terminal.view(),
        }
    }

    /// Every agent's slots stacked into one `(n·M)`-row batch.
    pub fn pooled(&self) -> PooledBatch {
        let views: Vec<_> = self.obs.iter().map(|o| o.view()).collect();
        let next: Vec<_> = self.next_obs.iter().map(|o| o.view()).collect();
        let n = self.n_agents();
        let col_concat =
            |m: &Array2<f64>| Array1::from_iter((0..n).flat_map(|i| m.column(i).to_vec()));
        PooledBatch {
            obs: ndarray::concatenate(ndarray::Axis(0), &views).expect("same width"),
            actions: col_concat(&self.actions),
            rewards: col_concat(&self.rewards),
            next_obs: ndarray::concatenate(ndarray::Axis(0), &next).expect("same width"),
            terminal: Array1::from_iter((0..n).flat_map(|_| self.terminal.iter().copied())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PooledBatch {
    pub obs: Array2<f64>,
    pub actions: Array1<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub terminal: Array1<f64>,
}

impl PooledBatch {
    pub fn view(&self) -> LearnerBatch<'_> {
        LearnerBatch {
            obs: self.obs.view(),
            actions: self.actions.view(),
            rewards: self.rewards.view(),
            next_obs: self.next_obs.view(),
            terminal: self.terminal.view(),
        }
    }
}

/// TD targets `r + γ (1 − terminal) Q'(s', μ'(s'))` from the target networks.
pub fn td_targets(nets: &AgentNets, batch: &LearnerBatch<'_>, gamma: f64) -> Result<Array1<f64>> {
    let (next_actions, _) = nets.actor.target.actor_batch(batch.next_obs)?;
    let (next_q, _) = nets
        .critic
        .target
        .critic_batch(batch.next_obs, next_actions.view())?;
    let mut y = Array1::zeros(batch.rewards.len());
    Zip::from(&mut y)
        .and(&batch.rewards)
        .and(&batch.terminal)
        .and(&next_q)
        .for_each(|y, &r, &done, &q| *y = r + gamma * (1.0 - done) * q);
    Ok(y)
}

/// Mean squared TD error and its gradient with respect to the online critic.
pub fn critic_loss_and_gradient(
    nets: &AgentNets,
    batch: &LearnerBatch<'_>,
    gamma: f64,
) -> Result<(f64, Gradients)> {
    let targets = td_targets(nets, batch, gamma)?;
    let critic = &nets.critic.online;
    let (q, tape) = critic.critic_batch(batch.obs, batch.actions)?;
    let m = q.len() as f64;
    let residual = &q - &targets;
    let loss = residual.iter().map(|e| e * e).sum::<f64>() / m;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss"));
    }
    let upstream = residual.mapv(|e| 2.0 * e / m);
    let (grads, _) = critic.backward(&tape, upstream.view())?;
    Ok((loss, grads))
}

/// One clipped descent step on the TD loss. Returns the pre-update loss.
pub fn critic_step(
    nets: &mut AgentNets,
    batch: &LearnerBatch<'_>,
    config: &TrainConfig,
) -> Result<f64> {
    let (loss, grads) = critic_loss_and_gradient(nets, batch, config.gamma)?;
    config
        .sgd_critic()
        .apply(&mut nets.critic.online, grads, Direction::Descent)?;
    Ok(loss)
}

/// Actor objective `mean_s Q(o, μ(o)) − λ·penalty` and its gradient with
/// respect to `actors[agent]`. `actors` lists every pursuer's online actor
/// (teammates only matter when `lambda > 0`).
pub fn actor_objective_and_gradient(
    agent: usize,
    actors: &[&Mlp],
    critic: &Mlp,
    obs: ArrayView2<f64>,
    lambda: f64,
) -> Result<(f64, Gradients)> {
    let actor = actors
        .get(agent)
        .ok_or_else(|| Error::Contract(format!("agent {agent} out of range")))?;
    let (headings, actor_tape) = actor.actor_batch(obs)?;
    let (q, critic_tape) = critic.critic_batch(obs, headings.view())?;
    let m = q.len() as f64;
    let ones = Array1::from_elem(q.len(), 1.0 / m);
    let (_, dq_da) = critic.critic_backward(&critic_tape, headings.view(), ones.view())?;
    let mut objective = q.sum() / m;
    let mut upstream = dq_da;
    if lambda > 0.0 {
        let sens = fairness::fair_er_sensitivity(agent, actors, obs, &headings)?;
        upstream.scaled_add(-lambda / m, &sens);
        objective -= lambda * fairness::fair_er_agent_penalty(agent, actors, obs)?;
    }
    let (grads, _) = actor.backward(&actor_tape, upstream.view())?;
    if !grads.is_finite() || !objective.is_finite() {
        return Err(Error::NonFinite("actor gradient"));
    }
    Ok((objective, grads))
}

/// Critic then actor update for agent `agent` of an independent team.
pub fn critic_update(
    agent: usize,
    batch: &Batch,
    team: &mut [AgentNets],
    config: &TrainConfig,
) -> Result<f64> {
    critic_step(&mut team[agent], &batch.for_agent(agent), config)
}

/// Deterministic-policy-gradient ascent step for `agent`, including the
/// Fair-ER term when the strategy carries one.
pub fn actor_update(
    agent: usize,
    batch: &Batch,
    team: &mut [AgentNets],
    config: &TrainConfig,
) -> Result<f64> {
    let lambda = config.strategy.lambda();
    let (objective, grads) = {
        let actors: Vec<&Mlp> = team.iter().map(|n| &n.actor.online).collect();
        actor_objective_and_gradient(
            agent,
            &actors,
            &team[agent].critic.online,
            batch.obs[agent].view(),
            lambda,
        )?
    };
    config
        .sgd_actor()
        .apply(&mut team[agent].actor.online, grads, Direction::Ascent)?;
    Ok(objective)
}

/// The learners of one run: independent per-agent nets or one tied set.
#[derive(Debug, Clone, PartialEq)]
pub enum Learners {
    Independent(Vec<AgentNets>),
    Tied(SharedPolicyHandle),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

impl Learners {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        env: &EnvConfig,
        config: &TrainConfig,
    ) -> Result<Self> {
        let obs_dim = env.observation_dim();
        let mut make = || {
            AgentNets::new(
                rng,
                obs_dim,
                &config.actor_hidden,
                &config.critic_hidden,
                config.tau,
            )
        };
        if config.strategy.is_tied() {
            Ok(Learners::Tied(tie_parameters(env.n_pursuers, make()?)))
        } else {
            Ok(Learners::Independent(
                (0..env.n_pursuers).map(|_| make()).collect::<Result<_>>()?,
            ))
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            Learners::Independent(team) => team.len(),
            Learners::Tied(handle) => handle.n_agents(),
        }
    }

    pub fn actor(&self, agent: usize) -> &Mlp {
        match self {
            Learners::Independent(team) => &team[agent].actor.online,
            Learners::Tied(handle) => &handle.resolve(agent).actor.online,
        }
    }

    pub fn actors(&self) -> Vec<&Mlp> {
        (0..self.n_agents()).map(|i| self.actor(i)).collect()
    }

    pub fn nets(&self, agent: usize) -> &AgentNets {
        match self {
            Learners::Independent(team) => &team[agent],
            Learners::Tied(handle) => handle.resolve(agent),
        }
    }

    /// Frozen online actors, one per slot.
    pub fn snapshot(&self) -> ActorTeam {
        ActorTeam::new(self.actors().into_iter().cloned().collect())
    }

    /// One critic and one actor step per agent on a shared batch, followed by
    /// target tracking.
    pub fn update(&mut self, batch: &Batch, config: &TrainConfig) -> Result<UpdateStats> {
        let mut stats = UpdateStats::default();
        match self {
            Learners::Independent(team) => {
                for agent in 0..team.len() {
                    stats.critic_loss += critic_update(agent, batch, team, config)?;
                    stats.actor_objective += actor_update(agent, batch, team, config)?;
                    team[agent].polyak_update();
                }
                let n = team.len() as f64;
                stats.critic_loss /= n;
                stats.actor_objective /= n;
            }
            Learners::Tied(handle) => {
                // averaging over the stacked rows equals averaging the per-agent
                // gradients, since every agent contributes the same row count
                let pooled = batch.pooled();
                let nets = handle.nets_mut();
                stats.critic_loss = critic_step(nets, &pooled.view(), config)?;
                let (objective, grads) = actor_objective_and_gradient(
                    0,
                    &[&nets.actor.online],
                    &nets.critic.online,
                    pooled.obs.view(),
                    0.0,
                )?;
                config
                    .sgd_actor()
                    .apply(&mut nets.actor.online, grads, Direction::Ascent)?;
                stats.actor_objective = objective;
                nets.polyak_update();
            }
        }
        Ok(stats)
    }

    fn checkpoint(&self, tag: CheckpointTag, episodes_done: usize, velocity: f64) -> Checkpoint {
        Checkpoint {
            tag,
            episodes_done,
            velocity,
            tied: matches!(self, Learners::Tied(_)),
            agents: (0..self.n_agents())
                .map(|i| {
                    let nets = self.nets(i);
                    AgentCheckpoint {
                        actor: nets.actor.online.to_checkpoint(),
                        critic: nets.critic.online.to_checkpoint(),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointTag {
    Initial,
    Periodic,
    /// Saved at the first episode whose curriculum speed reached `velocity`.
    Crossing {
        velocity: f64,
    },
    /// Saved after the last episode.
    Final,
}

/// Per-agent checkpoint file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub actor: NetCheckpoint,
    pub critic: NetCheckpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tag: CheckpointTag,
    /// Training episodes completed when the snapshot was taken.
    pub episodes_done: usize,
    /// Curriculum speed of the last completed episode.
    pub velocity: f64,
    pub tied: bool,
    pub agents: Vec<AgentCheckpoint>,
}

impl Checkpoint {
    pub fn team(&self) -> Result<ActorTeam> {
        Ok(ActorTeam::new(
            self.agents
                .iter()
                .map(|a| Mlp::from_checkpoint(&a.actor))
                .collect::<Result<_>>()?,
        ))
    }

    /// Directory name used when saving.
    pub fn dir_name(&self) -> String {
        match self.tag {
            CheckpointTag::Initial => "initial".into(),
            CheckpointTag::Periodic => format!("episode_{:06}", self.episodes_done),
            CheckpointTag::Crossing { velocity } => format!("v_{velocity:.2}"),
            CheckpointTag::Final => "final".into(),
        }
    }

    /// Write `agent_<i>.json` per agent plus `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, agent) in self.agents.iter().enumerate() {
            io::write_json_atomic(&dir.join(format!("agent_{}.json", i + 1)), agent)?;
        }
        let meta = CheckpointMeta {
            tag: self.tag,
            episodes_done: self.episodes_done,
            velocity: self.velocity,
            tied: self.tied,
            n_agents: self.agents.len(),
        };
        io::write_json_atomic(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: CheckpointMeta = io::read_json(&dir.join("meta.json"))?;
        let agents = (0..meta.n_agents)
            .map(|i| io::read_json(&dir.join(format!("agent_{}.json", i + 1))))
            .collect::<Result<Vec<AgentCheckpoint>>>()?;
        Ok(Self {
            tag: meta.tag,
            episodes_done: meta.episodes_done,
            velocity: meta.velocity,
            tied: meta.tied,
            agents,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    tag: CheckpointTag,
    episodes_done: usize,
    velocity: f64,
    tied: bool,
    n_agents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRow {
    pub episode: usize,
    pub velocity: f64,
    pub sigma: f64,
    pub captured: bool,
    pub capturer_mask: String,
    pub steps: usize,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<EpisodeLogRow>,
    pub n_agents: usize,
}

impl RunArtifacts {
    /// `episode,velocity,sigma,captured,capturer_mask,steps,return_agent_1..n`
    pub fn log_csv(&self) -> String {
        let mut out = String::from("episode,velocity,sigma,captured,capturer_mask,steps");
        for i in 1..=self.n_agents {
            let _ = write!(out, ",return_agent_{i}");
        }
        out.push('\n');
        for row in &self.log {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                row.episode,
                row.velocity,
                row.sigma,
                u8::from(row.captured),
                row.capturer_mask,
                row.steps
            );
            for r in &row.returns {
                let _ = write!(out, ",{r}");
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`Self::log_csv`], hex encoded.
    pub fn log_checksum(&self) -> String {
        hex::encode(Sha256::digest(self.log_csv().as_bytes()))
    }

    pub fn crossing(&self, velocity: f64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| match c.tag {
            CheckpointTag::Crossing { velocity: v } => (v - velocity).abs() < 1e-9,
            _ => false,
        })
    }

    /// Save the episode log and every checkpoint under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_atomic(&dir.join("episodes.csv"), self.log_csv().as_bytes())?;
        for ckpt in &self.checkpoints {
            ckpt.save(&dir.join("checkpoints").join(ckpt.dir_name()))?;
        }
        Ok(())
    }
}

/// Full training run: curriculum, exploration, updates and checkpoints.
///
/// A checkpoint is always taken before the first episode; `test_velocities`
/// add one checkpoint at each velocity's curriculum crossing.
pub fn train(
    config: &TrainConfig,
    env_config: &EnvConfig,
    test_velocities: &[f64],
) -> Result<RunArtifacts> {
    train_with_progress(config, env_config, test_velocities, |_| {})
}

pub fn train_with_progress(
    config: &TrainConfig,
    env_config: &EnvConfig,
    test_velocities: &[f64],
    mut progress: impl FnMut(&EpisodeLogRow),
) -> Result<RunArtifacts> {
    config.validate()?;
    env_config.validate()?;
    let n = env_config.n_pursuers;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut learners = Learners::new(&mut rng, env_config, config)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, n, env_config.observation_dim());

    let mut crossings: Vec<(usize, f64)> = test_velocities
        .iter()
        .filter_map(|&v| crossing_episode(v, config).map(|e| (e, v)))
        .collect();
    crossings.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));

    let mut checkpoints =
        vec![learners.checkpoint(CheckpointTag::Initial, 0, config.curriculum.v_start)];
    let mut log = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let velocity = curriculum_velocity(episode, config);
        let sigma = config.noise.sigma(episode, config.episodes);
        let env = EnvConfig {
            pursuer_speed: velocity,
            reward_mode: config.strategy.reward_mode(),
            ..env_config.clone()
        };
        let mut collector = EpisodeCollector::start(&mut rng, env, sigma)?;
        let outcome = loop {
            let actors = learners.actors();
            let done = collector.step(&actors, &mut rng, &mut buffer)?;
            if config.updates_per_episode.is_none() && buffer.len() >= config.batch_size {
                let batch = buffer.sample(&mut rng, config.batch_size)?;
                learners.update(&batch, config)?;
            }
            if let Some(outcome) = done {
                break outcome;
            }
        };
        if let Some(k) = config.updates_per_episode {
            if buffer.len() >= config.batch_size {
                for _ in 0..k {
                    let batch = buffer.sample(&mut rng, config.batch_size)?;
                    learners.update(&batch, config)?;
                }
            }
        }

        let row = EpisodeLogRow {
            episode,
            velocity,
            sigma,
            captured: outcome.captured(),
            capturer_mask: outcome.capturer_mask(n),
            steps: outcome.steps,
            returns: outcome.returns.clone(),
        };
        progress(&row);
        log.push(row);

        for &(_, v) in crossings.iter().filter(|(e, _)| *e == episode) {
            checkpoints.push(learners.checkpoint(
                CheckpointTag::Crossing { velocity: v },
                episode + 1,
                velocity,
            ));
        }
        if let Some(every) = config.checkpoint_every {
            if every > 0 && (episode + 1) % every == 0 {
                checkpoints.push(learners.checkpoint(
                    CheckpointTag::Periodic,
                    episode + 1,
                    velocity,
                ));
            }
        }
    }
    if config.episodes > 0 {
        let velocity = curriculum_velocity(config.episodes - 1, config);
        checkpoints.push(learners.checkpoint(CheckpointTag::Final, config.episodes, velocity));
    }

    Ok(RunArtifacts {
        checkpoints,
        log,
        n_agents: n,
    })
}
