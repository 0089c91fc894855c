//! Deterministic 2-D pursuit-evasion simulator.
//!
//! `n` pursuers chase a single evader inside the square arena
//! `[-arena_half_width, arena_half_width]²`. Every agent moves at its maximum
//! speed along the heading it selects; the evader is part of the environment
//! and flees along the maximizer of a potential field built from inverse
//! distances to the pursuers.
//!
//! Everything that depends on pursuer *labels* is computed in a label-free
//! canonical order (observations, evader field, capture test), so permuting the
//! pursuer slots of a state permutes everything downstream bit-for-bit.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::OutcomeRecord;

/// Reward contribution of a capturing pursuer.
pub const CAPTURE_REWARD: f64 = 50.0;
/// Reward contribution of every non-capturing pursuer on every step.
pub const STEP_PENALTY: f64 = -0.1;
/// Numeric features per encoded pose: x, y, cos heading, sin heading.
pub const POSE_FEATURES: usize = 4;

const MIN_DISTANCE: f64 = 1e-6;
const DEGENERATE_RESULTANT: f64 = 1e-12;
const MAX_RESET_DRAWS: usize = 1000;

/// Reduce an angle into `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let mut wrapped = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to exactly TAU.
    if wrapped >= PI {
        wrapped -= TAU;
    }
    if wrapped < -PI {
        wrapped = -PI;
    }
    wrapped
}

/// Signed smallest difference `a - b` on the circle, in `[-π, π)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Direction of travel from `self` towards `other`.
    pub fn bearing_to(&self, other: &Pose2D) -> f64 {
        wrap_angle((other.y - self.y).atan2(other.x - self.x))
    }

    /// Move `distance` along `heading`, clip to the arena and adopt the heading.
    fn advance(&mut self, heading: f64, distance: f64, half_width: f64) {
        let heading = wrap_angle(heading);
        self.x = (self.x + distance * heading.cos()).clamp(-half_width, half_width);
        self.y = (self.y + distance * heading.sin()).clamp(-half_width, half_width);
        self.heading = heading;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Every pursuer receives the sum of the team's contributions.
    Mutual,
    /// Every pursuer receives only its own contribution.
    Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_pursuers: usize,
    pub pursuer_speed: f64,
    pub evader_speed: f64,
    pub dt: f64,
    pub arena_half_width: f64,
    pub capture_radius: f64,
    pub horizon: usize,
    pub reward_mode: RewardMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_pursuers: 3,
            pursuer_speed: 1.2,
            evader_speed: 1.0,
            dt: 0.1,
            arena_half_width: 1.0,
            capture_radius: 0.1,
            horizon: 200,
            reward_mode: RewardMode::Mutual,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pursuer_speed", self.pursuer_speed),
            ("evader_speed", self.evader_speed),
            ("dt", self.dt),
            ("arena_half_width", self.arena_half_width),
            ("capture_radius", self.capture_radius),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.n_pursuers < 2 {
            return Err(Error::Config(format!(
                "need at least 2 pursuers, got {}",
                self.n_pursuers
            )));
        }
        Ok(())
    }

    pub fn with_pursuer_speed(&self, speed: f64) -> Self {
        Self {
            pursuer_speed: speed,
            ..self.clone()
        }
    }

    pub fn with_reward_mode(&self, reward_mode: RewardMode) -> Self {
        Self {
            reward_mode,
            ..self.clone()
        }
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.n_pursuers)
    }
}

/// Flattened observation length for `n` pursuers.
pub fn observation_dim(n_pursuers: usize) -> usize {
    POSE_FEATURES * (n_pursuers + 1)
}

/// Positions and headings of every agent at one time step.
///
/// Serializes as `{"pursuers": [...], "evader": {...}, "step_index": k}` in
/// that field order; each pose is `{"x", "y", "heading"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub pursuers: Vec<Pose2D>,
    pub evader: Pose2D,
    pub step_index: usize,
}

impl WorldState {
    pub fn n_pursuers(&self) -> usize {
        self.pursuers.len()
    }

    /// Largest componentwise difference to `other` (headings compared on the circle).
    pub fn max_deviation(&self, other: &WorldState) -> f64 {
        if self.pursuers.len() != other.pursuers.len() {
            return f64::INFINITY;
        }
        self.pursuers
            .iter()
            .zip(&other.pursuers)
            .chain(std::iter::once((&self.evader, &other.evader)))
            .map(|(a, b)| {
                (a.x - b.x)
                    .abs()
                    .max((a.y - b.y).abs())
                    .max(angle_diff(a.heading, b.heading).abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAction {
    pub headings: Vec<f64>,
}

impl JointAction {
    pub fn new(headings: impl IntoIterator<Item = f64>) -> Self {
        Self {
            headings: headings.into_iter().map(wrap_angle).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub components: Vec<f64>,
}

/// A bijection on pursuer slots. `σ·x` sends the item in slot `i` to slot `σ(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &target in &mapping {
            if target >= mapping.len() || std::mem::replace(&mut seen[target], true) {
                return Err(Error::Contract(format!("{mapping:?} is not a bijection")));
            }
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        if a >= n || b >= n {
            return Err(Error::Contract(format!(
                "transposition ({a} {b}) out of range for n={n}"
            )));
        }
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.swap(a, b);
        Ok(Self { mapping })
    }

    /// Every permutation of `n` slots, identity first.
    pub fn all(n: usize) -> Vec<Self> {
        use itertools::Itertools;
        (0..n)
            .permutations(n)
            .map(|mapping| Self { mapping })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Slot that the item currently in slot `i` moves to.
    pub fn image(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn inverse(&self) -> Self {
        let mut mapping = vec![0; self.mapping.len()];
        for (i, &j) in self.mapping.iter().enumerate() {
            mapping[j] = i;
        }
        Self { mapping }
    }

    pub fn apply<T: Clone>(&self, items: &[T]) -> Result<Vec<T>> {
        if items.len() != self.mapping.len() {
            return Err(Error::Contract(format!(
                "permutation of arity {} applied to {} items",
                self.mapping.len(),
                items.len()
            )));
        }
        let mut out = items.to_vec();
        for (i, item) in items.iter().enumerate() {
            out[self.mapping[i]] = item.clone();
        }
        Ok(out)
    }
}

/// Objects whose pursuer slots can be relabeled.
pub trait Permute: Sized {
    fn permute(&self, sigma: &Permutation) -> Result<Self>;
}

impl Permute for WorldState {
    fn permute(&self, sigma: &Permutation) -> Result<Self> {
        Ok(Self {
            pursuers: sigma.apply(&self.pursuers)?,
            evader: self.evader,
            step_index: self.step_index,
        })
    }
}

impl Permute for JointAction {
    fn permute(&self, sigma: &Permutation) -> Result<Self> {
        Ok(Self {
            headings: sigma.apply(&self.headings)?,
        })
    }
}

impl Permute for RewardVector {
    fn permute(&self, sigma: &Permutation) -> Result<Self> {
        Ok(Self {
            components: sigma.apply(&self.components)?,
        })
    }
}

/// Distances and pursuer-to-evader bearings feeding the evader's potential field.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaderInputs {
    pub distances: Vec<f64>,
    pub bearings: Vec<f64>,
}

impl EvaderInputs {
    pub fn from_state(state: &WorldState) -> Self {
        let (distances, bearings) = state
            .pursuers
            .iter()
            .map(|p| {
                (
                    p.distance_to(&state.evader).max(MIN_DISTANCE),
                    p.bearing_to(&state.evader),
                )
            })
            .unzip();
        Self {
            distances,
            bearings,
        }
    }

    /// (weight, bearing) pairs sorted into a label-free order.
    fn canonical_terms(&self) -> Vec<(f64, f64)> {
        let mut terms: Vec<(f64, f64)> = self
            .distances
            .iter()
            .zip(&self.bearings)
            .map(|(&r, &b)| (r, b))
            .collect();
        terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        terms.into_iter().map(|(r, b)| (1.0 / r, b)).collect()
    }

    pub fn utility(&self, heading: f64) -> f64 {
        self.canonical_terms()
            .into_iter()
            .map(|(w, b)| w * (heading - b).cos())
            .sum()
    }
}

/// Evader potential `U(θ) = Σ_i cos(θ − θ̃_i) / r_i`.
pub fn evader_utility(state: &WorldState, heading: f64) -> f64 {
    EvaderInputs::from_state(state).utility(heading)
}

/// Closed-form maximizer of the evader potential: the direction of the
/// inverse-distance-weighted resultant of the pursuer-to-evader bearings.
/// Falls back to the current evader heading when the resultant vanishes.
pub fn evader_heading(state: &WorldState) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (w, b) in EvaderInputs::from_state(state).canonical_terms() {
        sx += w * b.cos();
        sy += w * b.sin();
    }
    if sx.hypot(sy) < DEGENERATE_RESULTANT {
        state.evader.heading
    } else {
        wrap_angle(sy.atan2(sx))
    }
}

/// Attractive potential-field force `-k_att (q - goal)`.
pub fn attraction_force(q: (f64, f64), goal: (f64, f64), k_att: f64) -> (f64, f64) {
    (-k_att * (q.0 - goal.0), -k_att * (q.1 - goal.1))
}

/// Heading of the attractive force towards the evader; 0 when coincident.
pub fn greedy_heading(state: &WorldState, agent: usize) -> Result<f64> {
    let pursuer = state.pursuers.get(agent).ok_or_else(|| {
        Error::Contract(format!(
            "agent {agent} out of range for {} pursuers",
            state.n_pursuers()
        ))
    })?;
    let (fx, fy) = attraction_force(
        (pursuer.x, pursuer.y),
        (state.evader.x, state.evader.y),
        1.0,
    );
    if fx == 0.0 && fy == 0.0 {
        return Ok(0.0);
    }
    Ok(wrap_angle(fy.atan2(fx)))
}

/// Draw a start state uniformly over the arena, rejecting starts where a
/// pursuer already sits inside the capture radius.
pub fn reset<R: Rng + ?Sized>(rng: &mut R, config: &EnvConfig) -> Result<WorldState> {
    config.validate()?;
    let w = config.arena_half_width;
    let draw = |rng: &mut R| {
        Pose2D::new(
            rng.random_range(-w..=w),
            rng.random_range(-w..=w),
            rng.random_range(-PI..PI),
        )
    };
    for _ in 0..MAX_RESET_DRAWS {
        let pursuers: Vec<Pose2D> = (0..config.n_pursuers).map(|_| draw(rng)).collect();
        let evader = draw(rng);
        if pursuers
            .iter()
            .all(|p| p.distance_to(&evader) > config.capture_radius)
        {
            return Ok(WorldState {
                pursuers,
                evader,
                step_index: 0,
            });
        }
    }
    Err(Error::Config(format!(
        "no valid start state after {MAX_RESET_DRAWS} draws; capture radius too large for arena"
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: WorldState,
    pub rewards: RewardVector,
    pub done: bool,
    /// Pursuers within the capture radius after the move, ascending.
    pub capturers: Vec<usize>,
}

impl StepResult {
    pub fn captured(&self) -> bool {
        !self.capturers.is_empty()
    }
}

/// Advance the world by one step.
pub fn step(state: &WorldState, actions: &JointAction, config: &EnvConfig) -> Result<StepResult> {
    let n = state.n_pursuers();
    if actions.headings.len() != n {
        return Err(Error::Contract(format!(
            "joint action has {} headings for {n} pursuers",
            actions.headings.len()
        )));
    }
    if state.step_index >= config.horizon {
        return Err(Error::Contract(format!(
            "step {} is past the horizon {}",
            state.step_index, config.horizon
        )));
    }

    let w = config.arena_half_width;
    let evader_dir = evader_heading(state);
    let mut next = state.clone();
    for (pose, &heading) in next.pursuers.iter_mut().zip(&actions.headings) {
        pose.advance(heading, config.pursuer_speed * config.dt, w);
    }
    next.evader
        .advance(evader_dir, config.evader_speed * config.dt, w);
    next.step_index += 1;

    let capturers: Vec<usize> = next
        .pursuers
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance_to(&next.evader) <= config.capture_radius)
        .map(|(i, _)| i)
        .collect();

    let mut contributions = vec![STEP_PENALTY; n];
    for &i in &capturers {
        contributions[i] = CAPTURE_REWARD;
    }
    let components = match config.reward_mode {
        RewardMode::Individual => contributions,
        RewardMode::Mutual => {
            // counts, not slot order, so relabeling cannot change rounding
            let caught = capturers.len() as f64;
            let total = caught * CAPTURE_REWARD + (n as f64 - caught) * STEP_PENALTY;
            vec![total; n]
        }
    };
    let done = !capturers.is_empty() || next.step_index >= config.horizon;

    Ok(StepResult {
        state: next,
        rewards: RewardVector { components },
        done,
        capturers,
    })
}

/// Ego-centric view of the world for one pursuer.
///
/// Teammates are listed in a label-free canonical order: ascending distance to
/// the observer, then bearing from the observer, then their own heading.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub self_pose: Pose2D,
    pub teammates: Vec<Pose2D>,
    pub evader_pose: Pose2D,
}

impl AgentObservation {
    pub fn dim(&self) -> usize {
        POSE_FEATURES * (self.teammates.len() + 2)
    }

    /// Flatten as `[x, y, cos θ, sin θ]` for self (absolute position), then each
    /// teammate and the evader with positions relative to self.
    pub fn write_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let origin = self.self_pose;
        let encode = |out: &mut [f64], pose: &Pose2D, relative: bool| {
            let (dx, dy) = if relative {
                (pose.x - origin.x, pose.y - origin.y)
            } else {
                (pose.x, pose.y)
            };
            out[0] = dx;
            out[1] = dy;
            out[2] = pose.heading.cos();
            out[3] = pose.heading.sin();
        };
        let mut chunks = out.chunks_exact_mut(POSE_FEATURES);
        encode(chunks.next().unwrap(), &origin, false);
        for mate in &self.teammates {
            encode(chunks.next().unwrap(), mate, true);
        }
        encode(chunks.next().unwrap(), &self.evader_pose, true);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write_into(&mut out);
        out
    }
}

fn canonical_order(origin: &Pose2D, a: &Pose2D, b: &Pose2D) -> Ordering {
    origin
        .distance_to(a)
        .total_cmp(&origin.distance_to(b))
        .then_with(|| origin.bearing_to(a).total_cmp(&origin.bearing_to(b)))
        .then_with(|| a.heading.total_cmp(&b.heading))
}

pub fn observe(state: &WorldState, agent: usize) -> Result<AgentObservation> {
    let self_pose = *state.pursuers.get(agent).ok_or_else(|| {
        Error::Contract(format!(
            "agent {agent} out of range for {} pursuers",
            state.n_pursuers()
        ))
    })?;
    let mut teammates: Vec<Pose2D> = state
        .pursuers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != agent)
        .map(|(_, p)| *p)
        .collect();
    // stable sort: exact ties fall back to raw slot order
    teammates.sort_by(|a, b| canonical_order(&self_pose, a, b));
    Ok(AgentObservation {
        self_pose,
        teammates,
        evader_pose: state.evader,
    })
}

/// Flattened observations of every pursuer, row-major `n × obs_dim`.
pub fn observe_all(state: &WorldState) -> Vec<f64> {
    let n = state.n_pursuers();
    let dim = observation_dim(n);
    let mut out = vec![0.0; n * dim];
    for (agent, row) in out.chunks_exact_mut(dim).enumerate() {
        observe(state, agent)
            .expect("agent index in range")
            .write_into(row);
    }
    out
}

/// One episode in progress: tracks per-agent returns and produces the
/// [`OutcomeRecord`] once the episode ends.
#[derive(Debug, Clone)]
pub struct Episode {
    config: EnvConfig,
    state: WorldState,
    returns: Vec<f64>,
    outcome: Option<OutcomeRecord>,
}

impl Episode {
    pub fn new(config: EnvConfig, state: WorldState) -> Result<Self> {
        config.validate()?;
        if state.n_pursuers() != config.n_pursuers {
            return Err(Error::Contract(format!(
                "state has {} pursuers, config expects {}",
                state.n_pursuers(),
                config.n_pursuers
            )));
        }
        let returns = vec![0.0; config.n_pursuers];
        Ok(Self {
            config,
            state,
            returns,
            outcome: None,
        })
    }

    pub fn start<R: Rng + ?Sized>(rng: &mut R, config: EnvConfig) -> Result<Self> {
        let state = reset(rng, &config)?;
        Self::new(config, state)
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<&OutcomeRecord> {
        self.outcome.as_ref()
    }

    pub fn step(&mut self, actions: &JointAction) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Contract("episode already finished".into()));
        }
        let result = step(&self.state, actions, &self.config)?;
        for (ret, r) in self.returns.iter_mut().zip(&result.rewards.components) {
            *ret += r;
        }
        self.state = result.state.clone();
        if result.done {
            self.outcome = Some(OutcomeRecord::from_capturers(
                &result.capturers,
                self.state.step_index,
                self.returns.clone(),
            ));
        }
        Ok(result)
    }
}
