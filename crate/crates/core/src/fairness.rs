//! Team fairness: outcome bookkeeping, the mutual-information score, parameter
//! tying (Fair-E), the equivariance regularizer (Fair-ER) and equivariance
//! verifiers.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::env::{self, angle_diff, EnvConfig, Permutation, Permute, WorldState};
use crate::error::{Error, Result};
use crate::policy::JointPolicy;
use crate::tinynet::{Gradients, Mlp};
use crate::train::AgentNets;

/// One-hot identity of a pursuer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveId(Vec<u8>);

impl SensitiveId {
    pub fn one_hot(agent: usize, n: usize) -> Result<Self> {
        if agent >= n {
            return Err(Error::Contract(format!(
                "agent {agent} out of range for n={n}"
            )));
        }
        let mut v = vec![0; n];
        v[agent] = 1;
        Ok(Self(v))
    }

    pub fn index(&self) -> usize {
        self.0.iter().position(|&b| b == 1).expect("one-hot")
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCategory {
    CaptureBy(usize),
    /// Two or more pursuers inside the capture radius on the capture step.
    MultiCapture(Vec<usize>),
    NoCapture,
}

/// How an episode ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub category: OutcomeCategory,
    pub steps: usize,
    pub returns: Vec<f64>,
}

impl OutcomeRecord {
    pub fn from_capturers(capturers: &[usize], steps: usize, returns: Vec<f64>) -> Self {
        let category = match capturers {
            [] => OutcomeCategory::NoCapture,
            [one] => OutcomeCategory::CaptureBy(*one),
            many => OutcomeCategory::MultiCapture(many.to_vec()),
        };
        Self {
            category,
            steps,
            returns,
        }
    }

    pub fn captured(&self) -> bool {
        self.category != OutcomeCategory::NoCapture
    }

    pub fn capturers(&self) -> &[usize] {
        match &self.category {
            OutcomeCategory::CaptureBy(i) => std::slice::from_ref(i),
            OutcomeCategory::MultiCapture(set) => set,
            OutcomeCategory::NoCapture => &[],
        }
    }

    /// Capture indicator over agents, e.g. `[0, 0, 1]` when pursuer 3 captured.
    pub fn capture_signature(&self, n: usize) -> Vec<u8> {
        let mut sig = vec![0; n];
        for &i in self.capturers() {
            if i < n {
                sig[i] = 1;
            }
        }
        sig
    }

    /// Bitstring form of the capture signature, agent 1 first.
    pub fn capturer_mask(&self, n: usize) -> String {
        self.capture_signature(n)
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn permute(&self, sigma: &Permutation) -> Result<Self> {
        let map = |i: usize| {
            if i < sigma.len() {
                Ok(sigma.image(i))
            } else {
                Err(Error::Contract(format!("capturer {i} out of range")))
            }
        };
        let category = match &self.category {
            OutcomeCategory::CaptureBy(i) => OutcomeCategory::CaptureBy(map(*i)?),
            OutcomeCategory::MultiCapture(set) => {
                let mut set = set.iter().map(|&i| map(i)).collect::<Result<Vec<_>>>()?;
                set.sort_unstable();
                OutcomeCategory::MultiCapture(set)
            }
            OutcomeCategory::NoCapture => OutcomeCategory::NoCapture,
        };
        Ok(Self {
            category,
            steps: self.steps,
            returns: sigma.apply(&self.returns)?,
        })
    }
}

/// Capture mass per agent; multi-captures are split evenly among capturers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureTally {
    pub per_agent: Vec<f64>,
    pub no_capture: usize,
    pub episodes: usize,
}

impl CaptureTally {
    pub fn from_outcomes(outcomes: &[OutcomeRecord], n: usize) -> Result<Self> {
        let mut per_agent = vec![0.0; n];
        let mut no_capture = 0;
        for outcome in outcomes {
            let capturers = outcome.capturers();
            if capturers.is_empty() {
                no_capture += 1;
                continue;
            }
            let share = 1.0 / capturers.len() as f64;
            for &i in capturers {
                *per_agent.get_mut(i).ok_or_else(|| {
                    Error::Contract(format!("capturer {i} out of range for n={n}"))
                })? += share;
            }
        }
        Ok(Self {
            per_agent,
            no_capture,
            episodes: outcomes.len(),
        })
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        1.0 - self.no_capture as f64 / self.episodes as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessScore {
    pub bits: f64,
    pub sample_count: usize,
    pub success_rate: f64,
}

/// Shannon entropy in bits with `0·log 0 = 0`.
pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Team-fairness score of a set of episode outcomes.
///
/// The empirical distribution lives on `n + 1` categories (capture by each
/// pursuer, or no capture). The reference keeps the same success rate `p` but
/// spreads it as `p/n` per pursuer; the score is `H(reference) − H(empirical)`,
/// which equals the KL divergence between the two and lies in `[0, log₂ n]`.
pub fn team_fairness(outcomes: &[OutcomeRecord], n: usize) -> Result<FairnessScore> {
    if n < 1 {
        return Err(Error::Contract(
            "team fairness needs at least one agent".into(),
        ));
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let tally = CaptureTally::from_outcomes(outcomes, n)?;
    let total = outcomes.len() as f64;

    let mut empirical: Vec<f64> = tally.per_agent.iter().map(|c| c / total).collect();
    empirical.push(tally.no_capture as f64 / total);

    let success = tally.success_rate();
    let mut reference = vec![success / n as f64; n];
    reference.push(1.0 - success);

    let bits = (entropy_bits(&reference) - entropy_bits(&empirical)).max(0.0);
    Ok(FairnessScore {
        bits,
        sample_count: outcomes.len(),
        success_rate: success,
    })
}

/// Single actor/critic parameter set resolved by every pursuer (Fair-E).
#[derive(Debug, Clone, PartialEq)]
pub struct SharedPolicyHandle {
    nets: AgentNets,
    n_agents: usize,
}

/// Tie every pursuer to one actor and one critic.
pub fn tie_parameters(n: usize, nets: AgentNets) -> SharedPolicyHandle {
    SharedPolicyHandle { nets, n_agents: n }
}

impl SharedPolicyHandle {
    /// Parameters used by `agent`; the same storage for every agent.
    pub fn resolve(&self, agent: usize) -> &AgentNets {
        debug_assert!(agent < self.n_agents);
        &self.nets
    }

    pub fn nets(&self) -> &AgentNets {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut AgentNets {
        &mut self.nets
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }
}

impl JointPolicy for SharedPolicyHandle {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn heading(&self, state: &WorldState, agent: usize) -> Result<f64> {
        let obs = env::observe(state, agent)?.to_vec();
        self.resolve(agent).actor.online.actor_heading(&obs)
    }
}

/// Largest wrapped angular gap between `π(σ·s)` and `σ·π(s)` over all
/// sampled states and permutations.
pub fn check_equivariance(
    policy: &dyn JointPolicy,
    states: &[WorldState],
    permutations: &[Permutation],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for state in states {
        let base = policy.joint_action(state)?;
        for sigma in permutations {
            let permuted_first = policy.joint_action(&state.permute(sigma)?)?;
            let acted_first = base.permute(sigma)?;
            for (a, b) in permuted_first.headings.iter().zip(&acted_first.headings) {
                worst = worst.max(angle_diff(*a, *b).abs());
            }
        }
    }
    Ok(worst)
}

/// Deterministic rollout of `steps` transitions, ignoring termination.
pub fn rollout(
    policy: &dyn JointPolicy,
    start: &WorldState,
    steps: usize,
    config: &EnvConfig,
) -> Result<WorldState> {
    let config = EnvConfig {
        horizon: start.step_index + steps,
        ..config.clone()
    };
    let mut state = start.clone();
    for _ in 0..steps {
        let action = policy.joint_action(&state)?;
        state = env::step(&state, &action, &config)?.state;
    }
    Ok(state)
}

/// Roll from `start` and from `σ·start`; return the largest deviation between
/// `σ·(terminal of start)` and `terminal of σ·start`.
pub fn check_trajectory_equivariance(
    policy: &dyn JointPolicy,
    start: &WorldState,
    sigma: &Permutation,
    horizon: usize,
    config: &EnvConfig,
) -> Result<f64> {
    let terminal = rollout(policy, start, horizon, config)?;
    let permuted_terminal = rollout(policy, &start.permute(sigma)?, horizon, config)?;
    Ok(terminal.permute(sigma)?.max_deviation(&permuted_terminal))
}

fn check_actor_inputs(agent: usize, actors: &[&Mlp], obs: ArrayView2<f64>) -> Result<()> {
    if actors.len() < 2 {
        return Err(Error::Contract(
            "equivariance penalty needs at least two actors".into(),
        ));
    }
    if agent >= actors.len() {
        return Err(Error::Contract(format!("agent {agent} out of range")));
    }
    if obs.nrows() == 0 {
        return Err(Error::Contract("empty observation batch".into()));
    }
    Ok(())
}

/// Teammate headings `μ_j(o_i)` for every `j ≠ agent`, evaluated on the
/// agent's own observations. Swap this out to change which state teammates are
/// queried on.
fn teammate_actions(
    agent: usize,
    actors: &[&Mlp],
    obs: ArrayView2<f64>,
) -> Result<Vec<Array1<f64>>> {
    actors
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != agent)
        .map(|(_, actor)| actor.actor_batch(obs).map(|(a, _)| a))
        .collect()
}

/// Per-sample `1/(N−1) Σ_{j≠i} sin(a_i − a_j)`, with teammates held fixed.
/// `own` are the agent's headings on `obs`.
pub fn fair_er_sensitivity(
    agent: usize,
    actors: &[&Mlp],
    obs: ArrayView2<f64>,
    own: &Array1<f64>,
) -> Result<Array1<f64>> {
    check_actor_inputs(agent, actors, obs)?;
    let mates = teammate_actions(agent, actors, obs)?;
    let norm = 1.0 / mates.len() as f64;
    let mut out = Array1::zeros(own.len());
    for theirs in &mates {
        Zip::from(&mut out)
            .and(own)
            .and(theirs)
            .for_each(|o, &a, &b| *o += norm * (a - b).sin());
    }
    Ok(out)
}

/// Agent `i`'s equivariance penalty
/// `1/M Σ_s 1/(N−1) Σ_{j≠i} [1 − cos(μ_i(o_i) − μ_j(o_i))]`.
pub fn fair_er_agent_penalty(agent: usize, actors: &[&Mlp], obs: ArrayView2<f64>) -> Result<f64> {
    check_actor_inputs(agent, actors, obs)?;
    let (own, _) = actors[agent].actor_batch(obs)?;
    let mates = teammate_actions(agent, actors, obs)?;
    let norm = 1.0 / (mates.len() * obs.nrows()) as f64;
    Ok(mates
        .iter()
        .map(|theirs| {
            own.iter()
                .zip(theirs)
                .map(|(a, b)| 1.0 - (a - b).cos())
                .sum::<f64>()
        })
        .sum::<f64>()
        * norm)
}

/// Grand-mean equivariance penalty over agents; `obs[i]` holds agent `i`'s
/// observations for the sampled states.
pub fn fair_er_penalty(actors: &[&Mlp], obs: &[Array2<f64>]) -> Result<f64> {
    if obs.len() != actors.len() {
        return Err(Error::Shape {
            expected: actors.len(),
            got: obs.len(),
        });
    }
    let mut total = 0.0;
    for (i, o) in obs.iter().enumerate() {
        total += fair_er_agent_penalty(i, actors, o.view())?;
    }
    Ok(total / actors.len() as f64)
}

/// Gradient of [`fair_er_agent_penalty`] with respect to agent `i`'s actor:
/// `1/M Σ_s 1/(N−1) Σ_{j≠i} sin(a_i − a_j) ∇μ_i(o_i)`.
pub fn fair_er_gradient(agent: usize, actors: &[&Mlp], obs: ArrayView2<f64>) -> Result<Gradients> {
    check_actor_inputs(agent, actors, obs)?;
    let (own, tape) = actors[agent].actor_batch(obs)?;
    let mut upstream = fair_er_sensitivity(agent, actors, obs, &own)?;
    upstream /= obs.nrows() as f64;
    let (grads, _) = actors[agent].backward(&tape, upstream.view())?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Pose2D;
    use crate::policy::ActorTeam;
    use crate::tinynet::{Head, Mlp};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn captures(by: &[usize], none: usize) -> Vec<OutcomeRecord> {
        let mut v: Vec<OutcomeRecord> = by
            .iter()
            .map(|&i| OutcomeRecord::from_capturers(&[i], 10, vec![0.0; 3]))
            .collect();
        v.extend((0..none).map(|_| OutcomeRecord::from_capturers(&[], 200, vec![0.0; 3])));
        v
    }

    #[test]
    fn one_hot_ids() {
        let z = SensitiveId::one_hot(2, 3).unwrap();
        assert_eq!(z.as_slice(), &[0, 0, 1]);
        assert_eq!(z.index(), 2);
        assert!(SensitiveId::one_hot(3, 3).is_err());
    }

    #[test]
    fn single_capturer_is_maximally_unfair() {
        let s = team_fairness(&captures(&[1; 50], 0), 3).unwrap();
        assert!((s.bits - 3f64.log2()).abs() < 1e-12);
        assert_eq!(s.success_rate, 1.0);
    }

    #[test]
    fn uniform_and_empty_are_fair() {
        let s = team_fairness(&captures(&[0, 1, 2, 2, 1, 0], 4), 3).unwrap();
        assert!(s.bits.abs() < 1e-12);
        assert!((s.success_rate - 0.6).abs() < 1e-12);
        let s = team_fairness(&captures(&[], 7), 3).unwrap();
        assert_eq!(s.bits, 0.0);
        assert_eq!(s.success_rate, 0.0);
    }

    #[test]
    fn fairness_errors() {
        assert!(matches!(team_fairness(&[], 3), Err(Error::EmptyOutcomes)));
        assert!(team_fairness(&captures(&[0], 0), 0).is_err());
        assert!(team_fairness(&captures(&[4], 0), 3).is_err());
    }

    #[test]
    fn multi_capture_is_split() {
        let outcomes = vec![
            OutcomeRecord::from_capturers(&[0, 1], 5, vec![0.0; 3]),
            OutcomeRecord::from_capturers(&[2], 5, vec![0.0; 3]),
        ];
        let tally = CaptureTally::from_outcomes(&outcomes, 3).unwrap();
        assert_eq!(tally.per_agent, vec![0.5, 0.5, 1.0]);
        assert!(matches!(
            outcomes[0].category,
            OutcomeCategory::MultiCapture(_)
        ));
        assert_eq!(outcomes[0].capturer_mask(3), "110");
    }

    #[test]
    fn score_matches_conditional_entropy_form() {
        // H(ref) − H(emp) = p·(log₂ n − H(capturer | captured))
        let outcomes = captures(&[0, 0, 0, 1, 2, 2], 3);
        let s = team_fairness(&outcomes, 3).unwrap();
        let p = 6.0 / 9.0;
        let conditional = entropy_bits(&[3.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0]);
        assert!((s.bits - p * (3f64.log2() - conditional)).abs() < 1e-12);
    }

    #[test]
    fn outcome_permutation_moves_capturer() {
        let o = OutcomeRecord::from_capturers(&[0], 3, vec![49.8, -0.3, -0.3]);
        let sigma = Permutation::transposition(3, 0, 2).unwrap();
        let p = o.permute(&sigma).unwrap();
        assert_eq!(p.category, OutcomeCategory::CaptureBy(2));
        assert_eq!(p.returns, vec![-0.3, -0.3, 49.8]);
    }

    fn actor(seed: u64) -> Mlp {
        Mlp::init(
            &mut ChaCha8Rng::seed_from_u64(seed),
            &[4, 6, 1],
            Head::Actor,
        )
        .unwrap()
    }

    #[test]
    fn penalty_zero_for_identical_actors() {
        let a = actor(1);
        let obs = array![[0.1, 0.2, 0.3, 0.4], [-0.5, 0.0, 0.9, 1.0]];
        let actors = [&a, &a, &a];
        let per_agent = vec![obs.clone(), obs.clone() * 2.0, obs * -1.0];
        assert_eq!(fair_er_penalty(&actors, &per_agent).unwrap(), 0.0);
        let g = fair_er_gradient(0, &actors, per_agent[0].view()).unwrap();
        assert_eq!(g.global_norm(), 0.0);
    }

    fn constant_actor(heading: f64) -> Mlp {
        // zero weights; bias sets the raw output so π·tanh(b) = heading
        let mut net = Mlp::zeros(&[4, 3, 1], Head::Actor).unwrap();
        let last = net.layers_mut().last_mut().unwrap();
        last.bias[0] = (heading / PI).atanh();
        net
    }

    #[test]
    fn penalty_of_opposed_actors() {
        let a = constant_actor(PI / 2.0);
        let b = constant_actor(-PI / 2.0);
        let obs = array![[0.1, 0.2, 0.3, 0.4]];
        let pen = fair_er_agent_penalty(0, &[&a, &b], obs.view()).unwrap();
        assert!((pen - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_scales_with_sine_of_offset() {
        // only the output bias moves a constant actor: ∂a/∂b = π(1 − tanh²)
        let obs = array![[0.1, 0.2, 0.3, 0.4]];
        let own_heading = 0.3;
        let a = constant_actor(own_heading);
        for delta in [0.2, 1.0, 2.5] {
            let b = constant_actor(own_heading - delta);
            let g = fair_er_gradient(0, &[&a, &b], obs.view()).unwrap();
            let t = own_heading / PI;
            let expected = delta.sin() * PI * (1.0 - t * t);
            let got = g.layers.last().unwrap().bias[0];
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    #[test]
    fn tied_handle_resolves_to_single_storage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nets = AgentNets::new(&mut rng, 16, &[8], &[8], 0.01).unwrap();
        let handle = tie_parameters(3, nets);
        assert!(std::ptr::eq(handle.resolve(0), handle.resolve(2)));
    }

    #[test]
    fn tied_policy_is_equivariant_and_untied_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = EnvConfig::default();
        let states: Vec<WorldState> = (0..50)
            .map(|_| env::reset(&mut rng, &cfg).unwrap())
            .collect();
        let perms = Permutation::all(3);
        let nets = AgentNets::new(&mut rng, 16, &[16, 16], &[16], 0.01).unwrap();
        let tied = tie_parameters(3, nets);
        assert_eq!(check_equivariance(&tied, &states, &perms).unwrap(), 0.0);

        let team = ActorTeam::new(
            (0..3)
                .map(|s| {
                    Mlp::init(&mut ChaCha8Rng::seed_from_u64(s), &[16, 16, 1], Head::Actor).unwrap()
                })
                .collect(),
        );
        assert_eq!(
            check_equivariance(&team, &states, &[Permutation::identity(3)]).unwrap(),
            0.0
        );
        assert!(check_equivariance(&team, &states, &perms).unwrap() > 1e-3);
    }

    #[test]
    fn identity_trajectory_deviation_is_zero() {
        let cfg = EnvConfig::default();
        let start = WorldState {
            pursuers: vec![
                Pose2D::new(0.5, 0.5, 0.0),
                Pose2D::new(-0.5, 0.5, 0.0),
                Pose2D::new(0.0, -0.7, 0.0),
            ],
            evader: Pose2D::new(0.0, 0.0, 0.0),
            step_index: 0,
        };
        let greedy = crate::policy::Greedy { n_agents: 3 };
        let d = check_trajectory_equivariance(&greedy, &start, &Permutation::identity(3), 50, &cfg)
            .unwrap();
        assert_eq!(d, 0.0);
    }
}
