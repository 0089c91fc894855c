//! Self-checks run by `fairpursuit verify`: equivariance, gradient checks
//! against finite differences, the evader oracle and fairness analytics.

use std::f64::consts::{PI, TAU};

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{self, EnvConfig, Permutation, WorldState};
use crate::error::{Error, Result};
use crate::fairness::{self, tie_parameters, OutcomeRecord};
use crate::harness;
use crate::policy::Greedy;
use crate::tinynet::{critic_input, Head, Mlp};
use crate::train::AgentNets;

pub const FD_EPS: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    fn at_most(name: &'static str, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: worst <= tolerance,
            worst,
            tolerance,
        }
    }
}

/// Sizes of the suite; `full` matches the acceptance budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub states: usize,
    pub starts: usize,
    pub horizon: usize,
    pub gradient_trials: usize,
    pub evader_configs: usize,
    pub greedy_episodes: usize,
}

impl Budget {
    pub fn full() -> Self {
        Self {
            states: 1000,
            starts: 100,
            horizon: 200,
            gradient_trials: 50,
            evader_configs: 1000,
            greedy_episodes: 500,
        }
    }

    pub fn quick() -> Self {
        Self {
            states: 100,
            starts: 10,
            horizon: 200,
            gradient_trials: 10,
            evader_configs: 100,
            greedy_episodes: 100,
        }
    }
}

/// Central differences of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + eps;
            let up = f(&probe);
            probe[k] = x[k] - eps;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Central differences that stay on one linear piece of a ReLU network: `f`
/// returns its value and the activation pattern it went through. `None` when
/// any probe switches a unit, since the difference quotient then straddles a
/// kink.
pub fn piecewise_finite_difference(
    f: impl Fn(&[f64]) -> (f64, Vec<bool>),
    x: &[f64],
    eps: f64,
) -> Option<Vec<f64>> {
    let (_, base) = f(x);
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + eps;
        let (up, p_up) = f(&probe);
        probe[k] = x[k] - eps;
        let (down, p_down) = f(&probe);
        probe[k] = x[k];
        if p_up != base || p_down != base {
            return None;
        }
        out.push((up - down) / (2.0 * eps));
    }
    Some(out)
}

/// On/off state of every hidden ReLU for every row of `inputs`.
pub fn activation_pattern(net: &Mlp, inputs: ArrayView2<f64>) -> Vec<bool> {
    let mut pattern = Vec::new();
    let mut current = inputs.to_owned();
    let hidden = net.layers().len() - 1;
    for layer in &net.layers()[..hidden] {
        let mut pre = current.dot(&layer.weights.t());
        pre += &layer.bias;
        pattern.extend(pre.iter().map(|&v| v > 0.0));
        current = pre.mapv(|v| v.max(0.0));
    }
    pattern
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn random_batch<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Random net with non-zero biases, so no pre-activation sits exactly on a
/// ReLU kink when a whole layer is inactive.
fn random_net<R: Rng>(rng: &mut R, input: usize, head: Head) -> Result<Mlp> {
    let h1 = rng.random_range(2..=16);
    let h2 = rng.random_range(2..=16);
    let mut net = Mlp::init(rng, &[input, h1, h2, 1], head)?;
    for layer in net.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    Ok(net)
}

fn with_params(net: &Mlp, params: &[f64]) -> Mlp {
    let mut copy = net.clone();
    copy.set_flat_params(params).expect("same layout");
    copy
}

/// Worst value of `trial` over `trials` draws at differentiable points; draws
/// landing within `ε` of a kink (`Ok(None)`) are replaced by fresh ones.
fn smooth_trials(
    trials: usize,
    seed: u64,
    mut trial: impl FnMut(&mut ChaCha8Rng) -> Result<Option<f64>>,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut done, mut attempts, mut worst) = (0, 0, 0.0f64);
    while done < trials {
        attempts += 1;
        if attempts > 20 * trials.max(1) {
            return Err(Error::Contract(
                "too many gradient-check draws hit a kink".into(),
            ));
        }
        if let Some(err) = trial(&mut rng)? {
            worst = worst.max(err);
            done += 1;
        }
    }
    Ok(worst)
}

/// Worst relative error of actor parameter gradients.
pub fn actor_gradient_error(trials: usize, seed: u64) -> Result<f64> {
    smooth_trials(trials, seed, |rng| {
        let dim = rng.random_range(2..=8);
        let net = random_net(rng, dim, Head::Actor)?;
        let obs = random_batch(rng, 4, dim);
        let w = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let (_, tape) = net.actor_batch(obs.view())?;
        let (grads, _) = net.backward(&tape, w.view())?;
        let fd = piecewise_finite_difference(
            |p| {
                let moved = with_params(&net, p);
                let value = moved.actor_batch(obs.view()).expect("shape").0.dot(&w);
                (value, activation_pattern(&moved, obs.view()))
            },
            &net.flat_params(),
            FD_EPS,
        );
        Ok(fd.map(|fd| relative_error(&grads.flat(), &fd)))
    })
}

/// Worst relative error of critic parameter gradients.
pub fn critic_gradient_error(trials: usize, seed: u64) -> Result<f64> {
    critic_trials(trials, seed, false)
}

/// Worst relative error of the critic's gradient with respect to its action input.
pub fn critic_action_gradient_error(trials: usize, seed: u64) -> Result<f64> {
    critic_trials(trials, seed, true)
}

fn critic_trials(trials: usize, seed: u64, wrt_action: bool) -> Result<f64> {
    smooth_trials(trials, seed, |rng| {
        let dim = rng.random_range(2..=8);
        let net = random_net(rng, dim + 2, Head::Critic)?;
        let obs = random_batch(rng, 4, dim);
        let actions = Array1::from_shape_fn(4, |_| rng.random_range(-PI..PI));
        let w = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let (_, tape) = net.critic_batch(obs.view(), actions.view())?;
        let (grads, da) = net.critic_backward(&tape, actions.view(), w.view())?;
        let eval = |net: &Mlp, actions: &Array1<f64>| {
            let value = net
                .critic_batch(obs.view(), actions.view())
                .expect("shape")
                .0
                .dot(&w);
            let inputs = critic_input(obs.view(), actions.view()).expect("shape");
            (value, activation_pattern(net, inputs.view()))
        };
        if wrt_action {
            let fd = piecewise_finite_difference(
                |a| eval(&net, &Array1::from(a.to_vec())),
                &actions.to_vec(),
                FD_EPS,
            );
            Ok(fd.map(|fd| relative_error(&da.to_vec(), &fd)))
        } else {
            let fd = piecewise_finite_difference(
                |p| eval(&with_params(&net, p), &actions),
                &net.flat_params(),
                FD_EPS,
            );
            Ok(fd.map(|fd| relative_error(&grads.flat(), &fd)))
        }
    })
}

/// Worst relative error of the equivariance-penalty gradient.
pub fn fair_er_gradient_error(trials: usize, seed: u64) -> Result<f64> {
    smooth_trials(trials, seed, |rng| {
        let dim = rng.random_range(2..=8);
        let n = rng.random_range(2..=4);
        let actors = (0..n)
            .map(|_| random_net(rng, dim, Head::Actor))
            .collect::<Result<Vec<_>>>()?;
        let agent = rng.random_range(0..n);
        let obs = random_batch(rng, 5, dim);
        let refs: Vec<&Mlp> = actors.iter().collect();
        let grads = fairness::fair_er_gradient(agent, &refs, obs.view())?;
        let fd = piecewise_finite_difference(
            |p| {
                let moved = with_params(&actors[agent], p);
                let mut team = refs.clone();
                team[agent] = &moved;
                let value =
                    fairness::fair_er_agent_penalty(agent, &team, obs.view()).expect("shape");
                (value, activation_pattern(&moved, obs.view()))
            },
            &actors[agent].flat_params(),
            FD_EPS,
        );
        Ok(fd.map(|fd| relative_error(&grads.flat(), &fd)))
    })
}

/// Worst shortfall of the closed-form evader heading against a grid search
/// with the given spacing.
pub fn evader_oracle_gap(configs: usize, spacing: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EnvConfig::default();
    let steps = (TAU / spacing).ceil() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let state = env::reset(&mut rng, &cfg)?;
        let inputs = env::EvaderInputs::from_state(&state);
        let grid_best = (0..steps)
            .map(|k| inputs.utility(-PI + k as f64 * spacing))
            .fold(f64::NEG_INFINITY, f64::max);
        let closed = inputs.utility(env::evader_heading(&state));
        worst = worst.max(grid_best - closed);
    }
    Ok(worst)
}

fn tied_policy(seed: u64) -> Result<fairness::SharedPolicyHandle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nets = AgentNets::new(&mut rng, env::observation_dim(3), &[32, 32], &[8], 0.01)?;
    Ok(tie_parameters(3, nets))
}

fn random_states(count: usize, seed: u64) -> Result<Vec<WorldState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EnvConfig::default();
    (0..count).map(|_| env::reset(&mut rng, &cfg)).collect()
}

/// Worst policy-equivariance deviation of a randomly initialized tied team.
pub fn policy_equivariance_deviation(states: usize, seed: u64) -> Result<f64> {
    let policy = tied_policy(seed)?;
    fairness::check_equivariance(
        &policy,
        &random_states(states, seed ^ 1)?,
        &Permutation::all(3),
    )
}

/// Worst terminal-state deviation over random starts and every permutation.
pub fn trajectory_equivariance_deviation(starts: usize, horizon: usize, seed: u64) -> Result<f64> {
    let policy = tied_policy(seed)?;
    let cfg = EnvConfig::default();
    let mut worst: f64 = 0.0;
    for start in random_states(starts, seed ^ 2)? {
        for sigma in Permutation::all(3).iter().skip(1) {
            worst = worst.max(fairness::check_trajectory_equivariance(
                &policy, &start, sigma, horizon, &cfg,
            )?);
        }
    }
    Ok(worst)
}

/// Largest error of the fairness score on the closed-form cases.
pub fn fairness_analytic_error() -> Result<f64> {
    let episodes = |capturer: Option<usize>, count: usize| {
        (0..count)
            .map(|_| match capturer {
                Some(i) => OutcomeRecord::from_capturers(&[i], 10, vec![0.0; 3]),
                None => OutcomeRecord::from_capturers(&[], 200, vec![0.0; 3]),
            })
            .collect::<Vec<_>>()
    };
    let one_hot = fairness::team_fairness(&episodes(Some(1), 30), 3)?.bits;
    let uniform: Vec<_> = (0..3).flat_map(|i| episodes(Some(i), 10)).collect();
    let uniform = fairness::team_fairness(&uniform, 3)?.bits;
    let none = fairness::team_fairness(&episodes(None, 30), 3)?.bits;
    Ok((one_hot - 3f64.log2())
        .abs()
        .max(uniform.abs())
        .max(none.abs()))
}

/// Capture rate of straight pursuit at speed 1.2.
pub fn greedy_success_rate(episodes: usize, seed: u64) -> Result<f64> {
    let r = harness::evaluate(
        &Greedy { n_agents: 3 },
        "greedy",
        0.0,
        &EnvConfig::default(),
        1.2,
        episodes,
        seed,
    )?;
    Ok(r.success_rate)
}

/// Run every check; errors inside a check count as failures.
pub fn run_suite(budget: Budget, seed: u64) -> Vec<CheckOutcome> {
    let failed = |name| CheckOutcome {
        name,
        passed: false,
        worst: f64::NAN,
        tolerance: f64::NAN,
    };
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<f64>, tol: f64| {
        out.push(r.map_or_else(|_| failed(name), |w| CheckOutcome::at_most(name, w, tol)));
    };
    push(
        "policy equivariance",
        policy_equivariance_deviation(budget.states, seed),
        1e-9,
    );
    push(
        "trajectory equivariance",
        trajectory_equivariance_deviation(budget.starts, budget.horizon, seed),
        1e-6,
    );
    push(
        "actor gradients",
        actor_gradient_error(budget.gradient_trials, seed),
        GRAD_TOL,
    );
    push(
        "critic gradients",
        critic_gradient_error(budget.gradient_trials, seed),
        GRAD_TOL,
    );
    push(
        "critic action gradients",
        critic_action_gradient_error(budget.gradient_trials, seed),
        GRAD_TOL,
    );
    push(
        "fair-er gradients",
        fair_er_gradient_error(budget.gradient_trials, seed),
        GRAD_TOL,
    );
    push(
        "evader oracle",
        evader_oracle_gap(budget.evader_configs, 1e-3, seed),
        1e-6,
    );
    push("fairness analytics", fairness_analytic_error(), 1e-9);
    // success rate must stay above 0.95, checked as a shortfall
    push(
        "greedy capture rate",
        greedy_success_rate(budget.greedy_episodes, seed).map(|p| 0.95 - p),
        0.0,
    );
    out
}
