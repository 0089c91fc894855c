//! Dense MLPs with exact reverse-mode gradients.
//!
//! Hidden layers use ReLU. The actor head squashes its single output with
//! `π·tanh` so it emits a heading directly; the critic head is a single linear
//! unit fed with the observation concatenated with `(cos a, sin a)`.
//!
//! Batches are row-major `B × features` matrices; forward passes return a
//! [`Tape`] which [`Mlp::backward`] consumes.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One output unit, `π·tanh(z)`: a heading in `[-π, π]`.
    Actor,
    /// One linear output unit: an action value.
    Critic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    head: Head,
    layers: Vec<Dense>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer (`layers.len()` entries); hidden ones are post-ReLU.
    inputs: Vec<Array2<f64>>,
    /// Raw output unit before the head transform.
    raw: Array1<f64>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.raw.len()
    }
}

impl Mlp {
    /// Weights uniform in `±1/√fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, layer_sizes: &[usize], head: Head) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, head)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], head: Head) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "zero-width layer in {layer_sizes:?}"
            )));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config(format!(
                "{head:?} head has a single output unit, got {layer_sizes:?}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self { head, layers })
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::fan_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    /// Observation width this net expects (critics take two extra action features).
    pub fn observation_dim(&self) -> usize {
        match self.head {
            Head::Actor => self.input_dim(),
            Head::Critic => self.input_dim() - 2,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn same_shape(&self, other_sizes: &[usize]) -> Result<()> {
        let mine = self.layer_sizes();
        if mine != other_sizes {
            return Err(Error::Contract(format!(
                "shape {other_sizes:?} does not match network {mine:?}"
            )));
        }
        Ok(())
    }

    fn head_output(&self, raw: f64) -> f64 {
        match self.head {
            Head::Actor => PI * raw.tanh(),
            Head::Critic => raw,
        }
    }

    /// Forward a batch through the body, returning head outputs and the tape.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array1<f64>, Tape)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        let mut recorded = Vec::with_capacity(self.layers.len());
        let mut current = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut next = current.dot(&layer.weights.t());
            next += &layer.bias;
            if idx < last {
                next.mapv_inplace(|v| v.max(0.0));
            }
            recorded.push(std::mem::replace(&mut current, next));
        }
        let raw = current.column(0).to_owned();
        let out = raw.mapv(|z| self.head_output(z));
        Ok((
            out,
            Tape {
                inputs: recorded,
                raw,
            },
        ))
    }

    /// Single-sample forward on raw input features.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut current: Vec<f64> = input.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.fan_out());
            for (row, b) in layer.weights.outer_iter().zip(&layer.bias) {
                let mut acc = *b;
                for (w, x) in row.iter().zip(&current) {
                    acc += w * x;
                }
                next.push(if idx < last { acc.max(0.0) } else { acc });
            }
            current = next;
        }
        Ok(self.head_output(current[0]))
    }

    /// Reverse pass. `upstream[b]` is `∂L/∂output_b` for the head output of
    /// sample `b`. Returns the parameter gradient of `L` and `∂L/∂input`.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: ArrayView1<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if tape.inputs.len() != self.layers.len() || tape.inputs[0].ncols() != self.input_dim() {
            return Err(Error::Contract(
                "tape was not recorded by this network".into(),
            ));
        }
        if upstream.len() != tape.batch_size() {
            return Err(Error::Shape {
                expected: tape.batch_size(),
                got: upstream.len(),
            });
        }
        let mut delta = Array2::zeros((tape.batch_size(), 1));
        let mut col = delta.column_mut(0);
        match self.head {
            Head::Actor => {
                Zip::from(&mut col)
                    .and(&upstream)
                    .and(&tape.raw)
                    .for_each(|d, &u, &z| {
                        let t = z.tanh();
                        *d = u * PI * (1.0 - t * t);
                    })
            }
            Head::Critic => col.assign(&upstream),
        }

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.inputs[idx];
            grads.push(Dense {
                weights: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut prev = delta.dot(&layer.weights);
            if idx > 0 {
                // ReLU gate: the recorded input is the post-activation value.
                Zip::from(&mut prev).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = prev;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// `μ(obs)` for a single observation.
    pub fn actor_heading(&self, obs: &[f64]) -> Result<f64> {
        self.expect_head(Head::Actor)?;
        self.forward(obs)
    }

    /// `Q(obs, a)` for a single observation/action pair.
    pub fn critic_value(&self, obs: &[f64], action: f64) -> Result<f64> {
        self.expect_head(Head::Critic)?;
        let mut input = Vec::with_capacity(obs.len() + 2);
        input.extend_from_slice(obs);
        input.push(action.cos());
        input.push(action.sin());
        self.forward(&input)
    }

    pub fn actor_batch(&self, obs: ArrayView2<f64>) -> Result<(Array1<f64>, Tape)> {
        self.expect_head(Head::Actor)?;
        self.forward_batch(obs)
    }

    pub fn critic_batch(
        &self,
        obs: ArrayView2<f64>,
        actions: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Tape)> {
        self.expect_head(Head::Critic)?;
        let input = critic_input(obs, actions)?;
        self.forward_batch(input.view())
    }

    /// Critic reverse pass returning parameter gradients and `∂L/∂a` per sample.
    pub fn critic_backward(
        &self,
        tape: &Tape,
        actions: ArrayView1<f64>,
        upstream: ArrayView1<f64>,
    ) -> Result<(Gradients, Array1<f64>)> {
        self.expect_head(Head::Critic)?;
        let (grads, input_grad) = self.backward(tape, upstream)?;
        let d = input_grad.ncols();
        let dcos = input_grad.column(d - 2);
        let dsin = input_grad.column(d - 1);
        let mut da = Array1::zeros(actions.len());
        Zip::from(&mut da)
            .and(&actions)
            .and(&dcos)
            .and(&dsin)
            .for_each(|g, &a, &c, &s| *g = -c * a.sin() + s * a.cos());
        Ok((grads, da))
    }

    fn expect_head(&self, head: Head) -> Result<()> {
        if self.head != head {
            return Err(Error::Contract(format!(
                "expected {head:?} network, got {:?}",
                self.head
            )));
        }
        Ok(())
    }

    /// Parameters in checkpoint order: per layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        NetCheckpoint {
            layer_sizes: self.layer_sizes(),
            head: self.head,
            params: self.flat_params(),
        }
    }

    pub fn from_checkpoint(ckpt: &NetCheckpoint) -> Result<Self> {
        let mut net = Self::zeros(&ckpt.layer_sizes, ckpt.head)?;
        net.set_flat_params(&ckpt.params)?;
        if !net.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(net)
    }
}

/// `[obs | cos a | sin a]` rows.
pub fn critic_input(obs: ArrayView2<f64>, actions: ArrayView1<f64>) -> Result<Array2<f64>> {
    if obs.nrows() != actions.len() {
        return Err(Error::Shape {
            expected: obs.nrows(),
            got: actions.len(),
        });
    }
    let d = obs.ncols();
    let mut input = Array2::zeros((obs.nrows(), d + 2));
    input.slice_mut(s![.., ..d]).assign(&obs);
    for (mut row, &a) in input.outer_iter_mut().zip(&actions) {
        row[d] = a.cos();
        row[d + 1] = a.sin();
    }
    Ok(input)
}

/// Serialized network: `{"layer_sizes", "head", "params"}` with `params`
/// laid out per layer as the `out × in` weight matrix row-major, then the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub head: Head,
    pub params: Vec<f64>,
}

/// One gradient entry per network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].fan_in())
            .chain(self.layers.iter().map(Dense::fan_out))
            .collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// `self += factor · other`
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::Contract("gradient shapes differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(factor, &b.weights);
            a.bias.scaled_add(factor, &b.bias);
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Rescale so the global norm does not exceed `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

/// Plain gradient steps with global-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
    pub clip_norm: f64,
}

impl Sgd {
    pub fn new(learning_rate: f64, clip_norm: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {learning_rate} must be non-negative"
            )));
        }
        if clip_norm.is_nan() || clip_norm <= 0.0 {
            return Err(Error::Config(format!(
                "clip norm {clip_norm} must be positive"
            )));
        }
        Ok(Self {
            learning_rate,
            clip_norm,
        })
    }

    /// Clip `grads` to `clip_norm`, then step `params` along (or against) them.
    /// Non-finite gradients leave `params` untouched and return an error.
    pub fn apply(
        &self,
        params: &mut Mlp,
        mut grads: Gradients,
        direction: Direction,
    ) -> Result<f64> {
        params.same_shape(&grads.layer_sizes())?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let norm = grads.clip_global_norm(self.clip_norm);
        let step = match direction {
            Direction::Ascent => self.learning_rate,
            Direction::Descent => -self.learning_rate,
        };
        for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
            p.weights.scaled_add(step, &g.weights);
            p.bias.scaled_add(step, &g.bias);
        }
        Ok(norm)
    }
}

/// Online network with a Polyak-averaged target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    pub online: Mlp,
    pub target: Mlp,
    pub tau: f64,
}

impl TargetPair {
    pub fn new(online: Mlp, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau {tau} must lie in (0, 1]")));
        }
        Ok(Self {
            target: online.clone(),
            online,
            tau,
        })
    }

    /// `target ← τ·online + (1 − τ)·target`
    pub fn polyak_update(&mut self) {
        polyak_blend(&mut self.target, &self.online, self.tau);
    }
}

/// Elementwise `target ← tau·online + (1 − tau)·target`.
pub fn polyak_blend(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn actor_param_count() {
        let obs_dim = 16;
        let net = Mlp::init(&mut rng(0), &[obs_dim, 128, 128, 1], Head::Actor).unwrap();
        assert_eq!(
            net.param_count(),
            obs_dim * 128 + 128 + 128 * 128 + 128 + 128 + 1
        );
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::init(&mut rng(5), &[6, 8, 4, 1], Head::Critic).unwrap();
        let b = Mlp::init(&mut rng(5), &[6, 8, 4, 1], Head::Critic).unwrap();
        assert_eq!(a, b);
        for layer in a.layers() {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(Mlp::init(&mut rng(0), &[], Head::Actor).is_err());
        assert!(Mlp::init(&mut rng(0), &[4], Head::Actor).is_err());
        assert!(Mlp::init(&mut rng(0), &[4, 0, 1], Head::Actor).is_err());
        assert!(Mlp::init(&mut rng(0), &[4, 8, 2], Head::Actor).is_err());
    }

    #[test]
    fn zero_nets_output_zero() {
        let actor = Mlp::zeros(&[4, 8, 1], Head::Actor).unwrap();
        assert_eq!(actor.actor_heading(&[0.3, -1.0, 2.0, 0.1]).unwrap(), 0.0);
        let critic = Mlp::zeros(&[4, 8, 1], Head::Critic).unwrap();
        assert_eq!(critic.critic_value(&[0.3, -1.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn actor_output_is_bounded_and_repeatable() {
        let mut net = Mlp::init(&mut rng(1), &[3, 8, 1], Head::Actor).unwrap();
        // blow up the weights to saturate tanh
        for l in net.layers_mut() {
            l.weights *= 50.0;
        }
        let mut r = rng(2);
        for _ in 0..200 {
            let obs: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
            let a = net.actor_heading(&obs).unwrap();
            assert!((-PI..=PI).contains(&a));
            assert_eq!(a, net.actor_heading(&obs).unwrap());
        }
    }

    #[test]
    fn critic_is_periodic_in_action() {
        let net = Mlp::init(&mut rng(3), &[5, 8, 8, 1], Head::Critic).unwrap();
        let obs = [0.1, 0.2, -0.3];
        let q = net.critic_value(&obs, 0.7).unwrap();
        assert!(q.is_finite());
        assert!((q - net.critic_value(&obs, 0.7 + 2.0 * PI).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let net = Mlp::init(&mut rng(4), &[3, 7, 5, 1], Head::Actor).unwrap();
        let batch = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]];
        let (out, _) = net.actor_batch(batch.view()).unwrap();
        for (row, o) in batch.outer_iter().zip(&out) {
            let single = net.actor_heading(row.as_slice().unwrap()).unwrap();
            assert!((single - o).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Mlp::init(&mut rng(4), &[3, 7, 1], Head::Actor).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(net.critic_value(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::init(&mut rng(6), &[4, 8, 1], Head::Actor).unwrap();
        let batch = array![[0.1, 0.2, 0.3, 0.4]];
        let (_, tape) = net.actor_batch(batch.view()).unwrap();
        let (g, dx) = net.backward(&tape, array![0.0].view()).unwrap();
        assert_eq!(g.global_norm(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let a = Mlp::init(&mut rng(6), &[4, 8, 1], Head::Actor).unwrap();
        let b = Mlp::init(&mut rng(6), &[5, 8, 1], Head::Actor).unwrap();
        let (_, tape) = a.actor_batch(array![[0.1, 0.2, 0.3, 0.4]].view()).unwrap();
        assert!(b.backward(&tape, array![1.0].view()).is_err());
    }

    fn grads_of_norm(net: &Mlp, norm: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.layers[0].weights.fill(1.0);
        let n = g.global_norm();
        g.scale(norm / n);
        g
    }

    #[test]
    fn clipping_caps_global_norm() {
        let net = Mlp::init(&mut rng(7), &[4, 8, 1], Head::Actor).unwrap();
        let mut g = grads_of_norm(&net, 5.0);
        let before = g.clip_global_norm(0.5);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((g.global_norm() - 0.5).abs() < 1e-12);

        let mut small = grads_of_norm(&net, 0.2);
        let copy = small.clone();
        small.clip_global_norm(0.5);
        assert_eq!(small, copy);
    }

    #[test]
    fn apply_moves_by_clipped_step() {
        let net = Mlp::init(&mut rng(8), &[4, 8, 1], Head::Actor).unwrap();
        let sgd = Sgd::new(0.1, 0.5).unwrap();
        let mut up = net.clone();
        sgd.apply(&mut up, grads_of_norm(&net, 5.0), Direction::Ascent)
            .unwrap();
        let delta: f64 = up
            .flat_params()
            .iter()
            .zip(net.flat_params())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((delta - 0.05).abs() < 1e-12);

        let mut still = net.clone();
        sgd.apply(&mut still, Gradients::zeros_like(&net), Direction::Descent)
            .unwrap();
        assert_eq!(still, net);

        let frozen = Sgd::new(0.0, 0.5).unwrap();
        let mut still = net.clone();
        frozen
            .apply(&mut still, grads_of_norm(&net, 3.0), Direction::Descent)
            .unwrap();
        assert_eq!(still, net);
    }

    #[test]
    fn apply_rejects_non_finite() {
        let net = Mlp::init(&mut rng(9), &[4, 8, 1], Head::Actor).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].bias[0] = f64::NAN;
        let mut p = net.clone();
        let err = Sgd::new(0.1, 0.5)
            .unwrap()
            .apply(&mut p, g, Direction::Ascent)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, net);
    }

    #[test]
    fn polyak_extremes_and_arithmetic() {
        let online = Mlp::init(&mut rng(10), &[2, 3, 1], Head::Critic).unwrap();
        let target = Mlp::init(&mut rng(11), &[2, 3, 1], Head::Critic).unwrap();

        let mut t = target.clone();
        polyak_blend(&mut t, &online, 1.0);
        assert_eq!(t, online);

        let mut t = target.clone();
        polyak_blend(&mut t, &online, 0.0);
        assert_eq!(t, target);

        let mut o = Mlp::zeros(&[2, 3, 1], Head::Critic).unwrap();
        o.set_flat_params(&vec![2.0; o.param_count()]).unwrap();
        let mut pair = TargetPair::new(o.clone(), 0.001).unwrap();
        pair.target
            .set_flat_params(&vec![1.0; o.param_count()])
            .unwrap();
        pair.polyak_update();
        for v in pair.target.flat_params() {
            assert!((v - 1.001).abs() < 1e-12);
        }
        assert!(TargetPair::new(o.clone(), 0.0).is_err());
        assert!(TargetPair::new(o, 1.5).is_err());
    }

    #[test]
    fn checkpoint_json_round_trip_is_bit_exact() {
        let net = Mlp::init(&mut rng(12), &[5, 7, 3, 1], Head::Critic).unwrap();
        let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back: NetCheckpoint = serde_json::from_str(&json).unwrap();
        let restored = Mlp::from_checkpoint(&back).unwrap();
        assert_eq!(restored, net);
        for (a, b) in restored.flat_params().iter().zip(net.flat_params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_wrong_param_count() {
        let mut ckpt = Mlp::zeros(&[2, 3, 1], Head::Actor).unwrap().to_checkpoint();
        ckpt.params.pop();
        assert!(Mlp::from_checkpoint(&ckpt).is_err());
    }
}
