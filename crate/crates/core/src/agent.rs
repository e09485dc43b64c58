//! Deep deterministic policy gradient learner for the interception task.
//!
//! The actor maps an [`Observation`] to a turn rate in `[-1, 1]`; the critic
//! scores `(observation, control)` pairs. Both have slowly tracking target
//! copies, transitions go through a FIFO replay buffer and exploration uses
//! an Ornstein-Uhlenbeck process.

use std::f64::consts::TAU;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, CarState, EnvError, Episode, EpisodeConfig, Observation, TargetTrajectory, Termination};
use crate::nn::{
    self, Activation, AdamState, Checkpoint, DenseLayer, Gradients, Network, NnError, Parameters, Pass, Tape,
};
use crate::trajectory::TrajectoryRow;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("cannot sample {requested} transitions from a buffer holding {available}")]
    BufferUnderfilled { requested: usize, available: usize },
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("episode callback failed: {0}")]
    Callback(String),
}

pub type Result<T> = std::result::Result<T, AgentError>;

fn invalid(field: &'static str, reason: impl Into<String>) -> AgentError {
    AgentError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub dt: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.01,
            batch_size: 64,
            buffer_capacity: 10_000,
            episodes: 1000,
            steps_per_episode: 400,
            dt: 0.1,
            actor_lr: 5e-5,
            critic_lr: 1e-4,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid("tau", format!("must lie in (0, 1], got {}", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(invalid(
                "batch_size",
                format!("{} exceeds buffer_capacity {}", self.batch_size, self.buffer_capacity),
            ));
        }
        if self.steps_per_episode == 0 {
            return Err(invalid("steps_per_episode", "must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.actor_lr > 0.0) {
            return Err(invalid("actor_lr", format!("must be positive, got {}", self.actor_lr)));
        }
        if !(self.critic_lr > 0.0) {
            return Err(invalid("critic_lr", format!("must be positive, got {}", self.critic_lr)));
        }
        Ok(())
    }
}

/// Layer widths and regularization for both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_state: Vec<usize>,
    pub critic_action: Vec<usize>,
    pub critic_trunk: Vec<usize>,
    /// Layer normalization on every hidden layer.
    pub layer_norm: bool,
    /// Dropout rate on every hidden layer during training passes.
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256; 4],
            critic_state: vec![16, 32],
            critic_action: vec![32],
            critic_trunk: vec![512, 512],
            layer_norm: false,
            dropout: 0.0,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        let groups = [
            ("actor_hidden", &self.actor_hidden),
            ("critic_state", &self.critic_state),
            ("critic_action", &self.critic_action),
            ("critic_trunk", &self.critic_trunk),
        ];
        for (field, widths) in groups {
            if widths.contains(&0) {
                return Err(invalid(field, "layer widths must be positive"));
            }
        }
        if self.critic_state.is_empty() || self.critic_action.is_empty() {
            return Err(invalid("critic_state", "both critic branches need a hidden layer"));
        }
        Ok(())
    }

    fn hidden_stack<R: Rng + ?Sized>(&self, input: usize, widths: &[usize], rng: &mut R) -> Vec<DenseLayer> {
        let mut layers = Vec::with_capacity(widths.len() + 1);
        let mut fan_in = input;
        for &w in widths {
            layers.push(
                DenseLayer::lecun(fan_in, w, Activation::Selu, rng)
                    .with_layer_norm(self.layer_norm)
                    .with_dropout(self.dropout),
            );
            fan_in = w;
        }
        layers
    }
}

/// Observation (3) → SELU hidden stack → tanh scalar.
pub fn build_actor<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Network> {
    arch.validate()?;
    let mut layers = arch.hidden_stack(Observation::DIM, &arch.actor_hidden, rng);
    let last = arch.actor_hidden.last().copied().unwrap_or(Observation::DIM);
    layers.push(DenseLayer::lecun(last, 1, Activation::Tanh, rng));
    Ok(Network::new(layers)?)
}

/// Two-branch action-value network: the observation and control branches are
/// concatenated and passed through a SELU trunk to a linear scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub state_branch: Network,
    pub action_branch: Network,
    pub trunk: Network,
}

pub fn build_critic<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Critic> {
    arch.validate()?;
    let state_branch = Network::new(arch.hidden_stack(Observation::DIM, &arch.critic_state, rng))?;
    let action_branch = Network::new(arch.hidden_stack(1, &arch.critic_action, rng))?;
    let joined = state_branch.output_dim() + action_branch.output_dim();
    let mut trunk = arch.hidden_stack(joined, &arch.critic_trunk, rng);
    let last = arch.critic_trunk.last().copied().unwrap_or(joined);
    trunk.push(DenseLayer::lecun(last, 1, Activation::Linear, rng));
    Ok(Critic {
        state_branch,
        action_branch,
        trunk: Network::new(trunk)?,
    })
}

pub struct CriticTape {
    state: Tape,
    action: Tape,
    trunk: Tape,
    split: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticGradients {
    pub state_branch: Gradients,
    pub action_branch: Gradients,
    pub trunk: Gradients,
}

impl Parameters for Critic {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.state_branch.tensors();
        t.extend(self.action_branch.tensors());
        t.extend(self.trunk.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.state_branch.tensors_mut();
        t.extend(self.action_branch.tensors_mut());
        t.extend(self.trunk.tensors_mut());
        t
    }
}

impl Parameters for CriticGradients {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.state_branch.tensors();
        t.extend(self.action_branch.tensors());
        t.extend(self.trunk.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.state_branch.tensors_mut();
        t.extend(self.action_branch.tensors_mut());
        t.extend(self.trunk.tensors_mut());
        t
    }
}

impl Critic {
    pub fn predict(&self, obs: ArrayView2<'_, f64>, act: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let hs = self.state_branch.predict(obs)?;
        let ha = self.action_branch.predict(act)?;
        let joined = concatenate(Axis(1), &[hs.view(), ha.view()]).expect("equal rows");
        Ok(self.trunk.predict(joined.view())?.column(0).to_owned())
    }

    pub fn forward(
        &self,
        obs: ArrayView2<'_, f64>,
        act: ArrayView2<'_, f64>,
        mut pass: Pass<'_>,
    ) -> Result<(Array1<f64>, CriticTape)> {
        if obs.nrows() != act.nrows() {
            return Err(NnError::DimensionMismatch {
                expected: obs.nrows(),
                got: act.nrows(),
            }
            .into());
        }
        let (hs, state) = self.state_branch.forward(obs, pass.reborrow())?;
        let (ha, action) = self.action_branch.forward(act, pass.reborrow())?;
        let joined = concatenate(Axis(1), &[hs.view(), ha.view()]).expect("equal rows");
        let (q, trunk) = self.trunk.forward(joined.view(), pass)?;
        let tape = CriticTape {
            state,
            action,
            trunk,
            split: hs.ncols(),
        };
        Ok((q.column(0).to_owned(), tape))
    }

    /// Gradients of `Σ dq_i·Q_i` with respect to the parameters, the
    /// observations and the controls.
    pub fn backward(
        &self,
        tape: &CriticTape,
        dq: &Array1<f64>,
    ) -> Result<(CriticGradients, Array2<f64>, Array2<f64>)> {
        let dq = dq.view().insert_axis(Axis(1));
        let (trunk, djoined) = self.trunk.backward(&tape.trunk, dq)?;
        let (state_branch, dobs) = self
            .state_branch
            .backward(&tape.state, djoined.slice(s![.., ..tape.split]))?;
        let (action_branch, dact) = self
            .action_branch
            .backward(&tape.action, djoined.slice(s![.., tape.split..]))?;
        Ok((
            CriticGradients {
                state_branch,
                action_branch,
                trunk,
            },
            dobs,
            dact,
        ))
    }

    /// Only the control gradient; skips all parameter gradients.
    pub fn backward_action(&self, tape: &CriticTape, dq: &Array1<f64>) -> Result<Array2<f64>> {
        let dq = dq.view().insert_axis(Axis(1));
        let djoined = self.trunk.backward_input(&tape.trunk, dq)?;
        Ok(self
            .action_branch
            .backward_input(&tape.action, djoined.slice(s![.., tape.split..]))?)
    }
}

/// Anything that scores batches of `(observation, control)` pairs and can
/// differentiate the score with respect to the control.
pub trait QFunction {
    fn q_values(&self, obs: ArrayView2<'_, f64>, act: ArrayView2<'_, f64>) -> Result<Array1<f64>>;

    /// Values and per-row `∂Q/∂a`.
    fn q_and_action_grad(
        &self,
        obs: ArrayView2<'_, f64>,
        act: ArrayView2<'_, f64>,
        pass: Pass<'_>,
    ) -> Result<(Array1<f64>, Array1<f64>)>;
}

impl QFunction for Critic {
    fn q_values(&self, obs: ArrayView2<'_, f64>, act: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.predict(obs, act)
    }

    fn q_and_action_grad(
        &self,
        obs: ArrayView2<'_, f64>,
        act: ArrayView2<'_, f64>,
        pass: Pass<'_>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let (q, tape) = self.forward(obs, act, pass)?;
        let dact = self.backward_action(&tape, &Array1::ones(q.len()))?;
        Ok((q, dact.column(0).to_owned()))
    }
}

/// One replay record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Observation,
    pub a: f64,
    pub r: f64,
    pub s_next: Observation,
    /// Set on interception only; budget exhaustion still bootstraps.
    pub terminal: bool,
}

/// Fixed-capacity FIFO store sampled uniformly with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            head: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// Storage slots drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < n || self.items.is_empty() {
            return Err(AgentError::BufferUnderfilled {
                requested: n,
                available: self.items.len(),
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.items[i])
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Mean-reversion rate.
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            sigma: 0.2,
            mu: 0.0,
        }
    }
}

/// Ornstein-Uhlenbeck exploration noise, Euler-Maruyama discretized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuNoise {
    pub eta: f64,
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub dt: f64,
}

impl OuNoise {
    pub fn new(cfg: NoiseConfig, dt: f64) -> Self {
        Self {
            eta: cfg.mu,
            theta: cfg.theta,
            sigma: cfg.sigma,
            mu: cfg.mu,
            dt,
        }
    }

    pub fn reset(&mut self) {
        self.eta = self.mu;
    }

    /// `η ← η + θ(μ − η)dt + σ√dt·z`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.eta += self.theta * (self.mu - self.eta) * self.dt + self.sigma * self.dt.sqrt() * z;
        self.eta
    }

    /// Closed-form stationary variance of the continuous process.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

pub fn clip_action(a: f64) -> f64 {
    a.clamp(-1.0, 1.0)
}

pub fn policy(actor: &Network, obs: &Observation) -> Result<f64> {
    let input = Array2::from_shape_vec((1, 3), obs.to_array().to_vec()).expect("1x3");
    Ok(actor.predict(input.view())?[[0, 0]])
}

/// Deterministic policy output, plus one noise step when exploring, clipped
/// to the admissible controls.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Network,
    obs: &Observation,
    noise: &mut OuNoise,
    explore: bool,
    rng: &mut R,
) -> Result<f64> {
    let mu = policy(actor, obs)?;
    if explore {
        Ok(clip_action(mu + noise.step(rng)))
    } else {
        Ok(mu)
    }
}

/// Column-major view of a mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub act: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn new(transitions: &[Transition]) -> Self {
        let n = transitions.len();
        Self {
            obs: Array2::from_shape_fn((n, 3), |(i, j)| transitions[i].s.to_array()[j]),
            act: Array2::from_shape_fn((n, 1), |(i, _)| transitions[i].a),
            reward: transitions.iter().map(|t| t.r).collect(),
            next_obs: Array2::from_shape_fn((n, 3), |(i, j)| transitions[i].s_next.to_array()[j]),
            terminal: transitions.iter().map(|t| t.terminal).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }
}

/// `y = r + γ·Q'(s', μ'(s'))`, or `y = r` for terminal transitions.
pub fn td_targets<Q: QFunction + ?Sized>(
    batch: &Batch,
    actor_target: &Network,
    critic_target: &Q,
    gamma: f64,
) -> Result<Array1<f64>> {
    if batch.is_empty() {
        return Err(invalid("batch", "empty mini-batch"));
    }
    let next_act = actor_target.predict(batch.next_obs.view())?;
    let next_q = critic_target.q_values(batch.next_obs.view(), next_act.view())?;
    Ok(batch
        .reward
        .iter()
        .zip(&next_q)
        .zip(&batch.terminal)
        .map(|((&r, &q), &done)| if done { r } else { r + gamma * q })
        .collect())
}

/// Mean squared TD error and its parameter gradient.
pub fn critic_gradients(
    critic: &Critic,
    obs: ArrayView2<'_, f64>,
    act: ArrayView2<'_, f64>,
    targets: &Array1<f64>,
    pass: Pass<'_>,
) -> Result<(CriticGradients, f64)> {
    let n = targets.len();
    if n == 0 {
        return Err(invalid("batch", "empty mini-batch"));
    }
    let (q, tape) = critic.forward(obs, act, pass)?;
    let residual = &q - targets;
    let loss = residual.dot(&residual) / n as f64;
    let dq = residual * (2.0 / n as f64);
    let (grads, _, _) = critic.backward(&tape, &dq)?;
    Ok((grads, loss))
}

/// One Adam step on the online critic; returns the loss before the step.
pub fn critic_update(
    critic: &mut Critic,
    optimizer: &mut AdamState,
    batch: &Batch,
    targets: &Array1<f64>,
    pass: Pass<'_>,
) -> Result<f64> {
    let (grads, loss) = critic_gradients(critic, batch.obs.view(), batch.act.view(), targets, pass)?;
    optimizer.step(critic, &grads)?;
    Ok(loss)
}

/// Gradient of `−mean Q(s, μ(s))` with respect to the actor parameters,
/// together with `mean Q`.
pub fn actor_gradients<Q: QFunction + ?Sized>(
    actor: &Network,
    critic: &Q,
    obs: ArrayView2<'_, f64>,
    mut pass: Pass<'_>,
) -> Result<(Gradients, f64)> {
    let n = obs.nrows();
    if n == 0 {
        return Err(invalid("batch", "empty mini-batch"));
    }
    let (act, tape) = actor.forward(obs, pass.reborrow())?;
    let (q, dq_da) = critic.q_and_action_grad(obs, act.view(), pass)?;
    let d_act = dq_da.mapv(|g| -g / n as f64).insert_axis(Axis(1));
    let (grads, _) = actor.backward(&tape, d_act.view())?;
    Ok((grads, q.mean().unwrap_or(0.0)))
}

/// One Adam ascent step on `mean Q(s, μ(s))`; the critic is only read.
/// Returns the objective before the step.
pub fn actor_update<Q: QFunction + ?Sized>(
    actor: &mut Network,
    optimizer: &mut AdamState,
    critic: &Q,
    obs: ArrayView2<'_, f64>,
    pass: Pass<'_>,
) -> Result<f64> {
    let (grads, objective) = actor_gradients(actor, critic, obs, pass)?;
    optimizer.step(actor, &grads)?;
    Ok(objective)
}

/// Online and target networks.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: Network,
    pub critic: Critic,
    pub actor_target: Network,
    pub critic_target: Critic,
}

impl AgentNets {
    /// Fresh online networks with targets initialized as exact copies.
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let actor = build_actor(arch, rng)?;
        let critic = build_critic(arch, rng)?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        })
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        nn::soft_update(&mut self.actor_target, &self.actor, tau)?;
        nn::soft_update(&mut self.critic_target, &self.critic, tau)?;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("actor", &self.actor);
        ck.insert("actor_target", &self.actor_target);
        for (prefix, critic) in [("critic", &self.critic), ("critic_target", &self.critic_target)] {
            ck.insert(&format!("{prefix}.state"), &critic.state_branch);
            ck.insert(&format!("{prefix}.action"), &critic.action_branch);
            ck.insert(&format!("{prefix}.trunk"), &critic.trunk);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let critic = |prefix: &str| -> Result<Critic> {
            Ok(Critic {
                state_branch: ck.network(&format!("{prefix}.state"))?,
                action_branch: ck.network(&format!("{prefix}.action"))?,
                trunk: ck.network(&format!("{prefix}.trunk"))?,
            })
        };
        Ok(Self {
            actor: ck.network("actor")?,
            actor_target: ck.network("actor_target")?,
            critic: critic("critic")?,
            critic_target: critic("critic_target")?,
        })
    }
}

/// Learner state: networks, optimizers, replay memory and exploration noise.
pub struct Ddpg {
    pub nets: AgentNets,
    pub hp: Hyperparams,
    pub buffer: ReplayBuffer,
    pub noise: OuNoise,
    actor_opt: AdamState,
    critic_opt: AdamState,
    updates: u64,
}

/// Losses from one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(
        hp: Hyperparams,
        arch: &ArchConfig,
        noise: NoiseConfig,
        rng: &mut R,
    ) -> Result<Self> {
        hp.validate()?;
        let nets = AgentNets::new(arch, rng)?;
        Ok(Self::from_nets(nets, hp, noise))
    }

    pub fn from_nets(nets: AgentNets, hp: Hyperparams, noise: NoiseConfig) -> Self {
        Self {
            actor_opt: AdamState::new(&nets.actor, hp.actor_lr),
            critic_opt: AdamState::new(&nets.critic, hp.critic_lr),
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            noise: OuNoise::new(noise, hp.dt),
            nets,
            hp,
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One critic step, one actor step and one soft update, once the buffer
    /// holds a full mini-batch. Returns `None` during warm-up.
    pub fn learn<R: RngCore>(&mut self, rng: &mut R) -> Result<Option<UpdateStats>> {
        if self.buffer.len() < self.hp.batch_size {
            return Ok(None);
        }
        let batch = Batch::new(&self.buffer.sample(self.hp.batch_size, rng)?);
        let targets = td_targets(&batch, &self.nets.actor_target, &self.nets.critic_target, self.hp.gamma)?;
        let critic_loss = critic_update(
            &mut self.nets.critic,
            &mut self.critic_opt,
            &batch,
            &targets,
            Pass::Train(rng),
        )?;
        let actor_objective = actor_update(
            &mut self.nets.actor,
            &mut self.actor_opt,
            &self.nets.critic,
            batch.obs.view(),
            Pass::Train(rng),
        )?;
        self.nets.soft_update_targets(self.hp.tau)?;
        self.updates += 1;
        Ok(Some(UpdateStats {
            critic_loss,
            actor_objective,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Line,
    Circle,
}

/// Draws training and evaluation scenarios: the pursuer starts at a fixed
/// pose and the target's start (line) or circle centre (circle) is uniform
/// in a square box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSampler {
    pub kind: TargetKind,
    /// Half side of the sampling box centred on the origin.
    pub half_width: f64,
    pub line_velocity: [f64; 2],
    pub circle_radius: f64,
    pub circle_omega: f64,
    pub start: CarState,
}

impl Default for ScenarioSampler {
    fn default() -> Self {
        Self {
            kind: TargetKind::Line,
            half_width: 3.0,
            line_velocity: [0.5, 0.5],
            circle_radius: 1.0,
            circle_omega: 1.0,
            start: CarState::start(),
        }
    }
}

impl ScenarioSampler {
    pub fn line() -> Self {
        Self::default()
    }

    pub fn circle() -> Self {
        Self {
            kind: TargetKind::Circle,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) {
            return Err(invalid("half_width", "must be positive"));
        }
        if self.kind == TargetKind::Circle && !(self.circle_radius > 0.0) {
            return Err(invalid("circle_radius", "must be positive"));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TargetTrajectory {
        let h = self.half_width;
        let x = rng.random_range(-h..h);
        let y = rng.random_range(-h..h);
        match self.kind {
            TargetKind::Line => TargetTrajectory::line(self.line_velocity[0], self.line_velocity[1], x, y),
            TargetKind::Circle => TargetTrajectory::Circle {
                radius: self.circle_radius,
                omega: self.circle_omega,
                phase: rng.random_range(0.0..TAU),
                cx: x,
                cy: y,
            },
        }
    }

    /// A scenario whose target starts strictly outside the interception radius.
    pub fn sample<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> TargetTrajectory {
        loop {
            let traj = self.draw(rng);
            if env::distance(self.start.position(), traj.position(0.0)) > delta {
                return traj;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hyperparams: Hyperparams,
    pub env: EpisodeConfig,
    pub noise: NoiseConfig,
    pub arch: ArchConfig,
    pub sampler: ScenarioSampler,
}

impl TrainConfig {
    /// Episode settings used during training: δ from `env`, step length and
    /// budget from the hyperparameters.
    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            delta: self.env.delta,
            dt: self.hyperparams.dt,
            max_steps: self.hyperparams.steps_per_episode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.episode_config().validate()?;
        self.arch.validate()?;
        self.sampler.validate()
    }
}

/// Per-episode training summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// 1-based.
    pub episode: usize,
    pub total_reward: f64,
    pub mean_reward: f64,
    /// Mean over the episode's gradient steps; NaN when none happened.
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub steps: usize,
    pub intercepted: bool,
}

pub struct TrainOutcome {
    pub nets: AgentNets,
    pub metrics: Vec<EpisodeMetrics>,
    pub updates: u64,
}

/// Runs the full learning loop. `on_episode` sees each episode's metrics and
/// the networks right after it; returning an error aborts training.
pub fn train<R, F>(cfg: &TrainConfig, rng: &mut R, mut on_episode: F) -> Result<TrainOutcome>
where
    R: RngCore,
    F: FnMut(&EpisodeMetrics, &AgentNets) -> Result<()>,
{
    cfg.validate()?;
    let ep_cfg = cfg.episode_config();
    let mut agent = Ddpg::new(cfg.hyperparams.clone(), &cfg.arch, cfg.noise, rng)?;
    let mut metrics = Vec::with_capacity(cfg.hyperparams.episodes);
    for episode in 1..=cfg.hyperparams.episodes {
        let traj = cfg.sampler.sample(ep_cfg.delta, rng);
        let mut ep = Episode::new(cfg.sampler.start, traj, ep_cfg)?;
        agent.noise.reset();
        let mut total_reward = 0.0;
        let (mut closs, mut aobj, mut n_updates) = (0.0, 0.0, 0usize);
        while !ep.is_done() {
            let s = ep.obs;
            let a = select_action(&agent.nets.actor, &s, &mut agent.noise, true, rng)?;
            let out = ep.step(a)?;
            total_reward += out.reward;
            agent.buffer.push(Transition {
                s,
                a,
                r: out.reward,
                s_next: out.obs,
                terminal: out.intercepted(),
            });
            if let Some(stats) = agent.learn(rng)? {
                closs += stats.critic_loss;
                aobj += stats.actor_objective;
                n_updates += 1;
            }
        }
        let steps = ep.steps;
        let mean = |v: f64| if n_updates > 0 { v / n_updates as f64 } else { f64::NAN };
        let m = EpisodeMetrics {
            episode,
            total_reward,
            mean_reward: if steps > 0 { total_reward / steps as f64 } else { 0.0 },
            critic_loss: mean(closs),
            actor_objective: mean(aobj),
            steps,
            intercepted: ep.termination == Some(Termination::Intercepted),
        };
        on_episode(&m, &agent.nets)?;
        metrics.push(m);
    }
    let updates = agent.updates();
    Ok(TrainOutcome {
        nets: agent.nets,
        metrics,
        updates,
    })
}

/// A deterministic policy rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Samples at every control boundary, the start included.
    pub rows: Vec<TrajectoryRow>,
    pub controls: Vec<f64>,
    pub termination: Termination,
    pub interception_time: Option<f64>,
    pub final_distance: f64,
}

impl Rollout {
    pub fn intercepted(&self) -> bool {
        self.termination == Termination::Intercepted
    }

    pub fn steps(&self) -> usize {
        self.controls.len()
    }
}

/// Rolls the actor out without noise until interception or budget exhaustion.
pub fn evaluate(
    actor: &Network,
    traj: &TargetTrajectory,
    start: CarState,
    cfg: &EpisodeConfig,
) -> Result<Rollout> {
    let mut ep = Episode::new(start, *traj, *cfg)?;
    let mut rows = vec![TrajectoryRow::new(0.0, start, 0.0, traj.position(0.0))];
    let mut controls = Vec::new();
    while !ep.is_done() {
        let u = clip_action(policy(actor, &ep.obs)?);
        let out = ep.step(u)?;
        rows.last_mut().expect("non-empty").u = u;
        controls.push(u);
        rows.push(TrajectoryRow::new(out.t, out.state, 0.0, out.target_pos));
    }
    let termination = ep.termination.expect("finished episode");
    let last = rows.last().expect("non-empty");
    Ok(Rollout {
        final_distance: last.l,
        interception_time: (termination == Termination::Intercepted).then_some(last.t),
        termination,
        controls,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_arch() -> ArchConfig {
        ArchConfig {
            actor_hidden: vec![8, 8],
            critic_state: vec![4, 4],
            critic_action: vec![4],
            critic_trunk: vec![4, 4],
            ..Default::default()
        }
    }

    fn obs(l: f64, omega: f64, theta: f64) -> Observation {
        Observation { l, omega, theta }
    }

    fn transition(r: f64, terminal: bool) -> Transition {
        Transition {
            s: obs(1.0, 0.1, 0.2),
            a: 0.3,
            r,
            s_next: obs(0.9, 0.0, 0.1),
            terminal,
        }
    }

    fn zero_last(net: &mut Network) {
        let last = net.layers.last_mut().unwrap();
        last.weights.fill(0.0);
        last.biases.fill(0.0);
    }

    /// Ignores its input: `Q ≡ value`.
    struct ConstQ(f64);

    impl QFunction for ConstQ {
        fn q_values(&self, obs: ArrayView2<'_, f64>, _: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
            Ok(Array1::from_elem(obs.nrows(), self.0))
        }
        fn q_and_action_grad(
            &self,
            obs: ArrayView2<'_, f64>,
            act: ArrayView2<'_, f64>,
            _: Pass<'_>,
        ) -> Result<(Array1<f64>, Array1<f64>)> {
            Ok((self.q_values(obs, act)?, Array1::zeros(obs.nrows())))
        }
    }

    /// `Q = −(a − 0.5)²`.
    struct QuadraticQ;

    impl QFunction for QuadraticQ {
        fn q_values(&self, _: ArrayView2<'_, f64>, act: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
            Ok(act.column(0).mapv(|a| -(a - 0.5) * (a - 0.5)))
        }
        fn q_and_action_grad(
            &self,
            obs: ArrayView2<'_, f64>,
            act: ArrayView2<'_, f64>,
            _: Pass<'_>,
        ) -> Result<(Array1<f64>, Array1<f64>)> {
            Ok((self.q_values(obs, act)?, act.column(0).mapv(|a| -2.0 * (a - 0.5))))
        }
    }

    #[test]
    fn actor_shape_and_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = build_actor(&ArchConfig::default(), &mut rng).unwrap();
        assert_eq!(actor.param_count(), (3 * 256 + 256) + 3 * (256 * 256 + 256) + (256 + 1));
        assert_eq!(actor.param_count(), 198_657);
        for o in [obs(0.1, 0.0, 0.0), obs(5.0, -3.0, 3.0), obs(100.0, 50.0, -3.1)] {
            let a = policy(&actor, &o).unwrap();
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn zeroed_actor_output_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut actor = build_actor(&toy_arch(), &mut rng).unwrap();
        zero_last(&mut actor);
        assert_eq!(policy(&actor, &obs(2.0, 0.3, -1.0)).unwrap(), 0.0);
    }

    #[test]
    fn critic_shape_and_zeroed_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut critic = build_critic(&ArchConfig::default(), &mut rng).unwrap();
        assert_eq!(critic.trunk.input_dim(), 64);
        let o = array![[1.0, 0.2, -0.5], [2.0, 0.0, 1.0]];
        let a = array![[0.3], [-0.9]];
        assert_eq!(critic.predict(o.view(), a.view()).unwrap().len(), 2);
        zero_last(&mut critic.trunk);
        assert!(critic.predict(o.view(), a.view()).unwrap().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn targets_start_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nets = AgentNets::new(&toy_arch(), &mut rng).unwrap();
        assert_eq!(nets.actor, nets.actor_target);
        assert_eq!(nets.critic, nets.critic_target);
    }

    #[test]
    fn ou_deterministic_decay() {
        let mut noise = OuNoise::new(
            NoiseConfig {
                theta: 0.15,
                sigma: 0.0,
                mu: 0.0,
            },
            0.1,
        );
        noise.eta = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut expected = 1.0;
        for _ in 0..10 {
            expected *= 1.0 - 0.15 * 0.1;
            assert!((noise.step(&mut rng) - expected).abs() < 1e-15);
        }
        noise.reset();
        assert_eq!(noise.eta, 0.0);
    }

    #[test]
    fn ou_random_walk_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut increments = Vec::with_capacity(n);
        let mut noise = OuNoise::new(
            NoiseConfig {
                theta: 0.0,
                sigma: 0.3,
                mu: 0.0,
            },
            0.1,
        );
        for _ in 0..n {
            let before = noise.eta;
            increments.push(noise.step(&mut rng) - before);
        }
        let var = increments.iter().map(|d| d * d).sum::<f64>() / n as f64;
        assert!((var / (0.09 * 0.1) - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn action_selection_clips() {
        let mut actor = Network::new(vec![DenseLayer::zeros(3, 1, Activation::Tanh)]).unwrap();
        let frozen = NoiseConfig {
            theta: 0.0,
            sigma: 0.0,
            mu: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = obs(1.0, 0.0, 0.5);

        actor.layers[0].biases[0] = 0.9f64.atanh();
        let mut noise = OuNoise::new(frozen, 0.1);
        noise.eta = 0.5;
        assert_eq!(select_action(&actor, &o, &mut noise, true, &mut rng).unwrap(), 1.0);

        actor.layers[0].biases[0] = (-0.3f64).atanh();
        noise.eta = 0.1;
        let a = select_action(&actor, &o, &mut noise, true, &mut rng).unwrap();
        assert!((a + 0.2).abs() < 1e-12);

        let mu = policy(&actor, &o).unwrap();
        assert_eq!(select_action(&actor, &o, &mut noise, false, &mut rng).unwrap(), mu);
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for r in 0..4 {
            buf.push(transition(r as f64, false));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.iter().map(|t| t.r).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0]);
        assert_eq!(buf.inserted(), 4);
    }

    #[test]
    fn buffer_sampling() {
        let mut buf = ReplayBuffer::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        buf.push(transition(1.0, false));
        assert!(matches!(
            buf.sample(2, &mut rng),
            Err(AgentError::BufferUnderfilled { requested: 2, available: 1 })
        ));
        buf.push(transition(2.0, true));
        let batch = buf.sample(2, &mut rng).unwrap();
        assert!(batch.iter().all(|t| t.r == 1.0 || t.r == 2.0));
    }

    #[test]
    fn td_target_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nets = AgentNets::new(&toy_arch(), &mut rng).unwrap();
        let batch = Batch::new(&[transition(-2.0, false), transition(0.5, true)]);

        let y = td_targets(&batch, &nets.actor_target, &ConstQ(1.5), 0.98).unwrap();
        assert!((y[0] + 0.53).abs() < 1e-12);
        assert_eq!(y[1], 0.5);

        let y0 = td_targets(&batch, &nets.actor_target, &nets.critic_target, 0.0).unwrap();
        assert_eq!(y0, array![-2.0, 0.5]);

        let far = td_targets(&batch, &nets.actor_target, &ConstQ(1e6), 0.98).unwrap();
        assert_eq!(far[1], 0.5);
    }

    #[test]
    fn critic_loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut critic = build_critic(&toy_arch(), &mut rng).unwrap();
        zero_last(&mut critic.trunk);
        let o = array![[1.0, 0.0, 0.5]];
        let a = array![[0.2]];
        let (_, loss) = critic_gradients(&critic, o.view(), a.view(), &array![1.0], Pass::Eval).unwrap();
        assert_eq!(loss, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let critic = build_critic(&toy_arch(), &mut rng).unwrap();
        let o = array![[1.0, 0.0, 0.5], [0.3, -0.2, 2.0]];
        let a = array![[0.2], [-0.7]];
        let y = critic.predict(o.view(), a.view()).unwrap();
        let (g, loss) = critic_gradients(&critic, o.view(), a.view(), &y, Pass::Eval).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_critic_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let actor = build_actor(&toy_arch(), &mut rng).unwrap();
        let mut critic = build_critic(&toy_arch(), &mut rng).unwrap();
        zero_last(&mut critic.trunk);
        let o = array![[1.0, 0.1, 0.2], [2.0, -0.3, -1.0]];
        let (g, q) = actor_gradients(&actor, &critic, o.view(), Pass::Eval).unwrap();
        assert_eq!(q, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn quadratic_critic_drives_policy_to_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut actor = build_actor(&toy_arch(), &mut rng).unwrap();
        let mut opt = AdamState::new(&actor, 1e-2);
        let o = Array2::from_shape_fn((16, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        for _ in 0..500 {
            actor_update(&mut actor, &mut opt, &QuadraticQ, o.view(), Pass::Eval).unwrap();
        }
        let a = actor.predict(o.view()).unwrap();
        assert!(a.iter().all(|&v| (v - 0.5).abs() < 1e-2), "{a}");
    }

    #[test]
    fn learn_waits_for_a_full_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hp = Hyperparams {
            batch_size: 4,
            buffer_capacity: 10,
            ..Default::default()
        };
        let mut agent = Ddpg::new(hp, &toy_arch(), NoiseConfig::default(), &mut rng).unwrap();
        for i in 0..3 {
            agent.buffer.push(transition(i as f64, false));
            assert!(agent.learn(&mut rng).unwrap().is_none());
        }
        let before = agent.nets.clone();
        agent.buffer.push(transition(3.0, false));
        assert!(agent.learn(&mut rng).unwrap().is_some());
        assert_ne!(agent.nets.critic, before.critic);
        assert_ne!(agent.nets.actor, before.actor);
        assert_eq!(agent.updates(), 1);
    }

    #[test]
    fn sampler_respects_box_and_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for sampler in [ScenarioSampler::line(), ScenarioSampler::circle()] {
            for _ in 0..1000 {
                let traj = sampler.sample(0.2, &mut rng);
                let p = traj.position(0.0);
                assert!(env::distance([0.0, 0.0], p) > 0.2);
                match traj {
                    TargetTrajectory::Line { x0, y0, vx, vy } => {
                        assert!(x0.abs() <= 3.0 && y0.abs() <= 3.0);
                        assert_eq!((vx, vy), (0.5, 0.5));
                    }
                    TargetTrajectory::Circle { cx, cy, radius, omega, .. } => {
                        assert!(cx.abs() <= 3.0 && cy.abs() <= 3.0);
                        assert_eq!((radius, omega), (1.0, 1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let bad = Hyperparams {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(AgentError::InvalidParameter { field: "gamma", .. })));
        let bad = Hyperparams {
            batch_size: 20_000,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
