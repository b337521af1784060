//! Deep Q-learning over the dispatch process.
//!
//! One epoch is one simulated day drawn from the training pool. Actions are
//! epsilon-greedy over the feasible set, transitions go to a replay buffer and
//! each decision triggers one minibatch step once the buffer holds a batch.
//! Targets use a periodically synced copy of the online network, maximizing
//! only over actions feasible in the stored next state, and the process is
//! undiscounted.

use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{train_batch, Adam, AdamConfig, Mlp, MlpError, Sample, Scratch};
use crate::env::{Action, ActionMask, DispatchState, EnvError, Episode, RewardSpec, MAX_FLEET};
use crate::eval;
use crate::features::{dimension, featurize_into};
use crate::math;
use crate::policies::Policy;
use crate::world::{Geography, RequestInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub fleet_size: usize,
    pub reward: RewardSpec,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the epochs after which exploration reaches `epsilon_end`.
    pub epsilon_decay_fraction: f64,
    /// Epochs between checkpoints; zero picks one hundredth of the run.
    pub checkpoint_every: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, fleet_size: usize, reward: RewardSpec) -> Self {
        Self {
            epochs,
            fleet_size,
            reward,
            hidden: alloc::vec![50, 50],
            buffer_capacity: 50_000,
            batch_size: 32,
            target_sync: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.9,
            checkpoint_every: 0,
            optimizer: AdamConfig::default(),
            seed: 0,
        }
    }

    pub fn checkpoint_interval(&self) -> usize {
        if self.checkpoint_every > 0 {
            self.checkpoint_every
        } else {
            (self.epochs / 100).max(1)
        }
    }

    /// Layer sizes of the Q-network for `num_regions` regions.
    pub fn layer_sizes(&self, num_regions: usize) -> Vec<usize> {
        let mut sizes = alloc::vec![dimension(num_regions, self.fleet_size)];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.fleet_size + 1);
        sizes
    }

    pub fn validate(&self, num_regions: usize) -> Result<(), TrainError> {
        let bad = |what| Err(TrainError::Config(what));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.fleet_size == 0 || self.fleet_size > MAX_FLEET {
            return Err(TrainError::Env(EnvError::FleetSize(self.fleet_size)));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer must hold at least one positive-size batch");
        }
        if self.target_sync == 0 {
            return bad("target sync interval must be positive");
        }
        if !(0.0 < self.epsilon_end && self.epsilon_end <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return bad("exploration must satisfy 0 < end <= start <= 1");
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon decay fraction must lie in (0, 1]");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        self.reward.validate(num_regions)?;
        Ok(())
    }
}

/// Exploration rate for 0-based `epoch`: exponential decay from the start
/// value that reaches the floor after the decay fraction of all epochs.
pub fn epsilon(epoch: usize, config: &TrainConfig) -> f64 {
    let horizon = config.epsilon_decay_fraction * config.epochs as f64;
    let rate = math::ln(config.epsilon_start / config.epsilon_end) / horizon;
    (config.epsilon_start * math::exp(-(epoch as f64) * rate)).max(config.epsilon_end)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("training pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize },
}

/// Stored transition. `next` is `None` at the end of the day.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Option<Vec<f64>>,
    /// Feasible actions in the next state.
    pub next_mask: ActionMask,
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Experience>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, head: 0 }
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

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.head] = e;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// `n` distinct entries chosen uniformly, or `None` if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Option<Vec<&Experience>> {
        if n > self.items.len() {
            return None;
        }
        Some(index::sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }
}

/// Highest-valued feasible action. Ties go to the lowest vehicle index, and
/// rejection wins only when strictly better than every feasible assignment.
pub fn greedy_action(q: &[f64], mask: ActionMask) -> Action {
    let mut best: Option<(usize, f64)> = None;
    for i in (1..q.len()).chain(core::iter::once(0)) {
        if mask.contains(i) && best.is_none_or(|(_, b)| q[i] > b) {
            best = Some((i, q[i]));
        }
    }
    best.map_or(Action::Reject, |(i, _)| Action::from_index(i))
}

fn max_masked(q: &[f64], mask: ActionMask) -> f64 {
    mask.iter().filter(|&i| i < q.len()).map(|i| q[i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Greedy policy over a trained Q-network.
#[derive(Debug, Clone)]
pub struct QPolicy {
    net: Mlp,
    x: Vec<f64>,
    scratch: Scratch,
}

impl QPolicy {
    pub fn new(net: Mlp) -> Self {
        Self { net, x: Vec::new(), scratch: Scratch::default() }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn q_values(&mut self, state: &DispatchState, geo: &Geography) -> Result<Vec<f64>, MlpError> {
        featurize_into(state, geo, &mut self.x);
        Ok(self.net.predict(&self.x, &mut self.scratch)?.to_vec())
    }
}

impl Policy for QPolicy {
    /// # Panics
    /// If the network's input width does not match the state features.
    fn decide(&mut self, state: &DispatchState, geo: &Geography) -> Action {
        featurize_into(state, geo, &mut self.x);
        let q = self.net.predict(&self.x, &mut self.scratch).expect("network matches feature layout");
        greedy_action(q, state.action_mask())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub r_total: f64,
    pub r_min: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Number of finished epochs.
    pub epoch: usize,
    pub net: Mlp,
    /// Greedy evaluation on the held-out pool, if one was given.
    pub eval: Option<CheckpointEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub epsilon: f64,
    /// Mean minibatch loss over the epoch, `None` before the first step.
    pub loss: Option<f64>,
    pub eval_r_total: Option<f64>,
    pub eval_r_min: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<LogRow>,
    pub gradient_steps: u64,
}

impl TrainOutcome {
    pub fn final_net(&self) -> &Mlp {
        &self.checkpoints.last().expect("training always writes a final checkpoint").net
    }
}

/// Trains a Q-network on days drawn with replacement from `pool`. At every
/// checkpoint the current network is evaluated greedily on `eval_pool`
/// (skipped when it is empty). `on_epoch` sees each log row as it is written.
pub fn train(
    config: &TrainConfig,
    geo: &Geography,
    pool: &[RequestInstance],
    eval_pool: &[RequestInstance],
    mut on_epoch: impl FnMut(&LogRow),
) -> Result<TrainOutcome, TrainError> {
    config.validate(geo.num_regions())?;
    if pool.is_empty() {
        return Err(TrainError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizes = config.layer_sizes(geo.num_regions());
    let mut online = Mlp::new(&sizes, rng.random())?;
    let mut target = online.clone();
    let mut opt = Adam::new(config.optimizer, online.num_params());
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut scratch = Scratch::default();
    let mut target_scratch = Scratch::default();
    let mut x = Vec::new();
    let mut targets = Vec::with_capacity(config.batch_size);
    let mut steps: u64 = 0;
    let interval = config.checkpoint_interval();
    let mut checkpoints = Vec::new();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let eps = epsilon(epoch, config);
        let inst = &pool[rng.random_range(0..pool.len())];
        let mut episode = Episode::reset(geo, inst, config.fleet_size, config.reward.clone())?;
        let (mut loss_sum, mut loss_n) = (0.0, 0u32);

        while let Some(state) = episode.state() {
            featurize_into(state, geo, &mut x);
            let mask = state.action_mask();
            let action = if rng.random::<f64>() < eps {
                let feasible: Vec<usize> = mask.iter().collect();
                Action::from_index(feasible[rng.random_range(0..feasible.len())])
            } else {
                greedy_action(online.predict(&x, &mut scratch)?, mask)
            };
            let reward = episode.step(action)?;
            let (next, next_mask) = match episode.state() {
                Some(s) => {
                    let mut nx = Vec::with_capacity(x.len());
                    featurize_into(s, geo, &mut nx);
                    (Some(nx), s.action_mask())
                }
                None => (None, ActionMask::default()),
            };
            buffer.push(Experience { state: x.clone(), action: action.index(), reward, next, next_mask });

            if let Some(batch) = buffer.sample(&mut rng, config.batch_size) {
                targets.clear();
                for e in &batch {
                    let future = match &e.next {
                        Some(nx) => max_masked(target.predict(nx, &mut target_scratch)?, e.next_mask),
                        None => 0.0,
                    };
                    targets.push(e.reward + future);
                }
                let samples: Vec<Sample<'_>> = batch
                    .iter()
                    .zip(&targets)
                    .map(|(e, &t)| Sample { x: &e.state, action: e.action, target: t })
                    .collect();
                let loss = match train_batch(&mut online, &mut opt, &samples, &mut scratch) {
                    Err(MlpError::Divergence(_)) => return Err(TrainError::Divergence { epoch: epoch + 1 }),
                    r => r?,
                };
                loss_sum += loss;
                loss_n += 1;
                steps += 1;
                if steps.is_multiple_of(config.target_sync as u64) {
                    target.params_mut().copy_from_slice(online.params());
                }
            }
        }

        let done = epoch + 1;
        let mut row = LogRow {
            epoch: done,
            epsilon: eps,
            loss: (loss_n > 0).then(|| loss_sum / f64::from(loss_n)),
            eval_r_total: None,
            eval_r_min: None,
        };
        if done % interval == 0 || done == config.epochs {
            let ev = if eval_pool.is_empty() {
                None
            } else {
                let mut policy = QPolicy::new(online.clone());
                let r = eval::evaluate(&mut policy, geo, eval_pool, config.fleet_size)?;
                row.eval_r_total = Some(r.r_total);
                row.eval_r_min = Some(r.r_min);
                Some(CheckpointEval { r_total: r.r_total, r_min: r.r_min })
            };
            checkpoints.push(Checkpoint { epoch: done, net: online.clone(), eval: ev });
        }
        on_epoch(&row);
        log.push(row);
    }
    Ok(TrainOutcome { checkpoints, log, gradient_steps: steps })
}
