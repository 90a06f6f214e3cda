//! SARSA(lambda) with replacing traces over a sparse tabular Q-function.
//!
//! States are discretized by flooring each normalized score onto a fixed
//! bin grid and pairing the bin vector with the step index. Q-values live
//! in a slot arena indexed through a hash map so eligibility-trace sweeps
//! touch plain vector slots instead of rehashing keys.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::StrongSequence;
use crate::dataset::LabeledDataset;
use crate::exec::{map_indexed, Parallelism};
use crate::mdp::{self, Action, EpisodeTrace, MdpError, MdpState, RewardSpec};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("policy file error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Discretized state: step index plus per-class score bins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub step: u32,
    pub bins: Vec<i32>,
}

/// Sparse action-value table over discretized states. Absent entries read
/// as the default value 0.
#[derive(Debug, Clone)]
pub struct QStore {
    bin_width: f64,
    index: HashMap<StateKey, u32>,
    values: Vec<[f64; 3]>,
    keys: Vec<StateKey>,
}

impl QStore {
    pub fn new(bin_width: f64) -> Self {
        assert!(bin_width > 0.0, "bin width must be positive");
        QStore {
            bin_width,
            index: HashMap::new(),
            values: Vec::new(),
            keys: Vec::new(),
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quantization key of a state: floor(score / bin_width) per class.
    pub fn key_of(&self, state: &MdpState) -> StateKey {
        StateKey {
            step: state.step as u32,
            bins: state
                .scores
                .iter()
                .map(|&s| (s / self.bin_width).floor() as i32)
                .collect(),
        }
    }

    pub fn get(&self, state: &MdpState, action: Action) -> f64 {
        let key = self.key_of(state);
        match self.index.get(&key) {
            Some(&slot) => self.values[slot as usize][action.index()],
            None => 0.0,
        }
    }

    /// Slot of `key`, allocating a zeroed entry on first sight.
    fn slot(&mut self, key: StateKey) -> u32 {
        if let Some(&slot) = self.index.get(&key) {
            return slot;
        }
        let slot = self.values.len() as u32;
        self.values.push([0.0; 3]);
        self.index.insert(key.clone(), slot);
        self.keys.push(key);
        slot
    }

    fn value(&self, slot: u32, action: Action) -> f64 {
        self.values[slot as usize][action.index()]
    }

    /// Greedy legal action: argmax Q with ties broken EVAL > SKIP > QUIT;
    /// at the horizon only QUIT is legal.
    pub fn greedy_action(&self, state: &MdpState, n: usize) -> Action {
        if state.step >= n {
            return Action::Quit;
        }
        let q = match self.index.get(&self.key_of(state)) {
            Some(&slot) => self.values[slot as usize],
            None => [0.0; 3],
        };
        let mut best = Action::Eval;
        for action in [Action::Skip, Action::Quit] {
            if q[action.index()] > q[best.index()] {
                best = action;
            }
        }
        best
    }

    fn sorted_entries(&self) -> Vec<PolicyEntry> {
        let mut entries: Vec<PolicyEntry> = self
            .keys
            .iter()
            .zip(&self.values)
            .map(|(key, q)| PolicyEntry {
                step: key.step,
                key: key.bins.clone(),
                q: *q,
            })
            .collect();
        entries.sort_by(|a, b| (a.step, &a.key).cmp(&(b.step, &b.key)));
        entries
    }

    fn from_entries(
        bin_width: f64,
        tie_break: &str,
        entries: Vec<PolicyEntry>,
    ) -> Result<Self, PolicyError> {
        if tie_break != TIE_BREAK_RULE {
            return Err(PolicyError::Format(format!(
                "unsupported tie-break rule {:?}",
                tie_break
            )));
        }
        if !bin_width.is_finite() || bin_width <= 0.0 {
            return Err(PolicyError::Format("bin_width must be positive".into()));
        }
        let mut q = QStore::new(bin_width);
        for entry in entries {
            let slot = q.slot(StateKey {
                step: entry.step,
                bins: entry.key,
            });
            q.values[slot as usize] = entry.q;
        }
        Ok(q)
    }
}

/// Identifier of the greedy tie-break order baked into this crate.
pub const TIE_BREAK_RULE: &str = "eval>skip>quit";

#[derive(Serialize, Deserialize)]
struct PolicyEntry {
    step: u32,
    key: Vec<i32>,
    /// Q-values ordered [EVAL, SKIP, QUIT].
    q: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    objective: f64,
    episode: u64,
    bin_width: f64,
    tie_break: String,
    entries: Vec<PolicyEntry>,
}

/// Eligibility traces with replacing semantics: a visit sets the trace to
/// 1 regardless of its prior value. Entries decayed below the purge
/// threshold are dropped.
#[derive(Debug, Clone)]
pub struct TraceStore {
    lambda: f64,
    purge_threshold: f64,
    entries: Vec<(u32, Action, f64)>,
}

impl TraceStore {
    pub fn new(lambda: f64) -> Self {
        Self::with_purge(lambda, 1e-4)
    }

    pub fn with_purge(lambda: f64, purge_threshold: f64) -> Self {
        assert!((0.0..=1.0).contains(&lambda));
        TraceStore {
            lambda,
            purge_threshold,
            entries: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn visit(&mut self, slot: u32, action: Action) {
        for entry in &mut self.entries {
            if entry.0 == slot && entry.1 == action {
                entry.2 = 1.0;
                return;
            }
        }
        self.entries.push((slot, action, 1.0));
    }

    pub fn get(&self, slot: u32, action: Action) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == slot && e.1 == action)
            .map_or(0.0, |e| e.2)
    }

    fn apply_delta(&self, q: &mut QStore, eta_delta: f64) {
        for &(slot, action, e) in &self.entries {
            q.values[slot as usize][action.index()] += eta_delta * e;
        }
    }

    fn decay(&mut self) {
        let lambda = self.lambda;
        let purge = self.purge_threshold;
        for entry in &mut self.entries {
            entry.2 *= lambda;
        }
        self.entries.retain(|e| e.2 >= purge);
    }
}

/// SARSA(lambda) hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LearnerConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epsilon0: f64,
    pub episodes_total: u64,
    pub eval_every: u64,
    pub bin_width: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            lambda: 0.95,
            learning_rate: 0.2,
            epsilon0: 0.3,
            episodes_total: 1_000_000,
            eval_every: 10_000,
            bin_width: 0.05,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PolicyError::Format("lambda must lie in [0, 1]".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(PolicyError::Format("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(PolicyError::Format("epsilon0 must lie in [0, 1]".into()));
        }
        if self.episodes_total == 0 || self.eval_every == 0 {
            return Err(PolicyError::Format("episode counts must be >= 1".into()));
        }
        if !self.bin_width.is_finite() || self.bin_width <= 0.0 {
            return Err(PolicyError::Format("bin width must be positive".into()));
        }
        Ok(())
    }
}

/// Exploration schedule: epsilon0 / ceil(tau / 10000) for episode tau >= 1.
pub fn epsilon_schedule(tau: u64, epsilon0: f64) -> f64 {
    epsilon0 / tau.div_ceil(10_000) as f64
}

/// One on-policy SARSA(lambda) episode on instance `x`. `choose` supplies
/// the behavior action at every non-horizon state (epsilon-greedy during
/// training, scripted in tests); at the horizon QUIT is forced.
#[allow(clippy::too_many_arguments)]
pub fn sarsa_episode<F>(
    q: &mut QStore,
    traces: &mut TraceStore,
    x: &[f64],
    label: u32,
    h: &StrongSequence,
    spec: &RewardSpec,
    learning_rate: f64,
    mut choose: F,
) -> Result<(), PolicyError>
where
    F: FnMut(&QStore, &MdpState) -> Action,
{
    let n = h.len();
    let mut state = MdpState::initial(h.k);
    let mut action = if n == 0 { Action::Quit } else { choose(q, &state) };
    loop {
        let slot = q.slot(q.key_of(&state));
        let q_sa = q.value(slot, action);
        let (next, reward) = mdp::step(state, action, x, label, h, spec)?;
        let (next_action, q_next) = if next.terminal {
            (None, 0.0)
        } else {
            let a = if next.step >= n {
                Action::Quit
            } else {
                choose(q, &next)
            };
            (Some(a), q.get(&next, a))
        };
        let delta = reward + q_next - q_sa;
        traces.visit(slot, action);
        traces.apply_delta(q, learning_rate * delta);
        traces.decay();
        match next_action {
            Some(a) => {
                state = next;
                action = a;
            }
            None => return Ok(()),
        }
    }
}

/// Frozen greedy policy plus the training objective it was selected on.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub q: QStore,
    /// Empirical objective (mean loss + beta * mean evaluations) on the
    /// training set at selection time.
    pub objective: f64,
    /// Episode count at which the snapshot was taken.
    pub episode: u64,
}

impl PolicySnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PolicyFile {
            objective: self.objective,
            episode: self.episode,
            bin_width: self.q.bin_width,
            tie_break: TIE_BREAK_RULE.to_string(),
            entries: self.q.sorted_entries(),
        })
        .expect("policy serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let file: PolicyFile = serde_json::from_str(text)?;
        Ok(PolicySnapshot {
            q: QStore::from_entries(file.bin_width, &file.tie_break, file.entries)?,
            objective: file.objective,
            episode: file.episode,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), PolicyError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PolicyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Greedy rollout of a frozen policy on one instance.
pub fn apply_policy(
    q: &QStore,
    h: &StrongSequence,
    instance: usize,
    x: &[f64],
    label: u32,
    spec: &RewardSpec,
) -> EpisodeTrace {
    let n = h.len();
    run_greedy(q, h, instance, x, label, spec, n)
}

fn run_greedy(
    q: &QStore,
    h: &StrongSequence,
    instance: usize,
    x: &[f64],
    label: u32,
    spec: &RewardSpec,
    n: usize,
) -> EpisodeTrace {
    mdp::run_episode(instance, x, label, h, spec, |s| q.greedy_action(s, n))
        .expect("greedy actions are always legal")
}

/// Greedy rollouts over a whole dataset, in row order.
pub fn rollout_dataset(
    q: &QStore,
    h: &StrongSequence,
    data: &LabeledDataset,
    spec: &RewardSpec,
    par: Parallelism,
) -> Vec<EpisodeTrace> {
    map_indexed(par, data.n(), |i| {
        apply_policy(q, h, i, data.row(i), data.label(i), spec)
    })
}

/// Empirical trade-off objective of the greedy policy on `data`:
/// mean over instances of loss + beta * evaluated-classifier count.
pub fn greedy_objective(
    q: &QStore,
    h: &StrongSequence,
    data: &LabeledDataset,
    spec: &RewardSpec,
    par: Parallelism,
) -> f64 {
    let per_instance = map_indexed(par, data.n(), |i| {
        let trace = apply_policy(q, h, i, data.row(i), data.label(i), spec);
        let loss = spec.loss_of(&trace.final_scores, h.alpha_sum, trace.label);
        loss + spec.beta * trace.eval_count() as f64
    });
    per_instance.iter().sum::<f64>() / data.n() as f64
}

/// Progress report emitted at each policy checkpoint.
pub struct Checkpoint {
    pub episode: u64,
    pub objective: f64,
    pub epsilon: f64,
    pub q_states: usize,
    pub is_best: bool,
}

/// Trains SARSA(lambda) for `cfg.episodes_total` episodes, each on a
/// uniformly drawn training instance, checkpointing the greedy policy
/// every `cfg.eval_every` episodes and returning the snapshot with the
/// smallest training objective. Deterministic given `cfg.seed`.
pub fn train(
    data: &LabeledDataset,
    h: &StrongSequence,
    spec: &RewardSpec,
    cfg: &LearnerConfig,
    par: Parallelism,
    mut on_checkpoint: impl FnMut(&Checkpoint),
) -> Result<PolicySnapshot, PolicyError> {
    cfg.validate()?;
    // Independent deterministic sub-streams for instance sampling and
    // exploration.
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(1);
    let mut explore_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    explore_rng.set_stream(2);

    let n_instances = data.n();
    let horizon = h.len();
    let mut q = QStore::new(cfg.bin_width);
    let mut traces = TraceStore::new(cfg.lambda);
    let mut best: Option<PolicySnapshot> = None;

    let mut tau: u64 = 0;
    while tau < cfg.episodes_total {
        tau += 1;
        let i = sample_rng.random_range(0..n_instances);
        let epsilon = epsilon_schedule(tau, cfg.epsilon0);
        traces.clear();
        sarsa_episode(
            &mut q,
            &mut traces,
            data.row(i),
            data.label(i),
            h,
            spec,
            cfg.learning_rate,
            |q, s| {
                if explore_rng.random::<f64>() < epsilon {
                    Action::ALL[explore_rng.random_range(0..3)]
                } else {
                    q.greedy_action(s, horizon)
                }
            },
        )?;

        if tau.is_multiple_of(cfg.eval_every) || tau == cfg.episodes_total {
            let objective = greedy_objective(&q, h, data, spec, par);
            let is_best = best.as_ref().is_none_or(|b| objective < b.objective);
            on_checkpoint(&Checkpoint {
                episode: tau,
                objective,
                epsilon,
                q_states: q.len(),
                is_best,
            });
            if is_best {
                best = Some(PolicySnapshot {
                    q: q.clone(),
                    objective,
                    episode: tau,
                });
            }
        }
    }
    Ok(best.expect("at least one checkpoint"))
}
