//! The episodic controller MDP: per instance, walk the ordered base
//! classifier list and EVAL, SKIP, or QUIT. EVAL costs a fixed beta, SKIP
//! is free, QUIT pays the negative classification loss of the ensemble
//! built so far and ends the episode.
//!
//! States carry alpha-normalized partial scores (range [-1, 1] per class)
//! plus the step index; losses in rewards are computed on unnormalized
//! scores so margins keep the boosting scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::StrongSequence;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("cannot step a terminal state")]
    Terminal,
    #[error("action {action:?} is illegal at step {step} (only QUIT once all classifiers are visited)")]
    IllegalAction { action: Action, step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Eval,
    Skip,
    Quit,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Eval, Action::Skip, Action::Quit];

    pub fn index(self) -> usize {
        match self {
            Action::Eval => 0,
            Action::Skip => 1,
            Action::Quit => 2,
        }
    }
}

/// Which loss the QUIT reward uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub loss: LossKind,
    /// Per-evaluation penalty; the accuracy/speed trade-off knob.
    pub beta: f64,
}

impl RewardSpec {
    pub fn new(loss: LossKind, beta: f64) -> Self {
        assert!(beta >= 0.0, "beta must be nonnegative");
        RewardSpec { loss, beta }
    }

    /// Loss of a normalized score vector, computed on the unnormalized
    /// scores (scores times alpha_sum).
    pub fn loss_of(&self, normalized_scores: &[f64], alpha_sum: f64, label: u32) -> f64 {
        let raw: Vec<f64> = normalized_scores.iter().map(|s| s * alpha_sum).collect();
        match self.loss {
            LossKind::ZeroOne => zero_one_loss(&raw, label),
            LossKind::Exponential => exp_loss(&raw, label),
        }
    }
}

/// Multi-class 0-1 loss: 1 when the true-class score does not strictly
/// exceed the best other class. A zero margin (including the all-zero
/// classifier) counts as a mistake; otherwise the empty classifier would
/// be a global optimum of the trade-off objective and training would
/// degenerate to quitting immediately.
pub fn zero_one_loss(scores: &[f64], label: u32) -> f64 {
    assert!(scores.len() >= 2, "K must be >= 2");
    let l = (label - 1) as usize;
    let best_other = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != l)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if scores[l] - best_other <= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Exponent cap applied before exponentiation.
pub const EXP_LOSS_CAP: f64 = 500.0;

/// Multi-class exponential loss exp(sum_{l' != l} f_l' - f_l), with the
/// exponent clamped at +500 to keep long losing streaks finite.
pub fn exp_loss(scores: &[f64], label: u32) -> f64 {
    assert!(scores.len() >= 2, "K must be >= 2");
    let l = (label - 1) as usize;
    let mut exponent = 0.0;
    for (i, &v) in scores.iter().enumerate() {
        if i == l {
            exponent -= v;
        } else {
            exponent += v;
        }
    }
    exponent.min(EXP_LOSS_CAP).exp()
}

/// MDP state: normalized partial score vector plus the 0-based step index
/// (the number of classifiers visited so far).
#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    pub scores: Vec<f64>,
    pub step: usize,
    pub terminal: bool,
}

impl MdpState {
    pub fn initial(k: usize) -> Self {
        MdpState {
            scores: vec![0.0; k],
            step: 0,
            terminal: false,
        }
    }
}

/// One transition. Consumes the state so EVAL/SKIP can advance in place.
pub fn step(
    mut state: MdpState,
    action: Action,
    x: &[f64],
    label: u32,
    h: &StrongSequence,
    spec: &RewardSpec,
) -> Result<(MdpState, f64), MdpError> {
    if state.terminal {
        return Err(MdpError::Terminal);
    }
    if state.step >= h.len() && action != Action::Quit {
        return Err(MdpError::IllegalAction {
            action,
            step: state.step,
        });
    }
    match action {
        Action::Eval => {
            h.stumps[state.step].accumulate(x, 1.0 / h.alpha_sum, &mut state.scores);
            state.step += 1;
            Ok((state, -spec.beta))
        }
        Action::Skip => {
            state.step += 1;
            Ok((state, 0.0))
        }
        Action::Quit => {
            let loss = spec.loss_of(&state.scores, h.alpha_sum, label);
            state.terminal = true;
            Ok((state, -loss))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Step index the action was taken at.
    pub step: usize,
    pub action: Action,
    pub reward: f64,
}

/// Record of one complete episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub instance: usize,
    pub label: u32,
    pub steps: Vec<StepRecord>,
    /// Evaluation indicator per base classifier.
    pub mask: Vec<bool>,
    /// Normalized scores at termination.
    pub final_scores: Vec<f64>,
}

impl EpisodeTrace {
    pub fn eval_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Sum of rewards in episode order.
    pub fn reward_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Predicted class (1-based): argmax of scores, ties to the lowest index.
    pub fn predicted_class(&self) -> u32 {
        let mut best = 0usize;
        for (i, &v) in self.final_scores.iter().enumerate() {
            if v > self.final_scores[best] {
                best = i;
            }
        }
        best as u32 + 1
    }

    /// Binary detection score f_1 (unnormalized).
    pub fn detection_score(&self, alpha_sum: f64) -> f64 {
        self.final_scores[0] * alpha_sum
    }

    /// Debug dump: one CSV line per step with the normalized scores held
    /// before the action was taken. Scores are replayed from the mask.
    pub fn to_csv(&self, x: &[f64], h: &StrongSequence) -> String {
        use std::fmt::Write as _;
        let k = self.final_scores.len();
        let mut out = String::from("step,action,reward");
        for l in 0..k {
            let _ = write!(out, ",score{}", l + 1);
        }
        out.push('\n');
        let mut scores = vec![0.0f64; k];
        for rec in &self.steps {
            let _ = write!(out, "{},{:?},{}", rec.step, rec.action, rec.reward);
            for s in &scores {
                let _ = write!(out, ",{}", s);
            }
            out.push('\n');
            if rec.action == Action::Eval {
                h.stumps[rec.step].accumulate(x, 1.0 / h.alpha_sum, &mut scores);
            }
        }
        out
    }
}

/// Runs one episode to termination. At step N the QUIT action is forced;
/// elsewhere `choose` picks the action.
pub fn run_episode<F>(
    instance: usize,
    x: &[f64],
    label: u32,
    h: &StrongSequence,
    spec: &RewardSpec,
    mut choose: F,
) -> Result<EpisodeTrace, MdpError>
where
    F: FnMut(&MdpState) -> Action,
{
    let n = h.len();
    let mut state = MdpState::initial(h.k);
    let mut steps = Vec::new();
    let mut mask = vec![false; n];
    while !state.terminal {
        let action = if state.step >= n {
            Action::Quit
        } else {
            choose(&state)
        };
        let at = state.step;
        let (next, reward) = step(state, action, x, label, h, spec)?;
        if action == Action::Eval {
            mask[at] = true;
        }
        steps.push(StepRecord {
            step: at,
            action,
            reward,
        });
        state = next;
    }
    Ok(EpisodeTrace {
        instance,
        label,
        final_scores: state.scores,
        steps,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::Stump;

    fn toy_sequence(alphas: &[f64]) -> StrongSequence {
        let stumps: Vec<Stump> = alphas
            .iter()
            .enumerate()
            .map(|(j, &alpha)| Stump {
                feature_index: 0,
                threshold: 0.0,
                votes: if j % 2 == 0 {
                    vec![1, -1]
                } else {
                    vec![-1, 1]
                },
                alpha,
            })
            .collect();
        let alpha_sum = stumps.iter().map(|s| s.alpha).sum();
        StrongSequence {
            k: 2,
            d: 1,
            alpha_sum,
            stumps,
        }
    }

    #[test]
    fn zero_one_loss_cases() {
        assert_eq!(zero_one_loss(&[0.3, -0.3], 1), 0.0);
        assert_eq!(zero_one_loss(&[0.1, 0.5, 0.2], 1), 1.0);
        // Zero margin counts as a mistake.
        assert_eq!(zero_one_loss(&[0.0, 0.0], 1), 1.0);
        assert_eq!(zero_one_loss(&[0.0, 0.0, 0.0], 3), 1.0);
    }

    #[test]
    fn exp_loss_cases() {
        assert!((exp_loss(&[0.5, -0.5], 1) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(exp_loss(&[0.0, 0.0], 2), 1.0);
        assert!((exp_loss(&[1.0, 0.0, 0.0], 1) - (-1.0f64).exp()).abs() < 1e-12);
        // Saturates instead of overflowing.
        assert!(exp_loss(&[-400.0, 400.0], 1).is_finite());
    }

    #[test]
    fn quit_at_zero_state() {
        let h = toy_sequence(&[1.0]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let state = MdpState::initial(2);
        let (next, reward) = step(state, Action::Quit, &[1.0], 1, &h, &spec).unwrap();
        assert!(next.terminal);
        // Zero scores carry no margin, so quitting immediately is a miss.
        assert_eq!(reward, -1.0);

        let spec = RewardSpec::new(LossKind::Exponential, 0.01);
        let (_, reward) = step(MdpState::initial(2), Action::Quit, &[1.0], 1, &h, &spec).unwrap();
        assert_eq!(reward, -1.0);
    }

    #[test]
    fn eval_reward_is_minus_beta() {
        let h = toy_sequence(&[1.0, 0.5]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let (next, reward) = step(MdpState::initial(2), Action::Eval, &[1.0], 1, &h, &spec).unwrap();
        assert_eq!(reward, -0.01);
        assert_eq!(next.step, 1);
        assert_eq!(next.scores, vec![1.0 / 1.5, -1.0 / 1.5]);
    }

    #[test]
    fn only_quit_at_horizon() {
        let h = toy_sequence(&[1.0]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.0);
        let (state, _) = step(MdpState::initial(2), Action::Skip, &[1.0], 1, &h, &spec).unwrap();
        assert!(matches!(
            step(state.clone(), Action::Eval, &[1.0], 1, &h, &spec),
            Err(MdpError::IllegalAction { .. })
        ));
        let (terminal, _) = step(state, Action::Quit, &[1.0], 1, &h, &spec).unwrap();
        assert!(matches!(
            step(terminal, Action::Quit, &[1.0], 1, &h, &spec),
            Err(MdpError::Terminal)
        ));
    }

    #[test]
    fn immediate_quit_trace() {
        let h = toy_sequence(&[1.0, 1.0, 1.0]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let trace = run_episode(0, &[1.0], 1, &h, &spec, |_| Action::Quit).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.mask, vec![false, false, false]);
        assert_eq!(trace.eval_count(), 0);
    }

    #[test]
    fn always_eval_trace() {
        let h = toy_sequence(&[1.0, 0.5, 0.25]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let x = [1.0];
        let trace = run_episode(0, &x, 1, &h, &spec, |_| Action::Eval).unwrap();
        assert_eq!(trace.mask, vec![true, true, true]);
        let expect: Vec<f64> = h
            .full_score(&x)
            .iter()
            .map(|v| v / h.alpha_sum)
            .collect();
        for (a, b) in trace.final_scores.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let loss = spec.loss_of(&trace.final_scores, h.alpha_sum, 1);
        let mut expected_sum = 0.0;
        for _ in 0..3 {
            expected_sum += -spec.beta;
        }
        expected_sum += -loss;
        assert_eq!(trace.reward_sum(), expected_sum);
    }

    #[test]
    fn eval_skip_quit_trace() {
        let h = toy_sequence(&[1.0, 0.5, 0.25]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let script = [Action::Eval, Action::Skip, Action::Quit];
        let mut i = 0;
        let trace = run_episode(0, &[1.0], 1, &h, &spec, |_| {
            let a = script[i];
            i += 1;
            a
        })
        .unwrap();
        assert_eq!(trace.mask, vec![true, false, false]);
        // -L(f^(1)) - beta; the first stump votes for class 1, so L = 0.
        assert_eq!(trace.reward_sum(), -0.01);
    }

    #[test]
    fn trace_is_deterministic() {
        let h = toy_sequence(&[1.0, 0.5]);
        let spec = RewardSpec::new(LossKind::Exponential, 0.05);
        let run = || {
            run_episode(3, &[-1.0], 2, &h, &spec, |s| {
                if s.step == 0 {
                    Action::Eval
                } else {
                    Action::Quit
                }
            })
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trace_csv_lists_each_step() {
        let h = toy_sequence(&[1.0, 0.5]);
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let x = [1.0];
        let trace = run_episode(0, &x, 1, &h, &spec, |_| Action::Eval).unwrap();
        let csv = trace.to_csv(&x, &h);
        assert_eq!(csv.lines().count(), 1 + trace.steps.len());
        assert!(csv.starts_with("step,action,reward,score1,score2"));
    }
}
