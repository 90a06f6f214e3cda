//! AdaBoost.MH over decision stumps (Schapire & Singer style).
//!
//! Each base classifier is a confidence-rated stump: a single-feature
//! threshold test phi(x) in {+1,-1} times a per-class vote vector
//! v in {+1,-1}^K, scaled by a confidence alpha. The trainer produces the
//! ordered sequence consumed by the controller MDP.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::exec::{map_indexed, Parallelism};

/// Edges at least this close to 1 are clamped before computing alpha.
pub const EDGE_CLAMP: f64 = 1.0 - 1e-12;
/// Edges at most this large count as "no weak learner better than chance".
pub const EDGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("no weak learner better than chance (round {round}, edge {edge:e})")]
    NoWeakLearner { round: usize, edge: f64 },
    #[error("n_rounds must be >= 1")]
    ZeroRounds,
    #[error("model file error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Single-feature threshold stump with a per-class vote vector.
///
/// Output on class l is `alpha * votes[l] * phi(x)` where `phi(x) = +1`
/// iff `x[feature_index] >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature_index: usize,
    pub threshold: f64,
    pub votes: Vec<i8>,
    pub alpha: f64,
}

impl Stump {
    /// The threshold test phi(x): +1 when the feature is >= threshold.
    pub fn response(&self, x: &[f64]) -> f64 {
        if x[self.feature_index] >= self.threshold {
            1.0
        } else {
            -1.0
        }
    }

    /// Per-class output alpha * v_l * phi(x).
    pub fn class_output(&self, x: &[f64], class: usize) -> f64 {
        self.alpha * f64::from(self.votes[class]) * self.response(x)
    }

    /// Adds `scale * h(x)` into `out` (length K).
    pub fn accumulate(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let phi = self.response(x);
        for (o, &v) in out.iter_mut().zip(&self.votes) {
            *o += scale * self.alpha * f64::from(v) * phi;
        }
    }
}

/// The ordered list H = (h_1 .. h_N) plus the normalizer sum of alphas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongSequence {
    pub k: usize,
    pub d: usize,
    pub alpha_sum: f64,
    pub stumps: Vec<Stump>,
}

impl StrongSequence {
    pub fn len(&self) -> usize {
        self.stumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stumps.is_empty()
    }

    /// Unnormalized masked score: sum over j with mask_j set of h_j(x).
    pub fn raw_score(&self, x: &[f64], mask: &[bool]) -> Vec<f64> {
        assert_eq!(mask.len(), self.stumps.len(), "mask length mismatch");
        let mut out = vec![0.0; self.k];
        for (stump, &on) in self.stumps.iter().zip(mask) {
            if on {
                stump.accumulate(x, 1.0, &mut out);
            }
        }
        out
    }

    /// Unnormalized score of the full ensemble, f^(N)(x).
    pub fn full_score(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for stump in &self.stumps {
            stump.accumulate(x, 1.0, &mut out);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, BoostError> {
        let seq: StrongSequence = serde_json::from_str(text)?;
        seq.validate()?;
        Ok(seq)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), BoostError> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, BoostError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), BoostError> {
        if self.stumps.is_empty() {
            return Err(BoostError::Format("empty stump list".into()));
        }
        let recomputed: f64 = self.stumps.iter().map(|s| s.alpha).sum();
        if recomputed != self.alpha_sum {
            return Err(BoostError::Format(format!(
                "alpha_sum {} does not match recomputed {}",
                self.alpha_sum, recomputed
            )));
        }
        for (j, s) in self.stumps.iter().enumerate() {
            if s.votes.len() != self.k {
                return Err(BoostError::Format(format!("stump {}: vote length != K", j)));
            }
            if s.feature_index >= self.d {
                return Err(BoostError::Format(format!(
                    "stump {}: feature index {} out of range (d = {})",
                    j, s.feature_index, self.d
                )));
            }
            if s.votes.iter().any(|&v| v != 1 && v != -1) {
                return Err(BoostError::Format(format!("stump {}: votes must be +/-1", j)));
            }
        }
        Ok(())
    }
}

/// Per-round training statistics.
#[derive(Debug, Clone)]
pub struct RoundStat {
    /// 1-based round index.
    pub round: usize,
    pub gamma: f64,
    pub alpha: f64,
    /// Weight normalizer Z_t of this round.
    pub z: f64,
    /// Running product of Z_t up to this round.
    pub z_product: f64,
    /// Multi-class Hamming loss of the partial strong classifier: the
    /// fraction of (instance, class) pairs whose running score disagrees
    /// in sign with the +/-1 target (zero margin counts as a mistake).
    pub hamming_loss: f64,
}

#[derive(Debug, Clone)]
pub struct EarlyStop {
    /// 1-based round at which training stopped.
    pub round: usize,
    pub edge: f64,
    pub reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// |edge| >= 1 - 1e-12: alpha would diverge. The clamped stump is kept.
    PerfectStump,
    /// |edge| <= 1e-12: no stump beats chance. Nothing added this round.
    NoWeakLearner,
}

#[derive(Debug, Clone)]
pub struct BoostReport {
    pub sequence: StrongSequence,
    pub rounds: Vec<RoundStat>,
    pub early_stop: Option<EarlyStop>,
}

/// A stump candidate before alpha is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct StumpCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    pub votes: Vec<i8>,
}

struct Scored {
    gamma: f64,
    candidate: StumpCandidate,
}

/// Ordering used everywhere a best stump is selected: larger edge wins,
/// ties go to the lowest feature index, then the lowest threshold, then
/// the lexicographically smallest vote vector.
fn better(a: &Scored, b: &Scored) -> bool {
    if a.gamma != b.gamma {
        return a.gamma > b.gamma;
    }
    if a.candidate.feature_index != b.candidate.feature_index {
        return a.candidate.feature_index < b.candidate.feature_index;
    }
    if a.candidate.threshold != b.candidate.threshold {
        return a.candidate.threshold < b.candidate.threshold;
    }
    a.candidate.votes < b.candidate.votes
}

/// Sign targets Y_{i,l} = +1 if l is the label of row i, else -1.
fn target(label: u32, class: usize) -> f64 {
    if label as usize == class + 1 {
        1.0
    } else {
        -1.0
    }
}

/// Finds the stump maximizing |edge| over all features, candidate
/// thresholds (midpoints between consecutive distinct sorted values plus
/// one below-min sentinel), and optimal vote vectors.
///
/// `weights` is the n-by-K weight matrix, row major, nonnegative, sum 1.
/// The per-class optimal vote is the sign of the class correlation
/// c_l = sum_i w_{i,l} phi(x_i) Y_{i,l}; zero correlations vote +1, which
/// makes the returned edge sum |c_l| and therefore nonnegative.
pub fn best_stump(
    data: &LabeledDataset,
    weights: &[f64],
    par: Parallelism,
) -> (StumpCandidate, f64) {
    let n = data.n();
    let d = data.d();
    let k = data.k();
    assert_eq!(weights.len(), n * k, "weight matrix shape mismatch");

    // Correlations at the all-plus threshold; shared across features.
    let mut base = vec![0.0f64; k];
    for i in 0..n {
        for l in 0..k {
            base[l] += weights[i * k + l] * target(data.label(i), l);
        }
    }

    let per_feature = map_indexed(par, d, |f| {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            data.row(a)[f]
                .partial_cmp(&data.row(b)[f])
                .expect("finite features")
        });

        let mut c = base.clone();
        let min_value = data.row(order[0])[f];
        let mut best = score_candidate(f, min_value - 1.0, &c);

        let mut i = 0;
        while i < n {
            let v = data.row(order[i])[f];
            // Flip every instance sharing this value to phi = -1.
            while i < n && data.row(order[i])[f] == v {
                let idx = order[i];
                for l in 0..k {
                    c[l] -= 2.0 * weights[idx * k + l] * target(data.label(idx), l);
                }
                i += 1;
            }
            if i < n {
                let next = data.row(order[i])[f];
                let cand = score_candidate(f, v + (next - v) / 2.0, &c);
                if better(&cand, &best) {
                    best = cand;
                }
            }
        }
        best
    });

    let mut best = None::<Scored>;
    for cand in per_feature {
        match &best {
            Some(b) if !better(&cand, b) => {}
            _ => best = Some(cand),
        }
    }
    let best = best.expect("at least one feature");
    (best.candidate, best.gamma)
}

fn score_candidate(feature: usize, threshold: f64, c: &[f64]) -> Scored {
    let votes: Vec<i8> = c.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect();
    let gamma: f64 = c.iter().map(|x| x.abs()).sum();
    Scored {
        gamma,
        candidate: StumpCandidate {
            feature_index: feature,
            threshold,
            votes,
        },
    }
}

/// Runs AdaBoost.MH for `n_rounds` rounds (fewer when a perfect stump or
/// a zero-edge round stops training early; a first-round zero edge is an
/// error since no classifier can be produced).
pub fn train_adaboost_mh(
    data: &LabeledDataset,
    n_rounds: usize,
    par: Parallelism,
) -> Result<BoostReport, BoostError> {
    if n_rounds == 0 {
        return Err(BoostError::ZeroRounds);
    }
    let n = data.n();
    let k = data.k();
    let mut weights = vec![1.0 / (n * k) as f64; n * k];
    let mut scores = vec![0.0f64; n * k];
    let mut stumps = Vec::new();
    let mut rounds = Vec::new();
    let mut early_stop = None;
    let mut z_product = 1.0f64;

    for round in 1..=n_rounds {
        let (candidate, gamma) = best_stump(data, &weights, par);
        if gamma.abs() <= EDGE_FLOOR {
            if stumps.is_empty() {
                return Err(BoostError::NoWeakLearner { round, edge: gamma });
            }
            early_stop = Some(EarlyStop {
                round,
                edge: gamma,
                reason: StopReason::NoWeakLearner,
            });
            break;
        }
        let clamped = gamma.min(EDGE_CLAMP);
        let alpha = 0.5 * ((1.0 + clamped) / (1.0 - clamped)).ln();
        let stump = Stump {
            feature_index: candidate.feature_index,
            threshold: candidate.threshold,
            votes: candidate.votes,
            alpha,
        };

        // Reweight and measure Z_t before normalization.
        let mut z = 0.0f64;
        for i in 0..n {
            let phi = stump.response(data.row(i));
            for l in 0..k {
                let y = target(data.label(i), l);
                let margin = alpha * f64::from(stump.votes[l]) * phi * y;
                weights[i * k + l] *= (-margin).exp();
                z += weights[i * k + l];
                scores[i * k + l] += alpha * f64::from(stump.votes[l]) * phi;
            }
        }
        for w in &mut weights {
            *w /= z;
        }
        z_product *= z;

        let mistakes = (0..n)
            .flat_map(|i| (0..k).map(move |l| (i, l)))
            .filter(|&(i, l)| scores[i * k + l] * target(data.label(i), l) <= 0.0)
            .count();
        rounds.push(RoundStat {
            round,
            gamma,
            alpha,
            z,
            z_product,
            hamming_loss: mistakes as f64 / (n * k) as f64,
        });
        stumps.push(stump);

        if gamma.abs() >= EDGE_CLAMP {
            early_stop = Some(EarlyStop {
                round,
                edge: gamma,
                reason: StopReason::PerfectStump,
            });
            break;
        }
    }

    let alpha_sum = stumps.iter().map(|s| s.alpha).sum();
    Ok(BoostReport {
        sequence: StrongSequence {
            k,
            d: data.d(),
            alpha_sum,
            stumps,
        },
        rounds,
        early_stop,
    })
}
