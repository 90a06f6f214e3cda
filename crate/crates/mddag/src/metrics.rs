//! Evaluation metrics and the run-selection protocol: the empirical
//! trade-off objective, detection TPR at a fixed FPR, average evaluation
//! cost over negatives, budget-constrained run selection, and NDCG.

use thiserror::Error;

use crate::mdp::{EpisodeTrace, RewardSpec};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("both classes are required to tune a detection threshold")]
    SingleClass,
    #[error("target FPR must lie strictly between 0 and 1, got {0}")]
    BadTargetFpr(f64),
    #[error("no negative instances")]
    NoNegatives,
    #[error("no queries")]
    NoQueries,
    #[error("NDCG cutoff must be >= 1")]
    ZeroCutoff,
}

/// Empirical trade-off objective over one trace per instance: the mean of
/// loss + beta * evaluated-classifier count. Equal to the negated mean
/// episode return for the same traces.
pub fn empirical_objective(traces: &[EpisodeTrace], spec: &RewardSpec, alpha_sum: f64) -> f64 {
    assert!(!traces.is_empty(), "one trace per instance required");
    let total: f64 = traces
        .iter()
        .map(|t| {
            spec.loss_of(&t.final_scores, alpha_sum, t.label) + spec.beta * t.eval_count() as f64
        })
        .sum();
    total / traces.len() as f64
}

/// Multi-class 0-1 error of the traces' argmax predictions.
pub fn classification_error(traces: &[EpisodeTrace]) -> f64 {
    let wrong = traces
        .iter()
        .filter(|t| t.predicted_class() != t.label)
        .count();
    wrong as f64 / traces.len() as f64
}

/// Tunes the detection threshold: the smallest observed-score threshold
/// theta with FPR(theta) <= target, classifying scores strictly greater
/// than theta as positive. Returns (TPR at theta, theta).
///
/// `is_positive` marks the true positives among `scores` (same order).
pub fn tpr_at_fpr(
    scores: &[f64],
    is_positive: &[bool],
    target_fpr: f64,
) -> Result<(f64, f64), MetricError> {
    assert_eq!(scores.len(), is_positive.len());
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(MetricError::BadTargetFpr(target_fpr));
    }
    let n_pos = is_positive.iter().filter(|&&p| p).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }

    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    candidates.dedup();

    for &theta in &candidates {
        let fp = scores
            .iter()
            .zip(is_positive)
            .filter(|&(&s, &p)| !p && s > theta)
            .count();
        if fp as f64 / n_neg as f64 <= target_fpr {
            let tp = scores
                .iter()
                .zip(is_positive)
                .filter(|&(&s, &p)| p && s > theta)
                .count();
            return Ok((tp as f64 / n_pos as f64, theta));
        }
    }
    unreachable!("the maximum score always satisfies FPR = 0")
}

/// Mean number of evaluated classifiers over negative-labeled traces.
/// Positives are class 1 by convention; everything else is negative.
pub fn avg_cost_on_negatives(traces: &[EpisodeTrace]) -> Result<f64, MetricError> {
    let negatives: Vec<&EpisodeTrace> = traces.iter().filter(|t| t.label != 1).collect();
    if negatives.is_empty() {
        return Err(MetricError::NoNegatives);
    }
    Ok(negatives.iter().map(|t| t.eval_count() as f64).sum::<f64>() / negatives.len() as f64)
}

/// One hyperparameter run: training metric/cost pair and the matching
/// test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub id: usize,
    pub train_metric: f64,
    pub train_cost: f64,
    pub test_metric: f64,
    pub test_cost: f64,
}

/// One selected frontier point: the budget, the winning run, and that
/// run's test metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub budget: f64,
    pub run_id: usize,
    pub test_metric: f64,
}

/// For each budget N in the grid, picks the run with the best TRAINING
/// metric among runs whose training cost is at most N and reports that
/// run's TEST metric. Ties go to the lowest run id; budgets with no
/// feasible run are omitted.
pub fn select_runs(records: &[RunRecord], budget_grid: &[f64]) -> Vec<FrontierPoint> {
    assert!(!records.is_empty(), "nonempty records required");
    let mut frontier = Vec::new();
    for &budget in budget_grid {
        let mut best: Option<&RunRecord> = None;
        for r in records.iter().filter(|r| r.train_cost <= budget) {
            best = match best {
                None => Some(r),
                Some(b) if r.train_metric > b.train_metric => Some(r),
                Some(b) if r.train_metric == b.train_metric && r.id < b.id => Some(r),
                Some(b) => Some(b),
            };
        }
        if let Some(r) = best {
            frontier.push(FrontierPoint {
                budget,
                run_id: r.id,
                test_metric: r.test_metric,
            });
        }
    }
    frontier
}

/// NDCG at cutoff m for one query's relevance labels in ranked order:
/// DCG_m = sum_{i=1..m} (2^rel_i - 1) / log2(i + 1), normalized by the
/// DCG of the label-sorted ideal ordering. Zero-ideal queries score 0.
pub fn ndcg_at_m(ranked_relevances: &[u32], m: usize) -> Result<f64, MetricError> {
    if m == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    let dcg = dcg_at_m(ranked_relevances, m);
    let mut ideal = ranked_relevances.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_m(&ideal, m);
    if idcg == 0.0 {
        Ok(0.0)
    } else {
        Ok(dcg / idcg)
    }
}

fn dcg_at_m(rels: &[u32], m: usize) -> f64 {
    rels.iter()
        .take(m)
        .enumerate()
        .map(|(i, &rel)| (2f64.powi(rel as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Mean of the query-wise NDCG_m values.
pub fn averaged_ndcg(queries: &[Vec<u32>], m: usize) -> Result<f64, MetricError> {
    if queries.is_empty() {
        return Err(MetricError::NoQueries);
    }
    let mut total = 0.0;
    for q in queries {
        total += ndcg_at_m(q, m)?;
    }
    Ok(total / queries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{EpisodeTrace, LossKind, StepRecord};
    use crate::mdp::Action;

    fn quit_trace(label: u32, scores: Vec<f64>, mask: Vec<bool>, loss: f64, beta: f64) -> EpisodeTrace {
        let mut steps: Vec<StepRecord> = mask
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b)
            .map(|(j, _)| StepRecord {
                step: j,
                action: Action::Eval,
                reward: -beta,
            })
            .collect();
        steps.push(StepRecord {
            step: mask.len(),
            action: Action::Quit,
            reward: -loss,
        });
        EpisodeTrace {
            instance: 0,
            label,
            steps,
            mask,
            final_scores: scores,
        }
    }

    #[test]
    fn objective_decomposes_and_negates_mean_return() {
        let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);
        let alpha_sum = 2.0;
        let traces = vec![
            quit_trace(1, vec![0.4, -0.4], vec![true, true, false], 0.0, 0.01),
            quit_trace(2, vec![0.1, -0.1], vec![true, false, false], 1.0, 0.01),
        ];
        let j = empirical_objective(&traces, &spec, alpha_sum);
        // Instance 1: loss 0 + 2 evals; instance 2: loss 1 + 1 eval.
        assert!((j - (0.0 + 0.02 + 1.0 + 0.01) / 2.0).abs() < 1e-15);
        let mean_return: f64 =
            traces.iter().map(|t| t.reward_sum()).sum::<f64>() / traces.len() as f64;
        assert!((j + mean_return).abs() < 1e-12);
    }

    #[test]
    fn quit_all_objective_is_pure_loss() {
        let spec = RewardSpec::new(LossKind::ZeroOne, 123.0);
        let traces = vec![
            quit_trace(1, vec![0.0, 0.0], vec![false, false], 1.0, 123.0),
            quit_trace(2, vec![0.0, 0.0], vec![false, false], 1.0, 123.0),
        ];
        // No evaluations: the objective reduces to the mean loss, which is
        // 1 at the zero-score vector.
        assert_eq!(empirical_objective(&traces, &spec, 1.0), 1.0);
    }

    #[test]
    fn tpr_at_fpr_separated_example() {
        let scores = [2.0, 3.0, 0.0, 1.0];
        let pos = [true, true, false, false];
        let (tpr, theta) = tpr_at_fpr(&scores, &pos, 0.5).unwrap();
        assert_eq!((tpr, theta), (1.0, 0.0));

        let (tpr, _) = tpr_at_fpr(&scores, &pos, 0.9).unwrap();
        assert_eq!(tpr, 1.0);
    }

    #[test]
    fn tpr_at_fpr_tight_target_clears_negatives() {
        // Overlapping scores with a target below 1/#negatives forces
        // theta to at least the maximum negative score.
        let scores = [0.5, 2.0, 1.0, 0.9];
        let pos = [true, true, false, false];
        let (tpr, theta) = tpr_at_fpr(&scores, &pos, 0.4).unwrap();
        assert!(theta >= 1.0);
        assert_eq!(tpr, 0.5);
    }

    #[test]
    fn tpr_at_fpr_rejects_degenerate_inputs() {
        assert!(matches!(
            tpr_at_fpr(&[1.0, 2.0], &[true, true], 0.5),
            Err(MetricError::SingleClass)
        ));
        assert!(matches!(
            tpr_at_fpr(&[1.0, 2.0], &[true, false], 0.0),
            Err(MetricError::BadTargetFpr(_))
        ));
    }

    #[test]
    fn avg_cost_over_negatives() {
        let traces = vec![
            quit_trace(1, vec![0.1, -0.1], vec![true; 4], 0.0, 0.0),
            quit_trace(2, vec![0.0, 0.0], vec![true, true, false, false], 1.0, 0.0),
            quit_trace(2, vec![0.0, 0.0], vec![true; 4], 1.0, 0.0),
        ];
        assert_eq!(avg_cost_on_negatives(&traces).unwrap(), 3.0);
        let only_pos = vec![quit_trace(1, vec![0.1, -0.1], vec![false], 0.0, 0.0)];
        assert!(matches!(
            avg_cost_on_negatives(&only_pos),
            Err(MetricError::NoNegatives)
        ));
    }

    #[test]
    fn run_selection_feasibility_and_argmax() {
        let records = vec![
            RunRecord {
                id: 0,
                train_metric: 0.9,
                train_cost: 4.0,
                test_metric: 0.85,
                test_cost: 4.2,
            },
            RunRecord {
                id: 1,
                train_metric: 0.8,
                train_cost: 2.0,
                test_metric: 0.82,
                test_cost: 2.1,
            },
        ];
        let frontier = select_runs(&records, &[2.0, 4.0]);
        assert_eq!(frontier.len(), 2);
        assert_eq!(frontier[0].run_id, 1);
        assert_eq!(frontier[0].test_metric, 0.82);
        assert_eq!(frontier[1].run_id, 0);
        assert_eq!(frontier[1].test_metric, 0.85);

        // A single run with cost 5 is infeasible at budget 3.
        let single = vec![RunRecord {
            id: 0,
            train_metric: 0.5,
            train_cost: 5.0,
            test_metric: 0.4,
            test_cost: 5.0,
        }];
        let frontier = select_runs(&single, &[3.0, 10.0]);
        assert_eq!(frontier.len(), 1);
        assert_eq!(frontier[0].budget, 10.0);
    }

    #[test]
    fn ndcg_hand_example() {
        // Labels (2, 0, 1) ranked as given, m = 3:
        // DCG = 3 + 0 + 1/2 = 3.5; IDCG = 3 + 1/log2(3) + 0.
        let ndcg = ndcg_at_m(&[2, 0, 1], 3).unwrap();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert!((ndcg - 3.5 / idcg).abs() < 1e-9);
        assert!((ndcg - 0.9639).abs() < 1e-4);
    }

    #[test]
    fn ndcg_ideal_and_degenerate() {
        assert_eq!(ndcg_at_m(&[2, 1, 0], 3).unwrap(), 1.0);
        assert_eq!(ndcg_at_m(&[0, 0, 0], 3).unwrap(), 0.0);
        assert!(matches!(ndcg_at_m(&[1], 0), Err(MetricError::ZeroCutoff)));
    }

    #[test]
    fn averaged_ndcg_means_queries() {
        let queries = vec![vec![2, 1, 0], vec![0, 0, 0]];
        assert_eq!(averaged_ndcg(&queries, 3).unwrap(), 0.5);
        assert!(matches!(
            averaged_ndcg(&[], 3),
            Err(MetricError::NoQueries)
        ));
    }
}
