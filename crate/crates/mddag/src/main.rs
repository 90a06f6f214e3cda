//! Command-line front-end: data generation, boosting, policy training,
//! evaluation, and DAG export. Every command is deterministic given its
//! flags (or config file) including seeds; config file values are
//! overridden by explicit flags.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use mddag::boosting::{self, StrongSequence};
use mddag::dag::{self, DotStyle};
use mddag::dataset::{generate_synthetic, LabeledDataset, SynthSpec};
use mddag::mdp::{LossKind, RewardSpec};
use mddag::metrics;
use mddag::policy::{self, LearnerConfig, PolicySnapshot};
use mddag::Parallelism;

#[derive(Parser)]
#[command(
    name = "mddag",
    about = "Sparse decision DAGs over boosted ensembles: train an AdaBoost.MH stump sequence, learn an evaluate/skip/quit controller, inspect the resulting accuracy/cost trade-off."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-cluster dataset as CSV.
    GenSynth(GenSynthArgs),
    /// Train an AdaBoost.MH stump sequence and serialize it as JSON.
    TrainBoost(TrainBoostArgs),
    /// Train the SARSA(lambda) controller over a trained model.
    TrainPolicy(TrainPolicyArgs),
    /// Roll out a policy over a dataset and report metrics.
    Eval(EvalArgs),
    /// Roll out a policy and export the aggregated decision DAG.
    ExportDag(ExportDagArgs),
}

#[derive(clap::Args)]
struct GenSynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with a full cluster specification (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TrainBoostArgs {
    /// Training CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Number of boosting rounds [default: 1000].
    #[arg(long)]
    rounds: Option<usize>,
    /// Output model JSON path.
    #[arg(long)]
    model_out: PathBuf,
    /// Rollout/search threads: 1 = sequential, 0 = all cores [default: 0].
    #[arg(long)]
    threads: Option<usize>,
    /// JSON config file (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainBoostConfig {
    rounds: Option<usize>,
    threads: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LossArg {
    ZeroOne,
    Exp,
}

impl From<LossArg> for LossKind {
    fn from(value: LossArg) -> Self {
        match value {
            LossArg::ZeroOne => LossKind::ZeroOne,
            LossArg::Exp => LossKind::Exponential,
        }
    }
}

#[derive(clap::Args)]
struct TrainPolicyArgs {
    /// Training CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Trained model JSON path.
    #[arg(long)]
    model: PathBuf,
    /// Per-evaluation penalty [default: 0.01].
    #[arg(long)]
    beta: Option<f64>,
    /// Loss driving the QUIT reward [default: zero-one].
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Trace decay [default: 0.95].
    #[arg(long)]
    lambda: Option<f64>,
    /// Constant learning rate [default: 0.2].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Initial exploration rate [default: 0.3].
    #[arg(long)]
    epsilon0: Option<f64>,
    /// Training episodes [default: 1000000].
    #[arg(long)]
    episodes: Option<u64>,
    /// Checkpoint cadence in episodes [default: 10000].
    #[arg(long)]
    eval_every: Option<u64>,
    /// Score quantization bin width [default: 0.05].
    #[arg(long)]
    bin_width: Option<f64>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output policy JSON path.
    #[arg(long)]
    policy_out: PathBuf,
    /// Checkpoint rollout threads: 1 = sequential, 0 = all cores [default: 0].
    #[arg(long)]
    threads: Option<usize>,
    /// JSON config file (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainPolicyConfig {
    beta: Option<f64>,
    loss: Option<LossArg>,
    lambda: Option<f64>,
    learning_rate: Option<f64>,
    epsilon0: Option<f64>,
    episodes: Option<u64>,
    eval_every: Option<u64>,
    bin_width: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Dataset CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Trained model JSON path.
    #[arg(long)]
    model: PathBuf,
    /// Trained policy JSON path.
    #[arg(long)]
    policy: PathBuf,
    /// Per-evaluation penalty for the reported objective [default: 0.01].
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    /// Loss for the reported objective [default: zero-one].
    #[arg(long, value_enum, default_value_t = LossArg::ZeroOne)]
    loss: LossArg,
    /// Comma-separated target FPR list for TPR rows (class 1 = positive).
    #[arg(long, value_delimiter = ',')]
    fpr: Vec<f64>,
    /// Report averaged NDCG at this cutoff (requires a qid column).
    #[arg(long)]
    ndcg_at: Option<usize>,
    /// Write the metric table to this CSV path (summary always on stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rollout threads: 1 = sequential, 0 = all cores [default: 0].
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum GroupBy {
    /// Single group; uniform coloring.
    None,
    /// Group by class label.
    Class,
    /// Group by the subcluster column.
    Subcluster,
    /// Group by prediction correctness.
    Correct,
}

#[derive(clap::Args)]
struct ExportDagArgs {
    /// Dataset CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Trained model JSON path.
    #[arg(long)]
    model: PathBuf,
    /// Trained policy JSON path.
    #[arg(long)]
    policy: PathBuf,
    /// Edge/node coloring groups.
    #[arg(long, value_enum, default_value_t = GroupBy::None)]
    group: GroupBy,
    /// Keep only class-1 instances (the positive-class DAG).
    #[arg(long)]
    positives_only: bool,
    /// Output DOT path.
    #[arg(long)]
    dot_out: PathBuf,
    /// Optional edge-list CSV path.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Rollout threads: 1 = sequential, 0 = all cores [default: 0].
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenSynth(args) => gen_synth(args),
        Command::TrainBoost(args) => train_boost(args),
        Command::TrainPolicy(args) => train_policy(args),
        Command::Eval(args) => eval(args),
        Command::ExportDag(args) => export_dag(args),
    }
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("bad config {}", p.display()))
        }
    }
}

fn parallelism(threads: Option<usize>) -> Parallelism {
    match threads {
        Some(1) => Parallelism::Sequential,
        Some(0) | None => Parallelism::default(),
        Some(n) => {
            #[cfg(feature = "parallel")]
            {
                // Best effort; fails harmlessly if a pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Parallelism::default()
        }
    }
}

fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.config {
        None => SynthSpec::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("bad config {}", p.display()))?
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = generate_synthetic(&spec)?;
    data.write_csv(&args.out)?;
    println!("wrote {} rows to {}", data.n(), args.out.display());
    for (class, count) in data.class_counts() {
        println!("class {}: {} instances", class, count);
    }
    Ok(())
}

fn train_boost(args: TrainBoostArgs) -> Result<()> {
    let cfg: TrainBoostConfig = load_config(&args.config)?;
    let rounds = args.rounds.or(cfg.rounds).unwrap_or(1000);
    let par = parallelism(args.threads.or(cfg.threads));

    let data = LabeledDataset::load_csv(&args.data)?;
    let report = boosting::train_adaboost_mh(&data, rounds, par)?;
    for stat in &report.rounds {
        if stat.round == 1 || stat.round % 100 == 0 || stat.round == report.rounds.len() {
            println!(
                "round {:>5}  edge {:.6}  hamming-loss {:.6}  z-product {:.6e}",
                stat.round, stat.gamma, stat.hamming_loss, stat.z_product
            );
        }
    }
    if let Some(stop) = &report.early_stop {
        println!(
            "early stop at round {}: {}",
            stop.round,
            match stop.reason {
                boosting::StopReason::PerfectStump => "perfect stump (edge clamped)",
                boosting::StopReason::NoWeakLearner => "no weak learner better than chance",
            }
        );
    }
    report.sequence.save(&args.model_out)?;
    println!(
        "wrote {} stumps (alpha sum {:.6}) to {}",
        report.sequence.len(),
        report.sequence.alpha_sum,
        args.model_out.display()
    );
    Ok(())
}

fn train_policy(args: TrainPolicyArgs) -> Result<()> {
    let file: TrainPolicyConfig = load_config(&args.config)?;
    let spec = RewardSpec::new(
        args.loss.or(file.loss).unwrap_or(LossArg::ZeroOne).into(),
        args.beta.or(file.beta).unwrap_or(0.01),
    );
    let defaults = LearnerConfig::default();
    let cfg = LearnerConfig {
        lambda: args.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        learning_rate: args
            .learning_rate
            .or(file.learning_rate)
            .unwrap_or(defaults.learning_rate),
        epsilon0: args.epsilon0.or(file.epsilon0).unwrap_or(defaults.epsilon0),
        episodes_total: args
            .episodes
            .or(file.episodes)
            .unwrap_or(defaults.episodes_total),
        eval_every: args
            .eval_every
            .or(file.eval_every)
            .unwrap_or(defaults.eval_every),
        bin_width: args.bin_width.or(file.bin_width).unwrap_or(defaults.bin_width),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let par = parallelism(args.threads.or(file.threads));

    let data = LabeledDataset::load_csv(&args.data)?;
    let model = StrongSequence::load(&args.model)?;
    let snapshot = policy::train(&data, &model, &spec, &cfg, par, |cp| {
        println!(
            "episode {:>8}  objective {:.6}  epsilon {:.4}  q-states {}{}",
            cp.episode,
            cp.objective,
            cp.epsilon,
            cp.q_states,
            if cp.is_best { "  *best" } else { "" }
        );
    })?;
    snapshot.save(&args.policy_out)?;
    println!(
        "best policy from episode {} (objective {:.6}) written to {}",
        snapshot.episode,
        snapshot.objective,
        args.policy_out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let par = parallelism(args.threads);
    let data = LabeledDataset::load_csv(&args.data)?;
    let model = StrongSequence::load(&args.model)?;
    let snapshot = PolicySnapshot::load(&args.policy)?;
    let spec = RewardSpec::new(args.loss.into(), args.beta);

    let traces = policy::rollout_dataset(&snapshot.q, &model, &data, &spec, par);
    let mut rows: Vec<(String, f64)> = Vec::new();
    rows.push((
        "accuracy".into(),
        1.0 - metrics::classification_error(&traces),
    ));
    rows.push((
        "empirical_objective".into(),
        metrics::empirical_objective(&traces, &spec, model.alpha_sum),
    ));
    rows.push((
        "avg_evaluations".into(),
        traces.iter().map(|t| t.eval_count() as f64).sum::<f64>() / traces.len() as f64,
    ));
    if traces.iter().any(|t| t.label != 1) {
        rows.push((
            "avg_evaluations_negatives".into(),
            metrics::avg_cost_on_negatives(&traces)?,
        ));
    }
    if !args.fpr.is_empty() {
        let scores: Vec<f64> = traces
            .iter()
            .map(|t| t.detection_score(model.alpha_sum))
            .collect();
        let positive: Vec<bool> = traces.iter().map(|t| t.label == 1).collect();
        for &target in &args.fpr {
            let (tpr, theta) = metrics::tpr_at_fpr(&scores, &positive, target)?;
            rows.push((format!("tpr_at_fpr_{}", target), tpr));
            rows.push((format!("theta_at_fpr_{}", target), theta));
        }
    }
    if let Some(m) = args.ndcg_at {
        let Some(qids) = data.qids() else {
            bail!("--ndcg-at requires a dataset with a qid column");
        };
        let queries = ranked_queries(&traces, qids);
        rows.push((format!("avg_ndcg_{}", m), metrics::averaged_ndcg(&queries, m)?));
    }

    let mut csv = String::from("metric,value\n");
    for (name, value) in &rows {
        csv.push_str(&format!("{},{}\n", name, value));
        println!("{:<32} {:.6}", name, value);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, csv).with_context(|| format!("cannot write {}", out.display()))?;
        println!("wrote metrics to {}", out.display());
    }
    Ok(())
}

/// Groups traces by qid (order of first appearance) and ranks each
/// query's documents by relevance-weighted score: sum over classes of
/// (class - 1) times the normalized class score. Stable sort keeps ties
/// in row order.
fn ranked_queries(traces: &[mddag::mdp::EpisodeTrace], qids: &[String]) -> Vec<Vec<u32>> {
    let mut order: Vec<&String> = Vec::new();
    let mut by_qid: std::collections::HashMap<&String, Vec<usize>> = std::collections::HashMap::new();
    for (i, qid) in qids.iter().enumerate() {
        let entry = by_qid.entry(qid).or_default();
        if entry.is_empty() {
            order.push(qid);
        }
        entry.push(i);
    }
    order
        .iter()
        .map(|qid| {
            let mut docs: Vec<(f64, u32)> = by_qid[*qid]
                .iter()
                .map(|&i| {
                    let score: f64 = traces[i]
                        .final_scores
                        .iter()
                        .enumerate()
                        .map(|(l, &s)| l as f64 * s)
                        .sum();
                    (score, traces[i].label - 1)
                })
                .collect();
            docs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
            docs.into_iter().map(|(_, rel)| rel).collect()
        })
        .collect()
}

fn export_dag(args: ExportDagArgs) -> Result<()> {
    let par = parallelism(args.threads);
    let data = LabeledDataset::load_csv(&args.data)?;
    let model = StrongSequence::load(&args.model)?;
    let snapshot = PolicySnapshot::load(&args.policy)?;
    // The reward spec does not influence greedy rollout masks.
    let spec = RewardSpec::new(LossKind::ZeroOne, 0.01);

    let traces = policy::rollout_dataset(&snapshot.q, &model, &data, &spec, par);
    let kept: Vec<usize> = (0..data.n())
        .filter(|&i| !args.positives_only || data.label(i) == 1)
        .collect();
    if kept.is_empty() {
        bail!("no instances left after filtering");
    }

    let paths: Vec<_> = kept.iter().map(|&i| dag::extract_path(&traces[i])).collect();
    let groups: Option<Vec<String>> = match args.group {
        GroupBy::None => None,
        GroupBy::Class => Some(kept.iter().map(|&i| data.label(i).to_string()).collect()),
        GroupBy::Subcluster => {
            let Some(tags) = data.subclusters() else {
                bail!("--group subcluster requires a dataset with a subcluster column");
            };
            Some(kept.iter().map(|&i| tags[i].clone()).collect())
        }
        GroupBy::Correct => Some(
            kept.iter()
                .map(|&i| {
                    if traces[i].predicted_class() == data.label(i) {
                        "correct".to_string()
                    } else {
                        "wrong".to_string()
                    }
                })
                .collect(),
        ),
    };
    let graph = dag::aggregate(&paths, groups.as_deref());
    let dot = dag::export_dot(&graph, &DotStyle::default());
    std::fs::write(&args.dot_out, &dot)
        .with_context(|| format!("cannot write {}", args.dot_out.display()))?;
    println!(
        "wrote DAG with {} nodes and {} edges to {}",
        graph.nodes.len(),
        graph.edges.len(),
        args.dot_out.display()
    );
    if let Some(csv_out) = &args.csv_out {
        std::fs::write(csv_out, dag::export_edge_csv(&graph))
            .with_context(|| format!("cannot write {}", csv_out.display()))?;
        println!("wrote edge list to {}", csv_out.display());
    }
    Ok(())
}
