//! Classification paths and their aggregation into a decision DAG, with
//! Graphviz DOT and CSV edge-list export.
//!
//! Classifier indices are 1-based throughout this module, matching the
//! position of each base classifier in the ordered sequence.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::mdp::EpisodeTrace;

/// The chain of consecutively evaluated classifiers for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationPath {
    pub instance: usize,
    /// 1-based indices of evaluated classifiers, strictly increasing.
    pub evaluated: Vec<usize>,
    /// Consecutive-evaluation pairs (j, j').
    pub edges: Vec<(usize, usize)>,
}

/// Builds the classification path from a completed episode trace.
pub fn extract_path(trace: &EpisodeTrace) -> ClassificationPath {
    let evaluated: Vec<usize> = trace
        .mask
        .iter()
        .enumerate()
        .filter_map(|(j, &b)| b.then_some(j + 1))
        .collect();
    let edges = evaluated.windows(2).map(|w| (w[0], w[1])).collect();
    ClassificationPath {
        instance: trace.instance,
        evaluated,
        edges,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DagNode {
    pub visits: u64,
    pub group_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DagEdge {
    pub multiplicity: u64,
    pub group_counts: BTreeMap<String, u64>,
}

/// Aggregated classification paths: nodes keyed by classifier index,
/// edges by (j, j') with multiplicities and per-group counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionDag {
    pub nodes: BTreeMap<usize, DagNode>,
    pub edges: BTreeMap<(usize, usize), DagEdge>,
}

impl DecisionDag {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Count additivity: merges another DAG built from a disjoint
    /// instance set.
    pub fn merge(&mut self, other: &DecisionDag) {
        for (&j, node) in &other.nodes {
            let entry = self.nodes.entry(j).or_default();
            entry.visits += node.visits;
            for (g, &c) in &node.group_counts {
                *entry.group_counts.entry(g.clone()).or_default() += c;
            }
        }
        for (&e, edge) in &other.edges {
            let entry = self.edges.entry(e).or_default();
            entry.multiplicity += edge.multiplicity;
            for (g, &c) in &edge.group_counts {
                *entry.group_counts.entry(g.clone()).or_default() += c;
            }
        }
    }
}

/// Aggregates paths into a DAG. `groups`, when given, assigns one group id
/// per path (same order); otherwise every path counts toward a single
/// implicit group.
pub fn aggregate(paths: &[ClassificationPath], groups: Option<&[String]>) -> DecisionDag {
    if let Some(groups) = groups {
        assert_eq!(groups.len(), paths.len(), "one group id per path");
    }
    let mut dag = DecisionDag::default();
    for (i, path) in paths.iter().enumerate() {
        let group = groups.map(|g| g[i].as_str()).unwrap_or("all");
        for &j in &path.evaluated {
            let node = dag.nodes.entry(j).or_default();
            node.visits += 1;
            *node.group_counts.entry(group.to_string()).or_default() += 1;
        }
        for &e in &path.edges {
            let edge = dag.edges.entry(e).or_default();
            edge.multiplicity += 1;
            *edge.group_counts.entry(group.to_string()).or_default() += 1;
        }
    }
    dag
}

/// Scaling and coloring options for DOT export.
#[derive(Debug, Clone)]
pub struct DotStyle {
    /// Node diameter per visit, in points.
    pub node_scale: f64,
    /// Minimum node diameter so rare nodes stay visible.
    pub node_floor: f64,
    /// Edge pen width per unit multiplicity.
    pub pen_scale: f64,
    /// Color of a pure `group_a` node/edge, "#rrggbb".
    pub color_a: String,
    /// Color of a node/edge with no `group_a` members, "#rrggbb".
    pub color_b: String,
    /// Group whose proportion drives the interpolation. Defaults to the
    /// lexicographically first group present.
    pub group_a: Option<String>,
}

impl Default for DotStyle {
    fn default() -> Self {
        DotStyle {
            node_scale: 0.02,
            node_floor: 0.3,
            pen_scale: 1.0,
            color_a: "#3366cc".into(),
            color_b: "#cc3333".into(),
            group_a: None,
        }
    }
}

fn parse_color(hex: &str) -> [u8; 3] {
    let hex = hex.trim_start_matches('#');
    assert_eq!(hex.len(), 6, "colors must be #rrggbb");
    let mut rgb = [0u8; 3];
    for (i, c) in rgb.iter_mut().enumerate() {
        *c = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).expect("hex color");
    }
    rgb
}

fn blend(a: [u8; 3], b: [u8; 3], proportion_a: f64) -> String {
    let mut out = String::from("#");
    for i in 0..3 {
        let v = f64::from(a[i]) * proportion_a + f64::from(b[i]) * (1.0 - proportion_a);
        let _ = write!(out, "{:02x}", v.round() as u8);
    }
    out
}

fn proportion_a(counts: &BTreeMap<String, u64>, group_a: &str) -> f64 {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    counts.get(group_a).copied().unwrap_or(0) as f64 / total as f64
}

/// Emits Graphviz DOT text: node diameter proportional to visit count
/// (with a floor), edge pen width proportional to multiplicity, fills
/// interpolated between the two style colors by group proportion. Output
/// is byte-stable: nodes ascend by index, edges lexicographically.
pub fn export_dot(dag: &DecisionDag, style: &DotStyle) -> String {
    let color_a = parse_color(&style.color_a);
    let color_b = parse_color(&style.color_b);
    let group_a = style.group_a.clone().unwrap_or_else(|| {
        dag.nodes
            .values()
            .flat_map(|n| n.group_counts.keys())
            .min()
            .cloned()
            .unwrap_or_else(|| "all".into())
    });

    let mut out = String::from("digraph mddag {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=circle, style=filled, fixedsize=true];\n");
    for (&j, node) in &dag.nodes {
        let diameter = (style.node_scale * node.visits as f64).max(style.node_floor);
        let fill = blend(color_a, color_b, proportion_a(&node.group_counts, &group_a));
        let _ = writeln!(
            out,
            "  h{j} [label=\"h{j}\", width={:.4}, height={:.4}, fillcolor=\"{}\"];",
            diameter, diameter, fill
        );
    }
    for (&(j, j2), edge) in &dag.edges {
        let pen = style.pen_scale * edge.multiplicity as f64;
        let color = blend(color_a, color_b, proportion_a(&edge.group_counts, &group_a));
        let _ = writeln!(
            out,
            "  h{j} -> h{j2} [penwidth={:.4}, color=\"{}\"];",
            pen, color
        );
    }
    out.push_str("}\n");
    out
}

/// Edge list as CSV: source, target, multiplicity, then one count column
/// per group (groups in sorted order, union over all edges).
pub fn export_edge_csv(dag: &DecisionDag) -> String {
    let mut groups: Vec<&String> = dag
        .edges
        .values()
        .flat_map(|e| e.group_counts.keys())
        .collect();
    groups.sort();
    groups.dedup();

    let mut out = String::from("source,target,multiplicity");
    for g in &groups {
        let _ = write!(out, ",{}", g);
    }
    out.push('\n');
    for (&(j, j2), edge) in &dag.edges {
        let _ = write!(out, "{},{},{}", j, j2, edge.multiplicity);
        for g in &groups {
            let _ = write!(out, ",{}", edge.group_counts.get(*g).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out
}
