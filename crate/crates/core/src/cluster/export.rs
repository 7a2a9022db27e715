use std::fmt::Write as _;
use std::str::FromStr;

use super::ward::{Child, Dendrogram};
use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DendrogramFormat {
    Newick,
    Dot,
    Json,
}

impl DendrogramFormat {
    pub const ALL: [DendrogramFormat; 3] = [Self::Newick, Self::Dot, Self::Json];

    pub fn extension(self) -> &'static str {
        match self {
            Self::Newick => "nwk",
            Self::Dot => "dot",
            Self::Json => "json",
        }
    }

    pub fn render(self, d: &Dendrogram) -> Result<String, ClusterError> {
        Ok(match self {
            Self::Newick => to_newick(d),
            Self::Dot => to_dot(d),
            Self::Json => to_json(d)?,
        })
    }
}

impl FromStr for DendrogramFormat {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "newick" | "nwk" => Ok(Self::Newick),
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            other => Err(ClusterError::Config(format!("unknown dendrogram format {other:?}"))),
        }
    }
}

fn newick_label(label: &str) -> String {
    if label
        .chars()
        .any(|c| c.is_whitespace() || "()[]':;,".contains(c))
    {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_owned()
    }
}

fn child_height(d: &Dendrogram, c: Child) -> f64 {
    match c {
        Child::Leaf(_) => 0.0,
        Child::Node(k) => d.nodes[k].height,
    }
}

fn write_newick(d: &Dendrogram, c: Child, parent: f64, out: &mut String) {
    match c {
        Child::Leaf(i) => out.push_str(&newick_label(&d.labels[i])),
        Child::Node(k) => {
            let node = &d.nodes[k];
            out.push('(');
            write_newick(d, node.left, node.height, out);
            out.push(',');
            write_newick(d, node.right, node.height, out);
            out.push(')');
        }
    }
    let _ = write!(out, ":{}", parent - child_height(d, c));
}

/// Newick with branch lengths equal to height differences, so each leaf
/// sits at distance `height` from its first merge.
pub fn to_newick(d: &Dendrogram) -> String {
    let mut out = String::new();
    let root = d.nodes.len() - 1;
    let node = &d.nodes[root];
    out.push('(');
    write_newick(d, node.left, node.height, &mut out);
    out.push(',');
    write_newick(d, node.right, node.height, &mut out);
    out.push_str(");");
    out
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| format!("{:.0}", 100.0 * v))
}

/// Graphviz digraph. Merge nodes carry AU (red) and BP (green) in percent.
pub fn to_dot(d: &Dendrogram) -> String {
    let mut out = String::from("digraph dendrogram {\n  rankdir=BT;\n  node [shape=plaintext];\n");
    for (i, label) in d.labels.iter().enumerate() {
        let _ = writeln!(out, "  leaf_{i} [label=\"{}\"];", label.replace('"', "\\\""));
    }
    for (k, node) in d.nodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "  node_{k} [label=<<font color=\"red\">{}</font> <font color=\"green\">{}</font>>, height_value=\"{}\", au=\"{}\", bp=\"{}\"];",
            pct(node.au),
            pct(node.bp),
            node.height,
            node.au.map_or_else(|| "NA".to_owned(), |v| v.to_string()),
            node.bp.map_or_else(|| "NA".to_owned(), |v| v.to_string()),
        );
    }
    for (k, node) in d.nodes.iter().enumerate() {
        for c in [node.left, node.right] {
            let from = match c {
                Child::Leaf(i) => format!("leaf_{i}"),
                Child::Node(j) => format!("node_{j}"),
            };
            let _ = writeln!(out, "  {from} -> node_{k};");
        }
    }
    out.push_str("}\n");
    out
}

pub fn to_json(d: &Dendrogram) -> Result<String, ClusterError> {
    Ok(serde_json::to_string_pretty(d)?)
}

/// Parses and structurally validates a JSON dendrogram.
pub fn dendrogram_from_json(text: &str) -> Result<Dendrogram, ClusterError> {
    let d: Dendrogram = serde_json::from_str(text)?;
    let n = d.labels.len();
    if n < 2 || d.nodes.len() + 1 != n {
        return Err(ClusterError::Mismatch);
    }
    let mut used = vec![false; n + d.nodes.len()];
    for (k, node) in d.nodes.iter().enumerate() {
        let mut leaves = Vec::new();
        for c in [node.left, node.right] {
            let slot = match c {
                Child::Leaf(i) if i < n => {
                    leaves.push(i);
                    i
                }
                Child::Node(j) if j < k => {
                    leaves.extend(&d.nodes[j].leaves);
                    n + j
                }
                _ => return Err(ClusterError::Mismatch),
            };
            if std::mem::replace(&mut used[slot], true) {
                return Err(ClusterError::Mismatch);
            }
        }
        leaves.sort_unstable();
        if leaves != node.leaves {
            return Err(ClusterError::Mismatch);
        }
    }
    Ok(d)
}
