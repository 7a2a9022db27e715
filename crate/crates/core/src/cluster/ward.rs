use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ClusterError, PhoneProfileMatrix};
use crate::eval::Learner;

/// Membership bitset over the items of one clustering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafSet(Vec<u64>);

impl LeafSet {
    fn singleton(n: usize, i: usize) -> Self {
        let mut words = vec![0u64; n.div_ceil(64)];
        words[i / 64] |= 1 << (i % 64);
        Self(words)
    }

    fn union(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    pub fn from_items(n: usize, items: &[usize]) -> Self {
        let mut s = Self(vec![0u64; n.div_ceil(64)]);
        for &i in items {
            s.0[i / 64] |= 1 << (i % 64);
        }
        s
    }

    pub fn items(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, bits) in self.0.iter().enumerate() {
            for b in 0..64 {
                if bits & (1 << b) != 0 {
                    out.push(w * 64 + b);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Child {
    Leaf(usize),
    Node(usize),
}

/// One agglomeration step. Nodes are stored in merge order, so a node only
/// refers to earlier nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub left: Child,
    pub right: Child,
    pub height: f64,
    /// Sorted item indices under this node.
    pub leaves: Vec<usize>,
    /// Approximately unbiased p-value; `None` when unavailable.
    pub au: Option<f64>,
    /// Bootstrap probability at the original sample size.
    pub bp: Option<f64>,
    /// Raw bootstrap frequencies, one per scale.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bp_by_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub source: Learner,
    pub nodes: Vec<ClusterNode>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn root(&self) -> &ClusterNode {
        self.nodes.last().expect("a dendrogram has at least one merge")
    }

    /// Label sets paired with heights, sorted; equal for isomorphic trees.
    pub fn clusters(&self) -> Vec<(BTreeSet<String>, f64)> {
        let mut out: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                (
                    n.leaves.iter().map(|&i| self.labels[i].clone()).collect(),
                    n.height,
                )
            })
            .collect();
        out.sort_by(|a: &(BTreeSet<String>, f64), b| a.0.cmp(&b.0));
        out
    }

    pub fn leaf_set(&self, node: usize) -> LeafSet {
        LeafSet::from_items(self.n_leaves(), &self.nodes[node].leaves)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ward agglomeration via the Lance-Williams recurrence on squared
/// Euclidean distances. Returns `(left, right, height)` per step, where
/// children are referenced as in [`Child`]. Ties go to the pair with the
/// lowest (first, second) slot indices.
pub fn ward_merges(rows: &[Vec<f64>]) -> Vec<(Child, Child, f64, usize)> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(&rows[i], &rows[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut node: Vec<Child> = (0..n).map(Child::Leaf).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let (mut bi, mut bj, mut best) = (0, 1, f64::INFINITY);
        for (ai, &i) in active.iter().enumerate() {
            for (aj, &j) in active.iter().enumerate().skip(ai + 1) {
                let v = d[i * n + j];
                if v < best {
                    (bi, bj, best) = (ai, aj, v);
                }
            }
        }
        let (i, j) = (active[bi], active[bj]);
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((ni + nk) * d[i * n + k] + (nj + nk) * d[j * n + k] - nk * best)
                / (ni + nj + nk);
            d[i * n + k] = v;
            d[k * n + i] = v;
        }
        merges.push((node[i], node[j], best, size[i] + size[j]));
        node[i] = Child::Node(merges.len() - 1);
        size[i] += size[j];
        active.remove(bj);
    }
    merges
}

/// Leaf sets of every merge produced by [`ward_merges`].
pub(crate) fn merge_leaf_sets(n: usize, merges: &[(Child, Child, f64, usize)]) -> Vec<LeafSet> {
    let mut sets: Vec<LeafSet> = Vec::with_capacity(merges.len());
    for (l, r, _, _) in merges {
        let get = |c: &Child, sets: &Vec<LeafSet>| match *c {
            Child::Leaf(i) => LeafSet::singleton(n, i),
            Child::Node(k) => sets[k].clone(),
        };
        let s = get(l, &sets).union(&get(r, &sets));
        sets.push(s);
    }
    sets
}

pub fn ward_cluster(profiles: &PhoneProfileMatrix) -> Result<Dendrogram, ClusterError> {
    let n = profiles.n_items();
    if n < 2 {
        return Err(ClusterError::TooFewItems(n));
    }
    let merges = ward_merges(&profiles.rows);
    let sets = merge_leaf_sets(n, &merges);
    let nodes = merges
        .into_iter()
        .zip(sets)
        .map(|((left, right, height, _), set)| ClusterNode {
            left,
            right,
            height,
            leaves: set.items(),
            au: None,
            bp: None,
            bp_by_scale: Vec::new(),
        })
        .collect();
    Ok(Dendrogram {
        labels: profiles.labels.clone(),
        source: profiles.source,
        nodes,
    })
}
