//! Hierarchical clustering of per-phone learned profiles, with multiscale
//! bootstrap support values.

mod bootstrap;
mod export;
mod ward;

pub use bootstrap::{bootstrap_pvalues, fit_multiscale, BootstrapConfig, MultiscaleFit};
pub use export::{dendrogram_from_json, to_dot, to_json, to_newick, DendrogramFormat};
pub use ward::{ward_cluster, ward_merges, Child, ClusterNode, Dendrogram, LeafSet};

use thiserror::Error;

use crate::corpus::{PhoneId, PhoneInventory, N_PHONES};
use crate::ecl::WeightMatrix;
use crate::eval::Learner;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least 2 items to cluster, got {0}")]
    TooFewItems(usize),
    #[error("profile rows have inconsistent or zero length")]
    Ragged,
    #[error("non-finite profile entry for item {0}")]
    NonFinite(usize),
    #[error("phone {0:?} has no test records")]
    MissingPhone(String),
    #[error("invalid bootstrap configuration: {0}")]
    Config(String),
    #[error("dendrogram does not belong to these profiles")]
    Mismatch,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Items (phones) × features table handed to the clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneProfileMatrix {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub source: Learner,
}

impl PhoneProfileMatrix {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>, source: Learner) -> Result<Self, ClusterError> {
        if labels.len() != rows.len() {
            return Err(ClusterError::Ragged);
        }
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(ClusterError::Ragged);
        }
        if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(ClusterError::NonFinite(i));
        }
        Ok(Self { labels, rows, source })
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Keeps only the listed items, in the given order.
    pub fn restrict(&self, items: &[usize]) -> Self {
        Self {
            labels: items.iter().map(|&i| self.labels[i].clone()).collect(),
            rows: items.iter().map(|&i| self.rows[i].clone()).collect(),
            source: self.source,
        }
    }
}

/// Phone `j`'s profile is column `j` of the weight matrix.
pub fn ecl_profiles(w: &WeightMatrix, inventory: &PhoneInventory, source: Learner) -> PhoneProfileMatrix {
    PhoneProfileMatrix {
        labels: inventory.labels().to_vec(),
        rows: (0..N_PHONES).map(|j| w.column(j).to_vec()).collect(),
        source,
    }
}

/// Mean vote-share vector over test frames of each true phone. With
/// `observed_only`, phones without records are dropped instead of being an
/// error.
pub fn mbl_profiles<'a>(
    inventory: &PhoneInventory,
    votes: impl IntoIterator<Item = (PhoneId, &'a [f64; N_PHONES])>,
    observed_only: bool,
) -> Result<PhoneProfileMatrix, ClusterError> {
    let mut sums = vec![[0.0; N_PHONES]; N_PHONES];
    let mut counts = [0usize; N_PHONES];
    for (truth, shares) in votes {
        counts[truth.0] += 1;
        for (s, v) in sums[truth.0].iter_mut().zip(shares) {
            *s += v;
        }
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for j in 0..N_PHONES {
        if counts[j] == 0 {
            if observed_only {
                continue;
            }
            return Err(ClusterError::MissingPhone(inventory.label(PhoneId(j)).to_owned()));
        }
        labels.push(inventory.label(PhoneId(j)).to_owned());
        rows.push(sums[j].iter().map(|s| s / counts[j] as f64).collect());
    }
    PhoneProfileMatrix::new(labels, rows, Learner::Mbl)
}
