use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use phonelearn::cluster::BootstrapConfig;
use phonelearn::{derive_seed, EclConfig, GaussianConfig, MblConfig, MfccConfig, SessionConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub audio_dir: Option<PathBuf>,
    pub alignments: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Weight matrix CSV or exemplar store manifest.
    pub state: Option<PathBuf>,
    /// Vote-share profiles written by `eval` for MBL.
    pub profiles: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Everything a run depends on. Loaded from TOML, then overridden by flags.
/// The `seed` fields of the nested stage configs are ignored: stage seeds
/// are always derived from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub learner: Option<String>,
    pub regime: String,
    pub test_fraction: f64,
    /// Per-phone sizes for `gaussian`; empty means `gaussian.n_per_phone`.
    pub gaussian_sizes: Vec<usize>,
    /// Drop all-zero weight columns (untrained phones) before clustering.
    pub drop_zero_profiles: bool,
    pub paths: Paths,
    pub mfcc: MfccConfig,
    pub ecl: EclConfig,
    pub mbl: MblConfig,
    pub gaussian: GaussianConfig,
    pub session: SessionConfig,
    pub bootstrap: BootstrapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            learner: None,
            regime: "raw".into(),
            test_fraction: 0.1,
            gaussian_sizes: Vec::new(),
            drop_zero_profiles: false,
            paths: Paths::default(),
            mfcc: MfccConfig::default(),
            ecl: EclConfig::default(),
            mbl: MblConfig::default(),
            gaussian: GaussianConfig::default(),
            session: SessionConfig::default(),
            bootstrap: BootstrapConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage, 0)
    }

    /// Overwrites the nested seeds with values derived from the master seed.
    pub fn derive_stage_seeds(&mut self) {
        self.gaussian.seed = self.stage_seed("gaussian");
        self.session.seed = self.stage_seed("session");
        self.bootstrap.seed = self.stage_seed("bootstrap");
    }

    /// Derived seeds are left out: they are recomputed on load, and TOML
    /// integers cannot hold the full u64 range.
    pub fn to_toml(&self) -> Result<String> {
        let mut plain = self.clone();
        plain.gaussian.seed = 0;
        plain.session.seed = 0;
        plain.bootstrap.seed = 0;
        Ok(toml::to_string(&plain)?)
    }
}

pub fn require<'a, T>(value: &'a Option<T>, what: &str) -> Result<&'a T> {
    value
        .as_ref()
        .with_context(|| format!("missing {what}"))
}
