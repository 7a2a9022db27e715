//! Training-regime generators: per-phone Gaussian resampling and the
//! multi-session consistency simulation.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    sample_from, CorpusError, Cues, FrameDataset, LabeledFrame, PhoneId, N_CUES, N_PHONES,
};
use crate::seed::derive_seed;

/// Word id carried by every generated Gaussian frame; the generated data
/// forms one continuous stream.
pub const GAUSSIAN_WORD: &str = "gaussian";

#[derive(Debug, Error)]
pub enum RegimeError {
    #[error("phone {phone:?} has {count} training frame(s); at least 2 are needed")]
    TooFewFrames { phone: String, count: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianConfig {
    pub n_per_phone: usize,
    pub seed: u64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            n_per_phone: 100,
            seed: 0,
        }
    }
}

/// Per-phone feature means and standard errors of the mean.
#[derive(Debug, Clone)]
pub struct PhoneMoments {
    pub count: [usize; N_PHONES],
    pub mean: Vec<Cues>,
    pub standard_error: Vec<Cues>,
}

pub fn phone_moments(train: &FrameDataset) -> Result<PhoneMoments, RegimeError> {
    let count = train.phone_counts();
    if let Some(j) = (0..N_PHONES).find(|&j| count[j] < 2) {
        return Err(RegimeError::TooFewFrames {
            phone: train.inventory.label(PhoneId(j)).to_owned(),
            count: count[j],
        });
    }
    let mut mean = vec![[0.0; N_CUES]; N_PHONES];
    for f in &train.frames {
        for (m, c) in mean[f.phone.0].iter_mut().zip(&f.cues) {
            *m += c;
        }
    }
    for (m, &n) in mean.iter_mut().zip(&count) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut ss = vec![[0.0; N_CUES]; N_PHONES];
    for f in &train.frames {
        let mu = &mean[f.phone.0];
        for ((s, c), m) in ss[f.phone.0].iter_mut().zip(&f.cues).zip(mu) {
            *s += (c - m) * (c - m);
        }
    }
    let standard_error = ss
        .iter()
        .zip(&count)
        .map(|(s, &n)| {
            let n = n as f64;
            std::array::from_fn(|f| (s[f] / (n - 1.0)).sqrt() / n.sqrt())
        })
        .collect();
    Ok(PhoneMoments {
        count,
        mean,
        standard_error,
    })
}

/// Draws `n_per_phone` frames per phone with every feature independently
/// Normal(mean, standard error), then shuffles them into one stream.
pub fn gaussian_generate(
    train: &FrameDataset,
    config: &GaussianConfig,
) -> Result<FrameDataset, RegimeError> {
    if config.n_per_phone == 0 {
        return Err(RegimeError::Argument("n_per_phone must be at least 1".into()));
    }
    let moments = phone_moments(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut frames = Vec::with_capacity(N_PHONES * config.n_per_phone);
    for j in 0..N_PHONES {
        let dists: Vec<Normal<f64>> = (0..N_CUES)
            .map(|f| {
                Normal::new(moments.mean[j][f], moments.standard_error[j][f])
                    .map_err(|e| RegimeError::Argument(format!("phone {j}, feature {f}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        for _ in 0..config.n_per_phone {
            let cues: Cues = std::array::from_fn(|f| dists[f].sample(&mut rng));
            frames.push(LabeledFrame {
                word_id: GAUSSIAN_WORD.to_owned(),
                trial_index: 0,
                phone: PhoneId(j),
                cues,
            });
        }
    }
    frames.shuffle(&mut rng);
    for (t, f) in frames.iter_mut().enumerate() {
        f.trial_index = t as u64;
    }
    Ok(FrameDataset {
        inventory: train.inventory.clone(),
        frames,
    })
}

/// One Gaussian dataset per requested per-phone size, each with its own
/// derived seed.
pub fn gaussian_scaling_series(
    train: &FrameDataset,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<FrameDataset>, RegimeError> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            gaussian_generate(
                train,
                &GaussianConfig {
                    n_per_phone: n,
                    seed: derive_seed(seed, "gaussian-series", i as u64),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicationOrder {
    /// The whole sample repeated in its original order.
    #[default]
    Tiled,
    /// Each pass presents the words in a fresh random order; frames within
    /// a word keep their order.
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub n_sessions: usize,
    pub vocab_size: usize,
    pub replications: usize,
    pub noise_fraction: f64,
    pub noise_sd_scale: f64,
    pub test_words: usize,
    pub order: ReplicationOrder,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_sessions: 5,
            vocab_size: 300,
            replications: 1000,
            noise_fraction: 0.5,
            noise_sd_scale: 0.05,
            test_words: 200,
            order: ReplicationOrder::Tiled,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), RegimeError> {
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(RegimeError::Argument(format!(
                "noise_fraction must lie in [0, 1], got {}",
                self.noise_fraction
            )));
        }
        if !self.test_words.is_multiple_of(2) {
            return Err(RegimeError::Argument(format!(
                "test_words must be even, got {}",
                self.test_words
            )));
        }
        if self.test_words / 2 > self.vocab_size {
            return Err(RegimeError::Argument(format!(
                "{} known test words cannot come from a vocabulary of {}",
                self.test_words / 2,
                self.vocab_size
            )));
        }
        if self.replications == 0 || self.vocab_size == 0 {
            return Err(RegimeError::Argument(
                "replications and vocab_size must be positive".into(),
            ));
        }
        if !(self.noise_sd_scale >= 0.0 && self.noise_sd_scale.is_finite()) {
            return Err(RegimeError::Argument(format!(
                "noise_sd_scale must be non-negative, got {}",
                self.noise_sd_scale
            )));
        }
        Ok(())
    }
}

/// One simulated learner's experience. The replicated, partially noised
/// training stream is generated lazily from the source sample.
#[derive(Debug, Clone)]
pub struct Session {
    pub index: usize,
    pub vocabulary: BTreeSet<String>,
    /// Frames of the vocabulary words, corpus order, unreplicated.
    pub source: FrameDataset,
    pub replications: usize,
    pub order: ReplicationOrder,
    pub known_words: BTreeSet<String>,
    pub new_words: BTreeSet<String>,
    /// Unnoised frames of the known and new test words, corpus order.
    pub test: FrameDataset,
    noise_sd: Cues,
    noisy: Vec<bool>,
    noise_seed: u64,
    order_seed: u64,
    word_runs: Vec<(usize, usize)>,
}

impl Session {
    pub fn stream_len(&self) -> usize {
        self.source.len() * self.replications
    }

    pub fn noisy_count(&self) -> usize {
        self.noisy.iter().filter(|&&b| b).count()
    }

    pub fn is_noisy(&self, position: usize) -> bool {
        self.noisy[position]
    }

    pub fn noise_sd(&self) -> &Cues {
        &self.noise_sd
    }

    fn pass_order(&self, pass: usize) -> Vec<usize> {
        let mut runs: Vec<usize> = (0..self.word_runs.len()).collect();
        if self.order == ReplicationOrder::Interleaved {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.order_seed, "pass", pass as u64));
            runs.shuffle(&mut rng);
        }
        runs
    }

    fn noise_for(&self, position: usize) -> Cues {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        rng.set_stream(position as u64);
        std::array::from_fn(|f| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * self.noise_sd[f]
        })
    }

    /// The replicated training stream; trial indices are stream positions.
    pub fn stream(&self) -> impl Iterator<Item = LabeledFrame> + '_ {
        (0..self.replications).flat_map(move |pass| {
            let order = self.pass_order(pass);
            let base = pass * self.source.len();
            order
                .into_iter()
                .flat_map(move |r| {
                    let (a, b) = self.word_runs[r];
                    a..b
                })
                .enumerate()
                .map(move |(offset, src)| {
                    let position = base + offset;
                    let mut frame = self.source.frames[src].clone();
                    frame.trial_index = position as u64;
                    if self.noisy[position] {
                        let noise = self.noise_for(position);
                        for (c, n) in frame.cues.iter_mut().zip(&noise) {
                            *c += n;
                        }
                    }
                    frame
                })
        })
    }

    pub fn materialize(&self) -> FrameDataset {
        FrameDataset {
            inventory: self.source.inventory.clone(),
            frames: self.stream().collect(),
        }
    }

    /// Word lists and seeds for audit.
    pub fn manifest(&self) -> SessionManifest {
        SessionManifest {
            index: self.index,
            vocabulary: self.vocabulary.iter().cloned().collect(),
            known_words: self.known_words.iter().cloned().collect(),
            new_words: self.new_words.iter().cloned().collect(),
            source_frames: self.source.len(),
            stream_len: self.stream_len(),
            noisy_frames: self.noisy_count(),
            noise_seed: self.noise_seed,
            order_seed: self.order_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub index: usize,
    pub vocabulary: Vec<String>,
    pub known_words: Vec<String>,
    pub new_words: Vec<String>,
    pub source_frames: usize,
    pub stream_len: usize,
    pub noisy_frames: usize,
    pub noise_seed: u64,
    pub order_seed: u64,
}

fn feature_sd(ds: &FrameDataset) -> Cues {
    let n = ds.len();
    if n < 2 {
        return [0.0; N_CUES];
    }
    let mut mean = [0.0; N_CUES];
    for f in &ds.frames {
        for (m, c) in mean.iter_mut().zip(&f.cues) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = [0.0; N_CUES];
    for f in &ds.frames {
        for ((s, c), m) in ss.iter_mut().zip(&f.cues).zip(&mean) {
            *s += (c - m) * (c - m);
        }
    }
    ss.map(|s| (s / (n - 1) as f64).sqrt())
}

fn word_runs(ds: &FrameDataset) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=ds.len() {
        if i == ds.len() || ds.frames[i].word_id != ds.frames[start].word_id {
            runs.push((start, i));
            start = i;
        }
    }
    runs
}

/// Samples a vocabulary, prepares its replicated noisy training stream and
/// draws a half-known, half-new test set.
pub fn build_session(
    corpus: &FrameDataset,
    config: &SessionConfig,
    session_index: usize,
) -> Result<Session, RegimeError> {
    config.validate()?;
    let words = corpus.word_ids();
    let half = config.test_words / 2;
    if words.len() < config.vocab_size + half {
        return Err(RegimeError::Argument(format!(
            "corpus has {} words; a session needs {} vocabulary plus {} new test words",
            words.len(),
            config.vocab_size,
            half
        )));
    }
    let stage = |name: &str| derive_seed(config.seed, name, session_index as u64);

    let vocabulary = sample_from(&words, config.vocab_size, stage("session-vocab"))?;
    let source = corpus.select_words(&vocabulary);

    let vocab_list: Vec<&str> = vocabulary.iter().map(String::as_str).collect();
    let known_words = sample_from(&vocab_list, half, stage("session-known"))?;
    let outside: Vec<&str> = words
        .iter()
        .copied()
        .filter(|w| !vocabulary.contains(*w))
        .collect();
    let new_words = sample_from(&outside, half, stage("session-new"))?;
    let test_set: BTreeSet<String> = known_words.union(&new_words).cloned().collect();
    let test = corpus.select_words(&test_set);

    let n_stream = source.len() * config.replications;
    let n_noisy = ((config.noise_fraction * n_stream as f64) + 0.5).floor() as usize;
    let mut noisy = vec![false; n_stream];
    let mut rng = ChaCha8Rng::seed_from_u64(stage("session-noise-select"));
    for i in index::sample(&mut rng, n_stream, n_noisy.min(n_stream)) {
        noisy[i] = true;
    }
    let noise_sd = feature_sd(&source).map(|sd| sd * config.noise_sd_scale);

    Ok(Session {
        index: session_index,
        vocabulary,
        word_runs: word_runs(&source),
        source,
        replications: config.replications,
        order: config.order,
        known_words,
        new_words,
        test,
        noise_sd,
        noisy,
        noise_seed: stage("session-noise"),
        order_seed: stage("session-order"),
    })
}
