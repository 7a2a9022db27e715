//! MFCC front-end: 16 kHz audio and phone segments in, 39-dimensional
//! labeled frames out.
//!
//! Per frame: pre-emphasis, Hamming window, power spectrum, triangular mel
//! filterbank spanning 0 Hz to Nyquist, floored natural log, orthonormal
//! DCT-II, first `n_cepstra` coefficients. Deltas use the regression formula
//! with edge replication.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Cues, LabeledFrame, PhoneSegment, N_CUES};

/// Energies below this are clamped before the log.
pub const LOG_FLOOR: f64 = 1e-10;

const N_BASE: usize = N_CUES / 3;

#[derive(Debug, Error)]
pub enum MfccError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("segment out of range: {0}")]
    Range(String),
    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),
}

/// How frames are cut relative to the phone segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Framing {
    /// Each segment is windowed on its own, last window zero-padded.
    #[default]
    PerSegment,
    /// The whole word is windowed once; frames take the label of the
    /// segment holding their centre.
    PerWord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub window_len: f64,
    pub hop: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    pub pre_emphasis: f64,
    pub delta_window: usize,
    pub framing: Framing,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_len: 0.025,
            hop: 0.010,
            n_mel_filters: 26,
            n_cepstra: 13,
            pre_emphasis: 0.97,
            delta_window: 2,
            framing: Framing::PerSegment,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), MfccError> {
        if self.sample_rate == 0 {
            return Err(MfccError::Argument("sample_rate must be positive".into()));
        }
        if !(self.hop > 0.0 && self.window_len > self.hop) {
            return Err(MfccError::Argument(format!(
                "need window_len > hop > 0, got window_len={} hop={}",
                self.window_len, self.hop
            )));
        }
        if self.n_cepstra > self.n_mel_filters || self.n_cepstra == 0 {
            return Err(MfccError::Argument(format!(
                "need 0 < n_cepstra <= n_mel_filters, got {} and {}",
                self.n_cepstra, self.n_mel_filters
            )));
        }
        if self.n_cepstra != N_BASE {
            return Err(MfccError::Argument(format!(
                "labeled frames carry {N_BASE} cepstra plus deltas; n_cepstra = {} is unsupported",
                self.n_cepstra
            )));
        }
        if self.delta_window == 0 {
            return Err(MfccError::Argument("delta_window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_len * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop * self.sample_rate as f64).round() as usize
    }

    pub fn fft_size(&self) -> usize {
        self.window_samples().next_power_of_two()
    }

    fn to_samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSegment {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads 16-bit PCM mono WAV, scaling samples into [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSegment, MfccError> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(MfccError::Argument(format!(
            "expected 16-bit PCM mono, got {} channel(s), {} bits, {:?}",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AudioSegment {
        samples,
        sample_rate: spec.sample_rate,
    })
}

fn frames_for_samples(n: usize, window: usize, hop: usize) -> usize {
    if n <= window {
        1
    } else {
        (n - window).div_ceil(hop) + 1
    }
}

/// Number of windows covering `duration` seconds, the last one padded.
/// Computed on whole samples so 0.100 s gives 9 frames at the defaults.
pub fn frame_count(duration: f64, config: &MfccConfig) -> Result<usize, MfccError> {
    if duration.is_nan() || duration <= 0.0 {
        return Err(MfccError::Argument(format!(
            "duration must be positive, got {duration}"
        )));
    }
    config.validate()?;
    Ok(frames_for_samples(
        config.to_samples(duration),
        config.window_samples(),
        config.hop_samples(),
    ))
}

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Reusable extractor; holds the FFT plan, window and filterbank.
pub struct MfccExtractor {
    config: MfccConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Per filter: first bin and its weights.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(config: &MfccConfig) -> Result<Self, MfccError> {
        config.validate()?;
        let n_win = config.window_samples();
        let n_fft = config.fft_size();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);

        let window = if n_win == 1 {
            vec![1.0]
        } else {
            (0..n_win)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n_win - 1) as f64).cos())
                .collect()
        };

        let sr = config.sample_rate as f64;
        let n_bins = n_fft / 2 + 1;
        let m_max = mel(sr / 2.0);
        let edges: Vec<f64> = (0..config.n_mel_filters + 2)
            .map(|i| inv_mel(m_max * i as f64 / (config.n_mel_filters + 1) as f64))
            .collect();
        let filters = edges
            .windows(3)
            .map(|e| {
                let (lo, centre, hi) = (e[0], e[1], e[2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * sr / n_fft as f64;
                        let w = if f > lo && f <= centre {
                            (f - lo) / (centre - lo)
                        } else if f > centre && f < hi {
                            (hi - f) / (hi - centre)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |&(k, _)| k);
                (first, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();

        let m = config.n_mel_filters;
        let dct = (0..config.n_cepstra)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / m as f64).sqrt()
                } else {
                    (2.0 / m as f64).sqrt()
                };
                (0..m)
                    .map(|j| scale * (PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
                    .collect()
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            fft,
            window,
            filters,
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    /// Cepstra for every window of `samples`.
    pub fn cepstra(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        let n_win = self.config.window_samples();
        let hop = self.config.hop_samples();
        let n_fft = self.config.fft_size();
        let alpha = self.config.pre_emphasis;

        let emphasized: Vec<f64> = samples
            .iter()
            .enumerate()
            .map(|(i, &x)| if i == 0 { x } else { x - alpha * samples[i - 1] })
            .collect();

        let n_frames = frames_for_samples(samples.len(), n_win, hop);
        let mut buffer = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut energies = vec![0.0; self.filters.len()];

        (0..n_frames)
            .map(|t| {
                let start = t * hop;
                for (i, slot) in buffer.iter_mut().enumerate() {
                    let x = if i < n_win {
                        emphasized.get(start + i).copied().unwrap_or(0.0) * self.window[i]
                    } else {
                        0.0
                    };
                    *slot = Complex::new(x, 0.0);
                }
                self.fft.process_with_scratch(&mut buffer, &mut scratch);

                for (e, (first, weights)) in energies.iter_mut().zip(&self.filters) {
                    let sum: f64 = weights
                        .iter()
                        .zip(&buffer[*first..])
                        .map(|(w, c)| w * c.norm_sqr())
                        .sum();
                    *e = sum.max(LOG_FLOOR).ln();
                }
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(&energies).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }
}

/// One `n_cepstra`-vector per window of the segment.
pub fn extract_mfcc(
    segment: &AudioSegment,
    config: &MfccConfig,
) -> Result<Vec<Vec<f64>>, MfccError> {
    check_audio(segment, config)?;
    Ok(MfccExtractor::new(config)?.cepstra(&segment.samples))
}

fn check_audio(segment: &AudioSegment, config: &MfccConfig) -> Result<(), MfccError> {
    if segment.sample_rate != config.sample_rate {
        return Err(MfccError::Argument(format!(
            "sample rate {} does not match configured {}",
            segment.sample_rate, config.sample_rate
        )));
    }
    if segment.samples.is_empty() {
        return Err(MfccError::Argument("empty audio".into()));
    }
    Ok(())
}

/// Regression deltas over a frame sequence, indices clamped at the edges.
pub fn deltas(frames: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let n = frames.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = frames[0].len();
    let denom = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    (0..n)
        .map(|t| {
            (0..dim)
                .map(|d| {
                    (1..=window)
                        .map(|k| {
                            let fwd = &frames[(t + k).min(n - 1)];
                            let back = &frames[t.saturating_sub(k)];
                            k as f64 * (fwd[d] - back[d])
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// Appends deltas and delta-deltas to 13-dimensional cepstra.
pub fn add_deltas(cepstra: &[Vec<f64>], delta_window: usize) -> Result<Vec<Cues>, MfccError> {
    if cepstra.is_empty() {
        return Err(MfccError::Argument("no frames".into()));
    }
    if let Some(bad) = cepstra.iter().find(|c| c.len() != N_BASE) {
        return Err(MfccError::Argument(format!(
            "expected {N_BASE} cepstra per frame, got {}",
            bad.len()
        )));
    }
    let d = deltas(cepstra, delta_window);
    let dd = deltas(&d, delta_window);
    Ok(cepstra
        .iter()
        .zip(&d)
        .zip(&dd)
        .map(|((c, d), dd)| {
            let mut out = [0.0; N_CUES];
            out[..N_BASE].copy_from_slice(c);
            out[N_BASE..2 * N_BASE].copy_from_slice(d);
            out[2 * N_BASE..].copy_from_slice(dd);
            out
        })
        .collect())
}

/// Turns one word's audio and its aligned segments into labeled frames.
/// Trial indices start at `first_trial` and follow temporal order.
pub fn extract_labeled_frames(
    audio: &AudioSegment,
    segments: &[PhoneSegment],
    config: &MfccConfig,
    first_trial: u64,
) -> Result<Vec<LabeledFrame>, MfccError> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    check_audio(audio, config)?;
    let extractor = MfccExtractor::new(config)?;
    let n = audio.samples.len();
    let bounds = segments
        .iter()
        .map(|seg| {
            let (a, b) = (config.to_samples(seg.start), config.to_samples(seg.end));
            if b > n || a >= b {
                Err(MfccError::Range(format!(
                    "segment {} [{}, {}] s of word {} exceeds audio of {:.4} s",
                    seg.phone.0,
                    seg.start,
                    seg.end,
                    seg.word_id,
                    audio.duration()
                )))
            } else {
                Ok((a, b))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    let mut trial = first_trial;
    match config.framing {
        Framing::PerSegment => {
            for (seg, &(a, b)) in segments.iter().zip(&bounds) {
                let cepstra = extractor.cepstra(&audio.samples[a..b]);
                for cues in add_deltas(&cepstra, config.delta_window)? {
                    out.push(LabeledFrame {
                        word_id: seg.word_id.clone(),
                        trial_index: trial,
                        phone: seg.phone,
                        cues,
                    });
                    trial += 1;
                }
            }
        }
        Framing::PerWord => {
            let cepstra = extractor.cepstra(&audio.samples);
            let cues = add_deltas(&cepstra, config.delta_window)?;
            let (win, hop) = (config.window_samples(), config.hop_samples());
            for (t, c) in cues.into_iter().enumerate() {
                let centre = t * hop + win / 2;
                if let Some((seg, _)) = segments
                    .iter()
                    .zip(&bounds)
                    .find(|(_, &(a, b))| centre >= a && centre < b)
                {
                    out.push(LabeledFrame {
                        word_id: seg.word_id.clone(),
                        trial_index: trial,
                        phone: seg.phone,
                        cues: c,
                    });
                    trial += 1;
                }
            }
        }
    }
    Ok(out)
}
