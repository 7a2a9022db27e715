//! Synthetic fixtures for the benchmarks.

use phonelearn::mfcc::AudioSegment;
use phonelearn::{FrameDataset, LabeledFrame, PhoneId, PhoneInventory, PhoneProfileMatrix, Learner, N_CUES, N_PHONES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` frames in 5-frame words; each phone has its own mean pattern plus noise.
pub fn frames(n: usize, seed: u64) -> FrameDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<[f64; N_CUES]> = (0..N_PHONES)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let frames = (0..n)
        .map(|t| {
            let phone = rng.random_range(0..N_PHONES);
            LabeledFrame {
                word_id: format!("w{}", t / 5),
                trial_index: t as u64,
                phone: PhoneId(phone),
                cues: std::array::from_fn(|f| means[phone][f] + rng.random_range(-0.3..0.3)),
            }
        })
        .collect();
    FrameDataset::from_frames(PhoneInventory::arpabet(), frames).expect("ordered trials")
}

/// 40 items with `p` random features.
pub fn profiles(p: usize, seed: u64) -> PhoneProfileMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..N_PHONES)
        .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    PhoneProfileMatrix::new(PhoneInventory::arpabet().labels().to_vec(), rows, Learner::Wh)
        .expect("well-formed profiles")
}

/// `seconds` of noisy two-tone audio at 16 kHz.
pub fn audio(seconds: f64, seed: u64) -> AudioSegment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * 16_000.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            0.3 * (2.0 * std::f64::consts::PI * 300.0 * t).sin()
                + 0.2 * (2.0 * std::f64::consts::PI * 1200.0 * t).sin()
                + rng.random_range(-0.05..0.05)
        })
        .collect();
    AudioSegment { samples, sample_rate: 16_000 }
}
