//! Corpus data model: the phone inventory, aligned segments, labeled MFCC
//! frames and the file formats they travel in.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Cue dimensions per frame: 13 cepstra, 13 deltas, 13 delta-deltas.
pub const N_CUES: usize = 39;
/// Outcome classes: 39 ARPAbet phones plus silence.
pub const N_PHONES: usize = 40;
/// Reserved label for non-speech frames.
pub const SILENCE: &str = "silence";

/// One frame's cue vector.
pub type Cues = [f64; N_CUES];

const ARPABET: [&str; N_PHONES - 1] = [
    "aa", "ae", "ah", "ao", "aw", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g", "hh",
    "ih", "iy", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s", "sh", "t", "th", "uh",
    "uw", "v", "w", "y", "z", "zh",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("unknown phone label {label:?} at line {line}")]
    UnknownPhone { line: u64, label: String },
    #[error("invalid inventory: {0}")]
    Inventory(String),
    #[error("ordering error at line {line}: {message}")]
    Ordering { line: u64, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl From<csv::Error> for CorpusError {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => CorpusError::Io(io),
            other => CorpusError::Parse {
                line,
                message: format!("{other:?}"),
            },
        }
    }
}

/// Index of a phone within a [`PhoneInventory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhoneId(pub usize);

impl PhoneId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The ordered set of outcome classes. Column `j` of every weight matrix and
/// every per-phone table refers to `labels()[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl PhoneInventory {
    /// Silence first, then the 39 ARPAbet phones alphabetically.
    pub fn arpabet() -> Self {
        let labels = std::iter::once(SILENCE)
            .chain(ARPABET.iter().copied())
            .map(str::to_owned)
            .collect();
        Self::new(labels).expect("built-in inventory is valid")
    }

    pub fn new(labels: Vec<String>) -> Result<Self, CorpusError> {
        if labels.len() != N_PHONES {
            return Err(CorpusError::Inventory(format!(
                "expected {N_PHONES} labels, got {}",
                labels.len()
            )));
        }
        let labels: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
        let mut lookup = HashMap::with_capacity(N_PHONES);
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(CorpusError::Inventory("empty label".into()));
            }
            if lookup.insert(label.clone(), i).is_some() {
                return Err(CorpusError::Inventory(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { labels, lookup })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: PhoneId) -> &str {
        &self.labels[id.0]
    }

    /// Case-insensitive lookup. Aligner stress markers (`AH0`) are stripped
    /// and the usual pause symbols map to silence.
    pub fn id(&self, label: &str) -> Option<PhoneId> {
        self.lookup.get(&normalize_label(label)).copied().map(PhoneId)
    }

    pub fn ids(&self) -> impl Iterator<Item = PhoneId> {
        (0..self.labels.len()).map(PhoneId)
    }
}

impl Default for PhoneInventory {
    fn default() -> Self {
        Self::arpabet()
    }
}

fn normalize_label(raw: &str) -> String {
    let lower = raw.trim().to_ascii_lowercase();
    let stripped = lower.trim_end_matches(|c: char| c.is_ascii_digit());
    let base = if stripped.is_empty() { lower.as_str() } else { stripped };
    match base {
        "sil" | "sp" | "pau" | "spn" => SILENCE.to_owned(),
        other => other.to_owned(),
    }
}

/// A time-aligned phone within a recorded word.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSegment {
    pub word_id: String,
    pub phone: PhoneId,
    pub start: f64,
    pub end: f64,
}

impl PhoneSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// One learning trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub word_id: String,
    pub trial_index: u64,
    pub phone: PhoneId,
    pub cues: Cues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDataset {
    pub inventory: PhoneInventory,
    pub frames: Vec<LabeledFrame>,
}

impl FrameDataset {
    pub fn new(inventory: PhoneInventory) -> Self {
        Self {
            inventory,
            frames: Vec::new(),
        }
    }

    /// Builds a dataset, checking that trial indices increase strictly.
    pub fn from_frames(
        inventory: PhoneInventory,
        frames: Vec<LabeledFrame>,
    ) -> Result<Self, CorpusError> {
        for (i, pair) in frames.windows(2).enumerate() {
            if pair[1].trial_index <= pair[0].trial_index {
                return Err(CorpusError::Ordering {
                    line: i as u64 + 2,
                    message: format!(
                        "trial_index {} does not follow {}",
                        pair[1].trial_index, pair[0].trial_index
                    ),
                });
            }
        }
        if let Some(f) = frames.iter().find(|f| f.phone.0 >= inventory.len()) {
            return Err(CorpusError::Inventory(format!(
                "phone index {} outside inventory",
                f.phone.0
            )));
        }
        Ok(Self { inventory, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Distinct word ids in order of first appearance.
    pub fn word_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.frames
            .iter()
            .filter(|f| seen.insert(f.word_id.as_str()))
            .map(|f| f.word_id.as_str())
            .collect()
    }

    /// Frames whose word id is in `words`, order preserved.
    pub fn select_words(&self, words: &BTreeSet<String>) -> FrameDataset {
        FrameDataset {
            inventory: self.inventory.clone(),
            frames: self
                .frames
                .iter()
                .filter(|f| words.contains(&f.word_id))
                .cloned()
                .collect(),
        }
    }

    /// Per-phone frame counts.
    pub fn phone_counts(&self) -> [usize; N_PHONES] {
        let mut counts = [0usize; N_PHONES];
        for f in &self.frames {
            counts[f.phone.0] += 1;
        }
        counts
    }
}

impl fmt::Display for FrameDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} frames", self.frames.len())
    }
}

/// Reads a tab-separated alignment file: `word_id  phone  start  end`.
pub fn load_alignments(
    path: impl AsRef<Path>,
    inventory: &PhoneInventory,
) -> Result<Vec<PhoneSegment>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_alignments(file, inventory)
}

pub fn read_alignments<R: Read>(
    reader: R,
    inventory: &PhoneInventory,
) -> Result<Vec<PhoneSegment>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut segments: Vec<PhoneSegment> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(CorpusError::Parse {
                line,
                message: format!("expected 4 columns, found {}", record.len()),
            });
        }
        if segments.is_empty() && record[2].eq_ignore_ascii_case("start") {
            continue;
        }
        let parse_time = |field: &str| -> Result<f64, CorpusError> {
            field
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| CorpusError::Parse {
                    line,
                    message: format!("non-numeric time {field:?}"),
                })
        };
        let start = parse_time(&record[2])?;
        let end = parse_time(&record[3])?;
        if start < 0.0 {
            return Err(CorpusError::Parse {
                line,
                message: format!("negative start {start}"),
            });
        }
        if end <= start {
            return Err(CorpusError::Parse {
                line,
                message: format!("end {end} is not after start {start}"),
            });
        }
        let phone = inventory
            .id(&record[1])
            .ok_or_else(|| CorpusError::UnknownPhone {
                line,
                label: record[1].to_owned(),
            })?;
        let word_id = record[0].to_owned();
        if let Some(prev) = segments.last().filter(|p| p.word_id == word_id) {
            if start < prev.end {
                return Err(CorpusError::Ordering {
                    line,
                    message: format!(
                        "segment starting at {start} overlaps previous segment ending at {}",
                        prev.end
                    ),
                });
            }
        }
        segments.push(PhoneSegment {
            word_id,
            phone,
            start,
            end,
        });
    }
    Ok(segments)
}

fn feature_header() -> Vec<String> {
    let mut header = vec![
        "word_id".to_owned(),
        "trial_index".to_owned(),
        "phone".to_owned(),
    ];
    header.extend((0..N_CUES).map(|i| format!("mfcc_{i:02}")));
    header
}

/// Formats a float with 17 significant digits, enough to round-trip an f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn load_feature_table(
    path: impl AsRef<Path>,
    inventory: &PhoneInventory,
) -> Result<FrameDataset, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_feature_table(file, inventory)
}

pub fn read_feature_table<R: Read>(
    reader: R,
    inventory: &PhoneInventory,
) -> Result<FrameDataset, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = feature_header();
    let header = rdr.headers()?.clone();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a.trim() != b)
    {
        return Err(CorpusError::Parse {
            line: 1,
            message: format!(
                "expected header word_id,trial_index,phone,mfcc_00..mfcc_{:02} ({} columns), found {} columns",
                N_CUES - 1,
                expected.len(),
                header.len()
            ),
        });
    }

    let mut frames = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != expected.len() {
            return Err(CorpusError::Parse {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    expected.len(),
                    record.len()
                ),
            });
        }
        let trial_index = record[1].trim().parse::<u64>().map_err(|_| CorpusError::Parse {
            line,
            message: format!("invalid trial_index {:?}", &record[1]),
        })?;
        let phone = inventory
            .id(&record[2])
            .ok_or_else(|| CorpusError::UnknownPhone {
                line,
                label: record[2].to_owned(),
            })?;
        let mut cues = [0.0; N_CUES];
        for (k, slot) in cues.iter_mut().enumerate() {
            let field = record[3 + k].trim();
            *slot = field.parse::<f64>().map_err(|_| CorpusError::Parse {
                line,
                message: format!("invalid value {field:?} in mfcc_{k:02}"),
            })?;
        }
        if let Some(prev) = frames.last().map(|f: &LabeledFrame| f.trial_index) {
            if trial_index <= prev {
                return Err(CorpusError::Ordering {
                    line,
                    message: format!("trial_index {trial_index} does not follow {prev}"),
                });
            }
        }
        frames.push(LabeledFrame {
            word_id: record[0].to_owned(),
            trial_index,
            phone,
            cues,
        });
    }
    Ok(FrameDataset {
        inventory: inventory.clone(),
        frames,
    })
}

pub fn write_feature_table(
    path: impl AsRef<Path>,
    dataset: &FrameDataset,
) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_feature_table_to(&mut out, dataset)?;
    out.flush()?;
    Ok(())
}

pub fn write_feature_table_to<W: Write>(
    writer: W,
    dataset: &FrameDataset,
) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(feature_header())?;
    let mut row: Vec<String> = Vec::with_capacity(3 + N_CUES);
    for frame in &dataset.frames {
        row.clear();
        row.push(frame.word_id.clone());
        row.push(frame.trial_index.to_string());
        row.push(dataset.inventory.label(frame.phone).to_owned());
        row.extend(frame.cues.iter().map(|&v| format_f64(v)));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Round-half-up of `fraction * n`.
pub fn test_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

/// Splits a dataset into a uniformly random test subset of
/// `round(test_fraction * n)` frames and the remaining training frames.
/// Both halves keep the original temporal order.
pub fn split_train_test(
    dataset: &FrameDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(FrameDataset, FrameDataset), CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Argument("cannot split an empty dataset".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::Argument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let n_test = test_size(n, test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; n];
    for i in index::sample(&mut rng, n, n_test) {
        is_test[i] = true;
    }
    let mut train = FrameDataset::new(dataset.inventory.clone());
    let mut test = FrameDataset::new(dataset.inventory.clone());
    for (frame, &t) in dataset.frames.iter().zip(&is_test) {
        if t {
            test.frames.push(frame.clone());
        } else {
            train.frames.push(frame.clone());
        }
    }
    Ok((train, test))
}

/// Draws `n_words` distinct word ids uniformly without replacement.
pub fn sample_vocabulary(
    dataset: &FrameDataset,
    n_words: usize,
    seed: u64,
) -> Result<BTreeSet<String>, CorpusError> {
    let words = dataset.word_ids();
    sample_from(&words, n_words, seed)
}

pub(crate) fn sample_from(
    words: &[&str],
    n_words: usize,
    seed: u64,
) -> Result<BTreeSet<String>, CorpusError> {
    if words.len() < n_words {
        return Err(CorpusError::Argument(format!(
            "requested {n_words} words but only {} are available",
            words.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, words.len(), n_words)
        .into_iter()
        .map(|i| words[i].to_owned())
        .collect())
}

/// Relative frequency of each phone among the dataset's frames.
pub fn label_distribution(dataset: &FrameDataset) -> Result<[f64; N_PHONES], CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Argument(
            "label distribution of an empty dataset".into(),
        ));
    }
    let n = dataset.len() as f64;
    let counts = dataset.phone_counts();
    let mut dist = [0.0; N_PHONES];
    for (p, c) in dist.iter_mut().zip(counts) {
        *p = c as f64 / n;
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> PhoneInventory {
        PhoneInventory::arpabet()
    }

    fn frame(word: &str, t: u64, phone: &str, v: f64) -> LabeledFrame {
        LabeledFrame {
            word_id: word.into(),
            trial_index: t,
            phone: inv().id(phone).unwrap(),
            cues: [v; N_CUES],
        }
    }

    #[test]
    fn inventory_has_forty_distinct_labels() {
        let inv = inv();
        assert_eq!(inv.len(), 40);
        assert_eq!(inv.label(PhoneId(0)), SILENCE);
        assert_eq!(inv.id("AH"), inv.id("ah"));
        assert_eq!(inv.id("AH1"), inv.id("ah"));
        assert_eq!(inv.id("sp"), Some(PhoneId(0)));
        assert!(inv.id("qq").is_none());
    }

    #[test]
    fn inventory_rejects_wrong_size_and_duplicates() {
        assert!(PhoneInventory::new(vec!["a".into(); 3]).is_err());
        let mut labels: Vec<String> = inv().labels().to_vec();
        labels[1] = labels[2].clone();
        assert!(matches!(
            PhoneInventory::new(labels),
            Err(CorpusError::Inventory(_))
        ));
    }

    #[test]
    fn alignment_row_maps_fields() {
        let segs = read_alignments("w001\tAH\t0.000\t0.100\n".as_bytes(), &inv()).unwrap();
        assert_eq!(
            segs,
            vec![PhoneSegment {
                word_id: "w001".into(),
                phone: inv().id("ah").unwrap(),
                start: 0.0,
                end: 0.1
            }]
        );
    }

    #[test]
    fn alignment_preserves_order_and_skips_comments() {
        let text = "# comment\nw1\tb\t0.000\t0.050\nw1\tah\t0.050\t0.120\nw2\ts\t0.000\t0.200\n";
        let segs = read_alignments(text.as_bytes(), &inv()).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0].phone, inv().id("b").unwrap());
        assert_eq!(segs[2].word_id, "w2");
    }

    #[test]
    fn alignment_errors() {
        let err = read_alignments("w1\tah\t0.100\t0.100\n".as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }), "{err}");
        let err = read_alignments("w1\tah\t0.0\n".as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { .. }));
        let err =
            read_alignments("w1\tah\t0.0\t0.1\nw1\tah\tabc\t0.2\n".as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");
        let err = read_alignments("w1\txx\t0.0\t0.1\n".as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownPhone { .. }));
        let err =
            read_alignments("w1\tah\t0.0\t0.2\nw1\tb\t0.1\t0.3\n".as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::Ordering { .. }));
    }

    #[test]
    fn feature_table_round_trip_is_exact() {
        let mut a = frame("w1", 0, "aa", 0.1);
        a.cues[5] = -1.0 / 3.0;
        a.cues[38] = 1e-300;
        let b = frame("w2", 7, "silence", std::f64::consts::PI);
        let ds = FrameDataset::from_frames(inv(), vec![a, b]).unwrap();
        let mut buf = Vec::new();
        write_feature_table_to(&mut buf, &ds).unwrap();
        let back = read_feature_table(buf.as_slice(), &inv()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back, ds);
    }

    #[test]
    fn feature_table_with_38_columns_fails() {
        let mut header = feature_header();
        header.pop();
        let mut text = header.join(",");
        text.push('\n');
        text.push_str("w1,0,aa");
        for _ in 0..38 {
            text.push_str(",0.0");
        }
        text.push('\n');
        let err = read_feature_table(text.as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { .. }));
    }

    #[test]
    fn feature_table_rejects_non_monotone_trials_and_unknown_phones() {
        let ds = FrameDataset {
            inventory: inv(),
            frames: vec![frame("w1", 5, "aa", 0.0), frame("w1", 5, "aa", 0.0)],
        };
        let mut buf = Vec::new();
        write_feature_table_to(&mut buf, &ds).unwrap();
        let err = read_feature_table(buf.as_slice(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::Ordering { line: 3, .. }), "{err}");

        let text = String::from_utf8(buf).unwrap().replacen(",aa,", ",qq,", 1);
        let err = read_feature_table(text.as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownPhone { .. }));
    }

    fn numbered(n: usize) -> FrameDataset {
        let frames = (0..n)
            .map(|i| frame(&format!("w{}", i / 3), i as u64, "s", i as f64))
            .collect();
        FrameDataset::from_frames(inv(), frames).unwrap()
    }

    #[test]
    fn split_ten_frames() {
        let ds = numbered(10);
        for seed in 0..20 {
            let (train, test) = split_train_test(&ds, 0.10, seed).unwrap();
            assert_eq!((train.len(), test.len()), (9, 1));
            assert!(train.frames.windows(2).all(|w| w[0].trial_index < w[1].trial_index));
        }
    }

    #[test]
    fn split_is_deterministic_partition() {
        let ds = numbered(1000);
        let (a_train, a_test) = split_train_test(&ds, 0.1, 42).unwrap();
        let (b_train, b_test) = split_train_test(&ds, 0.1, 42).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let mut merged: Vec<_> = a_train.frames.iter().chain(&a_test.frames).cloned().collect();
        merged.sort_by_key(|f| f.trial_index);
        assert_eq!(merged, ds.frames);
        let (c_train, _) = split_train_test(&ds, 0.1, 43).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn split_size_rounds_half_up() {
        assert_eq!(test_size(2_073_999, 0.10), 207_400);
        assert_eq!(2_073_999 - test_size(2_073_999, 0.10), 1_866_599);
        assert_eq!(test_size(5, 0.5), 3);
    }

    #[test]
    fn split_rejects_empty() {
        let ds = FrameDataset::new(inv());
        assert!(matches!(
            split_train_test(&ds, 0.1, 0),
            Err(CorpusError::Argument(_))
        ));
    }

    fn words(n: usize) -> FrameDataset {
        let frames = (0..n)
            .map(|i| frame(&format!("word{i:04}"), i as u64, "aa", 0.0))
            .collect();
        FrameDataset::from_frames(inv(), frames).unwrap()
    }

    #[test]
    fn vocabulary_sampling() {
        let ds = words(300);
        let all = sample_vocabulary(&ds, 300, 1).unwrap();
        assert_eq!(all.len(), 300);
        let ds = words(1000);
        let a = sample_vocabulary(&ds, 300, 1).unwrap();
        let b = sample_vocabulary(&ds, 300, 2).unwrap();
        assert_eq!(a.len(), 300);
        assert_ne!(a, b);
        assert_eq!(a, sample_vocabulary(&ds, 300, 1).unwrap());
        assert!(sample_vocabulary(&ds, 1001, 1).is_err());
    }

    #[test]
    fn distribution_examples() {
        let frames = vec![
            frame("w", 0, "aa", 0.0),
            frame("w", 1, "aa", 0.0),
            frame("w", 2, "s", 0.0),
            frame("w", 3, "silence", 0.0),
        ];
        let ds = FrameDataset::from_frames(inv(), frames).unwrap();
        let d = label_distribution(&ds).unwrap();
        let i = inv();
        assert_eq!(d[i.id("aa").unwrap().0], 0.5);
        assert_eq!(d[i.id("s").unwrap().0], 0.25);
        assert_eq!(d[0], 0.25);
        assert_eq!(d.iter().filter(|&&p| p == 0.0).count(), 37);

        let frames = (0..400)
            .map(|t| LabeledFrame {
                word_id: "w".into(),
                trial_index: t as u64,
                phone: PhoneId(t % 40),
                cues: [0.0; N_CUES],
            })
            .collect();
        let ds = FrameDataset::from_frames(inv(), frames).unwrap();
        let d = label_distribution(&ds).unwrap();
        assert!(d.iter().all(|&p| p == 0.025));
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
