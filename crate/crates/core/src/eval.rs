//! Scoring and statistics over prediction records.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{format_f64, PhoneId, PhoneInventory, N_PHONES};

/// Sessions whose median success falls below this are flagged as having
/// learned nothing.
pub const ZERO_SESSION_THRESHOLD: f64 = 1.0;

/// Normal-consistency constant for MAD.
pub const MAD_NORMAL_CONSTANT: f64 = 1.4826;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records")]
    Empty,
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
}

impl From<csv::Error> for EvalError {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => EvalError::Io(io),
            other => EvalError::Parse {
                line,
                message: format!("{other:?}"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Learner {
    #[serde(rename = "MBL")]
    Mbl,
    #[serde(rename = "WH")]
    Wh,
    #[serde(rename = "TD")]
    Td,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::Mbl, Learner::Wh, Learner::Td];
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Learner::Mbl => "MBL",
            Learner::Wh => "WH",
            Learner::Td => "TD",
        })
    }
}

impl FromStr for Learner {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mbl" => Ok(Learner::Mbl),
            "wh" => Ok(Learner::Wh),
            "td" => Ok(Learner::Td),
            other => Err(format!("unknown learner {other:?} (expected mbl, wh or td)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestSubset {
    All,
    Known,
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Raw,
    Gaussian,
    /// Gaussian data with the given number of frames per phone.
    GaussianN(usize),
    Session { index: usize, subset: TestSubset },
    CrossSpeaker,
}

impl Regime {
    pub fn session(&self) -> Option<usize> {
        match self {
            Regime::Session { index, .. } => Some(*index),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Raw => f.write_str("raw"),
            Regime::Gaussian => f.write_str("gaussian"),
            Regime::GaussianN(n) => write!(f, "gaussian-n{n}"),
            Regime::Session { index, subset } => match subset {
                TestSubset::All => write!(f, "session-{index}"),
                TestSubset::Known => write!(f, "session-{index}-known"),
                TestSubset::New => write!(f, "session-{index}-new"),
            },
            Regime::CrossSpeaker => f.write_str("cross-speaker"),
        }
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown regime {s:?}");
        match s {
            "raw" => Ok(Regime::Raw),
            "gaussian" => Ok(Regime::Gaussian),
            "cross-speaker" => Ok(Regime::CrossSpeaker),
            _ => {
                if let Some(n) = s.strip_prefix("gaussian-n") {
                    return n.parse().map(Regime::GaussianN).map_err(|_| bad());
                }
                let rest = s.strip_prefix("session-").ok_or_else(bad)?;
                let (num, subset) = match rest.split_once('-') {
                    None => (rest, TestSubset::All),
                    Some((n, "known")) => (n, TestSubset::Known),
                    Some((n, "new")) => (n, TestSubset::New),
                    Some(_) => return Err(bad()),
                };
                let index = num.parse().map_err(|_| bad())?;
                Ok(Regime::Session { index, subset })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub trial_index: u64,
    pub true_phone: PhoneId,
    pub predicted_phone: PhoneId,
    /// ECL ratio score or MBL vote confidence.
    pub score: f64,
    pub learner: Learner,
    pub regime: Regime,
}

impl PredictionRecord {
    pub fn correct(&self) -> bool {
        self.true_phone == self.predicted_phone
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    /// Percent correct per phone; `None` when the phone has no records.
    pub per_phone: [Option<f64>; N_PHONES],
    pub totals: [usize; N_PHONES],
    pub correct: [usize; N_PHONES],
    /// Mean score/confidence per phone.
    pub mean_score: [Option<f64>; N_PHONES],
    pub overall: f64,
    pub sampling_probability: Option<[f64; N_PHONES]>,
}

impl SuccessTable {
    pub fn with_sampling(mut self, probability: [f64; N_PHONES]) -> Self {
        self.sampling_probability = Some(probability);
        self
    }

    /// Mean of the defined per-phone rates.
    pub fn mean_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.per_phone.iter().flatten().copied().collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    /// Median of the defined per-phone rates.
    pub fn median_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.per_phone.iter().flatten().copied().collect();
        median(&rates).ok()
    }
}

pub fn success_rates<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
) -> Result<SuccessTable, EvalError> {
    let mut totals = [0usize; N_PHONES];
    let mut correct = [0usize; N_PHONES];
    let mut score_sum = [0.0; N_PHONES];
    for r in records {
        let j = r.true_phone.0;
        totals[j] += 1;
        correct[j] += r.correct() as usize;
        score_sum[j] += r.score;
    }
    let n: usize = totals.iter().sum();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let per_phone =
        std::array::from_fn(|j| (totals[j] > 0).then(|| 100.0 * correct[j] as f64 / totals[j] as f64));
    let mean_score =
        std::array::from_fn(|j| (totals[j] > 0).then(|| score_sum[j] / totals[j] as f64));
    Ok(SuccessTable {
        per_phone,
        totals,
        correct,
        mean_score,
        overall: 100.0 * correct.iter().sum::<usize>() as f64 / n as f64,
        sampling_probability: None,
    })
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<[u64; N_PHONES]>,
}

impl ConfusionMatrix {
    pub fn row_total(&self, phone: usize) -> u64 {
        self.counts[phone].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..N_PHONES).map(|j| self.counts[j][j]).sum()
    }

    /// Rows scaled to sum to 1; empty rows stay zero.
    pub fn normalized(&self) -> Vec<[f64; N_PHONES]> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    [0.0; N_PHONES]
                } else {
                    row.map(|c| c as f64 / total as f64)
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, inventory: &PhoneInventory, out: W) -> Result<(), EvalError> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "true\\predicted,{}", inventory.labels().join(","))?;
        for (label, row) in inventory.labels().iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(out, "{label},{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn confusion_matrix<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
) -> Result<ConfusionMatrix, EvalError> {
    let mut counts = vec![[0u64; N_PHONES]; N_PHONES];
    let mut n = 0;
    for r in records {
        counts[r.true_phone.0][r.predicted_phone.0] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(ConfusionMatrix { counts })
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(EvalError::Undefined("NaN in input".into()));
    }
    Ok(())
}

fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}

/// Merge sort returning the number of inversions (strictly greater element
/// before a smaller one).
fn sort_counting_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's τ-b with tie corrections, O(n log n) (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    // Adding 0.0 folds -0.0 into 0.0 so total_cmp keeps ties adjacent.
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a + 0.0, b + 0.0)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tied_pairs(&xs);
    let ties_xy = tied_pairs(&pairs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = Vec::with_capacity(ys.len());
    let swaps = sort_counting_swaps(&mut ys, &mut scratch);
    let ties_y = tied_pairs(&ys);

    let n0 = n * (n - 1) / 2;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(EvalError::Undefined(
            "a constant vector has no τ-b".into(),
        ));
    }
    let numer = n0 as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * swaps as i64;
    Ok(numer as f64 / denom)
}

pub fn median(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::TooShort { needed: 1, got: 0 });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Median absolute deviation, unscaled.
pub fn mad(values: &[f64]) -> Result<f64, EvalError> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// MAD optionally multiplied by the normal-consistency constant.
pub fn mad_with(values: &[f64], normal_consistent: bool) -> Result<f64, EvalError> {
    let raw = mad(values)?;
    Ok(if normal_consistent {
        raw * MAD_NORMAL_CONSTANT
    } else {
        raw
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    /// Median per-phone success of each session.
    pub session_medians: Vec<f64>,
    /// Per-phone MAD of success across the sessions where the phone was
    /// tested.
    pub phone_mad: [Option<f64>; N_PHONES],
    /// Sessions whose median is below [`ZERO_SESSION_THRESHOLD`].
    pub zero_sessions: Vec<usize>,
}

pub fn session_summary(tables: &[SuccessTable]) -> Result<SessionSummary, EvalError> {
    if tables.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: tables.len(),
        });
    }
    let session_medians = tables
        .iter()
        .map(|t| t.median_rate().ok_or(EvalError::Empty))
        .collect::<Result<Vec<_>, _>>()?;
    let phone_mad = std::array::from_fn(|j| {
        let rates: Vec<f64> = tables.iter().filter_map(|t| t.per_phone[j]).collect();
        mad(&rates).ok()
    });
    let zero_sessions = session_medians
        .iter()
        .enumerate()
        .filter(|(_, &m)| m < ZERO_SESSION_THRESHOLD)
        .map(|(i, _)| i)
        .collect();
    Ok(SessionSummary {
        session_medians,
        phone_mad,
        zero_sessions,
    })
}

/// One row of the long-format result table.
#[derive(Debug, Clone, PartialEq)]
pub struct TidyRow {
    pub phone: String,
    pub learner: Learner,
    pub regime: Regime,
    pub session: Option<usize>,
    pub n: usize,
    pub success_pct: Option<f64>,
    pub confidence_mean: Option<f64>,
}

pub const TIDY_COLUMNS: [&str; 7] = [
    "phone",
    "learner",
    "regime",
    "session",
    "n",
    "success_pct",
    "confidence_mean",
];

const TIDY_COMMENT: &str = "# phone: inventory label; learner: MBL|WH|TD; regime: raw|gaussian|gaussian-nN|session-K[-known|-new]|cross-speaker; \
session: session index or empty; n: test frames of this phone; success_pct: percent correct (empty when n = 0); \
confidence_mean: mean ECL score or MBL vote confidence (empty when n = 0)";

/// 40 rows for one (learner, regime) cell.
pub fn tidy_rows(
    table: &SuccessTable,
    inventory: &PhoneInventory,
    learner: Learner,
    regime: Regime,
) -> Vec<TidyRow> {
    inventory
        .labels()
        .iter()
        .enumerate()
        .map(|(j, label)| TidyRow {
            phone: label.clone(),
            learner,
            regime,
            session: regime.session(),
            n: table.totals[j],
            success_pct: table.per_phone[j],
            confidence_mean: table.mean_score[j],
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn write_tidy<W: Write>(rows: &[TidyRow], out: W) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "{TIDY_COMMENT}")?;
    let mut wtr = csv::Writer::from_writer(&mut out);
    wtr.write_record(TIDY_COLUMNS)?;
    for r in rows {
        wtr.write_record([
            r.phone.clone(),
            r.learner.to_string(),
            r.regime.to_string(),
            r.session.map(|s| s.to_string()).unwrap_or_default(),
            r.n.to_string(),
            opt(r.success_pct),
            opt(r.confidence_mean),
        ])?;
    }
    wtr.flush()?;
    drop(wtr);
    out.flush()?;
    Ok(())
}

pub fn read_tidy<R: Read>(input: R) -> Result<Vec<TidyRow>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TIDY_COLUMNS.iter().copied()) {
        return Err(EvalError::Parse {
            line: 1,
            message: format!("unexpected header {:?}", header),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| EvalError::Parse { line, message };
        let parse_opt = |s: &str| -> Result<Option<f64>, EvalError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(format!("invalid number {s:?}")))
            }
        };
        rows.push(TidyRow {
            phone: rec[0].to_owned(),
            learner: rec[1].parse().map_err(err)?,
            regime: rec[2].parse().map_err(err)?,
            session: if rec[3].is_empty() {
                None
            } else {
                Some(rec[3].parse().map_err(|_| err(format!("invalid session {:?}", &rec[3])))?)
            },
            n: rec[4].parse().map_err(|_| err(format!("invalid n {:?}", &rec[4])))?,
            success_pct: parse_opt(&rec[5])?,
            confidence_mean: parse_opt(&rec[6])?,
        });
    }
    Ok(rows)
}

/// Groups records by (learner, regime) in order of first appearance and
/// computes one success table per group.
pub fn group_tables(
    records: &[PredictionRecord],
) -> Result<Vec<(Learner, Regime, SuccessTable, ConfusionMatrix)>, EvalError> {
    let mut keys: Vec<(Learner, Regime)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.learner, r.regime)) {
            keys.push((r.learner, r.regime));
        }
    }
    keys.into_iter()
        .map(|(l, g)| {
            let subset = records.iter().filter(|r| r.learner == l && r.regime == g);
            Ok((l, g, success_rates(subset.clone())?, confusion_matrix(subset)?))
        })
        .collect()
}

/// Writes `results_tidy.csv` plus one confusion matrix per (learner,
/// regime) cell into `dir`; returns the paths written.
pub fn export_tidy(
    records: &[PredictionRecord],
    inventory: &PhoneInventory,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, EvalError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let groups = group_tables(records)?;
    let mut rows = Vec::new();
    let mut written = Vec::new();
    for (learner, regime, table, confusion) in &groups {
        rows.extend(tidy_rows(table, inventory, *learner, *regime));
        let path = dir.join(format!("confusion_{}_{}.csv", learner, regime));
        confusion.write_csv(inventory, std::fs::File::create(&path)?)?;
        written.push(path);
    }
    let tidy = dir.join("results_tidy.csv");
    write_tidy(&rows, std::fs::File::create(&tidy)?)?;
    written.insert(0, tidy);
    Ok(written)
}
