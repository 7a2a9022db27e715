//! Error-correction learners: Widrow-Hoff and temporal-difference updates of
//! a cue×outcome weight matrix, plus activation/diversity prediction.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{format_f64, Cues, LabeledFrame, PhoneId, PhoneInventory, N_CUES, N_PHONES};

#[derive(Debug, Error)]
pub enum EclError {
    #[error("non-finite weight after trial {trial}")]
    NonFinite { trial: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty event stream")]
    EmptyStream,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "wh")]
    WidrowHoff,
    #[serde(rename = "td")]
    TemporalDifference,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::WidrowHoff => "WH",
            Rule::TemporalDifference => "TD",
        })
    }
}

/// How the diversity (competition) term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityMode {
    /// `d_j = Σ_i |c_i W_ij|`
    #[default]
    PerOutcome,
    /// `d_j = Σ_k |a_k|` for every `j`.
    SharedScalar,
}

/// Which next-trial cues the TD rule may look ahead to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TdHorizon {
    /// Look-ahead stops at the last frame of each word.
    #[default]
    WithinWord,
    /// Chain across words; only the final trial has no successor.
    StreamWide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EclConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub diversity: DiversityMode,
    pub td_horizon: TdHorizon,
}

impl Default for EclConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0001,
            discount: 0.5,
            diversity: DiversityMode::PerOutcome,
            td_horizon: TdHorizon::WithinWord,
        }
    }
}

impl EclConfig {
    pub fn validate(&self) -> Result<(), EclError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EclError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(EclError::Config(format!(
                "discount must lie in [0, 1], got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

/// A cue and its one-hot outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialEvent {
    pub cues: Cues,
    pub outcome: PhoneId,
}

impl TrialEvent {
    pub fn outcome_vector(&self) -> [f64; N_PHONES] {
        let mut o = [0.0; N_PHONES];
        o[self.outcome.0] = 1.0;
        o
    }
}

impl From<&LabeledFrame> for TrialEvent {
    fn from(frame: &LabeledFrame) -> Self {
        Self {
            cues: frame.cues,
            outcome: frame.phone,
        }
    }
}

/// 39×40 association matrix: row `i` is cue dimension `i`, column `j` is
/// phone `j` of the inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: Box<[[f64; N_PHONES]; N_CUES]>,
}

impl Default for WeightMatrix {
    fn default() -> Self {
        Self::zeros()
    }
}

impl WeightMatrix {
    pub fn zeros() -> Self {
        Self {
            values: Box::new([[0.0; N_PHONES]; N_CUES]),
        }
    }

    pub fn from_rows(rows: [[f64; N_PHONES]; N_CUES]) -> Self {
        Self {
            values: Box::new(rows),
        }
    }

    pub fn get(&self, cue: usize, phone: usize) -> f64 {
        self.values[cue][phone]
    }

    pub fn set(&mut self, cue: usize, phone: usize, value: f64) {
        self.values[cue][phone] = value;
    }

    pub fn rows(&self) -> &[[f64; N_PHONES]; N_CUES] {
        &self.values
    }

    /// Column `j`: the cue-weight signature of phone `j`.
    pub fn column(&self, phone: usize) -> [f64; N_CUES] {
        std::array::from_fn(|i| self.values[i][phone])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn write_csv<W: Write>(&self, inventory: &PhoneInventory, out: W) -> Result<(), EclError> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "{}", inventory.labels().join(","))?;
        for row in self.values.iter() {
            let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, inventory: &PhoneInventory, path: impl AsRef<Path>) -> Result<(), EclError> {
        self.write_csv(inventory, std::fs::File::create(path)?)
    }

    /// Reads a weight file. The header must list `inventory` in order.
    pub fn read_csv<R: Read>(mut input: R, inventory: &PhoneInventory) -> Result<Self, EclError> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(EclError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let labels: Vec<&str> = header.split(',').map(str::trim).collect();
        if labels.len() != N_PHONES
            || labels
                .iter()
                .zip(inventory.labels())
                .any(|(a, b)| inventory.id(a).map(|id| inventory.label(id)) != Some(b.as_str()))
        {
            return Err(EclError::Parse {
                line: 1,
                message: "header does not match the phone inventory".into(),
            });
        }
        let mut w = Self::zeros();
        let mut n_rows = 0;
        for (i, line) in lines {
            if n_rows == N_CUES {
                return Err(EclError::Parse {
                    line: i + 1,
                    message: format!("more than {N_CUES} rows"),
                });
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != N_PHONES {
                return Err(EclError::Parse {
                    line: i + 1,
                    message: format!("expected {N_PHONES} values, found {}", fields.len()),
                });
            }
            for (j, f) in fields.iter().enumerate() {
                w.values[n_rows][j] = f.trim().parse().map_err(|_| EclError::Parse {
                    line: i + 1,
                    message: format!("invalid number {f:?}"),
                })?;
            }
            n_rows += 1;
        }
        if n_rows != N_CUES {
            return Err(EclError::Parse {
                line: n_rows + 2,
                message: format!("expected {N_CUES} rows, found {n_rows}"),
            });
        }
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>, inventory: &PhoneInventory) -> Result<Self, EclError> {
        Self::read_csv(std::fs::File::open(path)?, inventory)
    }
}

/// Net input per outcome: `a_j = Σ_i c_i W_ij`.
pub fn activations(w: &WeightMatrix, cues: &Cues) -> [f64; N_PHONES] {
    let mut a = [0.0; N_PHONES];
    for (c, row) in cues.iter().zip(w.values.iter()) {
        for (a, wij) in a.iter_mut().zip(row) {
            *a += c * wij;
        }
    }
    a
}

pub fn diversity(w: &WeightMatrix, cues: &Cues, mode: DiversityMode) -> [f64; N_PHONES] {
    match mode {
        DiversityMode::PerOutcome => {
            let mut d = [0.0; N_PHONES];
            for (c, row) in cues.iter().zip(w.values.iter()) {
                for (d, wij) in d.iter_mut().zip(row) {
                    *d += (c * wij).abs();
                }
            }
            d
        }
        DiversityMode::SharedScalar => {
            let total = activations(w, cues).iter().map(|a| a.abs()).sum();
            [total; N_PHONES]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EclPrediction {
    pub phone: PhoneId,
    pub score: f64,
    pub scores: [f64; N_PHONES],
}

/// Picks the phone with the highest activation/diversity ratio. Outcomes
/// with zero diversity score 0; ties go to the lowest inventory index.
pub fn predict(w: &WeightMatrix, cues: &Cues, config: &EclConfig) -> EclPrediction {
    let a = activations(w, cues);
    let d = match config.diversity {
        DiversityMode::PerOutcome => diversity(w, cues, DiversityMode::PerOutcome),
        DiversityMode::SharedScalar => [a.iter().map(|x| x.abs()).sum(); N_PHONES],
    };
    let scores: [f64; N_PHONES] =
        std::array::from_fn(|j| if d[j] > 0.0 { a[j] / d[j] } else { 0.0 });
    let mut best = 0;
    for j in 1..N_PHONES {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    EclPrediction {
        phone: PhoneId(best),
        score: scores[best],
        scores,
    }
}

/// `W_ij += λ e_j c_i`, reporting whether every touched weight stayed finite.
fn apply_error(w: &mut WeightMatrix, cues: &Cues, error: &[f64; N_PHONES], rate: f64) -> bool {
    let mut finite = true;
    for (c, row) in cues.iter().zip(w.values.iter_mut()) {
        for (wij, e) in row.iter_mut().zip(error) {
            *wij += rate * e * c;
            finite &= wij.is_finite();
        }
    }
    finite
}

/// One Widrow-Hoff step: `W ← W + λ (o − cᵀW) ⊗ c`.
pub fn wh_update(
    w: &mut WeightMatrix,
    event: &TrialEvent,
    rate: f64,
    trial: u64,
) -> Result<(), EclError> {
    let a = activations(w, &event.cues);
    let mut e = [0.0; N_PHONES];
    for (j, (e, a)) in e.iter_mut().zip(&a).enumerate() {
        let o = if j == event.outcome.0 { 1.0 } else { 0.0 };
        *e = o - a;
    }
    if apply_error(w, &event.cues, &e, rate) {
        Ok(())
    } else {
        Err(EclError::NonFinite { trial })
    }
}

/// One temporal-difference step: `W ← W + λ (o − [cᵀW − γ c⁺ᵀW]) ⊗ c`,
/// where the future term vanishes when `next` is absent.
pub fn td_update(
    w: &mut WeightMatrix,
    event: &TrialEvent,
    next: Option<&Cues>,
    rate: f64,
    discount: f64,
    trial: u64,
) -> Result<(), EclError> {
    let a = activations(w, &event.cues);
    let ahead = next.map_or([0.0; N_PHONES], |c| activations(w, c));
    let mut e = [0.0; N_PHONES];
    for (j, e) in e.iter_mut().enumerate() {
        let o = if j == event.outcome.0 { 1.0 } else { 0.0 };
        *e = o - (a[j] - discount * ahead[j]);
    }
    if apply_error(w, &event.cues, &e, rate) {
        Ok(())
    } else {
        Err(EclError::NonFinite { trial })
    }
}

/// Sequential trainer that can be fed one frame at a time. The TD rule
/// needs the following frame, so one frame is held back until the next
/// arrives or [`StreamTrainer::finish`] is called.
pub struct StreamTrainer {
    rule: Rule,
    config: EclConfig,
    weights: WeightMatrix,
    pending: Option<LabeledFrame>,
    trials: u64,
}

impl StreamTrainer {
    pub fn new(rule: Rule, config: &EclConfig, initial: WeightMatrix) -> Result<Self, EclError> {
        config.validate()?;
        Ok(Self {
            rule,
            config: config.clone(),
            weights: initial,
            pending: None,
            trials: 0,
        })
    }

    pub fn observe(&mut self, frame: LabeledFrame) -> Result<(), EclError> {
        match self.rule {
            Rule::WidrowHoff => {
                self.trials += 1;
                wh_update(
                    &mut self.weights,
                    &TrialEvent::from(&frame),
                    self.config.learning_rate,
                    frame.trial_index,
                )
            }
            Rule::TemporalDifference => {
                if let Some(prev) = self.pending.take() {
                    let chained = match self.config.td_horizon {
                        TdHorizon::WithinWord => prev.word_id == frame.word_id,
                        TdHorizon::StreamWide => true,
                    };
                    self.td_step(&prev, chained.then_some(&frame.cues))?;
                }
                self.pending = Some(frame);
                Ok(())
            }
        }
    }

    fn td_step(&mut self, frame: &LabeledFrame, next: Option<&Cues>) -> Result<(), EclError> {
        self.trials += 1;
        td_update(
            &mut self.weights,
            &TrialEvent::from(frame),
            next,
            self.config.learning_rate,
            self.config.discount,
            frame.trial_index,
        )
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn finish(mut self) -> Result<WeightMatrix, EclError> {
        if let Some(last) = self.pending.take() {
            self.td_step(&last, None)?;
        }
        Ok(self.weights)
    }
}

/// Trains over an ordered stream, strictly left to right.
pub fn train_stream(
    rule: Rule,
    events: &[LabeledFrame],
    config: &EclConfig,
    initial: WeightMatrix,
) -> Result<WeightMatrix, EclError> {
    if events.is_empty() {
        return Err(EclError::EmptyStream);
    }
    config.validate()?;
    let mut w = initial;
    let rate = config.learning_rate;
    match rule {
        Rule::WidrowHoff => {
            for f in events {
                wh_update(&mut w, &TrialEvent::from(f), rate, f.trial_index)?;
            }
        }
        Rule::TemporalDifference => {
            for (i, f) in events.iter().enumerate() {
                let next = events.get(i + 1).filter(|n| match config.td_horizon {
                    TdHorizon::WithinWord => n.word_id == f.word_id,
                    TdHorizon::StreamWide => true,
                });
                td_update(
                    &mut w,
                    &TrialEvent::from(f),
                    next.map(|n| &n.cues),
                    rate,
                    config.discount,
                    f.trial_index,
                )?;
            }
        }
    }
    Ok(w)
}
