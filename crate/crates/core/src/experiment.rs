//! Glue that trains and scores the three learners on a regime's data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FrameDataset, LabeledFrame, N_PHONES};
use crate::ecl::{self, EclConfig, EclError, Rule, StreamTrainer, WeightMatrix};
use crate::eval::{
    session_summary, success_rates, Learner, PredictionRecord, Regime, SessionSummary,
    SuccessTable, TestSubset,
};
use crate::mbl::{self, ExemplarStore, MblConfig, MblError};
use crate::regimes::{build_session, SessionConfig, SessionManifest};
use crate::Error;

pub fn rule_for(learner: Learner) -> Option<Rule> {
    match learner {
        Learner::Wh => Some(Rule::WidrowHoff),
        Learner::Td => Some(Rule::TemporalDifference),
        Learner::Mbl => None,
    }
}

/// Trains an ECL learner from zero weights over a frame stream.
pub fn train_ecl(
    rule: Rule,
    frames: impl IntoIterator<Item = LabeledFrame>,
    config: &EclConfig,
) -> Result<WeightMatrix, EclError> {
    let mut trainer = StreamTrainer::new(rule, config, WeightMatrix::zeros())?;
    let mut seen = false;
    for f in frames {
        trainer.observe(f)?;
        seen = true;
    }
    if !seen {
        return Err(EclError::EmptyStream);
    }
    trainer.finish()
}

pub fn evaluate_ecl(
    w: &WeightMatrix,
    test: &FrameDataset,
    config: &EclConfig,
    learner: Learner,
    regime: Regime,
) -> Vec<PredictionRecord> {
    test.frames
        .par_iter()
        .map(|f| {
            let p = ecl::predict(w, &f.cues, config);
            PredictionRecord {
                trial_index: f.trial_index,
                true_phone: f.phone,
                predicted_phone: p.phone,
                score: p.score,
                learner,
                regime,
            }
        })
        .collect()
}

/// MBL predictions plus each query's vote shares.
pub fn evaluate_mbl(
    store: &ExemplarStore,
    test: &FrameDataset,
    config: &MblConfig,
    regime: Regime,
) -> Result<(Vec<PredictionRecord>, Vec<[f64; N_PHONES]>), MblError> {
    let votes = test
        .frames
        .par_iter()
        .map(|f| mbl::predict(store, &f.cues, config).map(|v| (f, v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(votes
        .into_iter()
        .map(|(f, v)| {
            let shares = v.shares();
            (
                PredictionRecord {
                    trial_index: f.trial_index,
                    true_phone: f.phone,
                    predicted_phone: v.phone,
                    score: v.confidence,
                    learner: Learner::Mbl,
                    regime,
                },
                shares,
            )
        })
        .unzip())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    pub session: SessionConfig,
    pub ecl: EclConfig,
    pub mbl: MblConfig,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub manifest: SessionManifest,
    /// Test predictions tagged `session-K-known` / `session-K-new`.
    pub records: Vec<PredictionRecord>,
}

impl SessionOutcome {
    /// Success table of one learner over the given test subset.
    pub fn table(&self, learner: Learner, subset: TestSubset) -> Result<SuccessTable, Error> {
        let picked = self.records.iter().filter(|r| {
            r.learner == learner
                && match (subset, r.regime) {
                    (TestSubset::All, _) => true,
                    (s, Regime::Session { subset, .. }) => s == subset,
                    _ => false,
                }
        });
        Ok(success_rates(picked)?)
    }
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub sessions: Vec<SessionOutcome>,
    /// Per-learner summary over each session's full test set.
    pub summaries: Vec<(Learner, SessionSummary)>,
}

impl ConsistencyReport {
    /// All records, plus copies tagged `session-K` for the combined test set.
    pub fn tidy_records(&self) -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        for s in &self.sessions {
            out.extend(s.records.iter().map(|r| PredictionRecord {
                regime: Regime::Session {
                    index: s.manifest.index,
                    subset: TestSubset::All,
                },
                ..r.clone()
            }));
            out.extend(s.records.iter().cloned());
        }
        out
    }
}

fn run_session(
    corpus: &FrameDataset,
    config: &ConsistencyConfig,
    index: usize,
) -> Result<SessionOutcome, Error> {
    let session = build_session(corpus, &config.session, index)?;
    let (known, new): (Vec<_>, Vec<_>) = session
        .test
        .frames
        .iter()
        .cloned()
        .partition(|f| session.known_words.contains(&f.word_id));
    let subsets = [
        (TestSubset::Known, FrameDataset { inventory: corpus.inventory.clone(), frames: known }),
        (TestSubset::New, FrameDataset { inventory: corpus.inventory.clone(), frames: new }),
    ];
    let regime = |subset| Regime::Session { index, subset };

    let ecl_part = |learner: Learner| -> Result<Vec<PredictionRecord>, Error> {
        let rule = rule_for(learner).expect("ECL learner");
        let w = train_ecl(rule, session.stream(), &config.ecl)?;
        Ok(subsets
            .iter()
            .flat_map(|(s, test)| evaluate_ecl(&w, test, &config.ecl, learner, regime(*s)))
            .collect())
    };
    let mbl_part = || -> Result<Vec<PredictionRecord>, Error> {
        let mut store = ExemplarStore::default();
        for f in session.stream() {
            store.push(f.cues, f.phone);
        }
        let mut out = Vec::new();
        for (s, test) in &subsets {
            out.extend(evaluate_mbl(&store, test, &config.mbl, regime(*s))?.0);
        }
        Ok(out)
    };

    let (mbl, (wh, td)) = rayon::join(mbl_part, || {
        rayon::join(|| ecl_part(Learner::Wh), || ecl_part(Learner::Td))
    });
    let mut records = mbl?;
    records.extend(wh?);
    records.extend(td?);
    Ok(SessionOutcome {
        manifest: session.manifest(),
        records,
    })
}

/// Builds every session, trains all three learners per session, and scores
/// known and new test words separately.
pub fn run_consistency(
    corpus: &FrameDataset,
    config: &ConsistencyConfig,
) -> Result<ConsistencyReport, Error> {
    config.session.validate()?;
    config.ecl.validate()?;
    let sessions = (0..config.session.n_sessions)
        .map(|i| run_session(corpus, config, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut summaries = Vec::new();
    if sessions.len() >= 2 {
        for learner in Learner::ALL {
            let tables = sessions
                .iter()
                .map(|s| s.table(learner, TestSubset::All))
                .collect::<Result<Vec<_>, _>>()?;
            summaries.push((learner, session_summary(&tables)?));
        }
    }
    Ok(ConsistencyReport {
        sessions,
        summaries,
    })
}
