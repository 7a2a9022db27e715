use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use phonelearn::cluster::{bootstrap_pvalues, ecl_profiles, mbl_profiles, ward_cluster, DendrogramFormat};
use phonelearn::corpus::{format_f64, load_alignments, load_feature_table, split_train_test, write_feature_table};
use phonelearn::eval::{export_tidy, read_tidy, write_tidy, TidyRow};
use phonelearn::experiment::{evaluate_ecl, evaluate_mbl, rule_for, run_consistency, train_ecl, ConsistencyConfig};
use phonelearn::mfcc::{extract_labeled_frames, read_wav};
use phonelearn::regimes::gaussian_scaling_series;
use phonelearn::{
    ExemplarStore, FrameDataset, LabeledFrame, Learner, PhoneInventory, PhoneProfileMatrix, PhoneSegment,
    Regime, WeightMatrix, N_PHONES,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{require, RunConfig};
use crate::manifest::{digest_file, InputDigest, Manifest};

/// Persisted state of a trained memory-based learner: the stored exemplars
/// are the referenced feature table itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub learner: Learner,
    pub regime: String,
    pub k: usize,
    pub frames: usize,
    pub features: InputDigest,
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn learner(cfg: &RunConfig) -> Result<Learner> {
    let name = require(&cfg.learner, "learner (--learner or learner = ...)")?;
    name.parse().map_err(anyhow::Error::msg)
}

fn regime(cfg: &RunConfig) -> Result<Regime> {
    cfg.regime.parse().map_err(anyhow::Error::msg)
}

fn load_features(path: &Path) -> Result<FrameDataset> {
    load_feature_table(path, &PhoneInventory::arpabet())
        .with_context(|| format!("loading feature table {}", path.display()))
}

/// A word's frames plus the sha256 and size of its WAV file.
type Extracted = (Vec<LabeledFrame>, String, u64);

fn word_groups(segments: Vec<PhoneSegment>) -> Vec<(String, Vec<PhoneSegment>)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<PhoneSegment>)> = Vec::new();
    for seg in segments {
        let i = *index.entry(seg.word_id.clone()).or_insert_with(|| {
            groups.push((seg.word_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(seg);
    }
    groups
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let audio_dir = require(&cfg.paths.audio_dir, "audio directory (--audio-dir)")?;
    let alignments = require(&cfg.paths.alignments, "alignment table (--alignments)")?;
    cfg.mfcc.validate()?;
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("extract", cfg);
    m.input("alignments", alignments)?;

    let inventory = PhoneInventory::arpabet();
    let segments = load_alignments(alignments, &inventory)
        .with_context(|| format!("loading alignments {}", alignments.display()))?;
    let has_wav = std::fs::read_dir(audio_dir)
        .with_context(|| format!("reading {}", audio_dir.display()))?
        .filter_map(|e| e.ok())
        .any(|e| e.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")));

    let mut dataset = FrameDataset::new(inventory);
    let words = word_groups(segments);
    if !has_wav {
        m.warn(format!(
            "no WAV files in {}; writing an empty feature table",
            audio_dir.display()
        ));
    } else {
        let results: Vec<Result<Extracted, String>> = words
            .par_iter()
            .map(|(word, segs)| {
                let path = audio_dir.join(format!("{word}.wav"));
                let (sha, bytes) = digest_file(&path).map_err(|e| format!("{word}: {e:#}"))?;
                let audio = read_wav(&path).map_err(|e| format!("{word}: {e}"))?;
                let frames = extract_labeled_frames(&audio, segs, &cfg.mfcc, 0)
                    .map_err(|e| format!("{word}: {e}"))?;
                Ok((frames, sha, bytes))
            })
            .collect();
        let mut audio_hash = Sha256::new();
        let mut audio_bytes = 0;
        for ((word, _), r) in words.iter().zip(results) {
            match r {
                Ok((frames, sha, bytes)) => {
                    audio_hash.update(format!("{word}\t{sha}\n"));
                    audio_bytes += bytes;
                    for mut f in frames {
                        f.trial_index = dataset.frames.len() as u64;
                        dataset.frames.push(f);
                    }
                }
                Err(e) => m.errors.push(e),
            }
        }
        m.inputs.push(InputDigest {
            role: "audio".into(),
            path: audio_dir.clone(),
            sha256: hex::encode(audio_hash.finalize()),
            bytes: audio_bytes,
        });
    }

    let path = out.join("features.csv");
    write_feature_table(&path, &dataset)?;
    m.outputs.push(path);
    m.detail("words", words.len() - m.errors.len());
    m.detail("frames", dataset.len());
    m.write(&out, "features")?;
    for e in &m.errors {
        eprintln!("extract: {e}");
    }
    if !m.errors.is_empty() {
        bail!(
            "{} of {} words failed to extract; first: {}",
            m.errors.len(),
            words.len(),
            m.errors[0]
        );
    }
    println!("extract: {} frames from {} words", dataset.len(), words.len());
    Ok(())
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let features = require(&cfg.paths.features, "feature table (--features)")?;
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("split", cfg);
    m.input("features", features)?;
    let ds = load_features(features)?;
    let seed = cfg.stage_seed("split");
    let (train, test) = split_train_test(&ds, cfg.test_fraction, seed)?;
    for (name, part) in [("train.csv", &train), ("test.csv", &test)] {
        let path = out.join(name);
        write_feature_table(&path, part)?;
        m.outputs.push(path);
    }
    m.detail("split_seed", seed);
    m.detail("train_frames", train.len());
    m.detail("test_frames", test.len());
    m.write(&out, "split")?;
    println!("split: {} train / {} test frames", train.len(), test.len());
    Ok(())
}

pub fn gaussian(cfg: &RunConfig) -> Result<()> {
    let features = require(&cfg.paths.features, "training feature table (--features)")?;
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("gaussian", cfg);
    m.input("features", features)?;
    let train = load_features(features)?;
    let sizes = if cfg.gaussian_sizes.is_empty() {
        vec![cfg.gaussian.n_per_phone]
    } else {
        cfg.gaussian_sizes.clone()
    };
    let sets = gaussian_scaling_series(&train, &sizes, cfg.gaussian.seed)?;
    for (n, ds) in sizes.iter().zip(&sets) {
        let path = out.join(format!("gaussian_n{n}.csv"));
        write_feature_table(&path, ds)?;
        m.outputs.push(path);
    }
    m.detail("sizes", &sizes);
    m.write(&out, "gaussian")?;
    println!("gaussian: wrote {} dataset(s)", sets.len());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let features = require(&cfg.paths.features, "feature table (--features)")?;
    let learner = learner(cfg)?;
    let regime = regime(cfg)?;
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("train", cfg);
    let digest = m.input("features", features)?;
    let ds = load_features(features)?;
    ensure!(!ds.is_empty(), "feature table {} has no frames", features.display());

    let (stem, path) = match rule_for(learner) {
        Some(rule) => {
            let inventory = ds.inventory.clone();
            let w = train_ecl(rule, ds.frames, &cfg.ecl)?;
            let stem = format!("weights_{learner}_{regime}");
            let path = out.join(format!("{stem}.csv"));
            w.save(&inventory, &path)?;
            (stem, path)
        }
        None => {
            let store = StoreManifest {
                learner,
                regime: regime.to_string(),
                k: cfg.mbl.k,
                frames: ds.len(),
                features: InputDigest {
                    path: std::fs::canonicalize(features)?,
                    ..digest
                },
            };
            let stem = format!("store_{learner}_{regime}");
            let path = out.join(format!("{stem}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&store)? + "\n")?;
            (stem, path)
        }
    };
    m.outputs.push(path.clone());
    m.write(&out, &stem)?;
    println!("train: {learner} on {} -> {}", features.display(), path.display());
    Ok(())
}

fn load_store(path: &Path) -> Result<(StoreManifest, ExemplarStore)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let state: StoreManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing store manifest {}", path.display()))?;
    let (sha, _) = digest_file(&state.features.path)?;
    ensure!(
        sha == state.features.sha256,
        "stored feature table {} changed since training (sha256 {} != {})",
        state.features.path.display(),
        sha,
        state.features.sha256
    );
    let ds = load_features(&state.features.path)?;
    Ok((state, ExemplarStore::store(&ds.frames)))
}

/// Merges freshly written `results_tidy.csv` rows into what the directory
/// held before, replacing cells with the same (learner, regime).
fn export_merged(records: &[phonelearn::PredictionRecord], inventory: &PhoneInventory, out: &Path) -> Result<Vec<PathBuf>> {
    let tidy = out.join("results_tidy.csv");
    let previous: Vec<TidyRow> = match std::fs::File::open(&tidy) {
        Ok(f) => read_tidy(f).with_context(|| format!("reading existing {}", tidy.display()))?,
        Err(_) => Vec::new(),
    };
    let written = export_tidy(records, inventory, out)?;
    if !previous.is_empty() {
        let fresh = read_tidy(std::fs::File::open(&tidy)?)?;
        let mut rows: Vec<TidyRow> = previous
            .into_iter()
            .filter(|p| !fresh.iter().any(|f| f.learner == p.learner && f.regime == p.regime))
            .collect();
        rows.extend(fresh);
        write_tidy(&rows, std::fs::File::create(&tidy)?)?;
    }
    Ok(written)
}

pub fn write_profiles(profiles: &PhoneProfileMatrix, inventory: &PhoneInventory, path: &Path) -> Result<()> {
    let mut text = String::from("phone");
    for l in inventory.labels() {
        text.push(',');
        text.push_str(l);
    }
    text.push('\n');
    for (label, row) in profiles.labels.iter().zip(&profiles.rows) {
        text.push_str(label);
        for v in row {
            text.push(',');
            text.push_str(&format_f64(*v));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_profiles(path: &Path) -> Result<PhoneProfileMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading profiles {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty profile file")?;
    ensure!(header.starts_with("phone,"), "profile header must start with `phone,`");
    let width = header.split(',').count() - 1;
    let (mut labels, mut rows) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let mut fields = line.split(',');
        labels.push(fields.next().unwrap_or_default().to_owned());
        let row = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {}: invalid number", path.display(), i + 2))?;
        ensure!(row.len() == width, "{} line {}: expected {width} values", path.display(), i + 2);
        rows.push(row);
    }
    Ok(PhoneProfileMatrix::new(labels, rows, Learner::Mbl)?)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let state = require(&cfg.paths.state, "learner state (--state)")?;
    let test_path = require(&cfg.paths.test, "test feature table (--test)")?;
    let regime = regime(cfg)?;
    let is_store = state.extension().is_some_and(|e| e == "json");
    let learner = match (&cfg.learner, is_store) {
        (None, true) => Learner::Mbl,
        _ => learner(cfg)?,
    };
    ensure!(
        (learner == Learner::Mbl) == is_store,
        "{learner} state must be a {} file, got {}",
        if is_store { "weight CSV" } else { "store manifest JSON" },
        state.display()
    );
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("eval", cfg);
    m.input("state", state)?;
    m.input("test", test_path)?;
    let test = load_features(test_path)?;
    ensure!(!test.is_empty(), "test table {} has no frames", test_path.display());

    let records = if is_store {
        let (stored, store) = load_store(state)?;
        m.inputs.push(stored.features.clone());
        let (records, shares) = evaluate_mbl(&store, &test, &cfg.mbl, regime)?;
        let profiles = mbl_profiles(
            &test.inventory,
            records.iter().zip(&shares).map(|(r, s)| (r.true_phone, s)),
            true,
        )?;
        let path = out.join(format!("profiles_{learner}_{regime}.csv"));
        write_profiles(&profiles, &test.inventory, &path)?;
        m.outputs.push(path);
        records
    } else {
        let w = WeightMatrix::load(state, &test.inventory)
            .with_context(|| format!("loading weights {}", state.display()))?;
        evaluate_ecl(&w, &test, &cfg.ecl, learner, regime)
    };
    let table = phonelearn::eval::success_rates(&records)?;
    m.outputs.extend(export_merged(&records, &test.inventory, &out)?);
    m.detail("overall_success_pct", table.overall);
    m.detail("test_frames", records.len());
    m.write(&out, &format!("eval_{learner}_{regime}"))?;
    println!(
        "eval: {learner} {regime} overall {:.2}% over {} frames",
        table.overall,
        records.len()
    );
    Ok(())
}

pub fn consistency(cfg: &RunConfig) -> Result<()> {
    let features = require(&cfg.paths.features, "corpus feature table (--features)")?;
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("consistency", cfg);
    m.input("features", features)?;
    let corpus = load_features(features)?;
    let ccfg = ConsistencyConfig {
        session: cfg.session.clone(),
        ecl: cfg.ecl.clone(),
        mbl: cfg.mbl.clone(),
    };
    let report = run_consistency(&corpus, &ccfg)?;
    m.outputs.extend(export_merged(&report.tidy_records(), &corpus.inventory, &out)?);

    let sessions = out.join("sessions");
    std::fs::create_dir_all(&sessions)?;
    for s in &report.sessions {
        let path = sessions.join(format!("session_{}.json", s.manifest.index));
        std::fs::write(&path, serde_json::to_string_pretty(&s.manifest)? + "\n")?;
        m.outputs.push(path);
    }

    let mut mad = String::from("learner,phone,mad\n");
    let mut medians = String::from("learner,session,median_success_pct,zero_session\n");
    for (learner, summary) in &report.summaries {
        for (j, v) in summary.phone_mad.iter().enumerate().take(N_PHONES) {
            let label = corpus.inventory.label(phonelearn::PhoneId(j));
            mad.push_str(&format!("{learner},{label},{}\n", v.map(format_f64).unwrap_or_default()));
        }
        for (i, med) in summary.session_medians.iter().enumerate() {
            let zero = summary.zero_sessions.contains(&i);
            medians.push_str(&format!("{learner},{i},{},{zero}\n", format_f64(*med)));
        }
    }
    for (name, text) in [("mad_table.csv", mad), ("session_medians.csv", medians)] {
        let path = out.join(name);
        std::fs::write(&path, text)?;
        m.outputs.push(path);
    }
    m.detail("sessions", report.sessions.len());
    m.write(&out, "consistency")?;
    println!("consistency: {} session(s) x 3 learners", report.sessions.len());
    Ok(())
}

pub fn cluster(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let mut m = Manifest::new("cluster", cfg);
    let (profiles, learner) = match (&cfg.paths.profiles, &cfg.paths.state) {
        (Some(p), _) => {
            m.input("profiles", p)?;
            (read_profiles(p)?, Learner::Mbl)
        }
        (None, Some(state)) => {
            let learner = learner(cfg)?;
            ensure!(
                learner != Learner::Mbl,
                "MBL clustering takes vote profiles (--profiles) written by eval"
            );
            m.input("state", state)?;
            let inventory = PhoneInventory::arpabet();
            let w = WeightMatrix::load(state, &inventory)
                .with_context(|| format!("loading weights {}", state.display()))?;
            let mut p = ecl_profiles(&w, &inventory, learner);
            if cfg.drop_zero_profiles {
                let keep: Vec<usize> = (0..p.n_items())
                    .filter(|&i| p.rows[i].iter().any(|&v| v != 0.0))
                    .collect();
                p = p.restrict(&keep);
            }
            (p, learner)
        }
        (None, None) => bail!("missing learner state: pass --state (WH/TD weights) or --profiles (MBL)"),
    };
    let d = ward_cluster(&profiles)?;
    let d = bootstrap_pvalues(&profiles, &d, &cfg.bootstrap)?;
    for format in DendrogramFormat::ALL {
        let path = out.join(format!("dendrogram_{learner}.{}", format.extension()));
        std::fs::write(&path, format.render(&d)?)?;
        m.outputs.push(path);
    }
    m.detail("leaves", d.n_leaves());
    m.detail("bootstrap_seed", cfg.bootstrap.seed);
    m.write(&out, &format!("dendrogram_{learner}"))?;
    let pv = if cfg.bootstrap.n_boot == 0 {
        "p-values unavailable (n_boot = 0)".to_owned()
    } else {
        format!("{} replicates per scale", cfg.bootstrap.n_boot)
    };
    println!("cluster: {learner} {} leaves, {} merges; {pv}", d.n_leaves(), d.nodes.len());
    Ok(())
}
