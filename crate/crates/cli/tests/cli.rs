use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phonelearn::corpus::write_feature_table;
use phonelearn::mfcc::frame_count;
use phonelearn::{FrameDataset, LabeledFrame, MfccConfig, PhoneId, PhoneInventory, WeightMatrix};

fn phonelearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonelearn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = phonelearn(args);
    assert!(
        out.status.success(),
        "phonelearn {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn data_rows(csv: &str) -> usize {
    csv.lines().filter(|l| !l.starts_with('#')).count() - 1
}

fn write_wav(path: &Path, seconds: f64, freq: f64) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    let n = (seconds * 16_000.0).round() as usize;
    for i in 0..n {
        let t = i as f64 / 16_000.0;
        let v = 0.3 * (2.0 * std::f64::consts::PI * freq * t).sin() + 0.05 * (i as f64 * 0.7).cos();
        w.write_sample((v * 32767.0) as i16).unwrap();
    }
    w.finalize().unwrap();
}

/// Well separated 5-phone toy data: phone p lights up cues with index = p mod 5.
fn toy_dataset(words: usize, offset: usize) -> FrameDataset {
    let mut frames = Vec::new();
    for w in 0..words {
        for k in 0..4 {
            let class = (w + k) % 5;
            frames.push(LabeledFrame {
                word_id: format!("w{:04}", w + offset),
                trial_index: frames.len() as u64,
                phone: PhoneId([1, 10, 17, 28, 0][class]),
                cues: std::array::from_fn(|f| {
                    let jitter = (((w * 31 + k * 17 + f * 7) % 13) as f64 - 6.0) * 0.004;
                    (if f % 5 == class { 1.0 } else { 0.0 }) + jitter
                }),
            });
        }
    }
    FrameDataset::from_frames(PhoneInventory::arpabet(), frames).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    train: PathBuf,
    test: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_owned();
    let train = root.join("train.csv");
    let test = root.join("test.csv");
    write_feature_table(&train, &toy_dataset(150, 0)).unwrap();
    write_feature_table(&test, &toy_dataset(30, 1000)).unwrap();
    Fixture { _dir: dir, root, train, test }
}

#[test]
fn extract_counts_frames_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("audio");
    std::fs::create_dir(&audio).unwrap();
    write_wav(&audio.join("cat.wav"), 0.3, 440.0);
    write_wav(&audio.join("dog.wav"), 0.25, 220.0);
    let align = dir.path().join("align.tsv");
    std::fs::write(
        &align,
        "word_id\tphone\tstart\tend\n\
         cat\tK\t0.0\t0.1\ncat\tAE1\t0.1\t0.25\ncat\tT\t0.25\t0.3\n\
         dog\tD\t0.0\t0.05\ndog\tAO1\t0.05\t0.2\ndog\tG\t0.2\t0.25\n",
    )
    .unwrap();
    let cfg = MfccConfig::default();
    let expected: usize = [0.1, 0.15, 0.05, 0.05, 0.15, 0.05]
        .iter()
        .map(|d| frame_count(*d, &cfg).unwrap())
        .sum();

    let run = |out: &Path| {
        ok(&["extract", "--audio-dir", s(&audio), "--alignments", s(&align), "--out-dir", s(out)]);
        (read(out.join("features.csv")), read(out.join("features.manifest.json")))
    };
    let (a, ma) = run(&dir.path().join("o1"));
    assert_eq!(data_rows(&a), expected);
    let (b, mb) = run(&dir.path().join("o2"));
    assert_eq!(a, b);
    // Manifests differ only in the output path they record.
    assert_eq!(ma.replace("o1", "o2"), mb);

    let manifest: serde_json::Value = serde_json::from_str(&ma).unwrap();
    let roles: Vec<&str> = manifest["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["alignments", "audio"]);
    assert_eq!(manifest["details"]["frames"], expected);
}

#[test]
fn extract_on_empty_dir_warns_and_writes_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("audio");
    std::fs::create_dir(&audio).unwrap();
    let align = dir.path().join("align.tsv");
    std::fs::write(&align, "cat\tK\t0.0\t0.1\n").unwrap();
    let out = dir.path().join("out");
    let res = ok(&["extract", "--audio-dir", s(&audio), "--alignments", s(&align), "--out-dir", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning: no WAV files"));
    assert_eq!(data_rows(&read(out.join("features.csv"))), 0);
}

#[test]
fn extract_reports_per_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("audio");
    std::fs::create_dir(&audio).unwrap();
    write_wav(&audio.join("cat.wav"), 0.2, 440.0);
    let align = dir.path().join("align.tsv");
    std::fs::write(&align, "cat\tK\t0.0\t0.2\nmissing\tK\t0.0\t0.2\n").unwrap();
    let out = dir.path().join("out");
    let res = phonelearn(&["extract", "--audio-dir", s(&audio), "--alignments", s(&align), "--out-dir", s(&out)]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    let last: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(last["status"], "error");
    assert_eq!(last["command"], "extract");
    assert!(last["message"].as_str().unwrap().contains("1 of 2 words"));
    // The word that did extract is still written.
    assert_eq!(
        data_rows(&read(out.join("features.csv"))),
        frame_count(0.2, &MfccConfig::default()).unwrap()
    );
}

#[test]
fn td_without_discount_writes_the_wh_file() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["train", "--features", s(&f.train), "--learner", "wh", "--out-dir", s(&out)]);
    ok(&["train", "--features", s(&f.train), "--learner", "td", "--discount", "0", "--out-dir", s(&out)]);
    let wh = read(out.join("weights_WH_raw.csv"));
    let td = read(out.join("weights_TD_raw.csv"));
    assert_eq!(wh, td);
    let lines: Vec<&str> = wh.lines().collect();
    // Header of 40 phone labels, then one row per cue.
    assert_eq!(lines.len(), 1 + 39);
    assert!(lines.iter().all(|l| l.split(',').count() == 40));

    ok(&["train", "--features", s(&f.train), "--learner", "td", "--out-dir", s(&out)]);
    assert_ne!(read(out.join("weights_TD_raw.csv")), wh);
}

#[test]
fn train_manifest_records_config_and_digest() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["--seed", "5", "train", "--features", s(&f.train), "--learner", "wh", "--learning-rate", "0.01", "--out-dir", s(&out)]);
    let m: serde_json::Value = serde_json::from_str(&read(out.join("weights_WH_raw.manifest.json"))).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["ecl"]["learning_rate"], 0.01);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    // The saved config reproduces the run.
    let again = f.root.join("again");
    ok(&["--config", s(&out.join("weights_WH_raw.config.toml")), "train", "--out-dir", s(&again)]);
    assert_eq!(read(out.join("weights_WH_raw.csv")), read(again.join("weights_WH_raw.csv")));
}

#[test]
fn flags_override_config_file() {
    let f = fixture();
    let cfg = f.root.join("run.toml");
    std::fs::write(&cfg, "learner = \"td\"\n[ecl]\ndiscount = 0.0\nlearning_rate = 0.02\n").unwrap();
    let out = f.root.join("out");
    ok(&["--config", s(&cfg), "train", "--features", s(&f.train), "--discount", "0.25", "--out-dir", s(&out)]);
    let m: serde_json::Value = serde_json::from_str(&read(out.join("weights_TD_raw.manifest.json"))).unwrap();
    assert_eq!(m["config"]["ecl"]["discount"], 0.25);
    assert_eq!(m["config"]["ecl"]["learning_rate"], 0.02);
}

#[test]
fn ecl_eval_on_separable_data_is_perfect() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["train", "--features", s(&f.train), "--learner", "wh", "--learning-rate", "0.05", "--out-dir", s(&out)]);
    let res = ok(&[
        "--threads", "2", "eval", "--state", s(&out.join("weights_WH_raw.csv")), "--test", s(&f.test),
        "--learner", "wh", "--out-dir", s(&out),
    ]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("overall 100.00%"));
    let tidy = read(out.join("results_tidy.csv"));
    assert_eq!(data_rows(&tidy), 40);
    assert!(out.join("confusion_WH_raw.csv").exists());
}

#[test]
fn zero_weights_predict_the_first_phone() {
    let f = fixture();
    let out = f.root.join("out");
    std::fs::create_dir_all(&out).unwrap();
    let w = out.join("zeros.csv");
    WeightMatrix::zeros().save(&PhoneInventory::arpabet(), &w).unwrap();
    ok(&["eval", "--state", s(&w), "--test", s(&f.test), "--learner", "wh", "--out-dir", s(&out)]);
    let confusion = read(out.join("confusion_WH_raw.csv"));
    for line in confusion.lines().skip(1) {
        let counts: Vec<u64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!(counts[1..].iter().all(|&c| c == 0), "{line}");
    }
}

#[test]
fn mbl_state_eval_and_cluster() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["train", "--features", s(&f.train), "--learner", "mbl", "--out-dir", s(&out)]);
    let store: serde_json::Value = serde_json::from_str(&read(out.join("store_MBL_raw.json"))).unwrap();
    assert_eq!(store["k"], 7);
    assert_eq!(
        PathBuf::from(store["features"]["path"].as_str().unwrap()),
        std::fs::canonicalize(&f.train).unwrap()
    );

    ok(&["eval", "--state", s(&out.join("store_MBL_raw.json")), "--test", s(&f.test), "--out-dir", s(&out)]);
    ok(&["train", "--features", s(&f.train), "--learner", "wh", "--learning-rate", "0.05", "--out-dir", s(&out)]);
    ok(&["eval", "--state", s(&out.join("weights_WH_raw.csv")), "--test", s(&f.test), "--learner", "wh", "--out-dir", s(&out)]);
    // Both cells accumulate in one tidy table.
    let tidy = read(out.join("results_tidy.csv"));
    assert_eq!(data_rows(&tidy), 80);
    assert!(tidy.contains(",MBL,raw,") && tidy.contains(",WH,raw,"));

    let profiles = out.join("profiles_MBL_raw.csv");
    assert_eq!(read(&profiles).lines().count(), 6);
    ok(&["cluster", "--profiles", s(&profiles), "--n-boot", "50", "--out-dir", s(&out)]);
    let nwk = read(out.join("dendrogram_MBL.nwk"));
    assert!(nwk.trim_end().ends_with(';'));
    assert_eq!(nwk.matches(':').count(), 8);

    // Changing the stored table invalidates the store.
    std::fs::write(&f.train, read(&f.train) + "\n").unwrap();
    let res = phonelearn(&["eval", "--state", s(&out.join("store_MBL_raw.json")), "--test", s(&f.test), "--out-dir", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("changed since training"));
}

#[test]
fn cluster_without_bootstrap_has_no_pvalues() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["train", "--features", s(&f.train), "--learner", "wh", "--out-dir", s(&out)]);
    let w = out.join("weights_WH_raw.csv");
    let res = ok(&["cluster", "--state", s(&w), "--learner", "wh", "--n-boot", "0", "--out-dir", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("39 merges; p-values unavailable"));
    let d: serde_json::Value = serde_json::from_str(&read(out.join("dendrogram_WH.json"))).unwrap();
    let nodes = d["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 39);
    assert!(nodes.iter().all(|n| n["au"].is_null() && n["bp"].is_null()));
}

#[test]
fn cluster_is_reproducible_with_fixed_seed() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["train", "--features", s(&f.train), "--learner", "wh", "--out-dir", s(&out)]);
    let w = out.join("weights_WH_raw.csv");
    let run = |dir: &str| {
        let o = f.root.join(dir);
        ok(&["--seed", "3", "cluster", "--state", s(&w), "--learner", "wh", "--n-boot", "30", "--drop-zero-profiles", "--out-dir", s(&o)]);
        (read(o.join("dendrogram_WH.dot")), read(o.join("dendrogram_WH.json")))
    };
    let a = run("c1");
    assert_eq!(a, run("c2"));
    let d: serde_json::Value = serde_json::from_str(&a.1).unwrap();
    assert_eq!(d["labels"].as_array().unwrap().len(), 5);
    assert!(d["nodes"].as_array().unwrap().iter().all(|n| n["au"].is_number()));
}

#[test]
fn cluster_without_state_fails() {
    let dir = tempfile::tempdir().unwrap();
    let res = phonelearn(&["cluster", "--out-dir", s(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    let line: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert!(line["message"].as_str().unwrap().contains("missing learner state"));
}

#[test]
fn split_and_gaussian_outputs() {
    let f = fixture();
    let out = f.root.join("out");
    ok(&["split", "--features", s(&f.train), "--test-fraction", "0.2", "--out-dir", s(&out)]);
    assert_eq!(data_rows(&read(out.join("test.csv"))), 120);
    assert_eq!(data_rows(&read(out.join("train.csv"))), 480);

    // Every phone needs two frames for its moments; the toy data has five.
    let res = phonelearn(&["gaussian", "--features", s(&f.train), "--out-dir", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("at least 2 are needed"));
}

#[test]
fn gaussian_writes_one_table_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let frames = (0..120)
        .map(|t| LabeledFrame {
            word_id: format!("w{}", t / 3),
            trial_index: t as u64,
            phone: PhoneId(t % 40),
            cues: std::array::from_fn(|f| ((t * 7 + f * 3) % 11) as f64 * 0.1),
        })
        .collect();
    let train = dir.path().join("train.csv");
    write_feature_table(&train, &FrameDataset::from_frames(PhoneInventory::arpabet(), frames).unwrap()).unwrap();
    let out = dir.path().join("out");
    ok(&["gaussian", "--features", s(&train), "--sizes", "2,5", "--out-dir", s(&out)]);
    assert_eq!(data_rows(&read(out.join("gaussian_n2.csv"))), 80);
    assert_eq!(data_rows(&read(out.join("gaussian_n5.csv"))), 200);
    let again = dir.path().join("again");
    ok(&["gaussian", "--features", s(&train), "--sizes", "2,5", "--out-dir", s(&again)]);
    assert_eq!(read(out.join("gaussian_n5.csv")), read(again.join("gaussian_n5.csv")));
    ok(&["--seed", "1", "gaussian", "--features", s(&train), "--sizes", "2,5", "--out-dir", s(&again)]);
    assert_ne!(read(out.join("gaussian_n5.csv")), read(again.join("gaussian_n5.csv")));
}

#[test]
fn consistency_writes_per_session_tables() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.csv");
    write_feature_table(&corpus, &toy_dataset(80, 0)).unwrap();
    let out = dir.path().join("out");
    ok(&[
        "consistency", "--features", s(&corpus), "--sessions", "2", "--vocab-size", "20",
        "--replications", "3", "--test-words", "10", "--learning-rate", "0.01", "--out-dir", s(&out),
    ]);
    let tidy = read(out.join("results_tidy.csv"));
    for learner in ["MBL", "WH", "TD"] {
        for session in 0..2 {
            for suffix in ["", "-known", "-new"] {
                let tag = format!(",{learner},session-{session}{suffix},{session},");
                assert_eq!(tidy.matches(&tag).count(), 40, "{tag}");
            }
        }
    }
    assert_eq!(data_rows(&read(out.join("mad_table.csv"))), 120);
    assert_eq!(data_rows(&read(out.join("session_medians.csv"))), 6);
    let s0: serde_json::Value = serde_json::from_str(&read(out.join("sessions/session_0.json"))).unwrap();
    assert_eq!(s0["vocabulary"].as_array().unwrap().len(), 20);
}
