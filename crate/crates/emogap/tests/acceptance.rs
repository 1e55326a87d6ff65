//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL/SKIP line (visible with `-- --nocapture`).
//!
//! Criteria A-F run at desk scale with no external inputs. G-J reproduce
//! published-scale numbers and only run when the environment provides the
//! real corpus and, where needed, an encoder bridge:
//!
//! - `EMOGAP_WRIME_TSV`            dual-annotated corpus TSV (G, H, I, J)
//! - `EMOGAP_ENCODER_CMD`          encoder train/predict bridge (H, I, J)
//! - `EMOGAP_ENCODER_CHECKPOINT`   pretrained checkpoint path (H, I, J)
//! - `EMOGAP_SEGMENTER_CMD`        morphological segmenter (J)

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use emogap::corpus::{AnnotatedPost, PostId};
use emogap::detector::Backend;
use emogap::emotion::{Emotion, EmotionVector};
use emogap::labels::{
    IntensitySource, ReaderStrongMode, cooccurrence_matrix, derive_hidden_labels,
    strong_label_counts,
};
use emogap::metrics::{auc_rank, roc_curve};
use emogap::mining::{self, IntensityRow};
use emogap::pipeline::{self, PipelineConfig, RunManifest, artifact};
use emogap::segment::SegmenterMode;
use emogap::synth::{self, PlantedCorpusSpec};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

/// Print the one-line verdict and enforce it.
fn criterion(name: &str, ok: bool, detail: String) {
    println!("{} criterion {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {name}: {detail}");
}

fn skip(name: &str, needs: &str) {
    println!("SKIP criterion {name}: set {needs} to enable");
}

fn within_budget(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

fn anger_post(id: u64, writer: i8, readers: [i8; 3]) -> AnnotatedPost {
    let mut w = EmotionVector::zero();
    w.set(Emotion::Anger, writer);
    let readers = readers
        .into_iter()
        .map(|r| {
            let mut v = EmotionVector::zero();
            v.set(Emotion::Anger, r);
            v
        })
        .collect();
    AnnotatedPost::new(PostId(id), format!("post {id}"), w, readers)
}

#[test]
fn criterion_a_label_derivation_oracle() {
    let start = Instant::now();
    let mut posts = Vec::with_capacity(256);
    let mut expected = Vec::with_capacity(256);
    let mut id = 0;
    for writer in 0..4i8 {
        for r1 in 0..4i8 {
            for r2 in 0..4i8 {
                for r3 in 0..4i8 {
                    posts.push(anger_post(id, writer, [r1, r2, r3]));
                    // Independent brute-force evaluation in floats.
                    let avg = (r1 as f64 + r2 as f64 + r3 as f64) / 3.0;
                    expected.push(writer as f64 - avg >= 2.0);
                    id += 1;
                }
            }
        }
    }
    let labels = derive_hidden_labels(&posts, Emotion::Anger, 2.0).expect("derive");
    let mismatches = labels
        .iter()
        .zip(&expected)
        .filter(|(l, &e)| l.hidden != e)
        .count();
    let elapsed = start.elapsed();
    criterion(
        "A",
        mismatches == 0 && within_budget(elapsed, 1),
        format!(
            "{mismatches} mismatches over all 256 intensity combinations in {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_b_auc_dual_computation() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xB);
    let mut max_gap = 0.0f64;
    for _ in 0..1_000 {
        let n = rng.random_range(10..=500);
        // Coarse score grid forces heavy ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..=20) as f64 / 20.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        // Guarantee both classes.
        labels[0] = true;
        labels[1] = false;
        let curve = roc_curve(&scores, &labels).expect("curve");
        let rank = auc_rank(&scores, &labels).expect("rank");
        max_gap = max_gap.max((curve.auc - rank).abs());
    }

    let perfect_scores = [0.9, 0.8, 0.2, 0.1];
    let perfect_labels = [true, true, false, false];
    let perfect = roc_curve(&perfect_scores, &perfect_labels).expect("curve").auc;

    let tied_scores = [0.5; 6];
    let tied_labels = [true, false, true, false, true, false];
    let tied = roc_curve(&tied_scores, &tied_labels).expect("curve").auc;

    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let random_auc = roc_curve(&scores, &labels).expect("curve").auc;

    let elapsed = start.elapsed();
    let ok = max_gap <= 1e-9
        && perfect == 1.0
        && tied == 0.5
        && (random_auc - 0.5).abs() <= 0.05
        && within_budget(elapsed, 30);
    criterion(
        "B",
        ok,
        format!(
            "max |trapezoid - rank| = {max_gap:.1e} over 1,000 sets; perfect = {perfect}; \
             all-tied = {tied}; random n=10,000 AUC = {random_auc:.4}; {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_c_cooccurrence_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xC);
    let threshold = 2.0;
    let mut corpora = 0;
    let mut exact = true;
    let mut symmetric = true;
    for round in 0..100 {
        let n = rng.random_range(1..=200);
        let posts: Vec<AnnotatedPost> = (0..n)
            .map(|i| {
                let random_vector = |rng: &mut ChaCha20Rng| {
                    let mut v = EmotionVector::zero();
                    for e in Emotion::ALL {
                        v.set(e, rng.random_range(0..=3));
                    }
                    v
                };
                let writer = random_vector(&mut rng);
                let readers = (0..3).map(|_| random_vector(&mut rng)).collect();
                AnnotatedPost::new(PostId(i), format!("p{i}"), writer, readers)
            })
            .collect();
        let source = if round % 2 == 0 {
            IntensitySource::Writer
        } else {
            IntensitySource::ReaderAverage
        };
        let matrix = cooccurrence_matrix(&posts, source, threshold);
        for a in Emotion::ALL {
            for b in Emotion::ALL {
                // Brute-force pair enumeration over the raw posts.
                let count = posts
                    .iter()
                    .filter(|p| {
                        let strong = |e: Emotion| match source {
                            IntensitySource::Writer => p.writer.get(e) as f64 >= threshold,
                            IntensitySource::ReaderAverage => {
                                let sum: i32 =
                                    p.readers.iter().map(|r| r.get(e) as i32).sum();
                                sum as f64 / 3.0 >= threshold
                            }
                        };
                        strong(a) && strong(b)
                    })
                    .count() as u64;
                exact &= matrix.get(a, b) == count;
                symmetric &= matrix.get(a, b) == matrix.get(b, a);
            }
        }
        corpora += 1;
    }
    let elapsed = start.elapsed();
    criterion(
        "C",
        exact && symmetric && within_budget(elapsed, 30),
        format!(
            "brute-force equality = {exact}, symmetry = {symmetric} over {corpora} corpora; \
             {elapsed:.2?}"
        ),
    );
}

/// Write a planted corpus and a default baseline config for it.
fn planted_run_config(dir: &std::path::Path, spec: &PlantedCorpusSpec, seed: u64) -> PipelineConfig {
    let planted = synth::generate_planted_corpus(spec).expect("generate");
    let corpus = dir.join("corpus.tsv");
    let mut buf = Vec::new();
    synth::write_corpus_tsv(&mut buf, &planted.posts).expect("serialize");
    std::fs::write(&corpus, buf).expect("write corpus");
    PipelineConfig {
        corpus,
        out_dir: dir.join(format!("run-{seed}")),
        seed,
        ..PipelineConfig::default()
    }
}

#[test]
fn criterion_d_planted_marker_end_to_end() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("tempdir");
    let spec = PlantedCorpusSpec::default(); // 5,000 posts, 10% hidden, 0.4 vs 0.05
    let config = planted_run_config(tmp.path(), &spec, 1);
    let manifest = pipeline::run_pipeline(&config, None, None).expect("pipeline");

    let auc: f64 = manifest.summary_value("auc").expect("auc");
    let ranking = std::fs::read(manifest.out_dir.join(artifact::RANKING_FILTERED_TSV))
        .expect("ranking tsv");
    let mined: BTreeSet<String> = mining::read_ranking_tsv(&ranking[..])
        .expect("parse ranking")
        .into_iter()
        .map(|s| s.token)
        .collect();
    let recovered = spec.markers.iter().filter(|m| mined.contains(*m)).count();

    let elapsed = start.elapsed();
    criterion(
        "D",
        auc >= 0.9 && recovered >= 8 && within_budget(elapsed, 120),
        format!(
            "held-out AUC = {auc:.4} (need >= 0.9); {recovered}/10 planted markers in the \
             filtered top-10 (need >= 8); {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_e_intensity_table_fixture_self_check() {
    let start = Instant::now();
    // Published per-word anger-intensity averages: writer, three readers,
    // and the stated writer-minus-average-reader difference.
    let rows = [
        ("ほんと", 0.731, [0.161, 0.218, 0.207], 0.535),
        ("そんな", 0.415, [0.071, 0.162, 0.099], 0.304),
        ("ない", 0.351, [0.083, 0.092, 0.087], 0.264),
        ("だから", 0.587, [0.198, 0.215, 0.157], 0.397),
        ("いや", 0.365, [0.066, 0.131, 0.109], 0.263),
        ("だけど", 0.789, [0.211, 0.105, 0.000], 0.684),
        ("そもそも", 0.476, [0.202, 0.202, 0.833], 0.313),
    ];
    let all_sentences = IntensityRow {
        token: String::new(),
        present: true,
        sentence_count: 0,
        writer_mean: 0.234,
        reader_means: [0.047, 0.057, 0.051],
        writer_minus_avg_reader: 0.182,
    };

    let mut consistent_words = 0;
    let mut flagged: Vec<&str> = Vec::new();
    for (token, writer_mean, reader_means, stated) in rows {
        let row = IntensityRow {
            token: token.to_string(),
            present: true,
            sentence_count: 0,
            writer_mean,
            reader_means,
            writer_minus_avg_reader: stated,
        };
        if row.is_consistent(0.001) {
            consistent_words += 1;
        } else {
            flagged.push(token);
        }
    }
    let all_ok = all_sentences.is_consistent(0.001);
    let elapsed = start.elapsed();
    let ok = consistent_words == 6
        && flagged == ["そもそも"]
        && all_ok
        && within_budget(elapsed, 1);
    criterion(
        "E",
        ok,
        format!(
            "{consistent_words}/7 word rows consistent within 0.001, flagged = {flagged:?}, \
             all-sentences consistent = {all_ok}; {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_f_pipeline_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("tempdir");
    let spec = PlantedCorpusSpec {
        posts: 2_000,
        ..PlantedCorpusSpec::default()
    };
    let planted = synth::generate_planted_corpus(&spec).expect("generate");
    let corpus = tmp.path().join("corpus.tsv");
    let mut buf = Vec::new();
    synth::write_corpus_tsv(&mut buf, &planted.posts).expect("serialize");
    std::fs::write(&corpus, buf).expect("write corpus");

    let run = |out: PathBuf| {
        let config = PipelineConfig {
            corpus: corpus.clone(),
            out_dir: out,
            seed: 17,
            ..PipelineConfig::default()
        };
        pipeline::run_pipeline(&config, None, None).expect("pipeline")
    };
    let first = run(tmp.path().join("a"));
    let second = run(tmp.path().join("b"));
    let identical = first.artifacts == second.artifacts;
    let elapsed = start.elapsed();
    criterion(
        "F",
        identical && within_budget(elapsed, 120),
        format!(
            "{} artifact hashes bitwise-identical across reruns = {identical}; {elapsed:.2?}",
            first.artifacts.len()
        ),
    );
}

// --- Conditional reproduction criteria -----------------------------------

fn wrime_path() -> Option<PathBuf> {
    std::env::var("EMOGAP_WRIME_TSV").ok().map(PathBuf::from)
}

fn encoder_env() -> Option<(String, String)> {
    let cmd = std::env::var("EMOGAP_ENCODER_CMD").ok()?;
    let checkpoint = std::env::var("EMOGAP_ENCODER_CHECKPOINT").ok()?;
    Some((cmd, checkpoint))
}

#[test]
fn criterion_g_strong_label_counts() {
    let Some(path) = wrime_path() else {
        skip("G", "EMOGAP_WRIME_TSV");
        return;
    };
    let posts = emogap::corpus::parse_corpus(&path, &Default::default()).expect("parse corpus");
    let writer_anger =
        strong_label_counts(&posts, Emotion::Anger, 2.0, ReaderStrongMode::Average).writer;
    let writer_trust =
        strong_label_counts(&posts, Emotion::Trust, 2.0, ReaderStrongMode::Average).writer;

    let mut reader_mode = None;
    for mode in [ReaderStrongMode::Average, ReaderStrongMode::PerReader] {
        let anger = strong_label_counts(&posts, Emotion::Anger, 2.0, mode).reader;
        let trust = strong_label_counts(&posts, Emotion::Trust, 2.0, mode).reader;
        if anger == 543 && trust == 185 {
            reader_mode = Some(mode);
            break;
        }
    }
    let ok = writer_anger == 3_040 && writer_trust == 5_167 && reader_mode.is_some();
    criterion(
        "G",
        ok,
        format!(
            "writer strong anger = {writer_anger} (want 3,040), trust = {writer_trust} \
             (want 5,167); reader counts 543/185 reproduced under mode {reader_mode:?}"
        ),
    );
}

/// The conditional encoder-backend runs, shared by H, I, and J. The three
/// seeded pipelines execute once per test binary; later criteria reuse the
/// cached manifests. Failures carry the cause so every dependent criterion
/// reports it instead of panicking.
fn encoder_runs() -> &'static Result<Vec<RunManifest>, String> {
    static RUNS: OnceLock<Result<Vec<RunManifest>, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let corpus = wrime_path().ok_or("EMOGAP_WRIME_TSV unset")?;
        let (encoder_cmd, checkpoint) = encoder_env().ok_or("encoder env unset")?;
        let encoder = emogap::detector::EncoderBridge::from_command_line(&encoder_cmd)
            .map_err(|e| format!("EMOGAP_ENCODER_CMD: {e}"))?;
        let segmenter_cmd = std::env::var("EMOGAP_SEGMENTER_CMD").ok();
        let out_base = std::env::temp_dir().join("emogap-acceptance");
        let mut manifests = Vec::new();
        for seed in [1u64, 2, 3] {
            let mut config = PipelineConfig {
                corpus: corpus.clone(),
                out_dir: out_base.join(format!("seed-{seed}")),
                seed,
                ..PipelineConfig::default()
            };
            config.detector.backend = Backend::Encoder;
            config.detector.encoder_checkpoint = Some(checkpoint.clone());
            let adapter: Option<std::sync::Arc<dyn emogap::segment::SegmenterAdapter>> =
                match &segmenter_cmd {
                    Some(cmd) => {
                        config.segmenter.mode = SegmenterMode::ExternalMorphological;
                        Some(std::sync::Arc::new(
                            emogap::segment::CommandAdapter::from_command_line(cmd)
                                .map_err(|e| format!("EMOGAP_SEGMENTER_CMD: {e}"))?,
                        ))
                    }
                    None => None,
                };
            pipeline::run_pipeline(&config, adapter, Some(&encoder))
                .map(|m| manifests.push(m))
                .map_err(|e| format!("seed {seed} pipeline: {e}"))?;
        }
        Ok(manifests)
    })
}

#[test]
fn criterion_h_detector_reproduction() {
    if wrime_path().is_none() || encoder_env().is_none() {
        skip(
            "H",
            "EMOGAP_WRIME_TSV, EMOGAP_ENCODER_CMD, and EMOGAP_ENCODER_CHECKPOINT",
        );
        return;
    }
    let runs = match encoder_runs() {
        Ok(runs) => runs,
        Err(e) => return criterion("H", false, format!("conditional run failed: {e}")),
    };
    let aucs: Vec<f64> = runs
        .iter()
        .map(|m| m.summary_value("auc").expect("auc"))
        .collect();
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let hidden_counts: Vec<u64> = runs
        .iter()
        .map(|m| m.summary_value("n_test_hidden").expect("n_test_hidden"))
        .collect();
    let hidden_ok = hidden_counts
        .iter()
        .all(|&n| (n as f64 - 493.0).abs() <= 49.3);
    let ok = (mean_auc - 0.772).abs() <= 0.03 && hidden_ok;
    criterion(
        "H",
        ok,
        format!(
            "mean AUC over 3 seeds = {mean_auc:.4} (want 0.772 +/- 0.03), per-seed {aucs:?}; \
             test hidden counts {hidden_counts:?} (want 493 +/- 10%)"
        ),
    );
}

#[test]
fn criterion_i_true_positive_count() {
    if wrime_path().is_none() || encoder_env().is_none() {
        skip(
            "I",
            "EMOGAP_WRIME_TSV, EMOGAP_ENCODER_CMD, and EMOGAP_ENCODER_CHECKPOINT",
        );
        return;
    }
    let runs = match encoder_runs() {
        Ok(runs) => runs,
        Err(e) => return criterion("I", false, format!("conditional run failed: {e}")),
    };
    let mut best: Option<(u64, &str)> = None;
    let mut ok = false;
    for manifest in runs {
        for key in ["operating_tp", "youden_tp"] {
            let tp: u64 = manifest.summary_value(key).expect(key);
            if (tp as f64 - 314.0).abs() <= 31.4 {
                ok = true;
            }
            if best.is_none_or(|(b, _)| (tp as i64 - 314).unsigned_abs() < (b as i64 - 314).unsigned_abs()) {
                best = Some((tp, key));
            }
        }
    }
    criterion(
        "I",
        ok,
        format!(
            "closest operating point {best:?} against 314 +/- 10% true positives"
        ),
    );
}

#[test]
fn criterion_j_expression_recovery() {
    if wrime_path().is_none()
        || encoder_env().is_none()
        || std::env::var("EMOGAP_SEGMENTER_CMD").is_err()
    {
        skip(
            "J",
            "EMOGAP_WRIME_TSV, EMOGAP_ENCODER_CMD, EMOGAP_ENCODER_CHECKPOINT, and \
             EMOGAP_SEGMENTER_CMD",
        );
        return;
    }
    let runs = match encoder_runs() {
        Ok(runs) => runs,
        Err(e) => return criterion("J", false, format!("conditional run failed: {e}")),
    };
    let published = ["ほんと", "そんな", "ない", "だから", "いや", "だけど", "そもそも"];
    let ranking = std::fs::read(runs[0].out_dir.join(artifact::RANKING_FILTERED_TSV))
        .expect("ranking tsv");
    let mined: BTreeSet<String> = mining::read_ranking_tsv(&ranking[..])
        .expect("parse")
        .into_iter()
        .map(|s| s.token)
        .collect();
    let recovered: Vec<&str> = published
        .iter()
        .copied()
        .filter(|w| mined.contains(*w))
        .collect();
    criterion(
        "J",
        recovered.len() >= 5,
        format!(
            "filtered top-10 contains {}/7 published words: {recovered:?} \
             (soft criterion; segmentation-dependent)",
            recovered.len()
        ),
    );
}
