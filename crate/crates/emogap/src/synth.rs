//! Synthetic corpus with planted ground truth: a known fraction of posts is
//! hidden-anger by construction (writer-reader gap at least 2), and a set of
//! marker tokens appears in hidden posts at a much higher rate than
//! elsewhere. End-to-end runs over it have an answer key: the detector must
//! separate the classes and the miner must recover the markers.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::corpus::{AnnotatedPost, ColumnMapping, PostId, READER_COUNT};
use crate::emotion::{Emotion, EmotionVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpusSpec {
    pub posts: usize,
    /// Fraction of posts that are hidden-anger; the count is exact
    /// (rounded), not per-post sampled.
    pub hidden_fraction: f64,
    pub markers: Vec<String>,
    /// Per-marker presence probability in hidden posts.
    pub marker_rate_hidden: f64,
    /// Per-marker presence probability in other posts.
    pub marker_rate_other: f64,
    /// Size of the shared filler-token inventory.
    pub filler_vocabulary: usize,
    /// Filler tokens per post, sampled uniformly from this inclusive range.
    pub filler_tokens: (usize, usize),
    pub seed: u64,
}

impl Default for PlantedCorpusSpec {
    fn default() -> Self {
        PlantedCorpusSpec {
            posts: 5_000,
            hidden_fraction: 0.1,
            markers: (0..10).map(|i| format!("marker{i}")).collect(),
            marker_rate_hidden: 0.4,
            marker_rate_other: 0.05,
            filler_vocabulary: 200,
            filler_tokens: (5, 12),
            seed: 1,
        }
    }
}

impl PlantedCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.posts < 2 {
            return Err(Error::InvalidArgument("need at least 2 posts".into()));
        }
        if !(0.0..1.0).contains(&self.hidden_fraction) || self.hidden_fraction <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "hidden_fraction {} outside (0, 1)",
                self.hidden_fraction
            )));
        }
        for rate in [self.marker_rate_hidden, self.marker_rate_other] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidArgument(format!(
                    "marker rate {rate} outside [0, 1]"
                )));
            }
        }
        if self.filler_vocabulary == 0 {
            return Err(Error::InvalidArgument("filler vocabulary must be non-empty".into()));
        }
        let (lo, hi) = self.filler_tokens;
        if lo == 0 || hi < lo {
            return Err(Error::InvalidArgument(format!(
                "filler token range ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        for marker in &self.markers {
            if marker.chars().any(char::is_whitespace) || marker.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "marker `{marker}` must be a non-empty whitespace-free token"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub posts: Vec<AnnotatedPost>,
    pub hidden_ids: BTreeSet<PostId>,
    pub markers: Vec<String>,
}

/// Anger intensities with a writer-reader gap of at least 2: the post is
/// hidden-anger under the default threshold by construction.
fn hidden_anger_intensities(rng: &mut ChaCha20Rng) -> (i8, [i8; READER_COUNT]) {
    if rng.random_bool(0.7) {
        // Writer 3, reader sum at most 3 (mean at most 1).
        let mut readers = [0i8; READER_COUNT];
        let mut budget = rng.random_range(0..=3);
        for r in &mut readers {
            let take = rng.random_range(0..=budget.min(1));
            *r = take;
            budget -= take;
        }
        readers.shuffle(rng);
        (3, readers)
    } else {
        // Writer 2, readers silent.
        (2, [0; READER_COUNT])
    }
}

/// Anger intensities whose gap stays strictly below 2.
fn other_intensities(rng: &mut ChaCha20Rng) -> (i8, [i8; READER_COUNT]) {
    loop {
        let writer = rng.random_range(0..=3);
        let readers = [
            rng.random_range(0..=3),
            rng.random_range(0..=3),
            rng.random_range(0..=3),
        ];
        let gap_thirds = writer as i32 * 3 - readers.iter().map(|&r| r as i32).sum::<i32>();
        if gap_thirds < 6 {
            return (writer, readers);
        }
    }
}

fn noise_vector(rng: &mut ChaCha20Rng, anger: i8) -> EmotionVector {
    let mut v = EmotionVector::zero();
    for emotion in Emotion::ALL {
        if emotion == Emotion::Anger {
            v.set(emotion, anger);
        } else {
            v.set(emotion, rng.random_range(0..=1));
        }
    }
    v
}

/// Generate the corpus. Fully deterministic per spec (including the seed).
pub fn generate_planted_corpus(spec: &PlantedCorpusSpec) -> Result<PlantedCorpus> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    let hidden_count = ((spec.posts as f64 * spec.hidden_fraction).round() as usize)
        .clamp(1, spec.posts - 1);
    let mut ids: Vec<u64> = (0..spec.posts as u64).collect();
    ids.shuffle(&mut rng);
    let hidden_ids: BTreeSet<PostId> =
        ids[..hidden_count].iter().map(|&id| PostId(id)).collect();

    let filler: Vec<String> = (0..spec.filler_vocabulary)
        .map(|i| format!("f{i:03}"))
        .collect();

    let mut posts = Vec::with_capacity(spec.posts);
    for id in 0..spec.posts as u64 {
        let hidden = hidden_ids.contains(&PostId(id));
        let marker_rate = if hidden {
            spec.marker_rate_hidden
        } else {
            spec.marker_rate_other
        };

        let mut tokens: Vec<String> = Vec::new();
        for marker in &spec.markers {
            if rng.random_bool(marker_rate) {
                tokens.push(marker.clone());
            }
        }
        let (lo, hi) = spec.filler_tokens;
        for _ in 0..rng.random_range(lo..=hi) {
            tokens.push(filler[rng.random_range(0..filler.len())].clone());
        }
        tokens.shuffle(&mut rng);

        let (writer_anger, reader_anger) = if hidden {
            hidden_anger_intensities(&mut rng)
        } else {
            other_intensities(&mut rng)
        };
        let writer = noise_vector(&mut rng, writer_anger);
        let readers = reader_anger
            .iter()
            .map(|&anger| noise_vector(&mut rng, anger))
            .collect();

        posts.push(AnnotatedPost::new(
            PostId(id),
            tokens.join(" "),
            writer,
            readers,
        ));
    }

    Ok(PlantedCorpus {
        posts,
        hidden_ids,
        markers: spec.markers.clone(),
    })
}

/// Write posts in the dual-annotation TSV layout the default
/// [`ColumnMapping`] parses: Sentence, then writer and per-reader intensity
/// columns per emotion.
pub fn write_corpus_tsv<W: Write>(mut w: W, posts: &[AnnotatedPost]) -> Result<()> {
    let mapping = ColumnMapping::default();
    let mut header = vec![mapping.text_column.clone()];
    for emotion in Emotion::ALL {
        header.push(mapping.writer_column(emotion));
    }
    for r in 0..READER_COUNT {
        for emotion in Emotion::ALL {
            header.push(mapping.reader_column(r, emotion));
        }
    }
    writeln!(w, "{}", header.join("\t"))?;

    for post in posts {
        if post.text.contains(['\t', '\n', '\r']) {
            return Err(Error::Integrity(format!(
                "post {} text contains a TSV separator",
                post.id
            )));
        }
        let mut row = vec![post.text.clone()];
        for emotion in Emotion::ALL {
            row.push(post.writer.get(emotion).to_string());
        }
        for reader in &post.readers {
            for emotion in Emotion::ALL {
                row.push(reader.get(emotion).to_string());
            }
        }
        writeln!(w, "{}", row.join("\t"))?;
    }
    Ok(())
}
