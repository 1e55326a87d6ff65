//! Hidden-emotion label derivation from writer-reader intensity gaps, plus
//! corpus-level discrepancy statistics (co-occurrence matrices and
//! strong-label counts).
//!
//! Reader averages and gaps are exact rationals with denominator 3, so the
//! `gap >= 2` boundary never depends on floating-point rounding.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedPost, PostId, READER_COUNT};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::keyed;
use crate::par;

/// Exact rational with fixed denominator 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Thirds(i32);

impl Thirds {
    pub fn new(numerator: i32) -> Self {
        Thirds(numerator)
    }

    pub fn from_integer(value: i32) -> Self {
        Thirds(value * 3)
    }

    /// Numerator over the fixed denominator 3.
    pub fn numerator(self) -> i32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 3.0
    }

    /// Exact comparison against an arbitrary real threshold.
    pub fn at_least(self, threshold: f64) -> bool {
        self.0 as f64 >= threshold * 3.0
    }
}

impl fmt::Display for Thirds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 3 == 0 {
            write!(f, "{}", self.0 / 3)
        } else {
            write!(f, "{}/3", self.0)
        }
    }
}

fn reader_intensity_sum(post: &AnnotatedPost, emotion: Emotion) -> i32 {
    assert_eq!(
        post.readers.len(),
        READER_COUNT,
        "post {} is not validated: expected {READER_COUNT} readers",
        post.id
    );
    post.readers
        .iter()
        .map(|r| r.get(emotion) as i32)
        .sum()
}

/// Exact mean of the three reader intensities for one emotion.
pub fn reader_average(post: &AnnotatedPost, emotion: Emotion) -> Thirds {
    Thirds::new(reader_intensity_sum(post, emotion))
}

/// Writer intensity minus the reader average. Negative when readers
/// perceive more than the writer reported.
pub fn hidden_gap(post: &AnnotatedPost, emotion: Emotion) -> Thirds {
    let writer = post.writer.get(emotion) as i32;
    Thirds::new(writer * 3 - reader_intensity_sum(post, emotion))
}

/// Per-post, per-emotion derived record of the writer-reader gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenLabel {
    pub post_id: PostId,
    pub emotion: Emotion,
    pub writer_intensity: i8,
    pub reader_avg: Thirds,
    pub gap: Thirds,
    pub hidden: bool,
}

pub const DEFAULT_GAP_THRESHOLD: f64 = 2.0;

/// Derive one [`HiddenLabel`] per post: `hidden` iff the writer's intensity
/// exceeds the reader average by at least `gap_threshold` levels.
pub fn derive_hidden_labels(
    posts: &[AnnotatedPost],
    emotion: Emotion,
    gap_threshold: f64,
) -> Result<Vec<HiddenLabel>> {
    if !(gap_threshold > 0.0 && gap_threshold <= 3.0) {
        return Err(Error::InvalidArgument(format!(
            "gap_threshold {gap_threshold} outside (0, 3]"
        )));
    }
    Ok(par::map_collect(posts, |post| {
        let writer_intensity = post.writer.get(emotion);
        let reader_avg = reader_average(post, emotion);
        let gap = hidden_gap(post, emotion);
        HiddenLabel {
            post_id: post.id,
            emotion,
            writer_intensity,
            reader_avg,
            gap,
            hidden: gap.at_least(gap_threshold),
        }
    }))
}

/// Emit labels as TSV with exact thirds alongside decimal renderings.
pub fn write_labels_tsv<W: Write>(mut w: W, labels: &[HiddenLabel]) -> Result<()> {
    writeln!(
        w,
        "post_id\temotion\twriter_intensity\treader_avg_thirds\treader_avg\tgap_thirds\tgap\thidden"
    )?;
    for label in labels {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{}",
            label.post_id,
            label.emotion,
            label.writer_intensity,
            label.reader_avg.numerator(),
            label.reader_avg.as_f64(),
            label.gap.numerator(),
            label.gap.as_f64(),
            label.hidden,
        )?;
    }
    Ok(())
}

/// Emit labels as keyed text records, one per line.
pub fn write_labels_records<W: Write>(mut w: W, labels: &[HiddenLabel]) -> Result<()> {
    for label in labels {
        let pairs = [
            ("post_id", label.post_id.to_string()),
            ("emotion", label.emotion.to_string()),
            ("writer_intensity", label.writer_intensity.to_string()),
            ("reader_avg_thirds", label.reader_avg.numerator().to_string()),
            ("gap_thirds", label.gap.numerator().to_string()),
            ("hidden", label.hidden.to_string()),
        ];
        writeln!(w, "{}", keyed::record_line(&pairs))?;
    }
    Ok(())
}

/// Read labels back from the TSV artifact.
pub fn read_labels_tsv<R: std::io::Read>(reader: R) -> Result<Vec<HiddenLabel>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::row(i + 1, "short label row".to_string()))
        };
        let parse_i32 = |idx: usize| -> Result<i32> {
            field(idx)?
                .parse()
                .map_err(|_| Error::row(i + 1, format!("field {idx} is not an integer")))
        };
        labels.push(HiddenLabel {
            post_id: field(0)?.parse()?,
            emotion: field(1)?.parse()?,
            writer_intensity: parse_i32(2)? as i8,
            reader_avg: Thirds::new(parse_i32(3)?),
            gap: Thirds::new(parse_i32(5)?),
            hidden: field(7)? == "true",
        });
    }
    Ok(labels)
}

/// Which annotation side a statistic is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensitySource {
    Writer,
    ReaderAverage,
}

impl fmt::Display for IntensitySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensitySource::Writer => f.write_str("writer"),
            IntensitySource::ReaderAverage => f.write_str("reader-average"),
        }
    }
}

pub const DEFAULT_STRONG_THRESHOLD: f64 = 2.0;

/// Mask of emotions whose intensity is at least `threshold` under `source`.
fn strong_mask(post: &AnnotatedPost, source: IntensitySource, threshold: f64) -> [bool; 8] {
    let mut mask = [false; 8];
    for emotion in Emotion::ALL {
        mask[emotion.index()] = match source {
            IntensitySource::Writer => post.writer.get(emotion) as f64 >= threshold,
            IntensitySource::ReaderAverage => {
                reader_average(post, emotion).at_least(threshold)
            }
        };
    }
    mask
}

/// Symmetric 8x8 matrix of strong-label co-occurrence counts in canonical
/// emotion order. The diagonal holds per-emotion strong counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub source: IntensitySource,
    pub strong_threshold: f64,
    counts: [[u64; 8]; 8],
}

impl CooccurrenceMatrix {
    pub fn get(&self, a: Emotion, b: Emotion) -> u64 {
        self.counts[a.index()][b.index()]
    }

    pub fn get_index(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j]
    }

    pub fn max_count(&self) -> u64 {
        self.counts
            .iter()
            .flat_map(|row| row.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// TSV with a leading row-label column and 8 header columns in
    /// canonical emotion order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<&str> = Emotion::ALL.iter().map(|e| e.name()).collect();
        writeln!(w, "emotion\t{}", header.join("\t"))?;
        for a in Emotion::ALL {
            let row: Vec<String> = Emotion::ALL
                .iter()
                .map(|b| self.get(a, *b).to_string())
                .collect();
            writeln!(w, "{}\t{}", a.name(), row.join("\t"))?;
        }
        Ok(())
    }

    /// Keyed record form: one `counts_<emotion>` key per row.
    pub fn write_records<W: Write>(&self, mut w: W) -> Result<()> {
        let mut pairs = vec![
            ("source", self.source.to_string()),
            ("strong_threshold", format!("{}", self.strong_threshold)),
        ];
        let values: Vec<String> = Emotion::ALL
            .iter()
            .map(|a| {
                Emotion::ALL
                    .iter()
                    .map(|b| self.get(*a, *b).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        let keys = [
            "counts_joy",
            "counts_sadness",
            "counts_anticipation",
            "counts_surprise",
            "counts_anger",
            "counts_fear",
            "counts_disgust",
            "counts_trust",
        ];
        for (key, value) in keys.iter().zip(values) {
            pairs.push((key, value));
        }
        writeln!(w, "{}", keyed::record_line(&pairs))?;
        Ok(())
    }

    pub fn read_tsv<R: std::io::Read>(
        reader: R,
        source: IntensitySource,
        strong_threshold: f64,
    ) -> Result<CooccurrenceMatrix> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .from_reader(reader);
        let mut counts = [[0u64; 8]; 8];
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if i >= 8 {
                return Err(Error::Integrity("co-occurrence TSV has extra rows".into()));
            }
            for j in 0..8 {
                let raw = record
                    .get(j + 1)
                    .ok_or_else(|| Error::Integrity("short co-occurrence row".into()))?;
                counts[i][j] = raw
                    .parse()
                    .map_err(|_| Error::Integrity(format!("bad count `{raw}`")))?;
            }
        }
        Ok(CooccurrenceMatrix {
            source,
            strong_threshold,
            counts,
        })
    }
}

/// Count, for every emotion pair, the posts where both emotions are strong
/// (intensity at least `strong_threshold`) under `source`.
pub fn cooccurrence_matrix(
    posts: &[AnnotatedPost],
    source: IntensitySource,
    strong_threshold: f64,
) -> CooccurrenceMatrix {
    let masks = par::map_collect(posts, |post| strong_mask(post, source, strong_threshold));
    let mut counts = [[0u64; 8]; 8];
    for mask in masks {
        for i in 0..8 {
            if !mask[i] {
                continue;
            }
            for j in 0..8 {
                if mask[j] {
                    counts[i][j] += 1;
                }
            }
        }
    }
    CooccurrenceMatrix {
        source,
        strong_threshold,
        counts,
    }
}

/// How reader-side strong labels are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReaderStrongMode {
    /// Posts whose three-reader average intensity reaches the threshold.
    #[default]
    Average,
    /// Individual reader annotations reaching the threshold (up to three per post).
    PerReader,
}

impl fmt::Display for ReaderStrongMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReaderStrongMode::Average => f.write_str("average"),
            ReaderStrongMode::PerReader => f.write_str("per-reader"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrongLabelCounts {
    pub writer: u64,
    pub reader: u64,
    pub mode: ReaderStrongMode,
}

/// Strong-label counts for one emotion: posts with a strong writer label,
/// and reader-side strength under the chosen counting mode.
pub fn strong_label_counts(
    posts: &[AnnotatedPost],
    emotion: Emotion,
    strong_threshold: f64,
    mode: ReaderStrongMode,
) -> StrongLabelCounts {
    let per_post = par::map_collect(posts, |post| {
        let writer = (post.writer.get(emotion) as f64 >= strong_threshold) as u64;
        let reader = match mode {
            ReaderStrongMode::Average => {
                reader_average(post, emotion).at_least(strong_threshold) as u64
            }
            ReaderStrongMode::PerReader => post
                .readers
                .iter()
                .filter(|r| r.get(emotion) as f64 >= strong_threshold)
                .count() as u64,
        };
        (writer, reader)
    });
    let (writer, reader) = per_post
        .into_iter()
        .fold((0, 0), |(w, r), (pw, pr)| (w + pw, r + pr));
    StrongLabelCounts {
        writer,
        reader,
        mode,
    }
}
