//! Stage (ii): rank tokens by the difference in per-sentence document rate
//! between hidden-emotion sentences and other sentences, and report
//! intensity averages for sentences containing chosen tokens.
//!
//! "Frequency of occurrence" is presence-based: a token counts once per
//! sentence containing it, which keeps the two class rates comparable
//! despite the hugely unequal class sizes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedPost, PostId, READER_COUNT};
use crate::detector::PredictionRecord;
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::labels::HiddenLabel;
use crate::par;

/// One mined token with its class rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionScore {
    pub token: String,
    /// Share of hidden-set sentences containing the token.
    pub rate_hidden: f64,
    /// Share of other-set sentences containing the token.
    pub rate_other: f64,
    /// Exactly `rate_hidden - rate_other`.
    pub diff: f64,
}

/// Ranking output; `shortfall` marks that fewer than the requested k tokens
/// passed the support floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub scores: Vec<ExpressionScore>,
    pub requested_k: usize,
    pub min_hidden_count: u64,
    pub qualifying_tokens: usize,
    pub shortfall: bool,
}

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MIN_HIDDEN_COUNT: u64 = 5;

/// Posts both hidden in the gold labels and flagged by the detector —
/// the sentence pool of filtered-mode mining.
pub fn true_positive_filter(
    labels: &[HiddenLabel],
    predictions: &[PredictionRecord],
) -> Result<BTreeSet<PostId>> {
    let label_map: HashMap<PostId, bool> =
        labels.iter().map(|l| (l.post_id, l.hidden)).collect();
    if label_map.len() != labels.len() {
        return Err(Error::InvalidArgument("duplicate post id in labels".into()));
    }
    let mut decided: HashMap<PostId, bool> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if decided.insert(p.post_id, p.decision).is_some() {
            return Err(Error::InvalidArgument(
                "duplicate post id in predictions".into(),
            ));
        }
    }
    if decided.len() != label_map.len()
        || !decided.keys().all(|id| label_map.contains_key(id))
    {
        return Err(Error::InvalidArgument(
            "labels and predictions cover different post ids".into(),
        ));
    }
    Ok(label_map
        .into_iter()
        .filter(|&(id, hidden)| hidden && decided[&id])
        .map(|(id, _)| id)
        .collect())
}

/// Share of sentences containing the token at least once.
pub fn doc_rate(token: &str, sentences: &[Vec<String>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::InvalidArgument(
            "document rate over an empty sentence set".into(),
        ));
    }
    let containing = sentences
        .iter()
        .filter(|tokens| tokens.iter().any(|t| t == token))
        .count();
    Ok(containing as f64 / sentences.len() as f64)
}

/// Per-token presence counts: in how many sentences each token appears.
fn presence_counts(sentences: &[Vec<String>]) -> BTreeMap<String, u64> {
    let partials = par::chunk_partials(sentences, |chunk| {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for tokens in chunk {
            let unique: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
            for token in unique {
                *counts.entry(token.to_string()).or_insert(0) += 1;
            }
        }
        counts
    });
    let mut merged: BTreeMap<String, u64> = BTreeMap::new();
    for partial in partials {
        for (token, count) in partial {
            *merged.entry(token).or_insert(0) += count;
        }
    }
    merged
}

/// Rank tokens by hidden-vs-other document-rate difference, descending;
/// ties break by higher hidden rate, then token order. Only tokens found in
/// at least `min_hidden_count` hidden sentences qualify.
pub fn expression_ranking(
    hidden_sentences: &[Vec<String>],
    other_sentences: &[Vec<String>],
    k: usize,
    min_hidden_count: u64,
) -> Result<RankingResult> {
    if hidden_sentences.is_empty() || other_sentences.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "expression ranking needs both sentence sets ({} hidden, {} other)",
            hidden_sentences.len(),
            other_sentences.len()
        )));
    }
    let hidden_counts = presence_counts(hidden_sentences);
    let other_counts = presence_counts(other_sentences);
    let hidden_total = hidden_sentences.len() as f64;
    let other_total = other_sentences.len() as f64;

    let mut scores: Vec<ExpressionScore> = hidden_counts
        .iter()
        .filter(|&(_, &count)| count >= min_hidden_count)
        .map(|(token, &count)| {
            let rate_hidden = count as f64 / hidden_total;
            let rate_other =
                other_counts.get(token).copied().unwrap_or(0) as f64 / other_total;
            ExpressionScore {
                token: token.clone(),
                rate_hidden,
                rate_other,
                diff: rate_hidden - rate_other,
            }
        })
        .collect();
    if min_hidden_count == 0 {
        // A zero floor admits tokens seen only in the other set.
        for (token, &count) in &other_counts {
            if !hidden_counts.contains_key(token) {
                let rate_other = count as f64 / other_total;
                scores.push(ExpressionScore {
                    token: token.clone(),
                    rate_hidden: 0.0,
                    rate_other,
                    diff: -rate_other,
                });
            }
        }
    }

    scores.sort_by(|a, b| {
        b.diff
            .partial_cmp(&a.diff)
            .expect("rates are finite")
            .then(
                b.rate_hidden
                    .partial_cmp(&a.rate_hidden)
                    .expect("rates are finite"),
            )
            .then_with(|| a.token.cmp(&b.token))
    });
    let qualifying_tokens = scores.len();
    let shortfall = qualifying_tokens < k;
    scores.truncate(k);
    Ok(RankingResult {
        scores,
        requested_k: k,
        min_hidden_count,
        qualifying_tokens,
        shortfall,
    })
}

/// Ranking artifact: TSV of token, rate_hidden, rate_other, diff.
pub fn write_ranking_tsv<W: Write>(mut w: W, ranking: &RankingResult) -> Result<()> {
    writeln!(w, "token\trate_hidden\trate_other\tdiff")?;
    for score in &ranking.scores {
        if score.token.contains(['\t', '\n', '\r']) {
            return Err(Error::Integrity(format!(
                "token `{}` contains a TSV separator",
                score.token.escape_default()
            )));
        }
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            score.token, score.rate_hidden, score.rate_other, score.diff
        )?;
    }
    Ok(())
}

/// Read back the scores of a [`write_ranking_tsv`] artifact.
pub fn read_ranking_tsv<R: std::io::Read>(reader: R) -> Result<Vec<ExpressionScore>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let mut scores = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |idx: usize| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::row(row + 1, "short ranking row"))?
                .parse()
                .map_err(|_| Error::row(row + 1, format!("bad float in column {idx}")))
        };
        scores.push(ExpressionScore {
            token: record
                .get(0)
                .ok_or_else(|| Error::row(row + 1, "short ranking row"))?
                .to_string(),
            rate_hidden: parse(1)?,
            rate_other: parse(2)?,
            diff: parse(3)?,
        });
    }
    Ok(scores)
}

/// Intensity averages over the sentences containing one token. Means are
/// undefined (NaN) when `present` is false.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntensityRow {
    pub token: String,
    /// False when no corpus sentence contains the token.
    pub present: bool,
    /// Number of sentences the means are taken over.
    pub sentence_count: u64,
    pub writer_mean: f64,
    pub reader_means: [f64; READER_COUNT],
    pub writer_minus_avg_reader: f64,
}

impl IntensityRow {
    /// The difference implied by the row's own means.
    pub fn recomputed_diff(&self) -> f64 {
        self.writer_mean - self.reader_means.iter().sum::<f64>() / READER_COUNT as f64
    }

    /// Does the stated difference match the row's means within `tolerance`?
    pub fn is_consistent(&self, tolerance: f64) -> bool {
        if !self.present {
            return true; // nothing stated to contradict
        }
        (self.writer_minus_avg_reader - self.recomputed_diff()).abs() <= tolerance
    }
}

/// The per-token rows plus the whole-corpus baseline row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntensityTable {
    pub emotion: Emotion,
    pub rows: Vec<IntensityRow>,
    pub all_sentences: IntensityRow,
}

fn intensity_row_over(
    token: &str,
    posts: &[&AnnotatedPost],
    emotion: Emotion,
) -> IntensityRow {
    if posts.is_empty() {
        return IntensityRow {
            token: token.to_string(),
            present: false,
            sentence_count: 0,
            writer_mean: f64::NAN,
            reader_means: [f64::NAN; READER_COUNT],
            writer_minus_avg_reader: f64::NAN,
        };
    }
    // Integer sums first, one division at the end: exact and order-free.
    let mut writer_sum: u64 = 0;
    let mut reader_sums = [0u64; READER_COUNT];
    for post in posts {
        writer_sum += post.writer.get(emotion) as u64;
        for (r, sum) in reader_sums.iter_mut().enumerate() {
            *sum += post.readers[r].get(emotion) as u64;
        }
    }
    let n = posts.len() as f64;
    let writer_mean = writer_sum as f64 / n;
    let reader_means = reader_sums.map(|sum| sum as f64 / n);
    IntensityRow {
        token: token.to_string(),
        present: true,
        sentence_count: posts.len() as u64,
        writer_mean,
        reader_means,
        writer_minus_avg_reader: writer_mean
            - reader_means.iter().sum::<f64>() / READER_COUNT as f64,
    }
}

/// Per-token intensity means over the sentences containing each token, plus
/// the all-sentences baseline row. `token_lists` must align with `posts`
/// (the posts' texts segmented under the active config).
pub fn intensity_table(
    posts: &[AnnotatedPost],
    token_lists: &[Vec<String>],
    tokens: &[String],
    emotion: Emotion,
) -> Result<IntensityTable> {
    if posts.len() != token_lists.len() {
        return Err(Error::InvalidArgument(format!(
            "{} posts but {} token lists",
            posts.len(),
            token_lists.len()
        )));
    }
    if posts.is_empty() {
        return Err(Error::InvalidArgument(
            "intensity table over an empty corpus".into(),
        ));
    }
    let token_sets: Vec<BTreeSet<&str>> = token_lists
        .iter()
        .map(|tokens| tokens.iter().map(String::as_str).collect())
        .collect();
    let rows = tokens
        .iter()
        .map(|token| {
            let containing: Vec<&AnnotatedPost> = posts
                .iter()
                .zip(&token_sets)
                .filter(|(_, set)| set.contains(token.as_str()))
                .map(|(post, _)| post)
                .collect();
            intensity_row_over(token, &containing, emotion)
        })
        .collect();
    let everything: Vec<&AnnotatedPost> = posts.iter().collect();
    Ok(IntensityTable {
        emotion,
        rows,
        all_sentences: intensity_row_over("", &everything, emotion),
    })
}

fn format_mean(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        value.to_string()
    }
}

/// Intensity-table artifact, one row per token and a final corpus-scope row:
/// scope, token, sentences, writer mean, three reader means, difference.
pub fn write_intensity_tsv<W: Write>(mut w: W, table: &IntensityTable) -> Result<()> {
    writeln!(
        w,
        "scope\ttoken\tsentences\twriter_mean\treader1_mean\treader2_mean\treader3_mean\twriter_minus_avg_reader"
    )?;
    let write_row = |w: &mut W, scope: &str, row: &IntensityRow| -> Result<()> {
        if row.token.contains(['\t', '\n', '\r']) {
            return Err(Error::Integrity(format!(
                "token `{}` contains a TSV separator",
                row.token.escape_default()
            )));
        }
        writeln!(
            w,
            "{scope}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.token,
            row.sentence_count,
            format_mean(row.writer_mean),
            format_mean(row.reader_means[0]),
            format_mean(row.reader_means[1]),
            format_mean(row.reader_means[2]),
            format_mean(row.writer_minus_avg_reader),
        )?;
        Ok(())
    };
    for row in &table.rows {
        write_row(&mut w, "token", row)?;
    }
    write_row(&mut w, "corpus", &table.all_sentences)?;
    Ok(())
}
