//! Detector evaluation: ROC curve with trapezoidal AUC, an independent
//! rank-statistic AUC, and confusion counts at a stated threshold.
//!
//! Both AUC computations reduce to an exact integer numerator over the same
//! denominator `2 * positives * negatives`, so they agree bitwise — that
//! equality is the module's core self-check. Ties earn half credit in the
//! rank statistic and become shared threshold groups in the curve.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point of the ROC curve. The first point carries threshold
/// `+inf` (nothing predicted positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Points in descending-threshold order, from (0,0) to (1,1).
    pub points: Vec<RocPoint>,
    /// Trapezoidal area under the points.
    pub auc: f64,
    pub positives: u64,
    pub negatives: u64,
}

/// Confusion counts under the `score >= threshold` decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub threshold: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl ConfusionCounts {
    pub fn positives(&self) -> u64 {
        self.true_positives + self.false_negatives
    }

    pub fn negatives(&self) -> u64 {
        self.false_positives + self.true_negatives
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positives + self.true_negatives) as f64 / self.total() as f64
    }

    pub fn recall(&self) -> f64 {
        self.true_positives as f64 / self.positives() as f64
    }

    pub fn precision(&self) -> Option<f64> {
        let predicted = self.true_positives + self.false_positives;
        (predicted > 0).then(|| self.true_positives as f64 / predicted as f64)
    }

    /// Key/value pairs for the keyed summary artifact.
    pub fn summary_pairs(&self, prefix: &str) -> Vec<(String, String)> {
        vec![
            (format!("{prefix}_threshold"), self.threshold.to_string()),
            (format!("{prefix}_tp"), self.true_positives.to_string()),
            (format!("{prefix}_fp"), self.false_positives.to_string()),
            (format!("{prefix}_tn"), self.true_negatives.to_string()),
            (format!("{prefix}_fn"), self.false_negatives.to_string()),
        ]
    }
}

/// Check score/label alignment and return (positives, negatives).
fn validate_binary_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("score {bad} is not finite")));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::MetricUndefined(format!(
            "need both classes, got {positives} positives and {negatives} negatives"
        )));
    }
    Ok((positives, negatives))
}

/// ROC curve over the `score >= threshold` rule: one point per distinct
/// score, plus the (0,0) start at threshold `+inf`. AUC is the trapezoid
/// area, computed as an exact integer numerator over `2 * P * N`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (positives, negatives) = validate_binary_inputs(scores, labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores validated finite")
    });

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp: u64 = 0;
    let mut fp: u64 = 0;
    let mut numerator: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let mut group_tp: u64 = 0;
        let mut group_fp: u64 = 0;
        let mut j = i;
        while j < order.len() && scores[order[j]] == threshold {
            if labels[order[j]] {
                group_tp += 1;
            } else {
                group_fp += 1;
            }
            j += 1;
        }
        // Trapezoid segment: delta_fp * (tp_before + tp_after).
        numerator += group_fp as u128 * (2 * tp + group_tp) as u128;
        tp += group_tp;
        fp += group_fp;
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
        i = j;
    }

    let auc = numerator as f64 / (2 * positives as u128 * negatives as u128) as f64;
    Ok(RocCurve {
        points,
        auc,
        positives,
        negatives,
    })
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counted half. Computed from rank sums as an exact
/// integer numerator over `2 * P * N` — an independent oracle for
/// [`roc_curve`]'s trapezoid area.
pub fn auc_rank(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (positives, negatives) = validate_binary_inputs(scores, labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("scores validated finite")
    });

    // Twice the positive rank sum stays integral under tied (averaged)
    // ranks: a tie group spanning 1-based ranks lo..=hi contributes
    // (lo + hi) per positive member.
    let mut twice_positive_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        let mut j = i;
        let mut group_positives: u128 = 0;
        while j < order.len() && scores[order[j]] == value {
            if labels[order[j]] {
                group_positives += 1;
            }
            j += 1;
        }
        let lo = (i + 1) as u128;
        let hi = j as u128;
        twice_positive_rank_sum += group_positives * (lo + hi);
        i = j;
    }

    let p = positives as u128;
    let n = negatives as u128;
    let numerator = twice_positive_rank_sum - p * (p + 1);
    Ok(numerator as f64 / (2 * p * n) as f64)
}

/// Confusion counts of the `score >= threshold` rule. Total over all
/// aligned inputs; no class requirement.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut counts = ConfusionCounts {
        threshold,
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
    };
    for (&score, &label) in scores.iter().zip(labels) {
        let predicted = score >= threshold;
        match (predicted, label) {
            (true, true) => counts.true_positives += 1,
            (true, false) => counts.false_positives += 1,
            (false, false) => counts.true_negatives += 1,
            (false, true) => counts.false_negatives += 1,
        }
    }
    Ok(counts)
}

/// The curve point maximizing Youden's J = tpr - fpr; the highest-threshold
/// point wins ties, making the choice deterministic.
pub fn youden_optimal(curve: &RocCurve) -> RocPoint {
    let mut best = curve.points[0];
    let mut best_j = best.tpr - best.fpr;
    for point in &curve.points[1..] {
        let j = point.tpr - point.fpr;
        if j > best_j {
            best = *point;
            best_j = j;
        }
    }
    best
}

/// Emit the curve as 3-column TSV. Ratios use shortest-round-trip float
/// formatting, so reading the file back reproduces the exact values.
pub fn write_roc_tsv<W: Write>(mut w: W, curve: &RocCurve) -> Result<()> {
    writeln!(w, "threshold\tfpr\ttpr")?;
    for point in &curve.points {
        writeln!(w, "{}\t{}\t{}", point.threshold, point.fpr, point.tpr)?;
    }
    Ok(())
}

/// Read back a [`write_roc_tsv`] artifact; the AUC is recomputed from the
/// points by the trapezoid rule.
pub fn read_roc_tsv<R: std::io::Read>(reader: R) -> Result<RocCurve> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let mut points = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |idx: usize| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::row(row + 1, "short ROC row"))?
                .parse()
                .map_err(|_| Error::row(row + 1, format!("bad float in column {idx}")))
        };
        points.push(RocPoint {
            threshold: parse(0)?,
            fpr: parse(1)?,
            tpr: parse(2)?,
        });
    }
    if points.len() < 2 {
        return Err(Error::Integrity("ROC artifact has fewer than 2 points".into()));
    }
    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[0].tpr + pair[1].tpr) / 2.0;
    }
    Ok(RocCurve {
        points,
        auc,
        positives: 0,
        negatives: 0,
    })
}
