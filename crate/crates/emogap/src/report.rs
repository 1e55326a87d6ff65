//! Report figures and text artifacts: co-occurrence heatmaps, the ROC plot,
//! ranking bar charts, and the true-positive example listing. Every figure
//! is composed purely from already-computed artifact values — no new
//! statistics are introduced at report time.

use std::collections::BTreeSet;
use std::io::Write;

use crate::corpus::{AnnotatedPost, PostId};
use crate::emotion::Emotion;
use crate::error::Result;
use crate::labels::CooccurrenceMatrix;
use crate::metrics::RocCurve;
use crate::mining::RankingResult;
use crate::svg::{Anchor, Svg};

/// White-to-red fill scaled by `count / max`; an all-zero matrix renders
/// all white.
fn heat_color(count: u64, max: u64) -> String {
    if max == 0 {
        return "rgb(255,255,255)".to_string();
    }
    let intensity = count as f64 / max as f64;
    let channel = (255.0 - intensity * 200.0).round() as u8;
    format!("rgb(255,{channel},{channel})")
}

/// 8x8 co-occurrence heatmap in canonical emotion order, counts printed in
/// the cells.
pub fn heatmap_svg(matrix: &CooccurrenceMatrix, title: &str) -> String {
    const CELL: f64 = 52.0;
    const LEFT: f64 = 92.0;
    const TOP: f64 = 80.0;
    let grid = CELL * 8.0;
    let mut svg = Svg::new(LEFT + grid + 20.0, TOP + grid + 20.0);
    svg.text(
        (LEFT + grid + 20.0) / 2.0,
        24.0,
        14.0,
        Anchor::Middle,
        title,
    );

    let max = matrix.max_count();
    for (i, row_emotion) in Emotion::ALL.iter().enumerate() {
        let y = TOP + i as f64 * CELL;
        svg.text(
            LEFT - 8.0,
            y + CELL / 2.0 + 4.0,
            11.0,
            Anchor::End,
            row_emotion.name(),
        );
        for (j, col_emotion) in Emotion::ALL.iter().enumerate() {
            let x = LEFT + j as f64 * CELL;
            if i == 0 {
                let cx = x + CELL / 2.0;
                let cy = TOP - 10.0;
                svg.text_with_attrs(
                    cx,
                    cy,
                    11.0,
                    Anchor::Start,
                    col_emotion.name(),
                    &format!(r#"transform="rotate(-45 {cx:.2} {cy:.2})""#),
                );
            }
            let count = matrix.get(*row_emotion, *col_emotion);
            svg.rect(x, y, CELL, CELL, &heat_color(count, max), Some("gray"));
            svg.text(
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0,
                10.0,
                Anchor::Middle,
                &count.to_string(),
            );
        }
    }
    svg.finish()
}

/// ROC line plot with the chance diagonal and the AUC printed.
pub fn roc_svg(curve: &RocCurve, title: &str) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 56.0;
    let mut svg = Svg::new(SIZE + 2.0 * MARGIN, SIZE + 2.0 * MARGIN);
    let to_x = |fpr: f64| MARGIN + fpr * SIZE;
    let to_y = |tpr: f64| MARGIN + SIZE - tpr * SIZE;

    svg.text(
        MARGIN + SIZE / 2.0,
        28.0,
        14.0,
        Anchor::Middle,
        title,
    );

    // Axes with 0.25-step ticks.
    svg.line(to_x(0.0), to_y(0.0), to_x(1.0), to_y(0.0), "black", false);
    svg.line(to_x(0.0), to_y(0.0), to_x(0.0), to_y(1.0), "black", false);
    for step in 0..=4 {
        let v = step as f64 / 4.0;
        let label = format!("{v:.2}");
        svg.line(to_x(v), to_y(0.0), to_x(v), to_y(0.0) + 5.0, "black", false);
        svg.text(to_x(v), to_y(0.0) + 20.0, 10.0, Anchor::Middle, &label);
        svg.line(to_x(0.0) - 5.0, to_y(v), to_x(0.0), to_y(v), "black", false);
        svg.text(to_x(0.0) - 9.0, to_y(v) + 4.0, 10.0, Anchor::End, &label);
    }
    svg.text(
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE + 40.0,
        12.0,
        Anchor::Middle,
        "false positive rate",
    );
    let label_x = 16.0;
    let label_y = MARGIN + SIZE / 2.0;
    svg.text_with_attrs(
        label_x,
        label_y,
        12.0,
        Anchor::Middle,
        "true positive rate",
        &format!(r#"transform="rotate(-90 {label_x:.2} {label_y:.2})""#),
    );

    // Chance diagonal, then the curve itself.
    svg.line(to_x(0.0), to_y(0.0), to_x(1.0), to_y(1.0), "gray", true);
    let points: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (to_x(p.fpr), to_y(p.tpr)))
        .collect();
    svg.polyline(&points, "crimson");
    svg.text(
        to_x(0.62),
        to_y(0.08),
        12.0,
        Anchor::Start,
        &format!("AUC = {:.3}", curve.auc),
    );
    svg.finish()
}

/// Horizontal bars of rate differences, largest first. A shortfall (fewer
/// qualifying tokens than requested) renders as an explicit notice; an
/// empty ranking still produces a valid document.
pub fn ranking_bars_svg(ranking: &RankingResult, title: &str) -> String {
    const BAR_H: f64 = 22.0;
    const GAP: f64 = 8.0;
    const LEFT: f64 = 140.0;
    const BAR_MAX: f64 = 360.0;
    const TOP: f64 = 64.0;
    let rows = ranking.scores.len();
    let height = TOP + rows as f64 * (BAR_H + GAP) + 30.0;
    let mut svg = Svg::new(LEFT + BAR_MAX + 90.0, height.max(120.0));

    svg.text(
        (LEFT + BAR_MAX + 90.0) / 2.0,
        24.0,
        14.0,
        Anchor::Middle,
        title,
    );
    if ranking.shortfall {
        svg.text(
            (LEFT + BAR_MAX + 90.0) / 2.0,
            44.0,
            11.0,
            Anchor::Middle,
            &format!(
                "only {} of {} requested tokens met the support floor ({})",
                ranking.qualifying_tokens, ranking.requested_k, ranking.min_hidden_count
            ),
        );
    }

    let scale = ranking
        .scores
        .iter()
        .map(|s| s.diff.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for (i, score) in ranking.scores.iter().enumerate() {
        let y = TOP + i as f64 * (BAR_H + GAP);
        svg.text(
            LEFT - 8.0,
            y + BAR_H / 2.0 + 4.0,
            11.0,
            Anchor::End,
            &score.token,
        );
        let width = (score.diff.max(0.0) / scale) * BAR_MAX;
        svg.rect(LEFT, y, width, BAR_H, "steelblue", None);
        svg.text(
            LEFT + width + 6.0,
            y + BAR_H / 2.0 + 4.0,
            10.0,
            Anchor::Start,
            &format!("{:+.3}", score.diff),
        );
    }
    svg.finish()
}

/// Example listing (analogous to a worked-example table): true-positive
/// sentences with the writer's anger intensity and all three readers'.
/// Posts appear in corpus order, at most `limit` of them.
pub fn write_true_positive_examples<W: Write>(
    mut w: W,
    posts: &[AnnotatedPost],
    true_positive_ids: &BTreeSet<PostId>,
    limit: usize,
) -> Result<()> {
    writeln!(
        w,
        "# Detector-confirmed hidden-anger sentences with their anger intensities."
    )?;
    writeln!(
        w,
        "# Writer annotated the intensity themselves; three readers rated the same text."
    )?;
    let mut shown = 0;
    for post in posts {
        if shown >= limit {
            break;
        }
        if !true_positive_ids.contains(&post.id) {
            continue;
        }
        shown += 1;
        writeln!(w)?;
        writeln!(w, "post {}", post.id)?;
        writeln!(w, "  text: {}", post.text.replace(['\n', '\r'], " "))?;
        writeln!(w, "  writer anger: {}", post.writer.get(Emotion::Anger))?;
        for (i, reader) in post.readers.iter().enumerate() {
            writeln!(w, "  reader{} anger: {}", i + 1, reader.get(Emotion::Anger))?;
        }
    }
    if shown == 0 {
        writeln!(w)?;
        writeln!(w, "(no true-positive sentences at this operating point)")?;
    }
    Ok(())
}
