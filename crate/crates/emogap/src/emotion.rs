//! The eight-emotion label schema and per-annotator intensity vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One of the eight primary emotions used by the corpus annotation schema.
///
/// The declaration order is the fixed canonical order used everywhere:
/// column layouts, matrix axes, and serialized records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Joy,
    Sadness,
    Anticipation,
    Surprise,
    Anger,
    Fear,
    Disgust,
    Trust,
}

impl Emotion {
    /// All emotions in canonical order.
    pub const ALL: [Emotion; 8] = [
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Anticipation,
        Emotion::Surprise,
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Trust,
    ];

    pub const COUNT: usize = 8;

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Emotion> {
        Emotion::ALL.get(index).copied()
    }

    /// Lowercase name, used in keyed records and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Anticipation => "anticipation",
            Emotion::Surprise => "surprise",
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Trust => "trust",
        }
    }

    /// Capitalized name, used in the default dataset column layout.
    pub fn column_name(self) -> &'static str {
        match self {
            Emotion::Joy => "Joy",
            Emotion::Sadness => "Sadness",
            Emotion::Anticipation => "Anticipation",
            Emotion::Surprise => "Surprise",
            Emotion::Anger => "Anger",
            Emotion::Fear => "Fear",
            Emotion::Disgust => "Disgust",
            Emotion::Trust => "Trust",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown emotion `{s}`")))
    }
}

/// Intensity range of a single annotation.
pub const MIN_INTENSITY: i8 = 0;
pub const MAX_INTENSITY: i8 = 3;

/// Ordinal intensities (0-3) for all eight emotions, from one annotator.
///
/// Stored values are raw and may be out of range for hand-constructed data;
/// range checks live in [`EmotionVector::violations`] and at parse time, so
/// invalid annotations can be reported as data rather than rejected at
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionVector {
    intensities: [i8; Emotion::COUNT],
}

impl EmotionVector {
    pub fn new(intensities: [i8; Emotion::COUNT]) -> Self {
        EmotionVector { intensities }
    }

    /// An all-zero vector.
    pub fn zero() -> Self {
        EmotionVector {
            intensities: [0; Emotion::COUNT],
        }
    }

    pub fn get(&self, emotion: Emotion) -> i8 {
        self.intensities[emotion.index()]
    }

    pub fn set(&mut self, emotion: Emotion, intensity: i8) {
        self.intensities[emotion.index()] = intensity;
    }

    /// Intensities in canonical emotion order.
    pub fn as_array(&self) -> [i8; Emotion::COUNT] {
        self.intensities
    }

    pub fn iter(&self) -> impl Iterator<Item = (Emotion, i8)> + '_ {
        Emotion::ALL.into_iter().map(|e| (e, self.get(e)))
    }

    /// Range violations, one message per out-of-range emotion.
    /// `field_prefix` names the annotator, e.g. `writer` or `reader2`.
    pub fn violations(&self, field_prefix: &str) -> Vec<crate::corpus::Violation> {
        self.iter()
            .filter(|(_, v)| !(MIN_INTENSITY..=MAX_INTENSITY).contains(v))
            .map(|(e, v)| crate::corpus::Violation {
                field: format!("{field_prefix}.{e}"),
                rule: format!("intensity {v} outside {MIN_INTENSITY}..={MAX_INTENSITY}"),
            })
            .collect()
    }
}
