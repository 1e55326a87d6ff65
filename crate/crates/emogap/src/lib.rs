//! Emotion-gap analysis for dual-annotated SNS corpora: derive hidden-emotion
//! labels from writer-reader intensity differences, train and evaluate a
//! detector over them, and mine expressions characteristic of the hidden class.

pub mod corpus;
pub mod detector;
pub mod emotion;
pub mod error;
pub mod keyed;
pub mod labels;
pub mod metrics;
pub mod mining;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod segment;
pub mod svg;
pub mod synth;

pub use corpus::{AnnotatedPost, ColumnMapping, DatasetSplit, PostId};
pub use emotion::{Emotion, EmotionVector};
pub use error::{Error, Result};
pub use labels::{HiddenLabel, Thirds};
