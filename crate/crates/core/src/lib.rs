//! Evaluation toolkit for radar scene captioning.
//!
//! The crate covers the radar input pipeline (RT4D tensors, elevation
//! projection, range compensation, Doppler aggregation), ground-truth caption
//! generation from box labels, tolerant parsing of model captions, the
//! caption-as-detection metrics with weather stratification, and diagnostics
//! for projector token norms and sensor-blind captioning.

pub mod caption;
pub mod config;
pub mod container;
pub mod diagnostics;
pub mod geometry;
pub mod manifest;
pub mod metrics;
pub mod parse;
pub mod radar;
pub mod report;
pub mod vocab;

pub use caption::{CaptionFormat, CaptionRecord, GtCaption};
pub use geometry::{BearingSector, Box3D, FovLimits, SceneObject, SectorTable};
pub use manifest::{FrameKey, Manifest, SequenceMeta, Split, TimeOfDay, Weather};
pub use metrics::{AggregateMetrics, FrameEval};
pub use parse::{CaptionParser, ParseStatus, ParsedPrediction, PredObject};
pub use radar::{InputTensor, InputVariant, RaCube, RadarGridConfig, Tesseract};
pub use vocab::ClassVocabulary;
