//! Streetscape contour analysis.
//!
//! Segments street-level photographs into building facades (the primary
//! contour) and billboards (the secondary contour), measures how much of each
//! image they cover, and evaluates segmentation quality with IoU.
//!
//! Everything operates on [`LabelMask`], a grid of 8-bit class ids in the
//! canonical space of [`CanonicalClass`].

pub mod annotation;
pub mod augment;
pub mod contour;
pub mod dataset;
pub mod inference;
pub mod mask;
pub mod maskio;
pub mod metrics;
pub mod rng;

pub use annotation::{parse_annotation, rasterize, LabelTable, PolygonAnnotation};
pub use augment::{apply_pipeline, AugmentSpec, Sample};
pub use contour::{aggregate, analyze, analyze_with, render_overlay, ContourReport, DenominatorMode, OverlayStyle};
pub use dataset::{load_manifest, split, DatasetManifest, SplitAssignment, SplitRatios};
pub use inference::{predict_composite, predict_primary, predict_secondary, ModelConfig, SegmentationBackend};
pub use mask::{merge, CanonicalClass, ClassMap, LabelMask, IGNORE};
pub use maskio::{load_mask_png, save_mask_png};
pub use metrics::ConfusionMatrix;
