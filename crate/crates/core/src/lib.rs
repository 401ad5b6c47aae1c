//! Segmentation data synthesis toolkit.
//!
//! The pipeline runs in the reverse of the usual labeler-driven order: a text
//! prompt produces a color-coded mask, the color map is projected back to
//! category labels, and an image is generated conditioned on that mask.
//!
//! - [`colorcodec`]: category palette plus the mask <-> color map codecs.
//! - [`segdata`]: semantic/panoptic map types, ADE20K and COCO panoptic
//!   ingestion, manifests and the content-addressed payload store.
//! - [`genbackend`]: generator wire protocol, HTTP client and deterministic
//!   mock backends (in-process and served).
//! - [`synthpipe`]: MaskSyn / ImgSyn orchestration and resumable batches.
//! - [`trainfeed`]: synthetic replacement sampler and pre-train/fine-tune
//!   manifest emission.
//! - [`segmetrics`]: mIoU and panoptic quality.

pub mod colorcodec;
pub mod genbackend;
pub mod seeds;
pub mod segdata;
pub mod segmetrics;
pub mod synthpipe;
pub mod trainfeed;

pub use colorcodec::{ColorMap, Palette, Rgb};
pub use segdata::{Label, PanopticMap, SampleRecord, SegmentId, SegmentInfo, SemanticMap};
