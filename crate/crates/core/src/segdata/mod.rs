//! Segmentation map data model, dataset ingestion and manifest persistence.

mod ade20k;
mod coco;
pub mod manifest;
mod maps;
mod png;
pub mod store;

pub use ade20k::{load_ade20k_annotation, load_semantic_png, save_semantic_png, ADE20K_CATEGORIES};
pub use coco::{load_coco_panoptic, save_coco_panoptic, MAX_SEGMENT_ID};
pub use manifest::{
    GeneratorMeta, Manifest, ManifestFilter, ManifestHeader, ManifestWriter, Provenance,
    SampleRecord, MANIFEST_SCHEMA_VERSION,
};
pub use maps::{panoptic_to_semantic, Label, PanopticMap, SegmentId, SegmentInfo, SemanticMap};
pub use png::{decode_rgb_png, encode_rgb_png, image_to_png};
pub use store::PayloadStore;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("format error: {0}")]
    Format(String),
    #[error("label {value} out of range (limit {limit})")]
    LabelOutOfRange { value: u32, limit: u32 },
    #[error("pixel references segment {0} which is missing from segments_info")]
    UnknownSegment(u32),
    #[error("segment id {0} does not fit the 24-bit panoptic encoding")]
    IdOverflow(u32),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
