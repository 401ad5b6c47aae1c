//! Category palette and the mask <-> color map codecs.
//!
//! Encoding paints each category with its palette color (plus an edge color
//! around panoptic segments). Decoding assigns every pixel the category whose
//! palette color is nearest in RGB space, which is what lets generated color
//! maps with slight color drift be turned back into exact labels.

mod codec;
mod colormap;
mod palette;

pub use codec::{decode_semantic, encode_panoptic, encode_semantic, to_binary_masks, BinaryMask, DEFAULT_EDGE_WIDTH};
pub use colormap::ColorMap;
pub use palette::{build_palette, Palette, Rgb, DEFAULT_MIN_SEPARATION, MAX_CATEGORIES, PALETTE_FORMAT_VERSION};

use thiserror::Error;

use crate::segdata::DataError;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("cannot place {requested} categories at separation {min_separation}: only {placed} fit")]
    Capacity { requested: usize, placed: usize, min_separation: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {value} out of range (palette has {limit} categories)")]
    LabelOutOfRange { value: u32, limit: u32 },
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;
