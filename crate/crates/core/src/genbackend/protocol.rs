use serde::{Deserialize, Serialize};

/// Captioner prompt sent alongside every image.
pub const CAPTION_PROMPT: &str = "Question: What are shown in the photo? Answer:";
pub const DEFAULT_RESOLUTION: u32 = 768;
pub const TEXT2MASK_STEPS: u32 = 200;
pub const MASK2IMG_STEPS: u32 = 40;

fn default_prompt() -> String {
    CAPTION_PROMPT.to_string()
}

fn default_resolution() -> u32 {
    DEFAULT_RESOLUTION
}

fn default_text2mask_steps() -> u32 {
    TEXT2MASK_STEPS
}

fn default_mask2img_steps() -> u32 {
    MASK2IMG_STEPS
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

mod b64_vec {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(items: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(items.len()))?;
        for item in items {
            seq.serialize_element(&STANDARD.encode(item))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRequest {
    /// PNG bytes.
    #[serde(with = "b64")]
    pub image: Vec<u8>,
    #[serde(default = "default_prompt")]
    pub prompt_template: String,
}

impl CaptionRequest {
    pub fn new(image: Vec<u8>) -> Self {
        CaptionRequest { image, prompt_template: default_prompt() }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Text2MaskRequest {
    pub prompt: String,
    pub n: u32,
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_text2mask_steps")]
    pub steps: u32,
    /// Opaque sampler settings passed through to real backends.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl Text2MaskRequest {
    pub fn new(prompt: impl Into<String>, n: u32, seed: u64) -> Self {
        Text2MaskRequest {
            prompt: prompt.into(),
            n,
            seed,
            resolution: DEFAULT_RESOLUTION,
            steps: TEXT2MASK_STEPS,
            extra: serde_json::Value::Null,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Text2MaskResponse {
    /// One PNG color map per requested sample.
    #[serde(with = "b64_vec")]
    pub color_maps: Vec<Vec<u8>>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mask2ImgRequest {
    pub prompt: String,
    /// PNG conditioning color map.
    #[serde(with = "b64")]
    pub color_map: Vec<u8>,
    pub n: u32,
    pub seed: u64,
    #[serde(default = "default_mask2img_steps")]
    pub steps: u32,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl Mask2ImgRequest {
    pub fn new(prompt: impl Into<String>, color_map: Vec<u8>, n: u32, seed: u64) -> Self {
        Mask2ImgRequest {
            prompt: prompt.into(),
            color_map,
            n,
            seed,
            steps: MASK2IMG_STEPS,
            extra: serde_json::Value::Null,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Mask2ImgResponse {
    #[serde(with = "b64_vec")]
    pub images: Vec<Vec<u8>>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub version: String,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

/// Body of every non-2xx reply.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}
