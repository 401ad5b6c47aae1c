#![no_main]

use libfuzzer_sys::fuzz_target;
use segpipe_core::genbackend::{
    CaptionRequest, CaptionResponse, ErrorEnvelope, Mask2ImgRequest, Mask2ImgResponse, Text2MaskRequest,
    Text2MaskResponse,
};

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<CaptionRequest>(data);
    let _ = serde_json::from_slice::<CaptionResponse>(data);
    let _ = serde_json::from_slice::<Text2MaskRequest>(data);
    let _ = serde_json::from_slice::<Text2MaskResponse>(data);
    let _ = serde_json::from_slice::<Mask2ImgRequest>(data);
    let _ = serde_json::from_slice::<Mask2ImgResponse>(data);
    let _ = serde_json::from_slice::<ErrorEnvelope>(data);
});
