//! JSON-over-HTTP client for inference services.
//!
//! Every call is a single POST. Images and masks travel as base64 PNG, float
//! maps as base64 little-endian `f32` planes. Transport failures and 5xx
//! responses are retried with exponential backoff; 4xx responses never are.
//! The serialized body and its `Idempotency-Key` are fixed before the first
//! attempt and reused verbatim on every retry.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    Backend, Capability, ClickSuggester, ProbabilityProvider, ProposalProvider, ProviderHandle, Region,
    Segmenter,
};
use crate::clicks::ClickSet;
use crate::error::{Error, ProviderErrorKind, Result};
use crate::io::{decode_mask_png, encode_png_rgb, f32s_from_le_bytes};
use crate::raster::{BinaryMask, ProbabilityMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMapRequest {
    pub image_png_b64: String,
    pub classes: Vec<String>,
    pub long_side: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMapResponse {
    pub width: u32,
    pub height: u32,
    pub maps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskProposalsRequest {
    pub image_png_b64: String,
    pub grid_n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskProposalsResponse {
    pub masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_png_b64: String,
    pub positive: Vec<[u32; 2]>,
    pub negative: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask_png_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClicksRequest {
    pub image_png_b64: String,
    pub question: String,
    pub max_clicks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClicksResponse {
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_delay: Duration::from_millis(200),
        }
    }
}

struct Gate {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

/// HTTP backend for one capability.
pub struct HttpProvider {
    handle: ProviderHandle,
    base: String,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
    gate: Gate,
    reported_model: Mutex<Option<String>>,
}

impl HttpProvider {
    pub fn new(handle: ProviderHandle) -> Result<Self> {
        Self::with_retry(handle, RetryPolicy::default())
    }

    pub fn with_retry(handle: ProviderHandle, retry: RetryPolicy) -> Result<Self> {
        handle.validate()?;
        if handle.backend != Backend::Http {
            return Err(Error::Config(format!("{} handle is not an http backend", handle.capability)));
        }
        let base = handle.endpoint.clone().expect("validated").trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(handle.timeout_s))
            .build()
            .map_err(|e| Error::Provider {
                capability: handle.capability,
                endpoint: base.clone(),
                kind: ProviderErrorKind::Transport(e.to_string()),
            })?;
        let gate = Gate::new(handle.concurrency_limit);
        Ok(Self {
            handle,
            base,
            client,
            retry,
            gate,
            reported_model: Mutex::new(None),
        })
    }

    pub fn handle(&self) -> &ProviderHandle {
        &self.handle
    }

    /// Model name from the most recent response that reported one.
    pub fn reported_model(&self) -> Option<String> {
        self.reported_model.lock().expect("poisoned").clone()
    }

    fn url(&self, capability: Capability) -> String {
        if self.base.ends_with(capability.path()) {
            self.base.clone()
        } else {
            format!("{}{}", self.base, capability.path())
        }
    }

    fn fail(&self, capability: Capability, kind: ProviderErrorKind) -> Error {
        Error::Provider {
            capability,
            endpoint: self.url(capability),
            kind,
        }
    }

    /// One logical call: serialize once, then POST with retries.
    pub fn call<Req: Serialize, Resp: DeserializeOwned>(&self, capability: Capability, request: &Req) -> Result<Resp> {
        let body = serde_json::to_vec(request)?;
        let key = uuid::Uuid::new_v4().to_string();
        let url = self.url(capability);
        let _permit = self.gate.acquire();

        let mut attempt = 0;
        loop {
            let mut req = self
                .client
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .header("Idempotency-Key", &key)
                .body(body.clone());
            if let Some(token) = &self.handle.bearer_token {
                req = req.bearer_auth(token);
            }
            let kind = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let bytes = resp
                        .bytes()
                        .map_err(|e| self.fail(capability, ProviderErrorKind::Transport(e.to_string())))?;
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| self.fail(capability, ProviderErrorKind::Schema(e.to_string())));
                }
                Ok(resp) if resp.status().is_client_error() => {
                    return Err(self.fail(capability, ProviderErrorKind::Status(resp.status().as_u16())));
                }
                Ok(resp) => ProviderErrorKind::Status(resp.status().as_u16()),
                Err(e) if e.is_timeout() => ProviderErrorKind::Timeout,
                Err(e) => ProviderErrorKind::Transport(e.to_string()),
            };
            if attempt >= self.retry.retries {
                return Err(self.fail(capability, kind));
            }
            log::info!("{capability} call to {url} failed ({kind}), retrying");
            std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt));
            attempt += 1;
        }
    }

    fn note_model(&self, model: Option<String>) {
        if model.is_some() {
            *self.reported_model.lock().expect("poisoned") = model;
        }
    }

    fn schema(&self, capability: Capability, msg: impl Into<String>) -> Error {
        self.fail(capability, ProviderErrorKind::Schema(msg.into()))
    }
}

fn image_b64(image: &RgbImage) -> Result<String> {
    Ok(B64.encode(encode_png_rgb(image)?))
}

impl ProbabilityProvider for HttpProvider {
    fn probability_maps(
        &self,
        image: &RgbImage,
        classes: &[String],
        long_side: u32,
        _region: Option<&Region>,
    ) -> Result<Vec<ProbabilityMap>> {
        let cap = Capability::ProbabilityMap;
        let req = ProbabilityMapRequest {
            image_png_b64: image_b64(image)?,
            classes: classes.to_vec(),
            long_side,
        };
        let resp: ProbabilityMapResponse = self.call(cap, &req)?;
        self.note_model(resp.model);
        if resp.maps.len() != classes.len() {
            return Err(self.schema(cap, format!("{} maps for {} classes", resp.maps.len(), classes.len())));
        }
        resp.maps
            .iter()
            .map(|b| {
                let bytes = B64.decode(b).map_err(|e| self.schema(cap, e.to_string()))?;
                let values = f32s_from_le_bytes(&bytes).map_err(|e| self.schema(cap, e.to_string()))?;
                ProbabilityMap::new(resp.width, resp.height, values).map_err(|e| self.schema(cap, e.to_string()))
            })
            .collect()
    }
}

impl HttpProvider {
    fn decode_mask(&self, cap: Capability, b64: &str) -> Result<BinaryMask> {
        let bytes = B64.decode(b64).map_err(|e| self.schema(cap, e.to_string()))?;
        decode_mask_png(&bytes).map_err(|e| self.schema(cap, e.to_string()))
    }
}

impl ProposalProvider for HttpProvider {
    fn proposals(&self, image: &RgbImage, grid_n: u32, _region: Option<&Region>) -> Result<Vec<BinaryMask>> {
        let cap = Capability::MaskProposals;
        let req = MaskProposalsRequest {
            image_png_b64: image_b64(image)?,
            grid_n,
        };
        let resp: MaskProposalsResponse = self.call(cap, &req)?;
        self.note_model(resp.model);
        resp.masks
            .iter()
            .map(|m| {
                let mask = self.decode_mask(cap, m)?;
                if mask.dims() != image.dimensions() {
                    return Err(self.schema(cap, format!("mask {:?} for image {:?}", mask.dims(), image.dimensions())));
                }
                Ok(mask)
            })
            .collect()
    }
}

impl Segmenter for HttpProvider {
    fn segment(&self, image: &RgbImage, clicks: &ClickSet) -> Result<BinaryMask> {
        let cap = Capability::PromptableSegment;
        let req = SegmentRequest {
            image_png_b64: image_b64(image)?,
            positive: clicks.positive_coords(),
            negative: clicks.negative_coords(),
        };
        let resp: SegmentResponse = self.call(cap, &req)?;
        self.note_model(resp.model);
        let mask = self.decode_mask(cap, &resp.mask_png_b64)?;
        if mask.dims() != image.dimensions() {
            return Err(self.schema(cap, format!("mask {:?} for image {:?}", mask.dims(), image.dimensions())));
        }
        Ok(mask)
    }
}

impl ClickSuggester for HttpProvider {
    fn suggest(&self, image: &RgbImage, question: &str, max_clicks: usize) -> Result<String> {
        let req = ClicksRequest {
            image_png_b64: image_b64(image)?,
            question: question.to_string(),
            max_clicks,
        };
        let resp: ClicksResponse = self.call(Capability::ClickSuggest, &req)?;
        self.note_model(resp.model);
        Ok(resp.raw_text)
    }
}
