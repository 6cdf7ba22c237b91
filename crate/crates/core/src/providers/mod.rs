//! Boundary to the external foundation models.
//!
//! Four capabilities are consumed: per-class probability maps, category-
//! agnostic mask proposals, click-promptable segmentation and click
//! suggestion from a question. Each has a trait; the [`oracle`] backend
//! answers from ground truth for tests and desk-scale runs, the [`http`]
//! backend talks to an inference service.

pub mod http;
pub mod mock;
pub mod oracle;

use std::fmt;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::clicks::ClickSet;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbabilityMap, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    ProbabilityMap,
    MaskProposals,
    PromptableSegment,
    ClickSuggest,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::ProbabilityMap,
        Capability::MaskProposals,
        Capability::PromptableSegment,
        Capability::ClickSuggest,
    ];

    pub fn path(self) -> &'static str {
        match self {
            Capability::ProbabilityMap => "/v1/probability-map",
            Capability::MaskProposals => "/v1/mask-proposals",
            Capability::PromptableSegment => "/v1/segment",
            Capability::ClickSuggest => "/v1/clicks",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Capability::ProbabilityMap => "probability-map",
            Capability::MaskProposals => "mask-proposals",
            Capability::PromptableSegment => "promptable-segment",
            Capability::ClickSuggest => "click-suggest",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Oracle,
    Http,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "http" => Ok(Self::Http),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Where and how to reach one capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderHandle {
    pub capability: Capability,
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub timeout_s: f64,
    pub concurrency_limit: usize,
    #[serde(default, skip_serializing)]
    pub bearer_token: Option<String>,
}

impl ProviderHandle {
    pub fn oracle(capability: Capability) -> Self {
        Self {
            capability,
            backend: Backend::Oracle,
            endpoint: None,
            timeout_s: 30.0,
            concurrency_limit: 4,
            bearer_token: None,
        }
    }

    pub fn http(capability: Capability, endpoint: impl Into<String>) -> Self {
        Self {
            capability,
            backend: Backend::Http,
            endpoint: Some(endpoint.into()),
            timeout_s: 30.0,
            concurrency_limit: 4,
            bearer_token: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.backend, &self.endpoint) {
            (Backend::Http, None) => {
                return Err(Error::Config(format!("{} http backend needs an endpoint", self.capability)))
            }
            (Backend::Oracle, Some(_)) => {
                return Err(Error::Config(format!("{} oracle backend takes no endpoint", self.capability)))
            }
            _ => {}
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::Config(format!("{} timeout must be positive", self.capability)));
        }
        if self.concurrency_limit == 0 {
            return Err(Error::Config(format!("{} concurrency limit must be positive", self.capability)));
        }
        Ok(())
    }
}

/// Placement of an image crop inside the frame it was cut from.
///
/// Backends that only see pixels (HTTP) ignore it; the oracle uses it to find
/// the matching ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub rect: Rect,
    pub frame_w: u32,
    pub frame_h: u32,
}

pub trait ProbabilityProvider: Send + Sync {
    /// One map per class. `long_side == 0` asks the provider to keep the
    /// input resolution. Maps may come back at the provider's working
    /// resolution; callers resample.
    fn probability_maps(
        &self,
        image: &RgbImage,
        classes: &[String],
        long_side: u32,
        region: Option<&Region>,
    ) -> Result<Vec<ProbabilityMap>>;
}

pub trait ProposalProvider: Send + Sync {
    /// Category-agnostic masks at the input image's size.
    fn proposals(&self, image: &RgbImage, grid_n: u32, region: Option<&Region>) -> Result<Vec<BinaryMask>>;
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &RgbImage, clicks: &ClickSet) -> Result<BinaryMask>;
}

pub trait ClickSuggester: Send + Sync {
    /// Raw model output; parsing is the caller's job.
    fn suggest(&self, image: &RgbImage, question: &str, max_clicks: usize) -> Result<String>;
}
