//! Run configuration: one flat TOML document, overridable by `MF_*`
//! environment variables and then by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clicks::{ClickFormat, ClickGenParams, SampleMode};
use crate::contrastive::UncoveredPolicy;
use crate::error::{Error, Result};
use crate::providers::oracle::OracleBehavior;
use crate::providers::{Backend, Capability, ProviderHandle};

pub const ENV_PREFIX: &str = "MF_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub probability_backend: Backend,
    pub probability_endpoint: Option<String>,
    pub proposals_backend: Backend,
    pub proposals_endpoint: Option<String>,
    pub segment_backend: Backend,
    pub segment_endpoint: Option<String>,
    pub clicks_backend: Backend,
    pub clicks_endpoint: Option<String>,
    pub provider_timeout_s: f64,
    pub provider_concurrency: usize,
    #[serde(skip_serializing)]
    pub bearer_token: Option<String>,

    pub grid_n: u32,
    pub window: u32,
    pub stride: u32,
    pub tile_cap: u32,
    pub clip_long_side: u32,
    pub debias_scale: f32,
    pub uncovered: UncoveredPolicy,

    /// Click budget of the supervision generator.
    pub max_clicks: usize,
    pub tau: f64,
    pub mode: SampleMode,
    /// Click budget enforced on suggester output in strict mode.
    pub clicks_max: usize,
    pub strict_clicks: bool,
    pub click_format: ClickFormat,
    pub vote_ties_foreground: bool,

    pub oracle_behavior: OracleBehavior,
    pub oracle_noise: f32,
    pub oracle_exact_proposals: bool,
    pub oracle_distractors: usize,

    pub seed: u64,
    pub workers: usize,
    pub fail_fast: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            probability_backend: Backend::Oracle,
            probability_endpoint: None,
            proposals_backend: Backend::Oracle,
            proposals_endpoint: None,
            segment_backend: Backend::Oracle,
            segment_endpoint: None,
            clicks_backend: Backend::Oracle,
            clicks_endpoint: None,
            provider_timeout_s: 60.0,
            provider_concurrency: 4,
            bearer_token: None,
            grid_n: 29,
            window: 224,
            stride: 112,
            tile_cap: 1024,
            clip_long_side: 448,
            debias_scale: 1.0,
            uncovered: UncoveredPolicy::Background,
            max_clicks: 6,
            tau: 0.98,
            mode: SampleMode::Sample,
            clicks_max: 6,
            strict_clicks: true,
            click_format: ClickFormat::Auto,
            vote_ties_foreground: true,
            oracle_behavior: OracleBehavior::Ideal,
            oracle_noise: 0.0,
            oracle_exact_proposals: true,
            oracle_distractors: 0,
            seed: 0,
            workers: 4,
            fail_fast: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

const OPTIONAL_STRING_KEYS: [&str; 5] = [
    "probability_endpoint",
    "proposals_endpoint",
    "segment_endpoint",
    "clicks_endpoint",
    "bearer_token",
];

fn coerce(key: &str, raw: &str, like: Option<&toml::Value>) -> Result<toml::Value> {
    let bad = || Error::Config(format!("{ENV_PREFIX}{}={raw:?} has the wrong type", key.to_uppercase()));
    Ok(match like {
        Some(toml::Value::Integer(_)) => toml::Value::Integer(raw.trim().parse().map_err(|_| bad())?),
        Some(toml::Value::Float(_)) => toml::Value::Float(raw.trim().parse().map_err(|_| bad())?),
        Some(toml::Value::Boolean(_)) => toml::Value::Boolean(match raw.trim() {
            "1" | "true" | "yes" | "on" => true,
            "0" | "false" | "no" | "off" => false,
            _ => return Err(bad()),
        }),
        _ => toml::Value::String(raw.to_string()),
    })
}

impl RunConfig {
    /// Builds a config from optional TOML text plus environment overrides.
    pub fn from_sources(
        toml_text: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut table: toml::Table = match toml_text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let defaults = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        for (name, value) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_lowercase();
            if !defaults.contains_key(&key) && !OPTIONAL_STRING_KEYS.contains(&key.as_str()) {
                continue;
            }
            let v = coerce(&key, &value, defaults.get(&key))?;
            table.insert(key, v);
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (when given) and applies `MF_*` variables from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?),
            None => None,
        };
        Self::from_sources(text.as_deref(), std::env::vars())
    }

    /// Like [`RunConfig::load`], then applies `overrides` (field name, raw
    /// value) on top of the environment.
    pub fn load_with(path: Option<&Path>, overrides: Vec<(String, String)>) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?),
            None => None,
        };
        let flags = overrides.into_iter().map(|(k, v)| (format!("{ENV_PREFIX}{}", k.to_uppercase()), v));
        Self::from_sources(text.as_deref(), std::env::vars().chain(flags))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_n", self.grid_n as u64),
            ("stride", self.stride as u64),
            ("tile_cap", self.tile_cap as u64),
            ("max_clicks", self.max_clicks as u64),
            ("workers", self.workers as u64),
            ("provider_concurrency", self.provider_concurrency as u64),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.window > 0 && self.stride > self.window {
            return Err(Error::Config(format!("stride {} exceeds window {}", self.stride, self.window)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.oracle_noise) {
            return Err(Error::Config("oracle_noise outside [0, 1]".into()));
        }
        if !self.debias_scale.is_finite() {
            return Err(Error::Config("debias_scale must be finite".into()));
        }
        for cap in Capability::ALL {
            self.handle(cap).validate()?;
        }
        Ok(())
    }

    pub fn handle(&self, capability: Capability) -> ProviderHandle {
        let (backend, endpoint) = match capability {
            Capability::ProbabilityMap => (self.probability_backend, &self.probability_endpoint),
            Capability::MaskProposals => (self.proposals_backend, &self.proposals_endpoint),
            Capability::PromptableSegment => (self.segment_backend, &self.segment_endpoint),
            Capability::ClickSuggest => (self.clicks_backend, &self.clicks_endpoint),
        };
        ProviderHandle {
            capability,
            backend,
            endpoint: if backend == Backend::Http { endpoint.clone() } else { None },
            timeout_s: self.provider_timeout_s,
            concurrency_limit: self.provider_concurrency,
            bearer_token: self.bearer_token.clone(),
        }
    }

    pub fn click_params(&self) -> ClickGenParams {
        ClickGenParams {
            max_clicks: self.max_clicks,
            tau: self.tau,
            mode: self.mode,
        }
    }

    /// The config as echoed into reports (secrets omitted).
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        assert_eq!((c.grid_n, c.window, c.stride, c.tile_cap, c.clip_long_side), (29, 224, 112, 1024, 448));
        assert_eq!((c.max_clicks, c.tau), (6, 0.98));
        assert_eq!(RunConfig::from_sources(None, env(&[])).unwrap(), c);
    }

    #[test]
    fn file_then_env_overrides() {
        let text = "grid_n = 10\nmode = \"argmax\"\ntau = 0.9\n";
        let c = RunConfig::from_sources(
            Some(text),
            env(&[("MF_GRID_N", "20"), ("MF_STRICT_CLICKS", "false"), ("MF_TAU", "1"), ("OTHER", "x"), ("MF_UNKNOWN_THING", "1")]),
        )
        .unwrap();
        assert_eq!(c.grid_n, 20);
        assert_eq!(c.mode, SampleMode::Argmax);
        assert!(!c.strict_clicks);
        assert_eq!(c.tau, 1.0);
    }

    #[test]
    fn endpoints_and_validation() {
        let c = RunConfig::from_sources(
            Some("segment_backend = \"http\"\nsegment_endpoint = \"http://localhost:9\"\n"),
            env(&[]),
        )
        .unwrap();
        assert_eq!(c.handle(Capability::PromptableSegment).endpoint.as_deref(), Some("http://localhost:9"));
        assert!(RunConfig::from_sources(Some("segment_backend = \"http\"\n"), env(&[])).is_err());
        assert!(RunConfig::from_sources(Some("grid_n = 0\n"), env(&[])).is_err());
        assert!(RunConfig::from_sources(Some("bogus = 1\n"), env(&[])).is_err());
        assert!(RunConfig::from_sources(None, env(&[("MF_GRID_N", "many")])).is_err());
    }

    #[test]
    fn echo_round_trips_and_hides_token() {
        let mut c = RunConfig { bearer_token: Some("secret".into()), ..RunConfig::default() };
        let echo = c.echo();
        assert!(echo.get("bearer_token").is_none());
        let back: RunConfig = serde_json::from_value(echo).unwrap();
        c.bearer_token = None;
        assert_eq!(back, c);
    }
}
