//! Minimal JSON-over-HTTP plumbing shared by the remote clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable consulted for a bearer token when none is configured.
pub const DEFAULT_TOKEN_ENV: &str = "EMOKD_API_TOKEN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_token_env() -> String {
    DEFAULT_TOKEN_ENV.to_string()
}

fn default_timeout() -> u64 {
    60
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token_env: default_token_env(),
            timeout_secs: default_timeout(),
        }
    }
}

pub(crate) struct JsonEndpoint {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

impl JsonEndpoint {
    pub fn new(config: &EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let token = std::env::var(&config.token_env)
            .ok()
            .filter(|t| !t.is_empty());
        Self {
            agent,
            url: config.url.clone(),
            token,
        }
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Error::Client(format!("{}: {e}", self.url)))?;
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| Error::Client(format!("{}: bad response body: {e}", self.url)))
    }
}

pub(crate) fn encode_image(path: &str) -> Result<String> {
    use base64::Engine;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}
