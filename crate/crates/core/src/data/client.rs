//! Text-generation clients used to produce conversation and reasoning responses.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::instructions::InstructionKind;
use crate::error::{Error, Result};
use crate::remote::{encode_image, EndpointConfig, JsonEndpoint};

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRequest<'a> {
    pub sample_id: &'a str,
    pub image_path: &'a str,
    pub kind: InstructionKind,
    /// 0-based index when several responses of one kind are requested per image.
    pub ordinal: usize,
    pub prompt: String,
}

pub trait TextGenerationClient: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub sample_id: String,
    pub kind: InstructionKind,
    pub text: String,
}

/// Serves pre-recorded responses keyed by `(sample_id, kind)`; the n-th
/// record for a key answers ordinal n.
#[derive(Clone, Debug, Default)]
pub struct ReplayTextClient {
    responses: HashMap<(String, InstructionKind), Vec<String>>,
}

impl ReplayTextClient {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        let mut responses: HashMap<_, Vec<String>> = HashMap::new();
        for r in records {
            responses
                .entry((r.sample_id, r.kind))
                .or_default()
                .push(r.text);
        }
        Self { responses }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str::<ReplayRecord>(line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?,
            );
        }
        Ok(Self::from_records(records))
    }
}

impl TextGenerationClient for ReplayTextClient {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        self.responses
            .get(&(request.sample_id.to_string(), request.kind))
            .and_then(|v| v.get(request.ordinal))
            .cloned()
            .ok_or_else(|| {
                Error::Client(format!(
                    "no recorded {:?} response #{}",
                    request.kind, request.ordinal
                ))
            })
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
    /// Base64 image bytes.
    image: String,
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

/// POSTs `{prompt, image}` as JSON and expects `{text}` back.
pub struct RemoteTextClient {
    endpoint: JsonEndpoint,
}

impl RemoteTextClient {
    pub fn new(config: &EndpointConfig) -> Self {
        Self {
            endpoint: JsonEndpoint::new(config),
        }
    }
}

impl TextGenerationClient for RemoteTextClient {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        let image = encode_image(request.image_path)?;
        let resp: RemoteResponse = self.endpoint.post(&RemoteRequest {
            prompt: &request.prompt,
            image,
        })?;
        Ok(resp.text)
    }
}
