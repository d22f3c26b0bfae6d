//! Live encoder and VLM adapters. Desk-scale runs use recorded files instead.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::files::{
    load_feature_file, write_feature_file, FeatureRecord, FeatureSet, RecordSet, VlmPrediction,
    VlmSet,
};
use crate::data::{render_categorical_question, Sample};
use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::remote::{encode_image, EndpointConfig, JsonEndpoint};

/// Produces the token sequence the frozen visual encoder emits for one image.
pub trait EncoderClient: Send + Sync {
    fn encode(&self, image_path: &str) -> Result<Vec<Vec<f64>>>;
}

/// Mean over the token axis.
pub fn mean_pool(tokens: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = tokens
        .first()
        .ok_or_else(|| Error::InvalidInput("encoder returned no tokens".into()))?;
    let d = first.len();
    let mut out = vec![0.0; d];
    for t in tokens {
        if t.len() != d {
            return Err(Error::Shape(format!(
                "token of length {} among tokens of length {d}",
                t.len()
            )));
        }
        for (o, v) in out.iter_mut().zip(t) {
            *o += v;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Encodes and pools every sample, reusing rows already present in `cache`
/// and writing the merged set back to it.
pub fn extract_features(
    samples: &[Sample],
    space: &LabelSpace,
    client: &dyn EncoderClient,
    workers: usize,
    cache: Option<&Path>,
) -> Result<FeatureSet> {
    let cached = match cache {
        Some(p) if p.exists() => Some(load_feature_file(p)?),
        _ => None,
    };
    let pending: Vec<&Sample> = samples
        .iter()
        .filter(|s| {
            cached
                .as_ref()
                .is_none_or(|c| c.get(&s.sample_id).is_none())
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(&Sample, Result<Vec<f64>>)> = pool.install(|| {
        pending
            .par_iter()
            .map(|s| (*s, client.encode(&s.image_path).and_then(|t| mean_pool(&t))))
            .collect()
    });

    let mut failures: Vec<(PathBuf, String)> = Vec::new();
    let mut fresh: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (s, r) in results {
        match r {
            Ok(v) => {
                fresh.insert(&s.sample_id, v);
            }
            Err(e) => failures.push((PathBuf::from(&s.image_path), e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Extraction { failures });
    }

    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let vector = match fresh.remove(s.sample_id.as_str()) {
            Some(v) => v,
            None => cached
                .as_ref()
                .and_then(|c| c.get(&s.sample_id))
                .map(|r| r.vector.clone())
                .expect("cached"),
        };
        records.push(FeatureRecord {
            sample_id: s.sample_id.clone(),
            vector,
        });
    }
    let dim = records.first().map(|r| r.vector.len()).unwrap_or(1);
    let set = FeatureSet::new(space.clone(), dim, records)?;
    if let Some(p) = cache {
        write_feature_file(p, &set)?;
    }
    Ok(set)
}

#[derive(Serialize)]
struct EncodeRequest {
    image: String,
}

#[derive(Deserialize)]
struct EncodeResponse {
    tokens: Vec<Vec<f64>>,
}

/// POSTs `{image}` and expects `{tokens: [[f64]]}`.
pub struct RemoteEncoderClient {
    endpoint: JsonEndpoint,
}

impl RemoteEncoderClient {
    pub fn new(config: &EndpointConfig) -> Self {
        Self {
            endpoint: JsonEndpoint::new(config),
        }
    }
}

impl EncoderClient for RemoteEncoderClient {
    fn encode(&self, image_path: &str) -> Result<Vec<Vec<f64>>> {
        let resp: EncodeResponse = self.endpoint.post(&EncodeRequest {
            image: encode_image(image_path)?,
        })?;
        Ok(resp.tokens)
    }
}

/// Answers the categorical question for one image with free text.
pub trait VlmClient: Send + Sync {
    fn answer(&self, image_path: &str, question: &str) -> Result<String>;
}

#[derive(Serialize)]
struct VlmRequest<'a> {
    prompt: &'a str,
    image: String,
    /// Decoding parameters forwarded untouched.
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    decoding: &'a serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct VlmResponse {
    text: String,
}

pub struct RemoteVlmClient {
    endpoint: JsonEndpoint,
    decoding: serde_json::Map<String, serde_json::Value>,
}

impl RemoteVlmClient {
    pub fn new(
        config: &EndpointConfig,
        decoding: serde_json::Map<String, serde_json::Value>,
    ) -> Self {
        Self {
            endpoint: JsonEndpoint::new(config),
            decoding,
        }
    }
}

impl VlmClient for RemoteVlmClient {
    fn answer(&self, image_path: &str, question: &str) -> Result<String> {
        let resp: VlmResponse = self.endpoint.post(&VlmRequest {
            prompt: question,
            image: encode_image(image_path)?,
            decoding: &self.decoding,
        })?;
        Ok(resp.text)
    }
}

/// Queries the VLM with the categorical prompt for each sample.
pub fn predict_vlm(
    samples: &[Sample],
    space: &LabelSpace,
    client: &dyn VlmClient,
    workers: usize,
) -> Result<VlmSet> {
    let question = render_categorical_question(space);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let answers: Vec<Result<String>> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| client.answer(&s.image_path, &question))
            .collect()
    });
    let mut items = Vec::with_capacity(samples.len());
    for (s, a) in samples.iter().zip(answers) {
        let text = a.map_err(|e| e.annotate(format!("vlm query for `{}`", s.sample_id)))?;
        items.push(VlmPrediction::new(s.sample_id.clone(), text, space));
    }
    RecordSet::new(space.clone(), items)
}
