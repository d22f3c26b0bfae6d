//! Instruction triplets: `(image, question, response)` records of three kinds.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{GenerationRequest, TextGenerationClient};
use super::Sample;
use crate::error::{Error, Result};
use crate::labels::LabelSpace;

pub const CONVERSATION_QUESTION: &str = "Observe the image and describe key elements of the image.";
pub const REASONING_QUESTION: &str =
    "Observe the image and describe the process of inferring the emotions conveyed in the image.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstructionKind {
    Categorical,
    Conversation,
    Reasoning,
}

impl InstructionKind {
    pub fn fixed_question(self) -> Option<&'static str> {
        match self {
            InstructionKind::Categorical => None,
            InstructionKind::Conversation => Some(CONVERSATION_QUESTION),
            InstructionKind::Reasoning => Some(REASONING_QUESTION),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionTriplet {
    pub image_ref: String,
    pub kind: InstructionKind,
    pub question: String,
    pub response: String,
}

fn oxford_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

/// The categorical prompt listing every class of `space`, with the first
/// label as the answer-format example.
pub fn render_categorical_question(space: &LabelSpace) -> String {
    format!(
        "Observe the image and select the emotion category that best matches this image from the following {} categories: {}. Answer in dictionary form as follows: {{'emotion':'{}'}}",
        space.len(),
        oxford_list(space.labels()),
        space.label(0)
    )
}

pub fn categorical_response(label: &str) -> String {
    format!("{{'emotion': '{label}'}}")
}

pub fn build_categorical_triplet(
    sample: &Sample,
    space: &LabelSpace,
) -> Result<InstructionTriplet> {
    if !space.contains(&sample.label) {
        return Err(Error::OutOfVocabulary {
            label: sample.label.clone(),
            space: space.name().into(),
        });
    }
    Ok(InstructionTriplet {
        image_ref: sample.image_path.clone(),
        kind: InstructionKind::Categorical,
        question: render_categorical_question(space),
        response: categorical_response(&sample.label),
    })
}

fn generation_prompt(question: &str, label: &str) -> String {
    format!("{question}\nThe image is annotated with the emotion: {label}.")
}

/// Asks `client` for `per_kind` responses of each requested descriptive kind.
pub fn generate_descriptive_triplets(
    sample: &Sample,
    kinds: &[InstructionKind],
    per_kind: usize,
    client: &dyn TextGenerationClient,
) -> Result<Vec<InstructionTriplet>> {
    if kinds.is_empty() {
        return Err(Error::InvalidInput("no instruction kinds requested".into()));
    }
    let mut out = Vec::with_capacity(kinds.len() * per_kind);
    for &kind in kinds {
        let question = kind.fixed_question().ok_or_else(|| {
            Error::InvalidInput("categorical triplets are not generated by a client".into())
        })?;
        for ordinal in 0..per_kind {
            let request = GenerationRequest {
                sample_id: &sample.sample_id,
                image_path: &sample.image_path,
                kind,
                ordinal,
                prompt: generation_prompt(question, &sample.label),
            };
            let text = client.generate(&request).map_err(|e| Error::Generation {
                sample_id: sample.sample_id.clone(),
                reason: e.to_string(),
            })?;
            let text = text.trim();
            if text.is_empty() {
                return Err(Error::Generation {
                    sample_id: sample.sample_id.clone(),
                    reason: "client returned an empty response".into(),
                });
            }
            out.push(InstructionTriplet {
                image_ref: sample.image_path.clone(),
                kind,
                question: question.to_string(),
                response: text.to_string(),
            });
        }
    }
    Ok(out)
}

/// Outcome of fanning generation out over many samples.
pub struct BatchGeneration {
    pub triplets: Vec<InstructionTriplet>,
    pub failures: Vec<Error>,
}

/// Runs [`generate_descriptive_triplets`] over `samples` on at most `workers`
/// threads. Successful triplets come back sorted by image then kind.
pub fn generate_descriptive_batch(
    samples: &[Sample],
    kinds: &[InstructionKind],
    per_kind: usize,
    client: &dyn TextGenerationClient,
    workers: usize,
) -> BatchGeneration {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<Vec<InstructionTriplet>>> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| generate_descriptive_triplets(s, kinds, per_kind, client))
            .collect()
    });
    let mut triplets = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(t) => triplets.extend(t),
            Err(e) => failures.push(e),
        }
    }
    sort_triplets(&mut triplets);
    BatchGeneration { triplets, failures }
}

/// Stable sort by `(image_ref, kind)`.
pub fn sort_triplets(triplets: &mut [InstructionTriplet]) {
    triplets.sort_by(|a, b| (&a.image_ref, a.kind).cmp(&(&b.image_ref, b.kind)));
}

pub fn write_triplets(path: &Path, triplets: &[InstructionTriplet]) -> Result<()> {
    let mut buf = Vec::new();
    super::write_lines(
        &mut buf,
        triplets
            .iter()
            .map(|t| serde_json::to_string(t).expect("serializable")),
    )
    .expect("in-memory write");
    crate::io_util::write_atomic(path, &buf)
}

pub fn read_triplets(path: &Path) -> Result<Vec<InstructionTriplet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::client::{ReplayRecord, ReplayTextClient};
    use crate::predictors::parse_vlm_response;

    const MIKELS_PROMPT: &str = "Observe the image and select the emotion category that best matches this image from the following 8 categories: amusement, anger, awe, contentment, disgust, excitement, fear, and sadness. Answer in dictionary form as follows: {'emotion':'amusement'}";

    fn sample(label: &str) -> Sample {
        Sample {
            sample_id: format!("{label}/x.jpg"),
            image_path: format!("/data/{label}/x.jpg"),
            label: label.into(),
        }
    }

    #[test]
    fn mikels_prompt_is_byte_exact() {
        assert_eq!(
            render_categorical_question(&LabelSpace::mikels8()),
            MIKELS_PROMPT
        );
    }

    #[test]
    fn other_space_prompts() {
        let ekman = render_categorical_question(&LabelSpace::ekman6());
        assert!(ekman
            .contains("following 6 categories: anger, surprise, disgust, joy, fear, and sadness."));
        assert!(ekman.ends_with("{'emotion':'anger'}"));
        let binary = render_categorical_question(&LabelSpace::binary());
        assert!(binary.contains("2 categories: positive, and negative."));
    }

    #[test]
    fn categorical_triplet_responses() {
        let m = LabelSpace::mikels8();
        let t = build_categorical_triplet(&sample("contentment"), &m).unwrap();
        assert_eq!(t.response, "{'emotion': 'contentment'}");
        assert_eq!(t.kind, InstructionKind::Categorical);
        assert_eq!(t.question, MIKELS_PROMPT);
        assert_eq!(
            build_categorical_triplet(&sample("fear"), &m)
                .unwrap()
                .response,
            "{'emotion': 'fear'}"
        );
        assert!(matches!(
            build_categorical_triplet(&sample("joy"), &m),
            Err(Error::OutOfVocabulary { .. })
        ));
    }

    #[test]
    fn categorical_roundtrip_all_spaces() {
        for space in [
            LabelSpace::mikels8(),
            LabelSpace::ekman6(),
            LabelSpace::binary(),
        ] {
            for label in space.labels() {
                let t = build_categorical_triplet(&sample(label), &space).unwrap();
                assert_eq!(parse_vlm_response(&t.response, &space).unwrap(), *label);
            }
        }
    }

    #[test]
    fn descriptive_questions_and_passthrough() {
        let s = sample("awe");
        let client = ReplayTextClient::from_records([
            ReplayRecord {
                sample_id: s.sample_id.clone(),
                kind: InstructionKind::Conversation,
                text: "  A mountain.\n".into(),
            },
            ReplayRecord {
                sample_id: s.sample_id.clone(),
                kind: InstructionKind::Reasoning,
                text: "Vastness.".into(),
            },
        ]);
        let out = generate_descriptive_triplets(
            &s,
            &[InstructionKind::Conversation, InstructionKind::Reasoning],
            1,
            &client,
        )
        .unwrap();
        assert_eq!(
            out[0].question,
            "Observe the image and describe key elements of the image."
        );
        assert_eq!(out[0].response, "A mountain.");
        assert_eq!(
            out[1].question,
            "Observe the image and describe the process of inferring the emotions conveyed in the image."
        );
        assert_eq!(out[1].response, "Vastness.");
    }

    #[test]
    fn descriptive_errors() {
        let s = sample("awe");
        let empty = ReplayTextClient::from_records([ReplayRecord {
            sample_id: s.sample_id.clone(),
            kind: InstructionKind::Conversation,
            text: "   ".into(),
        }]);
        match generate_descriptive_triplets(&s, &[InstructionKind::Conversation], 1, &empty) {
            Err(Error::Generation { sample_id, .. }) => assert_eq!(sample_id, s.sample_id),
            other => panic!("{other:?}"),
        }
        assert!(
            generate_descriptive_triplets(&s, &[InstructionKind::Reasoning], 1, &empty).is_err()
        );
        assert!(generate_descriptive_triplets(&s, &[], 1, &empty).is_err());
    }

    #[test]
    fn batch_is_sorted_and_collects_failures() {
        let samples: Vec<Sample> = ["b", "a", "c"]
            .iter()
            .map(|id| Sample {
                sample_id: id.to_string(),
                image_path: format!("/{id}.jpg"),
                label: "awe".into(),
            })
            .collect();
        let client = ReplayTextClient::from_records(["a", "b"].iter().map(|id| ReplayRecord {
            sample_id: id.to_string(),
            kind: InstructionKind::Conversation,
            text: format!("about {id}"),
        }));
        let out =
            generate_descriptive_batch(&samples, &[InstructionKind::Conversation], 1, &client, 3);
        let refs: Vec<_> = out.triplets.iter().map(|t| t.image_ref.as_str()).collect();
        assert_eq!(refs, ["/a.jpg", "/b.jpg"]);
        assert_eq!(out.failures.len(), 1);
    }

    #[test]
    fn triplet_file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let m = LabelSpace::mikels8();
        let triplets: Vec<_> = (0..100)
            .map(|i| {
                let mut t = build_categorical_triplet(&sample(m.label(i % 8)), &m).unwrap();
                t.image_ref = format!("img{i}.jpg");
                t
            })
            .collect();
        write_triplets(&path, &triplets).unwrap();
        assert_eq!(read_triplets(&path).unwrap(), triplets);

        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let truncated = &lines[2][..lines[2].len() / 2];
        lines[2] = truncated;
        fs::write(&path, lines.join("\n")).unwrap();
        match read_triplets(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }

        fs::write(&path, "").unwrap();
        assert!(read_triplets(&path).unwrap().is_empty());
    }
}
