use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::labels::LabelSpace;

fn dict_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)\{\s*["'‘’“”]?emotion["'‘’“”]?\s*:\s*["'‘’“”]?\s*([^"'‘’“”,}]*?)\s*["'‘’“”]?\s*\}"#)
            .expect("static regex")
    })
}

/// Extracts a label from free-form VLM output.
///
/// The dictionary form `{'emotion': '<label>'}` wins when present, with any
/// quoting style and whitespace. Otherwise the first whole-word occurrence
/// of a label of `space` in the lowercased text is returned.
pub fn parse_vlm_response(text: &str, space: &LabelSpace) -> Result<String> {
    if let Some(caps) = dict_pattern().captures(text) {
        let label = caps[1].trim().to_lowercase();
        return if space.contains(&label) {
            Ok(label)
        } else {
            Err(Error::OutOfVocabulary {
                label,
                space: space.name().into(),
            })
        };
    }

    let lower = text.to_lowercase();
    let alternatives: Vec<String> = space.labels().iter().map(|l| regex::escape(l)).collect();
    let re = Regex::new(&format!(r"\b(?:{})\b", alternatives.join("|"))).expect("escaped labels");
    re.find(&lower)
        .map(|m| m.as_str().to_string())
        .ok_or_else(|| Error::UnparseableResponse(text.to_string()))
}
