//! Dataset profiles, folder-per-label scanning, seeded splits, and the
//! instruction-triplet builder.

pub mod client;
pub mod instructions;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSpace;

pub use client::{
    GenerationRequest, RemoteTextClient, ReplayRecord, ReplayTextClient, TextGenerationClient,
};
pub use instructions::{
    build_categorical_triplet, categorical_response, generate_descriptive_batch,
    generate_descriptive_triplets, read_triplets, render_categorical_question, sort_triplets,
    write_triplets, BatchGeneration, InstructionKind, InstructionTriplet, CONVERSATION_QUESTION,
    REASONING_QUESTION,
};

const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png", "bmp", "gif", "webp", "tif", "tiff"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetProfile {
    Emoset,
    Fi,
    Emotion6,
    Flickr,
    Instagram,
}

impl DatasetProfile {
    pub const ALL: [DatasetProfile; 5] = [
        DatasetProfile::Emoset,
        DatasetProfile::Fi,
        DatasetProfile::Emotion6,
        DatasetProfile::Flickr,
        DatasetProfile::Instagram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetProfile::Emoset => "emoset",
            DatasetProfile::Fi => "fi",
            DatasetProfile::Emotion6 => "emotion6",
            DatasetProfile::Flickr => "flickr",
            DatasetProfile::Instagram => "instagram",
        }
    }

    pub fn space(self) -> LabelSpace {
        match self {
            DatasetProfile::Emoset | DatasetProfile::Fi => LabelSpace::mikels8(),
            DatasetProfile::Emotion6 => LabelSpace::ekman6(),
            DatasetProfile::Flickr | DatasetProfile::Instagram => LabelSpace::binary(),
        }
    }

    /// Published image count; informational only.
    pub fn expected_size(self) -> usize {
        match self {
            DatasetProfile::Emoset => 118_102,
            DatasetProfile::Fi => 21_824,
            DatasetProfile::Emotion6 => 1_980,
            DatasetProfile::Flickr => 60_738,
            DatasetProfile::Instagram => 42_832,
        }
    }
}

impl fmt::Display for DatasetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetProfile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset profile `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub image_path: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleIndex {
    pub profile: DatasetProfile,
    entries: Vec<Sample>,
}

impl SampleIndex {
    pub fn new(profile: DatasetProfile, entries: Vec<Sample>) -> Result<Self> {
        let space = profile.space();
        let mut seen = HashSet::with_capacity(entries.len());
        for s in &entries {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSample(s.sample_id.clone()));
            }
            if !space.contains(&s.label) {
                return Err(Error::OutOfVocabulary {
                    label: s.label.clone(),
                    space: space.name().into(),
                });
            }
            if s.sample_id.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidInput(format!(
                    "sample id {:?} contains a tab or newline",
                    s.sample_id
                )));
            }
        }
        Ok(Self { profile, entries })
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn space(&self) -> LabelSpace {
        self.profile.space()
    }

    pub fn get(&self, sample_id: &str) -> Option<&Sample> {
        self.entries.iter().find(|s| s.sample_id == sample_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| x.is_nan() || *x <= 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: SampleIndex,
    pub val: SampleIndex,
    pub test: SampleIndex,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if is_image(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Indexes `<root>/<label>/**/<image>` for every label of the profile.
///
/// Entries are ordered lexicographically by sample id, which is the image
/// path relative to `root` with `/` separators.
pub fn scan_dataset(root: &Path, profile: DatasetProfile) -> Result<SampleIndex> {
    let space = profile.space();
    let missing: Vec<&str> = space
        .labels()
        .iter()
        .filter(|l| !root.join(l).is_dir())
        .map(|l| l.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Layout {
            root: root.to_path_buf(),
            reason: format!("missing label directories: {}", missing.join(", ")),
        });
    }

    let mut entries = Vec::new();
    for label in space.labels() {
        let mut files = Vec::new();
        collect_images(&root.join(label), &mut files)?;
        for path in files {
            let rel = path.strip_prefix(root).expect("walked under root");
            let sample_id = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            entries.push(Sample {
                sample_id,
                image_path: path.to_string_lossy().into_owned(),
                label: label.clone(),
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no images under {}",
            root.display()
        )));
    }
    entries.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    SampleIndex::new(profile, entries)
}

/// Seeded shuffle into train/val/test.
///
/// Train and val sizes are `round(n * fraction)`, test takes the remainder.
/// Within each split, entries keep the input order.
pub fn split_index(index: &SampleIndex, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = index.len();
    if n == 0 {
        return Err(Error::EmptyDataset("cannot split an empty index".into()));
    }
    let n_train = (n as f64 * spec.train).round() as usize;
    let n_val = (n as f64 * spec.val).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::SplitTooSmall(format!(
            "{n} samples cannot be split {}/{}/{} without an empty part",
            spec.train, spec.val, spec.test
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut assignment = vec![0u8; n];
    for &i in &order[n_train..n_train + n_val] {
        assignment[i] = 1;
    }
    for &i in &order[n_train + n_val..] {
        assignment[i] = 2;
    }
    let part = |k: u8| {
        let entries = index
            .entries
            .iter()
            .zip(&assignment)
            .filter(|(_, a)| **a == k)
            .map(|(s, _)| s.clone())
            .collect();
        SampleIndex {
            profile: index.profile,
            entries,
        }
    };
    Ok(Splits {
        train: part(0),
        val: part(1),
        test: part(2),
    })
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    profile: DatasetProfile,
    count: usize,
}

/// Writes the index as line-delimited JSON: a `{profile, count}` header, then one sample per line.
pub fn write_index(path: &Path, index: &SampleIndex) -> Result<()> {
    let mut buf = Vec::new();
    let header = IndexHeader {
        profile: index.profile,
        count: index.len(),
    };
    serde_json::to_writer(&mut buf, &header).expect("serializable");
    buf.push(b'\n');
    for s in &index.entries {
        serde_json::to_writer(&mut buf, s).expect("serializable");
        buf.push(b'\n');
    }
    crate::io_util::write_atomic(path, &buf)
}

pub fn read_index(path: &Path) -> Result<SampleIndex> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: IndexHeader =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    let mut entries = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str::<Sample>(&line).map_err(|e| parse_err(i + 2, e.to_string()))?,
        );
    }
    if entries.len() != header.count {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: format!(
                "header declares {} samples, found {}",
                header.count,
                entries.len()
            ),
        });
    }
    SampleIndex::new(header.profile, entries)
}

pub(crate) fn write_lines<W: Write>(
    mut w: W,
    lines: impl IntoIterator<Item = String>,
) -> std::io::Result<()> {
    for l in lines {
        w.write_all(l.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
