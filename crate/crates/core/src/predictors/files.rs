//! Recorded predictor outputs: feature, teacher-logit and VLM-prediction files.
//!
//! All three share one envelope: a JSON header line, then one record per
//! line. Feature and teacher rows are `sample_id<TAB>v0 v1 ...` with floats
//! in shortest round-trip form, so write/load is bit-exact. VLM rows are JSON
//! objects `{sample_id, raw_text}`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::parse::parse_vlm_response;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::labels::{LabelSpace, LogitVector, OneHotVector};

pub trait Keyed {
    fn sample_id(&self) -> &str;
}

/// Records keyed by sample id, kept in file order.
#[derive(Clone, Debug)]
pub struct RecordSet<T> {
    space: LabelSpace,
    items: Vec<T>,
    index: HashMap<String, usize>,
}

impl<T: Keyed> RecordSet<T> {
    pub fn new(space: LabelSpace, items: Vec<T>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, r) in items.iter().enumerate() {
            if index.insert(r.sample_id().to_string(), i).is_some() {
                return Err(Error::DuplicateSample(r.sample_id().to_string()));
            }
        }
        Ok(Self {
            space,
            items,
            index,
        })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn get(&self, sample_id: &str) -> Option<&T> {
        self.index.get(sample_id).map(|&i| &self.items[i])
    }

    /// Like [`get`](Self::get) but a missing id is an error.
    pub fn require(&self, sample_id: &str, what: &str) -> Result<&T> {
        self.get(sample_id).ok_or_else(|| {
            Error::MissingArtifact(format!("no {what} record for sample `{sample_id}`"))
        })
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T: PartialEq> PartialEq for RecordSet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.items == other.items
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub sample_id: String,
    pub vector: Vec<f64>,
}

impl Keyed for FeatureRecord {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherRecord {
    pub sample_id: String,
    pub logits: LogitVector,
}

impl Keyed for TeacherRecord {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VlmParse {
    Label(OneHotVector),
    Failure(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VlmPrediction {
    pub sample_id: String,
    pub raw_text: String,
    pub parsed: VlmParse,
}

impl VlmPrediction {
    pub fn new(sample_id: String, raw_text: String, space: &LabelSpace) -> Self {
        let parsed = match parse_vlm_response(&raw_text, space) {
            Ok(label) => VlmParse::Label(
                crate::labels::one_hot(&label, space).expect("parser returns in-space labels"),
            ),
            Err(e) => VlmParse::Failure(e.to_string()),
        };
        Self {
            sample_id,
            raw_text,
            parsed,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match &self.parsed {
            VlmParse::Label(oh) => Some(oh.label()),
            VlmParse::Failure(_) => None,
        }
    }

    /// One-hot for a parsed answer, uniform for a parse failure.
    pub fn gate_input(&self, space: &LabelSpace) -> Vec<f64> {
        match &self.parsed {
            VlmParse::Label(oh) => oh.to_vec(),
            VlmParse::Failure(_) => vec![1.0 / space.len() as f64; space.len()],
        }
    }
}

impl Keyed for VlmPrediction {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
}

pub type TeacherSet = RecordSet<TeacherRecord>;
pub type VlmSet = RecordSet<VlmPrediction>;

/// Fixed-dimension encoder features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    records: RecordSet<FeatureRecord>,
}

impl FeatureSet {
    pub fn new(space: LabelSpace, dim: usize, items: Vec<FeatureRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "feature dimension must be at least 1".into(),
            ));
        }
        for r in &items {
            if r.vector.len() != dim {
                return Err(Error::Shape(format!(
                    "feature for `{}` has length {}, expected {dim}",
                    r.sample_id,
                    r.vector.len()
                )));
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite feature for `{}`",
                    r.sample_id
                )));
            }
        }
        Ok(Self {
            dim,
            records: RecordSet::new(space, items)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl std::ops::Deref for FeatureSet {
    type Target = RecordSet<FeatureRecord>;

    fn deref(&self) -> &Self::Target {
        &self.records
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureHeader {
    space: LabelSpace,
    d: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherHeader {
    space: LabelSpace,
    c: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VlmHeader {
    space: LabelSpace,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VlmRow {
    sample_id: String,
    raw_text: String,
}

fn vector_row(out: &mut String, id: &str, values: &[f64]) {
    out.push_str(id);
    out.push('\t');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:?}").expect("string write");
    }
    out.push('\n');
}

fn header_line(header: &impl Serialize) -> String {
    let mut s = serde_json::to_string(header).expect("serializable");
    s.push('\n');
    s
}

pub fn write_feature_file(path: &Path, set: &FeatureSet) -> Result<()> {
    let mut out = header_line(&FeatureHeader {
        space: set.space().clone(),
        d: set.dim,
        count: set.len(),
    });
    for r in set.iter() {
        vector_row(&mut out, &r.sample_id, &r.vector);
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_teacher_file(path: &Path, set: &TeacherSet) -> Result<()> {
    let mut out = header_line(&TeacherHeader {
        space: set.space().clone(),
        c: set.space().len(),
        count: set.len(),
    });
    for r in set.iter() {
        vector_row(&mut out, &r.sample_id, r.logits.values());
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_vlm_file(path: &Path, set: &VlmSet) -> Result<()> {
    let mut out = header_line(&VlmHeader {
        space: set.space().clone(),
        count: set.len(),
    });
    for r in set.iter() {
        out.push_str(
            &serde_json::to_string(&VlmRow {
                sample_id: r.sample_id.clone(),
                raw_text: r.raw_text.clone(),
            })
            .expect("serializable"),
        );
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

struct Envelope<'a, H> {
    header: H,
    rows: Vec<(usize, &'a str)>,
}

fn read_envelope<'a, H: for<'de> Deserialize<'de>>(
    path: &Path,
    text: &'a str,
) -> Result<Envelope<'a, H>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Schema {
        path: path.into(),
        reason: "missing header".into(),
    })?;
    let header = serde_json::from_str(first).map_err(|e| Error::Schema {
        path: path.into(),
        reason: format!("bad header: {e}"),
    })?;
    Ok(Envelope {
        header,
        rows: lines.map(|(i, l)| (i + 1, l)).collect(),
    })
}

fn check_count(path: &Path, declared: usize, found: usize) -> Result<()> {
    if declared != found {
        return Err(Error::Schema {
            path: path.into(),
            reason: format!("header declares {declared} rows, found {found}"),
        });
    }
    Ok(())
}

fn parse_vector_row<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
    expected: usize,
) -> Result<(&'a str, Vec<f64>)> {
    let (id, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
        path: path.into(),
        line: line_no,
        reason: "expected `sample_id<TAB>values`".into(),
    })?;
    let values = rest
        .split_ascii_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            path: path.into(),
            line: line_no,
            reason: e.to_string(),
        })?;
    if values.len() != expected {
        return Err(Error::Schema {
            path: path.into(),
            reason: format!(
                "line {line_no}: row for `{id}` has {} values, expected {expected}",
                values.len()
            ),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema {
            path: path.into(),
            reason: format!("line {line_no}: non-finite value"),
        });
    }
    Ok((id, values))
}

pub fn load_feature_file(path: &Path) -> Result<FeatureSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<FeatureHeader> = read_envelope(path, &text)?;
    check_count(path, env.header.count, env.rows.len())?;
    let mut items = Vec::with_capacity(env.rows.len());
    for (line_no, line) in env.rows {
        let (id, vector) = parse_vector_row(path, line_no, line, env.header.d)?;
        items.push(FeatureRecord {
            sample_id: id.to_string(),
            vector,
        });
    }
    FeatureSet::new(env.header.space, env.header.d, items)
}

pub fn load_teacher_file(path: &Path) -> Result<TeacherSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<TeacherHeader> = read_envelope(path, &text)?;
    let space = env.header.space;
    if env.header.c != space.len() {
        return Err(Error::Schema {
            path: path.into(),
            reason: format!(
                "header declares c={} but space `{}` has {} classes",
                env.header.c,
                space.name(),
                space.len()
            ),
        });
    }
    check_count(path, env.header.count, env.rows.len())?;
    let mut items = Vec::with_capacity(env.rows.len());
    for (line_no, line) in env.rows {
        let (id, values) = parse_vector_row(path, line_no, line, space.len())?;
        items.push(TeacherRecord {
            sample_id: id.to_string(),
            logits: LogitVector::new(space.clone(), values)?,
        });
    }
    RecordSet::new(space, items)
}

pub fn load_vlm_file(path: &Path) -> Result<VlmSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<VlmHeader> = read_envelope(path, &text)?;
    check_count(path, env.header.count, env.rows.len())?;
    let space = env.header.space;
    let mut items = Vec::with_capacity(env.rows.len());
    for (line_no, line) in env.rows {
        let row: VlmRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.into(),
            line: line_no,
            reason: e.to_string(),
        })?;
        items.push(VlmPrediction::new(row.sample_id, row.raw_text, &space));
    }
    RecordSet::new(space, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn features(n: usize, d: usize) -> FeatureSet {
        let items = (0..n)
            .map(|i| FeatureRecord {
                sample_id: format!("s{i}"),
                vector: (0..d).map(|j| (i * d + j) as f64 * 0.1 - 3.0).collect(),
            })
            .collect();
        FeatureSet::new(LabelSpace::mikels8(), d, items).unwrap()
    }

    #[test]
    fn feature_file_with_default_dim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        let set = features(10, 3584);
        write_feature_file(&path, &set).unwrap();
        let loaded = load_feature_file(&path).unwrap();
        assert_eq!(loaded.len(), 10);
        assert_eq!(loaded.dim(), 3584);
        assert_eq!(loaded, set);
    }

    #[test]
    fn short_row_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        let set = features(2, 3584);
        write_feature_file(&path, &set).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let idx = text.rfind(' ').unwrap();
        let eol = text[idx..].find('\n').unwrap() + idx;
        let cut = format!("{}{}", &text[..idx], &text[eol..]);
        fs::write(&path, cut).unwrap();
        assert!(matches!(
            load_feature_file(&path),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        fs::write(
            &path,
            "{\"space\":\"binary\",\"d\":2,\"count\":2}\na\t1 2\na\t3 4\n",
        )
        .unwrap();
        assert!(matches!(load_feature_file(&path), Err(Error::DuplicateSample(id)) if id == "a"));
    }

    #[test]
    fn header_count_and_class_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        fs::write(
            &path,
            "{\"space\":\"binary\",\"c\":3,\"count\":1}\na\t1 2 3\n",
        )
        .unwrap();
        assert!(matches!(
            load_teacher_file(&path),
            Err(Error::Schema { .. })
        ));
        fs::write(
            &path,
            "{\"space\":\"binary\",\"c\":2,\"count\":2}\na\t1 2\n",
        )
        .unwrap();
        assert!(matches!(
            load_teacher_file(&path),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn vlm_file_parses_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let space = LabelSpace::mikels8();
        let set = RecordSet::new(
            space.clone(),
            vec![
                VlmPrediction::new("a".into(), "{'emotion': 'awe'}".into(), &space),
                VlmPrediction::new("b".into(), "no idea\twhatsoever".into(), &space),
                VlmPrediction::new("c".into(), "{'emotion': 'joy'}".into(), &space),
            ],
        )
        .unwrap();
        write_vlm_file(&path, &set).unwrap();
        let loaded = load_vlm_file(&path).unwrap();
        assert_eq!(loaded, set);
        assert_eq!(loaded.get("a").unwrap().label(), Some("awe"));
        assert_eq!(loaded.get("b").unwrap().label(), None);
        assert_eq!(loaded.get("c").unwrap().label(), None);
        assert_eq!(loaded.get("b").unwrap().gate_input(&space), vec![0.125; 8]);
    }

    proptest! {
        #[test]
        fn vector_files_roundtrip_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 2), 1..20)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let space = LabelSpace::binary();
            let feats = FeatureSet::new(
                space.clone(),
                2,
                rows.iter().enumerate().map(|(i, v)| FeatureRecord { sample_id: format!("id {i}"), vector: v.clone() }).collect(),
            ).unwrap();
            let fp = dir.path().join("f");
            write_feature_file(&fp, &feats).unwrap();
            let back = load_feature_file(&fp).unwrap();
            for (a, b) in feats.iter().zip(back.iter()) {
                let bits_a: Vec<u64> = a.vector.iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.vector.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }

            let teachers = RecordSet::new(
                space.clone(),
                rows.iter().enumerate().map(|(i, v)| TeacherRecord { sample_id: format!("t{i}"), logits: LogitVector::new(space.clone(), v.clone()).unwrap() }).collect(),
            ).unwrap();
            let tp = dir.path().join("t");
            write_teacher_file(&tp, &teachers).unwrap();
            prop_assert_eq!(load_teacher_file(&tp).unwrap(), teachers);
        }
    }
}
