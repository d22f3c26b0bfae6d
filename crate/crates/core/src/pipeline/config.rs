//! Run configuration: a single TOML file, validated into [`RunConfig`].
//!
//! Precedence is command-line overrides, then the file, then defaults.
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetProfile, InstructionKind, SplitSpec};
use crate::distill::{DistillHeadConfig, DistillHyperparams};
use crate::error::{Error, Result};
use crate::gating::{GateHyperparams, GateVariant, DEFAULT_MOE_EXPERTS};
use crate::io_util::sha256_hex;
use crate::predictors::SyntheticSpec;
use crate::remote::EndpointConfig;

pub const DEFAULT_INPUT_DIM: usize = 3584;
pub const DEFAULT_HIDDEN: usize = 1024;

type Unknown = BTreeMap<String, toml::Value>;

#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    profile: Option<DatasetProfile>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    paths: RawPaths,
    #[serde(default)]
    split: RawSplit,
    #[serde(default)]
    head: RawHead,
    #[serde(default)]
    distill: RawDistill,
    #[serde(default)]
    gate: RawGate,
    synthetic: Option<RawSynthetic>,
    #[serde(default)]
    instructions: RawInstructions,
    #[serde(default)]
    ablate: RawAblate,
    #[serde(default)]
    endpoints: RawEndpoints,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawPaths {
    data_root: Option<PathBuf>,
    index: Option<PathBuf>,
    features: Option<PathBuf>,
    teacher: Option<PathBuf>,
    vlm: Option<PathBuf>,
    replay: Option<PathBuf>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawSplit {
    train: Option<f64>,
    val: Option<f64>,
    test: Option<f64>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawHead {
    input_dim: Option<usize>,
    hidden_dims: Option<Vec<usize>>,
    num_classes: Option<usize>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawDistill {
    alpha: Option<f64>,
    tau: Option<f64>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawGate {
    variant: Option<String>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    experts: Option<usize>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawSynthetic {
    n: Option<usize>,
    num_classes: Option<usize>,
    dim: Option<usize>,
    teacher_accuracy: Option<f64>,
    vlm_accuracy: Option<f64>,
    overlap: Option<f64>,
    confidence_correct: Option<f64>,
    confidence_wrong: Option<f64>,
    cluster_separation: Option<f64>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawInstructions {
    kinds: Option<Vec<InstructionKind>>,
    per_kind: Option<usize>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawAblate {
    alpha_grid: Option<Vec<f64>>,
    depth_grid: Option<Vec<Vec<usize>>>,
    gate_variants: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawEndpoint {
    url: Option<String>,
    token_env: Option<String>,
    timeout_secs: Option<u64>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Debug, Default, Deserialize)]
struct RawEndpoints {
    generator: Option<RawEndpoint>,
    encoder: Option<RawEndpoint>,
    vlm: Option<RawEndpoint>,
    vlm_decoding: Option<toml::Table>,
    #[serde(flatten)]
    unknown: Unknown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PathsConfig {
    pub data_root: Option<PathBuf>,
    /// Pre-built sample index; takes precedence over scanning `data_root`.
    pub index: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub vlm: Option<PathBuf>,
    /// Recorded generator responses, used instead of a live generator.
    pub replay: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateConfig {
    pub variant: GateVariant,
    #[serde(flatten)]
    pub hyper: GateHyperparams,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstructionsConfig {
    pub kinds: Vec<InstructionKind>,
    pub per_kind: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblateConfig {
    pub alpha_grid: Vec<f64>,
    pub depth_grid: Vec<Vec<usize>>,
    pub gate_variants: Vec<GateVariant>,
    /// Seeds averaged per grid point; empty means the run seed alone.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EndpointsConfig {
    pub generator: Option<EndpointConfig>,
    pub encoder: Option<EndpointConfig>,
    pub vlm: Option<EndpointConfig>,
    pub vlm_decoding: serde_json::Map<String, serde_json::Value>,
}

/// A validated run configuration. The top-level seed drives every seeded
/// component (split, synthetic data, head and gate training).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub profile: DatasetProfile,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub paths: PathsConfig,
    pub split: SplitSpec,
    pub head: DistillHeadConfig,
    pub distill: DistillHyperparams,
    pub gate: GateConfig,
    pub synthetic: Option<SyntheticSpec>,
    pub instructions: InstructionsConfig,
    pub ablate: AblateConfig,
    pub endpoints: EndpointsConfig,
}

impl RunConfig {
    /// The configuration echoed verbatim into manifests and summaries, in
    /// the input format: feeding it back to [`validate_config`] reproduces
    /// this config.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes to TOML");
        for section in ["split", "distill", "gate", "synthetic"] {
            if let Some(t) = table.get_mut(section).and_then(toml::Value::as_table_mut) {
                t.remove("seed");
            }
        }
        toml::to_string(&table).expect("table serializes")
    }

    /// [`Self::to_toml`] without the output directory and worker count,
    /// which do not influence results. Echoed in report summaries.
    pub fn echo_toml(&self) -> String {
        let mut table: toml::Table = self.to_toml().parse().expect("own output parses");
        table.remove("out_dir");
        table.remove("workers");
        toml::to_string(&table).expect("table serializes")
    }

    /// Content hash of everything that influences results. The output
    /// directory and worker count are excluded.
    pub fn run_id(&self) -> String {
        let mut keyed = self.clone();
        keyed.out_dir = PathBuf::new();
        keyed.workers = 0;
        let json = serde_json::to_vec(&keyed).expect("config serializes to JSON");
        sha256_hex(&json)[..16].to_string()
    }
}

fn collect_unknown(prefix: &str, unknown: &Unknown, out: &mut Vec<String>) {
    out.extend(unknown.keys().map(|k| {
        if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        }
    }));
}

impl RawConfig {
    fn unknown_keys(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_unknown("", &self.unknown, &mut out);
        collect_unknown("paths", &self.paths.unknown, &mut out);
        collect_unknown("split", &self.split.unknown, &mut out);
        collect_unknown("head", &self.head.unknown, &mut out);
        collect_unknown("distill", &self.distill.unknown, &mut out);
        collect_unknown("gate", &self.gate.unknown, &mut out);
        if let Some(s) = &self.synthetic {
            collect_unknown("synthetic", &s.unknown, &mut out);
        }
        collect_unknown("instructions", &self.instructions.unknown, &mut out);
        collect_unknown("ablate", &self.ablate.unknown, &mut out);
        collect_unknown("endpoints", &self.endpoints.unknown, &mut out);
        for (name, ep) in [
            ("generator", &self.endpoints.generator),
            ("encoder", &self.endpoints.encoder),
            ("vlm", &self.endpoints.vlm),
        ] {
            if let Some(ep) = ep {
                collect_unknown(&format!("endpoints.{name}"), &ep.unknown, &mut out);
            }
        }
        out.sort();
        out
    }
}

fn profile_for_classes(c: usize) -> Result<DatasetProfile> {
    match c {
        8 => Ok(DatasetProfile::Fi),
        6 => Ok(DatasetProfile::Emotion6),
        2 => Ok(DatasetProfile::Flickr),
        _ => Err(Error::Config(format!(
            "synthetic.num_classes = {c} matches no dataset profile (use 2, 6 or 8)"
        ))),
    }
}

fn resolve_path(base: &Path, key: &str, p: Option<PathBuf>) -> Result<Option<PathBuf>> {
    let Some(p) = p else { return Ok(None) };
    let p = if p.is_absolute() { p } else { base.join(p) };
    if !p.exists() {
        return Err(Error::Config(format!(
            "paths.{key} does not exist: {}",
            p.display()
        )));
    }
    Ok(Some(p))
}

fn endpoint(raw: Option<RawEndpoint>, name: &str) -> Result<Option<EndpointConfig>> {
    let Some(raw) = raw else { return Ok(None) };
    let url = raw
        .url
        .ok_or_else(|| Error::Config(format!("endpoints.{name}.url is required")))?;
    let mut ep = EndpointConfig::new(url);
    if let Some(t) = raw.token_env {
        ep.token_env = t;
    }
    if let Some(t) = raw.timeout_secs {
        ep.timeout_secs = t;
    }
    Ok(Some(ep))
}

fn config_err(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Config(format!("{key}: {e}"))
}

fn resolve(raw: RawConfig, base: &Path) -> Result<RunConfig> {
    let unknown = raw.unknown_keys();
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown config keys: {}",
            unknown.join(", ")
        )));
    }
    let seed = raw.seed.unwrap_or(0);

    let synth_classes = raw.synthetic.as_ref().and_then(|s| s.num_classes);
    let profile = match (raw.profile, synth_classes) {
        (Some(p), _) => p,
        (None, Some(c)) => profile_for_classes(c)?,
        (None, None) if raw.synthetic.is_some() => DatasetProfile::Fi,
        (None, None) => return Err(Error::Config("`profile` is required".into())),
    };
    let c = profile.space().len();

    let synthetic = match raw.synthetic {
        None => None,
        Some(s) => {
            let num_classes = s.num_classes.unwrap_or(c);
            if num_classes != c {
                return Err(Error::Config(format!(
                    "synthetic.num_classes = {num_classes} but profile {profile} has {c} classes"
                )));
            }
            let d = SyntheticSpec::new(2000, c, 32, 0.7, 0.7, 0.5, seed);
            let spec = SyntheticSpec {
                n: s.n.unwrap_or(d.n),
                num_classes,
                dim: s.dim.unwrap_or(d.dim),
                teacher_accuracy: s.teacher_accuracy.unwrap_or(d.teacher_accuracy),
                vlm_accuracy: s.vlm_accuracy.unwrap_or(d.vlm_accuracy),
                overlap: s.overlap.unwrap_or(d.overlap),
                confidence_correct: s.confidence_correct.unwrap_or(d.confidence_correct),
                confidence_wrong: s.confidence_wrong.unwrap_or(d.confidence_wrong),
                cluster_separation: s.cluster_separation.unwrap_or(d.cluster_separation),
                seed,
            };
            spec.bucket_counts().map_err(config_err("synthetic"))?;
            Some(spec)
        }
    };

    let ds = SplitSpec::default();
    let split = SplitSpec {
        train: raw.split.train.unwrap_or(ds.train),
        val: raw.split.val.unwrap_or(ds.val),
        test: raw.split.test.unwrap_or(ds.test),
        seed,
    };
    split.validate().map_err(config_err("split"))?;

    let head = DistillHeadConfig {
        input_dim: raw
            .head
            .input_dim
            .or(synthetic.as_ref().map(|s| s.dim))
            .unwrap_or(DEFAULT_INPUT_DIM),
        hidden_dims: raw.head.hidden_dims.unwrap_or_else(|| vec![DEFAULT_HIDDEN]),
        num_classes: raw.head.num_classes.unwrap_or(c),
    };
    if head.num_classes != c {
        return Err(Error::Config(format!(
            "head.num_classes = {} but profile {profile} has {c} classes",
            head.num_classes
        )));
    }
    if let Some(s) = &synthetic {
        if head.input_dim != s.dim {
            return Err(Error::Config(format!(
                "head.input_dim = {} but synthetic.dim = {}",
                head.input_dim, s.dim
            )));
        }
    }
    head.validate()?;

    let dd = DistillHyperparams::default();
    let distill = DistillHyperparams {
        alpha: raw.distill.alpha.unwrap_or(dd.alpha),
        tau: raw.distill.tau.unwrap_or(dd.tau),
        learning_rate: raw.distill.learning_rate.unwrap_or(dd.learning_rate),
        batch_size: raw.distill.batch_size.unwrap_or(dd.batch_size),
        max_epochs: raw.distill.max_epochs.unwrap_or(dd.max_epochs),
        patience: raw.distill.patience.unwrap_or(dd.patience),
        seed,
    };
    distill.validate().map_err(config_err("distill"))?;

    let dg = GateHyperparams::default();
    let gate = GateConfig {
        variant: raw
            .gate
            .variant
            .as_deref()
            .unwrap_or("concat_linear")
            .parse()
            .map_err(config_err("gate.variant"))?,
        hyper: GateHyperparams {
            learning_rate: raw.gate.learning_rate.unwrap_or(dg.learning_rate),
            batch_size: raw.gate.batch_size.unwrap_or(dg.batch_size),
            max_epochs: raw.gate.max_epochs.unwrap_or(dg.max_epochs),
            patience: raw.gate.patience.unwrap_or(dg.patience),
            experts: raw.gate.experts.unwrap_or(DEFAULT_MOE_EXPERTS),
            seed,
        },
    };
    gate.hyper.validate().map_err(config_err("gate"))?;

    let instructions = InstructionsConfig {
        kinds: raw
            .instructions
            .kinds
            .unwrap_or_else(|| vec![InstructionKind::Conversation, InstructionKind::Reasoning]),
        per_kind: raw.instructions.per_kind.unwrap_or(1),
    };
    if instructions.kinds.contains(&InstructionKind::Categorical) {
        return Err(Error::Config(
            "instructions.kinds lists generated kinds only (conversation, reasoning)".into(),
        ));
    }

    let ablate = AblateConfig {
        alpha_grid: raw
            .ablate
            .alpha_grid
            .unwrap_or_else(|| (1..=9).map(|k| k as f64 / 10.0).collect()),
        depth_grid: raw.ablate.depth_grid.unwrap_or_else(|| {
            DistillHeadConfig::depth_grid(head.input_dim, c)
                .into_iter()
                .map(|h| h.hidden_dims)
                .collect()
        }),
        gate_variants: match raw.ablate.gate_variants {
            None => GateVariant::ALL.to_vec(),
            Some(v) => v
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()
                .map_err(config_err("ablate.gate_variants"))?,
        },
        seeds: raw.ablate.seeds.unwrap_or_default(),
    };
    if let Some(a) = ablate.alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Config(format!(
            "ablate.alpha_grid: alpha must lie in [0, 1], got {a}"
        )));
    }

    let paths = PathsConfig {
        data_root: resolve_path(base, "data_root", raw.paths.data_root)?,
        index: resolve_path(base, "index", raw.paths.index)?,
        features: resolve_path(base, "features", raw.paths.features)?,
        teacher: resolve_path(base, "teacher", raw.paths.teacher)?,
        vlm: resolve_path(base, "vlm", raw.paths.vlm)?,
        replay: resolve_path(base, "replay", raw.paths.replay)?,
    };
    if synthetic.is_none() && paths.data_root.is_none() && paths.index.is_none() {
        return Err(Error::Config(
            "no data source: set paths.data_root, paths.index or a [synthetic] section".into(),
        ));
    }

    let vlm_decoding = match raw.endpoints.vlm_decoding {
        None => serde_json::Map::new(),
        Some(t) => match serde_json::to_value(t)
            .map_err(|e| Error::Config(format!("endpoints.vlm_decoding: {e}")))?
        {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("a TOML table serializes to an object"),
        },
    };
    let endpoints = EndpointsConfig {
        generator: endpoint(raw.endpoints.generator, "generator")?,
        encoder: endpoint(raw.endpoints.encoder, "encoder")?,
        vlm: endpoint(raw.endpoints.vlm, "vlm")?,
        vlm_decoding,
    };

    let out_dir = raw.out_dir.unwrap_or_else(|| PathBuf::from("runs"));
    let out_dir = if out_dir.is_absolute() {
        out_dir
    } else {
        base.join(out_dir)
    };
    Ok(RunConfig {
        profile,
        seed,
        out_dir,
        workers: raw.workers.unwrap_or(4).max(1),
        paths,
        split,
        head,
        distill,
        gate,
        synthetic,
        instructions,
        ablate,
        endpoints,
    })
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("invalid TOML: {e}")))
}

fn from_table(table: toml::Table, base: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    resolve(raw, base)
}

/// Validates config text; relative paths resolve against the working directory.
pub fn validate_config(text: &str) -> Result<RunConfig> {
    from_table(parse_table(text)?, Path::new("."))
}

/// Sets a dotted key to a value written in TOML syntax; bare words that
/// are not valid TOML are taken as strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let (key, value) = (key.trim(), value.trim());
    let value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just parsed"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key `{key}`")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads a config file, applies `--set` overrides and an optional seed.
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Config(format!("config file not found: {}", path.display()))
        }
        _ => Error::io(path, e),
    })?;
    let mut table = parse_table(&text)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(s) = seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    from_table(table, base)
}
