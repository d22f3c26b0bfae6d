//! Config-driven orchestration of the three training stages.
//!
//! Each run lives in `<out_dir>/<run_id>/` with a `manifest.json` recording
//! completed stages, checkpoint digests and headline metrics.

mod config;
mod manifest;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::checkpoint::payload_path;
use crate::data::{
    build_categorical_triplet, generate_descriptive_batch, read_index, read_triplets, scan_dataset,
    sort_triplets, split_index, write_index, write_triplets, RemoteTextClient, ReplayTextClient,
    Sample, SampleIndex, TextGenerationClient,
};
use crate::distill::{
    evaluate_head, load_head, param_count, save_head, student_distribution, train_distill_head,
    DistillData, DistillHead, DistillHeadConfig, HEAD_CHECKPOINT,
};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, run_alpha_sweep, run_depth_sweep, run_gate_sweep, ComplementarityReport,
    EvalReport, PairRow, Reportable, SweepKind, TraceRow,
};
use crate::gating::{
    evaluate_gate, fuse_predict, load_gate, save_gate, train_gate, GateExample, GATE_CHECKPOINT,
};
use crate::io_util::{file_digest, write_atomic};
use crate::labels::{argmax, argmax_label, LabelSpace};
use crate::predictors::{
    extract_features, generate_synthetic, load_feature_file, load_teacher_file, load_vlm_file,
    predict_vlm, write_feature_file, write_teacher_file, write_vlm_file, FeatureSet,
    RemoteEncoderClient, RemoteVlmClient, SyntheticDataset, TeacherSet, VlmSet,
};
use crate::training::TrainingHistory;

pub use config::{
    apply_override, load_config, validate_config, AblateConfig, EndpointsConfig, GateConfig,
    InstructionsConfig, PathsConfig, RunConfig, DEFAULT_HIDDEN, DEFAULT_INPUT_DIM,
};
pub use manifest::{RunManifest, Stage, StageFlags, MANIFEST_FILE};

/// What a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub written: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// A validated config bound to its run directory.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: RunConfig,
    /// Full validated config, stored in the manifest.
    pub config_text: String,
    /// Config echoed in report summaries; omits output location and workers.
    pub echo: String,
    pub run_id: String,
    pub dir: PathBuf,
}

impl RunContext {
    pub fn new(config: RunConfig) -> Result<Self> {
        let run_id = config.run_id();
        let dir = config.out_dir.join(&run_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            config_text: config.to_toml(),
            echo: config.echo_toml(),
            run_id,
            dir,
            config,
        })
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        RunManifest::load_or_new(&self.dir, &self.run_id, &self.config_text)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.dir.join("checkpoints")
    }

    fn space(&self) -> LabelSpace {
        self.config.profile.space()
    }

    fn outcome(&self, written: Vec<PathBuf>, summary: serde_json::Value) -> Outcome {
        Outcome {
            run_dir: self.dir.clone(),
            written,
            summary,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Samples plus the synthetic generator output when the run is synthetic.
struct Source {
    index: SampleIndex,
    synthetic: Option<SyntheticDataset>,
}

fn load_source(ctx: &RunContext) -> Result<Source> {
    let cfg = &ctx.config;
    if let Some(spec) = &cfg.synthetic {
        let ds = generate_synthetic(spec)?;
        let samples = ds
            .sample_ids
            .iter()
            .zip(&ds.labels)
            .map(|(id, label)| Sample {
                sample_id: id.clone(),
                image_path: format!("synthetic/{id}"),
                label: label.clone(),
            })
            .collect();
        return Ok(Source {
            index: SampleIndex::new(cfg.profile, samples)?,
            synthetic: Some(ds),
        });
    }
    let index = if let Some(p) = &cfg.paths.index {
        let index = read_index(p)?;
        if index.profile != cfg.profile {
            return Err(Error::Config(format!(
                "sample index {} is for profile {}, config says {}",
                p.display(),
                index.profile,
                cfg.profile
            )));
        }
        index
    } else if let Some(root) = &cfg.paths.data_root {
        scan_dataset(root, cfg.profile)?
    } else {
        return Err(Error::Config("no data source configured".into()));
    };
    Ok(Source {
        index,
        synthetic: None,
    })
}

fn check_space(what: &str, found: &LabelSpace, expected: &LabelSpace) -> Result<()> {
    if found != expected {
        return Err(Error::Config(format!(
            "{what} uses label space `{}`, profile expects `{}`",
            found.name(),
            expected.name()
        )));
    }
    Ok(())
}

fn load_features(ctx: &RunContext, src: &Source) -> Result<FeatureSet> {
    let cfg = &ctx.config;
    let set = if let Some(ds) = &src.synthetic {
        ds.features.clone()
    } else if let Some(p) = &cfg.paths.features {
        load_feature_file(p)?
    } else if let Some(ep) = &cfg.endpoints.encoder {
        let cache = ctx.dir.join("cache").join("features.tsv");
        ensure_dir(cache.parent().expect("has parent"))?;
        let client = RemoteEncoderClient::new(ep);
        extract_features(
            src.index.entries(),
            &ctx.space(),
            &client,
            cfg.workers,
            Some(&cache),
        )?
    } else {
        return Err(Error::MissingArtifact(
            "encoder features: set paths.features or endpoints.encoder".into(),
        ));
    };
    check_space("feature file", set.space(), &ctx.space())?;
    Ok(set)
}

fn load_teacher(ctx: &RunContext, src: &Source) -> Result<TeacherSet> {
    let set = if let Some(ds) = &src.synthetic {
        ds.teacher.clone()
    } else if let Some(p) = &ctx.config.paths.teacher {
        load_teacher_file(p)?
    } else {
        return Err(Error::MissingArtifact(
            "teacher logits: set paths.teacher".into(),
        ));
    };
    check_space("teacher file", set.space(), &ctx.space())?;
    Ok(set)
}

fn vlm_available(cfg: &RunConfig) -> bool {
    cfg.synthetic.is_some() || cfg.paths.vlm.is_some() || cfg.endpoints.vlm.is_some()
}

fn load_vlm(ctx: &RunContext, src: &Source) -> Result<VlmSet> {
    let cfg = &ctx.config;
    let set = if let Some(ds) = &src.synthetic {
        ds.vlm.clone()
    } else if let Some(p) = &cfg.paths.vlm {
        load_vlm_file(p)?
    } else if let Some(ep) = &cfg.endpoints.vlm {
        let cache = ctx.dir.join("cache").join("vlm.jsonl");
        if cache.exists() {
            load_vlm_file(&cache)?
        } else {
            ensure_dir(cache.parent().expect("has parent"))?;
            let client = RemoteVlmClient::new(ep, cfg.endpoints.vlm_decoding.clone());
            let set = predict_vlm(src.index.entries(), &ctx.space(), &client, cfg.workers)?;
            write_vlm_file(&cache, &set)?;
            set
        }
    } else {
        return Err(Error::MissingArtifact(
            "VLM predictions: set paths.vlm or endpoints.vlm".into(),
        ));
    };
    check_space("VLM prediction file", set.space(), &ctx.space())?;
    Ok(set)
}

fn write_history(ctx: &RunContext, name: &str, history: &TrainingHistory) -> Result<PathBuf> {
    let dir = ctx.dir.join("tables");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{name}.table.csv"));
    write_atomic(&path, history.to_table().as_bytes())?;
    Ok(path)
}

/// Builds the categorical triplet for every sample and asks the generator for
/// descriptive ones. Samples already present in the output are skipped, so an
/// interrupted run can be resumed; on failures the partial file is kept and
/// an error is returned.
pub fn cmd_prepare_instructions(
    ctx: &RunContext,
    client: Option<&dyn TextGenerationClient>,
) -> Result<Outcome> {
    let cfg = &ctx.config;
    let src = load_source(ctx)?;
    let space = ctx.space();
    let dir = ctx.dir.join("instructions");
    ensure_dir(&dir)?;

    let index_path = dir.join("index.jsonl");
    write_index(&index_path, &src.index)?;
    let categorical: Vec<_> = src
        .index
        .entries()
        .iter()
        .map(|s| build_categorical_triplet(s, &space))
        .collect::<Result<_>>()?;
    let categorical_path = dir.join("categorical.jsonl");
    write_triplets(&categorical_path, &categorical)?;

    let descriptive_path = dir.join("descriptive.jsonl");
    let mut triplets = if descriptive_path.exists() {
        read_triplets(&descriptive_path)?
    } else {
        Vec::new()
    };
    let done: HashSet<&str> = triplets.iter().map(|t| t.image_ref.as_str()).collect();
    let pending: Vec<Sample> = src
        .index
        .entries()
        .iter()
        .filter(|s| !done.contains(s.image_path.as_str()))
        .cloned()
        .collect();

    let mut manifest = ctx.manifest()?;
    let mut failures = Vec::new();
    let generated = pending.len();
    if !pending.is_empty() {
        let owned: Box<dyn TextGenerationClient>;
        let client: &dyn TextGenerationClient = match client {
            Some(c) => c,
            None => {
                owned = if let Some(p) = &cfg.paths.replay {
                    Box::new(ReplayTextClient::load(p)?)
                } else if let Some(ep) = &cfg.endpoints.generator {
                    Box::new(RemoteTextClient::new(ep))
                } else {
                    return Err(Error::Config(
                        "no generator: set paths.replay or endpoints.generator".into(),
                    ));
                };
                owned.as_ref()
            }
        };
        let batch = generate_descriptive_batch(
            &pending,
            &cfg.instructions.kinds,
            cfg.instructions.per_kind,
            client,
            cfg.workers,
        );
        triplets.extend(batch.triplets);
        sort_triplets(&mut triplets);
        write_triplets(&descriptive_path, &triplets)?;
        failures = batch.failures;
    }

    let written = vec![index_path, categorical_path, descriptive_path.clone()];
    if let Some(first) = failures.into_iter().next() {
        return Err(first.annotate(format!(
            "instruction generation incomplete; partial output kept in {}",
            descriptive_path.display()
        )));
    }
    if generated > 0 || !manifest.stages.instructions {
        manifest.complete(Stage::Instructions)?;
        manifest.notes.remove("instructions");
        manifest.metrics.insert(
            "instructions".into(),
            json!({"categorical": categorical.len(), "descriptive": triplets.len()}),
        );
        manifest.save(&ctx.dir)?;
    }
    let summary = json!({"categorical": categorical.len(), "descriptive": triplets.len(), "generated_samples": generated});
    Ok(ctx.outcome(written, summary))
}

fn assemble(
    samples: &SampleIndex,
    features: &FeatureSet,
    teacher: &TeacherSet,
    space: &LabelSpace,
) -> Result<DistillData> {
    DistillData::assemble(samples.entries(), features, teacher, space)
}

fn check_feature_dim(features: &FeatureSet, head: &DistillHeadConfig) -> Result<()> {
    if features.dim() != head.input_dim {
        return Err(Error::Shape(format!(
            "features are {}-dimensional but the head expects input_dim = {}",
            features.dim(),
            head.input_dim
        )));
    }
    Ok(())
}

/// Stage 2: trains the distillation head on frozen features and teacher logits.
pub fn cmd_train_distill(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let mut manifest = ctx.manifest()?;
    if !manifest.stages.instructions {
        if !vlm_available(cfg) {
            return Err(Error::MissingArtifact(
                "stage `instructions`: run prepare-instructions or provide VLM predictions".into(),
            ));
        }
        manifest.complete(Stage::Instructions)?;
        manifest.notes.insert(
            "instructions".into(),
            "satisfied by available VLM predictions".into(),
        );
    }

    let src = load_source(ctx)?;
    let space = ctx.space();
    let features = load_features(ctx, &src)?;
    check_feature_dim(&features, &cfg.head)?;
    let teacher = load_teacher(ctx, &src)?;
    let splits = split_index(&src.index, &cfg.split)?;
    let train = assemble(&splits.train, &features, &teacher, &space)?;
    let val = assemble(&splits.val, &features, &teacher, &space)?;
    let test = assemble(&splits.test, &features, &teacher, &space)?;

    let (head, history) = train_distill_head(&train, &val, &cfg.head, &space, &cfg.distill)?;
    let best = *history.best().expect("at least one epoch");
    let test_eval = evaluate_head(&head, &test, cfg.distill.alpha, cfg.distill.tau)?;
    let metrics = json!({
        "best_epoch": history.best_epoch,
        "epochs_run": history.epochs.len(),
        "train_acc": best.train_acc,
        "val_acc": best.val_acc,
        "test_acc": test_eval.accuracy,
        "test_teacher_agreement": test_eval.teacher_agreement,
        "param_count": param_count(&cfg.head),
    });

    let ckpt = ctx.checkpoint_dir();
    ensure_dir(&ckpt)?;
    let digest = save_head(
        &ckpt,
        &head,
        cfg.distill.seed,
        history.best_epoch,
        metrics.clone(),
    )?;
    let table = write_history(ctx, "distill_history", &history)?;

    manifest.digests.insert("head".into(), digest);
    manifest.digests.remove("gate");
    manifest.metrics.insert("distill".into(), metrics.clone());
    manifest.complete(Stage::Distill)?;
    manifest.save(&ctx.dir)?;
    let written = vec![
        payload_path(&ckpt, HEAD_CHECKPOINT),
        ckpt.join(format!("{HEAD_CHECKPOINT}.json")),
        table,
    ];
    Ok(ctx.outcome(written, metrics))
}

/// Loads the stage-2 head and checks it is the one recorded in the manifest.
fn frozen_head(ctx: &RunContext, manifest: &RunManifest) -> Result<(DistillHead, String)> {
    manifest.require(Stage::Distill)?;
    let ckpt = ctx.checkpoint_dir();
    let (head, _) = load_head(&ckpt)?;
    let digest = file_digest(&payload_path(&ckpt, HEAD_CHECKPOINT))?;
    if manifest.digests.get("head") != Some(&digest) {
        return Err(Error::Checkpoint {
            path: payload_path(&ckpt, HEAD_CHECKPOINT),
            reason: "head payload differs from the digest recorded by train-distill".into(),
        });
    }
    Ok((head, digest))
}

fn gate_examples(
    samples: &SampleIndex,
    features: &FeatureSet,
    vlm: &VlmSet,
    head: &DistillHead,
) -> Result<Vec<GateExample>> {
    samples
        .entries()
        .iter()
        .map(|s| {
            let f = features.require(&s.sample_id, "feature")?;
            let v2 = student_distribution(&f.vector, head)?;
            GateExample::new(vlm.require(&s.sample_id, "VLM prediction")?, &v2, &s.label)
        })
        .collect()
}

/// Stage 3: trains the gate on frozen VLM answers and student distributions.
pub fn cmd_train_gate(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let mut manifest = ctx.manifest()?;
    let (head, head_digest) = frozen_head(ctx, &manifest)?;

    let src = load_source(ctx)?;
    let space = ctx.space();
    let features = load_features(ctx, &src)?;
    check_feature_dim(&features, head.config())?;
    let vlm = load_vlm(ctx, &src)?;
    let splits = split_index(&src.index, &cfg.split)?;
    let train = gate_examples(&splits.train, &features, &vlm, &head)?;
    let val = gate_examples(&splits.val, &features, &vlm, &head)?;
    let test = gate_examples(&splits.test, &features, &vlm, &head)?;

    let (gate, history) = train_gate(&train, &val, cfg.gate.variant, &space, &cfg.gate.hyper)?;
    let best = *history.best().expect("at least one epoch");
    let metrics = json!({
        "variant": cfg.gate.variant.name(),
        "best_epoch": history.best_epoch,
        "epochs_run": history.epochs.len(),
        "train_acc": best.train_acc,
        "val_acc": best.val_acc,
        "test_acc": evaluate_gate(&gate, &test)?.accuracy,
        "param_count": gate.param_count(),
    });
    let ckpt = ctx.checkpoint_dir();
    let digest = save_gate(&ckpt, &gate, cfg.gate.hyper.seed, metrics.clone())?;
    let table = write_history(ctx, "gate_history", &history)?;

    let after = file_digest(&payload_path(&ckpt, HEAD_CHECKPOINT))?;
    if after != head_digest {
        return Err(Error::Checkpoint {
            path: payload_path(&ckpt, HEAD_CHECKPOINT),
            reason: "head checkpoint changed during gate training".into(),
        });
    }
    manifest.digests.insert("gate".into(), digest);
    manifest.metrics.insert("gate".into(), metrics.clone());
    manifest.complete(Stage::Gate)?;
    manifest.save(&ctx.dir)?;
    let written = vec![
        payload_path(&ckpt, GATE_CHECKPOINT),
        ckpt.join(format!("{GATE_CHECKPOINT}.json")),
        table,
    ];
    Ok(ctx.outcome(written, metrics))
}

fn files_of(f: crate::eval::EmittedFiles) -> Vec<PathBuf> {
    vec![f.summary, f.table, f.plot]
}

/// Scores VLM, student, teacher (when available) and the fused system on the
/// test split and writes the report files.
pub fn cmd_evaluate(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let mut manifest = ctx.manifest()?;
    manifest.require(Stage::Gate)?;
    let (head, _) = frozen_head(ctx, &manifest)?;
    let (gate, _) = load_gate(&ctx.checkpoint_dir())?;

    let src = load_source(ctx)?;
    let space = ctx.space();
    let features = load_features(ctx, &src)?;
    let vlm = load_vlm(ctx, &src)?;
    let teacher = if src.synthetic.is_some() || cfg.paths.teacher.is_some() {
        Some(load_teacher(ctx, &src)?)
    } else {
        None
    };
    let splits = split_index(&src.index, &cfg.split)?;

    let mut trace = Vec::with_capacity(splits.test.len());
    let mut teacher_hits = 0usize;
    for s in splits.test.entries() {
        let v2 = student_distribution(&features.require(&s.sample_id, "feature")?.vector, &head)?;
        let pred = vlm.require(&s.sample_id, "VLM prediction")?;
        let (fused, _) = fuse_predict(&pred.gate_input(&space), v2.values(), &gate)?;
        if let Some(t) = &teacher {
            let logits = t.require(&s.sample_id, "teacher")?.logits.values();
            teacher_hits += usize::from(space.label(argmax(logits)) == s.label);
        }
        trace.push(TraceRow {
            sample_id: s.sample_id.clone(),
            v1_label: pred.label().map(String::from),
            v2_label: argmax_label(&v2).to_string(),
            fused_label: fused,
            truth: s.label.clone(),
        });
    }
    let mut extra = BTreeMap::new();
    if teacher.is_some() {
        extra.insert(
            "teacher".to_string(),
            teacher_hits as f64 / trace.len().max(1) as f64,
        );
    }
    let params = BTreeMap::from([
        ("head".to_string(), param_count(head.config()) as u64),
        ("gate".to_string(), gate.param_count() as u64),
    ]);
    let report = EvalReport::build(cfg.profile.name(), trace, extra, params)?;
    let files = emit_report(&report, &ctx.dir, Some(&ctx.echo))?;
    let summary = report.summary();
    manifest.metrics.insert("evaluate".into(), summary.clone());
    manifest.save(&ctx.dir)?;
    Ok(ctx.outcome(files_of(files), summary))
}

/// Runs one ablation sweep and writes its report files.
pub fn cmd_ablate(ctx: &RunContext, which: SweepKind) -> Result<Outcome> {
    let cfg = &ctx.config;
    let src = load_source(ctx)?;
    let space = ctx.space();
    let features = load_features(ctx, &src)?;
    check_feature_dim(&features, &cfg.head)?;
    let splits = split_index(&src.index, &cfg.split)?;
    let seeds = &cfg.ablate.seeds;

    let result = match which {
        SweepKind::Alpha | SweepKind::Depth => {
            let teacher = load_teacher(ctx, &src)?;
            let train = assemble(&splits.train, &features, &teacher, &space)?;
            let val = assemble(&splits.val, &features, &teacher, &space)?;
            if which == SweepKind::Alpha {
                run_alpha_sweep(
                    &cfg.ablate.alpha_grid,
                    &train,
                    &val,
                    &cfg.head,
                    &space,
                    &cfg.distill,
                    seeds,
                )?
            } else {
                let configs: Vec<DistillHeadConfig> = cfg
                    .ablate
                    .depth_grid
                    .iter()
                    .map(|h| DistillHeadConfig::new(cfg.head.input_dim, h.clone(), space.len()))
                    .collect();
                run_depth_sweep(&configs, &train, &val, &space, &cfg.distill, seeds)?
            }
        }
        SweepKind::Gate => {
            let manifest = ctx.manifest()?;
            let (head, _) = frozen_head(ctx, &manifest)?;
            let vlm = load_vlm(ctx, &src)?;
            let train = gate_examples(&splits.train, &features, &vlm, &head)?;
            let val = gate_examples(&splits.val, &features, &vlm, &head)?;
            let test = gate_examples(&splits.test, &features, &vlm, &head)?;
            run_gate_sweep(
                &cfg.ablate.gate_variants,
                &train,
                &val,
                &test,
                &space,
                &cfg.gate.hyper,
                seeds,
            )?
        }
    };
    let files = emit_report(&result, &ctx.dir, Some(&ctx.echo))?;
    let summary = result.summary();
    let mut manifest = ctx.manifest()?;
    manifest
        .metrics
        .insert(which.file_stem().into(), summary.clone());
    manifest.save(&ctx.dir)?;
    Ok(ctx.outcome(files_of(files), summary))
}

/// Teacher versus VLM correctness partition over every sample.
pub fn cmd_complementarity(ctx: &RunContext) -> Result<Outcome> {
    let src = load_source(ctx)?;
    let space = ctx.space();
    let teacher = load_teacher(ctx, &src)?;
    let vlm = load_vlm(ctx, &src)?;
    let rows = src
        .index
        .entries()
        .iter()
        .map(|s| {
            let logits = teacher.require(&s.sample_id, "teacher")?.logits.values();
            Ok(PairRow {
                sample_id: s.sample_id.clone(),
                a: Some(space.label(argmax(logits)).to_string()),
                b: vlm
                    .require(&s.sample_id, "VLM prediction")?
                    .label()
                    .map(String::from),
                truth: s.label.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ComplementarityReport::build(ctx.config.profile.name(), "teacher", "vlm", rows)?;
    let files = emit_report(&report, &ctx.dir, Some(&ctx.echo))?;
    let mut summary = report.summary();
    if let Some(ds) = &src.synthetic {
        let b = ds.buckets;
        let p = report.partition;
        let exact = (p.both, p.a_only, p.b_only, p.neither)
            == (b.both, b.teacher_only, b.vlm_only, b.neither);
        summary["requested_buckets"] = serde_json::to_value(b).expect("serializable");
        summary["matches_requested"] = json!(exact);
    }
    Ok(ctx.outcome(files_of(files), summary))
}

/// Writes the synthetic dataset as regular input files under `<run>/synthetic/`.
pub fn cmd_synth(ctx: &RunContext) -> Result<Outcome> {
    let spec = ctx
        .config
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("synth needs a [synthetic] section".into()))?;
    let src = load_source(ctx)?;
    let ds = src.synthetic.as_ref().expect("synthetic source");
    let dir = ctx.dir.join("synthetic");
    ensure_dir(&dir)?;
    let paths = [
        "index.jsonl",
        "features.tsv",
        "teacher.tsv",
        "vlm.jsonl",
        "buckets.json",
    ]
    .map(|f| dir.join(f));
    write_index(&paths[0], &src.index)?;
    write_feature_file(&paths[1], &ds.features)?;
    write_teacher_file(&paths[2], &ds.teacher)?;
    write_vlm_file(&paths[3], &ds.vlm)?;
    let summary = json!({"spec": spec, "buckets": ds.buckets, "samples": src.index.len()});
    let mut text = serde_json::to_string_pretty(&summary).expect("serializable");
    text.push('\n');
    write_atomic(&paths[4], text.as_bytes())?;
    Ok(ctx.outcome(paths.to_vec(), summary))
}
