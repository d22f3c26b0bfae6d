//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use emokd::checkpoint::payload_path;
use emokd::data::{
    categorical_response, render_categorical_question, split_index, DatasetProfile, Sample,
    SampleIndex, SplitSpec,
};
use emokd::distill::{
    ce_loss, evaluate_head, kd_loss, param_count, total_loss, train_distill_head, DistillData,
    DistillHeadConfig, DistillHyperparams, HEAD_CHECKPOINT,
};
use emokd::eval::{accuracy, complementarity, oracle_upper_bound};
use emokd::gating::{
    evaluate_gate, gate_param_count, train_gate, GateExample, GateHyperparams, GateVariant,
    GATE_CHECKPOINT,
};
use emokd::io_util::file_digest;
use emokd::labels::argmax;
use emokd::pipeline::{
    cmd_evaluate, cmd_train_distill, cmd_train_gate, validate_config, RunContext,
};
use emokd::predictors::{generate_synthetic, parse_vlm_response, SyntheticDataset, SyntheticSpec};
use emokd::{one_hot, softened_softmax, Error, LabelSpace, LogitVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lv(space: &LabelSpace, v: &[f64]) -> LogitVector {
    LogitVector::new(space.clone(), v.to_vec()).unwrap()
}

fn parameter_counts() -> Check {
    let rows: [(&[usize], usize, usize); 5] = [
        (&[1024], 3_679_240, 3_677_190),
        (&[1024, 512], 4_199_944, 4_198_918),
        (&[1024, 512, 256], 4_329_224, 4_328_710),
        (&[1024, 512, 256, 128], 4_361_096, 4_360_838),
        (&[1024, 512, 256, 128, 64], 4_368_840, 4_368_710),
    ];
    for (hidden, c8, c6) in rows {
        for (c, want) in [(8, c8), (6, c6)] {
            let got = param_count(&DistillHeadConfig::new(3584, hidden.to_vec(), c));
            ensure(got == want, || format!("{hidden:?} C={c}: {got} != {want}"))?;
        }
    }
    let gate = gate_param_count(GateVariant::ConcatLinear, 8, 0);
    ensure(gate == 136, || format!("concat_linear C=8: {gate}"))?;
    ensure(1_095_550_096 - 1_091_870_720 - 3_679_240 == gate, || {
        "system total arithmetic".into()
    })?;
    Ok("10 head configurations and concat_linear = 136 exact".into())
}

fn loss_math() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let space = LabelSpace::mikels8();
    for _ in 0..500 {
        let s: Vec<f64> = (0..8).map(|_| rng.random_range(-6.0..6.0)).collect();
        let t: Vec<f64> = (0..8).map(|_| rng.random_range(-6.0..6.0)).collect();
        let tau = rng.random_range(0.5..5.0);
        let kd = kd_loss(&lv(&space, &s), &lv(&space, &t), tau).unwrap();
        ensure(kd >= 0.0, || format!("negative KD {kd}"))?;
        // tau^2 prefactor against a plain probability-space KL.
        let soft = |z: &[f64]| {
            let e: Vec<f64> = z.iter().map(|v| (v / tau).exp()).collect();
            let sum: f64 = e.iter().sum();
            e.into_iter().map(|v| v / sum).collect::<Vec<_>>()
        };
        let (pt, ps) = (soft(&t), soft(&s));
        let kl: f64 = pt.iter().zip(&ps).map(|(a, b)| a * (a / b).ln()).sum();
        ensure((kd - tau * tau * kl).abs() < 1e-9, || {
            format!("prefactor: {kd} vs {}", tau * tau * kl)
        })?;
        let shifted: Vec<f64> = t.iter().map(|v| v + 3.0).collect();
        ensure(
            kd_loss(&lv(&space, &shifted), &lv(&space, &t), tau)
                .unwrap()
                .abs()
                < 1e-12,
            || "shift invariance".into(),
        )?;

        let label = space.label(rng.random_range(0..8)).to_string();
        let ce = ce_loss(&lv(&space, &s), &one_hot(&label, &space).unwrap()).unwrap();
        let p = soft_at(&s, space.index_of(&label).unwrap());
        ensure((ce + p.ln()).abs() < 1e-12, || {
            format!("ce {ce} vs -ln p {}", -p.ln())
        })?;

        ensure(total_loss(kd, ce, 0.0).unwrap() == ce, || {
            "alpha = 0".into()
        })?;
        ensure(total_loss(kd, ce, 1.0).unwrap() == kd, || {
            "alpha = 1".into()
        })?;
    }
    let b = LabelSpace::binary();
    let worked = kd_loss(&lv(&b, &[0.0, 0.0]), &lv(&b, &[2f64.ln(), 0.0]), 1.0).unwrap();
    ensure((worked - 0.056633).abs() < 1e-5, || {
        format!("worked example {worked}")
    })?;
    ensure(
        kd_loss(&lv(&b, &[0.3, 0.3]), &lv(&b, &[0.0, 0.0]), 2.0).unwrap() == 0.0,
        || "equal softened".into(),
    )?;
    Ok(format!("500 random cases; worked example = {worked:.6}"))
}

fn soft_at(z: &[f64], i: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
    (z[i] - m).exp() / sum
}

fn gradient_check() -> Check {
    let heads = 24u64;
    let worst = (0..heads).map(support::check_head).fold(0.0, f64::max);
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!(
        "{heads} heads x 9 (alpha, tau); max relative error {worst:.2e}"
    ))
}

fn all_samples(ds: &SyntheticDataset) -> Vec<Sample> {
    ds.sample_ids
        .iter()
        .zip(&ds.labels)
        .map(|(id, label)| Sample {
            sample_id: id.clone(),
            image_path: id.clone(),
            label: label.clone(),
        })
        .collect()
}

fn distillation_behavior() -> Check {
    let spec = SyntheticSpec::new(2000, 8, 32, 1.0, 0.7, 0.7, 4);
    let ds = generate_synthetic(&spec).unwrap();
    let data =
        DistillData::assemble(&all_samples(&ds), &ds.features, &ds.teacher, &ds.space).unwrap();
    let head = DistillHeadConfig::new(32, vec![64], 8);
    let hp = |alpha: f64| DistillHyperparams {
        alpha,
        learning_rate: 1e-2,
        max_epochs: 30,
        seed: 4,
        ..Default::default()
    };
    let train =
        |alpha: f64| train_distill_head(&data, &data, &head, &ds.space, &hp(alpha)).unwrap();

    let (kd_head, _) = train(1.0);
    let agreement = evaluate_head(&kd_head, &data, 1.0, 2.0)
        .unwrap()
        .teacher_agreement;
    ensure(agreement >= 0.95, || {
        format!("alpha=1 agreement {agreement}")
    })?;
    let (ce_head, _) = train(0.0);
    let acc = evaluate_head(&ce_head, &data, 0.0, 2.0).unwrap().accuracy;
    ensure(acc >= 0.99, || format!("alpha=0 train accuracy {acc}"))?;
    let kd_at = |alpha: f64| train(alpha).1.last().unwrap().l_kd;
    let (hi, lo) = (kd_at(0.9), kd_at(0.1));
    ensure(hi <= lo, || format!("L_KD(0.9) = {hi} > L_KD(0.1) = {lo}"))?;
    Ok(format!(
        "agreement {agreement:.4}, CE-only accuracy {acc:.4}, L_KD 0.9/0.1 = {hi:.4}/{lo:.4}"
    ))
}

struct GateSplit {
    train: Vec<GateExample>,
    val: Vec<GateExample>,
    test: Vec<GateExample>,
    v1_acc: f64,
    v2_acc: f64,
    oracle: f64,
}

fn gate_split(seed: u64) -> GateSplit {
    let ds = generate_synthetic(&SyntheticSpec::new(2000, 8, 8, 0.7, 0.7, 0.5, seed)).unwrap();
    let index = SampleIndex::new(DatasetProfile::Fi, all_samples(&ds)).unwrap();
    let splits = split_index(
        &index,
        &SplitSpec {
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    let examples = |part: &SampleIndex| -> Vec<GateExample> {
        part.entries()
            .iter()
            .map(|s| {
                let teacher = &ds.teacher.require(&s.sample_id, "teacher").unwrap().logits;
                let v2 = softened_softmax(teacher, 1.0).unwrap();
                GateExample::new(ds.vlm.require(&s.sample_id, "vlm").unwrap(), &v2, &s.label)
                    .unwrap()
            })
            .collect()
    };
    let test: Vec<&Sample> = splits.test.entries().iter().collect();
    let truth: Vec<&str> = test.iter().map(|s| s.label.as_str()).collect();
    let v1: Vec<&str> = test
        .iter()
        .map(|s| {
            ds.vlm
                .require(&s.sample_id, "vlm")
                .unwrap()
                .label()
                .unwrap_or("")
        })
        .collect();
    let v2: Vec<&str> = test
        .iter()
        .map(|s| {
            ds.space.label(argmax(
                ds.teacher
                    .require(&s.sample_id, "teacher")
                    .unwrap()
                    .logits
                    .values(),
            ))
        })
        .collect();
    let partition = complementarity(&v1, &v2, &truth).unwrap();
    GateSplit {
        train: examples(&splits.train),
        val: examples(&splits.val),
        test: examples(&splits.test),
        v1_acc: accuracy(&v1, &truth).unwrap(),
        v2_acc: accuracy(&v2, &truth).unwrap(),
        oracle: oracle_upper_bound(&partition),
    }
}

fn gate_headroom() -> Check {
    let seeds = 0..5u64;
    let space = LabelSpace::mikels8();
    let (mut gate_sum, mut v1_sum, mut v2_sum) = (0.0, 0.0, 0.0);
    for seed in seeds.clone() {
        let data = gate_split(seed);
        let hp = GateHyperparams {
            learning_rate: 1e-2,
            seed,
            ..Default::default()
        };
        for variant in GateVariant::ALL {
            let (params, history) = train_gate(&data.train, &data.val, variant, &space, &hp)
                .map_err(|e| format!("seed {seed} {variant:?}: {e}"))?;
            ensure(history.epochs.iter().all(|e| e.l_total.is_finite()), || {
                format!("{variant:?} loss not finite")
            })?;
            if variant == GateVariant::ConcatLinear {
                let acc = evaluate_gate(&params, &data.test).unwrap().accuracy;
                ensure(acc <= data.oracle, || {
                    format!("seed {seed}: gate {acc} above oracle {}", data.oracle)
                })?;
                gate_sum += acc;
            }
        }
        v1_sum += data.v1_acc;
        v2_sum += data.v2_acc;
    }
    let n = seeds.count() as f64;
    let (gate, best) = (gate_sum / n, (v1_sum / n).max(v2_sum / n));
    ensure(gate >= best - 0.02, || {
        format!("mean gate {gate} < best single {best} - 0.02")
    })?;
    Ok(format!(
        "mean concat gate {gate:.4} vs best single {best:.4}; 5 variants x 5 seeds trained"
    ))
}

fn complementarity_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names = ["p", "q", "r", "s"];
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let mut draw = || {
            (0..n)
                .map(|_| names[rng.random_range(0..4)])
                .collect::<Vec<_>>()
        };
        let (a, b, t) = (draw(), draw(), draw());
        let c = complementarity(&a, &b, &t).unwrap();
        let hits = |x: &[&str]| x.iter().zip(&t).filter(|(p, q)| p == q).count();
        ensure(c.total() == n, || "partition total".into())?;
        ensure(c.both + c.a_only == hits(&a), || {
            "accuracy(A) = both + a_only".into()
        })?;
        ensure(c.both + c.b_only == hits(&b), || {
            "accuracy(B) = both + b_only".into()
        })?;
        ensure(
            (c.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-12,
            || "fractions sum".into(),
        )?;
        let oracle = oracle_upper_bound(&c);
        ensure(oracle >= c.accuracy_a() && oracle >= c.accuracy_b(), || {
            "oracle >= max".into()
        })?;
    }
    let specs = [
        (1000, 8, 0.7, 0.7, 0.5),
        (600, 6, 0.55, 0.8, 0.4),
        (333, 2, 0.9, 0.6, 0.6),
    ];
    for (n, c, ta, va, ov) in specs {
        let mut spec = SyntheticSpec::new(n, c, 4, ta, va, ov, 7);
        spec.confidence_wrong = 0.5 + 0.5 / c as f64;
        let ds = generate_synthetic(&spec).unwrap();
        let t: Vec<&str> = ds
            .teacher
            .iter()
            .map(|r| ds.space.label(argmax(r.logits.values())))
            .collect();
        let v: Vec<&str> = ds.vlm.iter().map(|r| r.label().unwrap_or("")).collect();
        let p = complementarity(&t, &v, &ds.labels).unwrap();
        let want = spec.bucket_counts().unwrap();
        ensure(
            (p.both, p.a_only, p.b_only, p.neither)
                == (want.both, want.teacher_only, want.vlm_only, want.neither),
            || format!("n={n} C={c}: {p:?} vs {want:?}"),
        )?;
    }
    Ok("1000 random triples exact; 3 synthetic specs recovered exactly".into())
}

fn template_fidelity() -> Check {
    let expected = "Observe the image and select the emotion category that best matches this image from the \
                    following 8 categories: amusement, anger, awe, contentment, disgust, excitement, fear, and \
                    sadness. Answer in dictionary form as follows: {'emotion':'amusement'}";
    let rendered = render_categorical_question(&LabelSpace::mikels8());
    ensure(rendered == expected, || {
        format!("prompt differs: {rendered}")
    })?;
    let mut checked = 0;
    for space in [
        LabelSpace::mikels8(),
        LabelSpace::ekman6(),
        LabelSpace::binary(),
    ] {
        for label in space.labels() {
            let back = parse_vlm_response(&categorical_response(label), &space)
                .map_err(|e| e.to_string())?;
            ensure(&back == label, || format!("{label} parsed as {back}"))?;
            checked += 1;
        }
    }
    let oov = parse_vlm_response("{'emotion': 'joy'}", &LabelSpace::mikels8());
    ensure(matches!(oov, Err(Error::OutOfVocabulary { .. })), || {
        format!("joy gave {oov:?}")
    })?;
    Ok(format!(
        "prompt byte-exact; {checked} labels round-trip; 'joy' rejected"
    ))
}

const DETERMINISM_CONFIG: &str = "seed = 21\n[synthetic]\nn = 800\nnum_classes = 8\ndim = 16\n\
                                  [head]\nhidden_dims = [32]\n[distill]\nmax_epochs = 10\nlearning_rate = 0.01\n\
                                  [gate]\nmax_epochs = 10\nlearning_rate = 0.01\n";

fn pipeline_run(out: &std::path::Path) -> Result<(Vec<Vec<u8>>, bool), String> {
    let mut cfg = validate_config(DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    cfg.out_dir = out.to_path_buf();
    let ctx = RunContext::new(cfg).map_err(|e| e.to_string())?;
    let ckpt = ctx.checkpoint_dir();
    cmd_train_distill(&ctx).map_err(|e| e.to_string())?;
    let head = payload_path(&ckpt, HEAD_CHECKPOINT);
    let before = file_digest(&head).map_err(|e| e.to_string())?;
    cmd_train_gate(&ctx).map_err(|e| e.to_string())?;
    let unchanged = file_digest(&head).map_err(|e| e.to_string())? == before;
    cmd_evaluate(&ctx).map_err(|e| e.to_string())?;
    let files = [
        head,
        payload_path(&ckpt, GATE_CHECKPOINT),
        ctx.dir.join("summary/fi_eval.summary.json"),
    ];
    let bytes = files
        .iter()
        .map(|p| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display())))
        .collect::<Result<_, _>>()?;
    Ok((bytes, unchanged))
}

fn pipeline_determinism() -> Check {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, frozen_a) = pipeline_run(a.path())?;
    let (second, frozen_b) = pipeline_run(b.path())?;
    ensure(frozen_a && frozen_b, || {
        "head checkpoint changed during gate training".into()
    })?;
    for (name, (x, y)) in ["head payload", "gate payload", "evaluation summary"]
        .iter()
        .zip(first.iter().zip(&second))
    {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok("head/gate payloads and summary identical across two out dirs; head digest frozen".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("parameter counts", parameter_counts),
        ("loss math", loss_math),
        ("gradient correctness", gradient_check),
        ("distillation behavior", distillation_behavior),
        ("gate fusion headroom", gate_headroom),
        ("complementarity algebra", complementarity_algebra),
        ("template and parsing fidelity", template_fidelity),
        ("pipeline determinism", pipeline_determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
