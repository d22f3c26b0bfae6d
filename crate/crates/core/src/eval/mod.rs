//! Accuracy, two-system complementarity, evaluation reports and ablation sweeps.

mod emit;
mod plot;
mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use emit::{emit_report, EmittedFiles, Reportable};
pub use plot::{bar_chart, line_chart, Series};
pub use sweep::{
    run_alpha_sweep, run_depth_sweep, run_gate_sweep, SweepKind, SweepPoint, SweepResult,
};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "{a} predictions for {b} ground-truth labels"
        )));
    }
    if a == 0 {
        return Err(Error::EmptyDataset("no predictions to score".into()));
    }
    Ok(())
}

/// Fraction of exact label matches. Use an empty string for a prediction
/// that could not be parsed; it never matches a real label.
pub fn accuracy<P: AsRef<str>, T: AsRef<str>>(predicted: &[P], truth: &[T]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Per-sample correctness partition of two systems, kept as counts so the
/// identities between buckets are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complementarity {
    pub both: usize,
    pub a_only: usize,
    pub b_only: usize,
    pub neither: usize,
}

impl Complementarity {
    pub fn total(&self) -> usize {
        self.both + self.a_only + self.b_only + self.neither
    }

    fn frac(&self, k: usize) -> f64 {
        k as f64 / self.total() as f64
    }

    pub fn both_frac(&self) -> f64 {
        self.frac(self.both)
    }

    pub fn a_only_frac(&self) -> f64 {
        self.frac(self.a_only)
    }

    pub fn b_only_frac(&self) -> f64 {
        self.frac(self.b_only)
    }

    pub fn neither_frac(&self) -> f64 {
        self.frac(self.neither)
    }

    /// `(both, a_only, b_only, neither)` as fractions.
    pub fn fractions(&self) -> [f64; 4] {
        [
            self.both_frac(),
            self.a_only_frac(),
            self.b_only_frac(),
            self.neither_frac(),
        ]
    }

    pub fn accuracy_a(&self) -> f64 {
        self.frac(self.both + self.a_only)
    }

    pub fn accuracy_b(&self) -> f64 {
        self.frac(self.both + self.b_only)
    }
}

pub fn complementarity<A, B, T>(
    preds_a: &[A],
    preds_b: &[B],
    truth: &[T],
) -> Result<Complementarity>
where
    A: AsRef<str>,
    B: AsRef<str>,
    T: AsRef<str>,
{
    check_lengths(preds_a.len(), truth.len())?;
    check_lengths(preds_b.len(), truth.len())?;
    let mut c = Complementarity::default();
    for ((a, b), t) in preds_a.iter().zip(preds_b).zip(truth) {
        match (a.as_ref() == t.as_ref(), b.as_ref() == t.as_ref()) {
            (true, true) => c.both += 1,
            (true, false) => c.a_only += 1,
            (false, true) => c.b_only += 1,
            (false, false) => c.neither += 1,
        }
    }
    Ok(c)
}

/// Accuracy of a selector that is right whenever either system is.
pub fn oracle_upper_bound(partition: &Complementarity) -> f64 {
    if partition.total() == 0 {
        return 0.0;
    }
    partition.frac(partition.both + partition.a_only + partition.b_only)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sample_id: String,
    /// `None` when the VLM answer could not be parsed.
    pub v1_label: Option<String>,
    pub v2_label: String,
    pub fused_label: String,
    pub truth: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    /// Keys: `vlm`, `student`, `fused`, plus any extra systems supplied.
    pub accuracy: BTreeMap<String, f64>,
    /// `a` is the VLM, `b` the student.
    pub partition: Complementarity,
    pub oracle_upper_bound: f64,
    /// Fused accuracy does not exceed the oracle bound.
    pub oracle_bound_holds: bool,
    pub param_counts: BTreeMap<String, u64>,
    pub trace: Vec<TraceRow>,
}

impl EvalReport {
    pub fn build(
        dataset: &str,
        trace: Vec<TraceRow>,
        extra_accuracy: BTreeMap<String, f64>,
        param_counts: BTreeMap<String, u64>,
    ) -> Result<Self> {
        let truth: Vec<&str> = trace.iter().map(|r| r.truth.as_str()).collect();
        let v1: Vec<&str> = trace
            .iter()
            .map(|r| r.v1_label.as_deref().unwrap_or(""))
            .collect();
        let v2: Vec<&str> = trace.iter().map(|r| r.v2_label.as_str()).collect();
        let fused: Vec<&str> = trace.iter().map(|r| r.fused_label.as_str()).collect();

        let partition = complementarity(&v1, &v2, &truth)?;
        let oracle = oracle_upper_bound(&partition);
        let mut acc = extra_accuracy;
        acc.insert("vlm".into(), accuracy(&v1, &truth)?);
        acc.insert("student".into(), accuracy(&v2, &truth)?);
        let fused_acc = accuracy(&fused, &truth)?;
        acc.insert("fused".into(), fused_acc);
        let holds = fused_acc <= oracle;
        if !holds {
            log::warn!("{dataset}: fused accuracy {fused_acc} exceeds the oracle bound {oracle}");
        }
        Ok(Self {
            dataset: dataset.into(),
            accuracy: acc,
            partition,
            oracle_upper_bound: oracle,
            oracle_bound_holds: holds,
            param_counts,
            trace,
        })
    }
}

/// One sample of a two-system comparison; `None` marks an unparseable answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub sample_id: String,
    pub a: Option<String>,
    pub b: Option<String>,
    pub truth: String,
}

/// Standalone comparison of two predictors, such as the teacher and the VLM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityReport {
    pub dataset: String,
    pub system_a: String,
    pub system_b: String,
    pub partition: Complementarity,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub oracle_upper_bound: f64,
    pub rows: Vec<PairRow>,
}

impl ComplementarityReport {
    pub fn build(
        dataset: &str,
        system_a: &str,
        system_b: &str,
        rows: Vec<PairRow>,
    ) -> Result<Self> {
        let a: Vec<&str> = rows.iter().map(|r| r.a.as_deref().unwrap_or("")).collect();
        let b: Vec<&str> = rows.iter().map(|r| r.b.as_deref().unwrap_or("")).collect();
        let t: Vec<&str> = rows.iter().map(|r| r.truth.as_str()).collect();
        let partition = complementarity(&a, &b, &t)?;
        Ok(Self {
            dataset: dataset.into(),
            system_a: system_a.into(),
            system_b: system_b.into(),
            accuracy_a: partition.accuracy_a(),
            accuracy_b: partition.accuracy_b(),
            oracle_upper_bound: oracle_upper_bound(&partition),
            partition,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        assert_eq!(accuracy(&["b", "a"], &["a", "b"]).unwrap(), 0.0);
        assert_eq!(
            accuracy(&["a", "b", "c", "x"], &["a", "b", "c", "d"]).unwrap(),
            0.75
        );
        assert!(matches!(
            accuracy(&["a"], &["a", "b"]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            accuracy::<&str, &str>(&[], &[]),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn partition_examples() {
        let truth = ["x", "x", "x", "x"];
        let c = complementarity(&["x", "x", "y", "y"], &["y", "x", "x", "y"], &truth).unwrap();
        assert_eq!(c.fractions(), [0.25, 0.25, 0.25, 0.25]);
        assert_eq!(oracle_upper_bound(&c), 0.75);
        let same = complementarity(&truth, &truth, &truth).unwrap();
        assert_eq!(same.fractions(), [1.0, 0.0, 0.0, 0.0]);

        let p = |both, a_only, b_only, neither| Complementarity {
            both,
            a_only,
            b_only,
            neither,
        };
        assert_eq!(oracle_upper_bound(&p(6, 0, 0, 4)), 0.6);
        assert_eq!(oracle_upper_bound(&p(0, 0, 0, 5)), 0.0);
        assert_eq!(oracle_upper_bound(&p(0, 3, 0, 0)), 1.0);
    }

    #[test]
    fn report_flags_and_unparseable_vlm() {
        let row = |id: &str, v1: Option<&str>, v2: &str, f: &str, t: &str| TraceRow {
            sample_id: id.into(),
            v1_label: v1.map(Into::into),
            v2_label: v2.into(),
            fused_label: f.into(),
            truth: t.into(),
        };
        let r = EvalReport::build(
            "toy",
            vec![
                row("1", None, "a", "a", "a"),
                row("2", Some("b"), "a", "b", "b"),
                row("3", Some("a"), "a", "a", "b"),
            ],
            BTreeMap::new(),
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(r.accuracy["vlm"], 1.0 / 3.0);
        assert_eq!(
            r.partition,
            Complementarity {
                both: 0,
                a_only: 1,
                b_only: 1,
                neither: 1
            }
        );
        assert!(r.oracle_bound_holds);
    }

    proptest! {
        #[test]
        fn partition_identities(rows in prop::collection::vec((0u8..3, 0u8..3, 0u8..3), 1..200)) {
            let name = |x: u8| ["p", "q", "r"][x as usize];
            let a: Vec<_> = rows.iter().map(|r| name(r.0)).collect();
            let b: Vec<_> = rows.iter().map(|r| name(r.1)).collect();
            let t: Vec<_> = rows.iter().map(|r| name(r.2)).collect();
            let c = complementarity(&a, &b, &t).unwrap();
            prop_assert_eq!(c.total(), rows.len());
            prop_assert_eq!(c.accuracy_a(), accuracy(&a, &t).unwrap());
            prop_assert_eq!(c.accuracy_b(), accuracy(&b, &t).unwrap());
            let oracle = oracle_upper_bound(&c);
            prop_assert!(oracle >= c.accuracy_a() && oracle >= c.accuracy_b());
            prop_assert!((c.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
