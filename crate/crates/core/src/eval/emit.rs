use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::plot::{bar_chart, line_chart, Series};
use super::sweep::{SweepKind, SweepResult};
use super::{ComplementarityReport, EvalReport};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

/// Something that can be written as summary, table and plot files.
pub trait Reportable {
    /// File stem, e.g. `alpha_sweep`.
    fn stem(&self) -> String;
    fn summary(&self) -> serde_json::Value;
    fn table(&self) -> String;
    fn plot(&self) -> String;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmittedFiles {
    pub summary: PathBuf,
    pub table: PathBuf,
    pub plot: PathBuf,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl Reportable for EvalReport {
    fn stem(&self) -> String {
        format!("{}_eval", self.dataset)
    }

    fn summary(&self) -> serde_json::Value {
        let [both, a_only, b_only, neither] = self.partition.fractions();
        json!({
            "dataset": self.dataset,
            "accuracy": self.accuracy,
            "partition": {
                "counts": self.partition,
                "fractions": {"both": both, "vlm_only": a_only, "student_only": b_only, "neither": neither},
            },
            "oracle_upper_bound": self.oracle_upper_bound,
            "oracle_bound_holds": self.oracle_bound_holds,
            "param_counts": self.param_counts,
            "samples": self.trace.len(),
        })
    }

    fn table(&self) -> String {
        let mut out = String::from("sample_id,v1_label,v2_label,fused_label,truth\n");
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&r.sample_id),
                csv_field(r.v1_label.as_deref().unwrap_or("")),
                csv_field(&r.v2_label),
                csv_field(&r.fused_label),
                csv_field(&r.truth)
            )
            .unwrap();
        }
        out
    }

    fn plot(&self) -> String {
        let labels: Vec<String> = ["both", "vlm_only", "student_only", "neither"]
            .map(String::from)
            .to_vec();
        bar_chart(
            &format!("{}: VLM / student complementarity", self.dataset),
            "fraction",
            &labels,
            &self.partition.fractions(),
        )
    }
}

impl Reportable for SweepResult {
    fn stem(&self) -> String {
        self.kind.file_stem().to_string()
    }

    fn summary(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }

    fn table(&self) -> String {
        let mut out = String::from("label,value,accuracy,accuracy_std,l_kd,param_count\n");
        for p in &self.points {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{},{}",
                csv_field(&p.label),
                p.value,
                p.accuracy,
                p.accuracy_std,
                opt(p.l_kd),
                opt(p.param_count)
            )
            .unwrap();
        }
        out
    }

    fn plot(&self) -> String {
        let labels: Vec<String> = self.points.iter().map(|p| p.label.clone()).collect();
        let acc = Series::new("accuracy", self.points.iter().map(|p| p.accuracy).collect());
        match self.kind {
            SweepKind::Alpha => {
                let kd = Series::new(
                    "final L_KD",
                    self.points
                        .iter()
                        .map(|p| p.l_kd.unwrap_or(f64::NAN))
                        .collect(),
                );
                line_chart(
                    "Accuracy and KD loss vs alpha",
                    "alpha",
                    &labels,
                    &[acc, kd],
                )
            }
            SweepKind::Depth => {
                line_chart("Accuracy vs head depth", "hidden layers", &labels, &[acc])
            }
            SweepKind::Gate => bar_chart(
                "Accuracy per gate variant",
                "accuracy",
                &labels,
                &acc.values,
            ),
        }
    }
}

impl Reportable for ComplementarityReport {
    fn stem(&self) -> String {
        "complementarity".into()
    }

    fn summary(&self) -> serde_json::Value {
        let [both, a_only, b_only, neither] = self.partition.fractions();
        json!({
            "dataset": self.dataset,
            "systems": [self.system_a, self.system_b],
            "counts": self.partition,
            "fractions": {
                "both": both,
                format!("{}_only", self.system_a): a_only,
                format!("{}_only", self.system_b): b_only,
                "neither": neither,
            },
            "accuracy": {self.system_a.clone(): self.accuracy_a, self.system_b.clone(): self.accuracy_b},
            "oracle_upper_bound": self.oracle_upper_bound,
            "samples": self.rows.len(),
        })
    }

    fn table(&self) -> String {
        let mut out = format!(
            "sample_id,{},{},truth\n",
            csv_field(&self.system_a),
            csv_field(&self.system_b)
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                csv_field(&r.sample_id),
                csv_field(r.a.as_deref().unwrap_or("")),
                csv_field(r.b.as_deref().unwrap_or("")),
                csv_field(&r.truth)
            )
            .unwrap();
        }
        out
    }

    fn plot(&self) -> String {
        let labels = vec![
            "both".to_string(),
            format!("{}_only", self.system_a),
            format!("{}_only", self.system_b),
            "neither".to_string(),
        ];
        bar_chart(
            &format!("{}: complementarity", self.dataset),
            "fraction",
            &labels,
            &self.partition.fractions(),
        )
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `summary/<stem>.summary.json`, `tables/<stem>.table.csv` and
/// `plots/<stem>.plot.svg` under `run_dir`. `config` is echoed verbatim in
/// the summary when given.
pub fn emit_report(
    item: &impl Reportable,
    run_dir: &Path,
    config: Option<&str>,
) -> Result<EmittedFiles> {
    let stem = item.stem();
    let dirs = ["summary", "tables", "plots"].map(|d| run_dir.join(d));
    for d in &dirs {
        ensure_dir(d)?;
    }
    let files = EmittedFiles {
        summary: dirs[0].join(format!("{stem}.summary.json")),
        table: dirs[1].join(format!("{stem}.table.csv")),
        plot: dirs[2].join(format!("{stem}.plot.svg")),
    };
    let summary = json!({ "name": stem, "config": config, "result": item.summary() });
    let mut text = serde_json::to_string_pretty(&summary).expect("serializable");
    text.push('\n');
    write_atomic(&files.summary, text.as_bytes())?;
    write_atomic(&files.table, item.table().as_bytes())?;
    write_atomic(&files.plot, item.plot().as_bytes())?;
    Ok(files)
}
