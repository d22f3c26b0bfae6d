use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Instructions,
    Distill,
    Gate,
}

impl Stage {
    fn previous(self) -> Option<Stage> {
        match self {
            Stage::Instructions => None,
            Stage::Distill => Some(Stage::Instructions),
            Stage::Gate => Some(Stage::Distill),
        }
    }

    fn later(self) -> &'static [Stage] {
        match self {
            Stage::Instructions => &[Stage::Distill, Stage::Gate],
            Stage::Distill => &[Stage::Gate],
            Stage::Gate => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Instructions => "instructions",
            Stage::Distill => "distill",
            Stage::Gate => "gate",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub instructions: bool,
    pub distill: bool,
    pub gate: bool,
}

impl StageFlags {
    fn slot(&mut self, stage: Stage) -> &mut bool {
        match stage {
            Stage::Instructions => &mut self.instructions,
            Stage::Distill => &mut self.distill,
            Stage::Gate => &mut self.gate,
        }
    }

    pub fn get(&self, stage: Stage) -> bool {
        match stage {
            Stage::Instructions => self.instructions,
            Stage::Distill => self.distill,
            Stage::Gate => self.gate,
        }
    }
}

/// Per-run record of completed stages, checkpoint digests and metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// The validated configuration as TOML text.
    pub config: String,
    pub stages: StageFlags,
    /// How a stage was satisfied when not by its own command.
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    #[serde(default)]
    pub digests: BTreeMap<String, String>,
    #[serde(default)]
    pub metrics: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(run_id: &str, config: &str) -> Self {
        Self {
            run_id: run_id.into(),
            config: config.into(),
            stages: StageFlags::default(),
            notes: BTreeMap::new(),
            digests: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join(MANIFEST_FILE)
    }

    /// Loads the manifest in `run_dir`, or starts a fresh one.
    pub fn load_or_new(run_dir: &Path, run_id: &str, config: &str) -> Result<Self> {
        let path = Self::path(run_dir);
        if !path.exists() {
            return Ok(Self::new(run_id, config));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if m.run_id != run_id {
            return Err(Error::Schema {
                path,
                reason: format!("manifest belongs to run {}, expected {run_id}", m.run_id),
            });
        }
        Ok(m)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        write_atomic(&Self::path(run_dir), text.as_bytes())
    }

    /// Fails with `MissingArtifact` unless `stage` has completed.
    pub fn require(&self, stage: Stage) -> Result<()> {
        if self.stages.get(stage) {
            Ok(())
        } else {
            Err(Error::MissingArtifact(format!(
                "stage `{stage}` has not completed for run {}",
                self.run_id
            )))
        }
    }

    /// Marks `stage` complete. Its predecessor must be complete; later
    /// stages are invalidated because they were built on older outputs.
    pub fn complete(&mut self, stage: Stage) -> Result<()> {
        if let Some(prev) = stage.previous() {
            self.require(prev)?;
        }
        *self.stages.slot(stage) = true;
        for &later in stage.later() {
            *self.stages.slot(later) = false;
        }
        Ok(())
    }
}
