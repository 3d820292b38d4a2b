//! Dataset manifests and run configuration.
//!
//! A manifest is the machine-checkable description of a dataset: which
//! cases exist, where their image and (optionally) label files live, and
//! which acquisition domain they belong to. The label asymmetry of the
//! task — source-domain cases carry labels, target-domain cases do not —
//! is explicit here rather than encoded in directory conventions.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentSpec;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;

/// MR acquisition domain of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Contrast-enhanced T1: the labeled source domain.
    #[serde(rename = "ceT1")]
    CeT1,
    /// High-resolution T2: the unlabeled target domain.
    #[serde(rename = "hrT2")]
    HrT2,
}

/// One dataset case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    /// Unique case identifier; used for output directory names.
    pub case_id: String,
    /// Path to the image volume.
    pub image: PathBuf,
    /// Path to the label volume, if the case is annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<PathBuf>,
    /// Acquisition domain.
    pub domain: Domain,
    /// True for cases produced by augmentation.
    #[serde(default)]
    pub augmented: bool,
}

/// A named list of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Dataset name, free-form.
    pub dataset: String,
    /// The cases, in manifest order.
    pub cases: Vec<CaseEntry>,
}

impl DatasetManifest {
    /// Load a manifest from JSON, checking case-id uniqueness.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        manifest.check_unique_ids()?;
        Ok(manifest)
    }

    /// Write the manifest as pretty JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Error when two cases share an id.
    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for case in &self.cases {
            if !seen.insert(case.case_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate case_id '{}'",
                    case.case_id
                )));
            }
        }
        Ok(())
    }

    /// Error when any referenced file is missing.
    pub fn check_files_exist(&self) -> Result<()> {
        for case in &self.cases {
            if !case.image.exists() {
                return Err(Error::Manifest(format!(
                    "case '{}': image file {} does not exist",
                    case.case_id,
                    case.image.display()
                )));
            }
            if let Some(label) = &case.label {
                if !label.exists() {
                    return Err(Error::Manifest(format!(
                        "case '{}': label file {} does not exist",
                        case.case_id,
                        label.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything that parameterizes a toolkit run. Persisted next to
/// outputs so results can be traced back to the exact settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Preprocessing parameters.
    pub pipeline: PipelineConfig,
    /// Augmentation parameters.
    pub augment: AugmentSpec,
    /// Seed for every randomized step (currently the k-fold shuffle).
    pub seed: u64,
    /// Fold count for cross-validation splits.
    pub folds: usize,
    /// Worker-pool size for case-level parallelism.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            augment: AugmentSpec::default(),
            seed: 0,
            folds: 5,
            jobs: 1,
        }
    }
}

/// Filename the run configuration is persisted under.
pub const RUN_CONFIG_NAME: &str = "run_config.json";

impl RunConfig {
    /// Load a run config from JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Check all nested parameter ranges.
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.augment.validate()?;
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "folds must be >= 2, got {}",
                self.folds
            )));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }

    /// Persist the config as `run_config.json` inside `dir`.
    pub fn save_into(&self, dir: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(dir.as_ref().join(RUN_CONFIG_NAME), json)?;
        Ok(())
    }

    /// Compare against the config previously persisted in `dir`, if any.
    /// Returns `Ok(false)` when no recorded config exists, `Ok(true)` on
    /// a match, and an error describing the first difference otherwise.
    pub fn check_provenance(&self, dir: impl AsRef<Path>) -> Result<bool> {
        let path = dir.as_ref().join(RUN_CONFIG_NAME);
        if !path.exists() {
            return Ok(false);
        }
        let recorded = Self::load(&path)?;
        if recorded != *self {
            return Err(Error::Config(format!(
                "outputs in {} were produced by a different configuration \
                 (recorded {}, see {})",
                dir.as_ref().display(),
                serde_json::to_string(&recorded).expect("config serializes"),
                path.display()
            )));
        }
        Ok(true)
    }
}
