//! Declarative pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::downsample::DownsampleConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::qc::QcConfig;
use crate::synth::{files, SynthConfig};
use crate::topology::TopologyConfig;

/// Input file locations. File names are relative to `dir`, which is
/// relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputPaths {
    pub dir: PathBuf,
    pub matrix: PathBuf,
    pub cell_ids: PathBuf,
    pub gene_ids: PathBuf,
    pub metadata: PathBuf,
    pub cell_ontology: PathBuf,
    pub gene_ontology: PathBuf,
    pub annotations: PathBuf,
    pub phylogeny: PathBuf,
}

impl Default for InputPaths {
    fn default() -> Self {
        InputPaths {
            dir: PathBuf::from("."),
            matrix: files::MATRIX.into(),
            cell_ids: files::CELL_IDS.into(),
            gene_ids: files::GENE_IDS.into(),
            metadata: files::METADATA.into(),
            cell_ontology: files::CELL_ONTOLOGY.into(),
            gene_ontology: files::GENE_ONTOLOGY.into(),
            annotations: files::ANNOTATIONS.into(),
            phylogeny: files::PHYLOGENY.into(),
        }
    }
}

impl InputPaths {
    pub fn resolve(&self, file: &Path) -> PathBuf {
        self.dir.join(file)
    }

    /// `(role, path)` for every input, in a fixed order.
    pub fn all(&self) -> Vec<(&'static str, PathBuf)> {
        vec![
            ("matrix", self.resolve(&self.matrix)),
            ("cell_ids", self.resolve(&self.cell_ids)),
            ("gene_ids", self.resolve(&self.gene_ids)),
            ("metadata", self.resolve(&self.metadata)),
            ("cell_ontology", self.resolve(&self.cell_ontology)),
            ("gene_ontology", self.resolve(&self.gene_ontology)),
            ("annotations", self.resolve(&self.annotations)),
            ("phylogeny", self.resolve(&self.phylogeny)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Also write node features as text.
    pub feature_tsv: bool,
    /// Materialize per-edge feature vectors.
    pub edge_features: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            feature_tsv: true,
            edge_features: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Supervised,
    ZeroShot,
    Clustering,
    CrossView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub tasks: Vec<EvalTask>,
    /// Independent split/clustering seeds per task.
    pub repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tasks: vec![EvalTask::Supervised, EvalTask::ZeroShot, EvalTask::Clustering, EvalTask::CrossView],
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default)]
    pub qc: QcConfig,
    #[serde(default)]
    pub downsample: DownsampleConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output: default_output(),
            inputs: InputPaths::default(),
            qc: QcConfig::default(),
            downsample: DownsampleConfig::default(),
            features: FeatureConfig::default(),
            topology: TopologyConfig::default(),
            export: ExportConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Stable 64-bit seed for a named consumer of the global seed.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let digest = Sha256::digest(format!("{global}/{label}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path, source_name: &str) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{source_name}: {}", e.message().trim())))?;
        cfg.inputs.dir = base_dir.join(&cfg.inputs.dir);
        cfg.output = base_dir.join(&cfg.output);
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base, &path.display().to_string())
    }

    /// Sets the global seed and every seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.downsample.seed = derive_seed(seed, "downsample");
        self.features.pca_seed = derive_seed(seed, "pca");
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.qc.validate()?;
        self.features.validate()?;
        self.topology.validate()?;
        self.synth.validate()?;
        if self.eval.repeats == 0 {
            return Err(Error::Config("eval.repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks that every input file exists.
    pub fn check_inputs(&self) -> Result<()> {
        for (role, path) in self.inputs.all() {
            if !path.is_file() {
                return Err(Error::Config(format!("input `{role}` not found: {}", path.display())));
            }
        }
        Ok(())
    }

    /// The stage settings that determine graph content, without file
    /// locations.
    pub fn stage_settings(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "qc": self.qc,
            "downsample": self.downsample,
            "features": self.features,
            "topology": self.topology,
            "export": self.export,
        })
    }

    /// SHA-256 of [`stage_settings`](Self::stage_settings) in canonical JSON.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.stage_settings().to_string().as_bytes()))
    }
}
