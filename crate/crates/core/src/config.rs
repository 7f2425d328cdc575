//! The single JSON document that drives every pipeline command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{PreprocessParams, SynthParams};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::model::{Tiny3dConfig, TrainConfig};
use crate::protocols::{Experiment, ExperimentSpec};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_ENV: &str = "PITCHFLOW_OUT";

/// Locations of pipeline artifacts. Relative paths resolve against the output root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub manifest: PathBuf,
    pub clips_dir: PathBuf,
    pub flows_dir: PathBuf,
    /// Frame rate of stored clips.
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub corpus: CorpusPaths,
    pub synth: SynthParams,
    pub preprocess: PreprocessParams,
    pub model: Tiny3dConfig,
    pub train: TrainConfig,
    pub k: u32,
    pub split_seed: u64,
    pub threshold: f64,
}

impl PipelineConfig {
    /// The calibrated desk-scale profile: 8-frame 24x32 clips, a strong
    /// injury effect and the compact network.
    pub fn compact() -> Self {
        let synth = SynthParams {
            injury_delta: 3.0,
            ..SynthParams::compact()
        };
        Self::with_synth(synth, Tiny3dConfig::compact())
    }

    /// 16-frame 46x60 clips and the standard network.
    pub fn standard() -> Self {
        Self::with_synth(SynthParams::default(), Tiny3dConfig::standard())
    }

    fn with_synth(synth: SynthParams, model: Tiny3dConfig) -> Self {
        PipelineConfig {
            output_dir: "out".into(),
            corpus: CorpusPaths {
                manifest: "manifest.jsonl".into(),
                clips_dir: "clips".into(),
                flows_dir: "flows".into(),
                fps: synth.fps,
            },
            preprocess: PreprocessParams {
                input_height: synth.crop_height,
                input_width: synth.crop_width,
                flow: FlowParams::default(),
            },
            synth,
            model,
            train: TrainConfig {
                batch_size: 4,
                ..TrainConfig::default()
            },
            k: 20,
            split_seed: 1,
            threshold: 0.5,
        }
    }

    /// Parses and validates; the raw text is kept by callers for echoing.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let cfg = Self::from_json(&text)
            .map_err(|e| Error::InvalidParams(format!("config {}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.preprocess.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be >= 1".into()));
        }
        if !(self.corpus.fps.is_finite() && self.corpus.fps > 0.0) {
            return Err(Error::InvalidParams(format!(
                "fps must be positive, got {}",
                self.corpus.fps
            )));
        }
        let expected = [
            2,
            self.synth.frames.saturating_sub(1),
            self.preprocess.input_height,
            self.preprocess.input_width,
        ];
        if self.model.input != expected {
            return Err(Error::InvalidParams(format!(
                "model input {:?} does not match the preprocessed flow shape {:?}",
                self.model.input, expected
            )));
        }
        Ok(())
    }

    /// Output root, with the environment override applied.
    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.output_root().join(p)
        }
    }

    pub fn experiment_spec(&self, experiment: Experiment) -> ExperimentSpec {
        ExperimentSpec {
            experiment,
            k: self.k,
            model: self.model.clone(),
            train: self.train.clone(),
            seed: self.split_seed,
            threshold: self.threshold,
        }
    }
}
