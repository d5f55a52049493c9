//! Run configuration: one JSON document, overridable by dotted `key=value` pairs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use skelforge_core::nn::EncoderConfig;
use skelforge_models::dataset::{DatasetConfig, ShapeKind};
use skelforge_models::decoders::DecoderConfig;
use skelforge_models::refinement::RefinementConfig;
use skelforge_models::skedisn::DisnConfig;
use skelforge_models::skegcnn::GcnConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: PathBuf,
    pub run: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "data".into(),
            run: "run".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub shapes: usize,
    /// Kinds cycled through in order.
    pub kinds: Vec<ShapeKind>,
    pub dataset: DatasetConfig,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            shapes: 8,
            kinds: ShapeKind::ALL.to_vec(),
            dataset: DatasetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub channels: [usize; 5],
    pub code_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let c = EncoderConfig::default();
        EncoderSection {
            channels: c.channels,
            code_dim: c.code_dim,
        }
    }
}

impl EncoderSection {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            channels: self.channels,
            code_dim: self.code_dim,
            ..EncoderConfig::default()
        }
    }

    /// Total channels of the maps at factors 2, 4 and 8.
    pub fn pixel_channels(&self) -> usize {
        self.channels[1] + self.channels[2] + self.channels[3]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkeletonSection {
    pub decoders: DecoderConfig,
    pub steps: usize,
    pub lr: f64,
    /// End-to-end steps with the refinement loss after decoder training.
    pub joint_steps: usize,
    /// Weight of the refinement loss in end-to-end training.
    pub beta: f64,
}

impl Default for SkeletonSection {
    fn default() -> Self {
        SkeletonSection {
            decoders: DecoderConfig::default(),
            steps: 2000,
            lr: 1e-3,
            joint_steps: 0,
            beta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub net: RefinementConfig,
    pub steps: usize,
    pub lr: f64,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            net: RefinementConfig::default(),
            steps: 500,
            lr: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplicitSection {
    pub gcn: GcnConfig,
    pub steps: usize,
    pub lr: f64,
}

impl Default for ExplicitSection {
    fn default() -> Self {
        ExplicitSection {
            gcn: GcnConfig::default(),
            steps: 1000,
            lr: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplicitSection {
    pub disn: DisnConfig,
    pub steps: usize,
    pub lr: f64,
    /// Labeled near-surface points drawn per shape.
    pub points: usize,
    pub batch: usize,
    /// Lattice on which the field is evaluated for surface extraction.
    pub mesh_res: usize,
}

impl Default for ImplicitSection {
    fn default() -> Self {
        ImplicitSection {
            disn: DisnConfig::default(),
            steps: 2000,
            lr: 1e-3,
            points: 20_000,
            batch: 256,
            mesh_res: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Surface samples per mesh for the Chamfer distance.
    pub samples: usize,
    pub iou_res: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            samples: 10_000,
            iou_res: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpSection {
    /// Manifest indices of the two endpoint shapes.
    pub a: usize,
    pub b: usize,
    pub weights: Vec<f64>,
}

impl Default for InterpSection {
    fn default() -> Self {
        InterpSection {
            a: 0,
            b: 1,
            weights: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Threads for per-shape inference and evaluation.
    pub workers: usize,
    pub paths: Paths,
    pub data: DataSection,
    pub encoder: EncoderSection,
    pub skeleton: SkeletonSection,
    pub refine: RefineSection,
    pub explicit: ExplicitSection,
    pub implicit: ImplicitSection,
    pub eval: EvalSection,
    pub interp: InterpSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            paths: Paths::default(),
            data: DataSection::default(),
            encoder: EncoderSection::default(),
            skeleton: SkeletonSection::default(),
            refine: RefineSection::default(),
            explicit: ExplicitSection::default(),
            implicit: ImplicitSection::default(),
            eval: EvalSection::default(),
            interp: InterpSection::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    /// Parses a JSON document; absent fields take their defaults, unknown fields are errors.
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies `key.path=value` overrides. Values are parsed as JSON, falling back to a
    /// plain string.
    pub fn with_overrides(&self, sets: &[String]) -> CliResult<Self> {
        let mut doc = serde_json::to_value(self).map_err(config_err)?;
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|m| m.get_mut(part))
                    .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
            }
            *slot = value;
        }
        serde_json::from_value(doc).map_err(config_err)
    }

    pub fn validate(&self) -> CliResult<()> {
        let c = |r: skelforge_core::Result<()>| r.map_err(config_err);
        c(self.data.dataset.validate())?;
        c(self.refine.net.validate())?;
        c(self.explicit.gcn.validate())?;
        c(self.implicit.disn.validate())?;
        let m = self.encoder.code_dim;
        let dims = [
            ("skeleton.decoders.code_dim", self.skeleton.decoders.code_dim),
            ("refine.net.code_dim", self.refine.net.code_dim),
            ("implicit.disn.code_dim", self.implicit.disn.code_dim),
        ];
        for (k, d) in dims {
            if d != m {
                return Err(CliError::Config(format!("{k} = {d} differs from encoder.code_dim = {m}")));
            }
        }
        if self.implicit.disn.pixel_dim != self.encoder.pixel_channels() {
            return Err(CliError::Config(format!(
                "implicit.disn.pixel_dim = {} but the encoder provides {} feature channels",
                self.implicit.disn.pixel_dim,
                self.encoder.pixel_channels()
            )));
        }
        if self.refine.net.res != self.data.dataset.volume_res {
            return Err(CliError::Config(format!(
                "refine.net.res = {} differs from data.dataset.volume_res = {}",
                self.refine.net.res, self.data.dataset.volume_res
            )));
        }
        if self.data.shapes == 0 || self.data.kinds.is_empty() {
            return Err(CliError::Config("data.shapes and data.kinds must be non-empty".into()));
        }
        if self.workers == 0 || self.implicit.batch == 0 || self.implicit.points == 0 || self.eval.samples == 0 {
            return Err(CliError::Config("workers, implicit.batch, implicit.points and eval.samples must be positive".into()));
        }
        if !(self.skeleton.beta >= 0.0) || [self.skeleton.lr, self.refine.lr, self.explicit.lr, self.implicit.lr].iter().any(|&l| !(l > 0.0)) {
            return Err(CliError::Config("learning rates must be positive and beta non-negative".into()));
        }
        if self.interp.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(CliError::Config("interpolation weights must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
