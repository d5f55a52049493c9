//! Procedural shape dataset: meshes, rendered views, labeled skeletons and skeletal volumes.

mod render;
mod shapes;
mod skeleton;
mod storage;

pub use render::{render_view, ViewConfig};
pub use shapes::{icosphere, ShapeKind, ShapeSpec};
pub use skeleton::{build_gt_volume, classify_curve_sheet, default_dilation_radius, sink_to_skeleton};
pub use storage::{read_manifest, read_sample, write_manifest, write_sample, ManifestEntry};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skelforge_core::geometry::{sample_surface, Camera, Connectivity, PointSet, TriangleMesh, VoxelGrid};
use skelforge_core::{Error, Result, Tensor};

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Resolution of the ground-truth skeletal volume.
    pub volume_res: usize,
    /// Dilation radius in voxels; `None` scales 2 voxels at 256 to `volume_res`.
    pub dilation_radius: Option<usize>,
    /// 6 or 26.
    pub dilation_connectivity: u8,
    pub views: usize,
    pub view: ViewConfig,
    pub surface_samples: usize,
    /// Distance between consecutive analytic skeleton samples.
    pub skeleton_spacing: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            volume_res: 64,
            dilation_radius: None,
            dilation_connectivity: 6,
            views: 4,
            view: ViewConfig::default(),
            surface_samples: 10_000,
            skeleton_spacing: 0.0125,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.volume_res < 8 || self.volume_res % 8 != 0 {
            return Err(Error::Invalid(format!("volume_res {} must be a positive multiple of 8", self.volume_res)));
        }
        self.connectivity()?;
        if self.views == 0 || self.surface_samples == 0 || !(self.skeleton_spacing > 0.0) {
            return Err(Error::Invalid("views, surface_samples and skeleton_spacing must be positive".into()));
        }
        if self.view.size < 16 || self.view.size % 16 != 0 {
            return Err(Error::Invalid(format!("view size {} must be a multiple of 16", self.view.size)));
        }
        Ok(())
    }

    pub fn connectivity(&self) -> Result<Connectivity> {
        match self.dilation_connectivity {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            c => Err(Error::Invalid(format!("dilation connectivity must be 6 or 26, got {c}"))),
        }
    }

    pub fn dilation(&self) -> usize {
        self.dilation_radius.unwrap_or_else(|| default_dilation_radius(self.volume_res))
    }
}

#[derive(Clone, Debug)]
pub struct View {
    /// `[H, W, 3]` in `[0, 1]`.
    pub image: Tensor<f64>,
    pub camera: Camera,
}

/// One generated training sample.
#[derive(Clone, Debug)]
pub struct ShapeSample {
    pub spec: ShapeSpec,
    pub seed: u64,
    pub mesh: TriangleMesh<f64>,
    pub views: Vec<View>,
    /// Analytic medial points with curve/sheet labels.
    pub skeleton: PointSet<f64>,
    /// Dilated skeletal occupancy at `volume_res`.
    pub volume: VoxelGrid<f64>,
    /// Oriented ground-truth surface samples.
    pub surface: PointSet<f64>,
}

/// Builds every artifact of one shape. The seed fixes view placement, surface samples
/// and any skeleton jitter.
pub fn generate_shape(spec: &ShapeSpec, cfg: &DatasetConfig, seed: u64) -> Result<ShapeSample> {
    cfg.validate()?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = spec.mesh()?;
    if !mesh.is_watertight() {
        return Err(Error::Invalid(format!("{} mesh is not watertight", spec.kind().name())));
    }
    let views = (0..cfg.views)
        .map(|_| {
            let camera = cfg.view.random_camera(&mut rng)?;
            Ok(View {
                image: render_view(&mesh, &camera),
                camera,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let skeleton = spec.skeleton(cfg.skeleton_spacing, &mut rng);
    let volume = build_gt_volume(&skeleton.points, cfg.volume_res, cfg.dilation(), cfg.connectivity()?)?;
    let surface = sample_surface(&mesh, cfg.surface_samples, seed ^ 0x5eed_5a3f)?.points;
    Ok(ShapeSample {
        spec: spec.clone(),
        seed,
        mesh,
        views,
        skeleton,
        volume,
        surface,
    })
}
