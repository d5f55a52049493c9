//! Curve and sheet skeleton decoders: per-primitive MLPs that deform sampled 1D lines
//! and 2D squares, conditioned on a shape code.

use rand_chacha::ChaCha8Rng;
use skelforge_core::autodiff::{Tape, Var};
use skelforge_core::geometry::{Label, Point3, PointSet, Reduction};
use skelforge_core::nn::{Activation, Mlp, ParamStore};
use skelforge_core::{Error, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    Line,
    Square,
}

impl PrimitiveKind {
    /// Dimension of the parameter domain.
    pub fn dim(self) -> usize {
        match self {
            PrimitiveKind::Line => 1,
            PrimitiveKind::Square => 2,
        }
    }

    pub fn label(self) -> Label {
        match self {
            PrimitiveKind::Line => Label::Curve,
            PrimitiveKind::Square => Label::Sheet,
        }
    }
}

/// `count` copies of a sampled parameter domain and the sample adjacency.
#[derive(Clone, Debug)]
pub struct PrimitiveSet {
    pub kind: PrimitiveKind,
    pub count: usize,
    /// `[samples, dim]` parameter coordinates shared by every primitive.
    pub coords: Tensor<f64>,
    /// Neighbours of every sample of every primitive, as indices into the stacked
    /// `[count * samples]` output.
    pub neighbors: Vec<Vec<usize>>,
}

impl PrimitiveSet {
    /// Evenly spaced samples on `[0, 1]`, chained to their predecessor and successor.
    pub fn lines(count: usize, samples: usize) -> Result<Self> {
        if count == 0 || samples < 2 {
            return Err(Error::Invalid(format!("line primitives need count >= 1 and samples >= 2, got {count} x {samples}")));
        }
        let coords = (0..samples).map(|i| i as f64 / (samples - 1) as f64).collect();
        let local: Vec<Vec<usize>> = (0..samples)
            .map(|i| {
                let mut nb = Vec::new();
                if i > 0 {
                    nb.push(i - 1);
                }
                if i + 1 < samples {
                    nb.push(i + 1);
                }
                nb
            })
            .collect();
        Ok(Self::build(PrimitiveKind::Line, count, Tensor::new(vec![samples, 1], coords)?, local))
    }

    /// `side x side` grid on `[0, 1]^2` with 4-connected adjacency.
    pub fn squares(count: usize, side: usize) -> Result<Self> {
        if count == 0 || side < 2 {
            return Err(Error::Invalid(format!("square primitives need count >= 1 and side >= 2, got {count} x {side}")));
        }
        let step = 1.0 / (side - 1) as f64;
        let mut coords = Vec::with_capacity(side * side * 2);
        let mut local = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                coords.extend([i as f64 * step, j as f64 * step]);
                let mut nb = Vec::new();
                if i > 0 {
                    nb.push((i - 1) * side + j);
                }
                if i + 1 < side {
                    nb.push((i + 1) * side + j);
                }
                if j > 0 {
                    nb.push(i * side + j - 1);
                }
                if j + 1 < side {
                    nb.push(i * side + j + 1);
                }
                local.push(nb);
            }
        }
        Ok(Self::build(PrimitiveKind::Square, count, Tensor::new(vec![side * side, 2], coords)?, local))
    }

    fn build(kind: PrimitiveKind, count: usize, coords: Tensor<f64>, local: Vec<Vec<usize>>) -> Self {
        let n = local.len();
        let neighbors = (0..count)
            .flat_map(|p| local.iter().map(move |nb| nb.iter().map(|&q| p * n + q).collect()))
            .collect();
        PrimitiveSet {
            kind,
            count,
            coords,
            neighbors,
        }
    }

    pub fn samples(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn total(&self) -> usize {
        self.count * self.samples()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub code_dim: usize,
    pub hidden: Vec<usize>,
    pub primitives: usize,
    pub line_samples: usize,
    pub square_side: usize,
    /// Weight of the Laplacian smoothness term.
    pub alpha: f64,
    /// Outputs are `scale * tanh(.)`.
    pub scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            code_dim: 512,
            hidden: vec![512, 256, 128],
            primitives: 20,
            line_samples: 64,
            square_side: 8,
            alpha: 0.2,
            scale: 0.5,
        }
    }
}

/// One MLP per primitive mapping `(parameter, code)` to a point.
#[derive(Clone, Debug)]
pub struct SkeletonDecoder {
    pub prims: PrimitiveSet,
    pub mlps: Vec<Mlp>,
    pub alpha: f64,
    pub scale: f64,
}

impl SkeletonDecoder {
    pub fn new(prefix: &str, kind: PrimitiveKind, cfg: &DecoderConfig) -> Result<Self> {
        let prims = match kind {
            PrimitiveKind::Line => PrimitiveSet::lines(cfg.primitives, cfg.line_samples)?,
            PrimitiveKind::Square => PrimitiveSet::squares(cfg.primitives, cfg.square_side)?,
        };
        let mut widths = vec![kind.dim() + cfg.code_dim];
        widths.extend(&cfg.hidden);
        widths.push(3);
        let mlps = (0..cfg.primitives)
            .map(|p| Mlp::new(&format!("{prefix}.p{p}"), &widths, Activation::Relu, Activation::Tanh))
            .collect();
        Ok(SkeletonDecoder {
            prims,
            mlps,
            alpha: cfg.alpha,
            scale: cfg.scale,
        })
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.prims.kind
    }

    pub fn init(&self, store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.mlps.iter().try_for_each(|m| m.init(store, rng))
    }

    /// `code: [1, m]` to stacked points `[count * samples, 3]`.
    pub fn forward(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, code: Var) -> Result<Var> {
        let coords = tape.constant(self.prims.coords.clone());
        let parts = self
            .mlps
            .iter()
            .map(|m| {
                let y = m.forward_with_shared(tape, store, coords, code)?;
                Ok(tape.scale(y, self.scale))
            })
            .collect::<Result<Vec<_>>>()?;
        tape.concat(&parts, 0)
    }

    /// Summed Chamfer distance to `target` plus `alpha` times the Laplacian term.
    pub fn loss(&self, tape: &mut Tape<f64>, pred: Var, target: &[Point3<f64>]) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::Empty("decoder target"));
        }
        let gt = tape.constant(PointSet::new(target.to_vec()).to_tensor());
        let cd = tape.chamfer(pred, gt, Reduction::Sum)?;
        let lap = tape.laplacian_reg(pred, &self.prims.neighbors)?;
        let lap = tape.scale(lap, self.alpha);
        tape.add(cd, lap)
    }
}

/// Ground-truth points supervising a decoder of `kind`: the matching labeled partition,
/// or the whole skeleton when that partition is empty.
pub fn decoder_target(skeleton: &PointSet<f64>, kind: PrimitiveKind) -> Result<Vec<Point3<f64>>> {
    let labels = skeleton
        .labels()
        .ok_or_else(|| Error::Invalid("decoder targets need a labeled skeleton".into()))?;
    let part: Vec<Point3<f64>> = skeleton
        .points
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == kind.label())
        .map(|(p, _)| *p)
        .collect();
    if part.is_empty() {
        if skeleton.is_empty() {
            return Err(Error::Empty("skeleton"));
        }
        return Ok(skeleton.points.clone());
    }
    Ok(part)
}

/// Curve and sheet decoders sharing one shape code.
#[derive(Clone, Debug)]
pub struct SkeletonDecoders {
    pub curve: SkeletonDecoder,
    pub sheet: SkeletonDecoder,
}

/// Decoded curve and sheet points.
#[derive(Clone, Copy, Debug)]
pub struct DecodedSkeleton {
    pub curve: Var,
    pub sheet: Var,
}

/// Decoder losses: curve term, sheet term and their sum.
#[derive(Clone, Copy, Debug)]
pub struct DecoderLosses {
    pub curve: Var,
    pub sheet: Var,
    pub total: Var,
}

impl SkeletonDecoders {
    pub fn new(cfg: &DecoderConfig) -> Result<Self> {
        Ok(SkeletonDecoders {
            curve: SkeletonDecoder::new("cur", PrimitiveKind::Line, cfg)?,
            sheet: SkeletonDecoder::new("sur", PrimitiveKind::Square, cfg)?,
        })
    }

    pub fn init(&self, store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.curve.init(store, rng)?;
        self.sheet.init(store, rng)
    }

    pub fn forward(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, code: Var) -> Result<DecodedSkeleton> {
        Ok(DecodedSkeleton {
            curve: self.curve.forward(tape, store, code)?,
            sheet: self.sheet.forward(tape, store, code)?,
        })
    }

    pub fn loss(&self, tape: &mut Tape<f64>, out: DecodedSkeleton, skeleton: &PointSet<f64>) -> Result<DecoderLosses> {
        let curve = self.curve.loss(tape, out.curve, &decoder_target(skeleton, PrimitiveKind::Line)?)?;
        let sheet = self.sheet.loss(tape, out.sheet, &decoder_target(skeleton, PrimitiveKind::Square)?)?;
        let total = tape.add(curve, sheet)?;
        Ok(DecoderLosses { curve, sheet, total })
    }
}

/// Labeled union of decoded curve and sheet points.
pub fn assemble_skeleton(curve: &Tensor<f64>, sheet: &Tensor<f64>) -> Result<PointSet<f64>> {
    let c = PointSet::from_flat(curve.data())?.with_label(Label::Curve);
    let s = PointSet::from_flat(sheet.data())?.with_label(Label::Sheet);
    Ok(c.concat(&s))
}
