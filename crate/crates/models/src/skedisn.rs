//! Implicit mesh recovery: an occupancy field summing global, pixel-aligned and
//! skeletal-volume streams, trained on near-surface points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skelforge_core::autodiff::{ConvGeometry, Tape, Var};
use skelforge_core::geometry::{marching_cubes, sample_surface, Camera, TriangleMesh, VoxelGrid};
use skelforge_core::nn::{Activation, Conv, EncoderOutput, Init, Mlp, ParamStore};
use skelforge_core::{Error, Result, Tensor};

use crate::skegcnn::lift_pixel_features;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisnConfig {
    /// Point embedding widths after the 3 input coordinates.
    pub embed: Vec<usize>,
    /// Hidden widths of each stream head; every head ends in 2 logits.
    pub head_hidden: Vec<usize>,
    pub crop_sizes: [usize; 3],
    /// Channels of the two convolutions in each crop encoder.
    pub crop_channels: [usize; 2],
    pub crop_bias: bool,
    pub code_dim: usize,
    /// Width of the lifted pixel features.
    pub pixel_dim: usize,
    /// Near-surface band.
    pub epsilon: f64,
    /// Standard deviation of the jitter around surface samples.
    pub sigma: f64,
    /// Evaluate the skeleton stream; off gives the two-stream baseline.
    pub skeleton_stream: bool,
}

impl Default for DisnConfig {
    fn default() -> Self {
        DisnConfig {
            embed: vec![64, 128, 512],
            head_hidden: vec![512, 256],
            crop_sizes: [4, 8, 16],
            crop_channels: [8, 16],
            crop_bias: true,
            code_dim: 512,
            pixel_dim: 16 + 32 + 64,
            epsilon: 0.1,
            sigma: 0.05,
            skeleton_stream: true,
        }
    }
}

impl DisnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed.is_empty() || self.crop_sizes.iter().any(|&s| s < 4 || s % 4 != 0) {
            return Err(Error::Invalid(format!("invalid field network settings {self:?}")));
        }
        if !(self.epsilon > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Invalid("epsilon and sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Near-surface points with their inside/outside indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoints {
    pub points: Vec<[f64; 3]>,
    pub inside: Vec<bool>,
}

/// Ray-parity inside test along `+x`, bucketed by the triangles' `(y, z)` extents.
pub struct InsideTester {
    tris: Vec<[[f64; 3]; 3]>,
    lo: [f64; 2],
    cell: f64,
    n: usize,
    buckets: Vec<Vec<u32>>,
}

/// Origins of the three voting rays, offset slightly in `(y, z)`.
const RAY_OFFSETS: [[f64; 2]; 3] = [[0.0, 0.0], [1.37e-5, 0.71e-5], [-0.93e-5, 1.19e-5]];

impl InsideTester {
    pub fn new(mesh: &TriangleMesh<f64>) -> Result<Self> {
        if mesh.faces.is_empty() || !mesh.is_watertight() {
            return Err(Error::Invalid("inside test needs a watertight mesh".into()));
        }
        let tris: Vec<[[f64; 3]; 3]> = (0..mesh.faces.len()).map(|f| mesh.face_vertices(f)).collect();
        let (lo3, hi3) = mesh.bounds().expect("non-empty mesh");
        let lo = [lo3[1], lo3[2]];
        let n = ((tris.len() as f64).sqrt().ceil() as usize).clamp(1, 128);
        let cell = ((hi3[1] - lo3[1]).max(hi3[2] - lo3[2]) / n as f64).max(1e-9);
        let mut buckets = vec![Vec::new(); n * n];
        let clampi = |v: f64| (v.floor().max(0.0) as usize).min(n - 1);
        for (i, t) in tris.iter().enumerate() {
            let (mut y0, mut y1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for p in t {
                y0 = y0.min(p[1]);
                y1 = y1.max(p[1]);
                z0 = z0.min(p[2]);
                z1 = z1.max(p[2]);
            }
            for a in clampi((y0 - lo[0]) / cell - 1e-9)..=clampi((y1 - lo[0]) / cell + 1e-9) {
                for b in clampi((z0 - lo[1]) / cell - 1e-9)..=clampi((z1 - lo[1]) / cell + 1e-9) {
                    buckets[a * n + b].push(i as u32);
                }
            }
        }
        Ok(InsideTester {
            tris,
            lo,
            cell,
            n,
            buckets,
        })
    }

    fn crossings(&self, p: [f64; 3]) -> usize {
        let a = ((p[1] - self.lo[0]) / self.cell).floor();
        let b = ((p[2] - self.lo[1]) / self.cell).floor();
        if a < 0.0 || b < 0.0 || a >= self.n as f64 || b >= self.n as f64 {
            return 0;
        }
        let mut count = 0;
        for &t in &self.buckets[a as usize * self.n + b as usize] {
            let [v0, v1, v2] = self.tris[t as usize];
            // Barycentrics of (y, z) in the projected triangle.
            let det = (v1[1] - v0[1]) * (v2[2] - v0[2]) - (v2[1] - v0[1]) * (v1[2] - v0[2]);
            if det.abs() < 1e-18 {
                continue;
            }
            let (dy, dz) = (p[1] - v0[1], p[2] - v0[2]);
            let u = (dy * (v2[2] - v0[2]) - (v2[1] - v0[1]) * dz) / det;
            let v = ((v1[1] - v0[1]) * dz - dy * (v1[2] - v0[2])) / det;
            if u < 0.0 || v < 0.0 || u + v > 1.0 {
                continue;
            }
            let x = v0[0] + u * (v1[0] - v0[0]) + v * (v2[0] - v0[0]);
            if x > p[0] {
                count += 1;
            }
        }
        count
    }

    /// Majority vote of three nearly coincident `+x` rays.
    pub fn inside(&self, p: [f64; 3]) -> bool {
        let votes = RAY_OFFSETS
            .iter()
            .filter(|o| self.crossings([p[0], p[1] + o[0], p[2] + o[1]]) % 2 == 1)
            .count();
        votes >= 2
    }
}

/// Surface samples displaced by Gaussian jitter, redrawn until the displacement is
/// shorter than `epsilon` and the point stays in the unit cube, so every point is
/// within `epsilon` of the surface. Labels come from [`InsideTester`].
pub fn sample_training_points(
    mesh: &TriangleMesh<f64>,
    n: usize,
    epsilon: f64,
    sigma: f64,
    seed: u64,
) -> Result<LabeledPoints> {
    let tester = InsideTester::new(mesh)?;
    if !(epsilon > 0.0) || !(sigma > 0.0) {
        return Err(Error::Invalid("epsilon and sigma must be positive".into()));
    }
    let base = sample_surface(mesh, n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a11_ce5e);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    for q in &base.points.points {
        let p = loop {
            let d: [f64; 3] = [0, 1, 2].map(|_| normal.sample(&mut rng));
            let len2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let p = [0, 1, 2].map(|k| q[k] + d[k]);
            if len2 < epsilon * epsilon && p.iter().all(|c| c.abs() < 0.5) {
                break p;
            }
        };
        points.push(p);
    }
    let inside = points.iter().map(|&p| tester.inside(p)).collect();
    Ok(LabeledPoints { points, inside })
}

/// Zero-padded cubic crops `[N, 1, s, s, s]` of `V` centered on the voxel holding each point.
pub fn crop_volume(v: &VoxelGrid<f64>, points: &[[f64; 3]], size: usize) -> Result<Tensor<f64>> {
    let r = v.resolution() as isize;
    let half = (size / 2) as isize;
    let vals = v.values();
    let mut out = vec![0.0; points.len() * size * size * size];
    for (i, p) in points.iter().enumerate() {
        let c = v.world_to_grid(*p).map(|g| g.round() as isize);
        let base = i * size * size * size;
        for z in 0..size as isize {
            let gz = c[2] - half + z;
            if gz < 0 || gz >= r {
                continue;
            }
            for y in 0..size as isize {
                let gy = c[1] - half + y;
                if gy < 0 || gy >= r {
                    continue;
                }
                for x in 0..size as isize {
                    let gx = c[0] - half + x;
                    if gx < 0 || gx >= r {
                        continue;
                    }
                    let s = size as isize;
                    out[base + ((z * s + y) * s + x) as usize] = vals[(gx + r * (gy + r * gz)) as usize];
                }
            }
        }
    }
    Tensor::new(vec![points.len(), 1, size, size, size], out)
}

/// Two strided convolutions and global average pooling on one crop size.
#[derive(Clone, Debug)]
struct CropEncoder {
    size: usize,
    convs: [Conv; 2],
}

impl CropEncoder {
    fn new(prefix: &str, size: usize, ch: [usize; 2], bias: bool) -> Self {
        let first = if size <= 4 { 1 } else { 2 };
        let mut a = Conv::new(format!("{prefix}.c0"), 1, ch[0], ConvGeometry::cubic(3, first, 1));
        let mut b = Conv::new(format!("{prefix}.c1"), ch[0], ch[1], ConvGeometry::cubic(3, 2, 1));
        if !bias {
            a = a.without_bias();
            b = b.without_bias();
        }
        CropEncoder { size, convs: [a, b] }
    }

    fn forward(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, crops: Var) -> Result<Var> {
        let mut h = crops;
        for c in &self.convs {
            h = c.forward(tape, store, h, None)?;
            h = tape.relu(h);
        }
        let s = tape.shape(h).to_vec();
        let flat = tape.reshape(h, &[s[0], s[1], s[2] * s[3] * s[4]])?;
        tape.mean_last(flat)
    }
}

/// Inputs shared by every query of one shape.
pub struct FieldContext<'a> {
    pub encoding: &'a EncoderOutput,
    pub camera: &'a Camera,
    /// Skeletal volume; an all-zero grid is allowed.
    pub volume: &'a VoxelGrid<f64>,
}

/// Point embedding, the three stream heads and the crop encoders.
#[derive(Clone, Debug)]
pub struct SkeDisn {
    pub cfg: DisnConfig,
    embed: Mlp,
    head_g: Mlp,
    head_l: Mlp,
    head_s: Mlp,
    crops: Vec<CropEncoder>,
}

/// Per-stream logits and the resulting probabilities `[N, 2]` (column 1 = inside).
#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    pub global: Var,
    pub local: Var,
    pub skeleton: Option<Var>,
    pub prob: Var,
}

impl SkeDisn {
    pub fn new(cfg: DisnConfig) -> Result<Self> {
        cfg.validate()?;
        let mut ew = vec![3];
        ew.extend(&cfg.embed);
        let fx = *ew.last().unwrap();
        let head = |name: &str, extra: usize| {
            let mut w = vec![fx + extra];
            w.extend(&cfg.head_hidden);
            w.push(2);
            Mlp::new(name, &w, Activation::Relu, Activation::Identity)
        };
        let crops = cfg
            .crop_sizes
            .iter()
            .map(|&s| CropEncoder::new(&format!("disn.crop{s}"), s, cfg.crop_channels, cfg.crop_bias))
            .collect();
        Ok(SkeDisn {
            embed: Mlp::new("disn.embed", &ew, Activation::Relu, Activation::Relu),
            head_g: head("disn.wg", cfg.code_dim),
            head_l: head("disn.wl", cfg.pixel_dim),
            head_s: head("disn.ws", 3 * cfg.crop_channels[1]),
            crops,
            cfg,
        })
    }

    pub fn init(&self, store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.embed.init(store, rng)?;
        self.head_g.init(store, rng)?;
        self.head_l.init(store, rng)?;
        if self.cfg.skeleton_stream {
            self.head_s.init(store, rng)?;
            for c in &self.crops {
                for l in &c.convs {
                    l.init(store, Init::He, rng)?;
                }
            }
        }
        Ok(())
    }

    /// Names of the skeleton stream's head parameters.
    pub fn skeleton_head_params(&self) -> Vec<String> {
        self.head_s
            .layers
            .iter()
            .flat_map(|l| [l.weight_name(), l.bias_name()])
            .collect()
    }

    /// Concatenated crop-encoder features `f_s`, `[N, 3 C]`.
    pub fn extract_multiscale(
        &self,
        tape: &mut Tape<f64>,
        store: &ParamStore<f64>,
        volume: &VoxelGrid<f64>,
        points: &[[f64; 3]],
    ) -> Result<Var> {
        let parts = self
            .crops
            .iter()
            .map(|c| {
                let crop = tape.constant(crop_volume(volume, points, c.size)?);
                c.forward(tape, store, crop)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.concat(&parts, 1)
    }

    pub fn field(
        &self,
        tape: &mut Tape<f64>,
        store: &ParamStore<f64>,
        ctx: &FieldContext,
        points: &[[f64; 3]],
    ) -> Result<FieldOutput> {
        if points.is_empty() {
            return Err(Error::Empty("query points"));
        }
        let xyz = tape.constant(Tensor::new(vec![points.len(), 3], points.iter().flatten().copied().collect())?);
        let fx = self.embed.forward(tape, store, xyz)?;
        let global = self.head_g.forward_with_shared(tape, store, fx, ctx.encoding.global_code)?;
        let pix = lift_pixel_features(tape, ctx.encoding, ctx.camera, points)?;
        let lin = tape.concat(&[fx, pix], 1)?;
        let local = self.head_l.forward(tape, store, lin)?;
        let mut sum = tape.add(global, local)?;
        let skeleton = if self.cfg.skeleton_stream {
            let fs = self.extract_multiscale(tape, store, ctx.volume, points)?;
            let sin = tape.concat(&[fx, fs], 1)?;
            let s = self.head_s.forward(tape, store, sin)?;
            sum = tape.add(sum, s)?;
            Some(s)
        } else {
            None
        };
        let prob = tape.softmax(sum)?;
        Ok(FieldOutput {
            global,
            local,
            skeleton,
            prob,
        })
    }
}

/// Mean two-way cross-entropy of `[N, 2]` probabilities against inside labels.
pub fn skedisn_loss(tape: &mut Tape<f64>, prob: Var, inside: &[bool]) -> Result<Var> {
    let s = tape.shape(prob).to_vec();
    if s != [inside.len(), 2] {
        return Err(Error::Shape {
            op: "skedisn_loss",
            shapes: vec![s, vec![inside.len(), 2]],
        });
    }
    let onehot: Vec<f64> = inside
        .iter()
        .flat_map(|&i| if i { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    let y = tape.constant(Tensor::new(vec![inside.len(), 2], onehot)?);
    let lp = tape.log(prob);
    let m = tape.mul(y, lp)?;
    let total = tape.sum(m);
    Ok(tape.scale(total, -1.0 / inside.len() as f64))
}

/// Fraction of points whose inside probability is on the correct side of 0.5.
pub fn accuracy(prob: &Tensor<f64>, inside: &[bool]) -> f64 {
    let hits = prob
        .data()
        .chunks(2)
        .zip(inside)
        .filter(|(p, &i)| (p[1] > 0.5) == i)
        .count();
    hits as f64 / inside.len().max(1) as f64
}

/// Inside probability on the `r^3` lattice of voxel centers (`x` fastest), evaluated in
/// batches of `batch` points by `eval`, then marching cubes at `iso`. The largest
/// connected component is returned.
pub fn extract_isosurface(
    res: usize,
    iso: f64,
    batch: usize,
    mut eval: impl FnMut(&[[f64; 3]]) -> Result<Vec<f64>>,
) -> Result<(TriangleMesh<f64>, VoxelGrid<f64>)> {
    let grid = VoxelGrid::<f64>::zeros(res);
    let centers: Vec<[f64; 3]> = (0..res * res * res)
        .map(|i| {
            let [x, y, z] = grid.coords(i);
            grid.center(x, y, z)
        })
        .collect();
    let mut values = Vec::with_capacity(centers.len());
    for chunk in centers.chunks(batch.max(1)) {
        let v = eval(chunk)?;
        if v.len() != chunk.len() {
            return Err(Error::Invalid("field evaluation returned the wrong number of values".into()));
        }
        values.extend(v.into_iter().map(|p| p.clamp(0.0, 1.0)));
    }
    let field = VoxelGrid::new(res, values)?;
    let mesh = marching_cubes(&field, iso)?.largest_component();
    if mesh.faces.is_empty() {
        return Err(Error::Empty("isosurface"));
    }
    Ok((mesh, field))
}

/// Random subset of `n` indices, for mini-batches.
pub fn batch_indices(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n.min(len)).map(|_| rng.random_range(0..len)).collect()
}
