//! Explicit mesh recovery: marching cubes on the skeletal volume gives an initial mesh
//! that a graph convolutional network inflates towards the object surface.

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use skelforge_core::autodiff::{backward_fn, Tape, Var};
use skelforge_core::geometry::{
    curvature_weights, marching_cubes, pixel_to_texel, sample_surface, Camera, CurvatureRule, NearestIndex, PointSet,
    TriangleMesh, VoxelGrid,
};
use skelforge_core::nn::{init_tensor, EncoderOutput, Init, ParamStore};
use skelforge_core::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub max_vertices: usize,
    /// Points sampled from each mesh per loss evaluation.
    pub samples: usize,
    pub lambda_edge: f64,
    pub lambda_curvature: f64,
    pub curvature_k: usize,
    pub curvature_angle_deg: f64,
    pub curvature_weight: f64,
    pub iso: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            layers: 6,
            hidden: 192,
            max_vertices: 10_000,
            samples: 2048,
            lambda_edge: 0.7,
            lambda_curvature: 3e-4,
            curvature_k: 16,
            curvature_angle_deg: 60.0,
            curvature_weight: 5.0,
            iso: 0.5,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden == 0 || self.samples == 0 || self.max_vertices < 4 {
            return Err(Error::Invalid(format!("invalid graph network settings {self:?}")));
        }
        Ok(())
    }

    pub fn curvature_rule(&self) -> CurvatureRule {
        CurvatureRule {
            k: self.curvature_k,
            angle_deg: self.curvature_angle_deg,
            high_weight: self.curvature_weight,
        }
    }
}

/// Marching cubes on `V`, keeping the largest component, then vertex clustering down to
/// at most `max_vertices` while the Euler characteristic and closedness survive.
pub fn extract_initial_mesh(v: &VoxelGrid<f64>, iso: f64, max_vertices: usize) -> Result<TriangleMesh<f64>> {
    let (lo, hi) = v.min_max();
    if !(iso > lo && iso < hi) {
        return Err(Error::Invalid(format!("iso value {iso} outside the volume range ({lo}, {hi})")));
    }
    let mesh = marching_cubes(v, iso)?.largest_component();
    if mesh.faces.is_empty() {
        return Err(Error::Empty("isosurface"));
    }
    if mesh.vertices.len() <= max_vertices {
        return Ok(mesh);
    }
    let chi = mesh.euler_characteristic();
    let closed = mesh.is_watertight();
    let voxel = v.voxel_size();
    let mut best = mesh.clone();
    for factor in [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0] {
        let c = cluster_vertices(&mesh, voxel * factor);
        if c.euler_characteristic() != chi || c.is_watertight() != closed || c.faces.is_empty() {
            break;
        }
        best = c;
        if best.vertices.len() <= max_vertices {
            break;
        }
    }
    if best.vertices.len() > max_vertices {
        log::warn!(
            "initial mesh keeps {} vertices; coarser clustering would change its topology",
            best.vertices.len()
        );
    }
    Ok(best)
}

/// Merges vertices sharing a cubic cell of edge `cell`, dropping faces that collapse
/// and face pairs that become coincident.
pub fn cluster_vertices(mesh: &TriangleMesh<f64>, cell: f64) -> TriangleMesh<f64> {
    let mut ids: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<([f64; 3], usize)> = Vec::new();
    let remap: Vec<usize> = mesh
        .vertices
        .iter()
        .map(|p| {
            let key = p.map(|c| ((c + 0.5) / cell).floor() as i64);
            let id = *ids.entry(key).or_insert_with(|| {
                sums.push(([0.0; 3], 0));
                sums.len() - 1
            });
            for k in 0..3 {
                sums[id].0[k] += p[k];
            }
            sums[id].1 += 1;
            id
        })
        .collect();
    let vertices: Vec<[f64; 3]> = sums.iter().map(|(s, n)| s.map(|c| c / *n as f64)).collect();
    let mut faces: Vec<[usize; 3]> = mesh
        .faces
        .iter()
        .map(|f| f.map(|v| remap[v]))
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    let mut count: HashMap<[usize; 3], usize> = HashMap::new();
    for f in &faces {
        let mut k = *f;
        k.sort_unstable();
        *count.entry(k).or_default() += 1;
    }
    faces.retain(|f| {
        let mut k = *f;
        k.sort_unstable();
        count[&k] == 1
    });
    TriangleMesh { vertices, faces }.compact()
}

/// Mean of each row's neighbours; rows without neighbours get zeros.
pub fn graph_mean(tape: &mut Tape<f64>, x: Var, neighbors: &[Vec<usize>]) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 2 || s[0] != neighbors.len() || neighbors.iter().flatten().any(|&j| j >= s[0]) {
        return Err(Error::Shape {
            op: "graph_mean",
            shapes: vec![s, vec![neighbors.len()]],
        });
    }
    let (n, f) = (s[0], s[1]);
    let src = tape.value(x).data();
    let mut out = vec![0.0; n * f];
    for (i, nb) in neighbors.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let inv = 1.0 / nb.len() as f64;
        let row = &mut out[i * f..(i + 1) * f];
        for &j in nb {
            for (o, &v) in row.iter_mut().zip(&src[j * f..(j + 1) * f]) {
                *o += v * inv;
            }
        }
    }
    let nb: Arc<[Vec<usize>]> = neighbors.into();
    Ok(tape.push(
        Tensor::new(vec![n, f], out)?,
        &[x],
        backward_fn("graph_mean", move |_: &[&Tensor<f64>], _: &Tensor<f64>, g: &Tensor<f64>| {
            let gd = g.data();
            let mut gx = vec![0.0; n * f];
            for (i, list) in nb.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                let inv = 1.0 / list.len() as f64;
                for &j in list.iter() {
                    for k in 0..f {
                        gx[j * f + k] += gd[i * f + k] * inv;
                    }
                }
            }
            vec![Some(Tensor::new(vec![n, f], gx).unwrap())]
        }),
    ))
}

/// `f'_t = act(f_t W_self + mean_{t' ~ t} f_t' W_neigh + b)`.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
    pub relu: bool,
}

impl GcnLayer {
    pub fn init(&self, store: &mut ParamStore<f64>, init: Init, rng: &mut ChaCha8Rng) -> Result<()> {
        for part in ["self", "neigh"] {
            store.insert(
                &format!("{}.{part}", self.name),
                init_tensor(&[self.fan_in, self.fan_out], self.fan_in, self.fan_out, init, rng),
            )?;
        }
        store.insert(&format!("{}.b", self.name), Tensor::zeros(&[self.fan_out]))
    }

    pub fn forward(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, x: Var, neighbors: &[Vec<usize>]) -> Result<Var> {
        let ws = store.bind(tape, &format!("{}.self", self.name))?;
        let wn = store.bind(tape, &format!("{}.neigh", self.name))?;
        let b = store.bind(tape, &format!("{}.b", self.name))?;
        gcn_layer(tape, x, neighbors, ws, wn, b, self.relu)
    }
}

/// One graph convolution with explicit weights.
pub fn gcn_layer(
    tape: &mut Tape<f64>,
    x: Var,
    neighbors: &[Vec<usize>],
    w_self: Var,
    w_neigh: Var,
    bias: Var,
    relu: bool,
) -> Result<Var> {
    let m = graph_mean(tape, x, neighbors)?;
    let a = tape.matmul(x, w_self)?;
    let c = tape.matmul(m, w_neigh)?;
    let s = tape.add(a, c)?;
    let y = tape.add_row(s, bias)?;
    Ok(if relu { tape.relu(y) } else { y })
}

/// Bilinear lookups of every feature map at the projections of `points`: `[N, sum(C)]`.
pub fn lift_pixel_features(
    tape: &mut Tape<f64>,
    enc: &EncoderOutput,
    camera: &Camera,
    points: &[[f64; 3]],
) -> Result<Var> {
    let proj = camera.project_vertices(points);
    let mut parts = Vec::new();
    for fm in &enc.feature_maps {
        let coords: Vec<f64> = proj.pixels.iter().flat_map(|&px| pixel_to_texel(px, fm.factor)).collect();
        let coords = tape.constant(Tensor::new(vec![points.len(), 2], coords)?);
        parts.push(tape.bilinear_sample(fm.var, coords)?);
    }
    tape.concat(&parts, 1)
}

/// Per-vertex GCN input: lifted image features followed by the vertex coordinates.
pub fn lift_features(
    tape: &mut Tape<f64>,
    enc: &EncoderOutput,
    camera: &Camera,
    vertices: &[[f64; 3]],
) -> Result<Var> {
    let pix = lift_pixel_features(tape, enc, camera, vertices)?;
    let xyz = tape.constant(PointSet::new(vertices.to_vec()).to_tensor());
    tape.concat(&[pix, xyz], 1)
}

/// Six-layer (by default) graph network predicting vertex offsets.
#[derive(Clone, Debug)]
pub struct SkeGcnn {
    pub layers: Vec<GcnLayer>,
}

impl SkeGcnn {
    pub fn new(input_width: usize, cfg: &GcnConfig) -> Self {
        let mut widths = vec![input_width];
        widths.extend(std::iter::repeat_n(cfg.hidden, cfg.layers - 1));
        widths.push(3);
        let last = cfg.layers - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| GcnLayer {
                name: format!("gcn.l{i}"),
                fan_in: w[0],
                fan_out: w[1],
                relu: i != last,
            })
            .collect();
        SkeGcnn { layers }
    }

    /// He initialization except for the last layer, which starts at zero so the first
    /// deformation is the identity.
    pub fn init(&self, store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.init(store, if i == last { Init::Zeros } else { Init::He }, rng)?;
        }
        Ok(())
    }

    /// Deformed vertices `t + delta_t` as a `[V, 3]` variable; connectivity is unchanged.
    pub fn deform(
        &self,
        tape: &mut Tape<f64>,
        store: &ParamStore<f64>,
        mesh: &TriangleMesh<f64>,
        neighbors: &[Vec<usize>],
        features: Var,
    ) -> Result<Var> {
        let mut h = features;
        for l in &self.layers {
            h = l.forward(tape, store, h, neighbors)?;
        }
        let base = tape.constant(PointSet::new(mesh.vertices.clone()).to_tensor());
        tape.add(base, h)
    }
}

/// `sum_{(u,v) in E} |u - v|^2`
pub fn edge_reg(tape: &mut Tape<f64>, verts: Var, edges: &[[usize; 2]]) -> Result<Var> {
    let (a, b): (Vec<usize>, Vec<usize>) = edges.iter().map(|e| (e[0], e[1])).unzip();
    let u = tape.gather_rows(verts, &a)?;
    let v = tape.gather_rows(verts, &b)?;
    let d = tape.sub(u, v)?;
    Ok(tape.sum_squares(d))
}

/// `sum_{(u,v) in E} <u - v, n(u)>^2` with `n(u)` the normal of the ground-truth sample
/// nearest to `u` (held fixed).
pub fn curvature_reg(tape: &mut Tape<f64>, verts: Var, edges: &[[usize; 2]], gt: &PointSet<f64>) -> Result<Var> {
    let normals = gt.require_normals()?;
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth samples"));
    }
    let index = NearestIndex::new(&gt.points);
    let vd = tape.value(verts).data();
    let n: Vec<f64> = edges
        .iter()
        .flat_map(|e| {
            let p = [vd[3 * e[0]], vd[3 * e[0] + 1], vd[3 * e[0] + 2]];
            normals[index.nearest(p).0]
        })
        .collect();
    let (a, b): (Vec<usize>, Vec<usize>) = edges.iter().map(|e| (e[0], e[1])).unzip();
    let u = tape.gather_rows(verts, &a)?;
    let v = tape.gather_rows(verts, &b)?;
    let d = tape.sub(u, v)?;
    let nt = tape.constant(Tensor::new(vec![edges.len(), 3], n)?);
    let prod = tape.mul(d, nt)?;
    let ones = tape.constant(Tensor::full(&[3, 1], 1.0));
    let dots = tape.matmul(prod, ones)?;
    Ok(tape.sum_squares(dots))
}

/// Loss terms of one evaluation.
#[derive(Clone, Copy, Debug)]
pub struct GcnLoss {
    pub chamfer: Var,
    pub edge: Var,
    pub curvature: Var,
    pub total: Var,
}

/// Ground-truth samples with their curvature weights, fixed for a training run.
#[derive(Clone, Debug)]
pub struct GcnTarget {
    pub samples: PointSet<f64>,
    pub kappa: Vec<f64>,
}

impl GcnTarget {
    pub fn new(gt_mesh: &TriangleMesh<f64>, cfg: &GcnConfig, seed: u64) -> Result<Self> {
        let samples = sample_surface(gt_mesh, cfg.samples, seed)?.points;
        let kappa = curvature_weights(&samples, cfg.curvature_rule())?;
        Ok(GcnTarget { samples, kappa })
    }
}

/// Weighted Chamfer between fresh samples of the deformed mesh and the target, plus the
/// edge and curvature penalties.
pub fn skegcnn_loss(
    tape: &mut Tape<f64>,
    verts: Var,
    mesh: &TriangleMesh<f64>,
    target: &GcnTarget,
    cfg: &GcnConfig,
    seed: u64,
) -> Result<GcnLoss> {
    let current = TriangleMesh {
        vertices: tape.value(verts).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        faces: mesh.faces.clone(),
    };
    let s = sample_surface(&current, cfg.samples, seed)?;
    let pred = tape.barycentric_points(verts, &mesh.faces, &s.faces, &s.bary)?;
    let gt = tape.constant(target.samples.to_tensor());
    let chamfer = tape.weighted_chamfer(pred, gt, &target.kappa)?;
    let edges = mesh.edges();
    let edge = edge_reg(tape, verts, &edges)?;
    let curvature = curvature_reg(tape, verts, &edges, &target.samples)?;
    let e = tape.scale(edge, cfg.lambda_edge);
    let c = tape.scale(curvature, cfg.lambda_curvature);
    let t = tape.add(chamfer, e)?;
    let total = tape.add(t, c)?;
    Ok(GcnLoss {
        chamfer,
        edge,
        curvature,
        total,
    })
}
