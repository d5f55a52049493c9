//! Training loops and single-shape inference shared by the commands.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use skelforge_core::autodiff::{Tape, Var};
use skelforge_core::geometry::{TriangleMesh, VoxelGrid};
use skelforge_core::nn::{Adam, EncoderOutput, ImageEncoder, ParamStore};
use skelforge_core::{Result, Tensor};
use skelforge_models::dataset::ShapeSample;
use skelforge_models::decoders::{assemble_skeleton, DecoderConfig, SkeletonDecoders};
use skelforge_models::point2voxel::{point_to_voxel, tensor_to_grid};
use skelforge_models::refinement::{
    coarse_target, refine_loss, skeletonnet_loss, RefineOutput, RefinementNet,
};
use skelforge_models::skedisn::{
    accuracy, batch_indices, extract_isosurface, skedisn_loss, FieldContext, FieldOutput, LabeledPoints, SkeDisn,
};
use skelforge_models::skegcnn::{
    extract_initial_mesh, lift_features, skegcnn_loss, GcnConfig, GcnTarget, SkeGcnn,
};

use crate::config::EncoderSection;

/// Loss values of one optimization step.
#[derive(Clone, Debug, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub shape: usize,
    pub total: f64,
    pub terms: BTreeMap<&'static str, f64>,
}

fn record(tape: &Tape<f64>, step: usize, shape: usize, total: Var, terms: &[(&'static str, Var)]) -> LossRecord {
    let val = |v: Var| tape.value(v).item().unwrap_or(f64::NAN);
    LossRecord {
        step,
        shape,
        total: val(total),
        terms: terms.iter().map(|&(k, v)| (k, val(v))).collect(),
    }
}

/// Image encoder and the two skeletal decoders; parameters live in one store.
#[derive(Clone, Debug)]
pub struct SkeletonModel {
    pub encoder: ImageEncoder,
    pub decoders: SkeletonDecoders,
}

/// Decoded curve and sheet points of one view.
#[derive(Clone, Copy, Debug)]
pub struct Decoded {
    pub curve: Var,
    pub sheet: Var,
    pub code: Var,
}

impl SkeletonModel {
    pub fn new(enc: &EncoderSection, dec: &DecoderConfig) -> Result<Self> {
        Ok(SkeletonModel {
            encoder: ImageEncoder::new("enc", enc.encoder_config()),
            decoders: SkeletonDecoders::new(dec)?,
        })
    }

    pub fn init(&self, store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.encoder.init(store, rng)?;
        self.decoders.init(store, rng)
    }

    pub fn encode(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, image: &Tensor<f64>) -> Result<EncoderOutput> {
        self.encoder.forward(tape, store, image)
    }

    pub fn decode_code(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, code: Var) -> Result<Decoded> {
        let d = self.decoders.forward(tape, store, code)?;
        Ok(Decoded {
            curve: d.curve,
            sheet: d.sheet,
            code,
        })
    }

    /// Labeled skeleton points decoded from a `[1, m]` code.
    pub fn skeleton_from_code(&self, store: &ParamStore<f64>, code: &Tensor<f64>) -> Result<skelforge_core::geometry::PointSet<f64>> {
        let mut tape = Tape::new();
        let c = tape.constant(code.clone());
        let d = self.decode_code(&mut tape, store, c)?;
        assemble_skeleton(tape.value(d.curve), tape.value(d.sheet))
    }

    /// Global code of one image, detached.
    pub fn code_of(&self, store: &ParamStore<f64>, image: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, store, image)?;
        Ok(tape.value(enc.global_code).clone())
    }
}

fn pick_view(rng: &mut ChaCha8Rng, sample: &ShapeSample) -> usize {
    rng.random_range(0..sample.views.len())
}

/// Decoder training with `L_phi + L_psi`; shapes are visited in turn with a random view.
pub fn train_decoders(
    model: &SkeletonModel,
    store: &mut ParamStore<f64>,
    samples: &[ShapeSample],
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<LossRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adam = Adam::default();
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let s = step % samples.len();
        let sample = &samples[s];
        let view = &sample.views[pick_view(&mut rng, sample)];
        let mut tape = Tape::new();
        let enc = model.encode(&mut tape, store, &view.image)?;
        let out = model.decoders.forward(&mut tape, store, enc.global_code)?;
        let l = model.decoders.loss(&mut tape, out, &sample.skeleton)?;
        log.push(record(&tape, step, s, l.total, &[("curve", l.curve), ("sheet", l.sheet)]));
        let grads = tape.backward(l.total)?;
        store.absorb_grads(&tape, &grads);
        store.step(&adam, lr)?;
    }
    Ok(log)
}

/// Parameter stores of the end-to-end model.
pub struct JointStores<'a> {
    pub skeleton: &'a mut ParamStore<f64>,
    pub global: &'a mut ParamStore<f64>,
    pub local: &'a mut ParamStore<f64>,
}

/// Terms of `L_phi + L_psi + beta L_refine` for one view.
#[derive(Clone, Copy, Debug)]
pub struct JointEval {
    pub curve: Var,
    pub sheet: Var,
    /// Cross-entropy of the stitched volume `V`.
    pub refine_fine: Var,
    /// Cross-entropy of the global stream output against the pooled target.
    pub refine_coarse: Var,
    pub refine: Var,
    pub total: Var,
    pub output: RefineOutput,
}

/// Decodes the skeleton, voxelizes it at `r/2` and refines it to `V`.
#[allow(clippy::too_many_arguments)]
pub fn joint_forward(
    tape: &mut Tape<f64>,
    model: &SkeletonModel,
    net: &RefinementNet,
    skeleton: &ParamStore<f64>,
    global: &ParamStore<f64>,
    local: &ParamStore<f64>,
    sample: &ShapeSample,
    view: usize,
    beta: f64,
) -> Result<JointEval> {
    let enc = model.encode(tape, skeleton, &sample.views[view].image)?;
    let dec = model.decoders.forward(tape, skeleton, enc.global_code)?;
    let l = model.decoders.loss(tape, dec, &sample.skeleton)?;
    let pts = tape.concat(&[dec.curve, dec.sheet], 0)?;
    let u_in = point_to_voxel(tape, pts, net.cfg.input_res(), net.cfg.p2v)?;
    let output = net.forward(tape, global, local, u_in, enc.global_code)?;
    let refine_fine = refine_loss(tape, output.refined, &sample.volume)?;
    let coarse = coarse_target(&sample.volume, net.cfg.coarse_res())?;
    let refine_coarse = refine_loss(tape, output.coarse, &coarse)?;
    let refine = tape.add(refine_fine, refine_coarse)?;
    let total = skeletonnet_loss(tape, l.curve, l.sheet, refine, beta)?;
    Ok(JointEval {
        curve: l.curve,
        sheet: l.sheet,
        refine_fine,
        refine_coarse,
        refine,
        total,
        output,
    })
}

/// Joint training. With `update_skeleton` false the encoder and decoders stay fixed and
/// only the refinement loss is optimized.
#[allow(clippy::too_many_arguments)]
pub fn train_joint(
    model: &SkeletonModel,
    net: &RefinementNet,
    stores: JointStores,
    samples: &[ShapeSample],
    steps: usize,
    lr: f64,
    beta: f64,
    update_skeleton: bool,
    seed: u64,
) -> Result<Vec<LossRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adam = Adam::default();
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let s = step % samples.len();
        let view = pick_view(&mut rng, &samples[s]);
        let mut tape = Tape::new();
        let e = joint_forward(&mut tape, model, net, stores.skeleton, stores.global, stores.local, &samples[s], view, beta)?;
        let objective = if update_skeleton { e.total } else { e.refine };
        log.push(record(
            &tape,
            step,
            s,
            objective,
            &[
                ("curve", e.curve),
                ("sheet", e.sheet),
                ("refine", e.refine),
                ("refine_fine", e.refine_fine),
                ("refine_coarse", e.refine_coarse),
            ],
        ));
        let grads = tape.backward(objective)?;
        if update_skeleton {
            stores.skeleton.absorb_grads(&tape, &grads);
            stores.skeleton.step(&adam, lr)?;
        }
        stores.global.absorb_grads(&tape, &grads);
        stores.local.absorb_grads(&tape, &grads);
        stores.global.step(&adam, lr)?;
        stores.local.step(&adam, lr)?;
    }
    Ok(log)
}

/// Refined skeletal volume `V` predicted from one view.
pub fn predict_volume(
    model: &SkeletonModel,
    net: &RefinementNet,
    skeleton: &ParamStore<f64>,
    global: &ParamStore<f64>,
    local: &ParamStore<f64>,
    image: &Tensor<f64>,
) -> Result<VoxelGrid<f64>> {
    let mut tape = Tape::new();
    let enc = model.encode(&mut tape, skeleton, image)?;
    let dec = model.decoders.forward(&mut tape, skeleton, enc.global_code)?;
    let pts = tape.concat(&[dec.curve, dec.sheet], 0)?;
    let u_in = point_to_voxel(&mut tape, pts, net.cfg.input_res(), net.cfg.p2v)?;
    let out = net.forward(&mut tape, global, local, u_in, enc.global_code)?;
    tensor_to_grid(tape.value(out.refined))
}

/// Initial mesh, adjacency and supervision for one shape.
#[derive(Clone, Debug)]
pub struct GcnShape {
    pub mesh: TriangleMesh<f64>,
    pub neighbors: Vec<Vec<usize>>,
    pub target: GcnTarget,
}

impl GcnShape {
    pub fn new(volume: &VoxelGrid<f64>, gt_mesh: &TriangleMesh<f64>, cfg: &GcnConfig, seed: u64) -> Result<Self> {
        let mesh = extract_initial_mesh(volume, cfg.iso, cfg.max_vertices)?;
        Ok(GcnShape {
            neighbors: mesh.vertex_neighbors(),
            target: GcnTarget::new(gt_mesh, cfg, seed)?,
            mesh,
        })
    }
}

/// Width of the per-vertex GCN input for an encoder.
pub fn gcn_input_width(enc: &EncoderSection) -> usize {
    enc.pixel_channels() + 3
}

/// Deformed vertices `[V, 3]` for one view; the image encoder is held fixed.
#[allow(clippy::too_many_arguments)]
pub fn gcn_forward(
    tape: &mut Tape<f64>,
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    gcn: &SkeGcnn,
    store: &ParamStore<f64>,
    shape: &GcnShape,
    sample: &ShapeSample,
    view: usize,
) -> Result<Var> {
    let v = &sample.views[view];
    let enc = model.encode(tape, skeleton, &v.image)?;
    let feats = lift_features(tape, &enc, &v.camera, &shape.mesh.vertices)?;
    gcn.deform(tape, store, &shape.mesh, &shape.neighbors, feats)
}

#[allow(clippy::too_many_arguments)]
pub fn train_gcn(
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    gcn: &SkeGcnn,
    store: &mut ParamStore<f64>,
    cfg: &GcnConfig,
    shapes: &[GcnShape],
    samples: &[ShapeSample],
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<LossRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adam = Adam::default();
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let s = step % shapes.len();
        let view = pick_view(&mut rng, &samples[s]);
        let mut tape = Tape::new();
        let verts = gcn_forward(&mut tape, model, skeleton, gcn, store, &shapes[s], &samples[s], view)?;
        let l = skegcnn_loss(&mut tape, verts, &shapes[s].mesh, &shapes[s].target, cfg, seed.wrapping_add(step as u64))?;
        log.push(record(
            &tape,
            step,
            s,
            l.total,
            &[("chamfer", l.chamfer), ("edge", l.edge), ("curvature", l.curvature)],
        ));
        let grads = tape.backward(l.total)?;
        store.absorb_grads(&tape, &grads);
        store.step(&adam, lr)?;
    }
    Ok(log)
}

/// Deformed mesh for one view.
pub fn gcn_mesh(
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    gcn: &SkeGcnn,
    store: &ParamStore<f64>,
    shape: &GcnShape,
    sample: &ShapeSample,
    view: usize,
) -> Result<TriangleMesh<f64>> {
    let mut tape = Tape::new();
    let v = gcn_forward(&mut tape, model, skeleton, gcn, store, shape, sample, view)?;
    Ok(TriangleMesh {
        vertices: tape.value(v).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        faces: shape.mesh.faces.clone(),
    })
}

/// One shape's inputs to the implicit network.
pub struct DisnShape<'a> {
    pub sample: &'a ShapeSample,
    /// Skeletal volume guiding the skeleton stream.
    pub volume: &'a VoxelGrid<f64>,
    pub points: LabeledPoints,
}

/// Field at `points` for one view; the image encoder is held fixed.
#[allow(clippy::too_many_arguments)]
pub fn disn_forward(
    tape: &mut Tape<f64>,
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    disn: &SkeDisn,
    store: &ParamStore<f64>,
    sample: &ShapeSample,
    volume: &VoxelGrid<f64>,
    view: usize,
    points: &[[f64; 3]],
) -> Result<FieldOutput> {
    let v = &sample.views[view];
    let enc = model.encode(tape, skeleton, &v.image)?;
    let ctx = FieldContext {
        encoding: &enc,
        camera: &v.camera,
        volume,
    };
    disn.field(tape, store, &ctx, points)
}

#[allow(clippy::too_many_arguments)]
pub fn train_disn(
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    disn: &SkeDisn,
    store: &mut ParamStore<f64>,
    shapes: &[DisnShape],
    steps: usize,
    lr: f64,
    batch: usize,
    seed: u64,
) -> Result<Vec<LossRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adam = Adam::default();
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let s = step % shapes.len();
        let sh = &shapes[s];
        let view = pick_view(&mut rng, sh.sample);
        let idx = batch_indices(sh.points.points.len(), batch, &mut rng);
        let pts: Vec<[f64; 3]> = idx.iter().map(|&i| sh.points.points[i]).collect();
        let lab: Vec<bool> = idx.iter().map(|&i| sh.points.inside[i]).collect();
        let mut tape = Tape::new();
        let out = disn_forward(&mut tape, model, skeleton, disn, store, sh.sample, sh.volume, view, &pts)?;
        let loss = skedisn_loss(&mut tape, out.prob, &lab)?;
        let mut r = record(&tape, step, s, loss, &[]);
        r.terms.insert("accuracy", accuracy(tape.value(out.prob), &lab));
        log.push(r);
        let grads = tape.backward(loss)?;
        store.absorb_grads(&tape, &grads);
        store.step(&adam, lr)?;
    }
    Ok(log)
}

/// Inside probabilities at `points`, evaluated in batches.
#[allow(clippy::too_many_arguments)]
pub fn disn_probabilities(
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    disn: &SkeDisn,
    store: &ParamStore<f64>,
    sample: &ShapeSample,
    volume: &VoxelGrid<f64>,
    view: usize,
    points: &[[f64; 3]],
    batch: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(batch.max(1)) {
        let mut tape = Tape::new();
        let f = disn_forward(&mut tape, model, skeleton, disn, store, sample, volume, view, chunk)?;
        out.extend(tape.value(f.prob).data().chunks(2).map(|p| p[1]));
    }
    Ok(out)
}

/// Classification accuracy on labeled points.
#[allow(clippy::too_many_arguments)]
pub fn disn_accuracy(
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    disn: &SkeDisn,
    store: &ParamStore<f64>,
    sample: &ShapeSample,
    volume: &VoxelGrid<f64>,
    view: usize,
    points: &LabeledPoints,
    batch: usize,
) -> Result<f64> {
    let p = disn_probabilities(model, skeleton, disn, store, sample, volume, view, &points.points, batch)?;
    let hits = p.iter().zip(&points.inside).filter(|(&p, &i)| (p > 0.5) == i).count();
    Ok(hits as f64 / points.inside.len().max(1) as f64)
}

/// Surface of the 0.5 level set on an `res^3` lattice.
#[allow(clippy::too_many_arguments)]
pub fn disn_mesh(
    model: &SkeletonModel,
    skeleton: &ParamStore<f64>,
    disn: &SkeDisn,
    store: &ParamStore<f64>,
    sample: &ShapeSample,
    volume: &VoxelGrid<f64>,
    view: usize,
    res: usize,
    batch: usize,
) -> Result<TriangleMesh<f64>> {
    let (mesh, _) = extract_isosurface(res, 0.5, batch, |pts| {
        disn_probabilities(model, skeleton, disn, store, sample, volume, view, pts, batch)
    })?;
    Ok(mesh)
}
