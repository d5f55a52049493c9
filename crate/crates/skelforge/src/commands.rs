//! One function per subcommand. Artifacts live under `paths.data` and `paths.run`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use skelforge_core::geometry::{TriangleMesh, VoxelGrid};
use skelforge_core::io::{read_obj, read_skv, write_obj, write_ply_points, write_skv};
use skelforge_core::nn::ParamStore;
use skelforge_core::Tensor;
use skelforge_models::dataset::{
    generate_shape, read_manifest, read_sample, write_manifest, write_sample, ManifestEntry, ShapeSample, ShapeSpec,
};
use skelforge_models::refinement::RefinementNet;
use skelforge_models::skedisn::{sample_training_points, SkeDisn};
use skelforge_models::skegcnn::SkeGcnn;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::metrics::{chamfer_metric, iou_metric};
use crate::parallel_map;
use crate::train::{
    disn_mesh, gcn_input_width, gcn_mesh, predict_volume, train_decoders, train_disn, train_gcn, train_joint,
    DisnShape, GcnShape, JointStores, LossRecord, SkeletonModel,
};

/// Reconstruction methods and their mesh directories under `meshes/`.
pub const METHODS: [&str; 2] = ["explicit", "implicit"];

/// JSON-lines event log of one command.
pub struct RunLog {
    out: BufWriter<File>,
}

impl RunLog {
    pub fn create(run: &Path, command: &str) -> CliResult<Self> {
        let dir = run.join("logs");
        fs::create_dir_all(&dir)?;
        Ok(RunLog {
            out: BufWriter::new(File::create(dir.join(format!("{command}.jsonl")))?),
        })
    }

    pub fn event(&mut self, v: serde_json::Value) -> CliResult<()> {
        writeln!(self.out, "{v}")?;
        Ok(())
    }

    pub fn losses(&mut self, phase: &str, log: &[LossRecord]) -> CliResult<()> {
        for r in log {
            self.event(json!({"phase": phase, "step": r.step, "shape": r.shape, "loss": r.total, "terms": r.terms}))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Generated samples with their manifest ids.
pub struct Dataset {
    pub ids: Vec<String>,
    pub samples: Vec<ShapeSample>,
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.data.join("manifest.jsonl")
}

fn require(path: &Path, hint: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path, hint))
    }
}

pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let manifest = manifest_path(cfg);
    require(&manifest, "run `skelforge gen-data` first")?;
    let entries = read_manifest(&manifest)?;
    let mut ids = Vec::new();
    let mut samples = Vec::new();
    for (e, dir) in entries {
        require(&dir, "the dataset is incomplete; rerun `skelforge gen-data`")?;
        samples.push(read_sample(&dir)?);
        ids.push(e.id);
    }
    if samples.is_empty() {
        return Err(CliError::Config(format!("{} lists no samples", manifest.display())));
    }
    Ok(Dataset { ids, samples })
}

fn skeleton_params(cfg: &RunConfig) -> PathBuf {
    cfg.paths.run.join("skeleton.skf")
}

fn refine_params(cfg: &RunConfig) -> [PathBuf; 2] {
    [cfg.paths.run.join("refine_global.skf"), cfg.paths.run.join("refine_local.skf")]
}

fn volume_path(cfg: &RunConfig, id: &str) -> PathBuf {
    cfg.paths.run.join("volumes").join(format!("{id}.skv"))
}

pub fn mesh_path(cfg: &RunConfig, method: &str, id: &str) -> PathBuf {
    cfg.paths.run.join("meshes").join(method).join(format!("{id}.obj"))
}

fn load_skeleton_model(cfg: &RunConfig) -> CliResult<(SkeletonModel, ParamStore<f64>)> {
    let path = skeleton_params(cfg);
    require(&path, "run `skelforge train-skeleton` first")?;
    let model = SkeletonModel::new(&cfg.encoder, &cfg.skeleton.decoders)?;
    let mut store = ParamStore::new();
    model.init(&mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    store.load_values_from(&ParamStore::load(&path)?)?;
    Ok((model, store))
}

fn load_volumes(cfg: &RunConfig, ids: &[String]) -> CliResult<Vec<VoxelGrid<f64>>> {
    ids.iter()
        .map(|id| {
            let p = volume_path(cfg, id);
            require(&p, "run `skelforge refine` first")?;
            Ok(read_skv(&p)?)
        })
        .collect()
}

fn write_config(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.paths.run)?;
    fs::write(cfg.paths.run.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn collect<T>(results: Vec<skelforge_core::Result<T>>) -> CliResult<Vec<T>> {
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

/// Generates `data.shapes` procedural shapes, cycling through `data.kinds`.
pub fn gen_data(cfg: &RunConfig) -> CliResult<Vec<ManifestEntry>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.paths.data)?;
    let jobs: Vec<(usize, u64)> = (0..cfg.data.shapes)
        .map(|i| (i, cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect();
    let entries = parallel_map(&jobs, cfg.workers, |_, &(i, seed)| -> skelforge_core::Result<ManifestEntry> {
        let kind = cfg.data.kinds[i % cfg.data.kinds.len()];
        let spec = ShapeSpec::random(kind, &mut ChaCha8Rng::seed_from_u64(seed));
        let sample = generate_shape(&spec, &cfg.data.dataset, seed)?;
        let id = format!("{i:03}_{}", kind.name());
        write_sample(&sample, cfg.paths.data.join(&id))?;
        Ok(ManifestEntry {
            dir: id.clone(),
            id,
            kind,
            seed,
        })
    });
    let entries = collect(entries)?;
    write_manifest(manifest_path(cfg), &entries)?;
    let mut log = RunLog::create(&cfg.paths.run, "gen-data")?;
    for e in &entries {
        log.event(json!({"event": "sample", "id": e.id, "seed": e.seed}))?;
    }
    log.finish()?;
    Ok(entries)
}

/// Trains the encoder and skeletal decoders, optionally followed by end-to-end steps
/// through the refinement network, and writes each shape's decoded skeleton.
pub fn train_skeleton(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    write_config(cfg)?;
    let mut log = RunLog::create(&cfg.paths.run, "train-skeleton")?;
    let model = SkeletonModel::new(&cfg.encoder, &cfg.skeleton.decoders)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    model.init(&mut store, &mut rng)?;
    let s = &cfg.skeleton;
    let hist = train_decoders(&model, &mut store, &data.samples, s.steps, s.lr, cfg.seed ^ 0x51)?;
    log.losses("decoders", &hist)?;
    if s.joint_steps > 0 {
        let net = RefinementNet::new(cfg.refine.net.clone())?;
        let (mut g, mut l) = (ParamStore::new(), ParamStore::new());
        net.init(&mut g, &mut l, &mut rng)?;
        let stores = JointStores {
            skeleton: &mut store,
            global: &mut g,
            local: &mut l,
        };
        let hist = train_joint(&model, &net, stores, &data.samples, s.joint_steps, s.lr, s.beta, true, cfg.seed ^ 0x52)?;
        log.losses("joint", &hist)?;
        let [gp, lp] = refine_params(cfg);
        g.save(gp)?;
        l.save(lp)?;
    }
    store.save(skeleton_params(cfg))?;
    let dir = cfg.paths.run.join("skeletons");
    fs::create_dir_all(&dir)?;
    let skels = parallel_map(&data.samples, cfg.workers, |_, sample| {
        let code = model.code_of(&store, &sample.views[0].image)?;
        model.skeleton_from_code(&store, &code)
    });
    for (id, sk) in data.ids.iter().zip(collect(skels)?) {
        write_ply_points(&sk, dir.join(format!("{id}.ply")))?;
    }
    log.event(json!({"event": "done", "shapes": data.ids.len()}))?;
    log.finish()
}

/// Trains the refinement network on decoded skeletons (decoders fixed) and writes the
/// refined volume of every shape.
pub fn refine(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (model, mut skel) = load_skeleton_model(cfg)?;
    write_config(cfg)?;
    let mut log = RunLog::create(&cfg.paths.run, "refine")?;
    let net = RefinementNet::new(cfg.refine.net.clone())?;
    let (mut g, mut l) = (ParamStore::new(), ParamStore::new());
    net.init(&mut g, &mut l, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e))?;
    let [gp, lp] = refine_params(cfg);
    if gp.exists() && lp.exists() {
        g.load_values_from(&ParamStore::load(&gp)?)?;
        l.load_values_from(&ParamStore::load(&lp)?)?;
        log.event(json!({"event": "resume", "from": gp.display().to_string()}))?;
    }
    let stores = JointStores {
        skeleton: &mut skel,
        global: &mut g,
        local: &mut l,
    };
    let r = &cfg.refine;
    let hist = train_joint(&model, &net, stores, &data.samples, r.steps, r.lr, 1.0, false, cfg.seed ^ 0x7f)?;
    log.losses("refine", &hist)?;
    g.save(&gp)?;
    l.save(&lp)?;
    fs::create_dir_all(cfg.paths.run.join("volumes"))?;
    let vols = parallel_map(&data.samples, cfg.workers, |_, s| {
        predict_volume(&model, &net, &skel, &g, &l, &s.views[0].image)
    });
    for (id, v) in data.ids.iter().zip(collect(vols)?) {
        write_skv(&v, volume_path(cfg, id))?;
        log.event(json!({"event": "volume", "id": id, "occupied": v.count_occupied(0.5)}))?;
    }
    log.finish()
}

/// Predicted volumes never reaching `iso` are meshed at half their maximum instead.
fn usable_iso(v: &VoxelGrid<f64>, iso: f64) -> f64 {
    let (lo, hi) = v.min_max();
    if iso > lo && iso < hi {
        iso
    } else {
        0.5 * (lo + hi)
    }
}

/// Deforms the surface of each refined volume with the graph network and writes OBJ meshes.
pub fn recon_explicit(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (model, skel) = load_skeleton_model(cfg)?;
    let vols = load_volumes(cfg, &data.ids)?;
    write_config(cfg)?;
    let mut log = RunLog::create(&cfg.paths.run, "recon-explicit")?;
    let e = &cfg.explicit;
    let shapes = parallel_map(&data.samples, cfg.workers, |i, s| {
        let iso = usable_iso(&vols[i], e.gcn.iso);
        if iso != e.gcn.iso {
            log::warn!("{}: refined volume never crosses {}, meshing at {iso:.3}", data.ids[i], e.gcn.iso);
        }
        let gcfg = skelforge_models::skegcnn::GcnConfig {
            iso,
            ..e.gcn.clone()
        };
        GcnShape::new(&vols[i], &s.mesh, &gcfg, cfg.seed.wrapping_add(i as u64))
    });
    let shapes = collect(shapes)?;
    for (id, sh) in data.ids.iter().zip(&shapes) {
        log.event(json!({"event": "initial_mesh", "id": id, "vertices": sh.mesh.vertices.len(), "euler": sh.mesh.euler_characteristic()}))?;
    }
    let gcn = SkeGcnn::new(gcn_input_width(&cfg.encoder), &e.gcn);
    let mut store = ParamStore::new();
    gcn.init(&mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6c))?;
    let hist = train_gcn(&model, &skel, &gcn, &mut store, &e.gcn, &shapes, &data.samples, e.steps, e.lr, cfg.seed ^ 0x6d)?;
    log.losses("gcn", &hist)?;
    store.save(cfg.paths.run.join("gcn.skf"))?;
    fs::create_dir_all(cfg.paths.run.join("meshes").join("explicit"))?;
    let meshes = parallel_map(&shapes, cfg.workers, |i, sh| gcn_mesh(&model, &skel, &gcn, &store, sh, &data.samples[i], 0));
    for (id, m) in data.ids.iter().zip(collect(meshes)?) {
        write_obj(&m, mesh_path(cfg, "explicit", id))?;
    }
    log.finish()
}

/// Trains the implicit field on near-surface points and writes each shape's 0.5 level set.
pub fn recon_implicit(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (model, skel) = load_skeleton_model(cfg)?;
    let vols = load_volumes(cfg, &data.ids)?;
    write_config(cfg)?;
    let mut log = RunLog::create(&cfg.paths.run, "recon-implicit")?;
    let im = &cfg.implicit;
    let d = &im.disn;
    let points = parallel_map(&data.samples, cfg.workers, |i, s| {
        sample_training_points(&s.mesh, im.points, d.epsilon, d.sigma, cfg.seed.wrapping_add(i as u64))
    });
    let shapes: Vec<DisnShape> = collect(points)?
        .into_iter()
        .enumerate()
        .map(|(i, points)| DisnShape {
            sample: &data.samples[i],
            volume: &vols[i],
            points,
        })
        .collect();
    let disn = SkeDisn::new(d.clone())?;
    let mut store = ParamStore::new();
    disn.init(&mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd1))?;
    let hist = train_disn(&model, &skel, &disn, &mut store, &shapes, im.steps, im.lr, im.batch, cfg.seed ^ 0xd2)?;
    log.losses("disn", &hist)?;
    store.save(cfg.paths.run.join("disn.skf"))?;
    fs::create_dir_all(cfg.paths.run.join("meshes").join("implicit"))?;
    let meshes = parallel_map(&shapes, cfg.workers, |_, sh| {
        disn_mesh(&model, &skel, &disn, &store, sh.sample, sh.volume, 0, im.mesh_res, 4096)
    });
    for (id, m) in data.ids.iter().zip(meshes) {
        match m {
            Ok(m) => write_obj(&m, mesh_path(cfg, "implicit", id))?,
            Err(e) => {
                log::warn!("{id}: no implicit surface ({e})");
                log.event(json!({"event": "no_surface", "id": id, "error": e.to_string()}))?;
            }
        }
    }
    log.finish()
}

/// One evaluated mesh.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MetricRow {
    pub method: String,
    pub id: String,
    pub cd: f64,
    pub iou: f64,
}

/// Chamfer distance and IoU of one predicted mesh against its ground truth.
pub fn evaluate_mesh(cfg: &RunConfig, pred: &TriangleMesh<f64>, gt: &TriangleMesh<f64>) -> CliResult<(f64, f64)> {
    let seed = cfg.seed ^ 0xe7a1;
    Ok((
        chamfer_metric(pred, gt, cfg.eval.samples, seed)?,
        iou_metric(pred, gt, cfg.eval.iou_res, seed)?,
    ))
}

/// Scores every reconstructed mesh and writes `metrics.csv` with per-method means.
pub fn eval(cfg: &RunConfig) -> CliResult<Vec<MetricRow>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let mut jobs = Vec::new();
    for method in METHODS {
        for (i, id) in data.ids.iter().enumerate() {
            let p = mesh_path(cfg, method, id);
            if p.exists() {
                jobs.push((method, i, p));
            }
        }
    }
    if jobs.is_empty() {
        return Err(CliError::missing(
            cfg.paths.run.join("meshes"),
            "run `skelforge recon-explicit` or `skelforge recon-implicit` first",
        ));
    }
    let rows = parallel_map(&jobs, cfg.workers, |_, (method, i, p)| -> CliResult<MetricRow> {
        let pred = read_obj(p)?;
        let (cd, iou) = evaluate_mesh(cfg, &pred, &data.samples[*i].mesh)?;
        Ok(MetricRow {
            method: method.to_string(),
            id: data.ids[*i].clone(),
            cd,
            iou,
        })
    });
    let rows: Vec<MetricRow> = rows.into_iter().collect::<CliResult<_>>()?;
    fs::create_dir_all(&cfg.paths.run)?;
    let mut csv = BufWriter::new(File::create(cfg.paths.run.join("metrics.csv"))?);
    writeln!(csv, "method,id,cd_x1000,iou")?;
    for r in &rows {
        writeln!(csv, "{},{},{:.6},{:.6}", r.method, r.id, r.cd, r.iou)?;
    }
    let mut log = RunLog::create(&cfg.paths.run, "eval")?;
    for method in METHODS {
        let sel: Vec<&MetricRow> = rows.iter().filter(|r| r.method == method).collect();
        if sel.is_empty() {
            continue;
        }
        let n = sel.len() as f64;
        let cd = sel.iter().map(|r| r.cd).sum::<f64>() / n;
        let iou = sel.iter().map(|r| r.iou).sum::<f64>() / n;
        writeln!(csv, "{method},mean,{cd:.6},{iou:.6}")?;
        log.event(json!({"method": method, "shapes": sel.len(), "cd_x1000": cd, "iou": iou}))?;
    }
    csv.flush()?;
    log.finish()?;
    Ok(rows)
}

/// `(1 - w) a + w b`
pub fn blend_codes(a: &Tensor<f64>, b: &Tensor<f64>, w: f64) -> Tensor<f64> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| (1.0 - w) * x + w * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Decodes skeletons from blends of two shapes' global codes.
pub fn interp(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (model, store) = load_skeleton_model(cfg)?;
    let n = data.samples.len();
    let (a, b) = (cfg.interp.a, cfg.interp.b);
    if a >= n || b >= n {
        return Err(CliError::Config(format!("interp endpoints {a}, {b} outside the {n} dataset shapes")));
    }
    let ca = model.code_of(&store, &data.samples[a].views[0].image)?;
    let cb = model.code_of(&store, &data.samples[b].views[0].image)?;
    let dir = cfg.paths.run.join("interp");
    fs::create_dir_all(&dir)?;
    let mut log = RunLog::create(&cfg.paths.run, "interp")?;
    let mut out = Vec::new();
    for &w in &cfg.interp.weights {
        let sk = model.skeleton_from_code(&store, &blend_codes(&ca, &cb, w))?;
        let p = dir.join(format!("{}_{}_w{w:.2}.ply", data.ids[a], data.ids[b]));
        write_ply_points(&sk, &p)?;
        log.event(json!({"w": w, "points": sk.len(), "file": p.display().to_string()}))?;
        out.push(p);
    }
    log.finish()?;
    Ok(out)
}
