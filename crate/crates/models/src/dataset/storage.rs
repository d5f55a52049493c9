//! On-disk layout of a generated sample and the JSONL manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use skelforge_core::geometry::Camera;
use skelforge_core::io::{read_obj, read_ply_points, read_skv, write_obj, write_ply_points, write_skv};
use skelforge_core::{Error, Result, Tensor};

use super::{ShapeSample, ShapeSpec, View};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub kind: super::ShapeKind,
    /// Sample directory relative to the manifest.
    pub dir: String,
    pub seed: u64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SampleMeta {
    spec: ShapeSpec,
    seed: u64,
    cameras: Vec<CameraJson>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        CameraJson {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: c.rotation,
            translation: c.translation,
        }
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format {
        kind: "json",
        msg: e.to_string(),
    }
}

fn image_err(e: image::ImageError) -> Error {
    Error::Format {
        kind: "png",
        msg: e.to_string(),
    }
}

/// Writes `mesh.obj`, `view_K.png`, `sample.json`, `skeleton.ply`, `surface.ply` and
/// `volume.skv` into `dir`.
pub fn write_sample(sample: &ShapeSample, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_obj(&sample.mesh, dir.join("mesh.obj"))?;
    for (k, view) in sample.views.iter().enumerate() {
        let shape = view.image.shape();
        let (h, w) = (shape[0], shape[1]);
        let bytes: Vec<u8> = view.image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        image::RgbImage::from_raw(w as u32, h as u32, bytes)
            .ok_or_else(|| Error::Invalid("image buffer size".into()))?
            .save(dir.join(format!("view_{k}.png")))
            .map_err(image_err)?;
    }
    let meta = SampleMeta {
        spec: sample.spec.clone(),
        seed: sample.seed,
        cameras: sample.views.iter().map(|v| CameraJson::from(&v.camera)).collect(),
    };
    fs::write(dir.join("sample.json"), serde_json::to_string_pretty(&meta).map_err(json_err)?)?;
    write_ply_points(&sample.skeleton, dir.join("skeleton.ply"))?;
    write_ply_points(&sample.surface, dir.join("surface.ply"))?;
    write_skv(&sample.volume, dir.join("volume.skv"))?;
    Ok(())
}

pub fn read_sample(dir: impl AsRef<Path>) -> Result<ShapeSample> {
    let dir = dir.as_ref();
    let meta: SampleMeta = serde_json::from_str(&fs::read_to_string(dir.join("sample.json"))?).map_err(json_err)?;
    let views = meta
        .cameras
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let img = image::open(dir.join(format!("view_{k}.png"))).map_err(image_err)?.to_rgb8();
            let (w, h) = img.dimensions();
            let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
            let camera = Camera::new(c.fx, c.fy, c.cx, c.cy, [c.width, c.height], c.rotation, c.translation)?;
            Ok(View {
                image: Tensor::new(vec![h as usize, w as usize, 3], data)?,
                camera,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapeSample {
        spec: meta.spec,
        seed: meta.seed,
        mesh: read_obj(dir.join("mesh.obj"))?,
        views,
        skeleton: read_ply_points(dir.join("skeleton.ply"))?,
        volume: read_skv(dir.join("volume.skv"))?,
        surface: read_ply_points(dir.join("surface.ply"))?,
    })
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for e in entries {
        writeln!(f, "{}", serde_json::to_string(e).map_err(json_err)?)?;
    }
    Ok(())
}

/// Entries plus each sample directory resolved against the manifest location.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(ManifestEntry, PathBuf)>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(&line).map_err(json_err)?;
        let dir = base.join(&e.dir);
        out.push((e, dir));
    }
    Ok(out)
}
