//! Flat-shaded z-buffer rendering of meshes into RGB views.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skelforge_core::geometry::{Camera, TriangleMesh};
use skelforge_core::{Result, Tensor};

/// Camera placement for dataset views.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ViewConfig {
    pub size: usize,
    pub distance: f64,
    pub focal: f64,
    pub elevation_deg: [f64; 2],
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            size: 64,
            distance: 2.2,
            focal: 90.0,
            elevation_deg: [15.0, 35.0],
        }
    }
}

impl ViewConfig {
    /// Camera on a sphere around the origin at the given azimuth and elevation (radians).
    pub fn camera(&self, azimuth: f64, elevation: f64) -> Result<Camera> {
        let eye = [
            self.distance * elevation.cos() * azimuth.cos(),
            self.distance * elevation.cos() * azimuth.sin(),
            self.distance * elevation.sin(),
        ];
        Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], self.focal, self.size)
    }

    pub fn random_camera(&self, rng: &mut ChaCha8Rng) -> Result<Camera> {
        let az = rng.random_range(0.0..TAU);
        let [lo, hi] = self.elevation_deg;
        let el = if hi > lo { rng.random_range(lo..hi) } else { lo };
        self.camera(az, el.to_radians())
    }
}

const BASE_COLOR: [f64; 3] = [0.95, 0.8, 0.6];

/// Renders `[H, W, 3]` intensities in `[0, 1]`; background is black.
pub fn render_view(mesh: &TriangleMesh<f64>, cam: &Camera) -> Tensor<f64> {
    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut img = vec![0.0; w * h * 3];
    let eye = cam.eye();
    // Headlight raised slightly above the viewing direction.
    let light = {
        let l = [eye[0], eye[1], eye[2] + 0.8];
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };
    for f in 0..mesh.faces.len() {
        let Some(nrm) = mesh.face_normal(f) else { continue };
        let tri = mesh.face_vertices(f);
        let to_eye = [0, 1, 2].map(|k| eye[k] - tri[0][k]);
        if nrm[0] * to_eye[0] + nrm[1] * to_eye[1] + nrm[2] * to_eye[2] <= 0.0 {
            continue;
        }
        let cams = tri.map(|p| cam.to_camera(p));
        if cams.iter().any(|c| c[2] <= 1e-6) {
            continue;
        }
        let px = cams.map(|c| [cam.fx * c[0] / c[2] + cam.cx, cam.fy * c[1] / c[2] + cam.cy]);
        let shade = 0.25 + 0.75 * (nrm[0] * light[0] + nrm[1] * light[1] + nrm[2] * light[2]).max(0.0);
        let area = edge(px[0], px[1], px[2]);
        if area.abs() < 1e-12 {
            continue;
        }
        let xmin = px.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let ymin = px.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let xmax = (px.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as isize).min(w as isize - 1);
        let ymax = (px.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as isize).min(h as isize - 1);
        if xmax < 0 || ymax < 0 {
            continue;
        }
        for y in ymin..=ymax as usize {
            for x in xmin..=xmax as usize {
                let q = [x as f64 + 0.5, y as f64 + 0.5];
                let b = [edge(px[1], px[2], q) / area, edge(px[2], px[0], q) / area, edge(px[0], px[1], q) / area];
                if b.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let z = b[0] * cams[0][2] + b[1] * cams[1][2] + b[2] * cams[2][2];
                let i = y * w + x;
                if z < depth[i] {
                    depth[i] = z;
                    for c in 0..3 {
                        img[i * 3 + c] = shade * BASE_COLOR[c];
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, 3], img).expect("image shape")
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}
