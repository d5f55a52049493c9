use super::pointset::Point3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pinhole camera: `x_cam = R x + t`, pixel `(fx X/Z + cx, fy Y/Z + cy)`.
///
/// The camera looks along `+Z` of its frame; image rows grow with `Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

const ORTHO_TOL: f64 = 1e-9;

/// Projected pixel coordinates and whether each point is in front of the camera and
/// inside the image.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub pixels: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        size: [usize; 2],
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    ) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width: size[0],
            height: size[1],
            rotation,
            translation,
        };
        cam.check()?;
        Ok(cam)
    }

    /// Rotation must be orthonormal within `1e-9`.
    pub fn check(&self) -> Result<()> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > ORTHO_TOL {
                    return Err(Error::invalid("camera rotation is not orthonormal"));
                }
            }
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target` with the given world up vector and a square
    /// image of `size` pixels.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], focal: f64, size: usize) -> Result<Self> {
        let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let cross = |a: [f64; 3], b: [f64; 3]| {
            [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
        };
        let unit = |a: [f64; 3]| {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if n < 1e-12 {
                Err(Error::invalid("degenerate camera frame"))
            } else {
                Ok([a[0] / n, a[1] / n, a[2] / n])
            }
        };
        let fwd = unit(sub(target, eye))?;
        let right = unit(cross(fwd, up))?;
        // Image rows grow downwards, so the camera Y axis points against `up`.
        let down = cross(fwd, right);
        let rotation = [right, down, fwd];
        let translation = [0, 1, 2].map(|i| -(0..3).map(|k| rotation[i][k] * eye[k]).sum::<f64>());
        let c = size as f64 / 2.0;
        Camera::new(focal, focal, c, c, [size, size], rotation, translation)
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| (0..3).map(|k| self.rotation[i][k] * p[k]).sum::<f64>() + self.translation[i])
    }

    /// Camera center in world coordinates.
    pub fn eye(&self) -> [f64; 3] {
        let t = self.translation;
        [0, 1, 2].map(|k| -(0..3).map(|i| self.rotation[i][k] * t[i]).sum::<f64>())
    }

    pub fn project_point(&self, p: [f64; 3]) -> ([f64; 2], bool) {
        let c = self.to_camera(p);
        if c[2] <= 1e-12 {
            return ([f64::NAN, f64::NAN], false);
        }
        let px = [self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy];
        let inside = px[0] >= 0.0 && px[1] >= 0.0 && px[0] <= self.width as f64 && px[1] <= self.height as f64;
        (px, inside)
    }

    pub fn project_vertices<T: Scalar>(&self, verts: &[Point3<T>]) -> Projection {
        let (pixels, valid) = verts
            .iter()
            .map(|v| self.project_point(v.map(|c| c.to_f64_lossy())))
            .unzip();
        Projection { pixels, valid }
    }
}
