use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::TriangleMesh;
use super::pointset::{Point3, PointSet};
use crate::autodiff::{backward_fn, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Area-weighted surface samples with the face and barycentric weights that produced them.
#[derive(Clone, Debug)]
pub struct SurfaceSamples<T> {
    /// Points with the unit normal of their face.
    pub points: PointSet<T>,
    pub faces: Vec<usize>,
    pub bary: Vec<[T; 3]>,
}

/// Draws `n` points uniformly by area. Deterministic for a fixed seed.
pub fn sample_surface<T: Scalar>(mesh: &TriangleMesh<T>, n: usize, seed: u64) -> Result<SurfaceSamples<T>> {
    if n == 0 {
        return Err(Error::invalid("sample_surface needs n >= 1"));
    }
    let mut cum = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0f64;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f).to_f64_lossy();
        cum.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    let mut bary = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.random::<f64>() * total;
        // First face whose cumulative area exceeds t; zero-area faces are never chosen.
        let f = cum.partition_point(|&c| c <= t).min(cum.len() - 1);
        let f = (f..cum.len()).find(|&g| mesh.face_area(g) > T::zero()).unwrap_or(f);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let w = [T::lit(1.0 - s), T::lit(s * (1.0 - r2)), T::lit(s * r2)];
        let [a, b, c] = mesh.face_vertices(f);
        let p: Point3<T> = [0, 1, 2].map(|k| w[0] * a[k] + w[1] * b[k] + w[2] * c[k]);
        points.push(p);
        normals.push(mesh.face_normal(f).expect("positive-area face"));
        faces.push(f);
        bary.push(w);
    }
    Ok(SurfaceSamples {
        points: PointSet::new(points).with_normals(normals)?,
        faces,
        bary,
    })
}

impl<T: Scalar> Tape<T> {
    /// Points `sum_k bary[i][k] * verts[faces[f_i][k]]` for vertex tensor `[V, 3]`.
    ///
    /// The gradient of each sample reaches its triangle's three vertices with the
    /// barycentric weights.
    pub fn barycentric_points(
        &mut self,
        verts: Var,
        mesh_faces: &[[usize; 3]],
        face_ids: &[usize],
        bary: &[[T; 3]],
    ) -> Result<Var> {
        let s = self.shape(verts).to_vec();
        if s.len() != 2 || s[1] != 3 || face_ids.len() != bary.len() {
            return Err(Error::shape("barycentric_points", &[&s, &[face_ids.len()], &[bary.len()]]));
        }
        if face_ids.iter().any(|&f| f >= mesh_faces.len()) || mesh_faces.iter().flatten().any(|&v| v >= s[0]) {
            return Err(Error::invalid("barycentric_points: index out of range"));
        }
        let tri: Arc<[[usize; 3]]> = face_ids.iter().map(|&f| mesh_faces[f]).collect();
        let bary: Arc<[[T; 3]]> = bary.into();
        let v = self.value(verts).data();
        let n = tri.len();
        let mut data = Vec::with_capacity(n * 3);
        for (t, w) in tri.iter().zip(bary.iter()) {
            for k in 0..3 {
                data.push(w[0] * v[3 * t[0] + k] + w[1] * v[3 * t[1] + k] + w[2] * v[3 * t[2] + k]);
            }
        }
        let nv = s[0];
        Ok(self.push(
            Tensor::new(vec![n, 3], data)?,
            &[verts],
            backward_fn("barycentric_points", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let gd = g.data();
                let mut gv = vec![T::zero(); nv * 3];
                for (i, (t, w)) in tri.iter().zip(bary.iter()).enumerate() {
                    for c in 0..3 {
                        for k in 0..3 {
                            gv[3 * t[c] + k] += w[c] * gd[3 * i + k];
                        }
                    }
                }
                vec![Some(Tensor::new(vec![nv, 3], gv).unwrap())]
            }),
        ))
    }
}
