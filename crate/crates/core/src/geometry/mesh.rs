use std::collections::{BTreeMap, HashMap};

use super::pointset::{cross, norm, scale, sub, Point3};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Point3<T>>,
    pub faces: Vec<[usize; 3]>,
}

impl<T: Scalar> TriangleMesh<T> {
    /// Validates that face indices are in range and no face repeats a vertex.
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::invalid(format!("face {i} {f:?} indexes past {} vertices", vertices.len())));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {i} {f:?} is degenerate")));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn empty() -> Self {
        TriangleMesh {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Each undirected edge once, as `(lo, hi)`, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .faces
            .iter()
            .flat_map(|f| [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]])
            .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Number of faces incident to every undirected edge.
    pub fn edge_face_counts(&self) -> BTreeMap<[usize; 2], usize> {
        let mut m = BTreeMap::new();
        for f in &self.faces {
            for [a, b] in [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]] {
                *m.entry(if a < b { [a, b] } else { [b, a] }).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every edge shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().values().all(|&c| c == 2)
    }

    /// `V - E + F`, counting only vertices referenced by a face.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Genus of a closed connected surface.
    pub fn genus(&self) -> Result<i64> {
        if !self.is_watertight() {
            return Err(Error::invalid("genus needs a closed mesh"));
        }
        if self.face_components().iter().max().map_or(0, |&c| c + 1) != 1 {
            return Err(Error::invalid("genus needs a connected mesh"));
        }
        Ok((2 - self.euler_characteristic()) / 2)
    }

    /// Sorted neighbor lists of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut n = vec![Vec::new(); self.vertices.len()];
        for [a, b] in self.edges() {
            n[a].push(b);
            n[b].push(a);
        }
        for l in &mut n {
            l.sort_unstable();
        }
        n
    }

    /// Component id per face (faces connected through shared vertices).
    pub fn face_components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut ids = HashMap::new();
        self.faces
            .iter()
            .map(|f| {
                let root = find(&mut parent, f[0]);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Keeps the connected component with the most faces (lowest id on ties) and
    /// drops unreferenced vertices.
    pub fn largest_component(&self) -> TriangleMesh<T> {
        let comp = self.face_components();
        let Some(&max_id) = comp.iter().max() else {
            return TriangleMesh::empty();
        };
        let mut counts = vec![0usize; max_id + 1];
        for &c in &comp {
            counts[c] += 1;
        }
        let best = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        let faces: Vec<[usize; 3]> = self
            .faces
            .iter()
            .zip(&comp)
            .filter(|(_, &c)| c == best)
            .map(|(f, _)| *f)
            .collect();
        TriangleMesh {
            vertices: self.vertices.clone(),
            faces,
        }
        .compact()
    }

    /// Removes vertices not referenced by any face, preserving order.
    pub fn compact(&self) -> TriangleMesh<T> {
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for f in &self.faces {
            for &v in f {
                if map[v] == usize::MAX {
                    map[v] = 0;
                }
            }
        }
        for (i, m) in map.iter_mut().enumerate() {
            if *m != usize::MAX {
                *m = vertices.len();
                vertices.push(self.vertices[i]);
            }
        }
        let faces = self.faces.iter().map(|f| f.map(|v| map[v])).collect();
        TriangleMesh { vertices, faces }
    }

    pub fn face_vertices(&self, f: usize) -> [Point3<T>; 3] {
        self.faces[f].map(|v| self.vertices[v])
    }

    /// Unnormalized face normal (twice the area vector).
    pub fn face_cross(&self, f: usize) -> Point3<T> {
        let [a, b, c] = self.face_vertices(f);
        cross(sub(b, a), sub(c, a))
    }

    pub fn face_area(&self, f: usize) -> T {
        norm(self.face_cross(f)) * T::lit(0.5)
    }

    pub fn face_normal(&self, f: usize) -> Option<Point3<T>> {
        super::pointset::normalize(self.face_cross(f))
    }

    pub fn total_area(&self) -> T {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> T {
        let sixth = T::one() / T::lit(6.0);
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.face_vertices(f);
                super::pointset::dot(a, cross(b, c)) * sixth
            })
            .sum()
    }

    pub fn flip_orientation(&mut self) {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
    }

    pub fn translated(&self, t: Point3<T>) -> Self {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| super::pointset::add(v, t)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| scale(v, s)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Disjoint union.
    pub fn merge(&self, other: &TriangleMesh<T>) -> TriangleMesh<T> {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|v| v + off)));
        TriangleMesh { vertices, faces }
    }

    pub fn cast<U: Scalar>(&self) -> TriangleMesh<U> {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| p.map(|v| U::lit(v.to_f64_lossy()))).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Point3<T>, Point3<T>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }
}

/// Regular octahedron with vertices at distance `r` from the origin.
pub fn octahedron<T: Scalar>(r: T) -> TriangleMesh<T> {
    let z = T::zero();
    let vertices = vec![[r, z, z], [-r, z, z], [z, r, z], [z, -r, z], [z, z, r], [z, z, -r]];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    TriangleMesh { vertices, faces }
}

/// Torus around the z axis triangulated on an `nu x nv` grid.
pub fn grid_torus<T: Scalar>(major: f64, minor: f64, nu: usize, nv: usize) -> Result<TriangleMesh<T>> {
    if nu < 3 || nv < 3 || minor <= 0.0 || major <= minor {
        return Err(Error::invalid(format!("torus needs nu, nv >= 3 and 0 < minor < major (got {nu}, {nv}, {major}, {minor})")));
    }
    let tau = std::f64::consts::TAU;
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = tau * i as f64 / nu as f64;
        for j in 0..nv {
            let v = tau * j as f64 / nv as f64;
            let rr = major + minor * v.cos();
            vertices.push([T::lit(rr * u.cos()), T::lit(rr * u.sin()), T::lit(minor * v.sin())]);
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces)
}
