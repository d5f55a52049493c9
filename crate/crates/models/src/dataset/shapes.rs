//! Procedural shapes with analytic skeletons.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skelforge_core::geometry::{center_coord, grid_torus, marching_cubes, Label, PointSet, TriangleMesh, VoxelGrid};
use skelforge_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Torus,
    BoxFrame,
    MultiLegTable,
    Sphere,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Torus, ShapeKind::BoxFrame, ShapeKind::MultiLegTable, ShapeKind::Sphere];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Torus => "torus",
            ShapeKind::BoxFrame => "box_frame",
            ShapeKind::MultiLegTable => "multi_leg_table",
            ShapeKind::Sphere => "sphere",
        }
    }
}

/// Shape parameters. All lengths are in the canonical cube `[-0.5, 0.5]^3`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    /// Ring around the z axis; `0.15 <= major <= 0.35`, `0.04 <= minor <= 0.12`.
    Torus { major: f64, minor: f64 },
    /// Square bars along the 12 edges of a cube; `0.2 <= half <= 0.38`,
    /// `0.02 <= bar <= half / 4`.
    BoxFrame { half: f64, bar: f64 },
    /// Square table top on `3..=6` legs placed on a circle.
    MultiLegTable {
        legs: usize,
        top_half: f64,
        top_thick: f64,
        leg_half: f64,
        height: f64,
    },
    /// `0.1 <= radius <= 0.42`.
    Sphere { radius: f64 },
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(format!("shape parameter out of range: {what}")))
    }
}

impl ShapeSpec {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeSpec::Torus { .. } => ShapeKind::Torus,
            ShapeSpec::BoxFrame { .. } => ShapeKind::BoxFrame,
            ShapeSpec::MultiLegTable { .. } => ShapeKind::MultiLegTable,
            ShapeSpec::Sphere { .. } => ShapeKind::Sphere,
        }
    }

    pub fn default_for(kind: ShapeKind) -> ShapeSpec {
        match kind {
            ShapeKind::Torus => ShapeSpec::Torus { major: 0.3, minor: 0.1 },
            ShapeKind::BoxFrame => ShapeSpec::BoxFrame { half: 0.32, bar: 0.05 },
            ShapeKind::MultiLegTable => ShapeSpec::MultiLegTable {
                legs: 4,
                top_half: 0.38,
                top_thick: 0.05,
                leg_half: 0.04,
                height: 0.7,
            },
            ShapeKind::Sphere => ShapeSpec::Sphere { radius: 0.35 },
        }
    }

    /// Uniformly drawn parameters inside the documented ranges.
    pub fn random(kind: ShapeKind, rng: &mut ChaCha8Rng) -> ShapeSpec {
        match kind {
            ShapeKind::Torus => ShapeSpec::Torus {
                major: rng.random_range(0.22..0.33),
                minor: rng.random_range(0.07..0.12),
            },
            ShapeKind::BoxFrame => {
                let half = rng.random_range(0.26..0.36);
                ShapeSpec::BoxFrame {
                    half,
                    bar: rng.random_range(0.035..0.06),
                }
            }
            ShapeKind::MultiLegTable => ShapeSpec::MultiLegTable {
                legs: rng.random_range(3..=6),
                top_half: rng.random_range(0.3..0.4),
                top_thick: rng.random_range(0.04..0.06),
                leg_half: rng.random_range(0.035..0.05),
                height: rng.random_range(0.55..0.8),
            },
            ShapeKind::Sphere => ShapeSpec::Sphere {
                radius: rng.random_range(0.25..0.4),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ShapeSpec::Torus { major, minor } => {
                check((0.15..=0.35).contains(&major), "torus major radius in [0.15, 0.35]")?;
                check((0.04..=0.12).contains(&minor), "torus minor radius in [0.04, 0.12]")?;
                check(major + minor <= 0.46, "torus must fit the cube")
            }
            ShapeSpec::BoxFrame { half, bar } => {
                check((0.2..=0.38).contains(&half), "box frame half size in [0.2, 0.38]")?;
                check(bar >= 0.02 && bar <= half / 4.0, "box frame bar in [0.02, half / 4]")
            }
            ShapeSpec::MultiLegTable {
                legs,
                top_half,
                top_thick,
                leg_half,
                height,
            } => {
                check((3..=6).contains(&legs), "table legs in 3..=6")?;
                check((0.2..=0.42).contains(&top_half), "table top half size in [0.2, 0.42]")?;
                check((0.03..=0.08).contains(&top_thick), "table top thickness in [0.03, 0.08]")?;
                check(leg_half >= 0.02 && leg_half <= top_half / 4.0, "table leg half width in [0.02, top_half / 4]")?;
                check((0.4..=0.85).contains(&height), "table height in [0.4, 0.85]")
            }
            ShapeSpec::Sphere { radius } => check((0.1..=0.42).contains(&radius), "sphere radius in [0.1, 0.42]"),
        }
    }

    /// Signed distance (negative inside) for the shapes built by implicit meshing.
    fn sdf(&self, p: [f64; 3]) -> f64 {
        match *self {
            ShapeSpec::Torus { major, minor } => {
                let q = (p[0] * p[0] + p[1] * p[1]).sqrt() - major;
                (q * q + p[2] * p[2]).sqrt() - minor
            }
            ShapeSpec::Sphere { radius } => (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - radius,
            ShapeSpec::BoxFrame { half, bar } => {
                let mut d = f64::INFINITY;
                for axis in 0..3 {
                    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                    for sa in [-1.0, 1.0] {
                        for sb in [-1.0, 1.0] {
                            let mut c = [0.0; 3];
                            c[a] = sa * half;
                            c[b] = sb * half;
                            let mut h = [bar; 3];
                            h[axis] = half + bar;
                            d = d.min(box_sdf(p, c, h));
                        }
                    }
                }
                d
            }
            ShapeSpec::MultiLegTable {
                legs,
                top_half,
                top_thick,
                leg_half,
                height,
            } => {
                let (floor, top_z) = table_levels(height, top_thick);
                let mut d = box_sdf(p, [0.0, 0.0, top_z], [top_half, top_half, top_thick / 2.0]);
                let leg_len = (top_z - floor) / 2.0;
                for [x, y] in leg_positions(legs, top_half, leg_half) {
                    d = d.min(box_sdf(p, [x, y, floor + leg_len], [leg_half, leg_half, leg_len]));
                }
                d
            }
        }
    }

    /// Closed outward-oriented surface mesh.
    pub fn mesh(&self) -> Result<TriangleMesh<f64>> {
        self.validate()?;
        match *self {
            ShapeSpec::Torus { major, minor } => grid_torus(major, minor, 96, 40),
            ShapeSpec::Sphere { radius } => Ok(icosphere(3).scaled(radius)),
            _ => {
                // Smoothly ramped occupancy so interpolated vertices follow the zero level set.
                let res = 96;
                let grid = VoxelGrid::from_fn(res, |x, y, z| {
                    let p = [center_coord(res, x), center_coord(res, y), center_coord(res, z)];
                    (0.5 - self.sdf(p) * res as f64).clamp(0.0, 1.0)
                })?;
                let mesh = marching_cubes(&grid, 0.5)?;
                Ok(mesh.largest_component())
            }
        }
    }

    /// Analytic medial structure with curve/sheet labels, sampled at roughly `spacing`.
    pub fn skeleton(&self, spacing: f64, rng: &mut ChaCha8Rng) -> PointSet<f64> {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let segment = |a: [f64; 3], b: [f64; 3], pts: &mut Vec<[f64; 3]>, labels: &mut Vec<Label>| {
            let len = ((0..3).map(|k| (b[k] - a[k]).powi(2)).sum::<f64>()).sqrt();
            let n = (len / spacing).ceil().max(1.0) as usize;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                pts.push([0, 1, 2].map(|k| a[k] + t * (b[k] - a[k])));
                labels.push(Label::Curve);
            }
        };
        match *self {
            ShapeSpec::Torus { major, .. } => {
                let n = (TAU * major / spacing).ceil() as usize;
                for i in 0..n {
                    let u = TAU * i as f64 / n as f64;
                    pts.push([major * u.cos(), major * u.sin(), 0.0]);
                    labels.push(Label::Curve);
                }
            }
            ShapeSpec::Sphere { radius } => {
                // The medial axis of a ball is its center; a small cluster keeps it sampleable.
                let spread = (radius * 0.02).min(spacing);
                for _ in 0..32 {
                    pts.push([0, 1, 2].map(|_| rng.random_range(-spread..spread)));
                    labels.push(Label::Curve);
                }
            }
            ShapeSpec::BoxFrame { half, .. } => {
                for axis in 0..3 {
                    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                    for sa in [-1.0, 1.0] {
                        for sb in [-1.0, 1.0] {
                            let mut p0 = [0.0; 3];
                            p0[a] = sa * half;
                            p0[b] = sb * half;
                            let mut p1 = p0;
                            p0[axis] = -half;
                            p1[axis] = half;
                            segment(p0, p1, &mut pts, &mut labels);
                        }
                    }
                }
            }
            ShapeSpec::MultiLegTable {
                legs,
                top_half,
                top_thick,
                leg_half,
                height,
            } => {
                let (floor, top_z) = table_levels(height, top_thick);
                let inner = top_half - top_thick / 2.0;
                let n = (2.0 * inner / spacing).ceil() as usize;
                for i in 0..=n {
                    for j in 0..=n {
                        let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                        pts.push([-inner + 2.0 * inner * u, -inner + 2.0 * inner * v, top_z]);
                        labels.push(Label::Sheet);
                    }
                }
                for [x, y] in leg_positions(legs, top_half, leg_half) {
                    // Legs end where they meet the sheet.
                    segment([x, y, floor + leg_half], [x, y, top_z - spacing], &mut pts, &mut labels);
                }
            }
        }
        PointSet::new(pts).with_labels(labels).expect("one label per point")
    }
}

fn table_levels(height: f64, top_thick: f64) -> (f64, f64) {
    let floor = -height / 2.0;
    (floor, floor + height - top_thick / 2.0)
}

fn leg_positions(legs: usize, top_half: f64, leg_half: f64) -> Vec<[f64; 2]> {
    // On the circle inscribed in the top, pulled in by one leg width.
    let r = (top_half - 2.0 * leg_half) * std::f64::consts::FRAC_1_SQRT_2 * 1.2;
    let r = r.min(top_half - 2.0 * leg_half);
    (0..legs)
        .map(|i| {
            let a = TAU * i as f64 / legs as f64 + std::f64::consts::FRAC_PI_4;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

fn box_sdf(p: [f64; 3], c: [f64; 3], h: [f64; 3]) -> f64 {
    let q: Vec<f64> = (0..3).map(|k| (p[k] - c[k]).abs() - h[k]).collect();
    let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
    let inside = q[0].max(q[1]).max(q[2]).min(0.0);
    outside + inside
}

/// Unit icosphere after `levels` rounds of 4:1 subdivision.
pub fn icosphere(levels: usize) -> TriangleMesh<f64> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    for v in &mut verts {
        *v = unit(*v);
    }
    for _ in 0..levels {
        let mut mid = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(unit([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh { vertices: verts, faces }
}
