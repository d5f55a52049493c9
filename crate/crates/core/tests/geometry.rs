use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelforge_core::autodiff::gradcheck::check_gradients;
use skelforge_core::autodiff::Tape;
use skelforge_core::geometry::*;
use skelforge_core::Tensor;

fn pts(v: &[[f64; 3]]) -> Tensor<f64> {
    Tensor::new(vec![v.len(), 3], v.iter().flatten().copied().collect()).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-0.5..0.5))).collect()
}

fn chamfer_sum(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut t = Tape::new();
    let (x, y) = (t.constant(pts(a)), t.constant(pts(b)));
    let c = t.chamfer(x, y, Reduction::Sum).unwrap();
    t.value(c).item().unwrap()
}

#[test]
fn chamfer_examples() {
    let a = [[0.1, 0.2, 0.3], [0.4, -0.1, 0.0]];
    assert_eq!(chamfer_sum(&a, &a), 0.0);
    assert_eq!(chamfer_sum(&[[0.0; 3]], &[[1.0, 0.0, 0.0]]), 2.0);
    assert_eq!(chamfer_sum(&[[0.0; 3], [2.0, 0.0, 0.0]], &[[1.0, 0.0, 0.0]]), 3.0);
    assert!(chamfer_distance::<f64>(&[], &a, Reduction::Sum).is_err());
}

#[test]
fn chamfer_matches_brute_force_and_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for n in [1, 7, 32, 64] {
        let a = random_points(&mut rng, n);
        let b = random_points(&mut rng, 64 - n / 2);
        for red in [Reduction::Sum, Reduction::Mean] {
            let fast = chamfer_distance(&a, &b, red).unwrap();
            let slow = chamfer_brute_force(&a, &b, red);
            assert!((fast - slow).abs() <= 1e-10, "{fast} vs {slow}");
            assert!((fast - chamfer_distance(&b, &a, red).unwrap()).abs() <= 1e-12);
            assert!(fast >= 0.0);
        }
    }
}

#[test]
fn chamfer_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = pts(&random_points(&mut rng, 6));
    let b = pts(&random_points(&mut rng, 9));
    for red in [Reduction::Sum, Reduction::Mean] {
        let r = check_gradients(&[a.clone(), b.clone()], 1e-5, |t, v| t.chamfer(v[0], v[1], red)).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
    let kappa: Vec<f64> = (0..9).map(|i| 1.0 + (i % 3) as f64 * 2.0).collect();
    let r = check_gradients(&[a.clone(), b.clone()], 1e-5, |t, v| t.weighted_chamfer(v[0], v[1], &kappa)).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}

#[test]
fn weighted_chamfer_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = random_points(&mut rng, 40);
    let b = random_points(&mut rng, 50);
    let ones = vec![1.0; 50];
    let w = weighted_chamfer_distance(&a, &b, &ones).unwrap();
    assert_eq!(w.to_bits(), chamfer_distance(&a, &b, Reduction::Sum).unwrap().to_bits());
    assert_eq!(weighted_chamfer_distance(&[[0.0; 3]], &[[1.0, 0.0, 0.0]], &[5.0]).unwrap(), 10.0);
    let kappa: Vec<f64> = (0..50).map(|_| rng.random_range(1.0..5.0)).collect();
    let doubled: Vec<f64> = kappa.iter().map(|k| 2.0 * k).collect();
    let x = weighted_chamfer_distance(&a, &b, &kappa).unwrap();
    assert!((weighted_chamfer_distance(&a, &b, &doubled).unwrap() - 2.0 * x).abs() < 1e-12);
    // Oracle: brute-force nearest neighbours with lowest-index ties.
    let mut want = 0.0;
    for &p in &a {
        let (j, d) = brute_force_nearest(&b, p);
        want += kappa[j] * d;
    }
    for (j, &q) in b.iter().enumerate() {
        want += kappa[j] * brute_force_nearest(&a, q).1;
    }
    assert!((x - want).abs() <= 1e-10);
    assert!(weighted_chamfer_distance(&a, &b, &kappa[..10]).is_err());
    let mut t = Tape::new();
    let (pa, pb) = (t.constant(pts(&a)), t.constant(pts(&b)));
    assert!(t.weighted_chamfer(pa, pb, &kappa[..3]).is_err());
}

#[test]
fn laplacian_examples() {
    let line = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.2, 0.0, 0.0]];
    let nb = vec![vec![1], vec![0, 2], vec![1]];
    let deltas = laplacian_deltas(&line, &nb);
    assert_eq!(deltas[1], [0.0, 0.0, 0.0]);
    let mut t = Tape::new();
    let p = t.constant(pts(&[[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]]));
    let l = t.laplacian_reg(p, &[vec![1, 2], vec![2], vec![1]]).unwrap();
    assert_eq!(t.value(l).item().unwrap(), 1.0);
    assert!(t.laplacian_reg(p, &[vec![1], vec![], vec![1]]).is_err());
}

#[test]
fn laplacian_matches_double_loop_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let chain = random_points(&mut rng, 20);
    let nb: Vec<Vec<usize>> = (0..20)
        .map(|i| match i {
            0 => vec![1],
            19 => vec![18],
            _ => vec![i - 1, i + 1],
        })
        .collect();
    let mut want = 0.0;
    for i in 0..20 {
        let mut c = [0.0; 3];
        for &j in &nb[i] {
            for k in 0..3 {
                c[k] += chain[j][k] / nb[i].len() as f64;
            }
        }
        for k in 0..3 {
            want += (chain[i][k] - c[k]) * (chain[i][k] - c[k]);
        }
    }
    let mut t = Tape::new();
    let p = t.constant(pts(&chain));
    let l = t.laplacian_reg(p, &nb).unwrap();
    assert!((t.value(l).item().unwrap() - want).abs() <= 1e-12);
    let r = check_gradients(&[pts(&chain)], 1e-5, |t, v| t.laplacian_reg(v[0], &nb)).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}

proptest! {
    #[test]
    fn spatial_index_matches_brute_force(
        cloud in proptest::collection::vec(proptest::array::uniform3(-4i32..4), 1..60),
        queries in proptest::collection::vec(proptest::array::uniform3(-6i32..6), 1..20),
    ) {
        // Integer lattice coordinates produce many exact ties.
        let cloud: Vec<[f64; 3]> = cloud.iter().map(|p| p.map(|c| c as f64 * 0.1)).collect();
        let index = NearestIndex::new(&cloud);
        for q in queries {
            let q = q.map(|c| c as f64 * 0.1);
            prop_assert_eq!(index.nearest(q), brute_force_nearest(&cloud, q));
        }
    }
}

fn unit_square() -> TriangleMesh<f64> {
    TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [3.0, 1.0, 0.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

#[test]
fn surface_sampling_is_area_weighted() {
    // Unequal split: triangles of area 0.5 and 1.0.
    let mesh = TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [3.0, 1.0, 0.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap();
    let n = 60_000;
    let s = sample_surface(&mesh, n, 5).unwrap();
    let frac0 = s.faces.iter().filter(|&&f| f == 0).count() as f64 / n as f64;
    assert!((frac0 / (1.0 / 3.0) - 1.0).abs() < 0.05, "{frac0}");
    for (p, &f) in s.points.points.iter().zip(&s.faces) {
        let [a, _, _] = mesh.face_vertices(f);
        let nrm = mesh.face_normal(f).unwrap();
        assert!(dot::<f64>(sub(*p, a), nrm).abs() <= 1e-9);
    }
    let s2 = sample_surface(&mesh, n, 5).unwrap();
    assert_eq!(s.points, s2.points);
    assert!(sample_surface(&unit_square(), 0, 1).is_err());
    let flat = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    assert!(sample_surface(&flat, 10, 1).is_err());
}

#[test]
fn barycentric_points_follow_vertices() {
    let mesh = unit_square();
    let s = sample_surface(&mesh, 30, 2).unwrap();
    let r = check_gradients(&[pts(&mesh.vertices)], 1e-5, |t, v| {
        let p = t.barycentric_points(v[0], &mesh.faces, &s.faces, &s.bary)?;
        Ok(t.sum_squares(p))
    })
    .unwrap();
    assert!(r.max_rel_error <= 1e-4);
    let mut t = Tape::new();
    let v = t.constant(pts(&mesh.vertices));
    let p = t.barycentric_points(v, &mesh.faces, &s.faces, &s.bary).unwrap();
    for (a, b) in t.value(p).data().iter().zip(s.points.flat()) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn cube_mesh() -> TriangleMesh<f64> {
    let v = (0..8).map(|i| [(i & 1) as f64 - 0.5, ((i >> 1) & 1) as f64 - 0.5, ((i >> 2) & 1) as f64 - 0.5]).map(|p| p.map(|c| c * 0.6)).collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriangleMesh::new(v, faces).unwrap()
}

#[test]
fn curvature_weights_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let plane: Vec<[f64; 3]> = (0..200).map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.1]).collect();
    let set = PointSet::new(plane.clone()).with_normals(vec![[0.0, 0.0, 1.0]; 200]).unwrap();
    let w = curvature_weights(&set, CurvatureRule::default()).unwrap();
    assert!(w.iter().all(|&k| k == 1.0));
    assert!(curvature_weights(&PointSet::new(plane), CurvatureRule::default()).is_err());
    let rule = CurvatureRule::default();
    assert_eq!((rule.k, rule.angle_deg, rule.high_weight), (16, 60.0, 5.0));

    let cube = cube_mesh();
    assert!(cube.signed_volume() > 0.0);
    let s = sample_surface(&cube, 4000, 3).unwrap();
    let w = curvature_weights(&s.points, rule).unwrap();
    let mut near_edge = 0;
    let mut far = 0;
    for (p, &k) in s.points.points.iter().zip(&w) {
        // Distance to the nearest cube edge: second-largest distance-to-face gap.
        let mut gaps: Vec<f64> = p.iter().map(|c: &f64| 0.3 - c.abs()).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let edge_dist = gaps[1];
        if edge_dist < 0.005 {
            near_edge += 1;
            assert_eq!(k, 5.0, "point {p:?} at {edge_dist} from an edge");
        }
        if edge_dist > 0.15 {
            far += 1;
            assert_eq!(k, 1.0);
        }
    }
    assert!(near_edge > 10 && far > 10);
}

#[test]
fn iou_examples() {
    let a = VoxelGrid::<f64>::full(2, 1.0).unwrap();
    let b = VoxelGrid::from_fn(2, |x, _, _| if x == 0 { 1.0 } else { 0.0 }).unwrap();
    let c = VoxelGrid::from_fn(2, |x, _, _| if x == 1 { 1.0 } else { 0.0 }).unwrap();
    assert_eq!(iou(&a, &a, 0.5).unwrap(), 1.0);
    assert_eq!(iou(&a, &b, 0.5).unwrap(), 0.5);
    assert_eq!(iou(&b, &c, 0.5).unwrap(), 0.0);
    let z = VoxelGrid::<f64>::zeros(2);
    assert_eq!(iou(&z, &z, 0.5).unwrap(), 1.0);
    assert!(iou(&a, &VoxelGrid::zeros(4), 0.5).is_err());
}

#[test]
fn iou_matches_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = VoxelGrid::from_fn(4, |_, _, _| rng.random::<f64>()).unwrap();
    let b = VoxelGrid::from_fn(4, |_, _, _| rng.random::<f64>()).unwrap();
    let (mut i, mut u) = (0, 0);
    for (x, y) in a.values().iter().zip(b.values()) {
        if *x >= 0.5 && *y >= 0.5 {
            i += 1;
        }
        if *x >= 0.5 || *y >= 0.5 {
            u += 1;
        }
    }
    let v = iou(&a, &b, 0.5).unwrap();
    assert!((v - i as f64 / u as f64).abs() <= 1e-15);
    assert!((0.0..=1.0).contains(&v));
}

fn solid_torus(r: usize) -> VoxelGrid<f64> {
    VoxelGrid::from_fn(r, |x, y, z| {
        let (px, py, pz) = (center_coord::<f64>(r, x), center_coord::<f64>(r, y), center_coord::<f64>(r, z));
        let q = (px * px + py * py).sqrt() - 0.3;
        if q * q + pz * pz <= 0.01 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

#[test]
fn marching_cubes_topology() {
    let empty = marching_cubes(&VoxelGrid::<f64>::zeros(8), 0.5).unwrap();
    assert!(empty.is_empty());
    let mut one = VoxelGrid::<f64>::zeros(4);
    one.set(1, 2, 1, 1.0);
    let m = marching_cubes(&one, 0.5).unwrap();
    assert!(m.is_watertight());
    assert_eq!(m.euler_characteristic(), 2);
    assert!(m.signed_volume() > 0.0, "triangles must face outwards");
    let torus = marching_cubes(&solid_torus(64), 0.5).unwrap();
    assert!(torus.is_watertight());
    assert_eq!(torus.euler_characteristic(), 0);
    assert_eq!(torus.genus().unwrap(), 1);
    assert!(torus.signed_volume() > 0.0);
    assert!(marching_cubes(&VoxelGrid::<f64>::zeros(1), 0.5).is_err());
}

#[test]
fn marching_cubes_vertices_interpolate_edges() {
    let g = VoxelGrid::from_fn(4, |x, _, _| [0.0, 0.2, 0.8, 1.0][x]).unwrap();
    let m = marching_cubes(&g, 0.5).unwrap();
    // Crossing between x=1 (0.2) and x=2 (0.8) at t = 0.5.
    let want = (center_coord::<f64>(4, 1) + center_coord::<f64>(4, 2)) / 2.0;
    assert!(m.vertices.iter().all(|v| (v[0] - want).abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn marching_cubes_is_watertight_with_empty_border(bits in proptest::collection::vec(any::<bool>(), 64), soft in any::<bool>()) {
        let r = 6;
        let g = VoxelGrid::from_fn(r, |x, y, z| {
            if x == 0 || y == 0 || z == 0 || x == r - 1 || y == r - 1 || z == r - 1 {
                return 0.0;
            }
            let on = bits[(x - 1) + 4 * ((y - 1) + 4 * (z - 1))];
            match (on, soft) {
                (true, false) => 1.0,
                (true, true) => 0.6 + 0.1 * ((x + 2 * y + 3 * z) % 4) as f64,
                (false, false) => 0.0,
                (false, true) => 0.1 * ((x * y + z) % 5) as f64,
            }
        }).unwrap();
        let m = marching_cubes(&g, 0.5).unwrap();
        if g.count_occupied(0.5) > 0 {
            prop_assert!(m.is_watertight());
        }
    }
}

#[test]
fn euler_characteristics() {
    let o = octahedron(1.0f64);
    assert_eq!(o.euler_characteristic(), 2);
    assert_eq!(o.genus().unwrap(), 0);
    let t = grid_torus::<f64>(0.3, 0.1, 12, 8).unwrap();
    assert_eq!(t.euler_characteristic(), 0);
    assert_eq!(t.genus().unwrap(), 1);
    let two = o.merge(&o.translated([3.0, 0.0, 0.0]));
    assert_eq!(two.euler_characteristic(), 4);
    assert!(two.genus().is_err());
    let open = TriangleMesh::new(o.vertices.clone(), o.faces[1..].to_vec()).unwrap();
    assert!(open.genus().is_err());
    assert_eq!(two.largest_component().faces.len(), 8);
}

#[test]
fn mesh_validation_and_edges() {
    assert!(TriangleMesh::new(vec![[0.0f64; 3]; 3], vec![[0, 1, 3]]).is_err());
    assert!(TriangleMesh::new(vec![[0.0f64; 3]; 3], vec![[0, 1, 1]]).is_err());
    let o = octahedron(1.0f64);
    let e = o.edges();
    assert_eq!(e.len(), 12);
    let mut d = e.clone();
    d.dedup();
    assert_eq!(d.len(), e.len());
}

fn single(r: usize, at: [usize; 3]) -> VoxelGrid<f64> {
    let mut g = VoxelGrid::zeros(r);
    g.set(at[0], at[1], at[2], 1.0);
    g
}

#[test]
fn dilation_examples_and_composition() {
    let g = single(7, [3, 3, 3]);
    assert_eq!(dilate(&g, 0, Connectivity::Six).unwrap(), g);
    assert_eq!(dilate(&g, 1, Connectivity::Six).unwrap().count_occupied(0.5), 7);
    assert_eq!(dilate(&g, 1, Connectivity::TwentySix).unwrap().count_occupied(0.5), 27);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let rand = VoxelGrid::from_fn(10, |_, _, _| if rng.random::<f64>() < 0.03 { 1.0 } else { 0.0 }).unwrap();
    for conn in [Connectivity::Six, Connectivity::TwentySix] {
        let ab = dilate(&rand, 3, conn).unwrap();
        let a_b = dilate(&dilate(&rand, 1, conn).unwrap(), 2, conn).unwrap();
        assert_eq!(ab, a_b);
    }
}

#[test]
fn dilation_matches_distance_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = VoxelGrid::from_fn(4, |_, _, _| if rng.random::<f64>() < 0.1 { 1.0 } else { 0.0 }).unwrap();
    let seeds: Vec<[usize; 3]> = (0..64).filter(|&i| g.values()[i] == 1.0).map(|i| g.coords(i)).collect();
    for (conn, radius) in [(Connectivity::Six, 1), (Connectivity::TwentySix, 1), (Connectivity::Six, 2)] {
        let d = dilate(&g, radius, conn).unwrap();
        for i in 0..64 {
            let c = g.coords(i);
            let reach = seeds.iter().any(|s| {
                let dd: Vec<usize> = (0..3).map(|a| s[a].abs_diff(c[a])).collect();
                match conn {
                    Connectivity::Six => dd.iter().sum::<usize>() <= radius,
                    Connectivity::TwentySix => *dd.iter().max().unwrap() <= radius,
                }
            });
            assert_eq!(d.values()[i] == 1.0, reach);
        }
    }
}

fn shell(r: usize, lo: usize, hi: usize) -> VoxelGrid<f64> {
    VoxelGrid::from_fn(r, |x, y, z| {
        let inside = [x, y, z].iter().all(|&c| (lo..=hi).contains(&c));
        let on_face = [x, y, z].iter().any(|&c| c == lo || c == hi);
        if inside && on_face {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

#[test]
fn fill_interior_examples() {
    let s = shell(10, 2, 7);
    let filled = fill_interior(&s).unwrap();
    assert_eq!(filled.count_occupied(0.5) - s.count_occupied(0.5), 64);
    assert_eq!(fill_interior(&filled).unwrap(), filled);
    let mut punctured = s.clone();
    punctured.set(4, 4, 2, 0.0);
    assert_eq!(fill_interior(&punctured).unwrap(), punctured);
}

/// Exterior by repeated relaxation rather than a queue.
fn fill_oracle(g: &VoxelGrid<f64>) -> Vec<bool> {
    let r = g.resolution();
    let solid = g.occupied(0.5);
    let mut ext = vec![false; solid.len()];
    loop {
        let mut changed = false;
        for i in 0..solid.len() {
            if solid[i] || ext[i] {
                continue;
            }
            let c = g.coords(i);
            let mut hit = c.iter().any(|&v| v == 0 || v == r - 1);
            for a in 0..3 {
                for s in [-1i64, 1] {
                    let v = c[a] as i64 + s;
                    if v >= 0 && (v as usize) < r {
                        let mut n = c;
                        n[a] = v as usize;
                        hit |= ext[g.index(n[0], n[1], n[2])];
                    }
                }
            }
            if hit {
                ext[i] = true;
                changed = true;
            }
        }
        if !changed {
            return ext.iter().map(|e| !e).collect();
        }
    }
}

#[test]
fn fill_interior_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for p in [0.2, 0.4, 0.6] {
        let g = VoxelGrid::from_fn(4, |_, _, _| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(fill_interior(&g).unwrap().occupied(0.5), fill_oracle(&g));
    }
    let s = shell(8, 1, 6);
    assert_eq!(fill_interior(&s).unwrap().occupied(0.5), fill_oracle(&s));
}

#[test]
fn camera_projection() {
    let cam = Camera::look_at([0.0, 0.0, 2.0], [0.0; 3], [0.0, 1.0, 0.0], 50.0, 64).unwrap();
    let (px, ok) = cam.project_point([0.0, 0.0, 0.0]);
    assert!(ok);
    assert!((px[0] - 32.0).abs() < 1e-12 && (px[1] - 32.0).abs() < 1e-12);
    let (_, ok) = cam.project_point([0.0, 0.0, 3.0]);
    assert!(!ok);
    let (_, ok) = cam.project_point([5.0, 0.0, 0.0]);
    assert!(!ok);
    // Moving the camera and the point by the same offset changes nothing.
    let shift = [0.3, -0.2, 0.7];
    let moved = Camera::look_at([0.3, -0.2, 2.7], shift, [0.0, 1.0, 0.0], 50.0, 64).unwrap();
    for p in [[0.1, 0.2, -0.1], [-0.3, 0.05, 0.2]] {
        let q = [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]];
        let (a, _) = cam.project_point(p);
        let (b, _) = moved.project_point(q);
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }
    let (up, _) = cam.project_point([0.0, 0.2, 0.0]);
    assert!(up[1] < 32.0, "image rows grow downwards");
    let bad = Camera::new(1.0, 1.0, 0.0, 0.0, [4, 4], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.1]], [0.0; 3]);
    assert!(bad.is_err());
    assert_eq!(cam.eye().map(|v| (v * 1e9).round() / 1e9), [0.0, 0.0, 2.0]);
}

#[test]
fn bilinear_sampling() {
    let map = Tensor::new(vec![1, 3, 4], (0..12).map(|v| v as f64 * v as f64).collect()).unwrap();
    let mut t = Tape::new();
    let m = t.constant(map.clone());
    let c = t.constant(Tensor::from_f64(&[2, 2], &[2.0, 1.0, 0.5, 0.5]).unwrap());
    let s = t.bilinear_sample(m, c).unwrap();
    let d = t.value(s).data();
    assert_eq!(d[0], map.data()[6]);
    let mean = (map.data()[0] + map.data()[1] + map.data()[4] + map.data()[5]) / 4.0;
    assert!((d[1] - mean).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let fmap = Tensor::new(vec![2, 5, 6], (0..60).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let coords = Tensor::new(vec![4, 2], vec![0.3, 0.7, 2.6, 3.2, 4.4, 1.1, 1.5, 3.9]).unwrap();
    let r = check_gradients(&[fmap, coords], 1e-6, |t, v| {
        let y = t.bilinear_sample(v[0], v[1])?;
        Ok(t.sum_squares(y))
    }).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}
