use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skelforge_core::autodiff::gradcheck::check_gradients;
use skelforge_core::autodiff::Tape;
use skelforge_core::geometry::{Label, PointSet};
use skelforge_core::nn::ParamStore;
use skelforge_core::Tensor;
use skelforge_models::decoders::{
    assemble_skeleton, decoder_target, DecoderConfig, PrimitiveKind, PrimitiveSet, SkeletonDecoder, SkeletonDecoders,
};

fn small_cfg() -> DecoderConfig {
    DecoderConfig {
        code_dim: 5,
        hidden: vec![7, 6],
        primitives: 2,
        line_samples: 4,
        square_side: 3,
        ..DecoderConfig::default()
    }
}

fn brute_chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let d2 = |p: &[f64; 3], q: &[f64; 3]| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
    let one = |x: &[[f64; 3]], y: &[[f64; 3]]| -> f64 {
        x.iter().map(|p| y.iter().map(|q| d2(p, q)).fold(f64::INFINITY, f64::min)).sum()
    };
    one(a, b) + one(b, a)
}

fn brute_laplacian(p: &[[f64; 3]], nb: &[Vec<usize>]) -> f64 {
    p.iter()
        .zip(nb)
        .map(|(x, list)| {
            (0..3)
                .map(|k| {
                    let m = list.iter().map(|&j| p[j][k]).sum::<f64>() / list.len() as f64;
                    (x[k] - m).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}

fn code(n: usize) -> Tensor<f64> {
    Tensor::new(vec![1, n], (0..n).map(|i| 0.3 * (i as f64 * 1.3).sin()).collect()).unwrap()
}

#[test]
fn adjacency_stays_inside_each_primitive() {
    let l = PrimitiveSet::lines(3, 4).unwrap();
    assert_eq!(l.total(), 12);
    assert_eq!(l.neighbors[4], vec![5]);
    assert_eq!(l.neighbors[5], vec![4, 6]);
    assert_eq!(l.neighbors[7], vec![6]);
    let s = PrimitiveSet::squares(2, 3).unwrap();
    assert_eq!(s.samples(), 9);
    // Corner, edge and center samples of the second square.
    assert_eq!(s.neighbors[9].len(), 2);
    assert_eq!(s.neighbors[10].len(), 3);
    assert_eq!(s.neighbors[13].len(), 4);
    for (i, nb) in s.neighbors.iter().enumerate() {
        assert!(nb.iter().all(|&j| j / 9 == i / 9));
    }
    assert_eq!(s.coords.data()[16..18], [1.0, 1.0]);
    assert!(PrimitiveSet::lines(1, 1).is_err());
    assert!(PrimitiveSet::squares(0, 4).is_err());
}

#[test]
fn loss_matches_brute_force_terms() {
    let cfg = small_cfg();
    let dec = SkeletonDecoder::new("cur", PrimitiveKind::Line, &cfg).unwrap();
    let mut store = ParamStore::new();
    dec.init(&mut store, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let target: Vec<[f64; 3]> = (0..11).map(|i| [i as f64 * 0.05 - 0.25, 0.1, -0.2]).collect();
    let mut tape = Tape::new();
    let c = tape.constant(code(5));
    let pred = dec.forward(&mut tape, &store, c).unwrap();
    assert_eq!(tape.shape(pred), &[8, 3]);
    let p: Vec<[f64; 3]> = tape.value(pred).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    assert!(p.iter().flatten().all(|v| v.abs() < 0.5));
    let loss = dec.loss(&mut tape, pred, &target).unwrap();
    let want = brute_chamfer(&p, &target) + 0.2 * brute_laplacian(&p, &dec.prims.neighbors);
    assert!((tape.value(loss).item().unwrap() - want).abs() < 1e-12);

    let plain = SkeletonDecoder::new("cur", PrimitiveKind::Line, &DecoderConfig { alpha: 0.0, ..cfg }).unwrap();
    let l0 = plain.loss(&mut tape, pred, &target).unwrap();
    assert!((tape.value(l0).item().unwrap() - brute_chamfer(&p, &target)).abs() < 1e-12);
}

#[test]
fn code_gradient_matches_finite_differences() {
    let cfg = small_cfg();
    let decs = SkeletonDecoders::new(&cfg).unwrap();
    let mut store = ParamStore::new();
    decs.init(&mut store, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let skel = PointSet::new(vec![[0.1, 0.0, 0.0], [0.2, 0.1, 0.0], [-0.1, 0.2, 0.1], [0.0, -0.2, 0.15]])
        .with_labels(vec![Label::Curve, Label::Curve, Label::Sheet, Label::Sheet])
        .unwrap();
    let report = check_gradients(&[code(5)], 1e-6, |tape, v| {
        let out = decs.forward(tape, &store, v[0])?;
        Ok(decs.loss(tape, out, &skel)?.total)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn targets_fall_back_to_the_whole_skeleton() {
    let curve_only = PointSet::new(vec![[0.0; 3], [0.1, 0.0, 0.0]]).with_label(Label::Curve);
    assert_eq!(decoder_target(&curve_only, PrimitiveKind::Line).unwrap().len(), 2);
    assert_eq!(decoder_target(&curve_only, PrimitiveKind::Square).unwrap().len(), 2);
    assert!(decoder_target(&PointSet::new(vec![[0.0; 3]]), PrimitiveKind::Line).is_err());

    let c = Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let s = Tensor::new(vec![1, 3], vec![0.0, 1.0, 0.0]).unwrap();
    let sk = assemble_skeleton(&c, &s).unwrap();
    assert_eq!(sk.labels().unwrap(), &[Label::Curve, Label::Curve, Label::Sheet]);
    assert_eq!(sk.points[2], [0.0, 1.0, 0.0]);
}
