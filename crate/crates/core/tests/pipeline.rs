use unwarp_core::affine_fit::MarginConfig;
use unwarp_core::geom::{write_grid, AffineTransform2D, BackwardMap, Grid2D, NormCoord, RasterImage};
use unwarp_core::lines::{filter_aligned, line_entropy, LineDetector, LsdDetector};
use unwarp_core::metrics::{aligned_distortion, BlockLayout};
use unwarp_core::pipeline::{
    file_predictor, oracle_predictors, rectify, FilePredictor, IterationPolicy, PipelineConfig, Predictors,
    RectificationTrace, Stage,
};
use unwarp_core::synth::{
    distort, make_sample, render_page, true_flow, DistortionSpec, SmoothMode, SyntheticSample,
};
use unwarp_core::warp::{compose_maps, warp_by_map, warp_transform, SampleOptions};
use unwarp_core::{Error, Result};

fn run(sample: &SyntheticSample, policy: IterationPolicy) -> Result<RectificationTrace> {
    run_with(sample, PipelineConfig { policy, ..PipelineConfig::default() })
}

fn run_with(sample: &SyntheticSample, cfg: PipelineConfig) -> Result<RectificationTrace> {
    let (l, c, f) = oracle_predictors(sample)?;
    let cfg = PipelineConfig { retain_outputs: true, ..cfg };
    rectify(&sample.distorted, "s", Predictors::new(&l, &c, &f), &LsdDetector::default(), &cfg)
}

fn from_spec(seed: u64, spec: DistortionSpec) -> SyntheticSample {
    let (flat, layout) = render_page(seed, 3).unwrap();
    distort(&flat, &layout, &spec).unwrap()
}

fn smooth_spec() -> DistortionSpec {
    let mut spec = DistortionSpec::affine(AffineTransform2D::similarity(0.85, 0.04, 0.02, -0.01));
    spec.smooth = vec![
        SmoothMode { component: 0, amplitude: 0.03, fx: 0.6, fy: 0.9, phase: 0.4 },
        SmoothMode { component: 1, amplitude: 0.025, fx: 1.1, fy: 0.3, phase: 1.7 },
    ];
    spec
}

#[test]
fn identity_truth_reproduces_input() {
    let s = from_spec(1, DistortionSpec::identity());
    let t = run(&s, IterationPolicy::Adaptive).unwrap();
    assert_eq!(t.n_opt(), 0);
    assert_eq!(t.maps.len(), 1);
    assert!(t.output.mean_abs_diff(&s.distorted).unwrap() < 1e-3);
    // Without a boundary margin the stage-1 transform is the identity and so is every grid.
    let cfg = PipelineConfig {
        margin: MarginConfig::new(0.0).unwrap(),
        policy: IterationPolicy::Fixed(1),
        ..PipelineConfig::default()
    };
    let t = run_with(&s, cfg).unwrap();
    for g in &t.grids {
        assert!(g.points().iter().zip(Grid2D::canonical(45, 31).unwrap().points()).all(|(a, b)| (*a - *b).norm() < 1e-9));
    }
}

#[test]
fn affine_truth_needs_only_stage_one() {
    let a = AffineTransform2D::from_rows([0.8, 0.05, 0.03], [-0.04, 0.75, -0.02]).unwrap();
    let s = from_spec(2, DistortionSpec::affine(a));
    let t = run(&s, IterationPolicy::Fixed(1)).unwrap();
    let e = Grid2D::canonical(45, 31).unwrap();
    let d1 = &t.maps[0];
    let gt = &s.gt_backward;
    assert!(d1.max_distance(gt).unwrap() < 1e-9);
    let g2 = &t.grids[2];
    assert!(g2.points().iter().zip(e.points()).all(|(p, q)| (*p - *q).norm() < 1e-6));
    // With zero margin the coarse grid itself is canonical.
    let cfg = PipelineConfig {
        margin: MarginConfig::new(0.0).unwrap(),
        policy: IterationPolicy::Fixed(1),
        ..PipelineConfig::default()
    };
    let t = run_with(&s, cfg).unwrap();
    for g in &t.grids[1..] {
        assert!(g.points().iter().zip(e.points()).all(|(p, q)| (*p - *q).norm() < 1e-9));
    }
}

#[test]
fn fixed_policy_bookkeeping_and_provenance() {
    let s = from_spec(3, smooth_spec());
    let t = run(&s, IterationPolicy::Fixed(2)).unwrap();
    assert_eq!(t.maps.len(), 3);
    assert_eq!(t.grids.len(), 4);
    assert_eq!(t.outputs.len(), 4);
    assert_eq!(t.fine_calls, 2);
    for k in 0..2 {
        let next = compose_maps(&t.maps[k], &t.grids[k + 2].densify(712, 488).unwrap()).unwrap();
        assert_eq!(next, t.maps[k + 1]);
    }
    for m in &t.maps {
        for (i, j) in [(0, 0), (0, 487), (711, 0), (711, 487)] {
            assert!(m.at(i, j).is_finite());
        }
    }
}

#[test]
fn coarse_stage_removes_most_of_the_residual() {
    let s = from_spec(4, smooth_spec());
    let t = run(&s, IterationPolicy::Fixed(0)).unwrap();
    let a_inv = t.transform.inverse().unwrap();
    let pre = BackwardMap::from_fn(712, 488, |p| a_inv.apply(p)).unwrap();
    let before = pre.max_distance(&s.gt_backward).unwrap();
    let after = t.maps[0].max_distance(&s.gt_backward).unwrap();
    assert!(after < 0.1 * before, "{after} vs {before}");
}

#[test]
fn oracle_cascade_rectifies_fine_distortion() {
    let s = make_sample(77, unwarp_core::synth::Difficulty::Fine).unwrap();
    let t = run(&s, IterationPolicy::Adaptive).unwrap();
    let flow = true_flow(&s, &t.final_map).unwrap();
    let ad = aligned_distortion(&flow, &s.flat, None).unwrap();
    assert!(ad < 0.05, "AD {ad}");
    let lines = filter_aligned(&LsdDetector::default().detect(&t.output).unwrap(), 5.0);
    let h = line_entropy(&lines).unwrap();
    assert!(h < 0.5, "entropy {h}");
}

#[test]
fn rendering_once_matches_sequential_warps() {
    let flat = RasterImage::from_fn(712, 488, |i, j| {
        (0.5 + 0.3 * ((i as f64) * 0.02).sin() * ((j as f64) * 0.025).cos()) as f32
    })
    .unwrap();
    let s = distort(&flat, &BlockLayout::new(vec![]), &smooth_spec()).unwrap();
    let t = run(&s, IterationPolicy::Fixed(2)).unwrap();
    let opts = SampleOptions::with_fill(1.0);
    let mut seq = warp_transform(&s.distorted, &t.transform, 712, 488, &opts).unwrap().image;
    for g in &t.grids[1..] {
        seq = warp_by_map(&seq, &g.densify(712, 488).unwrap(), &opts).unwrap().image;
    }
    let once = warp_by_map(&s.distorted, t.maps.last().unwrap(), &opts).unwrap().image;
    let diff = once.mean_abs_diff(&seq).unwrap();
    assert!(diff < 2e-2, "{diff}");
}

#[test]
fn canonical_view_fills_normalized_square() {
    let a = AffineTransform2D::from_rows([0.55, 0.04, 0.1], [0.03, 0.6, -0.08]).unwrap();
    let s = from_spec(5, DistortionSpec::affine(a));
    let t = run(&s, IterationPolicy::Fixed(0)).unwrap();
    let pts: Vec<NormCoord> = t.grids[0].points().iter().map(|&p| t.transform.apply(p)).collect();
    let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.y), b.max(p.y)));
    let cover = (x1 - x0) * (y1 - y0) / 4.0;
    let m = 0.03;
    assert!(cover >= (1.0 - 2.0 * m) * (1.0 - 2.0 * m), "{cover}");
}

#[test]
fn rectification_is_deterministic() {
    let s = from_spec(6, smooth_spec());
    let a = run(&s, IterationPolicy::Adaptive).unwrap();
    let b = run(&s, IterationPolicy::Adaptive).unwrap();
    assert!(a.same_result(&b));
}

fn store(dir: &std::path::Path, id: &str, stage: Stage, g: &Grid2D) {
    let p = FilePredictor::new(dir).path_for(id, stage);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    write_grid(&p, g).unwrap();
}

#[test]
fn file_predictor_replays_and_reports_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let e = Grid2D::canonical(45, 31).unwrap();
    for stage in [Stage::Localize, Stage::Coarse, Stage::Fine(1)] {
        store(dir.path(), "a", stage, &e);
    }
    let fp = file_predictor(dir.path());
    let img = RasterImage::filled(712, 488, 0.8).unwrap();
    let det = LsdDetector::default();
    let cfg = |k| PipelineConfig { policy: IterationPolicy::Fixed(k), ..PipelineConfig::default() };
    assert!(rectify(&img, "a", Predictors::uniform(&fp), &det, &cfg(1)).is_ok());
    match rectify(&img, "a", Predictors::uniform(&fp), &det, &cfg(3)) {
        Err(Error::PredictorFailure(key)) => assert_eq!(key, "a/F/2"),
        other => panic!("{other:?}"),
    }
    store(dir.path(), "b", Stage::Localize, &Grid2D::canonical(9, 7).unwrap());
    assert!(matches!(
        rectify(&img, "b", Predictors::uniform(&fp), &det, &cfg(0)),
        Err(Error::BadFormat(_))
    ));
}

#[test]
fn fixed_policy_above_cap_is_rejected() {
    let cfg = PipelineConfig { policy: IterationPolicy::Fixed(6), ..PipelineConfig::default() };
    assert!(cfg.validate().is_err());
    assert_eq!(PipelineConfig::default().output_dims(712, 488), (712, 488));
    let (h, w) = PipelineConfig::default().output_dims(1424, 976);
    assert_eq!((h, w), (1424, 976));
}
