use std::f64::consts::{FRAC_1_SQRT_2, PI};

use algsample::geometry::{BBox, BallKind};
use algsample::polysys::PolynomialSystem;
use algsample::sampler::{
    resume, sample, sample_run, subsample, verify_sample, Heuristics, Oracle, SampleCloud, SamplerConfig, SamplerError,
};

struct CircleOracle(usize);

impl Oracle for CircleOracle {
    fn reference_points(&self) -> Vec<Vec<f64>> {
        (0..self.0)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / self.0 as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()
    }

    fn distance_to_variety(&self, p: &[f64]) -> Option<f64> {
        Some((p[0].hypot(p[1]) - 1.0).abs())
    }
}

struct TorusOracle(usize);

impl Oracle for TorusOracle {
    fn reference_points(&self) -> Vec<Vec<f64>> {
        let n = self.0;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            let a = 2.0 * PI * i as f64 / n as f64;
            for j in 0..n {
                let b = 2.0 * PI * j as f64 / n as f64;
                out.push(vec![
                    FRAC_1_SQRT_2 * a.cos(),
                    FRAC_1_SQRT_2 * a.sin(),
                    FRAC_1_SQRT_2 * b.cos(),
                    FRAC_1_SQRT_2 * b.sin(),
                ]);
            }
        }
        out
    }

    fn distance_to_variety(&self, p: &[f64]) -> Option<f64> {
        let r1 = p[0].hypot(p[1]);
        let r2 = p[2].hypot(p[3]);
        Some((r1 - FRAC_1_SQRT_2).hypot(r2 - FRAC_1_SQRT_2))
    }
}

fn circle() -> PolynomialSystem {
    PolynomialSystem::parse("vars: x1 x2\nx1^2 + x2^2 - 1").unwrap()
}

fn torus() -> PolynomialSystem {
    PolynomialSystem::parse("vars: x1 y1 x2 y2\nx1^2 + y1^2 - 1/2\nx2^2 + y2^2 - 1/2").unwrap()
}

fn circle_cfg() -> SamplerConfig {
    let mut cfg = SamplerConfig::new(BBox::cube(2, -2.0, 2.0).unwrap(), 0.2, 1e-6);
    cfg.seed = 7;
    cfg
}

fn assert_structural(cloud: &SampleCloud) {
    for (i, p) in cloud.points.iter().enumerate() {
        for q in &cloud.points[..i] {
            let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d >= 1e-8, "duplicate points");
        }
    }
    assert_eq!(cloud.provenance.len(), cloud.len());
    assert_eq!(cloud.certificate.lemma_violations, 0);
}

#[test]
fn circle_sample_is_dense_and_accurate() {
    let sys = circle();
    let cfg = circle_cfg();
    let cloud = sample(&sys, &cfg).unwrap();
    assert_structural(&cloud);
    let report = verify_sample(&cloud, &sys, &CircleOracle(10_000));
    assert!(report.passed, "{}", report.message);
    assert!(report.max_gap < cfg.epsilon);
    for p in &cloud.points {
        assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() <= 2.1 * cfg.delta);
    }
    assert_eq!(cloud.certificate.delta, 1e-6);
    assert_eq!(cloud.certificate.epsilon, 0.2);
    // The tree never needs to go below boxes of side alpha (eps - delta)/sqrt(2).
    let alpha = cfg.alpha();
    let root_depth_bound = 2 * (4.0 / alpha).log2().ceil() as usize;
    assert!(cloud.certificate.depth <= root_depth_bound);
}

#[test]
fn exclusion_balls_avoid_sample_points() {
    use algsample::geometry::CoveredRegions;
    let sys = circle();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = circle_cfg();
    cfg.checkpoint = Some(dir.path().join("state.json"));
    let cloud = sample(&sys, &cfg).unwrap();
    // The final checkpoint holds every stored ball.
    let text = std::fs::read_to_string(dir.path().join("state.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let balls: Vec<algsample::geometry::Ball> = serde_json::from_value(v["balls"].clone()).unwrap();
    let mut regions = CoveredRegions::new(&cfg.region, cfg.epsilon);
    for b in balls.iter().filter(|b| b.kind == BallKind::Exclusion) {
        for p in &cloud.points {
            let d: f64 = p.iter().zip(&b.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            assert!(d >= b.radius - cfg.delta, "point {p:?} inside exclusion ball {b:?}");
        }
        regions.insert(b.clone());
    }
    assert!(balls.iter().any(|b| b.kind == BallKind::Sample));
}

#[test]
fn empty_variety_gives_empty_cloud() {
    let sys = PolynomialSystem::parse("vars: x1 x2\nx1^2 + x2^2 + 1").unwrap();
    let cloud = sample(&sys, &circle_cfg()).unwrap();
    assert!(cloud.is_empty());
    assert_eq!(cloud.certificate.calls, 1);
}

#[test]
fn heuristics_preserve_correctness_on_circle() {
    let sys = circle();
    for mask in 0..8u32 {
        let mut cfg = circle_cfg();
        cfg.heuristics = Heuristics {
            dynamic_split: mask & 1 != 0,
            dynamic_sample: (mask & 2 != 0).then_some(0.05),
            priority_search: mask & 4 != 0,
        };
        let cloud = sample(&sys, &cfg).unwrap();
        assert_eq!(cloud.certificate.epsilon, cfg.effective_epsilon());
        let report = verify_sample(&cloud, &sys, &CircleOracle(10_000));
        assert!(report.passed, "heuristics {:?}: {}", cfg.heuristics, report.message);
    }
}

#[test]
fn torus_coarse_sample_and_heuristics() {
    let sys = torus();
    for heuristics in [
        Heuristics::default(),
        Heuristics {
            dynamic_split: true,
            dynamic_sample: Some(0.1),
            priority_search: true,
        },
    ] {
        let mut cfg = SamplerConfig::new(BBox::cube(4, -1.0, 1.0).unwrap(), 0.5, 1e-7);
        cfg.seed = 3;
        cfg.heuristics = heuristics;
        let cloud = sample(&sys, &cfg).unwrap();
        assert_structural(&cloud);
        let report = verify_sample(&cloud, &sys, &TorusOracle(120));
        assert!(report.passed, "{}", report.message);
        assert!(report.max_exact.unwrap() <= 1e-7);
    }
}

#[test]
fn interrupt_and_resume_match_uninterrupted_run() {
    let sys = circle();
    let full = sample(&sys, &circle_cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = circle_cfg();
    cfg.checkpoint = Some(dir.path().join("cp.json"));
    cfg.checkpoint_every = 7;
    cfg.max_calls = Some(25);
    match sample(&sys, &cfg) {
        Err(SamplerError::Interrupted { calls, checkpoint }) => {
            assert_eq!(calls, 25);
            assert!(checkpoint.unwrap().exists());
        }
        other => panic!("expected interruption, got {other:?}"),
    }
    cfg.max_calls = None;
    let resumed = resume(&sys, &cfg).unwrap();
    assert_eq!(resumed.points, full.points);
    assert_eq!(resumed.certificate, full.certificate);

    let mut other = cfg.clone();
    other.epsilon = 0.3;
    assert!(matches!(resume(&sys, &other), Err(SamplerError::Checkpoint(_))));
}

#[test]
fn parallel_workers_are_deterministic() {
    let sys = circle();
    let mut cfg = circle_cfg();
    cfg.workers = 3;
    let a = sample(&sys, &cfg).unwrap();
    let b = sample(&sys, &cfg).unwrap();
    assert_eq!(a.points, b.points);
    assert!(verify_sample(&a, &sys, &CircleOracle(10_000)).passed);
}

#[test]
fn subsample_keeps_a_weaker_certificate() {
    let sys = circle();
    let cloud = sample(&sys, &circle_cfg()).unwrap();
    let r = 0.3;
    let thin = subsample(&cloud, r, 5);
    assert!(thin.len() < cloud.len());
    for (i, p) in thin.points.iter().enumerate() {
        for q in &thin.points[..i] {
            let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d > r);
        }
    }
    assert!((thin.certificate.epsilon - (0.2 + r)).abs() < 1e-15);
    assert!(verify_sample(&thin, &sys, &CircleOracle(10_000)).passed);
    assert_eq!(subsample(&cloud, r, 5).points, thin.points);
}

#[test]
fn verify_detects_gaps() {
    let sys = circle();
    let cloud = sample(&sys, &circle_cfg()).unwrap();
    // Remove every point in a wedge wider than epsilon.
    let mut holed = cloud.clone();
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            let p = &cloud.points[i];
            p[1].atan2(p[0]).abs() > 0.4
        })
        .collect();
    holed.points = keep.iter().map(|&i| cloud.points[i].clone()).collect();
    holed.provenance = keep.iter().map(|&i| cloud.provenance[i].clone()).collect();
    let report = verify_sample(&holed, &sys, &CircleOracle(10_000));
    assert!(!report.passed);
    assert!(report.max_gap > 0.2);
    assert!(report.witness.is_some());

    let mut empty = cloud.clone();
    empty.points.clear();
    empty.provenance.clear();
    assert!(!verify_sample(&empty, &sys, &CircleOracle(100)).passed);

    let mut off = cloud;
    off.points[0][0] += 1e-3;
    let report = verify_sample(&off, &sys, &CircleOracle(100));
    assert!(!report.passed);
    assert_eq!(report.witness.as_ref(), Some(&off.points[0]));
}

#[test]
fn stored_balls_cover_the_region() {
    use algsample::geometry::CoveredRegions;
    use rand::{Rng, SeedableRng};
    let sys = circle();
    for dynamic_split in [false, true] {
        let mut cfg = circle_cfg();
        cfg.heuristics.dynamic_split = dynamic_split;
        let run = sample_run(&sys, &cfg).unwrap();
        assert_eq!(run.cloud.certificate.lemma_violations, 0);
        let mut regions = CoveredRegions::new(&cfg.region, cfg.epsilon);
        for b in &run.balls {
            regions.insert(b.clone());
        }
        for leaf in run.tree.leaves() {
            assert!(run.tree.node(leaf).done);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100_000 {
            let p: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(regions.find_containing_point(&p).is_some(), "{p:?} is not covered");
        }
    }
}
