//! Adaptive dense sampling of a real variety inside a box.
//!
//! A breadth-first search over the box tree calls the minimum-distance
//! solver at box centres. Each call contributes an exclusion ball
//! `B_{d - delta}(y)` and a ball `B_eps(s)` per returned point `s`. A box is
//! finished once a single stored ball contains it. The output is a
//! `(delta, eps)`-sample: every point is within `delta` of the variety and
//! every variety point in the box is within `eps` of the output.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{split_box, split_box_dynamic, BBox, Ball, BallKind, BoxTree, CoveredRegions};
use crate::mindist::{certified_distance_bound, min_distance, MinDistanceConfig, MinDistanceError, MinDistanceResult};
use crate::polysys::PolynomialSystem;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Points closer than this are treated as the same sample point.
pub const DISTINCT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("minimum distance failed at {test_point:?} (call {call}): {source}")]
    Solver {
        test_point: Vec<f64>,
        call: usize,
        #[source]
        source: MinDistanceError,
        checkpoint: Option<PathBuf>,
    },
    #[error("stopped after {calls} minimum-distance calls")]
    Interrupted { calls: usize, checkpoint: Option<PathBuf> },
    #[error("box tree exceeded depth {0}")]
    DepthExceeded(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Heuristics {
    pub dynamic_split: bool,
    /// Refuse output points closer than `rho` to an existing one.
    pub dynamic_sample: Option<f64>,
    pub priority_search: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub region: BBox,
    pub heuristics: Heuristics,
    pub seed: u64,
    /// Concurrent minimum-distance calls per batch.
    pub workers: usize,
    pub mindist: MinDistanceConfig,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Stop (with a checkpoint) after this many calls in this run.
    pub max_calls: Option<usize>,
    pub max_depth: usize,
}

impl SamplerConfig {
    pub fn new(region: BBox, epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            region,
            heuristics: Heuristics::default(),
            seed: 0,
            workers: 1,
            mindist: MinDistanceConfig::default(),
            checkpoint: None,
            checkpoint_every: 100,
            max_calls: None,
            max_depth: 200,
        }
    }

    pub fn validate(&self, sys: &PolynomialSystem) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidConfig(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta <= self.epsilon) {
            return bad(format!(
                "delta must satisfy 0 < delta <= epsilon (numerical certification needs delta > 0), got {}",
                self.delta
            ));
        }
        if self.region.dim() != sys.num_vars() {
            return bad(format!("region has {} axes, system has {} variables", self.region.dim(), sys.num_vars()));
        }
        if let Some(rho) = self.heuristics.dynamic_sample {
            if !(rho >= 0.0 && rho < self.epsilon) {
                return bad(format!("dynamic sampling threshold must satisfy 0 <= rho < epsilon, got {rho}"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !sys.is_reduced() {
            return bad(format!("system must have exactly {} equations", sys.codim()));
        }
        Ok(())
    }

    /// `(eps - delta) / sqrt(N)`: boxes this small always get a solver call.
    pub fn alpha(&self) -> f64 {
        (self.epsilon - self.delta) / (self.region.dim() as f64).sqrt()
    }

    /// Density claimed by the output, including dynamic-sampling slack.
    pub fn effective_epsilon(&self) -> f64 {
        self.epsilon + self.heuristics.dynamic_sample.unwrap_or(0.0)
    }

    fn fingerprint(&self, sys: &PolynomialSystem) -> String {
        format!(
            "{}|{:e}|{:e}|{:?}|{:?}|{}|{}",
            sys, self.epsilon, self.delta, self.region, self.heuristics, self.seed, self.workers
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Test point of the solver call that produced the point.
    pub test_point: Vec<f64>,
    /// `||f||_inf` at the point.
    pub residual: f64,
    /// Certified bound on the distance to the variety.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub delta: f64,
    pub epsilon: f64,
    pub calls: usize,
    pub depth: usize,
    pub nodes: usize,
    /// Calls whose test point had to be perturbed.
    pub perturbed_calls: usize,
    /// Small boxes left uncovered straight after their own solver call.
    pub lemma_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCloud {
    pub vars: Vec<String>,
    pub points: Vec<Vec<f64>>,
    /// Parallel to `points`; empty when read back from CSV.
    pub provenance: Vec<Provenance>,
    pub certificate: Certificate,
    pub seed: u64,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Uniform-grid hash of points for fixed-radius neighbour queries.
#[derive(Debug, Clone)]
pub struct PointIndex {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl PointIndex {
    pub fn new(cell: f64) -> Self {
        Self {
            cell,
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|x| (x / self.cell).floor() as i64).collect()
    }

    pub fn insert(&mut self, p: Vec<f64>) -> usize {
        let id = self.points.len();
        self.cells.entry(self.key(&p)).or_default().push(id);
        self.points.push(p);
        id
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// All points within `r` of `p` (closed).
    pub fn within(&self, p: &[f64], r: f64) -> Vec<usize> {
        let reach = (r / self.cell).ceil().max(1.0) as i64;
        let lo: Vec<i64> = p.iter().map(|x| ((x - r) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = p.iter().map(|x| ((x + r) / self.cell).floor() as i64).collect();
        let span: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
        let mut out = Vec::new();
        if span as usize > self.cells.len() || reach > 64 {
            for (key, ids) in &self.cells {
                if key.iter().zip(lo.iter().zip(&hi)).all(|(k, (a, b))| a <= k && k <= b) {
                    out.extend(ids.iter().copied().filter(|&i| dist(&self.points[i], p) <= r));
                }
            }
        } else {
            let mut idx = lo.clone();
            'cells: loop {
                if let Some(ids) = self.cells.get(&idx) {
                    out.extend(ids.iter().copied().filter(|&i| dist(&self.points[i], p) <= r));
                }
                let mut axis = 0;
                loop {
                    if axis == idx.len() {
                        break 'cells;
                    }
                    if idx[axis] < hi[axis] {
                        idx[axis] += 1;
                        break;
                    }
                    idx[axis] = lo[axis];
                    axis += 1;
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn nearest_within(&self, p: &[f64], r: f64) -> Option<(usize, f64)> {
        self.within(p, r)
            .into_iter()
            .map(|i| (i, dist(&self.points[i], p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    fingerprint: String,
    tree: BoxTree,
    current: Vec<usize>,
    pos: usize,
    next: Vec<usize>,
    balls: Vec<Ball>,
    points: Vec<Vec<f64>>,
    provenance: Vec<Provenance>,
    calls: usize,
    perturbed_calls: usize,
    lemma_violations: usize,
}

struct State {
    tree: BoxTree,
    current: Vec<usize>,
    pos: usize,
    next: Vec<usize>,
    regions: CoveredRegions,
    index: PointIndex,
    provenance: Vec<Provenance>,
    calls: usize,
    perturbed_calls: usize,
    lemma_violations: usize,
}

impl State {
    fn fresh(cfg: &SamplerConfig) -> Self {
        Self {
            tree: BoxTree::new(cfg.region.clone()),
            current: vec![BoxTree::ROOT],
            pos: 0,
            next: Vec::new(),
            regions: CoveredRegions::new(&cfg.region, cfg.epsilon),
            index: PointIndex::new(cfg.epsilon),
            provenance: Vec::new(),
            calls: 0,
            perturbed_calls: 0,
            lemma_violations: 0,
        }
    }

    fn to_checkpoint(&self, fingerprint: String) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            fingerprint,
            tree: self.tree.clone(),
            current: self.current.clone(),
            pos: self.pos,
            next: self.next.clone(),
            balls: self.regions.balls().to_vec(),
            points: self.index.points().to_vec(),
            provenance: self.provenance.clone(),
            calls: self.calls,
            perturbed_calls: self.perturbed_calls,
            lemma_violations: self.lemma_violations,
        }
    }

    fn from_checkpoint(cp: Checkpoint, cfg: &SamplerConfig) -> Self {
        let mut regions = CoveredRegions::new(&cfg.region, cfg.epsilon);
        for b in cp.balls {
            regions.insert(b);
        }
        let mut index = PointIndex::new(cfg.epsilon);
        for p in cp.points {
            index.insert(p);
        }
        Self {
            tree: cp.tree,
            current: cp.current,
            pos: cp.pos,
            next: cp.next,
            regions,
            index,
            provenance: cp.provenance,
            calls: cp.calls,
            perturbed_calls: cp.perturbed_calls,
            lemma_violations: cp.lemma_violations,
        }
    }
}

fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<(), SamplerError> {
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string(cp).map_err(|e| SamplerError::Checkpoint(e.to_string()))?;
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, SamplerError> {
    let text = std::fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| SamplerError::Checkpoint(e.to_string()))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(SamplerError::Checkpoint(format!(
            "version {} is not supported (expected {CHECKPOINT_VERSION})",
            cp.version
        )));
    }
    Ok(cp)
}

fn call_seed(seed: u64, call: usize) -> u64 {
    let mut z = seed ^ (call as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A finished run: the cloud plus the stored regions and the box tree.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub cloud: SampleCloud,
    pub balls: Vec<Ball>,
    pub tree: BoxTree,
}

/// Runs the sampler from scratch.
pub fn sample(sys: &PolynomialSystem, cfg: &SamplerConfig) -> Result<SampleCloud, SamplerError> {
    sample_run(sys, cfg).map(|r| r.cloud)
}

pub fn sample_run(sys: &PolynomialSystem, cfg: &SamplerConfig) -> Result<SampleRun, SamplerError> {
    cfg.validate(sys)?;
    run(sys, cfg, State::fresh(cfg))
}

/// Continues a run from the checkpoint at `cfg.checkpoint`.
pub fn resume(sys: &PolynomialSystem, cfg: &SamplerConfig) -> Result<SampleCloud, SamplerError> {
    resume_run(sys, cfg).map(|r| r.cloud)
}

pub fn resume_run(sys: &PolynomialSystem, cfg: &SamplerConfig) -> Result<SampleRun, SamplerError> {
    cfg.validate(sys)?;
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| SamplerError::Checkpoint("no checkpoint path configured".into()))?;
    let cp = read_checkpoint(path)?;
    if cp.fingerprint != cfg.fingerprint(sys) {
        return Err(SamplerError::Checkpoint("checkpoint was written for a different system or configuration".into()));
    }
    run(sys, cfg, State::from_checkpoint(cp, cfg))
}

enum Step {
    Done,
    Split,
    Call,
}

/// Decision for a node before any solver call.
fn triage(state: &State, cfg: &SamplerConfig, node: usize) -> Step {
    let b = &state.tree.node(node).bbox;
    if state.regions.find_containing(b).is_some() {
        return Step::Done;
    }
    if b.max_side() <= cfg.alpha() || !state.regions.intersects_any(b) {
        Step::Call
    } else {
        Step::Split
    }
}

fn merge(state: &mut State, cfg: &SamplerConfig, node: usize, result: MinDistanceResult) {
    let y = state.tree.node(node).bbox.center();
    let perturbed = result.test_point != y;
    if perturbed {
        state.perturbed_calls += 1;
    }
    let eps = cfg.epsilon;
    if result.min_distance > cfg.delta {
        let r = result.min_distance - cfg.delta;
        state.regions.insert(Ball::new(result.test_point.clone(), r, BallKind::Exclusion));
    }
    let near_region = |p: &[f64]| cfg.region.nearest_sq(p) <= eps * eps;
    for w in &result.witnesses {
        if !near_region(&w.point) {
            continue;
        }
        if state.index.nearest_within(&w.point, DISTINCT_TOL).is_some() {
            continue;
        }
        state.regions.insert(Ball::new(w.point.clone(), eps, BallKind::Sample));
        let refused = cfg
            .heuristics
            .dynamic_sample
            .is_some_and(|rho| state.index.nearest_within(&w.point, rho).is_some());
        if refused {
            continue;
        }
        state.index.insert(w.point.clone());
        state.provenance.push(Provenance {
            test_point: result.test_point.clone(),
            residual: w.residual,
            accuracy: w.accuracy,
        });
    }
    let b = &state.tree.node(node).bbox;
    if !perturbed && b.max_side() < cfg.alpha() {
        let slack = 1.0 + 1e-12;
        let in_exclusion = result.min_distance > cfg.delta
            && b.farthest_sq(&y) <= ((result.min_distance - cfg.delta) * slack).powi(2);
        let in_sample = result
            .nearest()
            .is_some_and(|s| b.farthest_sq(&s.point) <= (eps * slack).powi(2));
        if !in_exclusion && !in_sample && result.min_distance.is_finite() {
            state.lemma_violations += 1;
        }
    }
}

fn finish_node(state: &mut State, cfg: &SamplerConfig, node: usize) -> Result<(), SamplerError> {
    let b = state.tree.node(node).bbox.clone();
    if state.regions.find_containing(&b).is_some() {
        state.tree.mark_done(node);
        return Ok(());
    }
    if state.tree.node(node).depth >= cfg.max_depth {
        return Err(SamplerError::DepthExceeded(cfg.max_depth));
    }
    let kids = if cfg.heuristics.dynamic_split {
        split_box_dynamic(&b, &state.regions)
    } else {
        split_box(&b)
    };
    let ids = state.tree.expand(node, kids);
    state.next.extend(ids);
    Ok(())
}

fn run(sys: &PolynomialSystem, cfg: &SamplerConfig, mut state: State) -> Result<SampleRun, SamplerError> {
    let mdcfg = MinDistanceConfig {
        delta: cfg.delta,
        ..cfg.mindist.clone()
    };
    let fingerprint = cfg.fingerprint(sys);
    let save = |state: &State| -> Result<Option<PathBuf>, SamplerError> {
        match &cfg.checkpoint {
            Some(p) => {
                write_checkpoint(p, &state.to_checkpoint(fingerprint.clone()))?;
                Ok(Some(p.clone()))
            }
            None => Ok(None),
        }
    };
    let start_calls = state.calls;
    let mut last_saved = state.calls;
    loop {
        if state.pos >= state.current.len() {
            if state.next.is_empty() {
                break;
            }
            state.current = std::mem::take(&mut state.next);
            state.pos = 0;
            if cfg.heuristics.priority_search {
                let tree = &state.tree;
                state.current.sort_by(|a, b| tree.node(*b).bbox.volume().total_cmp(&tree.node(*a).bbox.volume()));
            }
        }
        // Claim up to `workers` nodes that need a call, resolving the others on the way.
        let budget = cfg.max_calls.map_or(usize::MAX, |m| (start_calls + m).saturating_sub(state.calls));
        let mut claimed = Vec::new();
        while state.pos < state.current.len() && claimed.len() < cfg.workers {
            let node = state.current[state.pos];
            match triage(&state, cfg, node) {
                Step::Done => state.tree.mark_done(node),
                Step::Split => finish_node(&mut state, cfg, node)?,
                Step::Call if claimed.len() >= budget => break,
                Step::Call => claimed.push(node),
            }
            state.pos += 1;
        }
        if claimed.is_empty() {
            if budget == 0 && state.pos < state.current.len() {
                let checkpoint = save(&state)?;
                return Err(SamplerError::Interrupted {
                    calls: state.calls,
                    checkpoint,
                });
            }
            continue;
        }
        let jobs: Vec<(usize, Vec<f64>, u64)> = claimed
            .iter()
            .enumerate()
            .map(|(k, &node)| (node, state.tree.node(node).bbox.center(), call_seed(cfg.seed, state.calls + k)))
            .collect();
        let results: Vec<Result<MinDistanceResult, MinDistanceError>> = if jobs.len() == 1 {
            vec![min_distance(sys, &jobs[0].1, &mdcfg, jobs[0].2)]
        } else {
            jobs.par_iter().map(|(_, y, s)| min_distance(sys, y, &mdcfg, *s)).collect()
        };
        for ((node, y, _), result) in jobs.into_iter().zip(results) {
            match result {
                Ok(r) => {
                    state.calls += 1;
                    merge(&mut state, cfg, node, r);
                    finish_node(&mut state, cfg, node)?;
                }
                Err(source) => {
                    state.pos = state.current.iter().position(|n| *n == node).unwrap();
                    let checkpoint = save(&state)?;
                    return Err(SamplerError::Solver {
                        test_point: y,
                        call: state.calls,
                        source,
                        checkpoint,
                    });
                }
            }
        }
        if cfg.checkpoint.is_some() && state.calls - last_saved >= cfg.checkpoint_every {
            save(&state)?;
            last_saved = state.calls;
        }
    }
    save(&state)?;
    let cloud = SampleCloud {
        vars: sys.vars().to_vec(),
        points: state.index.points().to_vec(),
        provenance: state.provenance,
        certificate: Certificate {
            delta: cfg.delta,
            epsilon: cfg.effective_epsilon(),
            calls: state.calls,
            depth: state.tree.max_depth(),
            nodes: state.tree.len(),
            perturbed_calls: state.perturbed_calls,
            lemma_violations: state.lemma_violations,
        },
        seed: cfg.seed,
    };
    Ok(SampleRun {
        cloud,
        balls: state.regions.balls().to_vec(),
        tree: state.tree,
    })
}

/// Greedy thinning: visit points in a seeded random order, keep each
/// surviving point and discard every other point within `r` of it.
pub fn subsample(cloud: &SampleCloud, r: f64, seed: u64) -> SampleCloud {
    assert!(r > 0.0, "subsample radius must be positive");
    let mut index = PointIndex::new(r);
    for p in &cloud.points {
        index.insert(p.clone());
    }
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut removed = vec![false; cloud.len()];
    let mut kept = Vec::new();
    for i in order {
        if removed[i] {
            continue;
        }
        kept.push(i);
        for j in index.within(&cloud.points[i], r) {
            removed[j] = true;
        }
    }
    kept.sort_unstable();
    let mut out = cloud.clone();
    out.points = kept.iter().map(|&i| cloud.points[i].clone()).collect();
    if cloud.provenance.len() == cloud.len() {
        out.provenance = kept.iter().map(|&i| cloud.provenance[i].clone()).collect();
    }
    out.certificate.epsilon = cloud.certificate.epsilon + r;
    out
}

/// Independent description of the variety used to check a sample.
pub trait Oracle {
    /// Points of the variety inside the sampling region.
    fn reference_points(&self) -> Vec<Vec<f64>>;

    /// Exact distance to the variety, when known.
    fn distance_to_variety(&self, _p: &[f64]) -> Option<f64> {
        None
    }
}

pub struct DenseCloudOracle(pub Vec<Vec<f64>>);

impl Oracle for DenseCloudOracle {
    fn reference_points(&self) -> Vec<Vec<f64>> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub passed: bool,
    /// Largest distance from a reference point to the cloud.
    pub max_gap: f64,
    /// Largest certified distance from a cloud point to the variety.
    pub max_certified: f64,
    /// Largest exact distance to the variety, when the oracle knows it.
    pub max_exact: Option<f64>,
    /// First violating point (reference point for gaps, cloud point otherwise).
    pub witness: Option<Vec<f64>>,
    pub message: String,
}

/// Checks both halves of the `(delta, eps)` claim of `cloud` against `oracle`.
pub fn verify_sample(cloud: &SampleCloud, sys: &PolynomialSystem, oracle: &dyn Oracle) -> VerifyReport {
    let (delta, eps) = (cloud.certificate.delta, cloud.certificate.epsilon);
    let mut witness = None;
    let mut message = String::new();
    let mut max_certified: f64 = 0.0;
    let mut max_exact: Option<f64> = None;
    for p in &cloud.points {
        let c = certified_distance_bound(sys, p);
        max_certified = max_certified.max(c);
        if let Some(e) = oracle.distance_to_variety(p) {
            max_exact = Some(max_exact.map_or(e, |m| m.max(e)));
            if e > delta && witness.is_none() {
                witness = Some(p.clone());
                write!(message, "cloud point at exact distance {e:e} > delta; ").unwrap();
            }
        }
        if !(c <= delta) && witness.is_none() {
            witness = Some(p.clone());
            write!(message, "cloud point with certified distance {c:e} > delta; ").unwrap();
        }
    }
    let mut index = PointIndex::new(eps);
    for p in &cloud.points {
        index.insert(p.clone());
    }
    let mut max_gap: f64 = 0.0;
    let refs = oracle.reference_points();
    for q in &refs {
        let gap = match index.nearest_within(q, eps) {
            Some((_, d)) => d,
            None => cloud.points.iter().map(|p| dist(p, q)).fold(f64::INFINITY, f64::min),
        };
        if gap > max_gap {
            max_gap = gap;
        }
        if !(gap <= eps) && witness.is_none() {
            witness = Some(q.clone());
            write!(message, "reference point at distance {gap:e} > epsilon from the cloud; ").unwrap();
        }
    }
    let passed = witness.is_none();
    if passed {
        message = format!(
            "ok: {} points, {} reference points, max gap {max_gap:e}, max certified distance {max_certified:e}",
            cloud.len(),
            refs.len()
        );
    }
    VerifyReport {
        passed,
        max_gap,
        max_certified,
        max_exact,
        witness,
        message: message.trim_end_matches("; ").to_string(),
    }
}

pub fn write_cloud(cloud: &SampleCloud, mut w: impl Write) -> std::io::Result<()> {
    let c = &cloud.certificate;
    writeln!(w, "# vars: {}", cloud.vars.join(" "))?;
    writeln!(w, "# epsilon: {:e}", c.epsilon)?;
    writeln!(w, "# delta: {:e}", c.delta)?;
    writeln!(w, "# certificate: ({:e},{:e})", c.delta, c.epsilon)?;
    writeln!(w, "# seed: {}", cloud.seed)?;
    writeln!(w, "# calls: {}", c.calls)?;
    writeln!(w, "# depth: {}", c.depth)?;
    writeln!(w, "# points: {}", cloud.len())?;
    for p in &cloud.points {
        let row: Vec<String> = p.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_cloud(cloud: &SampleCloud, path: &Path) -> std::io::Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cloud(cloud, f)
}

#[derive(Debug, Error)]
pub enum CloudFormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_cloud(r: impl BufRead) -> Result<SampleCloud, CloudFormatError> {
    let mut vars: Option<Vec<String>> = None;
    let mut cert = Certificate {
        delta: 0.0,
        epsilon: 0.0,
        calls: 0,
        depth: 0,
        nodes: 0,
        perturbed_calls: 0,
        lemma_violations: 0,
    };
    let mut seed = 0;
    let mut points = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let err = |message: String| CloudFormatError::Syntax { line: lineno, message };
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(meta) = t.strip_prefix('#') {
            let Some((key, value)) = meta.split_once(':') else { continue };
            let value = value.trim();
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number `{v}`")));
            match key.trim() {
                "vars" => vars = Some(value.split_whitespace().map(String::from).collect()),
                "epsilon" => cert.epsilon = num(value)?,
                "delta" => cert.delta = num(value)?,
                "seed" => seed = value.parse().map_err(|_| err(format!("bad seed `{value}`")))?,
                "calls" => cert.calls = value.parse().unwrap_or(0),
                "depth" => cert.depth = value.parse().unwrap_or(0),
                _ => {}
            }
            continue;
        }
        let p: Vec<f64> = t
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| err(format!("bad coordinate `{v}`"))))
            .collect::<Result<_, _>>()?;
        if let Some(first) = points.first() {
            let first: &Vec<f64> = first;
            if first.len() != p.len() {
                return Err(err(format!("expected {} coordinates, found {}", first.len(), p.len())));
            }
        }
        points.push(p);
    }
    let n = points.first().map(Vec::len);
    let vars = match (vars, n) {
        (Some(v), Some(n)) if v.len() != n => {
            return Err(CloudFormatError::Syntax {
                line: 1,
                message: format!("{} variables declared, points have {n} coordinates", v.len()),
            })
        }
        (Some(v), _) => v,
        (None, Some(n)) => (1..=n).map(|i| format!("x{i}")).collect(),
        (None, None) => Vec::new(),
    };
    Ok(SampleCloud {
        vars,
        points,
        provenance: Vec::new(),
        certificate: cert,
        seed,
    })
}

pub fn load_cloud(path: &Path) -> Result<SampleCloud, CloudFormatError> {
    read_cloud(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: Vec<Vec<f64>>) -> SampleCloud {
        SampleCloud {
            vars: vec!["x1".into(), "x2".into()],
            points,
            provenance: Vec::new(),
            certificate: Certificate {
                delta: 1e-7,
                epsilon: 1.0,
                calls: 0,
                depth: 0,
                nodes: 0,
                perturbed_calls: 0,
                lemma_violations: 0,
            },
            seed: 0,
        }
    }

    #[test]
    fn subsample_examples() {
        let c = cloud(vec![vec![0.0, 0.0], vec![0.05, 0.0]]);
        let s = subsample(&c, 0.12, 1);
        assert_eq!(s.len(), 1);
        assert!((s.certificate.epsilon - 1.12).abs() < 1e-15);
        assert_eq!(s.certificate.delta, 1e-7);

        let c = cloud(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = subsample(&c, 0.12, 1);
        assert_eq!(s.points, c.points);
    }

    #[test]
    fn point_index_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        let mut idx = PointIndex::new(0.1);
        let pts: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        for p in &pts {
            idx.insert(p.clone());
        }
        for _ in 0..500 {
            let q = vec![rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)];
            let r = rng.random_range(0.0..0.5);
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| dist(&pts[i], &q) <= r).collect();
            assert_eq!(idx.within(&q, r), brute);
        }
    }

    #[test]
    fn config_validation() {
        let sys = PolynomialSystem::parse("vars: x1 x2\nx1^2 + x2^2 - 1").unwrap();
        let region = BBox::cube(2, -2.0, 2.0).unwrap();
        assert!(SamplerConfig::new(region.clone(), 0.2, 1e-6).validate(&sys).is_ok());
        assert!(SamplerConfig::new(region.clone(), 0.0, 0.0).validate(&sys).is_err());
        assert!(SamplerConfig::new(region.clone(), 0.2, 0.3).validate(&sys).is_err());
        assert!(SamplerConfig::new(region.clone(), 0.2, 0.0).validate(&sys).is_err());
        assert!(SamplerConfig::new(BBox::cube(3, -2.0, 2.0).unwrap(), 0.2, 1e-6).validate(&sys).is_err());
        let mut cfg = SamplerConfig::new(region, 0.2, 1e-6);
        cfg.heuristics.dynamic_sample = Some(0.2);
        assert!(cfg.validate(&sys).is_err());
        cfg.heuristics.dynamic_sample = Some(0.05);
        assert!(cfg.validate(&sys).is_ok());
        assert!((cfg.effective_epsilon() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let mut c = cloud(vec![vec![0.1, -1.0 / 3.0], vec![std::f64::consts::PI, 1e-300]]);
        c.seed = 99;
        let mut buf = Vec::new();
        write_cloud(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# vars: x1 x2\n"));
        assert!(text.contains("# certificate: (1e-7,1e0)"));
        let back = read_cloud(&buf[..]).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.vars, c.vars);
        assert_eq!(back.seed, 99);
        assert_eq!(back.certificate.delta, 1e-7);
        assert_eq!(back.certificate.epsilon, 1.0);
        assert!(read_cloud("1,2\n3\n".as_bytes()).is_err());
        assert!(read_cloud("# vars: a b c\n1,2\n".as_bytes()).is_err());
    }
}
