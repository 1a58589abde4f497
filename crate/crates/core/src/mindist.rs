//! Minimum distance from a test point to a real variety.
//!
//! For `f = (f_1, ..., f_{N-d})` and a test point `y`, the critical points of
//! `||x - y||^2` on `V(f)` solve the Fritz John system
//!
//! ```text
//! f(x) - t * beta                              = 0   (N - d equations)
//! l_0 (x - y) + sum_i l_i grad f_i(x)          = 0   (N equations)
//! c . l - 1                                    = 0   (affine patch)
//! ```
//!
//! at `t = 0`. The `t = 1` system is solved from a total-degree start and
//! its solutions are continued down to `t = 0`. Real endpoints are refined in
//! real arithmetic and certified with the bound `||J_f^+|| * ||f(x)||`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homotopy::{
    solve_total_degree, track_all, AtTime, GradedSystem, Homotopy, HomotopyError, PathPoint, PathStatus,
    TrackerConfig, C64,
};
use crate::polysys::{Polynomial, PolynomialSystem};

#[derive(Debug, Error)]
pub enum MinDistanceError {
    #[error("system must have exactly N - d = {expected} equations, found {found}")]
    NotReduced { expected: usize, found: usize },
    #[error("test point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Homotopy(#[from] HomotopyError),
    #[error("minimum distance failed after {attempts} attempts: {diagnostics}")]
    Failed { attempts: usize, diagnostics: String },
    #[error("external solver: {0}")]
    External(String),
}

/// The square Fritz John system `H_{y,beta}(x, l, t)`.
#[derive(Debug, Clone)]
pub struct FritzJohnSystem {
    n: usize,
    k: usize,
    polys: Vec<Polynomial>,
    grads: Vec<Vec<Polynomial>>,
    hess: Vec<Vec<Vec<Polynomial>>>,
    max_exp: Vec<u32>,
    pub y: Vec<f64>,
    pub patch: Vec<C64>,
    pub beta: Vec<C64>,
}

fn random_unit_complex(rng: &mut impl Rng, len: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..len)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Builds the Fritz John system for `sys` at test point `y`, with the
/// patch covector and `beta` drawn from the complex unit sphere.
pub fn build_fritz_john(sys: &PolynomialSystem, y: &[f64], seed: u64) -> Result<FritzJohnSystem, MinDistanceError> {
    let n = sys.num_vars();
    let k = sys.codim();
    if !sys.is_reduced() {
        return Err(MinDistanceError::NotReduced {
            expected: k,
            found: sys.polys().len(),
        });
    }
    if y.len() != n {
        return Err(MinDistanceError::DimensionMismatch { expected: n, got: y.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patch = random_unit_complex(&mut rng, k + 1);
    let beta = random_unit_complex(&mut rng, k);
    let polys = sys.polys().to_vec();
    let grads: Vec<Vec<Polynomial>> = polys.iter().map(|p| (0..n).map(|j| p.derivative(j)).collect()).collect();
    let hess = grads
        .iter()
        .map(|row| row.iter().map(|g| (0..n).map(|l| g.derivative(l)).collect()).collect())
        .collect();
    let mut max_exp = vec![1u32; n];
    for p in &polys {
        for (m, e) in max_exp.iter_mut().zip(p.max_exponents()) {
            *m = (*m).max(e);
        }
    }
    Ok(FritzJohnSystem {
        n,
        k,
        polys,
        grads,
        hess,
        max_exp,
        y: y.to_vec(),
        patch,
        beta,
    })
}

impl FritzJohnSystem {
    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_multipliers(&self) -> usize {
        self.k + 1
    }

    fn powers(&self, x: &[C64]) -> Vec<Vec<C64>> {
        x.iter()
            .zip(&self.max_exp)
            .map(|(xi, &m)| {
                let mut row = Vec::with_capacity(m as usize + 1);
                let mut p = C64::new(1.0, 0.0);
                for _ in 0..=m {
                    row.push(p);
                    p *= xi;
                }
                row
            })
            .collect()
    }

    pub fn degrees(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.polys.iter().map(Polynomial::degree).collect();
        for j in 0..self.n {
            let d = (0..self.k)
                .filter(|&i| !self.grads[i][j].is_zero())
                .map(|i| self.grads[i][j].degree() + 1)
                .fold(2, u32::max);
            out.push(d);
        }
        out.push(1);
        out
    }

    /// Equations rendered with named unknowns, `t = 0`; multipliers are `l0..lk`.
    pub fn equations_text(&self, names: &[String]) -> Vec<String> {
        let mut out: Vec<String> = self.polys.iter().map(|p| p.fmt_with_names(names)).collect();
        for j in 0..self.n {
            let mut s = format!("l0*({} - ({:e}))", names[j], self.y[j]);
            for i in 0..self.k {
                if !self.grads[i][j].is_zero() {
                    write!(s, " + l{}*({})", i + 1, self.grads[i][j].fmt_with_names(names)).unwrap();
                }
            }
            out.push(s);
        }
        let patch: Vec<String> = self
            .patch
            .iter()
            .enumerate()
            .map(|(m, c)| format!("({:e} + {:e}*I)*l{m}", c.re, c.im))
            .collect();
        out.push(format!("{} - 1", patch.join(" + ")));
        out
    }
}

impl Homotopy for FritzJohnSystem {
    fn size(&self) -> usize {
        2 * self.n + 1 - (self.n - self.k)
    }

    fn evaluate(&self, u: &[C64], t: f64, out: &mut [C64]) {
        let (n, k) = (self.n, self.k);
        let x = &u[..n];
        let lam = &u[n..];
        let pw = self.powers(x);
        for i in 0..k {
            out[i] = self.polys[i].eval_with_powers(&pw) - self.beta[i] * t;
        }
        for j in 0..n {
            let mut v = lam[0] * (x[j] - self.y[j]);
            for i in 0..k {
                if !self.grads[i][j].is_zero() {
                    v += lam[i + 1] * self.grads[i][j].eval_with_powers(&pw);
                }
            }
            out[k + j] = v;
        }
        out[k + n] = self.patch.iter().zip(lam).map(|(c, l)| c * l).sum::<C64>() - 1.0;
    }

    fn evaluate_full(&self, u: &[C64], t: f64, value: &mut [C64], jac: &mut DMatrix<C64>, dt: &mut [C64]) {
        let (n, k) = (self.n, self.k);
        let zero = C64::new(0.0, 0.0);
        let x = &u[..n];
        let lam = &u[n..];
        let pw = self.powers(x);
        jac.fill(zero);
        dt.fill(zero);
        let grad_vals: Vec<Vec<C64>> = self
            .grads
            .iter()
            .map(|row| row.iter().map(|g| g.eval_with_powers(&pw)).collect())
            .collect();
        for i in 0..k {
            value[i] = self.polys[i].eval_with_powers(&pw) - self.beta[i] * t;
            dt[i] = -self.beta[i];
            for j in 0..n {
                jac[(i, j)] = grad_vals[i][j];
            }
        }
        for j in 0..n {
            let row = k + j;
            let mut v = lam[0] * (x[j] - self.y[j]);
            jac[(row, j)] = lam[0];
            jac[(row, n)] = x[j] - self.y[j];
            for i in 0..k {
                v += lam[i + 1] * grad_vals[i][j];
                jac[(row, n + 1 + i)] = grad_vals[i][j];
                for l in 0..n {
                    let h = &self.hess[i][j][l];
                    if !h.is_zero() {
                        jac[(row, l)] += lam[i + 1] * h.eval_with_powers(&pw);
                    }
                }
            }
            value[row] = v;
        }
        let row = k + n;
        value[row] = self.patch.iter().zip(lam).map(|(c, l)| c * l).sum::<C64>() - 1.0;
        for (m, c) in self.patch.iter().enumerate() {
            jac[(row, n + m)] = *c;
        }
    }
}

impl GradedSystem for AtTime<'_, FritzJohnSystem> {
    fn degrees(&self) -> Vec<u32> {
        self.homotopy.degrees()
    }
}

/// Command-line polynomial solver invoked in a scratch directory.
///
/// The solver receives a file named `input` describing the Fritz John system
/// at `t = 0` (Bertini-style `CONFIG`/`INPUT` blocks) and must write
/// `real_finite_solutions`: a solution count followed by one `re im` pair per
/// unknown for each solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalSolver {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    #[default]
    Internal,
    External(ExternalSolver),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinDistanceConfig {
    pub tracker: TrackerConfig,
    /// Required accuracy: witnesses are accepted when `2 ||J^+|| ||f|| <= delta`.
    pub delta: f64,
    pub imag_tol: f64,
    pub dedup_tol: f64,
    /// Retries 1 and 2 re-randomize `(beta, gamma, patch)`; retry `k >= 3`
    /// additionally perturbs `y` by `1e-10 * 100^(k - 3)` relative.
    pub max_retries: usize,
    pub backend: Backend,
}

impl Default for MinDistanceConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            delta: 1e-6,
            imag_tol: 1e-6,
            dedup_tol: 1e-8,
            max_retries: 5,
            backend: Backend::Internal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub distance: f64,
    /// `||f(point)||_inf`.
    pub residual: f64,
    /// `2 ||J_f^+|| ||f(point)||_2`, a bound on the distance to the variety.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinDistanceResult {
    pub witnesses: Vec<Witness>,
    /// `f64::INFINITY` when no real endpoint exists.
    pub min_distance: f64,
    pub certified_accuracy: f64,
    /// The test point actually used (differs from the request after a
    /// perturbed retry).
    pub test_point: Vec<f64>,
    pub attempts: usize,
    pub paths_tracked: usize,
    /// A real candidate closer than `min_distance` failed certification.
    #[serde(default)]
    pub uncertified_closer: bool,
}

impl MinDistanceResult {
    pub fn is_empty(&self) -> bool {
        self.witnesses.is_empty()
    }

    pub fn nearest(&self) -> Option<&Witness> {
        self.witnesses.iter().min_by(|a, b| a.distance.total_cmp(&b.distance))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Real-arithmetic data for refinement and certification.
struct RealSystem<'a> {
    polys: &'a [Polynomial],
    grads: Vec<Vec<Polynomial>>,
    hess: Vec<Vec<Vec<Polynomial>>>,
    n: usize,
}

impl<'a> RealSystem<'a> {
    fn new(sys: &'a PolynomialSystem) -> Self {
        let n = sys.num_vars();
        let grads: Vec<Vec<Polynomial>> = sys.polys().iter().map(|p| (0..n).map(|j| p.derivative(j)).collect()).collect();
        let hess = grads
            .iter()
            .map(|row| row.iter().map(|g| (0..n).map(|l| g.derivative(l)).collect()).collect())
            .collect();
        Self {
            polys: sys.polys(),
            grads,
            hess,
            n,
        }
    }

    fn f(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.polys.len(), self.polys.iter().map(|p| p.eval_real(x)))
    }

    fn jf(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.polys.len(), self.n, |i, j| self.grads[i][j].eval_real(x))
    }

    /// Newton on the real Fritz John system with patch `mu[anchor] = 1`.
    fn refine_critical(&self, x: &[f64], mu: &[f64], anchor: usize, y: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (n, k) = (self.n, self.polys.len());
        let m = n + k + 1;
        let mut u: Vec<f64> = x.iter().chain(mu).cloned().collect();
        let eval = |u: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
            let (x, l) = u.split_at(n);
            let mut v = DVector::zeros(m);
            let mut jac = DMatrix::zeros(m, m);
            for i in 0..k {
                v[i] = self.polys[i].eval_real(x);
                for j in 0..n {
                    jac[(i, j)] = self.grads[i][j].eval_real(x);
                }
            }
            for j in 0..n {
                let row = k + j;
                v[row] = l[0] * (x[j] - y[j]);
                jac[(row, j)] = l[0];
                jac[(row, n)] = x[j] - y[j];
                for i in 0..k {
                    let g = self.grads[i][j].eval_real(x);
                    v[row] += l[i + 1] * g;
                    jac[(row, n + 1 + i)] = g;
                    for p in 0..n {
                        jac[(row, p)] += l[i + 1] * self.hess[i][j][p].eval_real(x);
                    }
                }
            }
            v[m - 1] = l[anchor] - 1.0;
            jac[(m - 1, n + anchor)] = 1.0;
            (v, jac)
        };
        let scale = 1.0 + u.iter().map(|a| a.abs()).fold(0.0, f64::max);
        for _ in 0..12 {
            let (v, jac) = eval(&u);
            if v.amax() <= 1e-15 * scale {
                break;
            }
            let step = jac.lu().solve(&(-v))?;
            if !step.iter().all(|s| s.is_finite()) {
                return None;
            }
            for (a, s) in u.iter_mut().zip(step.iter()) {
                *a += s;
            }
            if step.amax() <= 1e-16 * scale {
                break;
            }
        }
        let (v, _) = eval(&u);
        if !(v.amax() <= 1e-9 * scale) {
            return None;
        }
        let (x, l) = u.split_at(n);
        Some((x.to_vec(), l.to_vec()))
    }

    /// Minimum-norm Gauss-Newton steps onto `f = 0`.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut x = DVector::from_column_slice(x);
        let mut best = self.f(x.as_slice()).norm();
        for _ in 0..10 {
            if best == 0.0 {
                break;
            }
            let fx = self.f(x.as_slice());
            let j = self.jf(x.as_slice());
            let jjt = &j * j.transpose();
            let Some(w) = jjt.lu().solve(&fx) else { break };
            let cand = &x - j.transpose() * w;
            let r = self.f(cand.as_slice()).norm();
            if !(r < best) {
                break;
            }
            x = cand;
            best = r;
        }
        x.as_slice().to_vec()
    }

    /// `||J_f(x)^+|| * ||f(x)||_2`, infinite when `J_f` is rank deficient.
    fn kantorovich_bound(&self, x: &[f64]) -> f64 {
        let r = self.f(x).norm();
        if r == 0.0 {
            return 0.0;
        }
        let sv = self.jf(x).singular_values();
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin <= 0.0 {
            f64::INFINITY
        } else {
            r / smin
        }
    }
}

/// Distance-to-variety bound `2 ||J_f^+|| ||f(x)||` used for certification.
pub fn certified_distance_bound(sys: &PolynomialSystem, x: &[f64]) -> f64 {
    2.0 * RealSystem::new(sys).kantorovich_bound(x)
}

/// Filters the real endpoints of a completed run, refines them in real
/// arithmetic and certifies them to accuracy `delta`.
pub fn harvest_real_endpoints(endpoints: &[PathPoint], sys: &PolynomialSystem, y: &[f64], delta: f64) -> MinDistanceResult {
    harvest_with(endpoints, sys, y, delta, 1e-6, 1e-8)
}

fn harvest_with(
    endpoints: &[PathPoint],
    sys: &PolynomialSystem,
    y: &[f64],
    delta: f64,
    imag_tol: f64,
    dedup_tol: f64,
) -> MinDistanceResult {
    let n = sys.num_vars();
    let real = RealSystem::new(sys);
    let mut witnesses: Vec<Witness> = Vec::new();
    let mut closest_rejected = f64::INFINITY;
    for e in endpoints {
        let usable = match e.status {
            PathStatus::Converged => true,
            PathStatus::SingularEndpoint => e.t <= 1e-6,
            _ => false,
        };
        if !usable || e.u.len() < n {
            continue;
        }
        let (xs, lam) = e.u.split_at(n);
        if xs.iter().any(|z| z.im.abs() > imag_tol || !z.re.is_finite()) {
            continue;
        }
        let mut x: Vec<f64> = xs.iter().map(|z| z.re).collect();
        if !lam.is_empty() {
            // Rotate the multipliers onto the real line before refining.
            let anchor = (0..lam.len()).max_by(|&a, &b| lam[a].norm().total_cmp(&lam[b].norm())).unwrap();
            if lam[anchor].norm() > 0.0 {
                let mu: Vec<f64> = lam.iter().map(|l| (l / lam[anchor]).re).collect();
                if let Some((xr, _)) = real.refine_critical(&x, &mu, anchor, y) {
                    if dist(&xr, &x) <= 1e-4 * (1.0 + dist(&x, y)) {
                        x = xr;
                    }
                }
            }
        }
        x = real.project(&x);
        let accuracy = 2.0 * real.kantorovich_bound(&x);
        let d = dist(&x, y);
        if !(accuracy <= delta && accuracy.is_finite()) {
            closest_rejected = closest_rejected.min(d);
            continue;
        }
        if witnesses.iter().any(|w| dist(&w.point, &x) < dedup_tol) {
            continue;
        }
        let residual = real.f(&x).amax();
        witnesses.push(Witness {
            point: x,
            distance: d,
            residual,
            accuracy,
        });
    }
    let min_distance = witnesses.iter().map(|w| w.distance).fold(f64::INFINITY, f64::min);
    let certified_accuracy = witnesses.iter().map(|w| w.accuracy).fold(0.0, f64::max);
    MinDistanceResult {
        witnesses,
        min_distance,
        certified_accuracy,
        test_point: y.to_vec(),
        attempts: 1,
        paths_tracked: endpoints.len(),
        uncertified_closer: closest_rejected < min_distance,
    }
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed ^ (attempt as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn status_counts(paths: &[PathPoint]) -> [usize; 3] {
    let mut counts = [0; 3];
    for p in paths {
        match p.status {
            PathStatus::Converged => counts[0] += 1,
            PathStatus::Diverged => counts[1] += 1,
            _ => counts[2] += 1,
        }
    }
    counts
}

/// Two paths that reach the same nonsingular start solution indicate a
/// path jump.
fn has_duplicates(paths: &[&PathPoint]) -> bool {
    for (a, pa) in paths.iter().enumerate() {
        for pb in &paths[a + 1..] {
            let scale = 1.0 + pa.u.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let d = pa.u.iter().zip(&pb.u).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            if d <= 1e-6 * scale {
                return true;
            }
        }
    }
    false
}

/// Global minimum distance from `y` to the real points of `V(sys)`,
/// together with every certified real critical point found.
pub fn min_distance(
    sys: &PolynomialSystem,
    y: &[f64],
    cfg: &MinDistanceConfig,
    seed: u64,
) -> Result<MinDistanceResult, MinDistanceError> {
    if let Backend::External(solver) = &cfg.backend {
        return min_distance_external(sys, y, cfg, solver, seed);
    }
    cfg.tracker.validate()?;
    let n = sys.num_vars();
    if y.len() != n {
        return Err(MinDistanceError::DimensionMismatch { expected: n, got: y.len() });
    }
    let mut diagnostics = Vec::new();
    let mut paths_tracked = 0;
    for attempt in 0..=cfg.max_retries {
        let s = attempt_seed(seed, attempt);
        let last = attempt == cfg.max_retries;
        let test_point: Vec<f64> = if attempt >= 3 {
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xA5A5);
            let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let scale = 1e-10 * 100f64.powi(attempt as i32 - 3) * y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            y.iter().zip(&dir).map(|(a, b)| a + scale * b / norm).collect()
        } else {
            y.to_vec()
        };
        let fj = build_fritz_john(sys, &test_point, s)?;
        let at_one = AtTime { homotopy: &fj, t: 1.0 };
        let stage1 = solve_total_degree(&at_one, s.rotate_left(17), &cfg.tracker)?;
        paths_tracked += stage1.len();
        let c1 = status_counts(&stage1);
        let starts: Vec<&PathPoint> = stage1.iter().filter(|p| p.status == PathStatus::Converged).collect();
        let crossing = has_duplicates(&starts);
        if (crossing || starts.is_empty()) && !last {
            diagnostics.push(format!(
                "attempt {attempt}: start solve converged/diverged/singular = {c1:?}{}",
                if crossing { ", path crossing" } else { "" }
            ));
            continue;
        }
        let start_points: Vec<Vec<C64>> = starts.iter().map(|p| p.u.clone()).collect();
        let stage2 = track_all(&fj, &start_points, &cfg.tracker);
        paths_tracked += stage2.len();
        let c2 = status_counts(&stage2);
        if c2[0] == 0 {
            diagnostics.push(format!("attempt {attempt}: no endpoint converged ({c2:?})"));
            continue;
        }
        let mut result = harvest_with(&stage2, sys, &test_point, cfg.delta, cfg.imag_tol, cfg.dedup_tol);
        if result.uncertified_closer && !last {
            diagnostics.push(format!("attempt {attempt}: nearest candidate failed certification"));
            continue;
        }
        result.attempts = attempt + 1;
        result.paths_tracked = paths_tracked;
        return Ok(result);
    }
    Err(MinDistanceError::Failed {
        attempts: cfg.max_retries + 1,
        diagnostics: diagnostics.join("; "),
    })
}

/// Writes the solver input for the Fritz John system at `t = 0`.
pub fn external_input(fj: &FritzJohnSystem, var_names: &[String]) -> String {
    let mults: Vec<String> = (0..fj.num_multipliers()).map(|m| format!("l{m}")).collect();
    let eqs = fj.equations_text(var_names);
    let mut s = String::new();
    s.push_str("CONFIG\nTrackType: 0;\nEND;\nINPUT\n");
    writeln!(s, "variable_group {};", var_names.join(",")).unwrap();
    writeln!(s, "variable_group {};", mults.join(",")).unwrap();
    let fnames: Vec<String> = (0..eqs.len()).map(|i| format!("g{}", i + 1)).collect();
    writeln!(s, "function {};", fnames.join(",")).unwrap();
    for (name, e) in fnames.iter().zip(&eqs) {
        writeln!(s, "{name} = {e};").unwrap();
    }
    s.push_str("END;\n");
    s
}

/// Parses a `real_finite_solutions` file with `dim` unknowns per solution.
pub fn parse_solutions(text: &str, dim: usize) -> Result<Vec<Vec<C64>>, MinDistanceError> {
    let mut toks = text.split_whitespace();
    let count: usize = toks
        .next()
        .ok_or_else(|| MinDistanceError::External("empty solutions file".into()))?
        .parse()
        .map_err(|_| MinDistanceError::External("bad solution count".into()))?;
    let nums: Vec<f64> = toks
        .map(|t| t.parse::<f64>().map_err(|_| MinDistanceError::External(format!("bad number `{t}`"))))
        .collect::<Result<_, _>>()?;
    if nums.len() != count * dim * 2 {
        return Err(MinDistanceError::External(format!(
            "expected {} numbers for {count} solutions, found {}",
            count * dim * 2,
            nums.len()
        )));
    }
    Ok(nums
        .chunks(dim * 2)
        .map(|c| c.chunks(2).map(|p| C64::new(p[0], p[1])).collect())
        .collect())
}

fn min_distance_external(
    sys: &PolynomialSystem,
    y: &[f64],
    cfg: &MinDistanceConfig,
    solver: &ExternalSolver,
    seed: u64,
) -> Result<MinDistanceResult, MinDistanceError> {
    let fj = build_fritz_john(sys, y, seed)?;
    let dir = tempfile::tempdir().map_err(|e| MinDistanceError::External(e.to_string()))?;
    let input = dir.path().join("input");
    std::fs::write(&input, external_input(&fj, sys.vars())).map_err(|e| MinDistanceError::External(e.to_string()))?;
    let status = Command::new(&solver.program)
        .args(&solver.args)
        .arg("input")
        .current_dir(dir.path())
        .output()
        .map_err(|e| MinDistanceError::External(format!("cannot run {}: {e}", solver.program.display())))?;
    if !status.status.success() {
        return Err(MinDistanceError::External(format!(
            "solver exited with {}: {}",
            status.status,
            String::from_utf8_lossy(&status.stderr)
        )));
    }
    let out = std::fs::read_to_string(dir.path().join("real_finite_solutions"))
        .map_err(|e| MinDistanceError::External(format!("missing real_finite_solutions: {e}")))?;
    let sols = parse_solutions(&out, fj.size())?;
    let endpoints: Vec<PathPoint> = sols
        .into_iter()
        .map(|u| {
            let mut v = vec![C64::new(0.0, 0.0); fj.size()];
            fj.evaluate(&u, 0.0, &mut v);
            PathPoint {
                residual: v.iter().map(|z| z.norm()).fold(0.0, f64::max),
                u,
                t: 0.0,
                step_size: 0.0,
                status: PathStatus::Converged,
                steps: 0,
            }
        })
        .collect();
    Ok(harvest_with(&endpoints, sys, y, cfg.delta, cfg.imag_tol, cfg.dedup_tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homotopy::total_degree_start;

    fn circle() -> PolynomialSystem {
        PolynomialSystem::parse("vars: x1 x2\nx1^2 + x2^2 - 1").unwrap()
    }

    pub(crate) fn torus() -> PolynomialSystem {
        PolynomialSystem::parse("vars: x1 y1 x2 y2\nx1^2 + y1^2 - 0.5\nx2^2 + y2^2 - 0.5").unwrap()
    }

    #[test]
    fn circle_fritz_john_shape() {
        let fj = build_fritz_john(&circle(), &[2.0, 0.0], 1).unwrap();
        assert_eq!(fj.size(), 4);
        assert_eq!(fj.degrees(), vec![2, 2, 2, 1]);
        let names: Vec<String> = ["x1", "x2"].iter().map(|s| s.to_string()).collect();
        let eqs = fj.equations_text(&names);
        assert_eq!(eqs[0], "x1^2 + x2^2 - 1");
        assert_eq!(eqs[1], "l0*(x1 - (2e0)) + l1*(2*x1)");
        assert_eq!(eqs[2], "l0*(x2 - (0e0)) + l1*(2*x2)");
        let norm: f64 = fj.patch.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        // (1, 0) with l0 = 2 l1 solves the t = 0 system.
        let l1 = 1.0 / (fj.patch[0] * 2.0 + fj.patch[1]);
        let u = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), l1 * 2.0, l1];
        let mut v = vec![C64::new(0.0, 0.0); 4];
        fj.evaluate(&u, 0.0, &mut v);
        assert!(v.iter().all(|z| z.norm() < 1e-14));
        let at_one = AtTime { homotopy: &fj, t: 1.0 };
        let (_, starts) = total_degree_start(&at_one, 3).unwrap();
        assert_eq!(starts.len(), 8);
    }

    #[test]
    fn square_sizes() {
        let fj = build_fritz_john(&torus(), &[0.3, 0.1, -0.2, 0.7], 1).unwrap();
        assert_eq!(fj.size(), 7);
        let pent = PolynomialSystem::parse(
            "vars: s1 s2 s3 c1 c2 c3
s1^2 + c1^2 - 1
s2^2 + c2^2 - 1
s3^2 + c3^2 - 1
(s1 + s2 + s3)^2 + (1 + c1 + c2 + c3)^2 - 1",
        )
        .unwrap();
        let fj = build_fritz_john(&pent, &[0.1; 6], 1).unwrap();
        assert_eq!(fj.size(), 11);
        assert!(build_fritz_john(&circle(), &[1.0], 0).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let fj = build_fritz_john(&torus(), &[0.3, 0.1, -0.2, 0.7], 9).unwrap();
        let m = fj.size();
        let u: Vec<C64> = (0..m).map(|i| C64::new(0.3 + 0.1 * i as f64, -0.2 + 0.05 * i as f64)).collect();
        let t = 0.4;
        let mut v = vec![C64::new(0.0, 0.0); m];
        let mut dt = v.clone();
        let mut jac = DMatrix::zeros(m, m);
        fj.evaluate_full(&u, t, &mut v, &mut jac, &mut dt);
        let h = 1e-6;
        for j in 0..m {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let mut fp = vec![C64::new(0.0, 0.0); m];
            let mut fm = fp.clone();
            fj.evaluate(&up, t, &mut fp);
            fj.evaluate(&dn, t, &mut fm);
            for i in 0..m {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).norm() < 1e-7, "entry ({i},{j})");
            }
        }
        let mut fp = vec![C64::new(0.0, 0.0); m];
        let mut fm = fp.clone();
        fj.evaluate(&u, t + h, &mut fp);
        fj.evaluate(&u, t - h, &mut fm);
        for i in 0..m {
            assert!(((fp[i] - fm[i]) / (2.0 * h) - dt[i]).norm() < 1e-7);
        }
    }

    #[test]
    fn circle_distances() {
        let cfg = MinDistanceConfig::default();
        let r = min_distance(&circle(), &[2.0, 0.0], &cfg, 1).unwrap();
        assert!((r.min_distance - 1.0).abs() < 1e-9, "{r:?}");
        assert_eq!(r.witnesses.len(), 2);
        for target in [[1.0, 0.0], [-1.0, 0.0]] {
            assert!(r.witnesses.iter().any(|w| dist(&w.point, &target) < 1e-9));
        }
        assert!(r.certified_accuracy <= cfg.delta);
        assert!(r.witnesses.iter().all(|w| r.min_distance <= w.distance));

        let r = min_distance(&circle(), &[0.0, 0.0], &cfg, 1).unwrap();
        assert!((r.min_distance - 1.0).abs() < 1e-8, "{r:?}");
        assert!(r.attempts > 1);
    }

    #[test]
    fn empty_variety_has_no_witnesses() {
        let sys = PolynomialSystem::parse("vars: x1 x2\nx1^2 + x2^2 + 1").unwrap();
        let r = min_distance(&sys, &[0.3, -0.4], &MinDistanceConfig::default(), 2).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.min_distance, f64::INFINITY);
    }

    #[test]
    fn harvest_filters_and_dedups() {
        let sys = circle();
        let y = [2.0, 0.0];
        let point = |re: f64, im: f64, status| PathPoint {
            u: vec![C64::new(re, im), C64::new(0.0, 0.0)],
            t: 0.0,
            step_size: 0.0,
            status,
            residual: 0.0,
            steps: 0,
        };
        let complex = vec![point(1.0, 0.5, PathStatus::Converged), point(0.0, 1.0, PathStatus::Converged)];
        let r = harvest_real_endpoints(&complex, &sys, &y, 1e-6);
        assert!(r.is_empty());
        assert_eq!(r.min_distance, f64::INFINITY);

        let dup = vec![
            point(1.0, 0.0, PathStatus::Converged),
            point(1.0 + 1e-12, 0.0, PathStatus::Converged),
            point(-1.0, 0.0, PathStatus::Diverged),
        ];
        let r = harvest_real_endpoints(&dup, &sys, &y, 1e-6);
        assert_eq!(r.witnesses.len(), 1);
        assert!((r.min_distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn external_input_and_solution_parsing() {
        let fj = build_fritz_john(&circle(), &[2.0, 0.0], 1).unwrap();
        let text = external_input(&fj, circle().vars());
        assert!(text.contains("variable_group x1,x2;"));
        assert!(text.contains("variable_group l0,l1;"));
        assert!(text.contains("function g1,g2,g3,g4;"));
        let sols = parse_solutions("2\n\n1 0\n0 0\n3 0.5\n-1 0\n\n-1 0\n0 0\n1 0\n1 0\n", 4).unwrap();
        assert_eq!(sols.len(), 2);
        assert_eq!(sols[0][2], C64::new(3.0, 0.5));
        assert!(parse_solutions("3\n1 0\n", 4).is_err());
        assert!(parse_solutions("", 4).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_backend_round_trip() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake_solver.sh");
        // Two critical points for y = (2, 0): x = (+-1, 0); multipliers are ignored by refinement.
        std::fs::write(
            &script,
            "#!/bin/sh\ntest -f \"$1\" || exit 3\nprintf '2\\n\\n1 0\\n0 0\\n1 0\\n1 0\\n\\n-1 0\\n0 0\\n1 0\\n1 0\\n' > real_finite_solutions\n",
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let cfg = MinDistanceConfig {
            backend: Backend::External(ExternalSolver { program: script, args: vec![] }),
            ..Default::default()
        };
        let r = min_distance(&circle(), &[2.0, 0.0], &cfg, 1).unwrap();
        assert_eq!(r.witnesses.len(), 2);
        assert!((r.min_distance - 1.0).abs() < 1e-12);

        let missing = MinDistanceConfig {
            backend: Backend::External(ExternalSolver { program: "/nonexistent/solver".into(), args: vec![] }),
            ..Default::default()
        };
        assert!(matches!(min_distance(&circle(), &[2.0, 0.0], &missing, 1), Err(MinDistanceError::External(_))));
    }
}
