//! Predictor-corrector path tracking for square polynomial systems.
//!
//! A [`Homotopy`] `H(u, t)` is tracked from `t = 1` to `t = 0` with a
//! fourth-order Runge-Kutta predictor on the Davidenko equation
//! `H_u du/dt = -H_t` followed by a Newton corrector. Total-degree start
//! systems `gamma_i (u_i^{d_i} - 1)` supply the starting points.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polysys::Polynomial;

pub type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomotopyError {
    #[error("equation {0} has degree zero")]
    ZeroDegree(usize),
    #[error("system is not square: {equations} equations in {unknowns} unknowns")]
    NotSquare { equations: usize, unknowns: usize },
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
}

/// `M` equations in `M` complex unknowns.
pub trait SquareSystem: Sync {
    fn size(&self) -> usize;
    fn evaluate(&self, u: &[C64], out: &mut [C64]);
    fn jacobian(&self, u: &[C64], jac: &mut DMatrix<C64>);
}

/// A square system whose equations have known total degrees.
pub trait GradedSystem: SquareSystem {
    fn degrees(&self) -> Vec<u32>;
}

/// A family `H(u, t)` of square systems.
pub trait Homotopy: Sync {
    fn size(&self) -> usize;
    fn evaluate(&self, u: &[C64], t: f64, out: &mut [C64]);
    /// Value, Jacobian in `u` and derivative in `t`.
    fn evaluate_full(&self, u: &[C64], t: f64, value: &mut [C64], jac: &mut DMatrix<C64>, dt: &mut [C64]);
}

/// Real polynomials with an optional complex constant added to each equation.
#[derive(Debug, Clone)]
pub struct PolySquareSystem {
    polys: Vec<Polynomial>,
    shifts: Vec<C64>,
    grads: Vec<Vec<Polynomial>>,
}

impl PolySquareSystem {
    pub fn new(polys: Vec<Polynomial>) -> Result<Self, HomotopyError> {
        let shifts = vec![C64::new(0.0, 0.0); polys.len()];
        Self::with_shifts(polys, shifts)
    }

    pub fn with_shifts(polys: Vec<Polynomial>, shifts: Vec<C64>) -> Result<Self, HomotopyError> {
        let m = polys.len();
        if let Some(p) = polys.iter().find(|p| p.num_vars() != m) {
            return Err(HomotopyError::NotSquare {
                equations: m,
                unknowns: p.num_vars(),
            });
        }
        assert_eq!(shifts.len(), m);
        let grads = polys
            .iter()
            .map(|p| (0..m).map(|j| p.derivative(j)).collect())
            .collect();
        Ok(Self { polys, shifts, grads })
    }
}

impl SquareSystem for PolySquareSystem {
    fn size(&self) -> usize {
        self.polys.len()
    }

    fn evaluate(&self, u: &[C64], out: &mut [C64]) {
        for ((o, p), s) in out.iter_mut().zip(&self.polys).zip(&self.shifts) {
            *o = p.eval_complex(u) + s;
        }
    }

    fn jacobian(&self, u: &[C64], jac: &mut DMatrix<C64>) {
        for (i, row) in self.grads.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                jac[(i, j)] = g.eval_complex(u);
            }
        }
    }
}

/// The start system `gamma_i (u_i^{d_i} - 1)`.
#[derive(Debug, Clone)]
pub struct TotalDegreeStart {
    pub degrees: Vec<u32>,
    pub gammas: Vec<C64>,
}

impl TotalDegreeStart {
    /// All `prod d_i` roots, enumerated as a tensor of roots of unity.
    pub fn solutions(&self) -> Vec<Vec<C64>> {
        let mut out: Vec<Vec<C64>> = vec![Vec::new()];
        for &d in &self.degrees {
            let roots: Vec<C64> = (0..d)
                .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64))
                .collect();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    roots.iter().map(move |r| {
                        let mut v = prefix.clone();
                        v.push(*r);
                        v
                    })
                })
                .collect();
        }
        out
    }

    pub fn bezout_number(&self) -> usize {
        self.degrees.iter().map(|&d| d as usize).product()
    }
}

impl GradedSystem for PolySquareSystem {
    fn degrees(&self) -> Vec<u32> {
        self.polys.iter().map(Polynomial::degree).collect()
    }
}

impl SquareSystem for TotalDegreeStart {
    fn size(&self) -> usize {
        self.degrees.len()
    }

    fn evaluate(&self, u: &[C64], out: &mut [C64]) {
        for i in 0..self.degrees.len() {
            out[i] = self.gammas[i] * (u[i].powu(self.degrees[i]) - 1.0);
        }
    }

    fn jacobian(&self, u: &[C64], jac: &mut DMatrix<C64>) {
        jac.fill(C64::new(0.0, 0.0));
        for i in 0..self.degrees.len() {
            let d = self.degrees[i];
            jac[(i, i)] = self.gammas[i] * (d as f64) * u[i].powu(d - 1);
        }
    }
}

/// Builds the total-degree start system for `square` with seeded
/// unit-modulus `gamma_i`, together with all of its solutions.
pub fn total_degree_start(
    square: &impl GradedSystem,
    seed: u64,
) -> Result<(TotalDegreeStart, Vec<Vec<C64>>), HomotopyError> {
    let degrees = square.degrees();
    if let Some(i) = degrees.iter().position(|&d| d == 0) {
        return Err(HomotopyError::ZeroDegree(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas = degrees
        .iter()
        .map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let start = TotalDegreeStart { degrees, gammas };
    let sols = start.solutions();
    Ok((start, sols))
}

/// `H(u, t) = t * start(u) + (1 - t) * target(u)`.
pub struct StraightLine<'a, S: SquareSystem, T: SquareSystem> {
    pub start: &'a S,
    pub target: &'a T,
}

impl<S: SquareSystem, T: SquareSystem> Homotopy for StraightLine<'_, S, T> {
    fn size(&self) -> usize {
        self.target.size()
    }

    fn evaluate(&self, u: &[C64], t: f64, out: &mut [C64]) {
        let m = self.size();
        let mut g = vec![C64::new(0.0, 0.0); m];
        self.start.evaluate(u, &mut g);
        self.target.evaluate(u, out);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o = *o * (1.0 - t) + gi * t;
        }
    }

    fn evaluate_full(&self, u: &[C64], t: f64, value: &mut [C64], jac: &mut DMatrix<C64>, dt: &mut [C64]) {
        let m = self.size();
        let mut g = vec![C64::new(0.0, 0.0); m];
        let mut gj = DMatrix::zeros(m, m);
        self.start.evaluate(u, &mut g);
        self.start.jacobian(u, &mut gj);
        self.target.evaluate(u, value);
        self.target.jacobian(u, jac);
        for i in 0..m {
            dt[i] = g[i] - value[i];
            value[i] = value[i] * (1.0 - t) + g[i] * t;
        }
        *jac *= C64::new(1.0 - t, 0.0);
        *jac += gj * C64::new(t, 0.0);
    }
}

/// A homotopy frozen at one value of `t`.
pub struct AtTime<'a, H: Homotopy> {
    pub homotopy: &'a H,
    pub t: f64,
}

impl<H: Homotopy> SquareSystem for AtTime<'_, H> {
    fn size(&self) -> usize {
        self.homotopy.size()
    }

    fn evaluate(&self, u: &[C64], out: &mut [C64]) {
        self.homotopy.evaluate(u, self.t, out);
    }

    fn jacobian(&self, u: &[C64], jac: &mut DMatrix<C64>) {
        let m = self.size();
        let mut v = vec![C64::new(0.0, 0.0); m];
        let mut dt = vec![C64::new(0.0, 0.0); m];
        self.homotopy.evaluate_full(u, self.t, &mut v, jac, &mut dt);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub tracking_tol: f64,
    pub endpoint_tol: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_newton_iters: usize,
    pub divergence_bound: f64,
    pub endgame_start: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tracking_tol: 1e-8,
            endpoint_tol: 1e-11,
            min_step: 1e-14,
            max_step: 1e-1,
            max_newton_iters: 3,
            divergence_bound: 1e8,
            endgame_start: 0.1,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), HomotopyError> {
        let bad = |m: &str| Err(HomotopyError::InvalidConfig(m.to_string()));
        if !(self.min_step > 0.0 && self.min_step < self.max_step && self.max_step <= 1.0) {
            return bad("need 0 < min_step < max_step <= 1");
        }
        if !(self.tracking_tol > 0.0 && self.endpoint_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_newton_iters == 0 {
            return bad("need at least one Newton iteration");
        }
        if !(self.divergence_bound > 1.0) {
            return bad("divergence bound must exceed 1");
        }
        if !(0.0..=1.0).contains(&self.endgame_start) {
            return bad("endgame start must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    Tracking,
    Converged,
    Diverged,
    SingularEndpoint,
}

/// State of a path; after [`track_path`] returns, `status` is terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub u: Vec<C64>,
    pub t: f64,
    pub step_size: f64,
    pub status: PathStatus,
    /// `||H(u, t)||_inf` at the returned point.
    pub residual: f64,
    pub steps: usize,
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `jac * x = rhs` in place; `false` when the LU factor is singular.
fn lu_solve(jac: &DMatrix<C64>, rhs: &mut [C64]) -> bool {
    let lu = jac.clone().lu();
    let mut b = DVector::from_column_slice(rhs);
    if !lu.solve_mut(&mut b) {
        return false;
    }
    if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return false;
    }
    rhs.copy_from_slice(b.as_slice());
    true
}

/// Ratio of extreme singular values.
pub fn condition_number(jac: &DMatrix<C64>) -> f64 {
    let sv = jac.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

struct Workspace {
    value: Vec<C64>,
    dt: Vec<C64>,
    jac: DMatrix<C64>,
}

impl Workspace {
    fn new(m: usize) -> Self {
        Self {
            value: vec![C64::new(0.0, 0.0); m],
            dt: vec![C64::new(0.0, 0.0); m],
            jac: DMatrix::zeros(m, m),
        }
    }
}

/// Tangent `du/dt = -H_u^{-1} H_t`.
fn tangent(h: &impl Homotopy, u: &[C64], t: f64, ws: &mut Workspace) -> Option<Vec<C64>> {
    h.evaluate_full(u, t, &mut ws.value, &mut ws.jac, &mut ws.dt);
    let mut rhs: Vec<C64> = ws.dt.iter().map(|z| -z).collect();
    lu_solve(&ws.jac, &mut rhs).then_some(rhs)
}

fn axpy(u: &[C64], a: f64, k: &[C64]) -> Vec<C64> {
    u.iter().zip(k).map(|(x, y)| x + y * a).collect()
}

/// Newton correction at fixed `t`. Returns the corrected point when the last
/// update is below `tol * (1 + ||u||)` within `max_iter` iterations.
fn correct(h: &impl Homotopy, u0: Vec<C64>, t: f64, tol: f64, max_iter: usize, ws: &mut Workspace) -> Option<Vec<C64>> {
    let mut u = u0;
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        h.evaluate_full(&u, t, &mut ws.value, &mut ws.jac, &mut ws.dt);
        let mut delta: Vec<C64> = ws.value.iter().map(|z| -z).collect();
        if !lu_solve(&ws.jac, &mut delta) {
            return None;
        }
        let dn = inf_norm(&delta);
        for (x, d) in u.iter_mut().zip(&delta) {
            *x += d;
        }
        if dn <= tol * (1.0 + inf_norm(&u)) {
            return Some(u);
        }
        // Require contraction; expansion indicates a jump toward another path.
        if dn > 0.5 * last {
            return None;
        }
        last = dn;
    }
    None
}

/// Tracks one path of `h` from `t = 1` to `t = 0`.
pub fn track_path(h: &impl Homotopy, start: &[C64], cfg: &TrackerConfig) -> PathPoint {
    let m = h.size();
    let mut ws = Workspace::new(m);
    let mut u = start.to_vec();
    let mut t = 1.0f64;
    let mut step = (cfg.max_step * 0.1).max(cfg.min_step * 2.0);
    let mut successes = 0usize;
    let mut steps = 0usize;

    let finish = |u: Vec<C64>, t: f64, step: f64, status: PathStatus, steps: usize| {
        let mut v = vec![C64::new(0.0, 0.0); m];
        h.evaluate(&u, t, &mut v);
        PathPoint {
            residual: inf_norm(&v),
            u,
            t,
            step_size: step,
            status,
            steps,
        }
    };

    while t > 0.0 {
        let hstep = step.min(t);
        let t1 = if hstep >= t { 0.0 } else { t - hstep };
        let advanced = (|| {
            let k1 = tangent(h, &u, t, &mut ws)?;
            let k2 = tangent(h, &axpy(&u, -0.5 * hstep, &k1), t - 0.5 * hstep, &mut ws)?;
            let k3 = tangent(h, &axpy(&u, -0.5 * hstep, &k2), t - 0.5 * hstep, &mut ws)?;
            let k4 = tangent(h, &axpy(&u, -hstep, &k3), t1, &mut ws)?;
            let pred: Vec<C64> = (0..m)
                .map(|i| u[i] - (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (hstep / 6.0))
                .collect();
            correct(h, pred, t1, cfg.tracking_tol, cfg.max_newton_iters, &mut ws)
        })();
        steps += 1;
        match advanced {
            Some(next) => {
                u = next;
                t = t1;
                successes += 1;
                if successes >= 5 {
                    step = (step * 2.0).min(cfg.max_step);
                    successes = 0;
                }
                if inf_norm(&u) > cfg.divergence_bound {
                    return finish(u, t, step, PathStatus::Diverged, steps);
                }
            }
            None => {
                successes = 0;
                step *= 0.5;
                if step < cfg.min_step {
                    let status = if inf_norm(&u) > cfg.divergence_bound.sqrt() && t < cfg.endgame_start {
                        PathStatus::Diverged
                    } else {
                        PathStatus::SingularEndpoint
                    };
                    return finish(u, t, step, status, steps);
                }
            }
        }
    }

    let target = AtTime { homotopy: h, t: 0.0 };
    let refined = newton_refine(&target, &u, cfg.endpoint_tol, 8);
    let status = match refined.status {
        NewtonStatus::Converged => PathStatus::Converged,
        NewtonStatus::Singular | NewtonStatus::MaxIterations => PathStatus::SingularEndpoint,
    };
    let u = if refined.residual.is_finite() { refined.u } else { u };
    finish(u, 0.0, step, status, steps)
}

/// Tracks every start point, one path per rayon task. Each path's arithmetic
/// is independent of scheduling, so results are reproducible.
pub fn track_all(h: &impl Homotopy, starts: &[Vec<C64>], cfg: &TrackerConfig) -> Vec<PathPoint> {
    starts.par_iter().map(|s| track_path(h, s, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    MaxIterations,
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub u: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
    pub status: NewtonStatus,
}

/// Jacobians with condition estimate above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Newton's method on a square system until `||F(u)||_inf <= tol`.
pub fn newton_refine(sys: &impl SquareSystem, u0: &[C64], tol: f64, max_iter: usize) -> NewtonResult {
    let m = sys.size();
    let mut u = u0.to_vec();
    let mut f = vec![C64::new(0.0, 0.0); m];
    let mut jac = DMatrix::zeros(m, m);
    sys.evaluate(&u, &mut f);
    let mut residual = inf_norm(&f);
    let mut iterations = 0;
    let mut status = NewtonStatus::MaxIterations;
    while iterations < max_iter {
        if residual <= tol {
            status = NewtonStatus::Converged;
            break;
        }
        sys.jacobian(&u, &mut jac);
        let mut delta: Vec<C64> = f.iter().map(|z| -z).collect();
        if !lu_solve(&jac, &mut delta) {
            status = NewtonStatus::Singular;
            break;
        }
        let trial: Vec<C64> = u.iter().zip(&delta).map(|(a, b)| a + b).collect();
        sys.evaluate(&trial, &mut f);
        let r = inf_norm(&f);
        iterations += 1;
        if !r.is_finite() {
            status = NewtonStatus::Singular;
            break;
        }
        u = trial;
        residual = r;
    }
    if status == NewtonStatus::MaxIterations && residual <= tol {
        status = NewtonStatus::Converged;
    }
    if status == NewtonStatus::Converged {
        sys.jacobian(&u, &mut jac);
        if condition_number(&jac) > SINGULAR_CONDITION {
            status = NewtonStatus::Singular;
        }
    }
    NewtonResult {
        u,
        residual,
        iterations,
        status,
    }
}

/// Solves `target` by tracking the total-degree homotopy from its start
/// system. Returns one terminal [`PathPoint`] per start root.
pub fn solve_total_degree(
    target: &impl GradedSystem,
    seed: u64,
    cfg: &TrackerConfig,
) -> Result<Vec<PathPoint>, HomotopyError> {
    let (start, sols) = total_degree_start(target, seed)?;
    let h = StraightLine {
        start: &start,
        target,
    };
    Ok(track_all(&h, &sols, cfg))
}
