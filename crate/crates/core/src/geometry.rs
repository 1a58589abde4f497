//! Boxes, balls, box splitting and the covered-region store.
//!
//! All regions are closed: a ball touching a box face intersects it, and a
//! box whose farthest corner lies exactly on the sphere is contained.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box bounds have lengths {lo} and {hi}")]
    LengthMismatch { lo: usize, hi: usize },
    #[error("box is empty or not finite along axis {0}")]
    Degenerate(usize),
    #[error("box must have at least one axis")]
    ZeroDimensional,
}

/// Axis-aligned closed box `[lo_1, hi_1] x ... x [lo_N, hi_N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::LengthMismatch { lo: lo.len(), hi: hi.len() });
        }
        if lo.is_empty() {
            return Err(GeometryError::ZeroDimensional);
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(GeometryError::Degenerate(i));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn max_side(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).fold(0.0, f64::max)
    }

    /// Longest axis, lowest index on ties.
    pub fn longest_axis(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.side(i) > self.side(best) {
                best = i;
            }
        }
        best
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }

    /// Squared distance from `p` to the farthest point of the box (a corner).
    pub fn farthest_sq(&self, p: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| {
                let d = (p[i] - self.lo[i]).abs().max((self.hi[i] - p[i]).abs());
                d * d
            })
            .sum()
    }

    /// Squared distance from `p` to the nearest point of the box.
    pub fn nearest_sq(&self, p: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| {
                let d = p[i] - p[i].clamp(self.lo[i], self.hi[i]);
                d * d
            })
            .sum()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a <= b) {
            Some(BBox { lo, hi })
        } else {
            None
        }
    }

    /// The two halves after cutting `axis` at coordinate `at`.
    pub fn cut(&self, axis: usize, at: f64) -> [BBox; 2] {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = at;
        right.lo[axis] = at;
        [left, right]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallKind {
    /// `B_eps(s)` around an output point.
    Sample,
    /// `B_{d - delta}(y)`, known to miss the variety.
    Exclusion,
}

/// Closed ball. An infinite radius covers all of space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    #[serde(with = "radius_serde")]
    pub radius: f64,
    pub kind: BallKind,
}

mod radius_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(r)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64, kind: BallKind) -> Self {
        assert!(radius >= 0.0, "ball radius must be non-negative");
        Self { center, radius, kind }
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        if self.radius.is_infinite() {
            return true;
        }
        let d2: f64 = p.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 <= self.radius * self.radius
    }

    pub fn contains_box(&self, b: &BBox) -> bool {
        self.radius.is_infinite() || b.farthest_sq(&self.center) <= self.radius * self.radius
    }

    pub fn intersects_box(&self, b: &BBox) -> bool {
        self.radius.is_infinite() || b.nearest_sq(&self.center) <= self.radius * self.radius
    }

    /// Largest axis-aligned cube inside the ball, clipped to `within`.
    pub fn inscribed_box(&self, within: &BBox) -> Option<BBox> {
        if self.radius.is_infinite() {
            return Some(within.clone());
        }
        let h = self.radius / (self.center.len() as f64).sqrt();
        let cube = BBox {
            lo: self.center.iter().map(|c| c - h).collect(),
            hi: self.center.iter().map(|c| c + h).collect(),
        };
        cube.intersection(within)
    }
}

/// Bisects the longest side (lowest axis on ties).
pub fn split_box(b: &BBox) -> Vec<BBox> {
    let axis = b.longest_axis();
    let mid = 0.5 * (b.lo[axis] + b.hi[axis]);
    b.cut(axis, mid).into()
}

/// Number of equal subintervals per axis that define candidate cuts.
pub const DYNAMIC_GRID: usize = 8;

/// A single cut chosen so that one child captures as much as possible of a
/// stored ball's inscribed cube, with the smallest such child preferred.
///
/// Only axes at least half as long as the longest side are cut, which keeps
/// the max side shrinking geometrically along every branch.
pub fn split_box_dynamic(b: &BBox, regions: &CoveredRegions) -> Vec<BBox> {
    match best_dynamic_cut(b, regions) {
        Some((axis, at)) => b.cut(axis, at).into(),
        None => split_box(b),
    }
}

/// Returns `(axis, coordinate)` of the chosen cut, `None` for the fallback.
pub fn best_dynamic_cut(b: &BBox, regions: &CoveredRegions) -> Option<(usize, f64)> {
    let inscribed: Vec<BBox> = regions
        .intersecting(b)
        .into_iter()
        .filter_map(|i| regions.get(i).inscribed_box(b))
        .collect();
    if inscribed.is_empty() {
        return None;
    }
    let max_side = b.max_side();
    let mut best: Option<(f64, f64, usize, f64)> = None;
    for axis in 0..b.dim() {
        let side = b.side(axis);
        if side < 0.5 * max_side || side == 0.0 {
            continue;
        }
        for k in 1..DYNAMIC_GRID {
            let at = b.lo[axis] + side * k as f64 / DYNAMIC_GRID as f64;
            for child in b.cut(axis, at) {
                let vol = child.volume();
                for ib in &inscribed {
                    let m = child.intersection(ib).map_or(0.0, |c| c.volume());
                    if m <= 0.0 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bm, bv, _, _)) => {
                            let tol = 1e-12 * bm.max(m);
                            m > bm + tol || (m >= bm - tol && vol < bv * (1.0 - 1e-12))
                        }
                    };
                    if better {
                        best = Some((m, vol, axis, at));
                    }
                }
            }
        }
    }
    best.map(|(_, _, axis, at)| (axis, at))
}

/// Some stored ball containing `b`, if one exists.
pub fn is_contained<'a>(b: &BBox, regions: &'a CoveredRegions) -> Option<&'a Ball> {
    regions.find_containing(b).map(|i| regions.get(i))
}

pub fn intersects_any(b: &BBox, regions: &CoveredRegions) -> bool {
    regions.intersects_any(b)
}

/// Mixed-radix cell grid at one resolution.
#[derive(Debug, Clone)]
struct Level {
    cell: f64,
    counts: Vec<i64>,
    cells: HashMap<u64, Vec<u32>>,
    members: Vec<u32>,
}

impl Level {
    fn index_range(&self, origin: &[f64], lo: &[f64], hi: &[f64]) -> Vec<(i64, i64)> {
        (0..origin.len())
            .map(|i| {
                let n = self.counts[i];
                let a = ((lo[i] - origin[i]) / self.cell).floor();
                let b = ((hi[i] - origin[i]) / self.cell).floor();
                let clamp = |v: f64| (v.max(0.0).min((n - 1) as f64)) as i64;
                (clamp(a), clamp(b))
            })
            .collect()
    }

    fn range_len(range: &[(i64, i64)]) -> u128 {
        range.iter().map(|(a, b)| (b - a + 1) as u128).product()
    }

    fn for_each_cell(&self, range: &[(i64, i64)], mut f: impl FnMut(u64)) {
        let mut idx: Vec<i64> = range.iter().map(|r| r.0).collect();
        loop {
            let mut key = 0u64;
            for (i, v) in idx.iter().enumerate().rev() {
                key = key * self.counts[i] as u64 + *v as u64;
            }
            f(key);
            let mut axis = 0;
            loop {
                if axis == idx.len() {
                    return;
                }
                if idx[axis] < range[axis].1 {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = range[axis].0;
                axis += 1;
            }
        }
    }
}

const MAX_BASE_CELLS: f64 = (1u64 << 22) as f64;

/// Ball store with a hierarchy of uniform grids over a reference box.
///
/// A ball of radius `r` is filed in the coarsest-needed level whose cell
/// size is at least `r`, so it touches at most `4^N` cells. Queries clamp
/// coordinates to the reference box the same way insertions do, which keeps
/// results identical to a linear scan for balls and boxes anywhere.
#[derive(Debug, Clone)]
pub struct CoveredRegions {
    origin: Vec<f64>,
    levels: Vec<Level>,
    unbounded: Vec<u32>,
    balls: Vec<Ball>,
}

impl CoveredRegions {
    pub fn new(region: &BBox, cell: f64) -> Self {
        let n = region.dim();
        let widths: Vec<f64> = (0..n).map(|i| region.side(i)).collect();
        let mut base = if cell > 0.0 && cell.is_finite() { cell } else { region.max_side().max(1.0) };
        let total = |h: f64| widths.iter().map(|w| (w / h).ceil().max(1.0)).product::<f64>();
        while total(base) > MAX_BASE_CELLS {
            base *= 2.0;
        }
        let mut levels = Vec::new();
        let mut h = base;
        loop {
            let counts: Vec<i64> = widths.iter().map(|w| (w / h).ceil().max(1.0) as i64).collect();
            let top = counts.iter().all(|&c| c == 1);
            levels.push(Level {
                cell: h,
                counts,
                cells: HashMap::new(),
                members: Vec::new(),
            });
            if top {
                break;
            }
            h *= 2.0;
        }
        Self {
            origin: region.lo.clone(),
            levels,
            unbounded: Vec::new(),
            balls: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn get(&self, i: usize) -> &Ball {
        &self.balls[i]
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn insert(&mut self, ball: Ball) -> usize {
        let id = self.balls.len();
        let r = ball.radius;
        if r.is_infinite() {
            self.unbounded.push(id as u32);
        } else {
            let k = self.levels.iter().position(|l| l.cell >= r).unwrap_or(self.levels.len() - 1);
            let lo: Vec<f64> = ball.center.iter().map(|c| c - r).collect();
            let hi: Vec<f64> = ball.center.iter().map(|c| c + r).collect();
            let level = &mut self.levels[k];
            let range = level.index_range(&self.origin, &lo, &hi);
            let mut keys = Vec::new();
            level.for_each_cell(&range, |key| keys.push(key));
            for key in keys {
                level.cells.entry(key).or_default().push(id as u32);
            }
            level.members.push(id as u32);
        }
        self.balls.push(ball);
        id
    }

    /// Calls `visit` on candidate ball ids for `b` until it returns `true`.
    /// Candidates may repeat; every ball that meets `b` is visited.
    fn scan(&self, b: &BBox, mut visit: impl FnMut(usize) -> bool) -> bool {
        for &id in &self.unbounded {
            if visit(id as usize) {
                return true;
            }
        }
        for level in &self.levels {
            if level.members.is_empty() {
                continue;
            }
            let range = level.index_range(&self.origin, &b.lo, &b.hi);
            if Level::range_len(&range) > level.members.len() as u128 {
                for &id in &level.members {
                    if visit(id as usize) {
                        return true;
                    }
                }
                continue;
            }
            let mut found = false;
            level.for_each_cell(&range, |key| {
                if found {
                    return;
                }
                if let Some(ids) = level.cells.get(&key) {
                    for &id in ids {
                        if visit(id as usize) {
                            found = true;
                            return;
                        }
                    }
                }
            });
            if found {
                return true;
            }
        }
        false
    }

    pub fn find_containing(&self, b: &BBox) -> Option<usize> {
        let mut hit = None;
        self.scan(b, |id| {
            if self.balls[id].contains_box(b) {
                hit = Some(id);
                true
            } else {
                false
            }
        });
        hit
    }

    pub fn intersects_any(&self, b: &BBox) -> bool {
        self.scan(b, |id| self.balls[id].intersects_box(b))
    }

    /// Ids of all balls meeting `b`, ascending.
    pub fn intersecting(&self, b: &BBox) -> Vec<usize> {
        let mut out = Vec::new();
        self.scan(b, |id| {
            if self.balls[id].intersects_box(b) {
                out.push(id);
            }
            false
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Some ball containing the point `p`.
    pub fn find_containing_point(&self, p: &[f64]) -> Option<usize> {
        let b = BBox {
            lo: p.to_vec(),
            hi: p.to_vec(),
        };
        self.find_containing(&b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub bbox: BBox,
    pub depth: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub done: bool,
}

/// The search tree rooted at the sampling region; children are created on
/// demand by [`BoxTree::expand`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxTree {
    nodes: Vec<TreeNode>,
}

impl BoxTree {
    pub fn new(root: BBox) -> Self {
        Self {
            nodes: vec![TreeNode {
                bbox: root,
                depth: 0,
                parent: None,
                children: Vec::new(),
                done: false,
            }],
        }
    }

    pub const ROOT: usize = 0;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn mark_done(&mut self, i: usize) {
        self.nodes[i].done = true;
    }

    /// Attaches `children` to node `i` and returns their ids.
    pub fn expand(&mut self, i: usize, children: Vec<BBox>) -> Vec<usize> {
        assert!(self.nodes[i].children.is_empty(), "node {i} already expanded");
        let depth = self.nodes[i].depth + 1;
        let ids: Vec<usize> = (self.nodes.len()..self.nodes.len() + children.len()).collect();
        for bbox in children {
            self.nodes.push(TreeNode {
                bbox,
                depth,
                parent: Some(i),
                children: Vec::new(),
                done: false,
            });
        }
        self.nodes[i].children = ids.clone();
        ids
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty())
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bx(lo: &[f64], hi: &[f64]) -> BBox {
        BBox::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(BBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert_eq!(BBox::new(vec![1.0], vec![0.0]), Err(GeometryError::Degenerate(0)));
        assert!(BBox::new(vec![], vec![]).is_err());
        assert!(BBox::new(vec![0.0], vec![f64::NAN]).is_err());
        let b = bx(&[0.0, -1.0], &[2.0, 1.0]);
        assert_eq!(b.center(), vec![1.0, 0.0]);
        assert_eq!(b.max_side(), 2.0);
        assert_eq!(b.volume(), 4.0);
    }

    #[test]
    fn split_examples() {
        let kids = split_box(&bx(&[0.0, 0.0], &[2.0, 1.0]));
        assert_eq!(kids, vec![bx(&[0.0, 0.0], &[1.0, 1.0]), bx(&[1.0, 0.0], &[2.0, 1.0])]);
        let kids = split_box(&bx(&[0.0, 0.0], &[1.0, 1.0]));
        assert_eq!(kids, vec![bx(&[0.0, 0.0], &[0.5, 1.0]), bx(&[0.5, 0.0], &[1.0, 1.0])]);
    }

    #[test]
    fn split_reaches_any_side_bound() {
        let gamma: f64 = 0.1;
        for n in [2, 3] {
            let levels = n * (1.0 / gamma).log2().ceil() as usize;
            let mut frontier = vec![BBox::cube(n, 0.0, 1.0).unwrap()];
            for _ in 0..levels {
                frontier = frontier.iter().flat_map(split_box).collect();
            }
            assert!(frontier.iter().all(|b| b.max_side() <= gamma));
            let vol: f64 = frontier.iter().map(BBox::volume).sum();
            assert!((vol - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn containment_examples() {
        let b = bx(&[0.0, 0.0], &[1.0, 1.0]);
        let inside = Ball::new(vec![0.5, 0.5], 0.8, BallKind::Sample);
        let outside = Ball::new(vec![0.5, 0.5], 0.7, BallKind::Sample);
        assert!(inside.contains_box(&b));
        assert!(!outside.contains_box(&b));
        let mut regions = CoveredRegions::new(&bx(&[-2.0, -2.0], &[2.0, 2.0]), 0.2);
        assert!(is_contained(&b, &regions).is_none());
        regions.insert(outside);
        assert!(is_contained(&b, &regions).is_none());
        regions.insert(inside.clone());
        assert_eq!(is_contained(&b, &regions), Some(&inside));
    }

    #[test]
    fn intersection_examples() {
        let b = bx(&[0.0, 0.0], &[1.0, 1.0]);
        let tangent = Ball::new(vec![1.5, 0.5], 0.5, BallKind::Exclusion);
        let apart = Ball::new(vec![1.5 + 1e-3, 0.5], 0.5, BallKind::Exclusion);
        assert!(tangent.intersects_box(&b));
        assert!(!apart.intersects_box(&b));
        let mut regions = CoveredRegions::new(&b, 0.1);
        regions.insert(apart);
        assert!(!intersects_any(&b, &regions));
        regions.insert(tangent);
        assert!(intersects_any(&b, &regions));
        assert_eq!(regions.intersecting(&b), vec![1]);
    }

    #[test]
    fn unbounded_ball_covers_everything() {
        let r = bx(&[-1.0, -1.0], &[1.0, 1.0]);
        let mut regions = CoveredRegions::new(&r, 0.25);
        regions.insert(Ball::new(vec![0.0, 0.0], f64::INFINITY, BallKind::Exclusion));
        assert!(is_contained(&bx(&[5.0, 5.0], &[9.0, 9.0]), &regions).is_some());
        assert!(regions.find_containing_point(&[100.0, -3.0]).is_some());
    }

    fn random_box(rng: &mut ChaCha8Rng, n: usize) -> BBox {
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|a| a + rng.random_range(0.0..0.8)).collect();
        BBox::new(lo, hi).unwrap()
    }

    fn random_ball(rng: &mut ChaCha8Rng, n: usize) -> Ball {
        let center: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
        let radius = if rng.random_bool(0.1) { rng.random_range(0.5..3.0) } else { rng.random_range(0.0..0.6) };
        Ball::new(center, radius, BallKind::Sample)
    }

    fn brute_contains(b: &BBox, ball: &Ball) -> bool {
        let n = b.dim();
        (0..1usize << n).all(|mask| {
            let corner: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { b.hi()[i] } else { b.lo()[i] }).collect();
            ball.contains_point(&corner)
        })
    }

    fn brute_intersects(b: &BBox, ball: &Ball) -> bool {
        let p: Vec<f64> = ball.center.iter().enumerate().map(|(i, c)| c.clamp(b.lo()[i], b.hi()[i])).collect();
        ball.contains_point(&p)
    }

    #[test]
    fn pairwise_predicates_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for k in 0..10_000 {
            let n = 2 + k % 3;
            let b = random_box(&mut rng, n);
            let ball = random_ball(&mut rng, n);
            assert_eq!(ball.contains_box(&b), brute_contains(&b, &ball));
            assert_eq!(ball.intersects_box(&b), brute_intersects(&b, &ball));
        }
    }

    #[test]
    fn index_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3, 4] {
            let region = BBox::cube(n, -2.0, 2.0).unwrap();
            let mut regions = CoveredRegions::new(&region, 0.2);
            let mut all = Vec::new();
            for _ in 0..400 {
                let ball = random_ball(&mut rng, n);
                all.push(ball.clone());
                regions.insert(ball);
            }
            for _ in 0..3_000 {
                let b = random_box(&mut rng, n);
                let contain: Vec<usize> = (0..all.len()).filter(|&i| brute_contains(&b, &all[i])).collect();
                let meet: Vec<usize> = (0..all.len()).filter(|&i| brute_intersects(&b, &all[i])).collect();
                match regions.find_containing(&b) {
                    Some(i) => assert!(contain.contains(&i)),
                    None => assert!(contain.is_empty()),
                }
                assert_eq!(regions.intersects_any(&b), !meet.is_empty());
                assert_eq!(regions.intersecting(&b), meet);
            }
        }
    }

    #[test]
    fn cell_count_is_capped() {
        let region = BBox::cube(6, -1.0, 1.0).unwrap();
        let regions = CoveredRegions::new(&region, 1e-3);
        let base: i64 = regions.levels[0].counts.iter().product();
        assert!(base as f64 <= MAX_BASE_CELLS);
    }

    #[test]
    fn dynamic_split_falls_back_without_balls() {
        let b = bx(&[0.0, 0.0], &[4.0, 2.0]);
        let regions = CoveredRegions::new(&b, 0.5);
        assert_eq!(split_box_dynamic(&b, &regions), split_box(&b));
    }

    /// Score of one cut: best (captured measure, child volume) over both
    /// children and every ball meeting `b`, computed from first principles.
    fn brute_cut_score(b: &BBox, balls: &[Ball], axis: usize, at: f64) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for child in b.cut(axis, at) {
            for ball in balls.iter().filter(|ball| ball.intersects_box(b)) {
                let h = ball.radius / (b.dim() as f64).sqrt();
                let m: f64 = (0..b.dim())
                    .map(|i| {
                        let lo = child.lo()[i].max(ball.center[i] - h);
                        let hi = child.hi()[i].min(ball.center[i] + h);
                        (hi - lo).max(0.0)
                    })
                    .product();
                let v = child.volume();
                if m > best.0 + 1e-12 || ((m - best.0).abs() <= 1e-12 && m > 0.0 && v < best.1) {
                    best = (m, v);
                }
            }
        }
        best
    }

    fn brute_best(b: &BBox, balls: &[Ball]) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for axis in 0..b.dim() {
            if b.side(axis) < 0.5 * b.max_side() {
                continue;
            }
            for k in 1..8 {
                let (m, v) = brute_cut_score(b, balls, axis, b.lo()[axis] + b.side(axis) * k as f64 / 8.0);
                if m > best.0 + 1e-12 || ((m - best.0).abs() <= 1e-12 && v < best.1) {
                    best = (m, v);
                }
            }
        }
        best
    }

    #[test]
    fn dynamic_split_examples() {
        let b = bx(&[0.0, 0.0], &[4.0, 4.0]);
        let mut regions = CoveredRegions::new(&b, 0.5);
        regions.insert(Ball::new(vec![1.0, 1.0], 1.0, BallKind::Sample));
        let kids = split_box_dynamic(&b, &regions);
        assert_eq!(kids[0], bx(&[0.0, 0.0], &[2.0, 4.0]));

        let mut regions = CoveredRegions::new(&b, 0.5);
        regions.insert(Ball::new(vec![0.5, 2.0], 0.5, BallKind::Sample));
        let kids = split_box_dynamic(&b, &regions);
        assert_eq!(kids[0], bx(&[0.0, 0.0], &[1.0, 4.0]));
        assert_ne!(kids, split_box(&b));

        let mut regions = CoveredRegions::new(&b, 0.5);
        regions.insert(Ball::new(vec![2.0, 2.0], 10.0, BallKind::Exclusion));
        let kids = split_box_dynamic(&b, &regions);
        assert_eq!(kids.len(), 2);
        assert!((kids[0].volume() + kids[1].volume() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn dynamic_split_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = 2 + rng.random_range(0..2);
            let b = random_box(&mut rng, n);
            let mut regions = CoveredRegions::new(&BBox::cube(n, -3.0, 3.0).unwrap(), 0.3);
            let mut balls = Vec::new();
            for _ in 0..rng.random_range(1..6) {
                let ball = random_ball(&mut rng, n);
                balls.push(ball.clone());
                regions.insert(ball);
            }
            let (best_m, best_v) = brute_best(&b, &balls);
            let Some((axis, at)) = best_dynamic_cut(&b, &regions) else {
                assert_eq!(best_m, 0.0);
                continue;
            };
            let score = brute_cut_score(&b, &balls, axis, at);
            assert!((score.0 - best_m).abs() <= 1e-9, "{score:?} vs {best_m}");
            assert!(score.1 <= best_v * (1.0 + 1e-9));
        }
    }

    /// Random subtree where every node has either no children or both;
    /// the leaves must tile the root.
    fn random_tree(rng: &mut ChaCha8Rng, root: BBox, dynamic: bool) -> BoxTree {
        let mut regions = CoveredRegions::new(&root, 0.3);
        for _ in 0..5 {
            let c: Vec<f64> = (0..root.dim()).map(|_| rng.random_range(0.0..1.0)).collect();
            regions.insert(Ball::new(c, rng.random_range(0.05..0.4), BallKind::Sample));
        }
        let mut tree = BoxTree::new(root);
        let mut stack = vec![BoxTree::ROOT];
        while let Some(i) = stack.pop() {
            let node = tree.node(i);
            if node.depth < 8 && rng.random_bool(0.7) {
                let kids = if dynamic { split_box_dynamic(&node.bbox, &regions) } else { split_box(&node.bbox) };
                stack.extend(tree.expand(i, kids));
            }
        }
        tree
    }

    #[test]
    fn leaves_tile_the_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dynamic in [false, true] {
            let root = BBox::cube(3, 0.0, 1.0).unwrap();
            let tree = random_tree(&mut rng, root.clone(), dynamic);
            let leaves: Vec<&BBox> = tree.leaves().map(|i| &tree.node(i).bbox).collect();
            let vol: f64 = leaves.iter().map(|b| b.volume()).sum();
            assert!((vol - root.volume()).abs() < 1e-12);
            for _ in 0..100_000 {
                let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                assert!(leaves.iter().any(|b| b.contains_point(&p)));
            }
        }
    }

    #[test]
    fn dynamic_split_terminates() {
        let root = BBox::cube(3, 0.0, 1.0).unwrap();
        let mut regions = CoveredRegions::new(&root, 0.2);
        regions.insert(Ball::new(vec![0.01, 0.02, 0.03], 0.05, BallKind::Sample));
        let mut b = root;
        for _ in 0..60 {
            b = split_box_dynamic(&b, &regions).swap_remove(0);
        }
        assert!(b.max_side() < 1e-3);
    }

    proptest! {
        #[test]
        fn split_partitions_parent(
            lo in prop::collection::vec(-5.0f64..5.0, 1..5),
            widths in prop::collection::vec(0.01f64..3.0, 4),
        ) {
            let hi: Vec<f64> = lo.iter().zip(&widths).map(|(a, w)| a + w).collect();
            let b = BBox::new(lo, hi).unwrap();
            let kids = split_box(&b);
            prop_assert_eq!(kids.len(), 2);
            let axis = b.longest_axis();
            prop_assert!((kids[0].volume() + kids[1].volume() - b.volume()).abs() <= 1e-9 * b.volume());
            for k in &kids {
                prop_assert!(k.max_side() <= b.max_side());
                prop_assert!((k.side(axis) - 0.5 * b.side(axis)).abs() <= 1e-12 * b.side(axis).max(1.0));
                prop_assert!(k.lo().iter().zip(b.lo()).all(|(x, y)| x >= y));
                prop_assert!(k.hi().iter().zip(b.hi()).all(|(x, y)| x <= y));
            }
        }

        #[test]
        fn dynamic_split_partitions_parent(
            widths in prop::collection::vec(0.1f64..2.0, 2..4),
            cx in 0.0f64..1.0, cy in 0.0f64..1.0, r in 0.01f64..1.0,
        ) {
            let n = widths.len();
            let b = BBox::new(vec![0.0; n], widths.clone()).unwrap();
            let mut regions = CoveredRegions::new(&b, 0.25);
            let mut c = vec![0.5; n];
            c[0] = cx * widths[0];
            c[1] = cy * widths[1];
            regions.insert(Ball::new(c, r, BallKind::Sample));
            let kids = split_box_dynamic(&b, &regions);
            prop_assert_eq!(kids.len(), 2);
            prop_assert!((kids[0].volume() + kids[1].volume() - b.volume()).abs() <= 1e-9 * b.volume());
            for k in &kids {
                prop_assert!(k.max_side() <= b.max_side());
                prop_assert!(k.volume() > 0.0);
            }
        }
    }
}
