//! Vietoris-Rips persistence over Z/2 and the homology inference corner.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of simplices in a filtration.
pub const DEFAULT_SIMPLEX_CAP: usize = 40_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum TdaError {
    #[error("filtration would contain at least {at_least} simplices (cap {cap})")]
    TooManySimplices { at_least: usize, cap: usize },
    #[error("{vertices} vertices with p_max = {p_max} do not fit the 64-bit simplex encoding")]
    EncodingOverflow { vertices: usize, p_max: usize },
    #[error("invalid corner parameters: {0}")]
    InvalidCorner(String),
    #[error("points have inconsistent dimensions")]
    RaggedCloud,
}

/// Rips filtration truncated at `threshold` with simplices up to dimension
/// `p_max + 1`, in `(value, dim, lex)` order.
#[derive(Debug, Clone)]
pub struct FiltrationComplex {
    p_max: usize,
    threshold: f64,
    bits: u32,
    /// `(value, lex key)` per dimension, each sorted.
    by_dim: Vec<Vec<(f64, u64)>>,
    /// Global order as `(dim, index into by_dim[dim])`.
    order: Vec<(u8, u32)>,
}

fn pack(verts: &[u32], bits: u32, width: usize) -> u64 {
    let mut key = 0u64;
    for k in 0..width {
        key <<= bits;
        if k < verts.len() {
            key |= verts[k] as u64 + 1;
        }
    }
    key
}

fn unpack(key: u64, bits: u32, width: usize) -> Vec<u32> {
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::with_capacity(width);
    for k in (0..width).rev() {
        let v = (key >> (k as u32 * bits)) & mask;
        if v == 0 {
            break;
        }
        out.push(v as u32 - 1);
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Builds the Rips filtration of `points` up to `threshold`.
pub fn rips_filtration(points: &[Vec<f64>], threshold: f64, p_max: usize) -> Result<FiltrationComplex, TdaError> {
    rips_filtration_capped(points, threshold, p_max, DEFAULT_SIMPLEX_CAP)
}

pub fn rips_filtration_capped(
    points: &[Vec<f64>],
    threshold: f64,
    p_max: usize,
    cap: usize,
) -> Result<FiltrationComplex, TdaError> {
    let edges = rips_edges(points, threshold)?;
    flag_filtration(points.len(), &edges, threshold, p_max, cap)
}

/// Rips filtration with the edge graph reduced by [`collapse_edges`] first.
///
/// The complex is smaller than the full Rips complex but has the same
/// persistence diagram. A single pass can leave most edges of a coarse
/// sample in place, so passes repeat until one removes under 1% of them.
pub fn rips_filtration_collapsed(
    points: &[Vec<f64>],
    threshold: f64,
    p_max: usize,
    cap: usize,
) -> Result<FiltrationComplex, TdaError> {
    let edges = rips_edges(points, threshold)?;
    let mut kept = collapse_edges(points.len(), &edges);
    let mut before = edges.len();
    while kept.len() * 100 < before * 99 {
        before = kept.len();
        kept = collapse_edges(points.len(), &kept);
    }
    flag_filtration(points.len(), &kept, threshold, p_max, cap)
}

/// All pairs `(i, j, d)` with `i < j` and `d <= threshold`.
pub fn rips_edges(points: &[Vec<f64>], threshold: f64) -> Result<Vec<(u32, u32, f64)>, TdaError> {
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.len() != first.len()) {
            return Err(TdaError::RaggedCloud);
        }
    }
    let m = points.len();
    let rows: Vec<Vec<(u32, u32, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (i + 1..m)
                .filter_map(|j| {
                    let d = dist(&points[i], &points[j]);
                    (d <= threshold).then_some((i as u32, j as u32, d))
                })
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

/// Flag filtration of a weighted graph on `m` vertices: every clique up to
/// `p_max + 2` vertices, valued by its largest edge.
pub fn flag_filtration(
    m: usize,
    edges: &[(u32, u32, f64)],
    threshold: f64,
    p_max: usize,
    cap: usize,
) -> Result<FiltrationComplex, TdaError> {
    let width = p_max + 2;
    let bits = (usize::BITS - m.leading_zeros()).max(1);
    if bits as usize * width > 64 {
        return Err(TdaError::EncodingOverflow { vertices: m, p_max });
    }
    // Forward neighbours with edge values, sorted by vertex.
    let mut nbrs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
    for &(i, j, d) in edges {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        nbrs[a as usize].push((b, d));
    }
    for list in &mut nbrs {
        list.sort_unstable_by_key(|e| e.0);
    }
    let mut by_dim: Vec<Vec<(f64, u64)>> = vec![Vec::new(); p_max + 2];
    let mut count = 0usize;
    let mut verts: Vec<u32> = Vec::with_capacity(width);

    // Depth-first clique extension; `cands` holds common forward neighbours
    // with their largest distance to the current simplex.
    #[allow(clippy::too_many_arguments)]
    fn extend(
        verts: &mut Vec<u32>,
        value: f64,
        cands: &[(u32, f64)],
        nbrs: &[Vec<(u32, f64)>],
        by_dim: &mut [Vec<(f64, u64)>],
        count: &mut usize,
        cap: usize,
        bits: u32,
        width: usize,
    ) -> Result<(), ()> {
        let dim = verts.len() - 1;
        *count += 1;
        if *count > cap {
            return Err(());
        }
        by_dim[dim].push((value, pack(verts, bits, width)));
        if dim + 1 >= by_dim.len() {
            return Ok(());
        }
        for (k, &(c, dc)) in cands.iter().enumerate() {
            let nc = &nbrs[c as usize];
            let mut next = Vec::new();
            let (mut a, mut b) = (k + 1, 0);
            while a < cands.len() && b < nc.len() {
                match cands[a].0.cmp(&nc[b].0) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        next.push((cands[a].0, cands[a].1.max(nc[b].1)));
                        a += 1;
                        b += 1;
                    }
                }
            }
            verts.push(c);
            extend(verts, value.max(dc), &next, nbrs, by_dim, count, cap, bits, width)?;
            verts.pop();
        }
        Ok(())
    }

    for i in 0..m {
        verts.push(i as u32);
        let res = extend(&mut verts, 0.0, &nbrs[i], &nbrs, &mut by_dim, &mut count, cap, bits, width);
        verts.pop();
        if res.is_err() {
            return Err(TdaError::TooManySimplices { at_least: count, cap });
        }
    }
    for list in &mut by_dim {
        list.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut order: Vec<(u8, u32)> = Vec::with_capacity(count);
    for (d, list) in by_dim.iter().enumerate() {
        order.extend((0..list.len() as u32).map(|i| (d as u8, i)));
    }
    order.sort_unstable_by(|x, y| {
        let a = by_dim[x.0 as usize][x.1 as usize];
        let b = by_dim[y.0 as usize][y.1 as usize];
        a.0.total_cmp(&b.0).then(x.0.cmp(&y.0)).then(a.1.cmp(&b.1))
    });
    Ok(FiltrationComplex {
        p_max,
        threshold,
        bits,
        by_dim,
        order,
    })
}

/// Persistence-preserving edge collapse of a flag filtration.
///
/// Edges are visited from the last to the first. An edge `uv` is dominated
/// at a time when some common neighbour `w` is adjacent to every other
/// common neighbour of `u` and `v`; removing a dominated edge is a homotopy
/// equivalence of flag complexes. Each edge is delayed to the first time at
/// which it stops being dominated, or dropped if that never happens, so every
/// step of the new filtration is homotopy equivalent to the old one by
/// inclusion and the diagram is unchanged. Returns the surviving edges with
/// their (possibly later) values.
pub fn collapse_edges(m: usize, edges: &[(u32, u32, f64)]) -> Vec<(u32, u32, f64)> {
    const ABSENT: u32 = u32::MAX;
    let mut sorted: Vec<(u32, u32, f64)> = edges.iter().map(|&(i, j, d)| (i.min(j), i.max(j), d)).collect();
    sorted.sort_unstable_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    assert!(sorted.len() < ABSENT as usize, "too many edges to collapse");
    // Current time of every pair as an index into `sorted`.
    let mut time = vec![ABSENT; m * m];
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (r, &(i, j, _)) in sorted.iter().enumerate() {
        time[i as usize * m + j as usize] = r as u32;
        time[j as usize * m + i as usize] = r as u32;
        adj[i as usize].push(j);
        adj[j as usize].push(i);
    }
    let at = |time: &[u32], a: u32, b: u32| time[a as usize * m + b as usize];
    let dominates = |time: &[u32], w: u32, members: &[u32], k: u32| members.iter().all(|&y| y == w || at(time, w, y) <= k);
    let mut members: Vec<u32> = Vec::new();
    let mut pending: Vec<(u32, u32)> = Vec::new();
    for r in (0..sorted.len()).rev() {
        let (u, v, _) = sorted[r];
        let t = r as u32;
        members.clear();
        pending.clear();
        for &x in &adj[u as usize] {
            if x == v {
                continue;
            }
            let (a, b) = (at(&time, u, x), at(&time, v, x));
            if a == ABSENT || b == ABSENT {
                continue;
            }
            let arrival = a.max(b);
            if arrival <= t {
                members.push(x);
            } else {
                pending.push((arrival, x));
            }
        }
        let Some(mut w) = members.iter().copied().find(|&w| dominates(&time, w, &members, t)) else {
            continue;
        };
        pending.sort_unstable();
        let mut new_time = ABSENT;
        for &(k, x) in &pending {
            members.push(x);
            if at(&time, w, x) <= k {
                continue;
            }
            match members.iter().copied().find(|&c| dominates(&time, c, &members, k)) {
                Some(c) => w = c,
                None => {
                    new_time = k;
                    break;
                }
            }
        }
        time[u as usize * m + v as usize] = new_time;
        time[v as usize * m + u as usize] = new_time;
    }
    let mut out: Vec<(u32, u32, f64)> = sorted
        .iter()
        .filter_map(|&(i, j, _)| {
            let k = at(&time, i, j);
            (k != ABSENT).then(|| (i, j, sorted[k as usize].2))
        })
        .collect();
    out.sort_unstable_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    out
}

impl FiltrationComplex {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn count(&self, dim: usize) -> usize {
        self.by_dim.get(dim).map_or(0, Vec::len)
    }

    fn width(&self) -> usize {
        self.p_max + 2
    }

    /// The `i`-th simplex in filtration order: `(vertices, value)`.
    pub fn simplex(&self, i: usize) -> (Vec<u32>, f64) {
        let (d, k) = self.order[i];
        let (v, key) = self.by_dim[d as usize][k as usize];
        (unpack(key, self.bits, self.width()), v)
    }

    pub fn dim_of(&self, i: usize) -> usize {
        self.order[i].0 as usize
    }

    pub fn value_of(&self, i: usize) -> f64 {
        let (d, k) = self.order[i];
        self.by_dim[d as usize][k as usize].0
    }

    pub fn simplices(&self) -> impl Iterator<Item = (Vec<u32>, f64)> + '_ {
        (0..self.len()).map(|i| self.simplex(i))
    }

    /// Global filtration index of every simplex, keyed by lex key, for the
    /// dimensions that occur as faces.
    fn face_index(&self) -> Vec<HashMap<u64, u32>> {
        let mut maps: Vec<HashMap<u64, u32>> =
            (0..self.by_dim.len().saturating_sub(1)).map(|d| HashMap::with_capacity(self.count(d))).collect();
        for (g, &(d, k)) in self.order.iter().enumerate() {
            if (d as usize) < maps.len() {
                maps[d as usize].insert(self.by_dim[d as usize][k as usize].1, g as u32);
            }
        }
        maps
    }

    fn boundary(&self, i: usize, faces: &[HashMap<u64, u32>]) -> Vec<u32> {
        let d = self.dim_of(i);
        if d == 0 {
            return Vec::new();
        }
        let (verts, _) = self.simplex(i);
        let mut col: Vec<u32> = (0..verts.len())
            .map(|skip| {
                let face: Vec<u32> = verts.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                faces[d - 1][&pack(&face, self.bits, self.width())]
            })
            .collect();
        col.sort_unstable();
        col
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub birth: f64,
    /// `f64::INFINITY` for classes alive at the threshold.
    pub death: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub points: Vec<DiagramPoint>,
    pub n: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Seed of the run that produced the source cloud.
    pub seed: Option<u64>,
    pub threshold: f64,
    pub p_max: usize,
    /// Pairs with birth equal to death, dropped from `points`.
    pub zero_length: usize,
}

impl PersistenceDiagram {
    /// Number of classes of dimension `dim` alive at filtration value `t`.
    pub fn betti_at(&self, dim: usize, t: f64) -> usize {
        self.points.iter().filter(|p| p.dim == dim && p.birth <= t && t < p.death).count()
    }

    pub fn in_dim(&self, dim: usize) -> impl Iterator<Item = &DiagramPoint> {
        self.points.iter().filter(move |p| p.dim == dim)
    }
}

fn xor_into(acc: &mut Vec<u32>, other: &[u32], scratch: &mut Vec<u32>) {
    scratch.clear();
    let (mut a, mut b) = (0, 0);
    while a < acc.len() && b < other.len() {
        match acc[a].cmp(&other[b]) {
            std::cmp::Ordering::Less => {
                scratch.push(acc[a]);
                a += 1;
            }
            std::cmp::Ordering::Greater => {
                scratch.push(other[b]);
                b += 1;
            }
            std::cmp::Ordering::Equal => {
                a += 1;
                b += 1;
            }
        }
    }
    scratch.extend_from_slice(&acc[a..]);
    scratch.extend_from_slice(&other[b..]);
    std::mem::swap(acc, scratch);
}

/// Persistence pairs `(birth index, death index)` and unpaired indices.
struct Reduction {
    pairs: Vec<(u32, u32)>,
    essential: Vec<u32>,
}

fn reduce(fc: &FiltrationComplex, twist: bool) -> Reduction {
    let n = fc.len();
    let faces = fc.face_index();
    let mut reduced: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut paired = vec![false; n];
    let mut pairs = Vec::new();
    let mut scratch = Vec::new();
    let mut reduce_column = |j: usize, reduced: &mut HashMap<u32, Vec<u32>>, paired: &mut Vec<bool>| {
        let mut col = fc.boundary(j, &faces);
        while let Some(&low) = col.last() {
            match reduced.get(&low) {
                Some(other) => xor_into(&mut col, other, &mut scratch),
                None => break,
            }
        }
        if let Some(&low) = col.last() {
            paired[low as usize] = true;
            paired[j] = true;
            pairs.push((low, j as u32));
            reduced.insert(low, col);
        }
    };
    if twist {
        let mut by_dim: Vec<Vec<usize>> = vec![Vec::new(); fc.p_max + 2];
        for j in 0..n {
            by_dim[fc.dim_of(j)].push(j);
        }
        for d in (1..by_dim.len()).rev() {
            for &j in &by_dim[d] {
                // A column whose simplex is already a pivot reduces to zero.
                if !paired[j] {
                    reduce_column(j, &mut reduced, &mut paired);
                }
            }
        }
    } else {
        for j in 0..n {
            if fc.dim_of(j) > 0 {
                reduce_column(j, &mut reduced, &mut paired);
            }
        }
    }
    let essential = (0..n as u32).filter(|&i| !paired[i as usize]).collect();
    pairs.sort_unstable();
    Reduction { pairs, essential }
}

fn assemble(fc: &FiltrationComplex, r: Reduction) -> PersistenceDiagram {
    let mut points = Vec::new();
    let mut zero_length = 0;
    for (b, d) in r.pairs {
        let (vb, vd) = (fc.value_of(b as usize), fc.value_of(d as usize));
        let dim = fc.dim_of(b as usize);
        if dim > fc.p_max {
            continue;
        }
        if vb == vd {
            zero_length += 1;
        } else {
            points.push(DiagramPoint { birth: vb, death: vd, dim });
        }
    }
    for i in r.essential {
        let dim = fc.dim_of(i as usize);
        if dim <= fc.p_max {
            points.push(DiagramPoint {
                birth: fc.value_of(i as usize),
                death: f64::INFINITY,
                dim,
            });
        }
    }
    points.sort_by(|a, b| a.dim.cmp(&b.dim).then(a.birth.total_cmp(&b.birth)).then(a.death.total_cmp(&b.death)));
    PersistenceDiagram {
        points,
        n: None,
        epsilon: None,
        delta: None,
        seed: None,
        threshold: fc.threshold,
        p_max: fc.p_max,
        zero_length,
    }
}

/// Column reduction with the twist (clearing) optimization.
pub fn compute_persistence(fc: &FiltrationComplex) -> PersistenceDiagram {
    assemble(fc, reduce(fc, true))
}

/// Standard reduction in filtration order without clearing.
pub fn compute_persistence_plain(fc: &FiltrationComplex) -> PersistenceDiagram {
    assemble(fc, reduce(fc, false))
}

/// Corner `(2 eps sqrt((n+1)/(2n)), 4 eps + 2 delta)` of the inference region.
pub fn inference_corner(n: usize, epsilon: f64, delta: f64) -> Result<(f64, f64), TdaError> {
    if n == 0 {
        return Err(TdaError::InvalidCorner("ambient dimension must be at least 1".into()));
    }
    if !(delta >= 0.0 && delta <= epsilon && epsilon.is_finite()) {
        return Err(TdaError::InvalidCorner(format!("need 0 <= delta <= epsilon, got delta = {delta}, epsilon = {epsilon}")));
    }
    let nf = n as f64;
    Ok((2.0 * epsilon * ((nf + 1.0) / (2.0 * nf)).sqrt(), 4.0 * epsilon + 2.0 * delta))
}

pub const HFS_ASSUMPTION: &str =
    "assumes the cloud is a (delta, epsilon)-sample of a variety whose homological feature size exceeds 2(epsilon + delta); this is not checked";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceVerdict {
    pub corner: (f64, f64),
    /// Lower bounds on Betti numbers, indexed by dimension.
    pub counts: Vec<usize>,
    /// The diagram threshold is below the corner's death coordinate.
    pub censored: bool,
    pub warnings: Vec<String>,
    pub assumption: String,
}

/// Counts diagram points with birth `<= a` and death `> b`.
///
/// Classes alive at the threshold count as dying after `b` only when the
/// threshold reaches `b`.
pub fn infer_betti(diag: &PersistenceDiagram, n: usize, epsilon: f64, delta: f64) -> Result<InferenceVerdict, TdaError> {
    let (a, b) = inference_corner(n, epsilon, delta)?;
    let censored = diag.threshold < b;
    let mut counts = vec![0; diag.p_max + 1];
    for p in &diag.points {
        let dies_late = if p.death.is_infinite() { !censored } else { p.death > b };
        if p.birth <= a && dies_late {
            if p.dim >= counts.len() {
                counts.resize(p.dim + 1, 0);
            }
            counts[p.dim] += 1;
        }
    }
    let mut warnings = Vec::new();
    if censored {
        warnings.push(format!(
            "threshold-censored: diagram threshold {} is below {b}; classes alive at the threshold were not counted",
            diag.threshold
        ));
    }
    Ok(InferenceVerdict {
        corner: (a, b),
        counts,
        censored,
        warnings,
        assumption: HFS_ASSUMPTION.to_string(),
    })
}

impl InferenceVerdict {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "corner: ({}, {})", self.corner.0, self.corner.1).unwrap();
        for (d, c) in self.counts.iter().enumerate() {
            writeln!(s, "betti{d} >= {c}").unwrap();
        }
        writeln!(s, "censored: {}", self.censored).unwrap();
        for w in &self.warnings {
            writeln!(s, "warning: {w}").unwrap();
        }
        writeln!(s, "assumption: {}", self.assumption).unwrap();
        s
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_diagram_csv(diag: &PersistenceDiagram, mut w: impl Write) -> std::io::Result<()> {
    if let Some(n) = diag.n {
        writeln!(w, "# n: {n}")?;
    }
    if let Some(e) = diag.epsilon {
        writeln!(w, "# epsilon: {e}")?;
    }
    if let Some(d) = diag.delta {
        writeln!(w, "# delta: {d}")?;
    }
    if let Some(s) = diag.seed {
        writeln!(w, "# seed: {s}")?;
    }
    writeln!(w, "# threshold: {}", fmt_value(diag.threshold))?;
    writeln!(w, "# p_max: {}", diag.p_max)?;
    writeln!(w, "# zero_length_pairs: {}", diag.zero_length)?;
    writeln!(w, "birth,death,dim")?;
    for p in &diag.points {
        writeln!(w, "{},{},{}", fmt_value(p.birth), fmt_value(p.death), p.dim)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum DiagramFormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_diagram_csv(r: impl BufRead) -> Result<PersistenceDiagram, DiagramFormatError> {
    let mut diag = PersistenceDiagram {
        threshold: f64::INFINITY,
        ..Default::default()
    };
    let mut max_dim = 0;
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let err = |message: String| DiagramFormatError::Syntax { line: k + 1, message };
        let t = line.trim();
        if t.is_empty() || t == "birth,death,dim" {
            continue;
        }
        let num = |v: &str| -> Result<f64, DiagramFormatError> {
            match v.trim() {
                "inf" => Ok(f64::INFINITY),
                s => s.parse().map_err(|_| err(format!("bad number `{s}`"))),
            }
        };
        if let Some(meta) = t.strip_prefix('#') {
            let Some((key, value)) = meta.split_once(':') else { continue };
            let value = value.trim();
            match key.trim() {
                "n" => diag.n = Some(value.parse().map_err(|_| err(format!("bad n `{value}`")))?),
                "epsilon" => diag.epsilon = Some(num(value)?),
                "delta" => diag.delta = Some(num(value)?),
                "seed" => diag.seed = Some(value.parse().map_err(|_| err(format!("bad seed `{value}`")))?),
                "threshold" => diag.threshold = num(value)?,
                "p_max" => diag.p_max = value.parse().map_err(|_| err(format!("bad p_max `{value}`")))?,
                "zero_length_pairs" => diag.zero_length = value.parse().unwrap_or(0),
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected birth,death,dim, found `{t}`")));
        }
        let dim: usize = fields[2].trim().parse().map_err(|_| err(format!("bad dimension `{}`", fields[2])))?;
        let (birth, death) = (num(fields[0])?, num(fields[1])?);
        if !(birth <= death) {
            return Err(err(format!("birth {birth} exceeds death {death}")));
        }
        max_dim = max_dim.max(dim);
        diag.points.push(DiagramPoint { birth, death, dim });
    }
    diag.p_max = diag.p_max.max(max_dim);
    Ok(diag)
}

/// Persistence diagram as SVG, with the inference region shaded when a
/// verdict is given.
pub fn diagram_svg(diag: &PersistenceDiagram, verdict: Option<&InferenceVerdict>) -> String {
    let finite_max = diag
        .points
        .iter()
        .flat_map(|p| [p.birth, p.death])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let mut top = finite_max;
    if diag.threshold.is_finite() {
        top = top.max(diag.threshold);
    }
    if let Some(v) = verdict {
        top = top.max(v.corner.1).max(v.corner.0);
    }
    if top <= 0.0 {
        top = 1.0;
    }
    top *= 1.08;
    let (size, margin) = (480.0, 50.0);
    let sx = |v: f64| margin + v / top * size;
    let sy = |v: f64| margin + size - v / top * size;
    let inf_y = margin - 12.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#,
        w = size + 2.0 * margin
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    if let Some(v) = verdict {
        let (a, b) = v.corner;
        writeln!(
            s,
            r##"<rect class="inference-region" data-a="{a}" data-b="{b}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#f4b6c2" fill-opacity="0.5"/>"##,
            sx(0.0),
            inf_y,
            sx(a) - sx(0.0),
            sy(b) - inf_y
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<line class="diagonal" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="gray"/>"#,
        sx(0.0),
        sy(0.0),
        sx(top),
        sy(top)
    )
    .unwrap();
    writeln!(
        s,
        r#"<line class="infinity" x1="{:.3}" y1="{inf_y:.3}" x2="{:.3}" y2="{inf_y:.3}" stroke="lightgray" stroke-dasharray="4 3"/>"#,
        sx(0.0),
        sx(top)
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for p in &diag.points {
        let x = sx(p.birth);
        let y = if p.death.is_infinite() { inf_y } else { sy(p.death) };
        let c = colors[p.dim % colors.len()];
        match p.dim {
            0 => writeln!(s, r#"<circle class="dim0" cx="{x:.3}" cy="{y:.3}" r="3" fill="{c}"/>"#),
            1 => writeln!(
                s,
                r#"<polygon class="dim1" points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="{c}"/>"#,
                x,
                y - 4.0,
                x - 3.5,
                y + 3.0,
                x + 3.5,
                y + 3.0
            ),
            d => writeln!(
                s,
                r#"<rect class="dim{d}" x="{:.3}" y="{:.3}" width="6" height="6" fill="{c}" transform="rotate(45 {x:.3} {y:.3})"/>"#,
                x - 3.0,
                y - 3.0
            ),
        }
        .unwrap();
    }
    writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">birth</text>"#, margin + size / 2.0, size + 2.0 * margin - 15.0).unwrap();
    writeln!(s, r#"<text x="15" y="{:.3}" font-size="12" transform="rotate(-90 15 {:.3})" text-anchor="middle">death</text>"#, margin + size / 2.0, margin + size / 2.0).unwrap();
    s.push_str("</svg>\n");
    s
}
