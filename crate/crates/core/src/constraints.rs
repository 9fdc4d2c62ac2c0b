//! Closed convex allocation sets `K` with exact support function, membership
//! and Euclidean projection.
//!
//! The support function follows the portfolio convention
//! `support(K, lam) = sup_{x in K} (-x'lam) = -inf_{x in K} x'lam`, so that the
//! complementary slackness condition at a saddle point reads
//! `support(K, lam*) + pi*'lam* = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Absolute tolerance used by membership tests.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// A closed convex set with non-empty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetSpec", into = "SetSpec")]
pub enum ConstraintSet {
    FullSpace { dim: usize },
    /// Coordinatewise bounds; entries may be infinite.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    NonNegOrthant { dim: usize },
    /// Convex hull of a finite vertex list.
    PolytopeV { vertices: Vec<Vec<f64>> },
    /// Cartesian product; coordinates are the concatenation of the children.
    Product { children: Vec<ConstraintSet> },
}

impl ConstraintSet {
    pub fn full_space(dim: usize) -> Result<Self> {
        Self::checked(ConstraintSet::FullSpace { dim })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::checked(ConstraintSet::Box { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn orthant(dim: usize) -> Result<Self> {
        Self::checked(ConstraintSet::NonNegOrthant { dim })
    }

    pub fn polytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        Self::checked(ConstraintSet::PolytopeV { vertices })
    }

    pub fn product(children: Vec<ConstraintSet>) -> Result<Self> {
        Self::checked(ConstraintSet::Product { children })
    }

    fn checked(set: Self) -> Result<Self> {
        set.validate()?;
        Ok(set)
    }

    /// Checks the structural invariants (non-empty interior, consistent dimensions).
    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSet::FullSpace { dim } | ConstraintSet::NonNegOrthant { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidConstraint("dimension must be positive".into()));
                }
            }
            ConstraintSet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidConstraint(format!(
                        "box bounds must be non-empty and of equal length ({} vs {})",
                        lower.len(),
                        upper.len()
                    )));
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || !(l < u) || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return Err(Error::InvalidConstraint(format!(
                            "box coordinate {i} needs lower < upper, got [{l}, {u}]"
                        )));
                    }
                }
            }
            ConstraintSet::PolytopeV { vertices } => {
                let d = vertices.first().map(Vec::len).unwrap_or(0);
                if d == 0 {
                    return Err(Error::InvalidConstraint("polytope needs at least one vertex".into()));
                }
                if vertices.iter().any(|v| v.len() != d || v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::InvalidConstraint(
                        "polytope vertices must be finite and share one dimension".into(),
                    ));
                }
                if vertices.len() < d + 1 {
                    return Err(Error::InvalidConstraint(format!(
                        "polytope in R^{d} needs at least {} vertices, got {}",
                        d + 1,
                        vertices.len()
                    )));
                }
                let v0 = &vertices[0];
                let diffs = DMatrix::from_fn(d, vertices.len() - 1, |r, c| vertices[c + 1][r] - v0[r]);
                if affine_rank(&diffs) < d {
                    return Err(Error::InvalidConstraint(
                        "polytope vertices do not span a full-dimensional hull".into(),
                    ));
                }
            }
            ConstraintSet::Product { children } => {
                if children.is_empty() {
                    return Err(Error::InvalidConstraint("product needs at least one factor".into()));
                }
                for c in children {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::FullSpace { dim } | ConstraintSet::NonNegOrthant { dim } => *dim,
            ConstraintSet::Box { lower, .. } => lower.len(),
            ConstraintSet::PolytopeV { vertices } => vertices[0].len(),
            ConstraintSet::Product { children } => children.iter().map(|c| c.dim()).sum(),
        }
    }

    /// True when every variant in the tree is bounded.
    pub fn is_bounded(&self) -> bool {
        match self {
            ConstraintSet::FullSpace { .. } | ConstraintSet::NonNegOrthant { .. } => false,
            ConstraintSet::Box { lower, upper } => {
                lower.iter().chain(upper).all(|b| b.is_finite())
            }
            ConstraintSet::PolytopeV { .. } => true,
            ConstraintSet::Product { children } => children.iter().all(|c| c.is_bounded()),
        }
    }

    /// `sup_{x in K} (-x'lam)`; may be `+inf`.
    pub fn support(&self, lam: &[f64]) -> Result<f64> {
        check_dim("support", self.dim(), lam.len())?;
        Ok(self.support_unchecked(lam))
    }

    fn support_unchecked(&self, lam: &[f64]) -> f64 {
        match self {
            ConstraintSet::FullSpace { .. } => {
                if lam.iter().all(|&l| l == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConstraintSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .zip(lam)
                .map(|((&l, &u), &y)| interval_support(l, u, y))
                .sum(),
            ConstraintSet::NonNegOrthant { .. } => {
                if lam.iter().all(|&l| l >= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConstraintSet::PolytopeV { vertices } => vertices
                .iter()
                .map(|v| -dot(v, lam))
                .fold(f64::NEG_INFINITY, f64::max),
            ConstraintSet::Product { children } => {
                let mut offset = 0;
                let mut total = 0.0;
                for c in children {
                    let k = c.dim();
                    total += c.support_unchecked(&lam[offset..offset + k]);
                    offset += k;
                }
                total
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim("contains", self.dim(), x.len())?;
        Ok(self.contains_unchecked(x))
    }

    fn contains_unchecked(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| v.is_nan()) {
            return false;
        }
        match self {
            ConstraintSet::FullSpace { .. } => x.iter().all(|v| v.is_finite()),
            ConstraintSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .zip(x)
                .all(|((&l, &u), &v)| v >= l - BOUNDARY_TOL && v <= u + BOUNDARY_TOL && v.is_finite()),
            ConstraintSet::NonNegOrthant { .. } => {
                x.iter().all(|&v| v >= -BOUNDARY_TOL && v.is_finite())
            }
            ConstraintSet::PolytopeV { vertices } => {
                if x.iter().any(|v| !v.is_finite()) {
                    return false;
                }
                let (y, _) = hull_projection(vertices, x);
                let dist = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                dist <= BOUNDARY_TOL
            }
            ConstraintSet::Product { children } => {
                let mut offset = 0;
                children.iter().all(|c| {
                    let k = c.dim();
                    let ok = c.contains_unchecked(&x[offset..offset + k]);
                    offset += k;
                    ok
                })
            }
        }
    }

    /// Euclidean projection `argmin_{y in K} |y - x|`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("project", self.dim(), x.len())?;
        let mut out = x.to_vec();
        self.project_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn project_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ConstraintSet::FullSpace { .. } => out.copy_from_slice(x),
            ConstraintSet::Box { lower, upper } => {
                for i in 0..x.len() {
                    out[i] = x[i].clamp(lower[i], upper[i]);
                }
            }
            ConstraintSet::NonNegOrthant { .. } => {
                for i in 0..x.len() {
                    out[i] = x[i].max(0.0);
                }
            }
            ConstraintSet::PolytopeV { vertices } => {
                let (y, _) = hull_projection(vertices, x);
                out.copy_from_slice(&y);
            }
            ConstraintSet::Product { children } => {
                let mut offset = 0;
                for c in children {
                    let k = c.dim();
                    c.project_into(&x[offset..offset + k], &mut out[offset..offset + k]);
                    offset += k;
                }
            }
        }
    }

    /// Affine hull of the face of `K` exposed by the linear functional `g`
    /// (the maximizers of `g'x` over `K`), with near-ties within `rel_eps`
    /// counted as maximizers. `None` when `g'x` is unbounded above on `K`.
    pub(crate) fn exposed_face(&self, g: &[f64], rel_eps: f64) -> Option<AffineFace> {
        let d = self.dim();
        match self {
            ConstraintSet::FullSpace { .. } => Some(AffineFace::whole(d)),
            ConstraintSet::Box { lower, upper } => {
                box_face(g, rel_eps, |i| (lower[i], upper[i]))
            }
            ConstraintSet::NonNegOrthant { .. } => box_face(g, rel_eps, |_| (0.0, f64::INFINITY)),
            ConstraintSet::PolytopeV { vertices } => {
                let scores: Vec<f64> = vertices.iter().map(|v| dot(v, g)).collect();
                let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let vmax = vertices
                    .iter()
                    .flat_map(|v| v.iter())
                    .fold(0.0f64, |m, x| m.max(x.abs()));
                let gnorm = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let cut = best - rel_eps * (1.0 + gnorm) * (1.0 + vmax);
                let active: Vec<&Vec<f64>> = vertices
                    .iter()
                    .zip(&scores)
                    .filter(|(_, &s)| s >= cut)
                    .map(|(v, _)| v)
                    .collect();
                let anchor = active[0].clone();
                let diffs =
                    DMatrix::from_fn(d, active.len() - 1, |r, c| active[c + 1][r] - anchor[r]);
                Some(AffineFace {
                    anchor,
                    basis: orthonormal_columns(&diffs),
                })
            }
            ConstraintSet::Product { children } => {
                let mut anchor = Vec::with_capacity(d);
                let mut blocks = Vec::with_capacity(children.len());
                let mut offset = 0;
                for c in children {
                    let k = c.dim();
                    let f = c.exposed_face(&g[offset..offset + k], rel_eps)?;
                    anchor.extend_from_slice(&f.anchor);
                    blocks.push((offset, f.basis));
                    offset += k;
                }
                let cols: usize = blocks.iter().map(|(_, b)| b.ncols()).sum();
                let mut basis = DMatrix::zeros(d, cols);
                let mut col = 0;
                for (off, b) in blocks {
                    basis
                        .view_mut((off, col), (b.nrows(), b.ncols()))
                        .copy_from(&b);
                    col += b.ncols();
                }
                Some(AffineFace { anchor, basis })
            }
        }
    }

    /// Zeroes multiplier components that are round-off away from zero where
    /// the multiplier must vanish (interior coordinates) or must not have the
    /// observed sign (unbounded directions) of coordinatewise sets.
    pub(crate) fn clean_multiplier(&self, x: &[f64], lam: &mut [f64], snap_tol: f64) {
        match self {
            ConstraintSet::FullSpace { .. } => {
                for l in lam.iter_mut() {
                    if l.abs() <= snap_tol {
                        *l = 0.0;
                    }
                }
            }
            ConstraintSet::Box { lower, upper } => {
                for i in 0..x.len() {
                    snap_coordinate(x[i], lower[i], upper[i], &mut lam[i], snap_tol);
                }
            }
            ConstraintSet::NonNegOrthant { .. } => {
                for i in 0..x.len() {
                    snap_coordinate(x[i], 0.0, f64::INFINITY, &mut lam[i], snap_tol);
                }
            }
            ConstraintSet::PolytopeV { .. } => {}
            ConstraintSet::Product { children } => {
                let mut offset = 0;
                for c in children {
                    let k = c.dim();
                    c.clean_multiplier(&x[offset..offset + k], &mut lam[offset..offset + k], snap_tol);
                    offset += k;
                }
            }
        }
    }

    /// Splits `K` into a product over consecutive coordinate blocks of the
    /// given sizes. Coordinatewise sets split anywhere; a polytope must lie
    /// inside a single block.
    pub fn split_blocks(&self, dims: &[usize]) -> Result<Vec<ConstraintSet>> {
        check_dim("split_blocks", self.dim(), dims.iter().sum())?;
        let mut atoms = Vec::new();
        self.collect_atoms(&mut atoms);
        let mut blocks = Vec::with_capacity(dims.len());
        let mut it = atoms.into_iter().peekable();
        for (bi, &want) in dims.iter().enumerate() {
            let mut got = 0;
            let mut parts = Vec::new();
            while got < want {
                let atom = it.next().ok_or_else(|| {
                    Error::NotSeparable(format!("ran out of coordinates in block {bi}"))
                })?;
                got += atom.dim();
                parts.push(atom);
            }
            if got != want {
                return Err(Error::NotSeparable(format!(
                    "a polytope factor straddles the boundary of block {bi}"
                )));
            }
            blocks.push(merge_atoms(parts));
        }
        Ok(blocks)
    }

    fn collect_atoms(&self, out: &mut Vec<ConstraintSet>) {
        match self {
            ConstraintSet::FullSpace { dim } => {
                out.extend((0..*dim).map(|_| ConstraintSet::FullSpace { dim: 1 }))
            }
            ConstraintSet::NonNegOrthant { dim } => {
                out.extend((0..*dim).map(|_| ConstraintSet::NonNegOrthant { dim: 1 }))
            }
            ConstraintSet::Box { lower, upper } => out.extend(lower.iter().zip(upper).map(|(&l, &u)| {
                ConstraintSet::Box {
                    lower: vec![l],
                    upper: vec![u],
                }
            })),
            ConstraintSet::PolytopeV { .. } => out.push(self.clone()),
            ConstraintSet::Product { children } => {
                for c in children {
                    c.collect_atoms(out);
                }
            }
        }
    }
}

fn merge_atoms(parts: Vec<ConstraintSet>) -> ConstraintSet {
    if parts.len() == 1 {
        return parts.into_iter().next().unwrap();
    }
    let d = parts.len();
    if parts.iter().all(|p| matches!(p, ConstraintSet::FullSpace { .. })) {
        return ConstraintSet::FullSpace { dim: d };
    }
    if parts.iter().all(|p| matches!(p, ConstraintSet::NonNegOrthant { .. })) {
        return ConstraintSet::NonNegOrthant { dim: d };
    }
    let coordinatewise = parts.iter().all(|p| {
        matches!(
            p,
            ConstraintSet::FullSpace { .. } | ConstraintSet::NonNegOrthant { .. } | ConstraintSet::Box { .. }
        )
    });
    if coordinatewise {
        let (lower, upper) = parts
            .iter()
            .map(|p| match p {
                ConstraintSet::FullSpace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
                ConstraintSet::NonNegOrthant { .. } => (0.0, f64::INFINITY),
                ConstraintSet::Box { lower, upper } => (lower[0], upper[0]),
                _ => unreachable!(),
            })
            .unzip();
        return ConstraintSet::Box { lower, upper };
    }
    ConstraintSet::Product { children: parts }
}

fn interval_support(l: f64, u: f64, y: f64) -> f64 {
    if y > 0.0 {
        -l * y
    } else if y < 0.0 {
        -u * y
    } else {
        0.0
    }
}

fn snap_coordinate(x: f64, l: f64, u: f64, lam: &mut f64, snap_tol: f64) {
    if lam.abs() > snap_tol {
        return;
    }
    let at_lower = l.is_finite() && (x - l).abs() <= BOUNDARY_TOL;
    let at_upper = u.is_finite() && (x - u).abs() <= BOUNDARY_TOL;
    // lam >= 0 is the multiplier sign for an active lower bound, lam <= 0 for an upper one.
    let keep = (at_lower && *lam > 0.0) || (at_upper && *lam < 0.0);
    if !keep {
        *lam = 0.0;
    }
}

fn box_face(g: &[f64], rel_eps: f64, bounds: impl Fn(usize) -> (f64, f64)) -> Option<AffineFace> {
    let d = g.len();
    let scale = 1.0 + g.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let eps = rel_eps * scale;
    let mut anchor = vec![0.0; d];
    let mut free = Vec::new();
    for i in 0..d {
        let (l, u) = bounds(i);
        if g[i] > eps {
            if !u.is_finite() {
                return None;
            }
            anchor[i] = u;
        } else if g[i] < -eps {
            if !l.is_finite() {
                return None;
            }
            anchor[i] = l;
        } else {
            free.push(i);
        }
    }
    let mut basis = DMatrix::zeros(d, free.len());
    for (c, &i) in free.iter().enumerate() {
        basis[(i, c)] = 1.0;
    }
    Some(AffineFace { anchor, basis })
}

/// `{anchor + basis * alpha}` with orthonormal basis columns.
#[derive(Debug, Clone)]
pub(crate) struct AffineFace {
    pub anchor: Vec<f64>,
    pub basis: DMatrix<f64>,
}

impl AffineFace {
    fn whole(d: usize) -> Self {
        AffineFace {
            anchor: vec![0.0; d],
            basis: DMatrix::identity(d, d),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine_rank(diffs: &DMatrix<f64>) -> usize {
    if diffs.ncols() == 0 {
        return 0;
    }
    let svd = diffs.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax)
        .count()
}

fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > 1e-10 * smax)
        .collect();
    DMatrix::from_fn(d, keep.len(), |r, c| u[(r, keep[c])])
}

/// Projection of `x` onto the convex hull of `vertices` by Wolfe's
/// minimum-norm-point active-set method. Returns the projected point as an
/// explicit convex combination together with its (vertex, weight) support.
pub(crate) fn hull_projection(vertices: &[Vec<f64>], x: &[f64]) -> (Vec<f64>, Vec<(usize, f64)>) {
    let d = x.len();
    let pts: Vec<DVector<f64>> = vertices
        .iter()
        .map(|v| DVector::from_iterator(d, v.iter().zip(x).map(|(a, b)| a - b)))
        .collect();
    let max_norm2 = pts.iter().map(|p| p.norm_squared()).fold(0.0, f64::max);
    if max_norm2 == 0.0 {
        return (x.to_vec(), vec![(0, 1.0)]);
    }

    let first = (0..pts.len())
        .min_by(|&a, &b| pts[a].norm_squared().total_cmp(&pts[b].norm_squared()))
        .unwrap();
    let mut support: Vec<usize> = vec![first];
    let mut weights: Vec<f64> = vec![1.0];
    let mut cur = pts[first].clone();

    let combine = |support: &[usize], weights: &[f64]| {
        let mut y = DVector::zeros(d);
        for (&i, &w) in support.iter().zip(weights) {
            y.axpy(w, &pts[i], 1.0);
        }
        y
    };

    let max_major = 50 * (pts.len() + d) + 100;
    for _ in 0..max_major {
        let cc = cur.norm_squared();
        if cc <= 1e-30 * max_norm2 {
            break;
        }
        let (j, pj) = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dot(&cur)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if cc - pj <= 1e-15 * max_norm2 || support.contains(&j) {
            break;
        }
        support.push(j);
        weights.push(0.0);

        for _ in 0..(support.len() + 2) * 4 {
            let alpha = match affine_minimizer(&pts, &support) {
                Some(a) => a,
                None => break,
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                weights = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= 1e-14 && w - a > 0.0 {
                    theta = theta.min(w / (w - a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            // Drop the vertex that hit zero (and any others within round-off).
            let mut k = 0;
            while k < support.len() {
                if weights[k] <= 1e-14 {
                    support.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
        }
        cur = combine(&support, &weights);
    }

    let s: f64 = weights.iter().sum();
    let mut y = vec![0.0; d];
    for (&i, &w) in support.iter().zip(&weights) {
        for r in 0..d {
            y[r] += (w / s) * vertices[i][r];
        }
    }
    (y, support.into_iter().zip(weights.into_iter().map(|w| w / s)).collect())
}

/// Minimizer of `|sum_i a_i p_i|` over the affine hull of the support.
fn affine_minimizer(pts: &[DVector<f64>], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = pts[support[a]].dot(&pts[support[b]]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = m.clone().lu().solve(&rhs).or_else(|| m.svd(true, true).solve(&rhs, 1e-14).ok())?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.rows(0, k).iter().cloned().collect())
}

// ---------------------------------------------------------------------------
// JSON representation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum SetSpec {
    #[serde(alias = "full_space")]
    Full { dim: usize },
    Box {
        lower: Vec<BoundValue>,
        upper: Vec<BoundValue>,
    },
    #[serde(alias = "nonneg_orthant")]
    Orthant { dim: usize },
    Polytope { vertices: Vec<Vec<f64>> },
    Product { children: Vec<SetSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BoundValue {
    Num(f64),
    Sym(String),
}

impl BoundValue {
    fn to_f64(&self) -> Result<f64> {
        match self {
            BoundValue::Num(x) => Ok(*x),
            BoundValue::Sym(s) => match s.as_str() {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(Error::InvalidConstraint(format!("unknown bound sentinel {other:?}"))),
            },
        }
    }

    fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            BoundValue::Sym("inf".into())
        } else if x == f64::NEG_INFINITY {
            BoundValue::Sym("-inf".into())
        } else {
            BoundValue::Num(x)
        }
    }
}

impl TryFrom<SetSpec> for ConstraintSet {
    type Error = Error;

    fn try_from(spec: SetSpec) -> Result<Self> {
        let set = match spec {
            SetSpec::Full { dim } => ConstraintSet::FullSpace { dim },
            SetSpec::Orthant { dim } => ConstraintSet::NonNegOrthant { dim },
            SetSpec::Box { lower, upper } => ConstraintSet::Box {
                lower: lower.iter().map(BoundValue::to_f64).collect::<Result<_>>()?,
                upper: upper.iter().map(BoundValue::to_f64).collect::<Result<_>>()?,
            },
            SetSpec::Polytope { vertices } => ConstraintSet::PolytopeV { vertices },
            SetSpec::Product { children } => ConstraintSet::Product {
                children: children
                    .into_iter()
                    .map(ConstraintSet::try_from)
                    .collect::<Result<_>>()?,
            },
        };
        set.validate()?;
        Ok(set)
    }
}

impl From<ConstraintSet> for SetSpec {
    fn from(set: ConstraintSet) -> Self {
        match set {
            ConstraintSet::FullSpace { dim } => SetSpec::Full { dim },
            ConstraintSet::NonNegOrthant { dim } => SetSpec::Orthant { dim },
            ConstraintSet::Box { lower, upper } => SetSpec::Box {
                lower: lower.into_iter().map(BoundValue::from_f64).collect(),
                upper: upper.into_iter().map(BoundValue::from_f64).collect(),
            },
            ConstraintSet::PolytopeV { vertices } => SetSpec::Polytope { vertices },
            ConstraintSet::Product { children } => SetSpec::Product {
                children: children.into_iter().map(SetSpec::from).collect(),
            },
        }
    }
}
