//! Pointwise inner problem of the HJB equation:
//!
//! ```text
//! maximize  h(pi) = c'pi - (1 - b)/2 |Sigma' pi|^2   over pi in K
//! ```
//!
//! and its dual `inf_lambda 2(1 - b) delta_K(lambda) + |Sigma^{-1}(c + lambda)|^2`.
//! The primal is solved by projected gradient; the dual minimizer follows
//! from the first-order condition `lambda* = (1 - b) Sigma Sigma' pi* - c`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Active-face refinement is attempted every this many gradient steps.
const POLISH_EVERY: usize = 8;
/// Relative tolerance for near-ties when identifying the exposed face.
const FACE_REL_EPS: f64 = 1e-7;
/// Step halvings allowed by the monotone safeguard before giving up.
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone)]
pub struct InnerProblem<'a> {
    pub sigma: DMatrix<f64>,
    pub c: DVector<f64>,
    pub b_risk: f64,
    pub set: &'a ConstraintSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub pi_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub slackness: f64,
    pub iterations: usize,
}

/// Shared quantities of an inner problem.
struct Quadratic {
    /// `(1 - b) Sigma Sigma'`
    q: DMatrix<f64>,
    lmax: f64,
    lmin: f64,
}

impl<'a> InnerProblem<'a> {
    pub fn new(sigma: DMatrix<f64>, c: DVector<f64>, b_risk: f64, set: &'a ConstraintSet) -> Result<Self> {
        let p = InnerProblem { sigma, c, b_risk, set };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.c.len();
        check_dim("inner problem Sigma rows", d, self.sigma.nrows())?;
        check_dim("inner problem Sigma columns", d, self.sigma.ncols())?;
        check_dim("inner problem constraint", d, self.set.dim())?;
        validate_risk(self.b_risk)?;
        if self.c.iter().chain(self.sigma.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("inner problem data must be finite".into()));
        }
        Ok(())
    }

    /// Objective `h(pi)`.
    pub fn objective(&self, pi: &[f64]) -> f64 {
        let pi = DVector::from_column_slice(pi);
        let s = self.sigma.transpose() * &pi;
        self.c.dot(&pi) - 0.5 * (1.0 - self.b_risk) * s.norm_squared()
    }

    /// Dual objective `2(1 - b) delta_K(lambda) + |Sigma^{-1}(c + lambda)|^2`.
    pub fn dual_objective(&self, lambda: &[f64]) -> Result<f64> {
        let delta = self.set.support(lambda)?;
        let rhs = &self.c + DVector::from_column_slice(lambda);
        let x = self
            .sigma
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("Sigma is singular".into()))?;
        Ok(2.0 * (1.0 - self.b_risk) * delta + x.norm_squared())
    }

    /// Maximizer of `h` over the whole space, `Q^{-1} c`.
    pub fn unconstrained_optimum(&self) -> Result<DVector<f64>> {
        let quad = self.quadratic()?;
        solve_spd(&quad.q, &self.c)
    }

    fn quadratic(&self) -> Result<Quadratic> {
        let q = (&self.sigma * self.sigma.transpose()) * (1.0 - self.b_risk);
        let eig = q.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        // Strict concavity makes the maximizer unique.
        if !(lmin > 0.0) || !(lmax / lmin < 1e16) {
            return Err(Error::InvalidArgument(format!(
                "Sigma is numerically singular (eigenvalues of (1-b) Sigma Sigma' in [{lmin:e}, {lmax:e}])"
            )));
        }
        Ok(Quadratic { q, lmax, lmin })
    }
}

pub(crate) fn validate_risk(b: f64) -> Result<()> {
    if !(b < 1.0) || b == 0.0 || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "risk parameter b must satisfy b < 1 and b != 0, got {b}"
        )));
    }
    Ok(())
}

fn solve_spd(q: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    match q.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => q
            .clone()
            .lu()
            .solve(rhs)
            .ok_or_else(|| Error::InvalidArgument("quadratic form is singular".into())),
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Options of the projected-gradient solver.
#[derive(Debug, Clone)]
pub struct SolveOptions<'s> {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial point (projected onto `K` before use).
    pub start: Option<&'s [f64]>,
    /// Refine iterates by solving the quadratic exactly on the active face.
    pub polish: bool,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            start: None,
            polish: true,
        }
    }
}

pub fn solve_inner(p: &InnerProblem, tol: f64, max_iter: usize) -> Result<InnerSolution> {
    solve_inner_with(
        p,
        &SolveOptions {
            tol,
            max_iter,
            ..SolveOptions::default()
        },
        &mut |_, _| {},
    )
}

/// Full solver; `observer` sees `(iteration, objective)` for every accepted
/// projected-gradient iterate (starting with iteration 0).
pub fn solve_inner_with(
    p: &InnerProblem,
    opts: &SolveOptions,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<InnerSolution> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let quad = p.quadratic()?;
    let d = p.dim();

    if let ConstraintSet::FullSpace { .. } = p.set {
        let pi = solve_spd(&quad.q, &p.c)?;
        observer(0, p.objective(pi.as_slice()));
        return finish(p, &quad, pi.as_slice().to_vec(), 0, true);
    }

    let grad = |x: &[f64], out: &mut [f64]| {
        let qx = &quad.q * DVector::from_column_slice(x);
        for i in 0..d {
            out[i] = p.c[i] - qx[i];
        }
    };

    let mut x = vec![0.0; d];
    match opts.start {
        Some(s) => {
            check_dim("inner solver start", d, s.len())?;
            p.set.project_into(s, &mut x);
        }
        None => {
            let u = solve_spd(&quad.q, &p.c)?;
            p.set.project_into(u.as_slice(), &mut x);
        }
    }
    let mut hx = p.objective(&x);
    observer(0, hx);

    let base_step = 1.0 / quad.lmax;
    let mut g = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut last_step = f64::INFINITY;

    for k in 1..=opts.max_iter {
        grad(&x, &mut g);
        let mut step = base_step;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..d {
                trial[i] = x[i] + step * g[i];
            }
            p.set.project_into(&trial, &mut y);
            let hy = p.objective(&y);
            // Exact arithmetic makes the 1/L step monotone; the guard only
            // absorbs rounding in the projection.
            if hy >= hx - 1e-15 * (1.0 + hx.abs()) {
                accepted = true;
                last_step = max_diff(&x, &y);
                x.copy_from_slice(&y);
                hx = hy;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                iterations: k,
                last_step,
                last_iterate: x,
            });
        }
        observer(k, hx);
        if last_step < opts.tol {
            let x = if opts.polish { polish(p, &quad, &x, base_step, opts.tol).unwrap_or(x) } else { x };
            return finish(p, &quad, x, k, opts.polish);
        }
        if opts.polish && k % POLISH_EVERY == 0 {
            if let Some(z) = polish(p, &quad, &x, base_step, opts.tol) {
                // Accept only stationary face solutions: one more gradient
                // step must leave them in place.
                grad(&z, &mut g);
                for i in 0..d {
                    trial[i] = z[i] + base_step * g[i];
                }
                p.set.project_into(&trial, &mut y);
                if max_diff(&y, &z) < opts.tol {
                    observer(k, p.objective(&z));
                    return finish(p, &quad, z, k, true);
                }
            }
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        last_step,
        last_iterate: x,
    })
}

/// Maximizes `h` on the affine hull of the face exposed by the gradient at
/// `x`. Returns a feasible point that is at least as good as `x`.
fn polish(p: &InnerProblem, quad: &Quadratic, x: &[f64], step: f64, tol: f64) -> Option<Vec<f64>> {
    let d = p.dim();
    let xv = DVector::from_column_slice(x);
    let g = &p.c - &quad.q * &xv;
    // The face is read off the prox step so that nearly active bounds count.
    let face = p.set.exposed_face(g.as_slice(), FACE_REL_EPS).or_else(|| {
        let shifted: Vec<f64> = (0..d).map(|i| x[i] + step * g[i]).collect();
        let mut y = vec![0.0; d];
        p.set.project_into(&shifted, &mut y);
        let dir: Vec<f64> = (0..d).map(|i| y[i] - x[i]).collect();
        p.set.exposed_face(&dir, FACE_REL_EPS)
    })?;
    let e = &face.basis;
    let anchor = DVector::from_column_slice(&face.anchor);
    let cand = if e.ncols() == 0 {
        anchor
    } else {
        let lhs = e.transpose() * &quad.q * e;
        let rhs = e.transpose() * (&p.c - &quad.q * &anchor);
        let alpha = lhs.cholesky()?.solve(&rhs);
        anchor + e * alpha
    };
    let cand = cand.as_slice().to_vec();
    if !p.set.contains(&cand).ok()? {
        return None;
    }
    let hx = p.objective(x);
    let hc = p.objective(&cand);
    if hc + tol * tol * (1.0 + hx.abs()) < hx {
        return None;
    }
    Some(cand)
}

fn finish(
    p: &InnerProblem,
    quad: &Quadratic,
    pi: Vec<f64>,
    iterations: usize,
    clean: bool,
) -> Result<InnerSolution> {
    let d = p.dim();
    let piv = DVector::from_column_slice(&pi);
    let qpi = &quad.q * &piv;
    let mut lambda: Vec<f64> = (0..d).map(|i| qpi[i] - p.c[i]).collect();
    if let ConstraintSet::FullSpace { .. } = p.set {
        lambda.iter_mut().for_each(|l| *l = 0.0);
    } else if clean {
        let snap_tol = 1e-8 * (1.0 + inf_norm(p.c.as_slice()) + inf_norm(qpi.as_slice()));
        p.set.clean_multiplier(&pi, &mut lambda, snap_tol);
    }
    let delta = p.set.support(&lambda)?;
    if !delta.is_finite() {
        return Err(Error::InternalConsistency(format!(
            "support function infinite at the recovered multiplier {lambda:?} (pi* = {pi:?})"
        )));
    }
    let primal_value = p.objective(&pi);
    let dual_value = p.dual_objective(&lambda)?;
    let slackness = delta + piv.dot(&DVector::from_column_slice(&lambda));
    Ok(InnerSolution {
        pi_star: pi,
        lambda_star: lambda,
        primal_value,
        dual_value,
        slackness,
        iterations,
    })
}

/// Radius of an `l_inf` ball around the origin that contains the maximizer:
/// the superlevel set `{h >= h(pi_0)}` with `pi_0 = P_K(0)` is a ball around
/// the unconstrained optimum.
pub fn search_radius(p: &InnerProblem) -> Result<f64> {
    let quad = p.quadratic()?;
    let u = solve_spd(&quad.q, &p.c)?;
    let pi0 = p.set.project(&vec![0.0; p.dim()])?;
    let gap = (p.objective(u.as_slice()) - p.objective(&pi0)).max(0.0);
    Ok(inf_norm(u.as_slice()) + (2.0 * gap / quad.lmin).sqrt())
}

/// Exhaustive search over the lattice of `grid_n^d` points on
/// `[-radius, radius]^d` intersected with `K`. The multiplier is the
/// (uncleaned) first-order-condition value at the best lattice point.
pub fn brute_force_inner(p: &InnerProblem, grid_n: usize, radius: f64) -> Result<InnerSolution> {
    p.validate()?;
    let d = p.dim();
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if grid_n < 2 || !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument("grid needs >= 2 points and a positive radius".into()));
    }
    let h = 2.0 * radius / (grid_n - 1) as f64;
    let coord = |k: usize| -radius + k as f64 * h;
    let total = grid_n.pow(d as u32);
    let mut pt = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for idx in 0..total {
        let mut r = idx;
        for slot in pt.iter_mut() {
            *slot = coord(r % grid_n);
            r /= grid_n;
        }
        if !p.set.contains(&pt)? {
            continue;
        }
        let val = p.objective(&pt);
        if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
            best = Some((val, pt.clone()));
        }
    }
    let (primal_value, pi) =
        best.ok_or_else(|| Error::InvalidArgument("no lattice point lies in K".into()))?;
    let piv = DVector::from_column_slice(&pi);
    let qpi = (&p.sigma * p.sigma.transpose()) * &piv * (1.0 - p.b_risk);
    let lambda: Vec<f64> = (0..d).map(|i| qpi[i] - p.c[i]).collect();
    let delta = p.set.support(&lambda)?;
    let dual_value = p.dual_objective(&lambda)?;
    Ok(InnerSolution {
        slackness: delta + piv.dot(&DVector::from_column_slice(&lambda)),
        pi_star: pi,
        lambda_star: lambda,
        primal_value,
        dual_value,
        iterations: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(sigma: f64, c: f64, b: f64, set: &ConstraintSet) -> InnerSolution {
        let p = InnerProblem::new(
            DMatrix::from_element(1, 1, sigma),
            DVector::from_element(1, c),
            b,
            set,
        )
        .unwrap();
        solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
    }

    #[test]
    fn unconstrained_closed_form() {
        let k = ConstraintSet::full_space(1).unwrap();
        let s = scalar(0.2, 0.04, 0.5, &k);
        assert!((s.pi_star[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.lambda_star[0], 0.0);
        assert!((s.primal_value - 0.04).abs() < 1e-15);
        assert!((s.dual_value - 0.04).abs() < 1e-15);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn unit_interval_binds_at_one() {
        let k = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let s = scalar(0.2, 0.04, 0.5, &k);
        assert_eq!(s.pi_star[0], 1.0);
        assert!((s.lambda_star[0] + 0.02).abs() < 1e-15);
        assert!(s.slackness.abs() < 1e-15);
        assert!((s.primal_value - 0.03).abs() < 1e-15);
        assert!((s.dual_value - 0.03).abs() < 1e-15);

        // 10^5-point grid on [0, 1].
        let n = 100_000;
        let best = (0..n)
            .map(|k| k as f64 / (n - 1) as f64)
            .map(|x| 0.04 * x - 0.25 * 0.04 * x * x)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((best - s.primal_value).abs() < 1e-12);
    }

    #[test]
    fn orthant_coordinatewise_kkt() {
        let k = ConstraintSet::orthant(2).unwrap();
        let p = InnerProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-0.05, 0.03]), 0.5, &k).unwrap();
        let s = solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(s.pi_star[0], 0.0);
        assert!((s.pi_star[1] - 0.06).abs() < 1e-12);
        assert!((s.lambda_star[0] - 0.05).abs() < 1e-12);
        assert_eq!(s.lambda_star[1], 0.0);
        assert!(s.slackness.abs() < 1e-15);
    }

    #[test]
    fn zero_drift_gives_zero() {
        let k = ConstraintSet::uniform_box(2, -1.0, 1.0).unwrap();
        let p = InnerProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), -1.0, &k).unwrap();
        let s = solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(s.pi_star, vec![0.0, 0.0]);
        assert_eq!(s.primal_value, 0.0);
        let bf = brute_force_inner(&p, 21, 1.0).unwrap();
        assert_eq!(bf.primal_value, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        let c = DVector::from_element(1, 0.1);
        assert!(InnerProblem::new(one.clone(), c.clone(), 0.0, &k).is_err());
        assert!(InnerProblem::new(one.clone(), c.clone(), 1.0, &k).is_err());
        let singular = InnerProblem::new(DMatrix::zeros(1, 1), c.clone(), 0.5, &k).unwrap();
        assert!(solve_inner(&singular, 1e-10, 100).is_err());
        let k4 = ConstraintSet::uniform_box(4, 0.0, 1.0).unwrap();
        let p4 = InnerProblem::new(DMatrix::identity(4, 4), DVector::zeros(4), 0.5, &k4).unwrap();
        assert!(matches!(brute_force_inner(&p4, 3, 1.0), Err(Error::UnsupportedDimension(4))));
    }

    #[test]
    fn iteration_budget_is_reported() {
        let k = ConstraintSet::uniform_box(2, -10.0, 10.0).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.9, 0.3]);
        let p = InnerProblem::new(sigma, DVector::from_vec(vec![0.1, 0.05]), 0.5, &k).unwrap();
        let opts = SolveOptions {
            tol: 1e-14,
            max_iter: 2,
            start: Some(&[0.0, 0.0]),
            polish: false,
        };
        match solve_inner_with(&p, &opts, &mut |_, _| {}) {
            Err(Error::Convergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), 2);
            }
            other => panic!("expected a convergence error, got {other:?}"),
        }
    }

    #[test]
    fn simplex_in_two_dimensions_matches_lattice() {
        let k = ConstraintSet::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.05, 0.3]);
        let p = InnerProblem::new(sigma, DVector::from_vec(vec![0.05, 0.06]), 0.5, &k).unwrap();
        let s = solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(s.slackness.abs() < 1e-10, "slackness {}", s.slackness);
        assert!((s.dual_value - s.primal_value).abs() < 1e-12);
        let bf = brute_force_inner(&p, 401, 1.0).unwrap();
        assert!(bf.primal_value <= s.primal_value + 1e-15);
        assert!(s.primal_value - bf.primal_value < 2.0 * 0.005 * 0.1);
    }
}
