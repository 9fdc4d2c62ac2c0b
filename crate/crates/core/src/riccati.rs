//! Riccati system for the exponents of the separable value function
//! `G(t, v, z) = v^b / b * exp(A(T - t) + B(T - t)'z)`, integrated in
//! time-to-maturity `tau` from `A(0) = 0`, `B(0) = 0`.
//!
//! Specialized right-hand sides exist for the three markets; a generic
//! right-hand side driven by [`EasCoefficients`] is kept as a cross-check,
//! and [`eas_probe`] tests numerically whether a (market, constraint) pair is
//! affine in the factor at all.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::dual_inner::{solve_inner, validate_risk, InnerProblem, InnerSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{check_dim, Error, Result};
use crate::markets::{CoefficientFrame, MarketKind, MarketModel};

/// `|A|` or `|B|` beyond this aborts the integration.
pub const BLOW_UP: f64 = 1e8;
pub const MIN_STEPS: usize = 8;
pub const DEFAULT_STEPS: usize = 1024;
/// Multiplier jumps between grid nodes above this are logged for unbounded K.
const LAMBDA_JUMP_WARN: f64 = 1e-3;
/// Threshold on relative second differences in the affinity probe.
pub const EAS_THRESHOLD: f64 = 1e-7;

/// Exponents on a uniform `tau` grid with their slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub tau: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub da: Vec<f64>,
    pub db: Vec<Vec<f64>>,
    /// Largest max-norm change of the multiplier between neighbouring nodes.
    pub max_lambda_jump: f64,
}

/// Interpolated exponents and their `tau`-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentPoint {
    pub a: f64,
    pub b: DVector<f64>,
    pub da: f64,
    pub db: DVector<f64>,
}

impl RiccatiSolution {
    pub fn factors(&self) -> usize {
        self.b[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.tau.len() - 1
    }

    /// Cubic-Hermite interpolation of `(A, B)` and its derivative at `tau`.
    pub fn at(&self, tau: f64) -> Result<ExponentPoint> {
        let horizon = self.horizon();
        let slack = 1e-12 * (1.0 + horizon);
        if !(tau >= -slack && tau <= horizon + slack) {
            return Err(Error::InvalidArgument(format!(
                "tau = {tau} outside the solved range [0, {horizon}]"
            )));
        }
        let tau = tau.clamp(0.0, horizon);
        let n = self.steps();
        let h = horizon / n as f64;
        let k = ((tau / h).floor() as usize).min(n - 1);
        let s = (tau - self.tau[k]) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        let (d00, d10, d01, d11) = hermite_basis_derivative(s);
        let interp = |y0: f64, y1: f64, m0: f64, m1: f64| {
            (
                h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1,
                (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1,
            )
        };
        let (a, da) = interp(self.a[k], self.a[k + 1], self.da[k], self.da[k + 1]);
        let m = self.factors();
        let mut b = DVector::zeros(m);
        let mut db = DVector::zeros(m);
        for i in 0..m {
            let (v, dv) = interp(self.b[k][i], self.b[k + 1][i], self.db[k][i], self.db[k + 1][i]);
            b[i] = v;
            db[i] = dv;
        }
        Ok(ExponentPoint { a, b, da, db })
    }

    /// Copy with `A` shifted by a constant (used for fault injection).
    pub fn with_a_shift(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.a.iter_mut().for_each(|a| *a += shift);
        out
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2)
}

fn hermite_basis_derivative(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    (6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s)
}

/// Right-hand side value together with the dual control that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsValue {
    pub da: f64,
    pub db: DVector<f64>,
    /// Multiplier of the inner problem (CIR: blockwise, per unit factor).
    pub lambda: Vec<f64>,
}

/// A (market, constraint, risk) triple prepared for repeated rhs calls.
#[derive(Debug, Clone)]
pub struct RiccatiSystem<'a> {
    pub model: &'a MarketModel,
    pub set: &'a ConstraintSet,
    pub b_risk: f64,
    blocks: Vec<ConstraintSet>,
}

impl<'a> RiccatiSystem<'a> {
    pub fn new(model: &'a MarketModel, set: &'a ConstraintSet, b_risk: f64) -> Result<Self> {
        validate_risk(b_risk)?;
        check_dim("constraint set vs assets", model.assets(), set.dim())?;
        let blocks = match &model.kind {
            MarketKind::Cir(c) => set.split_blocks(&c.block_dims)?,
            _ => Vec::new(),
        };
        Ok(RiccatiSystem {
            model,
            set,
            b_risk,
            blocks,
        })
    }

    fn half_ratio(&self) -> f64 {
        0.5 * self.b_risk / (1.0 - self.b_risk)
    }

    fn check_tau(&self, tau: f64) -> Result<()> {
        let horizon = self.model.horizon;
        if !(tau >= 0.0 && tau <= horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!("tau = {tau} outside [0, {horizon}]")));
        }
        Ok(())
    }

    pub fn rhs(&self, tau: f64, _a: f64, bvec: &[f64]) -> Result<RhsValue> {
        self.check_tau(tau)?;
        check_dim("Riccati state B", self.model.factors(), bvec.len())?;
        let t = (self.model.horizon - tau).max(0.0);
        let b = self.b_risk;
        match &self.model.kind {
            MarketKind::Bs(bs) => {
                let p = InnerProblem::new(bs.sigma_at(t), bs.eta_at(t), b, self.set)?;
                let s = solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                Ok(RhsValue {
                    da: b * bs.r.eval(t) + self.half_ratio() * s.dual_value,
                    db: DVector::zeros(1),
                    lambda: s.lambda_star,
                })
            }
            MarketKind::Cir(c) => {
                let m = c.kappa.len();
                let mut da = b * c.r;
                let mut db = DVector::zeros(m);
                let mut lambda = Vec::with_capacity(self.set.dim());
                for i in 0..m {
                    let s = self.cir_block(i, bvec[i])?;
                    da += c.kappa[i] * c.theta[i] * bvec[i];
                    db[i] = -c.kappa[i] * bvec[i]
                        + 0.5 * c.sigma_z[i] * c.sigma_z[i] * bvec[i] * bvec[i]
                        + self.half_ratio() * s.dual_value;
                    lambda.extend_from_slice(&s.lambda_star);
                }
                Ok(RhsValue { da, db, lambda })
            }
            MarketKind::Ou(ou) => {
                let bv = DVector::from_column_slice(bvec);
                let sigma = ou.asset_sigma(t);
                let c = &sigma * (&ou.eta + ou.sigma.transpose() * &bv);
                let p = InnerProblem::new(sigma, c, b, self.set)?;
                let s = solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                let da = b * ou.w0
                    + ou.kappa.component_mul(&ou.theta).dot(&bv)
                    + 0.5 * (ou.sigma.transpose() * &bv).norm_squared()
                    + self.half_ratio() * s.dual_value;
                let db = &ou.w1 * b - ou.kappa.component_mul(&bv);
                Ok(RhsValue {
                    da,
                    db,
                    lambda: s.lambda_star,
                })
            }
        }
    }

    /// Per-unit-factor inner problem of CIR block `i`.
    pub fn cir_block(&self, i: usize, b_i: f64) -> Result<InnerSolution> {
        let MarketKind::Cir(c) = &self.model.kind else {
            return Err(Error::InvalidArgument("block problems exist only for CIR markets".into()));
        };
        let chat = &c.eta[i] + (&c.sigma_blocks[i] * &c.rho[i]) * (c.sigma_z[i] * b_i);
        let p = InnerProblem::new(c.sigma_blocks[i].clone(), chat, self.b_risk, &self.blocks[i])?;
        solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER)
    }

    /// Closed-form OU exponent `B_i(tau) = b (w1)_i (1 - exp(-kappa_i tau)) / kappa_i`.
    pub fn ou_closed_form_b(&self, tau: f64) -> Option<DVector<f64>> {
        let MarketKind::Ou(ou) = &self.model.kind else { return None };
        Some(DVector::from_fn(ou.w1.len(), |i, _| {
            let k = ou.kappa[i];
            self.b_risk * ou.w1[i] * (-(-k * tau).exp_m1()) / k
        }))
    }
}

/// Specialized right-hand side `(A', B')` at `tau`.
pub fn rhs(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    tau: f64,
    a: f64,
    bvec: &[f64],
) -> Result<(f64, DVector<f64>)> {
    let v = RiccatiSystem::new(model, set, b_risk)?.rhs(tau, a, bvec)?;
    Ok((v.da, v.db))
}

/// How the OU exponent `B` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuMode {
    /// `B` from its closed form; only `A` is integrated.
    #[default]
    ClosedForm,
    /// `B` integrated by RK4 alongside `A`.
    Rk4,
}

/// Integrates the system over `[0, T]` with `steps` uniform RK4 steps.
pub fn integrate(model: &MarketModel, set: &ConstraintSet, b_risk: f64, steps: usize) -> Result<RiccatiSolution> {
    integrate_with(model, set, b_risk, steps, OuMode::ClosedForm)
}

pub fn integrate_with(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    steps: usize,
    ou_mode: OuMode,
) -> Result<RiccatiSolution> {
    if steps < MIN_STEPS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_STEPS} steps, got {steps}")));
    }
    let sys = RiccatiSystem::new(model, set, b_risk)?;
    let m = model.factors();
    let horizon = model.horizon;
    let h = horizon / steps as f64;
    let tau: Vec<f64> = (0..=steps).map(|k| if k == steps { horizon } else { k as f64 * h }).collect();

    let closed_b = matches!(model.kind, MarketKind::Ou(_)) && ou_mode == OuMode::ClosedForm;
    let b_at = |t: f64, b: &DVector<f64>| -> DVector<f64> {
        if closed_b {
            sys.ou_closed_form_b(t).unwrap()
        } else {
            b.clone()
        }
    };
    let b_frozen = matches!(model.kind, MarketKind::Bs(_)) || closed_b;

    let mut a_vals = Vec::with_capacity(steps + 1);
    let mut b_vals = Vec::with_capacity(steps + 1);
    let mut da_vals = Vec::with_capacity(steps + 1);
    let mut db_vals = Vec::with_capacity(steps + 1);

    let mut a = 0.0;
    let mut b = DVector::zeros(m);
    let mut f0 = sys.rhs(0.0, a, b.as_slice())?;
    let check_unbounded = !set.is_bounded();
    let mut max_jump = 0.0f64;

    for k in 0..steps {
        a_vals.push(a);
        b_vals.push(b.as_slice().to_vec());
        da_vals.push(f0.da);
        db_vals.push(f0.db.as_slice().to_vec());

        let t0 = tau[k];
        let t1 = tau[k + 1];
        let hk = t1 - t0;
        let tm = t0 + 0.5 * hk;
        // For an A-independent rhs with frozen B this is Simpson's rule.
        let (a1, b1) = if b_frozen {
            let fm = sys.rhs(tm, a, b_at(tm, &b).as_slice())?;
            let bn = b_at(t1, &b);
            let fe = sys.rhs(t1, a, bn.as_slice())?;
            (a + hk / 6.0 * (f0.da + 4.0 * fm.da + fe.da), bn)
        } else {
            let k1 = &f0;
            let k2 = sys.rhs(tm, a + 0.5 * hk * k1.da, (&b + &k1.db * (0.5 * hk)).as_slice())?;
            let k3 = sys.rhs(tm, a + 0.5 * hk * k2.da, (&b + &k2.db * (0.5 * hk)).as_slice())?;
            let k4 = sys.rhs(t1, a + hk * k3.da, (&b + &k3.db * hk).as_slice())?;
            (
                a + hk / 6.0 * (k1.da + 2.0 * k2.da + 2.0 * k3.da + k4.da),
                &b + (&k1.db + &k2.db * 2.0 + &k3.db * 2.0 + &k4.db) * (hk / 6.0),
            )
        };
        let bnorm = b1.amax();
        if !a1.is_finite() || !bnorm.is_finite() || a1.abs() > BLOW_UP || bnorm > BLOW_UP {
            return Err(Error::FiniteEscape {
                tau: t1,
                a_abs: a1.abs(),
                b_norm: bnorm,
            });
        }
        let f1 = sys.rhs(t1, a1, b1.as_slice())?;
        let jump = f1
            .lambda
            .iter()
            .zip(&f0.lambda)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        if check_unbounded && jump > LAMBDA_JUMP_WARN && max_jump <= LAMBDA_JUMP_WARN {
            warn!("multiplier jumps by {jump:.3e} between tau = {t0} and {t1}; RK4 accuracy may degrade");
        }
        max_jump = max_jump.max(jump);
        a = a1;
        b = b1;
        f0 = f1;
    }
    a_vals.push(a);
    b_vals.push(b.as_slice().to_vec());
    da_vals.push(f0.da);
    db_vals.push(f0.db.as_slice().to_vec());

    Ok(RiccatiSolution {
        tau,
        a: a_vals,
        b: b_vals,
        da: da_vals,
        db: db_vals,
        max_lambda_jump: max_jump,
    })
}

// ---------------------------------------------------------------------------
// Pointwise problem at a state
// ---------------------------------------------------------------------------

/// Inner problem of the full market at `(t, z)` for exponent `B`.
#[derive(Debug, Clone)]
pub struct StateInner {
    pub frame: CoefficientFrame,
    /// Effective drift `mu - r1 + Sigma rho' sigma_z' B`.
    pub c: DVector<f64>,
    pub solution: InnerSolution,
}

pub fn state_inner(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    t: f64,
    z: &DVector<f64>,
    bvec: &DVector<f64>,
) -> Result<StateInner> {
    let frame = model.coeffs(t, z)?;
    check_dim("exponent B", model.factors(), bvec.len())?;
    let c = frame.effective_drift(bvec);
    let p = InnerProblem::new(frame.sigma.clone(), c.clone(), b_risk, set)?;
    let solution = solve_inner(&p, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(StateInner { frame, c, solution })
}

// ---------------------------------------------------------------------------
// Generic separable form
// ---------------------------------------------------------------------------

/// Coefficients of the generic separable Riccati system
///
/// ```text
/// A' = b p0 + k0'B + B'h0 B / 2 + b/(2(1-b)) [q0 + 2 g0'B + B' l0 B]
/// B' = b p1 + k1'B + B'h1[.]B / 2 + b/(2(1-b)) [q1 + 2 g1'B + B' l1[.]B]
/// ```
///
/// where `(B'T[.]B)_k = B' T_k B`. The constant parts are stored; the
/// multiplier-dependent parts are produced by [`EasCoefficients::terms`].
#[derive(Debug, Clone)]
pub struct EasCoefficients<'a> {
    system: RiccatiSystem<'a>,
    pub k0: DVector<f64>,
    pub k1: DMatrix<f64>,
    pub h0: DMatrix<f64>,
    pub h1: Vec<DMatrix<f64>>,
    pub l0hat: DMatrix<f64>,
    pub l1hat: Vec<DMatrix<f64>>,
}

/// State-dependent coefficients at `(t, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EasTerms {
    pub p0: f64,
    pub q0: f64,
    pub p1: DVector<f64>,
    pub q1: DVector<f64>,
    pub g0: DVector<f64>,
    pub g1: DMatrix<f64>,
}

impl<'a> EasCoefficients<'a> {
    /// Coefficients read off the market definitions.
    pub fn for_market(model: &'a MarketModel, set: &'a ConstraintSet, b_risk: f64) -> Result<Self> {
        let system = RiccatiSystem::new(model, set, b_risk)?;
        let m = model.factors();
        let zero = DMatrix::zeros(m, m);
        let zeros_t = vec![zero.clone(); m];
        let unit = |k: usize, w: f64| {
            let mut e = DMatrix::zeros(m, m);
            e[(k, k)] = w;
            e
        };
        let out = match &model.kind {
            MarketKind::Bs(_) => EasCoefficients {
                system,
                k0: DVector::zeros(m),
                k1: zero.clone(),
                h0: zero.clone(),
                h1: zeros_t.clone(),
                l0hat: zero,
                l1hat: zeros_t,
            },
            MarketKind::Cir(c) => EasCoefficients {
                k0: DVector::from_fn(m, |i, _| c.kappa[i] * c.theta[i]),
                k1: DMatrix::from_fn(m, m, |i, j| if i == j { -c.kappa[i] } else { 0.0 }),
                h0: zero.clone(),
                h1: (0..m).map(|k| unit(k, c.sigma_z[k].powi(2))).collect(),
                l0hat: zero,
                l1hat: (0..m)
                    .map(|k| unit(k, c.sigma_z[k].powi(2) * c.rho[k].norm_squared()))
                    .collect(),
                system,
            },
            MarketKind::Ou(ou) => {
                let ss = &ou.sigma * ou.sigma.transpose();
                EasCoefficients {
                    k0: ou.kappa.component_mul(&ou.theta),
                    k1: DMatrix::from_diagonal(&(-&ou.kappa)),
                    h0: ss.clone(),
                    h1: zeros_t.clone(),
                    l0hat: ss,
                    l1hat: zeros_t,
                    system,
                }
            }
        };
        Ok(out)
    }

    /// Multiplier-dependent coefficients at time-to-maturity `tau` and `B`.
    pub fn terms(&self, tau: f64, bvec: &[f64]) -> Result<EasTerms> {
        let sys = &self.system;
        let model = sys.model;
        let m = model.factors();
        let t = (model.horizon - tau).max(0.0);
        let lambda = DVector::from_vec(sys.rhs(tau, 0.0, bvec)?.lambda);
        let delta = sys.set.support(lambda.as_slice())?;
        let mut terms = EasTerms {
            p0: 0.0,
            q0: 0.0,
            p1: DVector::zeros(m),
            q1: DVector::zeros(m),
            g0: DVector::zeros(m),
            g1: DMatrix::zeros(m, m),
        };
        match &model.kind {
            MarketKind::Bs(bs) => {
                let x = solve(&bs.sigma_at(t), &(bs.eta_at(t) + &lambda))?;
                terms.p0 = bs.r.eval(t) + delta;
                terms.q0 = x.norm_squared();
            }
            MarketKind::Cir(c) => {
                terms.p0 = c.r;
                for (i, off) in c.block_offsets().into_iter().enumerate() {
                    let k = c.block_dims[i];
                    let li = lambda.rows(off, k).into_owned();
                    let x = solve(&c.sigma_blocks[i], &(&c.eta[i] + &li))?;
                    terms.p1[i] = sys.blocks[i].support(li.as_slice())?;
                    terms.q1[i] = x.norm_squared();
                    terms.g1[(i, i)] = c.sigma_z[i] * c.rho[i].dot(&x);
                }
            }
            MarketKind::Ou(ou) => {
                let x = &ou.eta + solve(&ou.asset_sigma(t), &lambda)?;
                terms.p0 = ou.w0 + delta;
                terms.p1 = ou.w1.clone();
                terms.q0 = x.norm_squared();
                terms.g0 = &ou.sigma * x;
            }
        }
        Ok(terms)
    }

    /// Generic right-hand side evaluated from the coefficients.
    pub fn rhs(&self, tau: f64, bvec: &[f64]) -> Result<(f64, DVector<f64>)> {
        let b = self.system.b_risk;
        let w = 0.5 * b / (1.0 - b);
        let bv = DVector::from_column_slice(bvec);
        let tr = self.terms(tau, bvec)?;
        let quad = |mat: &DMatrix<f64>| bv.dot(&(mat * &bv));
        let da = b * tr.p0 + self.k0.dot(&bv) + 0.5 * quad(&self.h0)
            + w * (tr.q0 + 2.0 * tr.g0.dot(&bv) + quad(&self.l0hat));
        let m = bv.len();
        let k1b = self.k1.transpose() * &bv;
        let g1b = tr.g1.transpose() * &bv;
        let db = DVector::from_fn(m, |k, _| {
            b * tr.p1[k] + k1b[k] + 0.5 * quad(&self.h1[k]) + w * (tr.q1[k] + 2.0 * g1b[k] + quad(&self.l1hat[k]))
        });
        Ok((da, db))
    }
}

fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::InvalidArgument("volatility matrix is singular".into()))
}

// ---------------------------------------------------------------------------
// Affinity probe
// ---------------------------------------------------------------------------

pub const EAS_QUANTITIES: [&str; 6] = [
    "factor drift mu_z",
    "factor covariance sigma_z sigma_z'",
    "hedging covariance sigma_z rho (sigma_z rho)'",
    "r + delta_K(lambda*)",
    "|Sigma^-1 (mu + lambda* - r 1)|^2",
    "sigma_z rho Sigma^-1 (mu + lambda* - r 1)",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityAffinity {
    pub name: String,
    pub max_second_difference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EasReport {
    pub samples: usize,
    pub threshold: f64,
    pub quantities: Vec<QuantityAffinity>,
    pub pass: bool,
}

impl EasReport {
    pub fn failing(&self) -> impl Iterator<Item = &QuantityAffinity> {
        self.quantities.iter().filter(|q| !q.pass)
    }
}

/// The six quantities at a state, flattened per quantity.
fn eas_quantities(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    t: f64,
    z: &DVector<f64>,
    bvec: &DVector<f64>,
) -> Result<[Vec<f64>; 6]> {
    let st = state_inner(model, set, b_risk, t, z, bvec)?;
    let f = &st.frame;
    let lambda = DVector::from_column_slice(&st.solution.lambda_star);
    let zr = &f.sigma_z * &f.rho;
    let x = solve(&f.sigma, &(f.excess_drift() + &lambda))?;
    let delta = set.support(lambda.as_slice())?;
    Ok([
        f.mu_z.as_slice().to_vec(),
        (&f.sigma_z * f.sigma_z.transpose()).as_slice().to_vec(),
        (&zr * zr.transpose()).as_slice().to_vec(),
        vec![f.r + delta],
        vec![x.norm_squared()],
        (&zr * &x).as_slice().to_vec(),
    ])
}

/// Checks numerically that the six coefficient quantities entering the
/// separable ansatz are affine in `z` on random collinear triples.
pub fn eas_probe(model: &MarketModel, set: &ConstraintSet, b_risk: f64, samples: usize, seed: u64) -> Result<EasReport> {
    if samples < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 samples, got {samples}")));
    }
    validate_risk(b_risk)?;
    check_dim("constraint set vs assets", model.assets(), set.dim())?;
    let m = model.factors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 6];
    for _ in 0..samples {
        let t = rng.random_range(0.0..model.horizon);
        let bvec = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let (z, dz) = match &model.kind {
            MarketKind::Cir(c) => {
                let z = DVector::from_fn(m, |i, _| c.theta[i] * rng.random_range(0.25..2.0));
                let dz = DVector::from_fn(m, |i, _| z[i] * rng.random_range(-0.2..0.45));
                (z, dz)
            }
            _ => (
                DVector::from_fn(m, |_, _| rng.random_range(-0.05..0.05)),
                DVector::from_fn(m, |_, _| rng.random_range(-0.05..0.05)),
            ),
        };
        let q0 = eas_quantities(model, set, b_risk, t, &z, &bvec)?;
        let q1 = eas_quantities(model, set, b_risk, t, &(&z + &dz), &bvec)?;
        let q2 = eas_quantities(model, set, b_risk, t, &(&z + &dz * 2.0), &bvec)?;
        for j in 0..6 {
            let scale = q0[j]
                .iter()
                .chain(&q1[j])
                .chain(&q2[j])
                .fold(1.0f64, |acc, v| acc.max(v.abs()));
            for k in 0..q0[j].len() {
                let sd = (q0[j][k] - 2.0 * q1[j][k] + q2[j][k]).abs() / scale;
                worst[j] = worst[j].max(if sd.is_nan() { f64::INFINITY } else { sd });
            }
        }
    }
    let quantities: Vec<QuantityAffinity> = EAS_QUANTITIES
        .iter()
        .zip(worst)
        .map(|(name, w)| QuantityAffinity {
            name: name.to_string(),
            max_second_difference: w,
            pass: w <= EAS_THRESHOLD,
        })
        .collect();
    let pass = quantities.iter().all(|q| q.pass);
    Ok(EasReport {
        samples,
        threshold: EAS_THRESHOLD,
        quantities,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    #[test]
    fn bs_rhs_examples() {
        let model = testkit::bs_reference();
        let full = ConstraintSet::full_space(1).unwrap();
        let (da, db) = rhs(&model, &full, 0.5, 0.3, 0.0, &[0.0]).unwrap();
        assert!((da - 0.03).abs() < 1e-15);
        assert_eq!(db[0], 0.0);
        let unit = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let (da, _) = rhs(&model, &unit, 0.5, 0.3, 0.0, &[0.0]).unwrap();
        assert!((da - 0.025).abs() < 1e-15);
    }

    #[test]
    fn bs_integration_is_exact_for_constant_rhs() {
        let model = testkit::bs_reference();
        let unit = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let sol = integrate(&model, &unit, 0.5, 64).unwrap();
        assert_eq!(sol.a[0], 0.0);
        assert_eq!(sol.b[0], vec![0.0]);
        assert!((sol.a[64] - 0.025).abs() < 1e-14);
        let p = sol.at(0.37).unwrap();
        assert!((p.a - 0.025 * 0.37).abs() < 1e-15);
        assert!((p.da - 0.025).abs() < 1e-14);
        assert!(sol.at(1.5).is_err());
        assert!(integrate(&model, &unit, 0.5, 4).is_err());
    }

    #[test]
    fn ou_origin_slope_and_closed_form() {
        let model = testkit::ou_single();
        let set = ConstraintSet::full_space(1).unwrap();
        let (_, db) = rhs(&model, &set, 0.5, 0.4, 0.0, &[0.0]).unwrap();
        assert_eq!(db[0], 0.5);
        let sol = integrate(&model, &set, 0.5, 64).unwrap();
        let expected = 0.5 / 0.2 * (1.0 - (-0.2f64).exp());
        assert!((sol.b[64][0] - expected).abs() < 1e-15);
        assert!((expected - 0.453173).abs() < 1e-6);
    }

    #[test]
    fn ou_rk4_b_matches_closed_form() {
        let model = testkit::ou_reference();
        let set = testkit::ou_reference_constraint();
        let sys = RiccatiSystem::new(&model, &set, 0.5).unwrap();
        let sol = integrate_with(&model, &set, 0.5, 1024, OuMode::Rk4).unwrap();
        let err = sol
            .tau
            .iter()
            .zip(&sol.b)
            .map(|(&t, b)| (sys.ou_closed_form_b(t).unwrap() - DVector::from_column_slice(b)).amax())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "sup error {err:e}");
    }

    #[test]
    fn cir_full_space_rhs_matches_formula() {
        let model = testkit::cir_single();
        let set = ConstraintSet::full_space(1).unwrap();
        let b = 0.5;
        let bv = 0.3;
        let (da, db) = rhs(&model, &set, b, 0.2, 0.0, &[bv]).unwrap();
        let (kappa, theta, s, rho, eta) = (2.0, 0.04, 0.3, -0.5, 2.0);
        let chat: f64 = eta + s * bv * rho;
        let expected_db = -kappa * bv + 0.5 * s * s * bv * bv + 0.5 * b / (1.0 - b) * chat * chat;
        assert!((db[0] - expected_db).abs() < 1e-14);
        assert!((da - (b * 0.02 + kappa * theta * bv)).abs() < 1e-15);
    }

    #[test]
    fn generic_form_reproduces_specialized_rhs() {
        let cases = vec![
            (testkit::bs_reference(), ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap(), vec![0.0]),
            (testkit::cir_reference(), testkit::cir_reference_constraint(), vec![0.4, -0.7]),
            (testkit::cir_reference(), ConstraintSet::full_space(3).unwrap(), vec![-0.2, 0.3]),
            (testkit::ou_reference(), testkit::ou_reference_constraint(), vec![0.3, 0.2]),
        ];
        for (model, set, bvec) in cases {
            for b in [0.5, -2.0] {
                let eas = EasCoefficients::for_market(&model, &set, b).unwrap();
                for tau in [0.0, 0.35, 1.0] {
                    let (ga, gb) = eas.rhs(tau, &bvec).unwrap();
                    let (sa, sb) = rhs(&model, &set, b, tau, 0.0, &bvec).unwrap();
                    assert!((ga - sa).abs() <= 1e-12, "{} A: {ga} vs {sa}", model.name());
                    assert!((&gb - &sb).amax() <= 1e-12, "{} B: {gb} vs {sb}", model.name());
                }
            }
        }
    }

    #[test]
    fn probe_passes_on_affine_markets_and_flags_coupled_simplex() {
        let bs = testkit::bs_reference();
        let unit = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let r = eas_probe(&bs, &unit, 0.5, 5, 1).unwrap();
        assert!(r.pass);
        assert!(r.quantities.iter().all(|q| q.max_second_difference == 0.0));

        let cir = testkit::cir_reference();
        let r = eas_probe(&cir, &testkit::cir_reference_constraint(), 0.5, 20, 2).unwrap();
        assert!(r.pass, "{r:?}");

        let ou = testkit::ou_reference();
        let r = eas_probe(&ou, &testkit::ou_reference_constraint(), 0.5, 20, 3).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
