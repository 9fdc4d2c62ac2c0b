//! Value function and optimal feedback controls.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::dual_inner::validate_risk;
use crate::error::{check_dim, Error, Result};
use crate::markets::{MarketKind, MarketModel};
use crate::riccati::{state_inner, RiccatiSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub t: f64,
    pub z: Vec<f64>,
    pub pi_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    /// Value function at unit wealth.
    pub g: f64,
    pub delta_k: f64,
    pub slackness: f64,
}

/// Optimal allocation and dual control at `(t, z)`. The controls do not
/// depend on wealth; `g` is reported at `v = 1`.
pub fn evaluate(
    model: &MarketModel,
    sol: &RiccatiSolution,
    set: &ConstraintSet,
    b_risk: f64,
    t: f64,
    z: &DVector<f64>,
) -> Result<PolicyPoint> {
    validate_risk(b_risk)?;
    let ex = sol.at(model.horizon - t)?;
    let st = state_inner(model, set, b_risk, t, z, &ex.b)?;
    let s = st.solution;
    let delta_k = set.support(&s.lambda_star)?;
    Ok(PolicyPoint {
        t,
        z: z.as_slice().to_vec(),
        g: value(sol, b_risk, t, 1.0, z)?,
        delta_k,
        slackness: s.slackness,
        pi_star: s.pi_star,
        lambda_star: s.lambda_star,
    })
}

/// `G(t, v, z) = v^b / b * exp(A(T - t) + B(T - t)'z)`.
pub fn value(sol: &RiccatiSolution, b_risk: f64, t: f64, v: f64, z: &DVector<f64>) -> Result<f64> {
    validate_risk(b_risk)?;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {v}")));
    }
    check_dim("factor state", sol.factors(), z.len())?;
    let ex = sol.at(sol.horizon() - t)?;
    Ok(v.powf(b_risk) / b_risk * (ex.a + ex.b.dot(z)).exp())
}

/// CRRA utility `v^b / b`.
pub fn utility(v: f64, b_risk: f64) -> f64 {
    v.powf(b_risk) / b_risk
}

/// Whether the optimal controls depend on time only. True for the
/// deterministic-coefficient and bond markets, and for CIR markets whose
/// constraint splits over the factor blocks.
pub fn is_factor_independent(model: &MarketModel, set: &ConstraintSet) -> bool {
    match &model.kind {
        MarketKind::Bs(_) | MarketKind::Ou(_) => true,
        MarketKind::Cir(c) => set.split_blocks(&c.block_dims).is_ok(),
    }
}

/// A portfolio rule `pi(t, v, z)`.
pub trait Strategy: Sync {
    fn allocate(&self, t: f64, v: f64, z: &[f64], out: &mut [f64]);
}

impl<F> Strategy for F
where
    F: Fn(f64, f64, &[f64], &mut [f64]) + Sync,
{
    fn allocate(&self, t: f64, v: f64, z: &[f64], out: &mut [f64]) {
        self(t, v, z, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStrategy(pub Vec<f64>);

impl Strategy for ConstantStrategy {
    fn allocate(&self, _t: f64, _v: f64, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Piecewise-constant function of time on a uniform grid over `[0, T]`:
/// the value on `[t_k, t_{k+1})` is the one tabulated at `t_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTable {
    pub horizon: f64,
    pub values: Vec<Vec<f64>>,
}

impl TimeTable {
    pub fn lookup(&self, t: f64) -> &[f64] {
        let n = self.values.len() - 1;
        let k = ((t / self.horizon * n as f64).floor().max(0.0) as usize).min(n);
        &self.values[k]
    }
}

/// Time-only optimal policy tabulated at `steps + 1` grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPolicy {
    pub pi: TimeTable,
    pub lambda: TimeTable,
}

impl TabulatedPolicy {
    /// Tabulates `pi*` and `lambda*` at `t_k = k T / steps`, evaluated at the
    /// initial factor (the controls are factor independent by assumption).
    pub fn optimal(
        model: &MarketModel,
        sol: &RiccatiSolution,
        set: &ConstraintSet,
        b_risk: f64,
        steps: usize,
    ) -> Result<Self> {
        if !is_factor_independent(model, set) {
            return Err(Error::InvalidArgument(
                "optimal controls depend on the factor; use a feedback policy".into(),
            ));
        }
        let mut pis = Vec::with_capacity(steps + 1);
        let mut lams = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = model.horizon * k as f64 / steps as f64;
            let p = evaluate(model, sol, set, b_risk, t, &model.z0)?;
            pis.push(p.pi_star);
            lams.push(p.lambda_star);
        }
        Ok(TabulatedPolicy {
            pi: TimeTable {
                horizon: model.horizon,
                values: pis,
            },
            lambda: TimeTable {
                horizon: model.horizon,
                values: lams,
            },
        })
    }
}

impl Strategy for TabulatedPolicy {
    fn allocate(&self, t: f64, _v: f64, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.pi.lookup(t));
    }
}

/// Optimal policy solving the inner problem at every queried state.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy<'a> {
    pub model: &'a MarketModel,
    pub sol: &'a RiccatiSolution,
    pub set: &'a ConstraintSet,
    pub b_risk: f64,
}

impl Strategy for FeedbackPolicy<'_> {
    fn allocate(&self, t: f64, _v: f64, z: &[f64], out: &mut [f64]) {
        let z = DVector::from_column_slice(z);
        match evaluate(self.model, self.sol, self.set, self.b_risk, t, &z) {
            Ok(p) => out.copy_from_slice(&p.pi_star),
            // Non-finite output is reported by the simulator with its location.
            Err(_) => out.iter_mut().for_each(|x| *x = f64::NAN),
        }
    }
}

/// Evaluates the policy on the tensor grid `times x states`.
pub fn policy_grid(
    model: &MarketModel,
    sol: &RiccatiSolution,
    set: &ConstraintSet,
    b_risk: f64,
    times: &[f64],
    states: &[DVector<f64>],
) -> Result<Vec<PolicyPoint>> {
    let mut out = Vec::with_capacity(times.len() * states.len());
    for &t in times {
        for z in states {
            out.push(evaluate(model, sol, set, b_risk, t, z)?);
        }
    }
    Ok(out)
}
