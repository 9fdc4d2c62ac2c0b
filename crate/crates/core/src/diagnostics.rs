//! Verification battery: PDE residuals in primal and dual form, slackness
//! sweeps, dominance over constant strategies and weak-duality spot checks.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::dual_inner::validate_risk;
use crate::error::{check_dim, Error, Result};
use crate::markets::{MarketKind, MarketModel};
use crate::montecarlo::{mean_and_se, run, ConstantDual, DualControl, SimConfig, SimOutput, SimResult, Tilt};
use crate::policy::{evaluate, is_factor_independent, utility, value, ConstantStrategy, FeedbackPolicy, TabulatedPolicy, TimeTable};
use crate::riccati::{state_inner, RiccatiSolution};

/// Required agreement between the primal and dual PDE forms.
pub const PRIMAL_DUAL_TOL: f64 = 1e-9;
pub const SLACKNESS_TOL: f64 = 1e-8;
/// Multiple of the combined standard error used by the Monte-Carlo checks.
pub const SE_MULTIPLE: f64 = 3.0;

/// Random states `(t, z)` inside the market's domain.
pub fn random_states(model: &MarketModel, n: usize, seed: u64) -> Vec<(f64, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = model.factors();
    (0..n)
        .map(|_| {
            let t = rng.random_range(0.0..model.horizon);
            let z = match &model.kind {
                MarketKind::Bs(_) => DVector::zeros(1),
                MarketKind::Cir(c) => DVector::from_fn(m, |i, _| c.theta[i] * rng.random_range(0.1..3.0)),
                MarketKind::Ou(ou) => DVector::from_fn(m, |i, _| ou.theta[i] + rng.random_range(-0.05..0.05)),
            };
            (t, z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub points: Vec<(f64, Vec<f64>)>,
    /// Primal PDE residual divided by `|G|` at unit wealth.
    pub residual: Vec<f64>,
    /// Dual (min-max) PDE residual divided by `|G|`.
    pub dual_residual: Vec<f64>,
    pub max_abs_rel: f64,
    pub max_primal_dual_gap: f64,
    /// `|G(T, 1, z0) - U(1)| / |U(1)|`.
    pub terminal_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Evaluates both PDE forms with the separable derivatives of `G`.
pub fn hjb_residual(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    sol: &RiccatiSolution,
    points: &[(f64, DVector<f64>)],
    threshold: f64,
) -> Result<ResidualReport> {
    validate_risk(b_risk)?;
    check_dim("Riccati solution factors", model.factors(), sol.factors())?;
    let b = b_risk;
    let mut residual = Vec::with_capacity(points.len());
    let mut dual_residual = Vec::with_capacity(points.len());
    for (t, z) in points {
        let ex = sol.at(model.horizon - t)?;
        let g = (ex.a + ex.b.dot(z)).exp() / b;
        let g_t = -(ex.da + ex.db.dot(z)) * g;
        let g_v = b * g;
        let g_vv = b * (b - 1.0) * g;
        let grad_z = &ex.b * g;
        let hess_z: DMatrix<f64> = &ex.b * ex.b.transpose() * g;
        let grad_zv = &ex.b * (b * g);

        let st = state_inner(model, set, b, *t, z, &ex.b)?;
        let f = &st.frame;
        let excess = f.excess_drift();
        let cross = &f.sigma * f.rho.transpose() * f.sigma_z.transpose();
        let factor_terms = g_t + f.mu_z.dot(&grad_z) + 0.5 * (&f.sigma_z * f.sigma_z.transpose()).dot(&hess_z);

        let pi = DVector::from_column_slice(&st.solution.pi_star);
        let hamiltonian = |pi: &DVector<f64>, shift: &DVector<f64>| {
            g_v * (f.r + pi.dot(&(&excess + shift)))
                + 0.5 * g_vv * (f.sigma.transpose() * pi).norm_squared()
                + pi.dot(&(&cross * &grad_zv))
        };
        let zero = DVector::zeros(pi.len());
        let primal = factor_terms + hamiltonian(&pi, &zero);

        let lam = DVector::from_column_slice(&st.solution.lambda_star);
        let cov = &f.sigma * f.sigma.transpose();
        let pi_lam = cov
            .lu()
            .solve(&(&st.c + &lam))
            .ok_or_else(|| Error::InvalidArgument("Sigma is singular".into()))?
            / (1.0 - b);
        let delta = set.support(lam.as_slice())?;
        let dual = factor_terms + delta * g_v + hamiltonian(&pi_lam, &lam);

        residual.push(primal / g.abs());
        dual_residual.push(dual / g.abs());
    }
    let u1 = utility(1.0, b);
    let terminal_residual = (value(sol, b, model.horizon, 1.0, &model.z0)? - u1).abs() / u1.abs();
    let max_gap = residual
        .iter()
        .zip(&dual_residual)
        .map(|(p, d)| (p - d).abs())
        .fold(0.0, nan_max);
    let max_abs_rel = residual.iter().map(|r| r.abs()).fold(terminal_residual, nan_max);
    Ok(ResidualReport {
        points: points.iter().map(|(t, z)| (*t, z.as_slice().to_vec())).collect(),
        pass: max_abs_rel <= threshold && max_gap <= PRIMAL_DUAL_TOL,
        residual,
        dual_residual,
        max_abs_rel,
        max_primal_dual_gap: max_gap,
        terminal_residual,
        threshold,
    })
}

fn nan_max(acc: f64, x: f64) -> f64 {
    if x.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.max(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlacknessReport {
    pub states: usize,
    pub max_abs_slackness: f64,
    pub all_feasible: bool,
    pub threshold: f64,
    pub pass: bool,
}

/// `|delta_K(lambda*) + pi*'lambda*|` over random states via the policy.
pub fn slackness_sweep(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    sol: &RiccatiSolution,
    states: usize,
    seed: u64,
) -> Result<SlacknessReport> {
    let mut worst = 0.0f64;
    let mut feasible = true;
    for (t, z) in random_states(model, states, seed) {
        let p = evaluate(model, sol, set, b_risk, t, &z)?;
        let s = p.delta_k + p.pi_star.iter().zip(&p.lambda_star).map(|(a, b)| a * b).sum::<f64>();
        worst = nan_max(worst, s.abs());
        feasible &= set.contains(&p.pi_star)?;
    }
    Ok(SlacknessReport {
        states,
        max_abs_slackness: worst,
        all_feasible: feasible,
        threshold: SLACKNESS_TOL,
        pass: feasible && worst <= SLACKNESS_TOL,
    })
}

/// Optimal strategy: tabulated in time when possible, feedback otherwise.
fn optimal_output(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    sol: &RiccatiSolution,
    tilt: Option<&Tilt>,
    v0: f64,
    cfg: &SimConfig,
) -> Result<SimOutput> {
    if is_factor_independent(model, set) {
        let pol = TabulatedPolicy::optimal(model, sol, set, b_risk, cfg.steps)?;
        run(model, &pol, tilt, b_risk, v0, cfg, false)
    } else {
        let pol = FeedbackPolicy {
            model,
            sol,
            set,
            b_risk,
        };
        run(model, &pol, tilt, b_risk, v0, cfg, false)
    }
}

/// Monte-Carlo estimate of the expected utility under the optimal policy.
pub fn simulate_optimal(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    sol: &RiccatiSolution,
    v0: f64,
    cfg: &SimConfig,
) -> Result<SimResult> {
    Ok(optimal_output(model, set, b_risk, sol, None, v0, cfg)?.result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceEntry {
    pub strategy: Vec<f64>,
    pub mean_utility: f64,
    pub std_error: f64,
    /// Estimate of the strategy minus estimate of the optimum.
    pub excess: f64,
    pub combined_se: f64,
    /// Standard error of the path-wise difference (common random numbers).
    pub paired_se: f64,
    pub dominates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub optimal: SimResult,
    pub entries: Vec<DominanceEntry>,
    pub pass: bool,
}

pub fn dominance_check(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    sol: &RiccatiSolution,
    strategies: &[Vec<f64>],
    v0: f64,
    cfg: &SimConfig,
) -> Result<DominanceReport> {
    for s in strategies {
        if !set.contains(s)? {
            return Err(Error::InvalidArgument(format!("comparison strategy {s:?} is not in K")));
        }
    }
    let best = optimal_output(model, set, b_risk, sol, None, v0, cfg)?;
    let mut entries = Vec::with_capacity(strategies.len());
    for s in strategies {
        let out = run(model, &ConstantStrategy(s.clone()), None, b_risk, v0, cfg, false)?;
        entries.push(compare(s.clone(), &out, &best));
    }
    Ok(DominanceReport {
        pass: entries.iter().all(|e| !e.dominates),
        optimal: best.result,
        entries,
    })
}

fn compare(strategy: Vec<f64>, out: &SimOutput, best: &SimOutput) -> DominanceEntry {
    let diffs: Vec<f64> = out
        .unit_utilities
        .iter()
        .zip(&best.unit_utilities)
        .map(|(a, b)| a - b)
        .collect();
    let (_, paired_se) = mean_and_se(&diffs);
    let excess = out.result.mean_utility - best.result.mean_utility;
    let combined_se = out.result.std_error.hypot(best.result.std_error);
    DominanceEntry {
        strategy,
        mean_utility: out.result.mean_utility,
        std_error: out.result.std_error,
        excess,
        combined_se,
        paired_se,
        dominates: excess > SE_MULTIPLE * combined_se,
    }
}

/// Dual control used in a weak-duality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualChoice {
    Constant(Vec<f64>),
    /// The optimal multiplier `lambda*(t)`.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityEntry {
    pub dual: DualChoice,
    pub dual_mean: f64,
    pub dual_se: f64,
    pub combined_se: f64,
    /// `dual >= primal - 3 SE`.
    pub holds: bool,
    /// `|dual - primal| <= 3 SE`.
    pub matches_primal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: SimResult,
    pub entries: Vec<DualityEntry>,
    pub pass: bool,
}

struct TableDual(TimeTable);

impl DualControl for TableDual {
    fn control(&self, t: f64, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.0.lookup(t));
    }
}

/// For each dual control, simulates the tilted wealth under the maximizer of
/// the correspondingly shifted unconstrained market and compares with the
/// primal estimate. Requires time-only controls (deterministic-coefficient
/// and bond markets).
pub fn weak_duality_check(
    model: &MarketModel,
    set: &ConstraintSet,
    b_risk: f64,
    sol: &RiccatiSolution,
    duals: &[DualChoice],
    v0: f64,
    cfg: &SimConfig,
) -> Result<DualityReport> {
    if let MarketKind::Cir(_) = model.kind {
        return Err(Error::InvalidArgument(
            "weak-duality check needs factor-independent dual controls; not available for CIR".into(),
        ));
    }
    let optimal = TabulatedPolicy::optimal(model, sol, set, b_risk, cfg.steps)?;
    let primal = run(model, &optimal, None, b_risk, v0, cfg, false)?;
    let mut entries = Vec::with_capacity(duals.len());
    for choice in duals {
        let table = match choice {
            DualChoice::Constant(l) => {
                check_dim("dual control", model.assets(), l.len())?;
                if !set.support(l)?.is_finite() {
                    return Err(Error::InvalidArgument(format!("dual control {l:?} is inadmissible")));
                }
                TimeTable {
                    horizon: model.horizon,
                    values: vec![l.clone(); cfg.steps + 1],
                }
            }
            DualChoice::Optimal => optimal.lambda.clone(),
        };
        let pi_lambda = shifted_maximizer(model, sol, b_risk, &table, cfg.steps)?;
        let control: Box<dyn DualControl> = match choice {
            DualChoice::Constant(l) => Box::new(ConstantDual(l.clone())),
            DualChoice::Optimal => Box::new(TableDual(table)),
        };
        let tilt = Tilt {
            control: control.as_ref(),
            set,
        };
        let out = run(model, &pi_lambda, Some(&tilt), b_risk, v0, cfg, false)?;
        let combined_se = out.result.std_error.hypot(primal.result.std_error);
        let diff = out.result.mean_utility - primal.result.mean_utility;
        entries.push(DualityEntry {
            dual: choice.clone(),
            dual_mean: out.result.mean_utility,
            dual_se: out.result.std_error,
            combined_se,
            holds: diff >= -SE_MULTIPLE * combined_se,
            matches_primal: diff.abs() <= SE_MULTIPLE * combined_se,
        });
    }
    Ok(DualityReport {
        pass: entries.iter().all(|e| e.holds),
        primal: primal.result,
        entries,
    })
}

/// `pi_lambda(t) = (Sigma Sigma')^{-1} [mu - r1 + lambda + Sigma rho' sigma_z' B] / (1 - b)`
/// tabulated on the simulation grid.
fn shifted_maximizer(
    model: &MarketModel,
    sol: &RiccatiSolution,
    b_risk: f64,
    lambda: &TimeTable,
    steps: usize,
) -> Result<TabulatedPolicy> {
    let mut values = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = model.horizon * k as f64 / steps as f64;
        let ex = sol.at(model.horizon - t)?;
        let f = model.coeffs(t, &model.z0)?;
        let rhs = f.effective_drift(&ex.b) + DVector::from_column_slice(lambda.lookup(t));
        let pi = (&f.sigma * f.sigma.transpose())
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("Sigma is singular".into()))?
            / (1.0 - b_risk);
        values.push(pi.as_slice().to_vec());
    }
    Ok(TabulatedPolicy {
        pi: TimeTable {
            horizon: model.horizon,
            values,
        },
        lambda: lambda.clone(),
    })
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "HJB residual: {} ({} points, max |residual|/|G| = {:.3e}, terminal {:.3e}, primal/dual gap {:.3e}, threshold {:.1e})",
            verdict(self.pass),
            self.points.len(),
            self.max_abs_rel,
            self.terminal_residual,
            self.max_primal_dual_gap,
            self.threshold
        )
    }
}

impl fmt::Display for SlacknessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slackness sweep: {} ({} states, max {:.3e}, threshold {:.1e})",
            verdict(self.pass),
            self.states,
            self.max_abs_slackness,
            self.threshold
        )
    }
}

impl fmt::Display for DominanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let worst = self
            .entries
            .iter()
            .map(|e| e.excess / e.combined_se.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        write!(
            f,
            "dominance: {} ({} strategies, largest excess {:.2} SE)",
            verdict(self.pass),
            self.entries.len(),
            worst
        )
    }
}

impl fmt::Display for DualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let held = self.entries.iter().filter(|e| e.holds).count();
        write!(
            f,
            "weak duality: {} ({held}/{} dual controls satisfy dual >= primal - 3 SE)",
            verdict(self.pass),
            self.entries.len()
        )
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
