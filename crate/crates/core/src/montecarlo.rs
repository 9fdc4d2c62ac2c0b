//! Monte-Carlo simulation of wealth under a given strategy, optionally
//! multiplied by the dual tilt `exp(int lambda'pi + delta_K(lambda) dt)`.
//!
//! Every path (or antithetic pair) draws from its own ChaCha stream selected
//! by `(seed, index)`, results are collected in path order and reduced by
//! pairwise summation, so estimates do not depend on the thread count.
//!
//! Asset drivers are `W_i = rho_i'W^z + sqrt(1 - |rho_i|^2) What_i`. Two
//! assets loading on the same factor are therefore correlated with each
//! other (`rho_i'rho_j`), which the value function does not account for:
//! CIR blocks with more than one asset and non-orthogonal loadings simulate
//! slightly above `G`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::dual_inner::validate_risk;
use crate::error::{check_dim, Error, Result};
use crate::markets::{CoefficientFrame, MarketKind, MarketModel};
use crate::policy::{utility, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Log-Euler wealth, Euler-Maruyama factors.
    EulerLog,
    /// Log-Euler wealth, full-truncation Euler for CIR factors.
    FullTruncationCir,
}

impl Scheme {
    pub fn default_for(model: &MarketModel) -> Self {
        match model.kind {
            MarketKind::Cir(_) => Scheme::FullTruncationCir,
            _ => Scheme::EulerLog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    #[serde(default)]
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 paths, got {}", self.paths)));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("need at least 1 time step".into()));
        }
        if self.antithetic && !self.paths.is_multiple_of(2) {
            return Err(Error::InvalidArgument("antithetic sampling needs an even path count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_utility: f64,
    pub std_error: f64,
    pub mean_terminal_wealth: f64,
    /// Share of factor updates that went negative before truncation.
    pub truncation_fraction: f64,
    pub path_count: usize,
}

/// Dual control `lambda(t, z)`.
pub trait DualControl: Sync {
    fn control(&self, t: f64, z: &[f64], out: &mut [f64]);
}

impl<F> DualControl for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn control(&self, t: f64, z: &[f64], out: &mut [f64]) {
        self(t, z, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantDual(pub Vec<f64>);

impl DualControl for ConstantDual {
    fn control(&self, _t: f64, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Tilt specification for the dual wealth process.
pub struct Tilt<'a> {
    pub control: &'a dyn DualControl,
    pub set: &'a ConstraintSet,
}

/// Statistics plus, optionally, every path's terminal wealth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub result: SimResult,
    pub terminal_wealth: Option<Vec<f64>>,
    /// Per-unit utilities (pair averages when antithetic), in path order.
    pub unit_utilities: Vec<f64>,
}

struct PathOutcome {
    utility: f64,
    wealth: f64,
    truncated: u64,
}

pub fn simulate_wealth<S: Strategy + ?Sized>(
    model: &MarketModel,
    strategy: &S,
    b_risk: f64,
    v0: f64,
    cfg: &SimConfig,
) -> Result<SimResult> {
    Ok(run(model, strategy, None, b_risk, v0, cfg, false)?.result)
}

pub fn simulate_dual_wealth<S: Strategy + ?Sized>(
    model: &MarketModel,
    strategy: &S,
    dual: &dyn DualControl,
    set: &ConstraintSet,
    b_risk: f64,
    v0: f64,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let tilt = Tilt { control: dual, set };
    Ok(run(model, strategy, Some(&tilt), b_risk, v0, cfg, false)?.result)
}

/// General entry point behind [`simulate_wealth`] and [`simulate_dual_wealth`].
pub fn run<S: Strategy + ?Sized>(
    model: &MarketModel,
    strategy: &S,
    tilt: Option<&Tilt>,
    b_risk: f64,
    v0: f64,
    cfg: &SimConfig,
    keep_paths: bool,
) -> Result<SimOutput> {
    cfg.validate()?;
    validate_risk(b_risk)?;
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::Domain(format!("initial wealth must be positive, got {v0}")));
    }
    if let Some(t) = tilt {
        check_dim("dual constraint set", model.assets(), t.set.dim())?;
    }
    let units = if cfg.antithetic { cfg.paths / 2 } else { cfg.paths };
    let per_unit = if cfg.antithetic { 2 } else { 1 };

    let outcomes: Vec<Result<Vec<PathOutcome>>> = (0..units)
        .into_par_iter()
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u as u64);
            let normals = draw_normals(&mut rng, cfg.steps, model.factors() + model.assets());
            (0..per_unit)
                .map(|j| {
                    let sign = if j == 0 { 1.0 } else { -1.0 };
                    simulate_path(model, strategy, tilt, b_risk, v0, cfg, &normals, sign, u * per_unit + j)
                })
                .collect()
        })
        .collect();

    let mut unit_utilities = Vec::with_capacity(units);
    let mut wealth = Vec::with_capacity(cfg.paths);
    let mut truncated = 0u64;
    for o in outcomes {
        let paths = o?;
        unit_utilities.push(pairwise_sum(&paths.iter().map(|p| p.utility).collect::<Vec<_>>()) / per_unit as f64);
        for p in paths {
            wealth.push(p.wealth);
            truncated += p.truncated;
        }
    }
    let (mean_utility, std_error) = mean_and_se(&unit_utilities);
    let updates = (cfg.paths * cfg.steps * model.factors()) as f64;
    let truncation_fraction = match model.kind {
        MarketKind::Cir(_) => truncated as f64 / updates,
        _ => 0.0,
    };
    let result = SimResult {
        mean_utility,
        std_error,
        mean_terminal_wealth: pairwise_sum(&wealth) / wealth.len() as f64,
        truncation_fraction,
        path_count: cfg.paths,
    };
    Ok(SimOutput {
        result,
        terminal_wealth: keep_paths.then_some(wealth),
        unit_utilities,
    })
}

fn draw_normals(rng: &mut ChaCha8Rng, steps: usize, per_step: usize) -> Vec<f64> {
    (0..steps * per_step).map(|_| StandardNormal.sample(rng)).collect()
}

#[allow(clippy::too_many_arguments)]
fn simulate_path<S: Strategy + ?Sized>(
    model: &MarketModel,
    strategy: &S,
    tilt: Option<&Tilt>,
    b_risk: f64,
    v0: f64,
    cfg: &SimConfig,
    normals: &[f64],
    sign: f64,
    path: usize,
) -> Result<PathOutcome> {
    let m = model.factors();
    let d = model.assets();
    let dt = model.horizon / cfg.steps as f64;
    let sq_dt = dt.sqrt();
    let truncate = matches!(model.kind, MarketKind::Cir(_)) && cfg.scheme == Scheme::FullTruncationCir;

    let mut frame = CoefficientFrame::zeros(m, d);
    let mut z: Vec<f64> = model.z0.as_slice().to_vec();
    let mut z_seen = z.clone();
    let mut z_coef = z.clone();
    let mut pi = vec![0.0; d];
    let mut lam = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut log_v = v0.ln();
    let mut tilt_integral = 0.0;
    let mut prev_integrand: Option<f64> = None;
    let mut truncated = 0u64;
    // Idiosyncratic loadings sqrt(1 - |rho_i|^2) are evaluated per step.
    let fail = |step: usize, detail: String| Error::Simulation { path, step, detail };

    let tilt_integrand = |t: f64, z_seen: &[f64], pi: &[f64], lam: &mut [f64]| -> Result<f64> {
        let Some(tl) = tilt else { return Ok(0.0) };
        tl.control.control(t, z_seen, lam);
        let delta = tl.set.support(lam)?;
        if !delta.is_finite() {
            return Err(Error::InadmissibleDual { t, path });
        }
        Ok(lam.iter().zip(pi).map(|(l, p)| l * p).sum::<f64>() + delta)
    };

    for step in 0..cfg.steps {
        let t = step as f64 * dt;
        z_seen.copy_from_slice(&z);
        model.clamp_state(&mut z_seen);
        z_coef.copy_from_slice(&z);
        if truncate {
            z_coef.iter_mut().for_each(|x| *x = x.max(0.0));
        } else if matches!(model.kind, MarketKind::Cir(_)) && z.iter().any(|&x| x < 0.0) {
            return Err(fail(step, format!("CIR factor became negative: {z:?}")));
        }
        model.fill_frame(t, &z_coef, &mut frame);
        strategy.allocate(t, log_v.exp(), &z_seen, &mut pi);
        if pi.iter().any(|x| !x.is_finite()) {
            return Err(fail(step, format!("strategy returned {pi:?}")));
        }

        let f_now = match prev_integrand {
            Some(f) => f,
            None => tilt_integrand(t, &z_seen, &pi, &mut lam)?,
        };

        let eps = &normals[step * (m + d)..(step + 1) * (m + d)];
        let (ez, ei) = eps.split_at(m);
        for i in 0..d {
            let col = frame.rho.column(i);
            let loading = (1.0 - col.norm_squared()).max(0.0).sqrt();
            let mut w = loading * ei[i];
            for k in 0..m {
                w += col[k] * ez[k];
            }
            dw[i] = sign * w * sq_dt;
        }

        let piv = DVector::from_column_slice(&pi);
        let vol = frame.sigma.transpose() * &piv;
        let excess = frame.excess_drift();
        let drift = frame.r + excess.dot(&piv) - 0.5 * vol.norm_squared();
        let noise: f64 = vol.iter().zip(&dw).map(|(a, b)| a * b).sum();
        log_v += drift * dt + noise;

        // Factor update (diffusion sigma_z dW^z).
        for i in 0..m {
            let mut inc = frame.mu_z[i] * dt;
            for k in 0..m {
                inc += frame.sigma_z[(i, k)] * sign * ez[k] * sq_dt;
            }
            z[i] += inc;
            if truncate && z[i] < 0.0 {
                truncated += 1;
            }
        }

        if !log_v.is_finite() || z.iter().any(|x| !x.is_finite()) {
            return Err(fail(step, format!("log wealth {log_v}, factor {z:?}")));
        }

        if tilt.is_some() {
            let t1 = (step + 1) as f64 * dt;
            z_seen.copy_from_slice(&z);
            model.clamp_state(&mut z_seen);
            strategy.allocate(t1, log_v.exp(), &z_seen, &mut pi);
            let f_next = tilt_integrand(t1, &z_seen, &pi, &mut lam)?;
            tilt_integral += 0.5 * (f_now + f_next) * dt;
            prev_integrand = Some(f_next);
        }
    }

    let wealth = (log_v + tilt_integral).exp();
    let u = utility(wealth, b_risk);
    if !u.is_finite() {
        return Err(fail(cfg.steps, format!("terminal utility {u} at wealth {wealth}")));
    }
    Ok(PathOutcome {
        utility: u,
        wealth,
        truncated,
    })
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and its standard error, computed on data shifted by the first
/// observation so that identical observations give exactly zero error.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let x0 = x[0];
    let shifted: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let ms = pairwise_sum(&shifted) / n as f64;
    if n < 2 {
        return (x0 + ms, f64::NAN);
    }
    let sq: Vec<f64> = shifted.iter().map(|v| (v - ms) * (v - ms)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (x0 + ms, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ConstantStrategy;
    use crate::testkit;

    fn cfg(paths: usize, steps: usize) -> SimConfig {
        SimConfig {
            paths,
            steps,
            seed: 7,
            scheme: Scheme::EulerLog,
            antithetic: false,
        }
    }

    #[test]
    fn riskless_portfolio_has_no_variance() {
        let model = testkit::bs_reference();
        let r = simulate_wealth(&model, &ConstantStrategy(vec![0.0]), 0.5, 1.0, &cfg(1000, 252)).unwrap();
        assert_eq!(r.std_error, 0.0);
        assert!((r.mean_utility - 2.0 * 0.01f64.exp()).abs() < 1e-13);
        assert!((r.mean_terminal_wealth - 0.02f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn zero_tilt_is_bit_identical() {
        let model = testkit::bs_reference();
        let set = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let s = ConstantStrategy(vec![0.7]);
        let c = cfg(500, 20);
        let plain = simulate_wealth(&model, &s, 0.5, 1.0, &c).unwrap();
        let dual = simulate_dual_wealth(&model, &s, &ConstantDual(vec![0.0]), &set, 0.5, 1.0, &c).unwrap();
        assert_eq!(plain, dual);
        // Slackness makes the tilt vanish at the optimum.
        let s1 = ConstantStrategy(vec![1.0]);
        let plain = simulate_wealth(&model, &s1, 0.5, 1.0, &c).unwrap();
        let dual = simulate_dual_wealth(&model, &s1, &ConstantDual(vec![-0.02]), &set, 0.5, 1.0, &c).unwrap();
        assert!((plain.mean_utility - dual.mean_utility).abs() < 1e-14);
    }

    #[test]
    fn constant_tilt_scales_wealth() {
        let model = testkit::bs_reference();
        let set = ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap();
        let s = ConstantStrategy(vec![0.5]);
        let c = cfg(200, 10);
        let plain = run(&model, &s, None, 0.5, 1.0, &c, true).unwrap();
        let dual = ConstantDual(vec![0.01]);
        let tilt = Tilt { control: &dual, set: &set };
        let tilted = run(&model, &s, Some(&tilt), 0.5, 1.0, &c, true).unwrap();
        for (a, b) in plain.terminal_wealth.unwrap().iter().zip(tilted.terminal_wealth.unwrap()) {
            assert!((b / a - 0.005f64.exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn inadmissible_dual_is_reported() {
        let model = testkit::bs_reference();
        let set = ConstraintSet::orthant(1).unwrap();
        let err = simulate_dual_wealth(
            &model,
            &ConstantStrategy(vec![0.5]),
            &ConstantDual(vec![-0.1]),
            &set,
            0.5,
            1.0,
            &cfg(4, 3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InadmissibleDual { t, .. } if t == 0.0));
    }

    #[test]
    fn non_finite_strategy_names_the_step() {
        let model = testkit::bs_reference();
        let bad = |t: f64, _v: f64, _z: &[f64], out: &mut [f64]| out[0] = if t > 0.5 { f64::NAN } else { 0.5 };
        match simulate_wealth(&model, &bad, 0.5, 1.0, &cfg(4, 10)) {
            Err(Error::Simulation { step, .. }) => assert_eq!(step, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let model = testkit::bs_reference();
        let s = ConstantStrategy(vec![0.5]);
        assert!(simulate_wealth(&model, &s, 0.5, 1.0, &cfg(1, 10)).is_err());
        assert!(simulate_wealth(&model, &s, 0.5, 1.0, &cfg(2, 0)).is_err());
        let mut c = cfg(3, 2);
        c.antithetic = true;
        assert!(simulate_wealth(&model, &s, 0.5, 1.0, &c).is_err());
        assert!(simulate_wealth(&model, &s, 0.5, -1.0, &cfg(2, 2)).is_err());
        // Two paths are enough for an estimate.
        assert!(simulate_wealth(&model, &s, 0.5, 1.0, &cfg(2, 2)).unwrap().std_error.is_finite());
    }

    #[test]
    fn cir_factors_stay_nonnegative_under_full_truncation() {
        let model = testkit::cir_reference();
        let mut c = cfg(2000, 252);
        c.scheme = Scheme::FullTruncationCir;
        let r = simulate_wealth(&model, &ConstantStrategy(vec![0.3, 0.3, 0.3]), 0.5, 1.0, &c).unwrap();
        assert!(r.truncation_fraction <= 0.02);
        assert!(r.mean_utility.is_finite());
    }
}
