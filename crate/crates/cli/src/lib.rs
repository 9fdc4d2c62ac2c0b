//! Experiment pipelines behind the `portfolio-dual` binary: JSON configs in,
//! CSV/JSON artifacts out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use portfolio_dual::diagnostics::{
    dominance_check, hjb_residual, random_states, slackness_sweep, weak_duality_check, DualChoice,
};
use portfolio_dual::markets::ValidationReport;
use portfolio_dual::montecarlo::{run, Scheme, SimConfig, SimResult};
use portfolio_dual::policy::{evaluate, is_factor_independent, policy_grid, value, FeedbackPolicy, TabulatedPolicy};
use portfolio_dual::riccati::{eas_probe, integrate, RiccatiSolution};
use portfolio_dual::{ConstraintSet, MarketKind, MarketModel, MarketSpec};

pub const RICCATI_SCHEMA: &str = "portfolio-dual/riccati/v1";
pub const POLICY_SCHEMA: &str = "portfolio-dual/policy_grid/v1";
pub const PATHS_SCHEMA: &str = "portfolio-dual/paths/v1";
pub const SUMMARY_SCHEMA: &str = "portfolio-dual/summary/v1";
pub const SIM_SCHEMA: &str = "portfolio-dual/sim/v1";
pub const VERIFY_SCHEMA: &str = "portfolio-dual/verify/v1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("malformed config: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] portfolio_dual::Error),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 0 ok, 1 other, 2 validation / malformed input, 3 ODE blow-up,
    /// 4 simulation failure, 5 verification failed.
    pub fn exit_code(&self) -> i32 {
        use portfolio_dual::Error as E;
        match self {
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::VerifyFailed(_) => 5,
            CliError::Io { .. } | CliError::Other(_) => 1,
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. }
                | E::InvalidArgument(_)
                | E::Domain(_)
                | E::InvalidModel(_)
                | E::InvalidConstraint(_)
                | E::NotSeparable(_) => 2,
                E::FiniteEscape { .. } => 3,
                E::Simulation { .. } | E::InadmissibleDual { .. } => 4,
                E::Convergence { .. } | E::InternalConsistency(_) | E::UnsupportedDimension(_) => 1,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Validation(_) => "validation",
            CliError::VerifyFailed(_) => "verify_failed",
            CliError::Io { .. } => "io",
            CliError::Other(_) => "other",
            CliError::Core(e) => match self.exit_code() {
                3 => "blow_up",
                4 => "simulation",
                2 => "validation",
                _ => match e {
                    portfolio_dual::Error::Convergence { .. } => "convergence",
                    _ => "internal",
                },
            },
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() } })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn default_v0() -> f64 {
    1.0
}
fn default_riccati_steps() -> usize {
    1024
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

/// Monte-Carlo settings; the scheme defaults to the market's natural one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub paths: usize,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    /// Number of equally spaced times in `[0, T]`.
    pub times: usize,
    /// Factor states; defaults to a few states around `z0`.
    pub states: Option<Vec<Vec<f64>>>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings { times: 11, states: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub residual_points: usize,
    pub residual_threshold: f64,
    pub slackness_states: usize,
    pub eas_samples: usize,
    /// Number of constant comparison strategies.
    pub dominance_strategies: usize,
    pub random_duals: usize,
    /// Monte-Carlo size of the dominance and duality checks.
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            residual_points: 100,
            residual_threshold: 1e-6,
            slackness_states: 1000,
            eas_samples: 64,
            dominance_strategies: 21,
            random_duals: 5,
            paths: 20_000,
            steps: 52,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSpec,
    pub constraint: ConstraintSet,
    pub b_risk: f64,
    pub horizon: f64,
    #[serde(default = "default_v0")]
    pub v0: f64,
    #[serde(default = "default_riccati_steps")]
    pub riccati_steps: usize,
    pub sim: SimSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.outputs = out.clone();
        }
        if let Some(s) = o.seed {
            self.sim.seed = s;
            self.verify.seed = s;
        }
        if let Some(p) = o.paths {
            self.sim.paths = p;
        }
        if let Some(s) = o.steps {
            self.sim.steps = s;
        }
    }

    pub fn sim_config(&self, model: &MarketModel) -> SimConfig {
        SimConfig {
            paths: self.sim.paths,
            steps: self.sim.steps,
            seed: self.sim.seed,
            scheme: self.sim.scheme.unwrap_or_else(|| Scheme::default_for(model)),
            antithetic: self.sim.antithetic,
        }
    }

    fn verify_sim_config(&self, model: &MarketModel) -> SimConfig {
        SimConfig {
            paths: self.verify.paths,
            steps: self.verify.steps,
            seed: self.verify.seed,
            scheme: self.sim.scheme.unwrap_or_else(|| Scheme::default_for(model)),
            antithetic: false,
        }
    }
}

/// Model, constraint and validation verdict of a config.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: MarketModel,
    pub set: ConstraintSet,
    pub validation: ValidationReport,
}

impl Experiment {
    /// Builds the model and rejects invalid parameters.
    pub fn prepare(config: ExperimentConfig) -> CliResult<Self> {
        let b = config.b_risk;
        if !(b < 1.0) || b == 0.0 || !b.is_finite() {
            return Err(CliError::Validation(format!("b_risk must satisfy b < 1, b != 0; got {b}")));
        }
        if !(config.horizon > 0.0) || !config.horizon.is_finite() {
            return Err(CliError::Validation(format!("horizon must be positive, got {}", config.horizon)));
        }
        if !(config.v0 > 0.0) || !config.v0.is_finite() {
            return Err(CliError::Validation(format!("v0 must be positive, got {}", config.v0)));
        }
        let model = config.market.build(config.horizon)?;
        let set = config.constraint.clone();
        if set.dim() != model.assets() {
            return Err(CliError::Validation(format!(
                "constraint has dimension {} but the market trades {} assets",
                set.dim(),
                model.assets()
            )));
        }
        let validation = model.validate();
        if !validation.passed() {
            let msg: Vec<String> = validation.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            return Err(CliError::Validation(msg.join("; ")));
        }
        Ok(Experiment {
            config,
            model,
            set,
            validation,
        })
    }

    pub fn solve(&self) -> CliResult<RiccatiSolution> {
        Ok(integrate(&self.model, &self.set, self.config.b_risk, self.config.riccati_steps)?)
    }

    pub fn value(&self, sol: &RiccatiSolution) -> CliResult<f64> {
        Ok(value(sol, self.config.b_risk, 0.0, self.config.v0, &self.model.z0)?)
    }

    fn grid_states(&self) -> CliResult<Vec<DVector<f64>>> {
        let m = self.model.factors();
        if let Some(states) = &self.config.grid.states {
            return states
                .iter()
                .map(|s| {
                    if s.len() != m {
                        Err(CliError::Validation(format!("grid state {s:?} needs {m} entries")))
                    } else {
                        Ok(DVector::from_vec(s.clone()))
                    }
                })
                .collect();
        }
        let z0 = &self.model.z0;
        Ok(match self.model.kind {
            MarketKind::Bs(_) => vec![z0.clone()],
            MarketKind::Cir(_) => [0.5, 1.0, 2.0].iter().map(|s| z0 * *s).collect(),
            MarketKind::Ou(_) => [-0.01, 0.0, 0.01].iter().map(|s| z0.add_scalar(*s)).collect(),
        })
    }
}

/// In-memory results of `solve`.
pub struct SolveOutcome {
    pub solution: RiccatiSolution,
    pub value: f64,
    pub summary: serde_json::Value,
    pub riccati_csv: String,
    pub policy_csv: String,
}

pub fn solve(exp: &Experiment) -> CliResult<SolveOutcome> {
    let cfg = &exp.config;
    let sol = exp.solve()?;
    let g = exp.value(&sol)?;
    let end = sol.at(cfg.horizon)?;
    let p0 = evaluate(&exp.model, &sol, &exp.set, cfg.b_risk, 0.0, &exp.model.z0)?;

    let n = cfg.grid.times.max(2);
    let times: Vec<f64> = (0..n).map(|k| cfg.horizon * k as f64 / (n - 1) as f64).collect();
    let grid = policy_grid(&exp.model, &sol, &exp.set, cfg.b_risk, &times, &exp.grid_states()?)?;

    let m = exp.model.factors();
    let d = exp.model.assets();
    let mut header = vec!["tau".to_string(), "A".to_string()];
    header.extend((1..=m).map(|i| format!("B_{i}")));
    header.push("dA".into());
    header.extend((1..=m).map(|i| format!("dB_{i}")));
    let rows = (0..sol.tau.len()).map(|k| {
        let mut row = vec![sol.tau[k], sol.a[k]];
        row.extend(&sol.b[k]);
        row.push(sol.da[k]);
        row.extend(&sol.db[k]);
        row
    });
    let riccati_csv = csv_text(RICCATI_SCHEMA, &header, rows)?;

    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("z_{i}")));
    header.extend((1..=d).map(|i| format!("pi_{i}")));
    header.extend((1..=d).map(|i| format!("lambda_{i}")));
    header.extend(["G", "delta_K", "slackness"].map(String::from));
    let rows = grid.iter().map(|p| {
        let mut row = vec![p.t];
        row.extend(&p.z);
        row.extend(&p.pi_star);
        row.extend(&p.lambda_star);
        row.extend([p.g, p.delta_k, p.slackness]);
        row
    });
    let policy_csv = csv_text(POLICY_SCHEMA, &header, rows)?;

    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "market": exp.model.name(),
        "assets": d,
        "factors": m,
        "b_risk": cfg.b_risk,
        "horizon": cfg.horizon,
        "v0": cfg.v0,
        "z0": exp.model.z0.as_slice(),
        "riccati_steps": cfg.riccati_steps,
        "A_T": end.a,
        "B_T": end.b.as_slice(),
        "value": g,
        "pi_0": p0.pi_star,
        "lambda_0": p0.lambda_star,
        "max_lambda_jump": sol.max_lambda_jump,
        "validation": exp.validation,
    });
    Ok(SolveOutcome {
        solution: sol,
        value: g,
        summary,
        riccati_csv,
        policy_csv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: String,
    pub market: String,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub antithetic: bool,
    pub v0: f64,
    #[serde(flatten)]
    pub result: SimResult,
    /// `G(0, v0, z0)` from the Riccati solution.
    pub value: f64,
    /// `(mean utility - G) / std error`; absent when the error is zero.
    pub z_score: Option<f64>,
}

pub struct SimulateOutcome {
    pub report: SimReport,
    pub terminal_wealth: Option<Vec<f64>>,
}

/// Simulates wealth under the optimal policy.
pub fn simulate(exp: &Experiment, sol: &RiccatiSolution, keep_paths: bool) -> CliResult<SimulateOutcome> {
    let cfg = &exp.config;
    let sim = cfg.sim_config(&exp.model);
    let g = exp.value(sol)?;
    let out = if is_factor_independent(&exp.model, &exp.set) {
        let pol = TabulatedPolicy::optimal(&exp.model, sol, &exp.set, cfg.b_risk, sim.steps)?;
        run(&exp.model, &pol, None, cfg.b_risk, cfg.v0, &sim, keep_paths)?
    } else {
        let pol = FeedbackPolicy {
            model: &exp.model,
            sol,
            set: &exp.set,
            b_risk: cfg.b_risk,
        };
        run(&exp.model, &pol, None, cfg.b_risk, cfg.v0, &sim, keep_paths)?
    };
    let r = out.result;
    let diff = r.mean_utility - g;
    let z_score = if r.std_error > 0.0 {
        Some(diff / r.std_error)
    } else if diff == 0.0 {
        Some(0.0)
    } else {
        None
    };
    Ok(SimulateOutcome {
        report: SimReport {
            schema: SIM_SCHEMA.into(),
            market: exp.model.name().into(),
            paths: sim.paths,
            steps: sim.steps,
            seed: sim.seed,
            scheme: sim.scheme,
            antithetic: sim.antithetic,
            v0: cfg.v0,
            result: r,
            value: g,
            z_score,
        },
        terminal_wealth: out.terminal_wealth,
    })
}

pub fn paths_csv(wealth: &[f64]) -> CliResult<String> {
    csv_text(
        PATHS_SCHEMA,
        &["path".to_string(), "terminal_wealth".to_string()],
        wealth.iter().enumerate().map(|(i, w)| vec![i as f64, *w]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "N/A")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub report: serde_json::Value,
}

impl CheckOutcome {
    fn from_report<R: Serialize + std::fmt::Display>(name: &str, pass: bool, report: &R) -> Self {
        CheckOutcome {
            name: name.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail: report.to_string(),
            report: serde_json::to_value(report).unwrap_or(serde_json::Value::Null),
        }
    }

    fn skipped(name: &str, why: String) -> Self {
        CheckOutcome {
            name: name.into(),
            status: Status::NotApplicable,
            detail: why,
            report: serde_json::Value::Null,
        }
    }

    fn failed(name: &str, err: &dyn std::fmt::Display) -> Self {
        CheckOutcome {
            name: name.into(),
            status: Status::Fail,
            detail: err.to_string(),
            report: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub market: String,
    pub a_shift: f64,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failing(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

/// Runs the verification battery. `a_shift` corrupts the `A` exponent to
/// exercise the residual check.
pub fn verify(exp: &Experiment, a_shift: f64) -> CliResult<VerifyReport> {
    let cfg = &exp.config;
    let v = &cfg.verify;
    let b = cfg.b_risk;
    let (model, set) = (&exp.model, &exp.set);
    let mut checks = Vec::new();

    let eas = eas_probe(model, set, b, v.eas_samples.max(3), v.seed)?;
    let mut eas_check = CheckOutcome::from_report("eas_probe", eas.pass, &EasDisplay(&eas));
    if !eas.pass {
        let names: Vec<&str> = eas.failing().map(|q| q.name.as_str()).collect();
        eas_check.detail = format!("EAS probe: FAIL (not affine in z: {})", names.join(", "));
    }
    checks.push(eas_check);

    let sol = match exp.solve() {
        Ok(s) => s.with_a_shift(a_shift),
        Err(CliError::Core(e @ portfolio_dual::Error::NotSeparable(_))) => {
            for name in ["hjb_residual", "slackness", "dominance", "weak_duality"] {
                checks.push(CheckOutcome::skipped(name, format!("no separable solution: {e}")));
            }
            return Ok(finish(exp, a_shift, checks));
        }
        Err(e) => return Err(e),
    };

    let points = random_states(model, v.residual_points, v.seed);
    match hjb_residual(model, set, b, &sol, &points, v.residual_threshold) {
        Ok(r) => checks.push(CheckOutcome::from_report("hjb_residual", r.pass, &r)),
        Err(e) => checks.push(CheckOutcome::failed("hjb_residual", &e)),
    }
    match slackness_sweep(model, set, b, &sol, v.slackness_states, v.seed) {
        Ok(r) => checks.push(CheckOutcome::from_report("slackness", r.pass, &r)),
        Err(e) => checks.push(CheckOutcome::failed("slackness", &e)),
    }

    let sim = cfg.verify_sim_config(model);
    let pi0 = evaluate(model, &sol, set, b, 0.0, &model.z0)?;
    let strategies = comparison_strategies(set, &pi0.pi_star, v.dominance_strategies, v.seed)?;
    match dominance_check(model, set, b, &sol, &strategies, cfg.v0, &sim) {
        Ok(r) => checks.push(CheckOutcome::from_report("dominance", r.pass, &r)),
        Err(e) => checks.push(CheckOutcome::failed("dominance", &e)),
    }

    if let MarketKind::Cir(_) = model.kind {
        checks.push(CheckOutcome::skipped(
            "weak_duality",
            "dual controls of CIR markets depend on the factor".into(),
        ));
    } else {
        let mut duals: Vec<DualChoice> = random_duals(model, set, &pi0.lambda_star, v.random_duals, v.seed)?
            .into_iter()
            .map(DualChoice::Constant)
            .collect();
        duals.push(DualChoice::Optimal);
        match weak_duality_check(model, set, b, &sol, &duals, cfg.v0, &sim) {
            Ok(r) => {
                let optimal_ok = r
                    .entries
                    .iter()
                    .filter(|e| e.dual == DualChoice::Optimal)
                    .all(|e| e.matches_primal);
                checks.push(CheckOutcome::from_report("weak_duality", r.pass && optimal_ok, &r))
            }
            Err(e) => checks.push(CheckOutcome::failed("weak_duality", &e)),
        }
    }
    Ok(finish(exp, a_shift, checks))
}

fn finish(exp: &Experiment, a_shift: f64, checks: Vec<CheckOutcome>) -> VerifyReport {
    VerifyReport {
        schema: VERIFY_SCHEMA.into(),
        market: exp.model.name().into(),
        a_shift,
        pass: checks.iter().all(|c| c.status != Status::Fail),
        checks,
    }
}

struct EasDisplay<'a>(&'a portfolio_dual::riccati::EasReport);

impl std::fmt::Display for EasDisplay<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let worst = self.0.quantities.iter().map(|q| q.max_second_difference).fold(0.0, f64::max);
        write!(
            f,
            "EAS probe: {} ({} samples, max second difference {:.3e}, threshold {:.1e})",
            if self.0.pass { "PASS" } else { "FAIL" },
            self.0.samples,
            worst,
            self.0.threshold
        )
    }
}

impl Serialize for EasDisplay<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Constant feasible strategies: a uniform grid for a single bounded asset,
/// uniform draws from a bounded box, otherwise projections onto K of random
/// points around `center`.
pub fn comparison_strategies(set: &ConstraintSet, center: &[f64], n: usize, seed: u64) -> CliResult<Vec<Vec<f64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if let ConstraintSet::Box { lower, upper } = set {
        if lower.len() == 1 && lower[0].is_finite() && upper[0].is_finite() {
            let (lo, hi) = (lower[0], upper[0]);
            let k = n.max(2) - 1;
            return Ok((0..=k).map(|i| vec![lo + (hi - lo) * i as f64 / k as f64]).collect());
        }
    }
    let d = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let ConstraintSet::Box { lower, upper } = set {
        if lower.iter().chain(upper).all(|x| x.is_finite()) {
            return Ok((0..n)
                .map(|_| (0..d).map(|i| rng.random_range(lower[i]..=upper[i])).collect())
                .collect());
        }
    }
    let scale = center.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: Vec<f64> = (0..d)
            .map(|i| center[i] + scale * rng.random_range(-1.0..1.0))
            .collect();
        out.push(set.project(&x)?);
    }
    Ok(out)
}

/// Random admissible constant multipliers around `center` (usually
/// `lambda*(0)`), scaled to the market's excess drift.
pub fn random_duals(
    model: &MarketModel,
    set: &ConstraintSet,
    center: &[f64],
    n: usize,
    seed: u64,
) -> CliResult<Vec<Vec<f64>>> {
    let frame = model.coeffs(0.0, &model.z0)?;
    let scale = frame
        .excess_drift()
        .iter()
        .chain(center)
        .fold(0.0f64, |a, x| a.max(x.abs()))
        .max(1e-3)
        * 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        let l: Vec<f64> = center
            .iter()
            .map(|c| c + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if set.support(&l)?.is_finite() {
            out.push(l);
        } else if tries > 1000 {
            // Only the multiplier itself is admissible (e.g. no constraint).
            out.push(center.to_vec());
        }
    }
    Ok(out)
}

fn csv_text(schema: &str, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<String> {
    let mut buf = format!("#schema={schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Other(format!("csv: {e}"));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Other(format!("csv: {e}")))?;
    }
    String::from_utf8(buf).map_err(|e| CliError::Other(e.to_string()))
}

/// Writes a set of artifacts all-or-nothing: files are staged in a hidden
/// directory inside `dir` and moved into place only once all are written.
pub fn write_artifacts(dir: &Path, files: &[(&str, String)]) -> CliResult<Vec<PathBuf>> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let stage = dir.join(format!(".staging-{}", std::process::id()));
    fs::create_dir_all(&stage).map_err(io(&stage))?;
    let staged: CliResult<()> = files.iter().try_for_each(|(name, text)| {
        let p = stage.join(name);
        fs::write(&p, text).map_err(io(&p))
    });
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&stage);
        return Err(e);
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, _) in files {
        let dst = dir.join(name);
        fs::rename(stage.join(name), &dst).map_err(io(&dst))?;
        written.push(dst);
    }
    let _ = fs::remove_dir_all(&stage);
    Ok(written)
}

pub fn to_json_text<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Other(e.to_string()))
}
