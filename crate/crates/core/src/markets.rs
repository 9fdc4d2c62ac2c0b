//! Market models: Black-Scholes with deterministic coefficients, block-diagonal
//! CIR stochastic covariance, and a zero-coupon bond market driven by a
//! multi-factor Ornstein-Uhlenbeck short rate.
//!
//! Every model exposes the same coefficient frame at a state `(t, z)`:
//! factor drift `mu_z` and diffusion `sigma_z` (the factor follows
//! `dz = mu_z dt + sigma_z dW^z`), the correlation loadings `rho` (`m x d`),
//! the short rate, and the asset drift and volatility matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Number of sampled times used by `validate` for the nonsingularity checks.
const VALIDATION_SAMPLES: usize = 64;
/// Condition numbers above this are reported as numerically singular.
const MAX_CONDITION: f64 = 1e12;

/// Piecewise-linear function of time, constant beyond the first/last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSpec", into = "TableSpec")]
pub struct TimeTable {
    t: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum TableSpec {
    Constant(f64),
    Table { t: Vec<f64>, v: Vec<f64> },
}

impl TryFrom<TableSpec> for TimeTable {
    type Error = Error;
    fn try_from(spec: TableSpec) -> Result<Self> {
        match spec {
            TableSpec::Constant(c) => Ok(TimeTable::constant(c)),
            TableSpec::Table { t, v } => TimeTable::new(t, v),
        }
    }
}

impl From<TimeTable> for TableSpec {
    fn from(table: TimeTable) -> Self {
        if table.t.len() == 1 {
            TableSpec::Constant(table.v[0])
        } else {
            TableSpec::Table { t: table.t, v: table.v }
        }
    }
}

impl TimeTable {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != v.len() {
            return Err(Error::InvalidModel(format!(
                "time table needs equal, non-zero lengths (t: {}, v: {})",
                t.len(),
                v.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidModel("time table knots must be strictly increasing".into()));
        }
        if t.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("time table entries must be finite".into()));
        }
        Ok(TimeTable { t, v })
    }

    pub fn constant(value: f64) -> Self {
        TimeTable {
            t: vec![0.0],
            v: vec![value],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return self.v[0];
        }
        if t >= self.t[n - 1] {
            return self.v[n - 1];
        }
        let k = self.t.partition_point(|&x| x <= t) - 1;
        let w = (t - self.t[k]) / (self.t[k + 1] - self.t[k]);
        self.v[k] + w * (self.v[k + 1] - self.v[k])
    }

    /// Largest knot time (0 for constants).
    fn last_knot(&self) -> f64 {
        *self.t.last().unwrap()
    }
}

/// Deterministic-coefficient market: `mu = r 1 + eta(t)`, `Sigma = sigma(t)`,
/// with a single inert factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackScholes {
    pub r: TimeTable,
    pub eta: Vec<TimeTable>,
    /// Row-major `d x d` table matrix.
    pub sigma: Vec<Vec<TimeTable>>,
}

impl BlackScholes {
    pub fn constant(r: f64, eta: &[f64], sigma: &DMatrix<f64>) -> Self {
        BlackScholes {
            r: TimeTable::constant(r),
            eta: eta.iter().map(|&e| TimeTable::constant(e)).collect(),
            sigma: (0..sigma.nrows())
                .map(|i| (0..sigma.ncols()).map(|j| TimeTable::constant(sigma[(i, j)])).collect())
                .collect(),
        }
    }

    pub fn eta_at(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.eta.len(), self.eta.iter().map(|e| e.eval(t)))
    }

    pub fn sigma_at(&self, t: f64) -> DMatrix<f64> {
        let d = self.eta.len();
        DMatrix::from_fn(d, d, |i, j| self.sigma[i][j].eval(t))
    }
}

/// `m` independent CIR factors, each scaling one diagonal covariance block.
#[derive(Debug, Clone, PartialEq)]
pub struct CirFactors {
    pub block_dims: Vec<usize>,
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub r: f64,
    pub rho: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub sigma_blocks: Vec<DMatrix<f64>>,
}

impl CirFactors {
    /// Start offset of each asset block.
    pub fn block_offsets(&self) -> Vec<usize> {
        self.block_dims
            .iter()
            .scan(0, |acc, &k| {
                let o = *acc;
                *acc += k;
                Some(o)
            })
            .collect()
    }
}

/// Zero-coupon bond market with short rate `w0 + w1'z` and OU factors.
#[derive(Debug, Clone, PartialEq)]
pub struct OuShortRate {
    pub w0: f64,
    pub w1: DVector<f64>,
    pub kappa: DVector<f64>,
    pub theta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Constant market price of risk of the factor noise.
    pub eta: DVector<f64>,
    pub maturities: Vec<f64>,
}

impl OuShortRate {
    /// Exponents `(a, b)` of the bond price `P = exp(a(tau) + b(tau)'z)`
    /// for time to maturity `tau`, priced under the risk-neutral factor drift
    /// `kappa*(theta - z) - sigma eta`.
    pub fn bond_exponents(&self, tau: f64) -> Result<(f64, DVector<f64>)> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("time to maturity must be >= 0, got {tau}")));
        }
        let b = self.bond_b(tau);
        // a(tau) = int_0^tau [ b(s)'(kappa*theta - sigma eta) + |sigma'b(s)|^2 / 2 - w0 ] ds
        let drift = self.kappa.component_mul(&self.theta) - &self.sigma * &self.eta;
        let integrand = |s: f64| {
            let bs = self.bond_b(s);
            bs.dot(&drift) + 0.5 * (self.sigma.transpose() * &bs).norm_squared() - self.w0
        };
        let a = simpson(integrand, 0.0, tau, ((tau * 512.0).ceil() as usize).max(64));
        Ok((a, b))
    }

    fn bond_b(&self, tau: f64) -> DVector<f64> {
        DVector::from_fn(self.w1.len(), |i, _| {
            let k = self.kappa[i];
            -self.w1[i] * (-(-k * tau).exp_m1()) / k
        })
    }

    /// Matrix whose columns are `b(T_i - t)`.
    pub fn bond_matrix(&self, t: f64) -> DMatrix<f64> {
        let m = self.w1.len();
        let mut out = DMatrix::zeros(m, m);
        for (j, &mat) in self.maturities.iter().enumerate() {
            out.set_column(j, &self.bond_b(mat - t));
        }
        out
    }

    /// Asset volatility `b(t;T)' sigma`.
    pub fn asset_sigma(&self, t: f64) -> DMatrix<f64> {
        self.bond_matrix(t).transpose() * &self.sigma
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b == a {
        return 0.0;
    }
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarketKind {
    Bs(BlackScholes),
    Cir(CirFactors),
    Ou(OuShortRate),
}

/// A market over `[0, horizon]` started at factor value `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub horizon: f64,
    pub z0: DVector<f64>,
    pub kind: MarketKind,
}

/// Coefficients of the market evaluated at one state `(t, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFrame {
    pub mu_z: DVector<f64>,
    pub sigma_z: DMatrix<f64>,
    /// `m x d`; column `i` correlates asset noise `i` with the factor noise.
    pub rho: DMatrix<f64>,
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl CoefficientFrame {
    pub fn zeros(m: usize, d: usize) -> Self {
        CoefficientFrame {
            mu_z: DVector::zeros(m),
            sigma_z: DMatrix::zeros(m, m),
            rho: DMatrix::zeros(m, d),
            r: 0.0,
            mu: DVector::zeros(d),
            sigma: DMatrix::zeros(d, d),
        }
    }

    /// `mu - r 1`.
    pub fn excess_drift(&self) -> DVector<f64> {
        self.mu.add_scalar(-self.r)
    }

    /// Effective inner-problem drift `mu - r1 + Sigma rho' sigma_z' B`.
    pub fn effective_drift(&self, b: &DVector<f64>) -> DVector<f64> {
        self.excess_drift() + &self.sigma * (self.rho.transpose() * (self.sigma_z.transpose() * b))
    }
}

impl MarketModel {
    pub fn new(horizon: f64, z0: DVector<f64>, kind: MarketKind) -> Result<Self> {
        let model = MarketModel { horizon, z0, kind };
        model.check_structure()?;
        Ok(model)
    }

    pub fn assets(&self) -> usize {
        match &self.kind {
            MarketKind::Bs(bs) => bs.eta.len(),
            MarketKind::Cir(c) => c.block_dims.iter().sum(),
            MarketKind::Ou(ou) => ou.w1.len(),
        }
    }

    pub fn factors(&self) -> usize {
        match &self.kind {
            MarketKind::Bs(_) => 1,
            MarketKind::Cir(c) => c.kappa.len(),
            MarketKind::Ou(ou) => ou.w1.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MarketKind::Bs(_) => "bs",
            MarketKind::Cir(_) => "cir",
            MarketKind::Ou(_) => "ou",
        }
    }

    /// Dimension and shape checks; violations of standing assumptions
    /// (Feller, nonsingularity, ...) are reported by `validate` instead.
    fn check_structure(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidModel(format!("horizon must be positive, got {}", self.horizon)));
        }
        let m = self.factors();
        check_dim("initial factor z0", m, self.z0.len())?;
        let shape = |what: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!("inconsistent dimensions in {what}")))
            }
        };
        match &self.kind {
            MarketKind::Bs(bs) => {
                let d = bs.eta.len();
                shape("bs", d > 0 && bs.sigma.len() == d && bs.sigma.iter().all(|r| r.len() == d))?;
                shape("bs z0", self.z0[0] == 0.0)?;
            }
            MarketKind::Cir(c) => {
                let m = c.block_dims.len();
                shape(
                    "cir",
                    m > 0
                        && c.block_dims.iter().all(|&k| k > 0)
                        && [c.kappa.len(), c.theta.len(), c.sigma_z.len(), c.rho.len(), c.eta.len(), c.sigma_blocks.len()]
                            .iter()
                            .all(|&n| n == m),
                )?;
                for (i, &k) in c.block_dims.iter().enumerate() {
                    shape(
                        "cir block",
                        c.rho[i].len() == k
                            && c.eta[i].len() == k
                            && c.sigma_blocks[i].nrows() == k
                            && c.sigma_blocks[i].ncols() == k,
                    )?;
                }
            }
            MarketKind::Ou(ou) => {
                let m = ou.w1.len();
                shape(
                    "ou",
                    m > 0
                        && ou.kappa.len() == m
                        && ou.theta.len() == m
                        && ou.eta.len() == m
                        && ou.maturities.len() == m
                        && ou.sigma.nrows() == m
                        && ou.sigma.ncols() == m,
                )?;
                if ou.kappa.iter().any(|&k| !(k > 0.0)) {
                    return Err(Error::InvalidModel("OU mean-reversion speeds must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= -1e-12 && t <= self.horizon * (1.0 + 1e-12) + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Market coefficients at `(t, z)`.
    pub fn coeffs(&self, t: f64, z: &DVector<f64>) -> Result<CoefficientFrame> {
        self.check_time(t)?;
        check_dim("factor state", self.factors(), z.len())?;
        if let MarketKind::Cir(_) = self.kind {
            if let Some(i) = z.iter().position(|&zi| !(zi > 0.0)) {
                return Err(Error::Domain(format!(
                    "CIR factor {i} must be strictly positive, got {}",
                    z[i]
                )));
            }
        }
        let mut frame = CoefficientFrame::zeros(self.factors(), self.assets());
        self.fill_frame(t, z.as_slice(), &mut frame);
        Ok(frame)
    }

    /// Evaluates coefficients into an existing frame without domain checks.
    /// CIR factors must be `>= 0`.
    pub(crate) fn fill_frame(&self, t: f64, z: &[f64], frame: &mut CoefficientFrame) {
        match &self.kind {
            MarketKind::Bs(bs) => {
                frame.r = bs.r.eval(t);
                let d = bs.eta.len();
                for i in 0..d {
                    frame.mu[i] = frame.r + bs.eta[i].eval(t);
                    for j in 0..d {
                        frame.sigma[(i, j)] = bs.sigma[i][j].eval(t);
                    }
                }
            }
            MarketKind::Cir(c) => {
                frame.r = c.r;
                let mut off = 0;
                for (i, &k) in c.block_dims.iter().enumerate() {
                    let zi = z[i];
                    let sq = zi.sqrt();
                    frame.mu_z[i] = c.kappa[i] * (c.theta[i] - zi);
                    frame.sigma_z[(i, i)] = c.sigma_z[i] * sq;
                    for a in 0..k {
                        frame.rho[(i, off + a)] = c.rho[i][a];
                        frame.mu[off + a] = c.r + c.eta[i][a] * zi;
                        for b in 0..k {
                            frame.sigma[(off + a, off + b)] = c.sigma_blocks[i][(a, b)] * sq;
                        }
                    }
                    off += k;
                }
            }
            MarketKind::Ou(ou) => {
                let m = ou.w1.len();
                frame.r = ou.w0 + z.iter().zip(ou.w1.iter()).map(|(a, b)| a * b).sum::<f64>();
                for i in 0..m {
                    frame.mu_z[i] = ou.kappa[i] * (ou.theta[i] - z[i]);
                    frame.rho[(i, i)] = 1.0;
                }
                frame.sigma_z.copy_from(&ou.sigma);
                frame.sigma.copy_from(&ou.asset_sigma(t));
                let premium = &frame.sigma * &ou.eta;
                for i in 0..m {
                    frame.mu[i] = frame.r + premium[i];
                }
            }
        }
    }

    /// Bond-price exponents; only defined for the OU bond market.
    pub fn bond_exponents(&self, tau: f64) -> Result<(f64, DVector<f64>)> {
        match &self.kind {
            MarketKind::Ou(ou) => ou.bond_exponents(tau),
            _ => Err(Error::InvalidArgument("bond exponents exist only for the OU market".into())),
        }
    }

    /// Maps a simulated factor value into the coefficient domain (CIR
    /// factors are floored at a tiny positive value).
    pub(crate) fn clamp_state(&self, z: &mut [f64]) {
        if let MarketKind::Cir(_) = self.kind {
            for zi in z.iter_mut() {
                if !(*zi > CIR_STATE_FLOOR) {
                    *zi = CIR_STATE_FLOOR;
                }
            }
        }
    }

    /// Checks the standing assumptions of the model definitions.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let times: Vec<f64> = (0..VALIDATION_SAMPLES)
            .map(|k| self.horizon * k as f64 / (VALIDATION_SAMPLES - 1) as f64)
            .collect();
        match &self.kind {
            MarketKind::Bs(bs) => {
                let worst = times
                    .iter()
                    .map(|&t| condition_number(&bs.sigma_at(t)))
                    .fold(0.0, f64::max);
                report.push(
                    "sigma(t) nonsingular",
                    worst < MAX_CONDITION,
                    format!("max condition number {worst:.3e} over {VALIDATION_SAMPLES} times"),
                );
                let covers = std::iter::once(&bs.r)
                    .chain(&bs.eta)
                    .chain(bs.sigma.iter().flatten())
                    .all(|tab| tab.t.len() == 1 || tab.last_knot() >= self.horizon - 1e-12);
                report.push(
                    "time tables cover [0, T]",
                    covers,
                    "tables are held constant beyond their last knot".to_string(),
                );
            }
            MarketKind::Cir(c) => {
                for i in 0..c.kappa.len() {
                    let positive = c.kappa[i] > 0.0 && c.theta[i] > 0.0 && c.sigma_z[i] > 0.0;
                    report.push(
                        &format!("factor {i}: kappa, theta, sigma > 0"),
                        positive,
                        format!("kappa={}, theta={}, sigma={}", c.kappa[i], c.theta[i], c.sigma_z[i]),
                    );
                    let lhs = 2.0 * c.kappa[i] * c.theta[i];
                    let rhs = c.sigma_z[i] * c.sigma_z[i];
                    report.push(
                        &format!("factor {i}: Feller 2 kappa theta > sigma^2"),
                        lhs > rhs,
                        format!("2 kappa theta = {lhs}, sigma^2 = {rhs}"),
                    );
                    let rn = c.rho[i].norm();
                    report.push(
                        &format!("block {i}: |rho| < 1"),
                        rn < 1.0,
                        format!("|rho| = {rn}"),
                    );
                    let cond = condition_number(&c.sigma_blocks[i]);
                    report.push(
                        &format!("block {i}: Sigma_i nonsingular"),
                        cond < MAX_CONDITION,
                        format!("condition number {cond:.3e}"),
                    );
                    report.push(
                        &format!("factor {i}: z0 > 0"),
                        self.z0[i] > 0.0,
                        format!("z0 = {}", self.z0[i]),
                    );
                }
            }
            MarketKind::Ou(ou) => {
                let cond = condition_number(&ou.sigma);
                report.push(
                    "sigma nonsingular",
                    cond < MAX_CONDITION,
                    format!("condition number {cond:.3e}"),
                );
                let after = ou.maturities.iter().all(|&m| m > self.horizon);
                report.push(
                    "maturities exceed horizon",
                    after,
                    format!("maturities {:?}, horizon {}", ou.maturities, self.horizon),
                );
                let mut sorted = ou.maturities.clone();
                sorted.sort_by(f64::total_cmp);
                let distinct = sorted.windows(2).all(|w| w[1] > w[0]);
                report.push(
                    "maturities pairwise distinct",
                    distinct,
                    format!("maturities {:?}", ou.maturities),
                );
                let worst = times
                    .iter()
                    .map(|&t| condition_number(&ou.bond_matrix(t)))
                    .fold(0.0, f64::max);
                report.push(
                    "b(t;T) nonsingular",
                    worst < MAX_CONDITION,
                    format!("max condition number {worst:.3e} over {VALIDATION_SAMPLES} times"),
                );
            }
        }
        report
    }
}

pub(crate) const CIR_STATE_FLOOR: f64 = 1e-12;

/// Ratio of extreme singular values; infinite for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo <= 0.0 || hi == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(ValidationCheck {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

// ---------------------------------------------------------------------------
// JSON representation
// ---------------------------------------------------------------------------

/// JSON form of a market; the horizon is supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarketSpec {
    Bs {
        r: TimeTable,
        eta: Vec<TimeTable>,
        sigma: Vec<Vec<TimeTable>>,
    },
    Cir {
        block_dims: Vec<usize>,
        kappa: Vec<f64>,
        theta: Vec<f64>,
        sigma_z: Vec<f64>,
        r: f64,
        rho: Vec<Vec<f64>>,
        eta: Vec<Vec<f64>>,
        sigma_blocks: Vec<Vec<Vec<f64>>>,
        z0: Vec<f64>,
    },
    Ou {
        w0: f64,
        w1: Vec<f64>,
        kappa: Vec<f64>,
        theta: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        eta: Vec<f64>,
        maturities: Vec<f64>,
        z0: Vec<f64>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if n == 0 || rows.iter().any(|r| r.len() != c) {
        return Err(Error::InvalidModel("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

impl MarketSpec {
    pub fn build(&self, horizon: f64) -> Result<MarketModel> {
        match self {
            MarketSpec::Bs { r, eta, sigma } => MarketModel::new(
                horizon,
                DVector::zeros(1),
                MarketKind::Bs(BlackScholes {
                    r: r.clone(),
                    eta: eta.clone(),
                    sigma: sigma.clone(),
                }),
            ),
            MarketSpec::Cir {
                block_dims,
                kappa,
                theta,
                sigma_z,
                r,
                rho,
                eta,
                sigma_blocks,
                z0,
            } => MarketModel::new(
                horizon,
                DVector::from_vec(z0.clone()),
                MarketKind::Cir(CirFactors {
                    block_dims: block_dims.clone(),
                    kappa: kappa.clone(),
                    theta: theta.clone(),
                    sigma_z: sigma_z.clone(),
                    r: *r,
                    rho: rho.iter().map(|v| DVector::from_vec(v.clone())).collect(),
                    eta: eta.iter().map(|v| DVector::from_vec(v.clone())).collect(),
                    sigma_blocks: sigma_blocks
                        .iter()
                        .map(|m| matrix_from_rows(m))
                        .collect::<Result<_>>()?,
                }),
            ),
            MarketSpec::Ou {
                w0,
                w1,
                kappa,
                theta,
                sigma,
                eta,
                maturities,
                z0,
            } => MarketModel::new(
                horizon,
                DVector::from_vec(z0.clone()),
                MarketKind::Ou(OuShortRate {
                    w0: *w0,
                    w1: DVector::from_vec(w1.clone()),
                    kappa: DVector::from_vec(kappa.clone()),
                    theta: DVector::from_vec(theta.clone()),
                    sigma: matrix_from_rows(sigma)?,
                    eta: DVector::from_vec(eta.clone()),
                    maturities: maturities.clone(),
                }),
            ),
        }
    }
}
