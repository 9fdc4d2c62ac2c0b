//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use portfolio_dual::diagnostics::{
    dominance_check, hjb_residual, random_states, slackness_sweep, weak_duality_check, DualChoice,
};
use portfolio_dual::dual_inner::{brute_force_inner, search_radius, solve_inner, InnerProblem, DEFAULT_MAX_ITER};
use portfolio_dual::markets::{BlackScholes, MarketKind, MarketModel};
use portfolio_dual::montecarlo::{run, Scheme, SimConfig};
use portfolio_dual::policy::{evaluate, value, TabulatedPolicy};
use portfolio_dual::riccati::{integrate, integrate_with, OuMode, RiccatiSolution};
use portfolio_dual::testkit::{self, random_constraint, random_risk, random_sigma};
use portfolio_dual::ConstraintSet;
use portfolio_dual_cli::{random_duals, simulate, Experiment, ExperimentConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn experiment(name: &str) -> Experiment {
    Experiment::prepare(ExperimentConfig::load(&config_path(name)).unwrap()).unwrap()
}

fn references() -> Vec<(&'static str, MarketModel, ConstraintSet)> {
    vec![
        ("bs", testkit::bs_reference(), ConstraintSet::uniform_box(1, 0.0, 1.0).unwrap()),
        ("cir", testkit::cir_reference(), testkit::cir_reference_constraint()),
        ("ou", testkit::ou_reference(), testkit::ou_reference_constraint()),
    ]
}

fn solve_ref(model: &MarketModel, set: &ConstraintSet) -> RiccatiSolution {
    integrate(model, set, 0.5, 1024).unwrap()
}

fn merton_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_lambda = 0.0f64;
    let mut worst_pi = 0.0f64;
    let mut models = vec![(testkit::bs_reference(), 0.5)];
    for d in [2, 3] {
        let sigma = random_sigma(&mut rng, d);
        let eta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.1..0.1)).collect();
        let bs = BlackScholes::constant(0.03, &eta, &sigma);
        let model = MarketModel::new(1.0, DVector::zeros(1), MarketKind::Bs(bs)).unwrap();
        models.push((model, random_risk(&mut rng)));
    }
    for (model, b) in &models {
        let full = ConstraintSet::full_space(model.assets()).unwrap();
        let sol = integrate(model, &full, *b, 64).unwrap();
        let frame = model.coeffs(0.0, &model.z0).unwrap();
        let cov = &frame.sigma * frame.sigma.transpose();
        let merton = cov.lu().solve(&frame.excess_drift()).unwrap() / (1.0 - b);
        for _ in 0..100 {
            let t = rng.random_range(0.0..=1.0);
            let p = evaluate(model, &sol, &full, *b, t, &model.z0).unwrap();
            worst_lambda = worst_lambda.max(DVector::from_vec(p.lambda_star).norm());
            let diff = (DVector::from_vec(p.pi_star) - &merton).amax();
            worst_pi = worst_pi.max(diff);
        }
    }
    outcome(
        worst_lambda <= 1e-12 && worst_pi <= 1e-12,
        format!("max |lambda*| = {worst_lambda:.1e}, max |pi* - Merton| = {worst_pi:.1e} over 300 times, d = 1, 2, 3"),
    )
}

fn bs_end_to_end() -> Outcome {
    let exp = experiment("bs_box.json");
    let sol = exp.solve().unwrap();
    let a1 = sol.at(1.0).unwrap().a;
    let g = exp.value(&sol).unwrap();
    let g_exact = 2.0 * 0.025f64.exp();
    let sim = simulate(&exp, &sol, false).unwrap().report;
    let r = &sim.result;
    let ok_a = (a1 - 0.025).abs() <= 1e-10;
    let ok_g = (g - g_exact).abs() <= 1e-10 * g_exact;
    let ok_mc = (r.mean_utility - 2.050630).abs() <= 3.0 * r.std_error;
    outcome(
        ok_a && ok_g && ok_mc && sim.paths == 200_000 && sim.steps == 252,
        format!(
            "A(1) = {a1:.12}, G = {g:.9}, MC {:.6} +- {:.2e} ({} paths, {} steps, |z| = {:.2})",
            r.mean_utility,
            r.std_error,
            sim.paths,
            sim.steps,
            ((r.mean_utility - 2.050630) / r.std_error).abs()
        ),
    )
}

fn slackness() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model, set) in references() {
        let sol = solve_ref(&model, &set);
        let r = slackness_sweep(&model, &set, 0.5, &sol, 1000, 3).unwrap();
        pass &= r.pass && r.max_abs_slackness <= 1e-8 && r.all_feasible;
        parts.push(format!("{name} {:.1e}", r.max_abs_slackness));
    }
    outcome(pass, format!("max |delta_K + pi'lambda| at 1000 states: {}", parts.join(", ")))
}

/// `h(pi) = c'pi - (1 - b)/2 |Sigma'pi|^2`
fn objective(sigma: &DMatrix<f64>, c: &DVector<f64>, b: f64, pi: &[f64]) -> f64 {
    let pi = DVector::from_column_slice(pi);
    c.dot(&pi) - 0.5 * (1.0 - b) * (sigma.transpose() * pi).norm_squared()
}

fn saddle_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let d = 1 + i % 5;
        let sigma = random_sigma(&mut rng, d);
        let c = DVector::from_fn(d, |_, _| rng.random_range(-0.2..0.2));
        let b = random_risk(&mut rng);
        let set = random_constraint(&mut rng, d, i / 5);
        let p = InnerProblem::new(sigma.clone(), c.clone(), b, &set).unwrap();
        let s = solve_inner(&p, 1e-10, DEFAULT_MAX_ITER).unwrap();
        let lam = DVector::from_column_slice(&s.lambda_star);
        let x = sigma.clone().lu().solve(&(&c + &lam)).unwrap();
        let dual = 2.0 * (1.0 - b) * set.support(&s.lambda_star).unwrap() + x.norm_squared();
        let primal = objective(&sigma, &c, b, &s.pi_star);
        worst = worst.max((dual - 2.0 * (1.0 - b) * primal).abs());
    }
    outcome(
        worst <= 1e-9,
        format!("max |D - 2(1-b) h(pi*)| = {worst:.2e} over 1000 problems, d = 1..5, all set kinds"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut beaten = 0;
    let mut done = 0;
    let mut seed = 0u64;
    while done < 50 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = 1 + done % 2;
        let sigma = random_sigma(&mut rng, d);
        let c = DVector::from_fn(d, |_, _| rng.random_range(-0.2..0.2));
        let b = random_risk(&mut rng);
        let kind = rng.random_range(0..5);
        let set = random_constraint(&mut rng, d, kind);
        let p = InnerProblem::new(sigma.clone(), c.clone(), b, &set).unwrap();
        let s = solve_inner(&p, 1e-10, DEFAULT_MAX_ITER).unwrap();
        let radius = search_radius(&p).unwrap();
        let n = if d == 1 { 100_000 } else { 401 };
        let Ok(lattice) = brute_force_inner(&p, n, radius) else { continue };
        done += 1;
        let spacing = 2.0 * radius / (n - 1) as f64;
        // A feasible lattice point lies within `r` of pi*; h drops by at most
        // |grad h(pi*)| r + |Q| r^2 / 2 there.
        let r = (d.max(2) as f64) * spacing * (d as f64).sqrt();
        let q = (&sigma * sigma.transpose()) * (1.0 - b);
        let grad = &c - &q * DVector::from_column_slice(&s.pi_star);
        let bound = grad.norm() * r + 0.5 * q.norm() * r * r + 1e-12;
        let h_star = objective(&sigma, &c, b, &s.pi_star);
        let h_lat = objective(&sigma, &c, b, &lattice.pi_star);
        if h_lat > h_star + 1e-12 || !set.contains(&lattice.pi_star).unwrap() {
            beaten += 1;
        }
        worst_ratio = worst_ratio.max((h_star - h_lat).abs() / bound);
    }
    outcome(
        beaten == 0 && worst_ratio <= 1.0,
        format!(
            "50 problems (d = 1 on 1e5 points, d = 2 on 401^2): max gap / resolution bound = {worst_ratio:.3}, lattice beats solver {beaten} times"
        ),
    )
}

/// Relative residual of the primal HJB from finite differences of
/// `log G`, with the supremum taken by the inner solver.
fn fd_residual(model: &MarketModel, set: &ConstraintSet, sol: &RiccatiSolution, b: f64, t: f64, z: &DVector<f64>) -> f64 {
    let m = model.factors();
    let lg = |t: f64, z: &DVector<f64>| (b * value(sol, b, t, 1.0, z).unwrap()).ln();
    let ht = 1e-5;
    let (t0, t1) = ((t - ht).max(0.0), (t + ht).min(model.horizon));
    let dt = (lg(t1, z) - lg(t0, z)) / (t1 - t0);
    let hz = 1e-4 * z.amax().max(1e-2);
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    let f0 = lg(t, z);
    for i in 0..m {
        let mut zp = z.clone();
        zp[i] += hz;
        let mut zm = z.clone();
        zm[i] -= hz;
        grad[i] = (lg(t, &zp) - lg(t, &zm)) / (2.0 * hz);
        hess[(i, i)] = (lg(t, &zp) - 2.0 * f0 + lg(t, &zm)) / (hz * hz);
    }
    let frame = model.coeffs(t, z).unwrap();
    // Hessian of G over G for an affine log G.
    let ghess = &hess + &grad * grad.transpose();
    let c = frame.excess_drift() + &frame.sigma * frame.rho.transpose() * frame.sigma_z.transpose() * &grad;
    let p = InnerProblem::new(frame.sigma.clone(), c, b, set).unwrap();
    let s = solve_inner(&p, 1e-12, DEFAULT_MAX_ITER).unwrap();
    let diffusion = 0.5 * (&frame.sigma_z * frame.sigma_z.transpose()).component_mul(&ghess).sum();
    dt + frame.mu_z.dot(&grad) + diffusion + b * frame.r + b * s.primal_value
}

fn hjb_residuals() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model, set) in references() {
        let sol = solve_ref(&model, &set);
        let points = random_states(&model, 100, 4);
        let r = hjb_residual(&model, &set, 0.5, &sol, &points, 1e-6).unwrap();
        let fd = points
            .iter()
            .map(|(t, z)| fd_residual(&model, &set, &sol, 0.5, *t, z).abs())
            .fold(0.0, f64::max);
        let faulty = hjb_residual(&model, &set, 0.5, &sol.with_a_shift(0.01), &points, 1e-6).unwrap();
        pass &= r.pass && r.max_abs_rel <= 1e-6 && r.max_primal_dual_gap <= 1e-9 && fd <= 1e-6 && !faulty.pass;
        parts.push(format!(
            "{name}: {:.1e} (fd {:.1e}, gap {:.1e}, A+0.01 {})",
            r.max_abs_rel,
            fd,
            r.max_primal_dual_gap,
            if faulty.pass { "PASSES" } else { "fails" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn ou_closed_form() -> Outcome {
    let exp = experiment("ou_box.json");
    let MarketKind::Ou(ou) = &exp.model.kind else { unreachable!() };
    let b = exp.config.b_risk;
    let rk4 = integrate_with(&exp.model, &exp.set, b, 1024, OuMode::Rk4).unwrap();
    let mut sup = 0.0f64;
    for (k, tau) in rk4.tau.iter().enumerate() {
        for i in 0..2 {
            let exact = ou.w1[i] * b * (1.0 - (-ou.kappa[i] * tau).exp()) / ou.kappa[i];
            sup = sup.max((rk4.b[k][i] - exact).abs());
        }
    }
    let sol = exp.solve().unwrap();
    let sim = simulate(&exp, &sol, false).unwrap().report;
    let r = &sim.result;
    let z = (r.mean_utility - sim.value) / r.std_error;
    outcome(
        sup <= 1e-8 && z.abs() <= 3.0 && sim.paths == 200_000 && exp.model.factors() == 2,
        format!(
            "sup |B_rk4 - B_exact| = {sup:.1e}; MC {:.6} +- {:.1e} vs G {:.6} (z = {z:.2}, {} paths, {} steps, antithetic)",
            r.mean_utility, r.std_error, sim.value, sim.paths, sim.steps
        ),
    )
}

fn cir_convergence() -> Outcome {
    let single = testkit::cir_single();
    let full = ConstraintSet::full_space(1).unwrap();
    let b_end = |n: usize| integrate(&single, &full, 0.5, n).unwrap().at(1.0).unwrap().b[0];
    let (b1, b2, b4) = (b_end(16), b_end(32), b_end(64));
    let order = ((b1 - b2) / (b2 - b4)).abs().log2();

    let exp = experiment("cir_boxes.json");
    let sol = exp.solve();
    let finite = sol
        .as_ref()
        .map(|s| s.a.iter().chain(s.b.iter().flatten()).all(|x| x.is_finite()))
        .unwrap_or(false);

    // Smallest factor value any path hands to the policy.
    let min_seen = AtomicU64::new(f64::INFINITY.to_bits());
    let (mut frac, mut min_z) = (f64::NAN, f64::NAN);
    if let Ok(sol) = &sol {
        let pol = TabulatedPolicy::optimal(&exp.model, sol, &exp.set, 0.5, 252).unwrap();
        let watch = |t: f64, v: f64, z: &[f64], out: &mut [f64]| {
            let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
            let _ = min_seen.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |cur| {
                (lo < f64::from_bits(cur)).then_some(lo.to_bits())
            });
            portfolio_dual::policy::Strategy::allocate(&pol, t, v, z, out)
        };
        let cfg = SimConfig {
            paths: 100_000,
            steps: 252,
            seed: 5,
            scheme: Scheme::FullTruncationCir,
            antithetic: false,
        };
        let r = run(&exp.model, &watch, None, 0.5, 1.0, &cfg, false).unwrap().result;
        frac = r.truncation_fraction;
        min_z = f64::from_bits(min_seen.load(Ordering::Relaxed));
    }
    outcome(
        (3.7..=4.3).contains(&order) && finite && min_z >= 0.0 && frac <= 0.02,
        format!(
            "RK4 order {order:.3} (N = 16/32/64); product-box solve {}; min state {min_z:.2e}, truncation fraction {:.2e} at 252 steps",
            if finite { "finite" } else { "FAILED" },
            frac
        ),
    )
}

fn dominance() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    // Constant coefficients: log-Euler is exact for constant strategies.
    let bs = experiment("bs_box.json");
    let sol = bs.solve().unwrap();
    let grid: Vec<Vec<f64>> = (0..=100).map(|k| vec![k as f64 / 100.0]).collect();
    let cfg = SimConfig { paths: 50_000, steps: 12, seed: 21, scheme: Scheme::EulerLog, antithetic: false };
    let r = dominance_check(&bs.model, &bs.set, 0.5, &sol, &grid, 1.0, &cfg).unwrap();
    pass &= r.pass;
    parts.push(format!("bs {}", r));

    let ou = experiment("ou_box.json");
    let sol = ou.solve().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let consts: Vec<Vec<f64>> = (0..21)
        .map(|_| (0..2).map(|_| rng.random_range(-1.0..=2.0)).collect())
        .collect();
    let cfg = SimConfig { paths: 40_000, steps: 52, seed: 23, scheme: Scheme::EulerLog, antithetic: false };
    let r = dominance_check(&ou.model, &ou.set, 0.5, &sol, &consts, 1.0, &cfg).unwrap();
    pass &= r.pass;
    parts.push(format!("ou {}", r));
    outcome(pass, parts.join("; "))
}

fn weak_duality() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, file, cfg) in [
        ("bs", "bs_box.json", SimConfig { paths: 100_000, steps: 12, seed: 31, scheme: Scheme::EulerLog, antithetic: false }),
        ("ou", "ou_box.json", SimConfig { paths: 40_000, steps: 52, seed: 32, scheme: Scheme::EulerLog, antithetic: false }),
    ] {
        let exp = experiment(file);
        let sol = exp.solve().unwrap();
        let lam0 = evaluate(&exp.model, &sol, &exp.set, 0.5, 0.0, &exp.model.z0).unwrap().lambda_star;
        let mut duals: Vec<DualChoice> = random_duals(&exp.model, &exp.set, &lam0, 5, 33)
            .unwrap()
            .into_iter()
            .map(DualChoice::Constant)
            .collect();
        duals.push(DualChoice::Optimal);
        let r = weak_duality_check(&exp.model, &exp.set, 0.5, &sol, &duals, 1.0, &cfg).unwrap();
        let opt = r.entries.last().unwrap();
        let gap = (opt.dual_mean - r.primal.mean_utility) / opt.combined_se.max(f64::MIN_POSITIVE);
        pass &= r.pass && opt.matches_primal;
        parts.push(format!("{name}: {r}; lambda* off by {gap:.2} SE"));
    }
    outcome(pass, parts.join("; "))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("portfolio-dual-acceptance-{}", std::process::id()));
    let mut outputs = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = dir.join(threads);
        let status = Command::new(env!("CARGO_BIN_EXE_portfolio-dual"))
            .args(["simulate", "--paths", "20000", "--config"])
            .arg(config_path("ou_box.json"))
            .arg("--out")
            .arg(&out)
            .env("PORTFOLIO_DUAL_THREADS", threads)
            .stdout(Stdio::null())
            .status()
            .unwrap();
        outputs.push(status.success().then(|| std::fs::read(out.join("sim.json")).unwrap()));
    }
    let _ = std::fs::remove_dir_all(&dir);
    let same = outputs[0].is_some() && outputs.iter().all(|o| o == &outputs[0]);
    outcome(same, "sim.json of the OU reference config at 1, 4 and 8 threads".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 11] = [
        ("merton_recovery", merton_recovery, Some(Duration::from_secs(1))),
        ("bs_end_to_end", bs_end_to_end, Some(Duration::from_secs(30))),
        ("slackness_sweep", slackness, Some(Duration::from_secs(10))),
        ("saddle_identity", saddle_identity, None),
        ("oracle_equivalence", oracle_equivalence, None),
        ("hjb_residual", hjb_residuals, None),
        ("ou_closed_form", ou_closed_form, Some(Duration::from_secs(60))),
        ("cir_self_convergence", cir_convergence, None),
        ("dominance", dominance, None),
        ("weak_duality", weak_duality, None),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let in_time = budget.is_none_or(|b| took <= b);
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" (limit {}s)", b.as_secs()));
        println!(
            "{} {name}: {} [{:.2}s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
