use nalgebra::DVector;
use portfolio_dual::diagnostics::simulate_optimal;
use portfolio_dual::markets::MarketKind;
use portfolio_dual::montecarlo::{mean_and_se, run, Scheme, SimConfig};
use portfolio_dual::policy::{value, TabulatedPolicy};
use portfolio_dual::riccati::integrate;
use portfolio_dual::{testkit, ConstraintSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Discounted bond prices are martingales under the pricing measure, where
/// the factor drift is shifted by `-sigma eta`.
#[test]
fn discounted_bonds_are_pricing_martingales() {
    let model = testkit::ou_reference();
    let MarketKind::Ou(ou) = &model.kind else { unreachable!() };
    let (paths, steps, t_end) = (100_000usize, 100usize, 1.0);
    let dt = t_end / steps as f64;
    let drift0 = ou.kappa.component_mul(&ou.theta) - &ou.sigma * &ou.eta;
    let price = |(a, b): &(f64, DVector<f64>), z: &DVector<f64>| (a + b.dot(z)).exp();
    let at_end: Vec<_> = ou.maturities.iter().map(|&m| ou.bond_exponents(m - t_end).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut samples = vec![Vec::with_capacity(paths); ou.maturities.len()];
    for _ in 0..paths {
        let mut z = model.z0.clone();
        let mut int_r = 0.0;
        for _ in 0..steps {
            let r0 = ou.w0 + ou.w1.dot(&z);
            let dw = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            z += (&drift0 - ou.kappa.component_mul(&z)) * dt + &ou.sigma * dw * dt.sqrt();
            int_r += 0.5 * (r0 + ou.w0 + ou.w1.dot(&z)) * dt;
        }
        for (i, e) in at_end.iter().enumerate() {
            samples[i].push((-int_r).exp() * price(e, &z));
        }
    }
    for (i, &mat) in ou.maturities.iter().enumerate() {
        let (mean, se) = mean_and_se(&samples[i]);
        let p0 = price(&ou.bond_exponents(mat).unwrap(), &model.z0);
        assert!((mean - p0).abs() <= 3.0 * se, "T={mat}: {mean} vs {p0} (se {se})");
    }
}

#[test]
fn single_asset_cir_blocks_simulate_at_the_value_function() {
    let model = testkit::cir_single();
    let set = ConstraintSet::uniform_box(1, 0.0, 1.5).unwrap();
    let sol = integrate(&model, &set, 0.5, 512).unwrap();
    let g = value(&sol, 0.5, 0.0, 1.0, &model.z0).unwrap();
    let cfg = SimConfig { paths: 100_000, steps: 126, seed: 3, scheme: Scheme::FullTruncationCir, antithetic: true };
    let r = simulate_optimal(&model, &set, 0.5, &sol, 1.0, &cfg).unwrap();
    assert!((r.mean_utility - g).abs() <= 3.0 * r.std_error, "{} vs {g} (se {})", r.mean_utility, r.std_error);
}

#[test]
fn orthogonal_block_loadings_simulate_at_the_value_function() {
    let mut model = testkit::cir_reference();
    if let MarketKind::Cir(c) = &mut model.kind {
        c.rho[0] = DVector::from_vec(vec![-0.5, 0.0]);
    }
    let set = testkit::cir_reference_constraint();
    let sol = integrate(&model, &set, 0.5, 512).unwrap();
    let g = value(&sol, 0.5, 0.0, 1.0, &model.z0).unwrap();
    let cfg = SimConfig { paths: 100_000, steps: 126, seed: 11, scheme: Scheme::FullTruncationCir, antithetic: true };
    let r = simulate_optimal(&model, &set, 0.5, &sol, 1.0, &cfg).unwrap();
    assert!((r.mean_utility - g).abs() <= 3.0 * r.std_error, "{} vs {g} (se {})", r.mean_utility, r.std_error);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    for (model, set) in [
        (testkit::ou_reference(), testkit::ou_reference_constraint()),
        (testkit::cir_reference(), testkit::cir_reference_constraint()),
    ] {
        let sol = integrate(&model, &set, 0.5, 128).unwrap();
        let policy = TabulatedPolicy::optimal(&model, &sol, &set, 0.5, 64).unwrap();
        let cfg = SimConfig { paths: 3_000, steps: 64, seed: 99, scheme: Scheme::default_for(&model), antithetic: false };
        let outputs: Vec<_> = [1, 4, 8]
            .into_iter()
            .map(|n| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
                pool.install(|| run(&model, &policy, None, 0.5, 1.0, &cfg, true).unwrap())
            })
            .collect();
        for o in &outputs[1..] {
            assert_eq!(o.result.mean_utility.to_bits(), outputs[0].result.mean_utility.to_bits());
            assert_eq!(o.result.std_error.to_bits(), outputs[0].result.std_error.to_bits());
            assert_eq!(o, &outputs[0]);
        }
    }
}
