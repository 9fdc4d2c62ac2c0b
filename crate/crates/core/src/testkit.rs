//! Reference markets used throughout the tests, the acceptance suite and the
//! example configurations.

use nalgebra::{DMatrix, DVector};

use crate::constraints::ConstraintSet;
use crate::markets::{BlackScholes, CirFactors, MarketKind, MarketModel, OuShortRate};

/// Risk parameter of the reference experiments.
pub const B_RISK: f64 = 0.5;

/// One asset, `r = 0.02`, `eta = 0.04`, `sigma = 0.2`, `T = 1`.
pub fn bs_reference() -> MarketModel {
    let bs = BlackScholes::constant(0.02, &[0.04], &DMatrix::from_element(1, 1, 0.2));
    MarketModel::new(1.0, DVector::zeros(1), MarketKind::Bs(bs)).unwrap()
}

/// Single-factor, single-asset CIR market at its long-run mean.
pub fn cir_single() -> MarketModel {
    let cir = CirFactors {
        block_dims: vec![1],
        kappa: vec![2.0],
        theta: vec![0.04],
        sigma_z: vec![0.3],
        r: 0.02,
        rho: vec![DVector::from_vec(vec![-0.5])],
        eta: vec![DVector::from_vec(vec![2.0])],
        sigma_blocks: vec![DMatrix::from_element(1, 1, 1.0)],
    };
    MarketModel::new(1.0, DVector::from_vec(vec![0.04]), MarketKind::Cir(cir)).unwrap()
}

/// Two CIR factors driving blocks of two and one assets.
pub fn cir_reference() -> MarketModel {
    let cir = CirFactors {
        block_dims: vec![2, 1],
        kappa: vec![2.0, 1.5],
        theta: vec![0.04, 0.09],
        sigma_z: vec![0.3, 0.4],
        r: 0.02,
        rho: vec![DVector::from_vec(vec![-0.5, -0.3]), DVector::from_vec(vec![-0.6])],
        eta: vec![DVector::from_vec(vec![2.0, 1.5]), DVector::from_vec(vec![1.0])],
        sigma_blocks: vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.9]),
            DMatrix::from_element(1, 1, 1.0),
        ],
    };
    MarketModel::new(1.0, DVector::from_vec(vec![0.04, 0.09]), MarketKind::Cir(cir)).unwrap()
}

/// Product of boxes matching the blocks of `cir_reference`.
pub fn cir_reference_constraint() -> ConstraintSet {
    ConstraintSet::product(vec![
        ConstraintSet::uniform_box(2, 0.0, 1.0).unwrap(),
        ConstraintSet::uniform_box(1, 0.0, 0.8).unwrap(),
    ])
    .unwrap()
}

/// One-factor bond market.
pub fn ou_single() -> MarketModel {
    let ou = OuShortRate {
        w0: 0.01,
        w1: DVector::from_vec(vec![1.0]),
        kappa: DVector::from_vec(vec![0.2]),
        theta: DVector::from_vec(vec![0.03]),
        sigma: DMatrix::from_element(1, 1, 0.01),
        eta: DVector::from_vec(vec![-0.2]),
        maturities: vec![5.0],
    };
    MarketModel::new(1.0, DVector::from_vec(vec![0.03]), MarketKind::Ou(ou)).unwrap()
}

/// Two-factor bond market trading bonds maturing at 3 and 10 years.
pub fn ou_reference() -> MarketModel {
    let ou = OuShortRate {
        w0: 0.01,
        w1: DVector::from_vec(vec![1.0, 1.0]),
        kappa: DVector::from_vec(vec![0.2, 0.8]),
        theta: DVector::from_vec(vec![0.01, 0.015]),
        sigma: DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.004, 0.012]),
        eta: DVector::from_vec(vec![-0.3, -0.2]),
        maturities: vec![3.0, 10.0],
    };
    let z0 = ou.theta.clone();
    MarketModel::new(1.0, z0, MarketKind::Ou(ou)).unwrap()
}

/// Box on the bond weights of `ou_reference`.
pub fn ou_reference_constraint() -> ConstraintSet {
    ConstraintSet::uniform_box(2, -1.0, 2.0).unwrap()
}

/// Random constraint set of dimension `d` drawn from every variant
/// (`kind` in `0..5`: full space, box, orthant, polytope, product).
pub fn random_constraint<R: rand::Rng>(rng: &mut R, d: usize, kind: usize) -> ConstraintSet {
    match kind % 5 {
        0 => ConstraintSet::full_space(d).unwrap(),
        1 => {
            let mut lower = Vec::with_capacity(d);
            let mut upper = Vec::with_capacity(d);
            for _ in 0..d {
                let l: f64 = rng.random_range(-1.0..0.5);
                let u = l + rng.random_range(0.1..1.5);
                lower.push(if rng.random_bool(0.2) { f64::NEG_INFINITY } else { l });
                upper.push(if rng.random_bool(0.2) { f64::INFINITY } else { u });
            }
            ConstraintSet::boxed(lower, upper).unwrap()
        }
        2 => ConstraintSet::orthant(d).unwrap(),
        3 => loop {
            let n = d + 1 + rng.random_range(0..4);
            let verts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            if let Ok(k) = ConstraintSet::polytope(verts) {
                break k;
            }
        },
        _ => {
            if d == 1 {
                let k = 1 + rng.random_range(0..3);
                return random_constraint(rng, 1, k);
            }
            let split = rng.random_range(1..d);
            let left = rng.random_range(0..4);
            let right = rng.random_range(0..4);
            ConstraintSet::product(vec![
                random_constraint(rng, split, left),
                random_constraint(rng, d - split, right),
            ])
            .unwrap()
        }
    }
}

/// Random well-conditioned lower-triangular volatility matrix.
pub fn random_sigma<R: rand::Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            rng.random_range(0.1..0.5)
        } else if j < i {
            rng.random_range(-0.2..0.2)
        } else {
            0.0
        }
    })
}

/// Random admissible risk parameter in `[-3, 0.9]`, away from zero.
pub fn random_risk<R: rand::Rng>(rng: &mut R) -> f64 {
    loop {
        let b: f64 = rng.random_range(-3.0..0.9);
        if b.abs() > 0.05 {
            break b;
        }
    }
}
