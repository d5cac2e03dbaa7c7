mod common;

use chic_core::glm::{information_summary, Separation};
use chic_core::oracles::oracle_fit;
use chic_core::{fit_glm, Dataset, Family};
use common::{gaussian_data, logistic_data, poisson_data};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn assert_matches_oracle(data: &Dataset, family: &Family, cols: &[usize]) {
    let fit = fit_glm(data, family, cols).unwrap();
    let oracle = oracle_fit(data, family, cols).unwrap();
    assert!(fit.converged);
    assert!((fit.intercept - oracle.alpha).abs() < 1e-8, "{} vs {}", fit.intercept, oracle.alpha);
    for (a, b) in fit.beta.iter().zip(oracle.beta.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!((fit.loglik - oracle.loglik).abs() < 1e-8 * (1.0 + oracle.loglik.abs()));
    let info = information_summary(data, &fit);
    assert!((info.q - oracle.q).abs() < 1e-6 * (1.0 + oracle.q));
    assert!((info.j_alpha - oracle.j_alpha).abs() < 1e-6 * oracle.j_alpha);
}

#[test]
fn fits_match_reference_optimizer() {
    let bin = logistic_data(300, &[1.0, -0.5, 0.0, 0.3], 5);
    for cols in [vec![], vec![0], vec![1, 3], vec![0, 1, 2, 3]] {
        assert_matches_oracle(&bin, &Family::logistic(), &cols);
        assert_matches_oracle(&bin, &Family::probit(), &cols);
    }
    let pois = poisson_data(200, &[0.4, 0.0, -0.2], 6);
    assert_matches_oracle(&pois, &Family::poisson(), &[0, 1, 2]);
    let gauss = gaussian_data(100, &[0.5, 0.0], 7);
    assert_matches_oracle(&gauss, &Family::gaussian(Some(1.0)), &[0, 1]);
}

#[test]
fn duplicated_column_leaves_fit_unchanged() {
    let data = logistic_data(200, &[0.8, -0.4], 11);
    let mut x = DMatrix::zeros(200, 3);
    x.columns_mut(0, 2).copy_from(&data.x);
    x.set_column(2, &(data.x.column(0) * 2.0));
    let dup = Dataset::unnamed(data.y.clone(), x).unwrap();
    let base = fit_glm(&data, &Family::logistic(), &[0, 1]).unwrap();
    let fit = fit_glm(&dup, &Family::logistic(), &[0, 1, 2]).unwrap();
    assert_eq!(fit.rank(), 2);
    assert!((fit.loglik - base.loglik).abs() < 1e-9);
    // The minimum-norm solution spreads the effect over the collinear pair.
    let combined = fit.beta[0] + 2.0 * fit.beta[2];
    assert!((combined - base.beta[0]).abs() < 1e-7);
    assert!((fit.beta[0] * 2.0 - fit.beta[2]).abs() < 1e-7);
}

#[test]
fn complete_separation_is_flagged() {
    let x = DMatrix::from_column_slice(8, 1, &[-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0]);
    let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    let data = Dataset::unnamed(y, x).unwrap();
    let fit = fit_glm(&data, &Family::logistic(), &[0]).unwrap();
    assert_eq!(fit.separation, Separation::Complete);
}

#[test]
fn non_binary_response_is_rejected_for_bernoulli() {
    let x = DMatrix::from_column_slice(4, 1, &[0.1, 0.2, 0.3, 0.4]);
    let data = Dataset::unnamed(DVector::from_vec(vec![0.0, 2.0, 1.0, 0.0]), x).unwrap();
    assert!(fit_glm(&data, &Family::logistic(), &[0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn score_vanishes_at_the_mle(seed in 0u64..10_000, b0 in -1.5f64..1.5, b1 in -1.5f64..1.5) {
        let data = logistic_data(150, &[b0, b1, 0.0], seed);
        let fit = fit_glm(&data, &Family::logistic(), &[0, 1, 2]).unwrap();
        prop_assume!(fit.separation == Separation::None);
        let r = &data.y - &fit.mu;
        prop_assert!(r.sum().abs() < 1e-8);
        for j in 0..3 {
            prop_assert!(data.x.column(j).dot(&r).abs() < 1e-8);
        }
    }

    #[test]
    fn rescaling_a_column_rescales_its_coefficient(seed in 0u64..10_000, c in 0.05f64..20.0) {
        let data = poisson_data(120, &[0.3, -0.2], seed);
        let mut x = data.x.clone();
        x.column_mut(1).scale_mut(c);
        let scaled = Dataset::unnamed(data.y.clone(), x).unwrap();
        let a = fit_glm(&data, &Family::poisson(), &[0, 1]).unwrap();
        let b = fit_glm(&scaled, &Family::poisson(), &[0, 1]).unwrap();
        prop_assert!((a.loglik - b.loglik).abs() < 1e-8 * (1.0 + a.loglik.abs()));
        prop_assert!((a.beta[1] - c * b.beta[1]).abs() < 1e-7 * (1.0 + a.beta[1].abs()));
        let qa = information_summary(&data, &a).q;
        let qb = information_summary(&scaled, &b).q;
        prop_assert!((qa - qb).abs() < 1e-6 * (1.0 + qa));
    }

    #[test]
    fn deviance_never_increases_with_more_columns(seed in 0u64..10_000) {
        let data = logistic_data(120, &[0.6, 0.0, -0.4, 0.2], seed);
        let fam = Family::logistic();
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let cols: Vec<usize> = (0..k).collect();
            let fit = fit_glm(&data, &fam, &cols).unwrap();
            prop_assume!(fit.separation == Separation::None);
            prop_assert!(fit.deviance <= prev + 1e-9);
            prev = fit.deviance;
        }
    }
}

#[test]
fn quasi_separation_is_flagged() {
    let x = DMatrix::from_column_slice(8, 1, &[-3.0, -2.0, -1.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    let data = Dataset::unnamed(y, x).unwrap();
    let fit = fit_glm(&data, &Family::logistic(), &[0]).unwrap();
    assert_eq!(fit.separation, Separation::Quasi);
}
