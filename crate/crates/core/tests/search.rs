mod common;

use chic_core::oracles::brute_force_posterior;
use chic_core::priors::{HyperRule, Scale};
use chic_core::search::{
    bma_coefficients, bma_predict, enumerate_models, inclusion_probabilities, mcmc_search, model_log_prior,
    total_variation, ModelId, ModelPrior, SearchContext, SearchOptions,
};
use chic_core::special::log_sum_exp;
use chic_core::Family;
use common::{logistic_data, poisson_data};
use proptest::prelude::*;

#[test]
fn enumeration_matches_brute_force() {
    let data = logistic_data(250, &[0.9, 0.0, -0.5, 0.0], 21);
    let fam = Family::logistic();
    let ctx = SearchContext::new(&data, fam).unwrap();
    let rules = [
        HyperRule::Robust,
        HyperRule::HyperG { a_h: 3.0 },
        HyperRule::FixedG { g: Scale::TimesN(1.0) },
        HyperRule::Bic,
        HyperRule::LocalEb,
    ];
    for rule in rules {
        for prior in [ModelPrior::Uniform, ModelPrior::BetaBinomial { a: 1.0, b: 1.0 }] {
            let post = enumerate_models(&ctx, &rule, &prior, &SearchOptions::default()).unwrap();
            let brute = brute_force_posterior(&data, &fam, &rule, &prior).unwrap();
            assert_eq!(post.entries.len(), 16);
            for (model, _, prob) in &brute.entries {
                let got = post.probability_of(*model);
                assert!((got - prob).abs() < 1e-8, "{} {model}: {got} vs {prob}", rule.label());
            }
            let pips = inclusion_probabilities(&post);
            for (a, b) in pips.iter().zip(brute.inclusion_probabilities()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn improper_prior_requires_excluding_null() {
    let data = poisson_data(100, &[0.3, 0.0], 3);
    let ctx = SearchContext::new(&data, Family::poisson()).unwrap();
    let rule = HyperRule::Jeffreys;
    assert!(enumerate_models(&ctx, &rule, &ModelPrior::Uniform, &SearchOptions::default()).is_err());
    let post = enumerate_models(&ctx, &rule, &ModelPrior::Uniform, &SearchOptions { exclude_null: true }).unwrap();
    assert_eq!(post.entries.len(), 3);
    assert_eq!(post.probability_of(ModelId(0)), 0.0);
}

#[test]
fn long_chain_on_small_space_reproduces_enumeration() {
    let data = logistic_data(200, &[0.7, -0.6, 0.0, 0.0], 8);
    let ctx = SearchContext::new(&data, Family::logistic()).unwrap();
    let rule = HyperRule::HyperG { a_h: 3.0 };
    let exact = enumerate_models(&ctx, &rule, &ModelPrior::Uniform, &SearchOptions::default()).unwrap();
    let chain = mcmc_search(&ctx, &rule, &ModelPrior::Uniform, 4000, 99, &SearchOptions::default()).unwrap();
    let covered: f64 = chain.entries.iter().map(|e| exact.probability_of(e.model)).sum();
    for e in &exact.entries {
        let seen = chain.entries.iter().any(|c| c.model == e.model);
        assert!(seen || e.probability < 1e-6, "{} unvisited with mass {}", e.model, e.probability);
    }
    for e in &chain.entries {
        assert!((e.probability - exact.probability_of(e.model) / covered).abs() < 1e-12);
    }
    assert!(total_variation(&exact, &chain) <= 1.0 - covered + 1e-12);
    let again = mcmc_search(&ctx, &rule, &ModelPrior::Uniform, 4000, 99, &SearchOptions::default()).unwrap();
    let visits: Vec<usize> = chain.entries.iter().map(|e| e.visits).collect();
    let visits_again: Vec<usize> = again.entries.iter().map(|e| e.visits).collect();
    assert_eq!(visits, visits_again);
}

#[test]
fn predictions_agree_with_coefficients_on_identity_scale() {
    let data = logistic_data(150, &[0.5, 0.5, 0.0], 4);
    let ctx = SearchContext::new(&data, Family::logistic()).unwrap();
    let post = enumerate_models(&ctx, &HyperRule::Robust, &ModelPrior::Uniform, &SearchOptions::default()).unwrap();
    let coefs = bma_coefficients(&post);
    let preds = bma_predict(&post, &Family::logistic(), &data.x, None).unwrap();
    for (i, pred) in preds.iter().enumerate() {
        let eta = coefs[0] + (0..3).map(|j| coefs[j + 1] * data.x[(i, j)]).sum::<f64>();
        assert!((pred.eta - eta).abs() < 1e-10);
        assert!(pred.mean > 0.0 && pred.mean < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_id_round_trips(bits in any::<u128>(), p in 1usize..=128) {
        let mask = if p == 128 { u128::MAX } else { (1u128 << p) - 1 };
        let m = ModelId(bits & mask);
        prop_assert_eq!(ModelId::parse_bitstring(&m.bitstring(p)).unwrap(), m);
        prop_assert_eq!(ModelId::from_columns(&m.columns()), m);
        prop_assert_eq!(m.size(), m.columns().len());
        let j = (bits % p as u128) as usize;
        prop_assert_eq!(m.toggled(j).toggled(j), m);
        prop_assert_ne!(m.toggled(j).contains(j), m.contains(j));
    }

    #[test]
    fn model_priors_are_normalized(p in 1usize..12, a in 0.1f64..5.0, b in 0.1f64..5.0) {
        for prior in [ModelPrior::Uniform, ModelPrior::BetaBinomial { a, b }] {
            let logs: Vec<f64> = (0..1u128 << p).map(|m| model_log_prior(ModelId(m), &prior, p)).collect();
            prop_assert!(log_sum_exp(&logs).abs() < 1e-10);
        }
    }

    #[test]
    fn posterior_is_a_probability_distribution(seed in 0u64..5000) {
        let data = poisson_data(80, &[0.4, 0.0, 0.0], seed);
        let ctx = SearchContext::new(&data, Family::poisson()).unwrap();
        let post = enumerate_models(&ctx, &HyperRule::Intrinsic, &ModelPrior::Uniform, &SearchOptions::default()).unwrap();
        let total: f64 = post.entries.iter().map(|e| e.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for pip in inclusion_probabilities(&post) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pip));
        }
        for e in &post.entries {
            prop_assert!(e.evidence.shrink_mean > 0.0 && e.evidence.shrink_mean <= 1.0 || e.model == ModelId(0));
        }
    }
}

#[test]
fn information_criteria_estimate_from_the_selected_model() {
    use chic_core::fit_glm;
    let data = logistic_data(200, &[1.0, 0.0, 0.0], 13);
    let ctx = SearchContext::new(&data, Family::logistic()).unwrap();
    let post = enumerate_models(&ctx, &HyperRule::Bic, &ModelPrior::Uniform, &SearchOptions::default()).unwrap();
    let est = post.for_estimation();
    assert_eq!(est.entries.len(), 1);
    let map = post.map_model();
    assert_eq!(est.entries[0].model, map);
    let fit = fit_glm(&data, &Family::logistic(), &map.columns()).unwrap();
    let coefs = bma_coefficients(&est);
    assert!((coefs[0] - fit.intercept).abs() < 1e-10);
    for (b, j) in fit.beta.iter().zip(map.columns()) {
        assert!((coefs[j + 1] - b).abs() < 1e-10);
    }
    let robust = enumerate_models(&ctx, &HyperRule::Robust, &ModelPrior::Uniform, &SearchOptions::default()).unwrap();
    assert_eq!(robust.for_estimation().entries.len(), 8);
}
