use std::collections::BTreeMap;

use chic_core::priors::{
    log_integral_against_kernel, posterior_u_moments, resolve_prior, tcch_log_pdf, u_mean_variance, HyperRule, Scale,
    TcchParams,
};
use chic_core::oracles::reference_kernel_integral;
use proptest::prelude::*;

fn table() -> Vec<HyperRule> {
    vec![
        HyperRule::Ch {
            a: 1.0,
            b: Scale::Fixed(2.0),
            s: Scale::Fixed(0.0),
        },
        HyperRule::Ch {
            a: 0.5,
            b: Scale::TimesN(1.0),
            s: Scale::Fixed(3.0),
        },
        HyperRule::HyperG { a_h: 3.0 },
        HyperRule::Uniform,
        HyperRule::BetaPrime,
        HyperRule::Benchmark { c: 0.01 },
        HyperRule::ZsAdapted,
        HyperRule::Robust,
        HyperRule::HyperGOverN { a_h: 3.0 },
        HyperRule::Intrinsic,
    ]
}

fn arb_params() -> impl Strategy<Value = TcchParams> {
    (0.05f64..6.0, 0.05f64..6.0, -5.0f64..5.0, -10.0f64..10.0, 1.0f64..40.0, 0.2f64..5.0)
        .prop_map(|(a, b, r, s, v, k)| TcchParams::from_abrsvk(a, b, r, s, v, k).unwrap())
}

#[test]
fn table_priors_resolve_to_proper_densities() {
    for rule in table() {
        for &(n, p) in &[(50usize, 1usize), (500, 5), (5000, 20)] {
            let params = resolve_prior(&rule, n, p, 20).unwrap();
            assert!(params.is_proper(), "{} n={n} p={p}", rule.label());
            let log_mass = log_integral_against_kernel(&params, |_| 0.0).unwrap() - params.log_normalizer().unwrap();
            assert!(log_mass.abs() < 1e-9, "{}: log mass {log_mass}", rule.label());
        }
    }
}

#[test]
fn jeffreys_is_improper() {
    let params = resolve_prior(&HyperRule::Jeffreys, 100, 3, 10).unwrap();
    assert!(!params.is_proper());
}

#[test]
fn rule_names_parse_with_arguments() {
    let mut args = BTreeMap::new();
    args.insert("a".to_string(), "4".to_string());
    assert_eq!(
        HyperRule::from_name("Hyper-g/n", &args).unwrap(),
        HyperRule::HyperGOverN { a_h: 4.0 }
    );
    args.insert("a".to_string(), "5".to_string());
    assert!(HyperRule::from_name("hyper_g", &args).is_err());
    assert!(HyperRule::from_name("robust", &args).is_err());
    assert!(HyperRule::from_name("no_such_prior", &BTreeMap::new()).is_err());
    let mut g = BTreeMap::new();
    g.insert("g".to_string(), "2.5n".to_string());
    assert_eq!(
        HyperRule::from_name("fixed_g", &g).unwrap(),
        HyperRule::FixedG { g: Scale::TimesN(2.5) }
    );
}

#[test]
fn scale_parsing_and_display_round_trip() {
    for text in ["3.5", "n", "2n", "0.5n"] {
        let s = Scale::parse(text).unwrap();
        assert_eq!(Scale::parse(&s.to_string()).unwrap(), s);
    }
    assert_eq!(Scale::parse("4*n").unwrap(), Scale::TimesN(4.0));
    assert_eq!(Scale::TimesN(2.0).at(30), 60.0);
    assert!(Scale::parse("abc").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalizer_matches_reference_quadrature(params in arb_params()) {
        let analytic = params.log_normalizer().unwrap();
        let reference = reference_kernel_integral(&params, 0.0, |_| 0.0).unwrap();
        prop_assert!((analytic - reference).abs() < 1e-8 * (1.0 + reference.abs()), "{analytic} vs {reference}");
    }

    #[test]
    fn density_is_normalized_kernel(params in arb_params(), w in 0.01f64..0.99) {
        let u = w * params.upper();
        let lhs = tcch_log_pdf(u, &params).unwrap();
        let rhs = params.log_kernel(u) - params.log_normalizer().unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn moments_lie_in_the_support(params in arb_params()) {
        let (mean, var) = u_mean_variance(&params).unwrap();
        let upper = params.upper();
        prop_assert!(mean > 0.0 && mean < upper);
        prop_assert!(var >= -1e-12 && var <= mean * (upper - mean) + 1e-12);
        let m2 = posterior_u_moments(&params, 2).unwrap();
        prop_assert!((m2 - mean * mean - var).abs() < 1e-9 * (1.0 + m2));
    }
}
