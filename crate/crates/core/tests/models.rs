//! Posterior checks of each model against independent oracles in limits where
//! the answer is known.

mod common;

use basket_core::divergence::IndicationData;
use basket_core::inference::{fit, fit_cbhm, BhmSpec, CbhmSpec, McmcConfig, ModelSpec, Rates, VariancePrior};
use basket_core::stats::RngStream;
use common::limits;

fn data(pairs: &[(u32, u32)]) -> Vec<IndicationData> {
    pairs.iter().map(|&(n, r)| IndicationData::new(n, r).unwrap()).collect()
}

fn check_all(checks: Vec<common::LimitCheck>) {
    for c in &checks {
        assert!(c.passes(), "{c}");
    }
}

#[test]
fn independent_draws_match_conjugate_mean() {
    check_all(limits::independent());
}

#[test]
fn bhm_single_indication_matches_quadrature() {
    check_all(limits::bhm_single());
}

#[test]
fn exnex_all_nex_matches_independent_normal_priors() {
    check_all(limits::exnex_nex());
}

#[test]
fn exnex_all_ex_matches_bhm_with_the_same_priors() {
    check_all(limits::exnex_ex());
}

#[test]
fn liu_single_indication_matches_mixture_quadrature() {
    check_all(limits::liu_single());
}

#[test]
fn cbhm_shrinks_toward_similar_indications() {
    let d = data(&[(24, 5), (24, 5), (24, 5), (24, 12)]);
    let rates = Rates::common(0.2, 0.4, 4);
    let s = fit_cbhm(&d, &rates, &CbhmSpec::bhattacharyya(), &McmcConfig::default(), &mut RngStream::new(3, 0))
        .unwrap();
    let raw = |r: f64| (r + 1.0) / 26.0;
    for i in 0..3 {
        // the three alike indications stay near their common observed rate
        assert!((s.mean(i) - raw(5.0)).abs() < 0.05, "{}", s.mean(i));
    }
    assert!(s.mean(3) > s.mean(0) + 0.1);
    for r in &s.diagnostics.rhat {
        assert!(*r < 1.1, "R-hat {r}");
    }
}

#[test]
fn cbhm_variants_run_with_their_kernels() {
    let d = data(&[(24, 3), (24, 10), (14, 1), (24, 6)]);
    let rates = Rates::common(0.2, 0.4, 4);
    let cfg = McmcConfig {
        burn_in: 1000,
        keep: 2000,
        ..McmcConfig::default()
    };
    for name in ["cbhm_h", "cbhm_kl"] {
        let spec = ModelSpec::from_name(name).unwrap();
        let post = fit(&spec, &d, &rates, &cfg, &mut RngStream::new(5, 0)).unwrap();
        let m: Vec<f64> = (0..4).map(|i| post.mean(i)).collect();
        assert!(m[1] > m[0] && m[1] > m[2], "{name}: {m:?}");
    }
}

#[test]
fn same_seed_same_draws() {
    let d = data(&[(24, 3), (24, 10), (24, 6)]);
    let rates = Rates::common(0.2, 0.4, 3);
    let cfg = McmcConfig {
        burn_in: 500,
        keep: 500,
        ..McmcConfig::default()
    };
    for name in ["bhm", "exnex", "liu", "cbhm"] {
        let spec = ModelSpec::from_name(name).unwrap();
        let a = fit(&spec, &d, &rates, &cfg, &mut RngStream::new(8, 1)).unwrap();
        let b = fit(&spec, &d, &rates, &cfg, &mut RngStream::new(8, 1)).unwrap();
        assert_eq!(a.samples().unwrap().as_slice(), b.samples().unwrap().as_slice(), "{name}");
    }
}

#[test]
fn variance_priors_reject_invalid_parameters() {
    let bad = ModelSpec::Bhm(BhmSpec {
        sigma2: VariancePrior::inv_gamma(-1.0, 1.0),
        ..BhmSpec::default()
    });
    let d = data(&[(24, 3)]);
    let err = fit(&bad, &d, &Rates::common(0.2, 0.4, 1), &McmcConfig::default(), &mut RngStream::new(0, 0));
    assert!(err.is_err());
}
