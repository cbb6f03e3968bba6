use huberlab::distributions::{NoiseSpec, RegressionModel};
use huberlab::loss::ScaleParam;
use huberlab::theory::{oracle_shift, relaxed_bernstein_check, variance_bound_check, MomentInfo};

fn s(v: f64) -> ScaleParam {
    ScaleParam::new(v).unwrap()
}

#[test]
fn bias_shrinks_fast_enough_for_unit_epsilon() {
    // |c(σ)|·σ stays bounded along the grid and |c| keeps shrinking.
    let mut prev = f64::INFINITY;
    let mut sup: f64 = 0.0;
    for sigma in [1.0, 2.0, 4.0, 8.0, 16.0] {
        let c = oracle_shift(&NoiseSpec::Example1, s(sigma)).unwrap();
        assert!(c.abs() < prev);
        prev = c.abs();
        sup = sup.max(c.abs() * sigma);
    }
    assert!(sup.is_finite() && sup < 0.2, "{sup}");
    let c16 = oracle_shift(&NoiseSpec::Example1, s(16.0)).unwrap();
    assert!((c16 - -4.382_123_779_759_993e-8).abs() < 1e-11, "{c16}");
}

#[test]
fn oracle_shift_small_sigma_approaches_median() {
    // As σ → 0 the Huber minimiser tends to the median −¼.
    let c = oracle_shift(&NoiseSpec::Example1, s(0.01)).unwrap();
    assert!((c - -0.248_288_196_745_227_62).abs() < 1e-10, "{c}");
}

#[test]
fn relaxed_bernstein_at_distance_one_tenth() {
    // f = f* + 0.1 has ‖f − f*‖ = 0.1 exactly; the truth stays inside M = 2.1.
    let model = RegressionModel::toy(NoiseSpec::toy_mixture());
    let info = MomentInfo::for_model(&model, 2.0, 2.1).unwrap();
    let f = |x: &[f64]| model.truth.eval(x) + 0.1;
    let check = relaxed_bernstein_check(&f, &model, s(10.0), &info, 1_000_000, 3).unwrap();
    assert!(!check.skipped);
    assert!(check.satisfied, "{check:?}");
    let var = variance_bound_check(&f, &model, s(10.0), &info, 1_000_000, 3).unwrap();
    assert_eq!(var.lhs, check.lhs);
    // κ = 1/3: the variance envelope's first term is c₁·(0.1²)^{1/3}.
    let expect = info.c1().unwrap() * 0.01f64.powf(1.0 / 3.0) + info.c2().unwrap() * 10f64.powf(-1.0);
    assert!((var.rhs - expect).abs() < 1e-6 * expect, "{} vs {expect}", var.rhs);
}

#[test]
fn infinite_moment_is_rejected() {
    let model = RegressionModel::toy(NoiseSpec::StudentT { df: 1.5, scale: 1.0 });
    let info = MomentInfo::for_model(&model, 1.0, 2.0).unwrap();
    assert!(!info.moment_1pe.is_finite());
    let truth = |x: &[f64]| model.truth.eval(x);
    assert!(matches!(
        variance_bound_check(&truth, &model, s(10.0), &info, 100, 1),
        Err(huberlab::Error::Precondition(_))
    ));
}
