use evclt_core::asymptotics::{condition_path, LindebergArray, LindebergMethod};
use evclt_core::estimator::fit_xy;
use evclt_core::harness::run_experiment;
use evclt_core::numeric::{mean, median};
use evclt_core::{
    draw_sample, summarize, ConditionId, DesignKind, DesignSequence, EVModelSpec, ErrorDistribution, ExperimentConfig,
    Family, TestKind, Thresholds, VarianceSource, VerdictRule,
};
use proptest::prelude::*;

fn spec() -> EVModelSpec {
    EVModelSpec::new(1.0, 2.0, ErrorDistribution::normal(1.0), ErrorDistribution::normal(1.0))
}

fn design_strategy() -> impl Strategy<Value = DesignSequence> {
    prop_oneof![
        (0.1f64..5.0).prop_map(DesignSequence::linear),
        (0.5f64..3.0).prop_map(|p| DesignSequence::new(DesignKind::Power { exponent: p })),
        (0.1f64..5.0).prop_map(DesignSequence::alternating),
        (0.1f64..4.0).prop_map(|a| DesignSequence::new(DesignKind::Bounded { amplitude: a })),
        (0.1f64..4.0, any::<u64>()).prop_map(|(sd, s)| DesignSequence::gaussian_iid(sd, s)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_equivariance(seed in any::<u64>(), c in -1e3f64..1e3, n in 5usize..300) {
        let s = draw_sample(&spec(), &DesignSequence::linear(1.0), n, seed, 0, false).unwrap();
        let a = fit_xy(&s.xi, &s.eta).unwrap();
        let shifted: Vec<f64> = s.eta.iter().map(|v| v + c).collect();
        let b = fit_xy(&s.xi, &shifted).unwrap();
        prop_assert!((b.beta_hat - a.beta_hat).abs() <= 1e-12 * (1.0 + a.beta_hat.abs()) * (1.0 + c.abs()));
        prop_assert!((b.theta_hat - (a.theta_hat + c)).abs() <= 1e-12 * (1.0 + a.theta_hat.abs() + c.abs()) * 10.0);
    }

    #[test]
    fn scale_equivariance(seed in any::<u64>(), lambda in -50f64..50.0, n in 5usize..300) {
        let s = draw_sample(&spec(), &DesignSequence::alternating(1.0), n, seed, 1, false).unwrap();
        let a = fit_xy(&s.xi, &s.eta).unwrap();
        let scaled: Vec<f64> = s.eta.iter().map(|v| v * lambda).collect();
        let b = fit_xy(&s.xi, &scaled).unwrap();
        let tol = |v: f64| 1e-12 * (1.0 + (lambda * v).abs());
        prop_assert!((b.beta_hat - lambda * a.beta_hat).abs() <= tol(a.beta_hat));
        prop_assert!((b.theta_hat - lambda * a.theta_hat).abs() <= tol(a.theta_hat));
    }

    #[test]
    fn design_prefix(design in design_strategy(), m in 2usize..200, extra in 0usize..200) {
        let long = design.generate(m + extra).unwrap();
        prop_assert_eq!(&long[..m], &design.generate(m).unwrap()[..]);
    }

    #[test]
    fn design_shift_and_scale(design in design_strategy(), c in -100f64..100.0, lambda in 0.1f64..10.0, n in 2usize..300) {
        let x = design.generate(n).unwrap();
        let base = summarize(&x).unwrap();
        let shifted = summarize(&x.iter().map(|v| v + c).collect::<Vec<_>>()).unwrap();
        let scaled = summarize(&x.iter().map(|v| v * lambda).collect::<Vec<_>>()).unwrap();
        let tol = 1e-9 * (1.0 + base.s_n);
        prop_assert!((shifted.s_n - base.s_n).abs() <= tol * (1.0 + c.abs()));
        prop_assert!((scaled.s_n - lambda * lambda * base.s_n).abs() <= tol * lambda * lambda);
        prop_assert!((shifted.mean - base.mean - c).abs() <= 1e-9 * (1.0 + c.abs() + base.mean.abs()));
    }

    #[test]
    fn lindeberg_in_unit_interval(design in design_strategy(), n in 5usize..200, r in 0.01f64..3.0) {
        let x = design.generate(n).unwrap();
        let arr = LindebergArray::new(&x, &spec()).unwrap();
        let v = arr.sum(r, LindebergMethod::Quadrature, 0, 0).unwrap().sum_value;
        prop_assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn error_streams_have_the_right_moments() {
    let spec = EVModelSpec::new(
        0.0,
        1.0,
        ErrorDistribution::new(Family::Laplace, 1.0).unwrap(),
        ErrorDistribution::new(Family::UniformCentered, 1.0).unwrap(),
    );
    let x = vec![0.0; 200_000];
    let s = evclt_core::model::draw_sample_on(&spec, &DesignSequence::linear(1.0), &x, 3, 0, true).unwrap();
    let eps = s.latent_eps.unwrap();
    let delta = s.latent_delta.unwrap();
    let se = |var: f64| 4.0 * (var / x.len() as f64).sqrt();
    assert!(mean(&eps).abs() < se(2.0));
    assert!(mean(&delta).abs() < se(1.0 / 3.0));
    let v_eps = eps.iter().map(|e| e * e).sum::<f64>() / x.len() as f64;
    let v_delta = delta.iter().map(|d| d * d).sum::<f64>() / x.len() as f64;
    // fourth moments: Laplace 24, uniform 1/5
    assert!((v_eps - 2.0).abs() < se(24.0 - 4.0));
    assert!((v_delta - 1.0 / 3.0).abs() < se(0.2 - 1.0 / 9.0));
}

#[test]
fn replicates_and_streams_are_uncorrelated() {
    let n = 50_000;
    let a = draw_sample(&spec(), &DesignSequence::linear(1.0), n, 5, 0, true).unwrap();
    let b = draw_sample(&spec(), &DesignSequence::linear(1.0), n, 5, 1, true).unwrap();
    let corr = |u: &[f64], v: &[f64]| {
        let (mu, mv) = (mean(u), mean(v));
        let c: f64 = u.iter().zip(v).map(|(x, y)| (x - mu) * (y - mv)).sum();
        let su: f64 = u.iter().map(|x| (x - mu).powi(2)).sum();
        let sv: f64 = v.iter().map(|y| (y - mv).powi(2)).sum();
        c / (su * sv).sqrt()
    };
    let bound = 4.0 / (n as f64).sqrt();
    let (ea, eb) = (a.latent_eps.unwrap(), b.latent_eps.unwrap());
    let da = a.latent_delta.unwrap();
    assert!(corr(&ea, &eb).abs() < bound);
    assert!(corr(&ea, &da).abs() < bound);
    assert!(corr(&ea[1..], &ea[..n - 1]).abs() < bound);
}

#[test]
fn condition_paths_are_bit_stable() {
    let rule = VerdictRule::default();
    let grid = [50, 100, 200, 500, 1000];
    for c in [ConditionId::C6, ConditionId::C7, ConditionId::LiuChenBeta, ConditionId::ThetaConsistency, ConditionId::C17] {
        let d = DesignSequence::gaussian_iid(1.0, 9);
        let a = condition_path(c, &d, None, &grid, &rule).unwrap();
        let b = condition_path(c, &d, None, &grid, &rule).unwrap();
        assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn lindeberg_decreases_along_grid_under_c7() {
    let rule_r = 0.3;
    for design in [DesignSequence::linear(1.0), DesignSequence::new(DesignKind::Power { exponent: 2.0 })] {
        let mut prev = f64::INFINITY;
        for n in [50, 200, 1000] {
            let arr = LindebergArray::new(&design.generate(n).unwrap(), &spec()).unwrap();
            let v = arr.sum(rule_r, LindebergMethod::Quadrature, 0, 0).unwrap().sum_value;
            assert!(v < prev, "{design}: n={n} {v} >= {prev}");
            prev = v;
        }
    }
}

#[test]
fn plug_in_residual_variance_converges() {
    let config = ExperimentConfig {
        design: DesignSequence::linear(1.0),
        model: spec(),
        n_grid: vec![100, 1000, 10000],
        replicates: 200,
        seed: 2,
        variance_source: VarianceSource::PlugIn,
        tests: vec![TestKind::Negligibility],
        thresholds: Thresholds::default(),
        verdict_rule: VerdictRule::default(),
    };
    let rep = run_experiment(&config).unwrap();
    let gaps: Vec<f64> = rep.points.iter().map(|p| p.median_plug_in_gap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(median(&gaps) < 1.0);
}
