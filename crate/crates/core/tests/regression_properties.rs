mod common;

use common::*;
use downscale::regression::{
    aic, build_design, build_design_centered, default_candidates, fit_ols, predict_point_return, select_model,
    Covariates, DesignSpec,
};
use proptest::prelude::*;

#[test]
fn cubic_surface_recovered_within_reported_ses() {
    let reps = 20;
    let spec = DesignSpec::full(3);
    let mut within = vec![0; spec.n_columns()];
    for seed in 0..reps {
        let recs = surface_records(2000, 0.2, 900 + seed);
        let fit = fit_ols(&build_design_centered(&recs, &spec, SURFACE_CENTER).unwrap()).unwrap();
        for (i, name) in fit.term_names().iter().enumerate() {
            let b = surface_coefficient(name);
            within[i] += usize::from((fit.coeffs[i] - b).abs() <= 3.0 * fit.coeff_ses[i]);
        }
        assert!((fit.sigma2.sqrt() - 0.2).abs() < 0.02);
    }
    assert!(within.iter().all(|&w| w >= 18), "{within:?}");
}

#[test]
fn aic_prefers_cubic_over_linear() {
    for seed in 0..10 {
        let recs = surface_records(2000, 0.2, 40 + seed);
        let sel = select_model(&recs, &default_candidates()).unwrap();
        let a = |d: u8| sel.table.iter().find(|(s, _)| s.latlon_degree == d).unwrap().1.clone().unwrap();
        assert!(a(3).min(a(4)) < a(0).min(a(1)));
        assert!(sel.best.spec.latlon_degree >= 3);
    }
}

#[test]
fn residuals_are_orthogonal_to_design() {
    let recs = surface_records(300, 0.2, 5);
    let d = build_design(&recs, &DesignSpec::full(3)).unwrap();
    let fit = fit_ols(&d).unwrap();
    let r = nalgebra::DVector::from_vec(fit.residuals.clone());
    let xtr = d.x.transpose() * r;
    for (j, v) in xtr.iter().enumerate() {
        let scale = d.x.column(j).norm() * fit.rss.sqrt();
        assert!(v.abs() < 1e-8 * scale, "column {j}: {v}");
    }
}

#[test]
fn centering_changes_coefficients_not_predictions() {
    let recs = surface_records(400, 0.2, 6);
    let spec = DesignSpec::full(3);
    let a = fit_ols(&build_design(&recs, &spec).unwrap()).unwrap();
    let b = fit_ols(&build_design_centered(&recs, &spec, (40.0, -90.0)).unwrap()).unwrap();
    assert!((a.rss - b.rss).abs() < 1e-8 * a.rss);
    assert!((aic(&a).unwrap() - aic(&b).unwrap()).abs() < 1e-6);
    let c = Covariates { x_grid: 500.0, elev: 700.0, lat: 33.0, lon: -101.0 };
    let (pa, pb) = (predict_point_return(&a, &c), predict_point_return(&b, &c));
    assert!((pa.level - pb.level).abs() < 1e-8 * pa.level);
    assert!((pa.se_level - pb.se_level).abs() < 1e-6 * pa.se_level);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn nested_models_never_increase_rss(seed in 0u64..1000) {
        let recs = surface_records(150, 0.3, seed);
        let small = fit_ols(&build_design(&recs, &DesignSpec::full(1)).unwrap()).unwrap();
        let big = fit_ols(&build_design(&recs, &DesignSpec::full(2)).unwrap()).unwrap();
        prop_assert!(big.rss <= small.rss * (1.0 + 1e-12));
    }
}
