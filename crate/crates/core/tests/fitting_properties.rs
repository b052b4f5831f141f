mod common;

use common::*;
use downscale::evd::return_level;
use downscale::fitting::{analyze_series, fit_point_process, return_level_with_se, threshold_stability, AnalysisConfig};
use downscale::preprocess::seasonal_exceedances;
use downscale::series::{Season, YearRange};
use downscale::synth::{simulate_daily_series, simulate_pp_exceedances, SynthConfig};

#[test]
fn point_process_fit_equals_transformed_gpd_fit() {
    let t = truth();
    let u = winter_threshold(&t);
    for seed in 0..50 {
        let peaks = simulate_pp_exceedances(&t, u, 50.0, 500 + seed).unwrap();
        let fit = fit_point_process(&peaks, u, 50.0).unwrap();
        assert!(fit.converged);
        let excess: Vec<f64> = peaks.iter().map(|y| y - u).collect();
        let (sigma, xi) = gpd_mle(&excess);
        let g = pp_from_gpd(u, peaks.len() as f64 / 50.0, sigma, xi);
        for (a, b) in fit.params.as_array().into_iter().zip(g.as_array()) {
            assert!(rel(a, b) < 1e-3, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn estimates_cover_truth() {
    let t = truth();
    let u = winter_threshold(&t);
    let y100 = return_level(&t, 100.0).unwrap();
    let reps = 100;
    let (mut within, mut cover) = ([0; 3], 0);
    for seed in 0..reps {
        let peaks = simulate_pp_exceedances(&t, u, 50.0, 7000 + seed).unwrap();
        let fit = fit_point_process(&peaks, u, 50.0).unwrap();
        assert!(fit.failure.is_none());
        let se = fit.std_errors();
        for (i, (a, b)) in fit.params.as_array().into_iter().zip(t.as_array()).enumerate() {
            within[i] += usize::from((a - b).abs() <= 3.0 * se[i]);
        }
        let rl = return_level_with_se(&fit, 100.0).unwrap();
        cover += usize::from((rl.value - y100).abs() <= 1.96 * rl.se);
    }
    assert!(within.iter().all(|&w| w >= 90), "{within:?}");
    assert!((80..=99).contains(&cover), "coverage {cover}");
}

#[test]
fn hessian_se_agrees_with_bootstrap() {
    let t = truth();
    let u = winter_threshold(&t);
    let peaks = simulate_pp_exceedances(&t, u, 50.0, 42).unwrap();
    let fit = fit_point_process(&peaks, u, 50.0).unwrap();
    let se = fit.std_errors();
    let b = 300;
    let draws: Vec<[f64; 3]> = (0..b)
        .map(|i| {
            let p = simulate_pp_exceedances(&fit.params, u, 50.0, 10_000 + i).unwrap();
            fit_point_process(&p, u, 50.0).unwrap().params.as_array()
        })
        .collect();
    for k in 0..3 {
        let m = draws.iter().map(|d| d[k]).sum::<f64>() / b as f64;
        let sd = (draws.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt();
        assert!(rel(se[k], sd) < 0.25, "param {k}: hessian {} bootstrap {sd}", se[k]);
    }
}

#[test]
fn daily_chain_recovers_return_level() {
    let t = truth();
    let years = YearRange::new(1950, 1999).unwrap();
    let y100 = return_level(&t, 100.0).unwrap();
    let cfg = AnalysisConfig { season: Season::Djf, years, percentile: 0.95, missing_cutoff: 0.1, return_period: 100.0 };
    let mut cover = 0;
    let reps = 40;
    for seed in 0..reps {
        let mut sc = SynthConfig::new(t, years, Some(Season::Djf), 300 + seed);
        sc.missing_rate = 0.02;
        let s = simulate_daily_series(&sc).unwrap();
        let a = analyze_series(&s, &cfg).unwrap();
        assert!(a.exceedances.missing_fraction < 0.05);
        cover += usize::from((a.level.value - y100).abs() <= 2.0 * a.level.se);
    }
    assert!(cover as u64 >= reps * 8 / 10, "coverage {cover}/{reps}");
}

#[test]
fn threshold_stability_deltas_are_small_relative_to_se() {
    let t = truth();
    let years = YearRange::new(1950, 1999).unwrap();
    let s = simulate_daily_series(&SynthConfig::new(t, years, Some(Season::Djf), 11)).unwrap();
    let ex = seasonal_exceedances(&s, Season::Djf, years, 0.9, 0.1).unwrap();
    assert!(ex.peaks.len() > 100);
    let cmp = threshold_stability(&s, Season::Djf, &[0.95, 0.97], 100.0);
    let d = cmp.delta().expect("both fits succeed");
    assert!(d.level.abs() < 3.0 * d.combined_se, "{d:?}");
}
