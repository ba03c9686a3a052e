use ttfm::cp::{self, CpOptions};
use ttfm::simulation::{self, align, generate, SimConfig, StudyGrid, STUDY_HEADER};
use ttfm::Error;

#[test]
fn generation_is_deterministic_per_seed_and_replicate() {
    let cfg = SimConfig::reference(vec![4, 5], 60, 1.0);
    let a = generate(&cfg, 3).unwrap();
    let b = generate(&cfg, 3).unwrap();
    assert_eq!(a.factors, b.factors);
    assert_eq!(a.observations, b.observations);
    let c = generate(&cfg, 4).unwrap();
    assert_ne!(a.factors, c.factors);
    let other = SimConfig { seed: 1, ..cfg };
    assert_ne!(a.factors, generate(&other, 3).unwrap().factors);
}

#[test]
fn zero_noise_observations_equal_the_signal() {
    let cfg = SimConfig::reference(vec![4, 5], 60, f64::INFINITY);
    let truth = generate(&cfg, 0).unwrap();
    assert_eq!(truth.observations.items(), &truth.signal[..]);
}

#[test]
fn stored_signal_matches_truth_reconstruction() {
    let cfg = SimConfig::reference(vec![5, 7], 80, 2.0);
    let truth = generate(&cfg, 0).unwrap();
    let model = truth.model();
    for (t, m) in truth.signal.iter().enumerate() {
        let f: Vec<f64> = truth.factors.iter().map(|p| truth.strength * p[t]).collect();
        assert_eq!(&cp::reconstruct_values(&model, &f).unwrap(), m);
    }
    // Noise is the difference and has the configured scale.
    let sigma = cfg.sigma();
    let mut ss = 0.0;
    let mut n = 0.0;
    for (x, m) in truth.observations.iter().zip(&truth.signal) {
        ss += x.sub(m).unwrap().frobenius_sq();
        n += x.len() as f64;
    }
    let sd = (ss / n).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.05, "noise sd {sd} vs {sigma}");
    for lj in &truth.loadings {
        for u in lj {
            let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn factor_recurrence_residuals_have_unit_variance() {
    let cfg = SimConfig::reference(vec![3, 3], 5000, 1.0);
    let truth = generate(&cfg, 0).unwrap();
    let f = &truth.factors[2];
    // Lower regime below zero with coefficient 0.7, upper at or above zero with -0.8.
    let resid: Vec<f64> = (1..f.len())
        .map(|t| f[t] - if f[t - 1] < 0.0 { 0.7 } else { -0.8 } * f[t - 1])
        .collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    let var = resid.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
    assert!((var - 1.0).abs() < 0.1, "residual variance {var}");
    assert!(mean.abs() < 0.1);
}

#[test]
fn config_validation_lists_problems() {
    let mut cfg = SimConfig::reference(vec![1, 5], 10, -1.0);
    cfg.factors.clear();
    match cfg.validate().unwrap_err() {
        Error::Config(list) => assert_eq!(list.len(), 4, "{list:?}"),
        e => panic!("unexpected {e:?}"),
    }
    let too_many = SimConfig::reference(vec![2, 5], 100, 1.0);
    assert!(too_many.validate().is_err());
}

#[test]
fn restarts_with_different_seeds_agree_up_to_sign_and_order() {
    let cfg = SimConfig::reference(vec![10, 14], 500, 2.0);
    let truth = generate(&cfg, 0).unwrap();
    let fit = |seed| {
        let opts = CpOptions {
            restarts: 3,
            seed,
            ..CpOptions::default()
        };
        cp::fit_cp(&truth.observations, 3, 1, &opts).unwrap().model
    };
    let a = fit(1);
    let b = fit(2);
    let al = align(&b, &a.loadings).unwrap();
    for row in &al.discrepancy {
        for &d in row {
            assert!(d < 1e-6, "discrepancy {d}");
        }
    }
}

#[test]
fn factor_extraction_error_shrinks_with_snr() {
    let worst = |snr: f64| -> f64 {
        (0..5u64)
            .map(|rep| {
                let cfg = SimConfig::reference(vec![10, 14], 500, snr);
                let truth = generate(&cfg, rep).unwrap();
                let fit = cp::fit_cp(&truth.observations, 3, 1, &CpOptions::default()).unwrap();
                let al = align(&fit.model, &truth.loadings).unwrap();
                let panel = cp::extract_factors(&truth.observations, &al.apply(&fit.model)).unwrap();
                panel
                    .factors
                    .iter()
                    .zip(&truth.factors)
                    .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 5.0
    };
    let e: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&s| worst(s)).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn classification_proportion_counts_agreement() {
    let z_true = [-1.0, -0.5, 0.5, 1.0];
    let z_hat = [-0.9, 0.1, 0.2, 1.1];
    let p = simulation::regime_classification_proportion(&z_hat, 0.0, &z_true).unwrap();
    assert_eq!(p, 0.75);
    // Boundary: estimated lower regime includes the threshold itself.
    let p = simulation::regime_classification_proportion(&[0.0], 0.0, &[-1.0]).unwrap();
    assert_eq!(p, 1.0);
    assert!(simulation::regime_classification_proportion(&[], 0.0, &[]).is_err());
    assert!(simulation::regime_classification_proportion(&[1.0], 0.0, &[]).is_err());
}

#[test]
fn permutations_enumerates_every_ordering_once() {
    let p = simulation::permutations(4);
    assert_eq!(p.len(), 24);
    let mut sorted = p.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), 24);
    assert_eq!(p[0], vec![0, 1, 2, 3]);
}

#[test]
fn replicate_rows_cover_every_metric() {
    let mut cfg = SimConfig::reference(vec![5, 7], 200, 1.0);
    cfg.horizon = 30;
    let rows = simulation::run_replicate(&cfg, 0).unwrap();
    let count = |m: &str| rows.iter().filter(|r| r.metric == m).count();
    assert_eq!(count(simulation::METRIC_LOG_MSE), 3);
    assert_eq!(count(simulation::METRIC_PROP_EST), 3);
    assert_eq!(count(simulation::METRIC_PROP_REAL), 3);
    assert_eq!(count(simulation::METRIC_PRED_OBS_EST), 1);
    assert_eq!(count(simulation::METRIC_PRED_SIGNAL_REAL), 1);
    for r in &rows {
        assert!(r.value.is_finite());
        if r.metric.starts_with("prop") {
            assert!((0.0..=1.0).contains(&r.value));
        }
        if r.metric.starts_with("pred") {
            assert!(r.value >= 0.0);
        }
    }
    assert_eq!(STUDY_HEADER.split(',').count(), rows[0].to_csv_line().split(',').count());
}

#[test]
fn study_is_independent_of_scheduling() {
    let grid = StudyGrid {
        dims: vec![vec![4, 5]],
        snr: vec![1.0, 2.0],
        t: vec![100],
        replicates: 3,
        horizon: 10,
        seed: 9,
    };
    let a = simulation::run_study(&grid).unwrap();
    let b = simulation::run_study(&grid).unwrap();
    assert_eq!(a, b);
    assert_eq!(grid.cells().len(), 2);
    let serial: Vec<_> = grid
        .cells()
        .iter()
        .flat_map(|c| (0..3).flat_map(|rep| simulation::run_replicate(c, rep).unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(a, serial);
}

#[test]
fn reference_grid_has_27_cells() {
    let g = StudyGrid::reference(25, 0);
    let cells = g.cells();
    assert_eq!(cells.len(), 27);
    assert!(cells.iter().all(|c| c.replicates == 25 && c.factors.len() == 3));
}
