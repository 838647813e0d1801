use latentepi_core::estimate::{scenario_sweep, FitConfig, InitialValues, ModelStructure};
use latentepi_core::replicate::study_truth;
use latentepi_core::simulate::{apply_reporting, simulate_population};
use latentepi_core::{fit, CovariateMatrix, ReportingConfig, Scenario};

#[test]
fn hazard_covariate_effect_is_recovered() {
    // Low hazard: the at-risk approximation ignores depletion of admitted
    // individuals among the currently infected, which biases large hazards.
    let mut truth = study_truth(50_000, 1.0);
    truth.infection.variants.truncate(1);
    truth.shedding.variants.truncate(1);
    truth.hazard.variants.truncate(1);
    truth.hazard.variants[0].intercept = 0.003f64.ln();
    truth.hazard.variants[0].coefficients = vec![0.7];
    // The switch splits the single wave in half.
    let rows = (0..truth.num_days()).map(|t| vec![if t >= 60 { 1.0 } else { 0.0 }]).collect();
    let x = CovariateMatrix::new(rows).unwrap();
    let full = simulate_population(&truth, &x, 41).unwrap();
    let data = apply_reporting(&full, &ReportingConfig::new(0.8, 0.8, 42).unwrap()).unwrap();
    let mut config = FitConfig::new(ModelStructure::of(&truth), Scenario::PolicyInformed);
    config.structure.hazard_covariates = true;
    config.optimizer.restarts = 1;
    let r = fit(&data, &config).unwrap();
    assert!(r.converged);
    let b = r.value("lambda[1,x1]").unwrap();
    let se = r.fisher("lambda[1,x1]").unwrap();
    assert!((b - 0.7).abs() < 3.0 * se.max(0.05), "{b} +- {se}");
    assert!((r.value("lambda[1]").unwrap() / 0.003 - 1.0).abs() < 0.25);
}

#[test]
fn scenario_sweep_returns_every_scenario_in_order() {
    let truth = study_truth(5_000, 1.0);
    let full = simulate_population(&truth, &CovariateMatrix::empty(truth.num_days()), 43).unwrap();
    let data = apply_reporting(&full, &ReportingConfig::new(0.5, 0.5, 44).unwrap()).unwrap();
    let mut config = FitConfig::new(ModelStructure::of(&truth), Scenario::PolicyInformed);
    config.optimizer.restarts = 1;
    config.compute_fisher = false;
    let fits = scenario_sweep(&data, &Scenario::ALL, &config).unwrap();
    let got: Vec<Scenario> = fits.iter().map(|f| f.scenario).collect();
    assert_eq!(got, Scenario::ALL);
    assert!(fits.iter().all(|f| f.loglik.is_finite()));
    // Full observability reads under-counted cases as truth, which drags
    // the hazard above the policy-informed fit.
    let l_full = fits[0].value("lambda[2]").unwrap();
    let l_policy = fits[1].value("lambda[2]").unwrap();
    assert!(l_full > l_policy, "{l_full} vs {l_policy}");
}

#[test]
fn fixed_centers_stay_put() {
    let truth = study_truth(5_000, 1.0);
    let full = simulate_population(&truth, &CovariateMatrix::empty(truth.num_days()), 45).unwrap();
    let mut config = FitConfig::new(ModelStructure::of(&truth), Scenario::FullObservability);
    config.optimizer.restarts = 1;
    config.fix_centers = true;
    config.compute_fisher = false;
    config.initial_values = InitialValues::Given(truth.clone());
    let r = fit(&full, &config).unwrap();
    assert!(r.names.iter().all(|n| !n.starts_with("b[")));
    assert_eq!(r.estimates.infection.variants[0].components[0].center, 60.0);
    assert_eq!(r.estimates.infection.variants[1].components[0].center, 125.0);
}
