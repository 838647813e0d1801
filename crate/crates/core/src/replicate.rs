//! Simulation-study harness: repeated simulate / under-report / fit cycles
//! in one `(r1, r2)` cell, comparing the proposed and naive estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, parametric_bootstrap, replicate_seeds, FitConfig, InitialValues};
use crate::model::{
    CovariateMatrix, GaussianComponent, HazardParams, HazardVariant, InfectionParams, ModelParams,
    SheddingParams, SheddingVariant, VariantIntensity, DEFAULT_RECOVERY_RATE,
};
use crate::pseudolik::Scenario;
use crate::simulate::{apply_reporting, simulate_population, AggregatedSeries, ReportingConfig};

/// Parameters summarized per cell, natural scale.
pub const SUMMARY_PARAMETERS: [&str; 6] = ["lambda[1]", "lambda[2]", "alpha[1]", "alpha[2]", "beta[1]", "beta[2]"];

/// Two-variant truth: hazards 0.002 and 0.005, gamma (shape, rate)
/// (0.001, 1e4) and (0.005, 2e4), and two overlapping single-component
/// infection waves.
pub fn study_truth(population_size: u64, time_step: f64) -> ModelParams {
    let wave = |amplitude: f64, center: f64| VariantIntensity {
        components: vec![GaussianComponent {
            amplitude,
            center,
            width: 15.0,
        }],
        recovery_rate: DEFAULT_RECOVERY_RATE,
    };
    ModelParams {
        infection: InfectionParams {
            variants: vec![wave(0.005, 60.0), wave(0.008, 125.0)],
        },
        shedding: SheddingParams {
            variants: vec![
                SheddingVariant {
                    shape: 1e-3,
                    intercept: 1e4f64.ln(),
                    coefficients: Vec::new(),
                },
                SheddingVariant {
                    shape: 5e-3,
                    intercept: 2e4f64.ln(),
                    coefficients: Vec::new(),
                },
            ],
        },
        hazard: HazardParams {
            variants: vec![
                HazardVariant {
                    intercept: 0.002f64.ln(),
                    coefficients: Vec::new(),
                },
                HazardVariant {
                    intercept: 0.005f64.ln(),
                    coefficients: Vec::new(),
                },
            ],
        },
        population_size,
        horizon: 200,
        time_step,
    }
}

/// Natural-scale value of a summary parameter.
pub fn natural_value(params: &ModelParams, name: &str) -> Option<f64> {
    let (kind, rest) = name.split_once('[')?;
    let v: usize = rest.strip_suffix(']')?.parse().ok()?;
    let v = v.checked_sub(1)?;
    match kind {
        "lambda" => Some(params.hazard.variants.get(v)?.intercept.exp()),
        "alpha" => Some(params.shedding.variants.get(v)?.shape),
        "beta" => Some(params.shedding.variants.get(v)?.intercept.exp()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub complete_fraction: f64,
    pub reporting_rate: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Bootstrap replicates per bootstrapped dataset; 0 disables.
    pub bootstrap_replicates: usize,
    /// Number of leading replicates that receive a bootstrap.
    pub bootstrap_datasets: usize,
}

/// Estimates of one fit for the summary parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub estimates: Vec<f64>,
    pub se_fisher: Vec<Option<f64>>,
    pub se_bootstrap: Vec<Option<f64>>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub proposed: FitSummary,
    pub naive: FitSummary,
}

/// One row of a cell summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub truth: f64,
    pub mean_naive: f64,
    pub sd_naive: f64,
    pub mean_proposed: f64,
    pub sd_proposed: f64,
    pub mean_se_fisher: f64,
    pub mean_se_bootstrap: f64,
}

/// Simulated, under-reported dataset of replicate `seed`.
pub fn replicate_series(truth: &ModelParams, cell: &CellConfig, seed: u64) -> Result<AggregatedSeries> {
    let covariates = CovariateMatrix::empty(truth.num_days());
    let full = simulate_population(truth, &covariates, seed)?;
    let reporting = ReportingConfig::new(cell.complete_fraction, cell.reporting_rate, seed ^ 0x5851_f42d_4c95_7f2d)?;
    apply_reporting(&full, &reporting)
}

fn summarize(result: &crate::estimate::FitResult) -> FitSummary {
    FitSummary {
        estimates: SUMMARY_PARAMETERS
            .iter()
            .map(|n| natural_value(&result.estimates, n).unwrap_or(f64::NAN))
            .collect(),
        se_fisher: SUMMARY_PARAMETERS.iter().map(|n| result.fisher(n)).collect(),
        se_bootstrap: SUMMARY_PARAMETERS.iter().map(|n| result.bootstrap_se(n)).collect(),
        converged: result.converged,
    }
}

/// Runs replicate `index` of a cell: one dataset, proposed and naive fits,
/// and a bootstrap when `index < bootstrap_datasets`.
pub fn run_replicate(
    truth: &ModelParams,
    cell: &CellConfig,
    config: &FitConfig,
    index: usize,
) -> Result<ReplicateRecord> {
    let seeds = replicate_seeds(cell.seed, cell.replicates.max(index + 1));
    let seed = seeds[index];
    let data = replicate_series(truth, cell, seed)?;
    let proposed_cfg = FitConfig {
        scenario: Scenario::PolicyInformed,
        naive_mode: false,
        ..config.clone()
    };
    let naive_cfg = FitConfig {
        naive_mode: true,
        ..proposed_cfg.clone()
    };
    let mut proposed = fit(&data, &proposed_cfg)?;
    let naive = fit(&data, &naive_cfg)?;
    if cell.bootstrap_replicates >= 2 && index < cell.bootstrap_datasets {
        let boot_seeds = replicate_seeds(seed ^ 0xb5ad_4ece_da1c_e2a9, cell.bootstrap_replicates);
        let boot_cfg = FitConfig {
            initial_values: InitialValues::Auto,
            ..proposed_cfg
        };
        proposed.bootstrap = Some(parametric_bootstrap(
            &proposed.estimates,
            &data,
            &boot_cfg,
            Some(cell.reporting_rate),
            &boot_seeds,
        )?);
    }
    Ok(ReplicateRecord {
        index,
        seed,
        proposed: summarize(&proposed),
        naive: summarize(&naive),
    })
}

/// Runs every replicate of a cell in parallel; results are in index order.
/// `done` holds records from an earlier partial run, reused by index.
pub fn run_cell(
    truth: &ModelParams,
    cell: &CellConfig,
    config: &FitConfig,
    done: &[ReplicateRecord],
    on_record: impl Fn(&ReplicateRecord) + Sync,
) -> Result<Vec<ReplicateRecord>> {
    if cell.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    (0..cell.replicates)
        .into_par_iter()
        .map(|i| {
            if let Some(r) = done.iter().find(|r| r.index == i) {
                return Ok(r.clone());
            }
            let r = run_replicate(truth, cell, config, i)?;
            on_record(&r);
            Ok(r)
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let v: Vec<f64> = values.flatten().collect();
    mean_sd(&v).0
}

/// Table of means and spreads over replicates. Estimates from
/// non-converged fits are excluded.
pub fn summarize_cell(truth: &ModelParams, records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    SUMMARY_PARAMETERS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let naive: Vec<f64> = records.iter().filter(|r| r.naive.converged).map(|r| r.naive.estimates[j]).collect();
            let proposed: Vec<f64> = records
                .iter()
                .filter(|r| r.proposed.converged)
                .map(|r| r.proposed.estimates[j])
                .collect();
            let (mean_naive, sd_naive) = mean_sd(&naive);
            let (mean_proposed, sd_proposed) = mean_sd(&proposed);
            let conv = || records.iter().filter(|r| r.proposed.converged);
            SummaryRow {
                parameter: name.to_string(),
                truth: natural_value(truth, name).unwrap_or(f64::NAN),
                mean_naive,
                sd_naive,
                mean_proposed,
                sd_proposed,
                mean_se_fisher: mean_defined(conv().map(|r| r.proposed.se_fisher[j])),
                mean_se_bootstrap: mean_defined(conv().map(|r| r.proposed.se_bootstrap[j])),
            }
        })
        .collect()
}
