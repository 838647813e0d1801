//! Run configuration: `[model]`, `[simulate]`, `[fit]` and `[io]` tables.
//! Every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use latentepi_core::estimate::{FitConfig, InitialValues, ModelStructure, OptimizerConfig};
use latentepi_core::model::{
    CovariateMatrix, GaussianComponent, HazardParams, HazardVariant, InfectionParams, ModelParams,
    SheddingParams, SheddingVariant, VariantIntensity, DEFAULT_RECOVERY_RATE,
};
use latentepi_core::Scenario;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub fit: FitSection,
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            simulate: SimulateSection::default(),
            fit: FitSection::default(),
            io: IoSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub num_variants: usize,
    pub population_size: u64,
    pub horizon: usize,
    pub time_step: f64,
    /// One per variant; defaults to 0.07 each.
    pub recovery_rates: Option<Vec<f64>>,
    /// Mixture components per variant; defaults to 1 each.
    pub components: Option<Vec<usize>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            num_variants: 2,
            population_size: 20_000,
            horizon: 200,
            time_step: 1.0,
            recovery_rates: None,
            components: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub components: Vec<ComponentSpec>,
    pub shedding_shape: f64,
    /// Baseline gamma rate, `exp(intercept)`.
    pub shedding_rate: f64,
    #[serde(default)]
    pub shedding_coefficients: Vec<f64>,
    /// Baseline admission hazard per day.
    pub hazard: f64,
    #[serde(default)]
    pub hazard_coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub seed: u64,
    pub replicates: usize,
    pub complete_fraction: f64,
    pub reporting_rate: f64,
    /// Days at which period indicators `x1, x2, ...` switch on.
    pub period_starts: Vec<usize>,
    /// `(r1, r2)` cells for the replication study.
    pub cells: Vec<[f64; 2]>,
    /// Replicates per cell that also receive a bootstrap.
    pub bootstrap_datasets: usize,
    /// Truth; defaults to the two-wave study design.
    pub variants: Option<Vec<VariantSpec>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            seed: 1,
            replicates: 1,
            complete_fraction: 0.8,
            reporting_rate: 0.8,
            period_starts: Vec::new(),
            cells: vec![[0.8, 0.8], [0.8, 0.2], [0.2, 0.8], [0.2, 0.2]],
            bootstrap_datasets: 0,
            variants: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Auto,
    /// Start from the `[simulate]` truth.
    Truth,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub scenario: u8,
    pub naive_mode: bool,
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub restarts: usize,
    pub block_cycles: usize,
    pub fix_centers: bool,
    pub initial: InitialSpec,
    pub seed: u64,
    pub shedding_covariates: bool,
    pub hazard_covariates: bool,
    /// Parametric bootstrap replicates `B`; 0 disables.
    pub bootstrap_replicates: usize,
    /// Reporting probability used by the bootstrap; inferred when absent.
    pub reporting_rate: Option<f64>,
    pub predictive_simulations: usize,
    /// Also fit every scenario in `report`.
    pub sweep: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            scenario: 2,
            naive_mode: false,
            max_evals: o.max_evals,
            ftol: o.ftol,
            xtol: o.xtol,
            restarts: o.restarts,
            block_cycles: o.block_cycles,
            fix_centers: false,
            initial: InitialSpec::Auto,
            seed: 7,
            shedding_covariates: false,
            hazard_covariates: false,
            bootstrap_replicates: 0,
            reporting_rate: None,
            predictive_simulations: 100,
            sweep: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    /// Fitted parameters for `bootstrap` and `report`; defaults to
    /// `<output>/params.toml`.
    pub params: Option<PathBuf>,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            input: None,
            output: PathBuf::from("out"),
            params: None,
        }
    }
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        bail!("`{name}` must lie in [0, 1], got {v}");
    }
    Ok(())
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", e.message().trim()).context(describe(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.num_variants == 0 {
            bail!("`model.num_variants` must be >= 1");
        }
        if m.population_size == 0 {
            bail!("`model.population_size` must be >= 1");
        }
        if m.horizon == 0 {
            bail!("`model.horizon` must be >= 1");
        }
        if !(m.time_step > 0.0 && m.time_step <= 1.0) || ((1.0 / m.time_step).round() * m.time_step - 1.0).abs() > 1e-9 {
            bail!("`model.time_step` must divide one day, got {}", m.time_step);
        }
        if let Some(r) = &m.recovery_rates {
            if r.len() != m.num_variants {
                bail!("`model.recovery_rates` needs {} entries, got {}", m.num_variants, r.len());
            }
            if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                bail!("`model.recovery_rates` must be positive");
            }
        }
        if let Some(c) = &m.components {
            if c.len() != m.num_variants {
                bail!("`model.components` needs {} entries, got {}", m.num_variants, c.len());
            }
            if c.iter().any(|&x| x == 0) {
                bail!("`model.components` entries must be >= 1");
            }
        }
        let s = &self.simulate;
        if s.replicates == 0 {
            bail!("`simulate.replicates` must be >= 1");
        }
        in_unit("simulate.complete_fraction", s.complete_fraction)?;
        in_unit("simulate.reporting_rate", s.reporting_rate)?;
        for (i, c) in s.cells.iter().enumerate() {
            in_unit(&format!("simulate.cells[{i}]"), c[0])?;
            in_unit(&format!("simulate.cells[{i}]"), c[1])?;
        }
        if s.period_starts.iter().any(|&d| d > m.horizon) {
            bail!("`simulate.period_starts` must lie within the horizon");
        }
        if let Some(vs) = &s.variants {
            if vs.len() != m.num_variants {
                bail!("`simulate.variants` needs {} entries, got {}", m.num_variants, vs.len());
            }
            if let Some(c) = &m.components {
                for (v, (spec, &mk)) in vs.iter().zip(c).enumerate() {
                    if spec.components.len() != mk {
                        bail!("`simulate.variants[{v}].components` needs {mk} entries");
                    }
                }
            }
            for (v, spec) in vs.iter().enumerate() {
                if !(spec.shedding_rate > 0.0 && spec.hazard > 0.0) {
                    bail!("`simulate.variants[{v}]`: shedding_rate and hazard must be > 0");
                }
                let p = s.period_starts.len();
                if !spec.shedding_coefficients.is_empty() && spec.shedding_coefficients.len() != p {
                    bail!("`simulate.variants[{v}].shedding_coefficients` needs {p} entries");
                }
                if !spec.hazard_coefficients.is_empty() && spec.hazard_coefficients.len() != p {
                    bail!("`simulate.variants[{v}].hazard_coefficients` needs {p} entries");
                }
            }
            self.truth()?.validate().context("`simulate.variants`")?;
        } else if m.num_variants != 2 || m.components.as_ref().is_some_and(|c| c != &[1, 1]) {
            bail!("`simulate.variants` is required unless the model has two single-component variants");
        }
        let f = &self.fit;
        if Scenario::from_number(f.scenario).is_none() {
            bail!("`fit.scenario` must be 1, 2 or 3, got {}", f.scenario);
        }
        if !(f.ftol > 0.0) {
            bail!("`fit.ftol` must be > 0");
        }
        if !(f.xtol > 0.0) {
            bail!("`fit.xtol` must be > 0");
        }
        if f.restarts == 0 {
            bail!("`fit.restarts` must be >= 1");
        }
        if f.max_evals == 0 {
            bail!("`fit.max_evals` must be >= 1");
        }
        if f.bootstrap_replicates == 1 {
            bail!("`fit.bootstrap_replicates` must be 0 or >= 2");
        }
        if let Some(r) = f.reporting_rate {
            in_unit("fit.reporting_rate", r)?;
        }
        if f.predictive_simulations < 2 {
            bail!("`fit.predictive_simulations` must be >= 2");
        }
        Ok(())
    }

    pub fn recovery_rates(&self) -> Vec<f64> {
        self.model
            .recovery_rates
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_RECOVERY_RATE; self.model.num_variants])
    }

    pub fn components(&self) -> Vec<usize> {
        match (&self.model.components, &self.simulate.variants) {
            (Some(c), _) => c.clone(),
            (None, Some(vs)) => vs.iter().map(|v| v.components.len()).collect(),
            (None, None) => vec![1; self.model.num_variants],
        }
    }

    /// Simulation truth.
    pub fn truth(&self) -> Result<ModelParams> {
        let m = &self.model;
        let Some(specs) = &self.simulate.variants else {
            let mut p = latentepi_core::replicate::study_truth(m.population_size, m.time_step);
            if m.horizon != p.horizon {
                p.horizon = m.horizon;
            }
            for (v, r) in p.infection.variants.iter_mut().zip(self.recovery_rates()) {
                v.recovery_rate = r;
            }
            return Ok(p);
        };
        let rates = self.recovery_rates();
        let params = ModelParams {
            infection: InfectionParams {
                variants: specs
                    .iter()
                    .zip(&rates)
                    .map(|(s, &r)| VariantIntensity {
                        components: s
                            .components
                            .iter()
                            .map(|c| GaussianComponent {
                                amplitude: c.amplitude,
                                center: c.center,
                                width: c.width,
                            })
                            .collect(),
                        recovery_rate: r,
                    })
                    .collect(),
            },
            shedding: SheddingParams {
                variants: specs
                    .iter()
                    .map(|s| SheddingVariant {
                        shape: s.shedding_shape,
                        intercept: s.shedding_rate.ln(),
                        coefficients: s.shedding_coefficients.clone(),
                    })
                    .collect(),
            },
            hazard: HazardParams {
                variants: specs
                    .iter()
                    .map(|s| HazardVariant {
                        intercept: s.hazard.ln(),
                        coefficients: s.hazard_coefficients.clone(),
                    })
                    .collect(),
            },
            population_size: m.population_size,
            horizon: m.horizon,
            time_step: m.time_step,
        };
        Ok(params)
    }

    /// Period indicator covariates for simulation.
    pub fn covariates(&self) -> Result<CovariateMatrix> {
        let n = self.model.horizon + 1;
        if self.simulate.period_starts.is_empty() {
            return Ok(CovariateMatrix::empty(n));
        }
        let rows = (0..n)
            .map(|t| {
                self.simulate
                    .period_starts
                    .iter()
                    .map(|&d| if t >= d { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(CovariateMatrix::new(rows)?)
    }

    pub fn structure(&self) -> ModelStructure {
        ModelStructure {
            population_size: self.model.population_size,
            components: self.components(),
            recovery_rates: self.recovery_rates(),
            time_step: self.model.time_step,
            shedding_covariates: self.fit.shedding_covariates,
            hazard_covariates: self.fit.hazard_covariates,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::from_number(self.fit.scenario).expect("validated")
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let f = &self.fit;
        let initial_values = match f.initial {
            InitialSpec::Auto => InitialValues::Auto,
            InitialSpec::Truth => {
                let mut t = self.truth()?;
                let dim = self.simulate.period_starts.len();
                for v in &mut t.shedding.variants {
                    v.coefficients = if f.shedding_covariates { vec![0.0; dim] } else { Vec::new() };
                }
                for v in &mut t.hazard.variants {
                    v.coefficients = if f.hazard_covariates { vec![0.0; dim] } else { Vec::new() };
                }
                InitialValues::Given(t)
            }
        };
        Ok(FitConfig {
            structure: self.structure(),
            scenario: self.scenario(),
            naive_mode: f.naive_mode,
            optimizer: OptimizerConfig {
                max_evals: f.max_evals,
                ftol: f.ftol,
                xtol: f.xtol,
                restarts: f.restarts,
                block_cycles: f.block_cycles,
            },
            initial_values,
            fix_centers: f.fix_centers,
            seed: f.seed,
            compute_fisher: true,
        })
    }

    pub fn params_path(&self) -> PathBuf {
        self.io.params.clone().unwrap_or_else(|| self.io.output.join("params.toml"))
    }
}

fn describe(e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => format!("config error at byte {}..{}", span.start, span.end),
        None => "config error".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        let t = c.truth().unwrap();
        assert_eq!(t.num_variants(), 2);
        assert_eq!(c.components(), vec![1, 1]);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::from_str("[fit]\nrestart = 2\n").unwrap_err();
        assert!(format!("{err:#}").contains("restart"), "{err:#}");
        let err = RunConfig::from_str("[plot]\nx = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("plot"), "{err:#}");
    }

    #[test]
    fn invalid_values_name_the_key() {
        for (text, key) in [
            ("[fit]\nscenario = 4\n", "fit.scenario"),
            ("[simulate]\nreporting_rate = 1.5\n", "simulate.reporting_rate"),
            ("[model]\ntime_step = 0.3\n", "model.time_step"),
            ("[fit]\nrestarts = 0\n", "fit.restarts"),
            ("[model]\nnum_variants = 3\n", "simulate.variants"),
        ] {
            let err = RunConfig::from_str(text).unwrap_err();
            assert!(format!("{err:#}").contains(key), "{text}: {err:#}");
        }
    }

    #[test]
    fn explicit_truth() {
        let text = r#"
[model]
num_variants = 1
population_size = 500
horizon = 50

[simulate]
period_starts = [20]

[[simulate.variants]]
components = [{ amplitude = 0.01, center = 25.0, width = 8.0 }]
shedding_shape = 0.002
shedding_rate = 1e4
hazard = 0.003
hazard_coefficients = [0.5]
"#;
        let c = RunConfig::from_str(text).unwrap();
        let t = c.truth().unwrap();
        assert_eq!(t.hazard.variants[0].coefficients, vec![0.5]);
        assert!((t.shedding.variants[0].rate(&[]) - 1e4).abs() < 1e-8);
        let x = c.covariates().unwrap();
        assert_eq!(x.row(19), &[0.0]);
        assert_eq!(x.row(20), &[1.0]);
    }
}
