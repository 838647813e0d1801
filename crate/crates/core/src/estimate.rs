//! Pseudo-likelihood maximization, Fisher-information standard errors and
//! the parametric bootstrap.
//!
//! Optimization runs on a transformed scale: amplitudes, widths and gamma
//! shapes on the log scale, everything else unchanged. Shedding and hazard
//! intercepts are reported on the natural scale as `beta = exp(intercept)`
//! (gamma rate) and `lambda = exp(intercept)` (baseline hazard).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    propagate_occupancy, GaussianComponent, HazardParams, HazardVariant, InfectionParams,
    ModelParams, SheddingParams, SheddingVariant, VariantIntensity,
};
use crate::optim::{bfgs, inverse_diagonal, nelder_mead, numerical_hessian, Minimum, Tolerances};
use crate::pseudolik::{latent_expectations, LoglikBreakdown, PseudoLikelihood, Scenario};
use crate::simulate::{apply_reporting, simulate_population, AggregatedSeries, CompleteDays, ReportingConfig};

/// One free parameter. Variant indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Amplitude { variant: usize, component: usize },
    Center { variant: usize, component: usize },
    Width { variant: usize, component: usize },
    Shape { variant: usize },
    SheddingIntercept { variant: usize },
    SheddingCoefficient { variant: usize, index: usize },
    HazardIntercept { variant: usize },
    HazardCoefficient { variant: usize, index: usize },
}

impl ParamKind {
    pub fn name(&self) -> String {
        match *self {
            Self::Amplitude { variant, component } => format!("a[{},{}]", variant + 1, component + 1),
            Self::Center { variant, component } => format!("b[{},{}]", variant + 1, component + 1),
            Self::Width { variant, component } => format!("c[{},{}]", variant + 1, component + 1),
            Self::Shape { variant } => format!("alpha[{}]", variant + 1),
            Self::SheddingIntercept { variant } => format!("beta[{}]", variant + 1),
            Self::SheddingCoefficient { variant, index } => format!("beta[{},x{}]", variant + 1, index + 1),
            Self::HazardIntercept { variant } => format!("lambda[{}]", variant + 1),
            Self::HazardCoefficient { variant, index } => format!("lambda[{},x{}]", variant + 1, index + 1),
        }
    }

    pub fn is_infection(&self) -> bool {
        matches!(self, Self::Amplitude { .. } | Self::Center { .. } | Self::Width { .. })
    }

    /// Whether the natural value is `exp` of the internal coordinate.
    fn exp_scale(&self) -> bool {
        matches!(
            self,
            Self::Amplitude { .. }
                | Self::Width { .. }
                | Self::Shape { .. }
                | Self::SheddingIntercept { .. }
                | Self::HazardIntercept { .. }
        )
    }

    fn initial_step(&self) -> f64 {
        match self {
            Self::Amplitude { .. } => 0.3,
            Self::Center { .. } => 5.0,
            Self::Width { .. } => 0.15,
            Self::Shape { .. } | Self::SheddingIntercept { .. } | Self::HazardIntercept { .. } => 0.3,
            Self::SheddingCoefficient { .. } | Self::HazardCoefficient { .. } => 0.2,
        }
    }
}

/// Maps between `ModelParams` and the vector of free internal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    template: ModelParams,
    kinds: Vec<ParamKind>,
}

fn safe_ln(x: f64) -> f64 {
    x.max(1e-300).ln()
}

impl ParamLayout {
    pub fn new(template: &ModelParams, fix_centers: bool) -> Self {
        let mut kinds = Vec::new();
        for (v, var) in template.infection.variants.iter().enumerate() {
            for m in 0..var.components.len() {
                kinds.push(ParamKind::Amplitude { variant: v, component: m });
                if !fix_centers {
                    kinds.push(ParamKind::Center { variant: v, component: m });
                }
                kinds.push(ParamKind::Width { variant: v, component: m });
            }
        }
        for (v, sv) in template.shedding.variants.iter().enumerate() {
            kinds.push(ParamKind::Shape { variant: v });
            kinds.push(ParamKind::SheddingIntercept { variant: v });
            for j in 0..sv.coefficients.len() {
                kinds.push(ParamKind::SheddingCoefficient { variant: v, index: j });
            }
        }
        for (v, hv) in template.hazard.variants.iter().enumerate() {
            kinds.push(ParamKind::HazardIntercept { variant: v });
            for j in 0..hv.coefficients.len() {
                kinds.push(ParamKind::HazardCoefficient { variant: v, index: j });
            }
        }
        Self {
            template: template.clone(),
            kinds,
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[ParamKind] {
        &self.kinds
    }

    pub fn names(&self) -> Vec<String> {
        self.kinds.iter().map(ParamKind::name).collect()
    }

    pub fn encode(&self, p: &ModelParams) -> Vec<f64> {
        self.kinds
            .iter()
            .map(|k| match *k {
                ParamKind::Amplitude { variant, component } => {
                    safe_ln(p.infection.variants[variant].components[component].amplitude)
                }
                ParamKind::Center { variant, component } => {
                    p.infection.variants[variant].components[component].center
                }
                ParamKind::Width { variant, component } => {
                    safe_ln(p.infection.variants[variant].components[component].width)
                }
                ParamKind::Shape { variant } => safe_ln(p.shedding.variants[variant].shape),
                ParamKind::SheddingIntercept { variant } => p.shedding.variants[variant].intercept,
                ParamKind::SheddingCoefficient { variant, index } => {
                    p.shedding.variants[variant].coefficients[index]
                }
                ParamKind::HazardIntercept { variant } => p.hazard.variants[variant].intercept,
                ParamKind::HazardCoefficient { variant, index } => {
                    p.hazard.variants[variant].coefficients[index]
                }
            })
            .collect()
    }

    pub fn decode(&self, theta: &[f64]) -> ModelParams {
        let mut p = self.template.clone();
        self.decode_into(theta, &mut p);
        p
    }

    fn decode_into(&self, theta: &[f64], p: &mut ModelParams) {
        for (k, &x) in self.kinds.iter().zip(theta) {
            match *k {
                ParamKind::Amplitude { variant, component } => {
                    p.infection.variants[variant].components[component].amplitude = x.exp()
                }
                ParamKind::Center { variant, component } => {
                    p.infection.variants[variant].components[component].center = x
                }
                ParamKind::Width { variant, component } => {
                    p.infection.variants[variant].components[component].width = x.exp()
                }
                ParamKind::Shape { variant } => p.shedding.variants[variant].shape = x.exp(),
                ParamKind::SheddingIntercept { variant } => p.shedding.variants[variant].intercept = x,
                ParamKind::SheddingCoefficient { variant, index } => {
                    p.shedding.variants[variant].coefficients[index] = x
                }
                ParamKind::HazardIntercept { variant } => p.hazard.variants[variant].intercept = x,
                ParamKind::HazardCoefficient { variant, index } => {
                    p.hazard.variants[variant].coefficients[index] = x
                }
            }
        }
    }

    /// Natural-scale values of the free parameters.
    pub fn natural(&self, theta: &[f64]) -> Vec<f64> {
        self.kinds
            .iter()
            .zip(theta)
            .map(|(k, &x)| if k.exp_scale() { x.exp() } else { x })
            .collect()
    }

    /// Delta-method map of internal-scale standard errors.
    pub fn natural_se(&self, theta: &[f64], se: &[Option<f64>]) -> Vec<Option<f64>> {
        self.kinds
            .iter()
            .zip(theta.iter().zip(se))
            .map(|(k, (&x, s))| s.map(|s| if k.exp_scale() { x.exp() * s } else { s }))
            .collect()
    }
}

/// Fixed structure of the model being fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub population_size: u64,
    /// Mixture components per variant.
    pub components: Vec<usize>,
    pub recovery_rates: Vec<f64>,
    pub time_step: f64,
    /// Whether shedding rate and hazard carry the series' covariates.
    pub shedding_covariates: bool,
    pub hazard_covariates: bool,
}

impl ModelStructure {
    pub fn num_variants(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("at least one variant required".into()));
        }
        if self.components.iter().any(|&m| m == 0) {
            return Err(Error::InvalidParameter("each variant needs >= 1 component".into()));
        }
        if self.recovery_rates.len() != self.components.len() {
            return Err(Error::InvalidParameter(format!(
                "{} recovery rates for {} variants",
                self.recovery_rates.len(),
                self.components.len()
            )));
        }
        if self.population_size == 0 {
            return Err(Error::InvalidParameter("population size must be >= 1".into()));
        }
        Ok(())
    }

    /// Structure of existing parameters.
    pub fn of(params: &ModelParams) -> Self {
        Self {
            population_size: params.population_size,
            components: params.infection.variants.iter().map(|v| v.components.len()).collect(),
            recovery_rates: params.infection.variants.iter().map(|v| v.recovery_rate).collect(),
            time_step: params.time_step,
            shedding_covariates: params.shedding.variants.iter().any(|v| !v.coefficients.is_empty()),
            hazard_covariates: params.hazard.variants.iter().any(|v| !v.coefficients.is_empty()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub restarts: usize,
    /// Alternating infection / observation block passes before the joint stage.
    pub block_cycles: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            ftol: 1e-8,
            xtol: 1e-6,
            restarts: 3,
            block_cycles: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialValues {
    Auto,
    Given(ModelParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub structure: ModelStructure,
    pub scenario: Scenario,
    /// Treat reported cases as the true number infected on every day.
    pub naive_mode: bool,
    pub optimizer: OptimizerConfig,
    pub initial_values: InitialValues,
    pub fix_centers: bool,
    /// Seeds the restart perturbations.
    pub seed: u64,
    pub compute_fisher: bool,
}

impl FitConfig {
    pub fn new(structure: ModelStructure, scenario: Scenario) -> Self {
        Self {
            structure,
            scenario,
            naive_mode: false,
            optimizer: OptimizerConfig::default(),
            initial_values: InitialValues::Auto,
            fix_centers: false,
            seed: 0,
            compute_fisher: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        let o = &self.optimizer;
        if !(o.ftol > 0.0 && o.xtol > 0.0) {
            return Err(Error::InvalidParameter("optimizer tolerances must be > 0".into()));
        }
        if o.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if o.max_evals == 0 {
            return Err(Error::InvalidParameter("max_evals must be >= 1".into()));
        }
        Ok(())
    }

    /// Scenario actually used in the objective.
    pub fn effective_scenario(&self) -> Scenario {
        if self.naive_mode {
            Scenario::FullObservability
        } else {
            self.scenario
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RestartSummary {
    pub objective: f64,
    pub converged: bool,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    pub breakdown: LoglikBreakdown,
    pub restarts: Vec<RestartSummary>,
    /// Parameters at or near the edge of their admissible range.
    pub boundary: Vec<String>,
    pub hessian_asymmetry: Option<f64>,
    pub hessian_max_abs: Option<f64>,
    /// Names of parameters whose Fisher SE is undefined.
    pub undefined_se: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Per-parameter sample SD over converged replicates, natural scale.
    pub se: Vec<Option<f64>>,
    /// Natural-scale estimates of converged replicates, in replicate order.
    pub estimates: Vec<Vec<f64>>,
    pub requested: usize,
    pub failed: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimates: ModelParams,
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub scenario: Scenario,
    pub naive_mode: bool,
    pub names: Vec<String>,
    /// Natural-scale values of the free parameters.
    pub natural: Vec<f64>,
    pub se_fisher: Option<Vec<Option<f64>>>,
    pub bootstrap: Option<BootstrapResult>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.natural[i])
    }

    pub fn fisher(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.se_fisher.as_ref()?[i]
    }

    pub fn bootstrap_se(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.bootstrap.as_ref()?.se[i]
    }
}

/// Series seen by the objective: in naive mode reported cases stand in for
/// the truth and no day is flagged under-reported.
fn objective_series(series: &AggregatedSeries, config: &FitConfig) -> AggregatedSeries {
    let mut s = series.clone();
    if config.naive_mode {
        s.complete = Some(vec![true; s.num_days()]);
    }
    s
}

fn template_params(structure: &ModelStructure, series: &AggregatedSeries) -> Result<ModelParams> {
    let dim = series.covariates.dim();
    let k = structure.num_variants();
    let horizon = series.horizon();
    let infection = InfectionParams {
        variants: (0..k)
            .map(|v| VariantIntensity {
                components: (0..structure.components[v])
                    .map(|m| GaussianComponent {
                        amplitude: 1e-3,
                        center: horizon as f64 * (m + 1) as f64 / (structure.components[v] + 1) as f64,
                        width: 10.0,
                    })
                    .collect(),
                recovery_rate: structure.recovery_rates[v],
            })
            .collect(),
    };
    let coefs = |on: bool| if on { vec![0.0; dim] } else { Vec::new() };
    let params = ModelParams {
        infection,
        shedding: SheddingParams {
            variants: (0..k)
                .map(|_| SheddingVariant {
                    shape: 1e-3,
                    intercept: 0.0,
                    coefficients: coefs(structure.shedding_covariates),
                })
                .collect(),
        },
        hazard: HazardParams {
            variants: (0..k)
                .map(|_| HazardVariant {
                    intercept: -5.0,
                    coefficients: coefs(structure.hazard_covariates),
                })
                .collect(),
        },
        population_size: structure.population_size,
        horizon,
        time_step: structure.time_step,
    };
    params.validate()?;
    Ok(params)
}

fn check_given(given: &ModelParams, template: &ModelParams) -> Result<()> {
    if ModelStructure::of(given).components != ModelStructure::of(template).components
        || given.horizon != template.horizon
        || given.population_size != template.population_size
    {
        return Err(Error::InvalidParameter(
            "initial values do not match the model structure or series horizon".into(),
        ));
    }
    for (g, t) in given.shedding.variants.iter().zip(&template.shedding.variants) {
        if g.coefficients.len() != t.coefficients.len() {
            return Err(Error::InvalidParameter("shedding covariate dimension mismatch".into()));
        }
    }
    for (g, t) in given.hazard.variants.iter().zip(&template.hazard.variants) {
        if g.coefficients.len() != t.coefficients.len() {
            return Err(Error::InvalidParameter("hazard covariate dimension mismatch".into()));
        }
    }
    given.validate()
}

/// Rolling median; single-day spikes of heavy-tailed signals do not move it.
fn rolling_median(values: &[Option<f64>], half: usize) -> Vec<Option<f64>> {
    let n = values.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            let mut w: Vec<f64> = values[lo..=hi].iter().flatten().copied().collect();
            if w.is_empty() {
                return None;
            }
            w.sort_by(f64::total_cmp);
            let m = w.len() / 2;
            Some(if w.len() % 2 == 1 { w[m] } else { 0.5 * (w[m - 1] + w[m]) })
        })
        .collect()
}

fn smooth(values: &[Option<f64>], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            let (sum, count) = values[lo..=hi]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}

/// Local maxima sorted by decreasing height; plateaus count once.
fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&t| {
            y[t] > 0.0 && (t == 0 || y[t] > y[t - 1]) && (t + 1 == n || y[t] >= y[t + 1])
        })
        .collect();
    peaks.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    peaks
}

fn half_width(y: &[f64], peak: usize) -> f64 {
    let half = y[peak] / 2.0;
    let left = (0..peak).rev().find(|&t| y[t] < half).map(|t| peak - t);
    let right = (peak + 1..y.len()).find(|&t| y[t] < half).map(|t| t - peak);
    match (left, right) {
        (Some(l), Some(r)) => (l + r) as f64 / 2.0,
        (Some(d), None) | (None, Some(d)) => d as f64,
        (None, None) => y.len() as f64 / 4.0,
    }
}

/// Offset of the prevalence peak behind the intensity peak, and the peak
/// height per unit amplitude, for a unit Gaussian intensity of width `c`
/// filtered through exponential recovery at rate `gamma`.
fn prevalence_response(c: f64, gamma: f64) -> (f64, f64) {
    let dt = 0.1;
    let span = (6.0 * c + 10.0 / gamma.max(1e-3)) / dt;
    let steps = span.ceil() as usize;
    let mut best = (0.0, 0.0);
    let mut level = 0.0;
    for i in 0..steps {
        let t = i as f64 * dt - 4.0 * c;
        let g = (-t * t / (2.0 * c * c)).exp();
        level += dt * (g - gamma * level);
        if level > best.1 {
            best = (t, level);
        }
    }
    best
}

struct Seed {
    day: usize,
    height: f64,
    half_width: f64,
}

/// Auto-initialization from peaks of the smoothed signals.
pub fn initial_values(series: &AggregatedSeries, structure: &ModelStructure) -> Result<ModelParams> {
    Ok(initial_candidates(series, structure)?.swap_remove(0))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Peak-based starting points. The first assigns peaks to variants as
/// found; the rest reassign whole peak sets between variants with equal
/// component counts.
pub fn initial_candidates(series: &AggregatedSeries, structure: &ModelStructure) -> Result<Vec<ModelParams>> {
    structure.validate()?;
    let template = template_params(structure, series)?;
    let n = series.num_days();
    let nf = structure.population_size as f64;
    let k = structure.num_variants();
    // Prevalence proxy: reported cases on complete days when flagged,
    // otherwise all reported cases; wastewater when no cases are reported.
    let flagged = series.complete.as_ref().filter(|l| l.iter().filter(|&&c| c).count() >= 5);
    let cases: Vec<Option<f64>> = (0..n)
        .map(|t| match flagged {
            Some(l) if !l[t] => None,
            _ => Some(series.reported_active[t] as f64),
        })
        .collect();
    let has_cases = series.reported_active.iter().any(|&s| s > 0);
    let (proxy, to_prevalence) = if has_cases {
        (smooth(&rolling_median(&cases, 7), 5), 1.0 / nf)
    } else {
        (smooth(&rolling_median(&series.wastewater_total, 7), 5), 0.0)
    };

    let total: usize = structure.components.iter().sum();
    let mut all = pick_peaks(&proxy, total);
    all.sort_by_key(|s| s.day);
    let mut it = all.into_iter();
    let seeds: Vec<Vec<Seed>> = (0..k)
        .map(|v| it.by_ref().take(structure.components[v]).collect())
        .collect();

    let perms: Vec<Vec<usize>> = if k <= 4 {
        permutations(k)
            .into_iter()
            .filter(|perm| perm.iter().enumerate().all(|(v, &u)| structure.components[v] == structure.components[u]))
            .collect()
    } else {
        vec![(0..k).collect()]
    };
    let mut out = Vec::with_capacity(perms.len());
    for perm in perms {
        let mut params = template.clone();
        place_seeds(&mut params, structure, &seeds, &perm, to_prevalence);
        out.push(params);
    }
    Ok(out)
}

fn place_seeds(
    params: &mut ModelParams,
    structure: &ModelStructure,
    seeds: &[Vec<Seed>],
    perm: &[usize],
    to_prevalence: f64,
) {
    for v in 0..structure.num_variants() {
        let gamma = structure.recovery_rates[v];
        let comps = &mut params.infection.variants[v].components;
        for (m, comp) in comps.iter_mut().enumerate() {
            let Some(seed) = seeds[perm[v]].get(m) else { continue };
            let spread = seed.half_width / (2.0 * std::f64::consts::LN_2).sqrt();
            let width = (spread * spread - 1.0 / (gamma * gamma)).max(16.0).sqrt();
            let (lag, gain) = prevalence_response(width, gamma);
            let prevalence = if to_prevalence > 0.0 {
                (seed.height * to_prevalence).clamp(1e-6, 0.9)
            } else {
                0.01
            };
            comp.width = width;
            comp.center = seed.day as f64 - lag;
            comp.amplitude = (prevalence / gain / (1.0 - prevalence)).max(1e-8);
        }
    }
}

/// Minimum distance in days between two seeded mixture components.
const MIN_PEAK_SEPARATION: usize = 14;

fn pick_peaks(y: &[f64], count: usize) -> Vec<Seed> {
    let n = y.len();
    let mut out: Vec<Seed> = Vec::with_capacity(count);
    for t in local_maxima(y) {
        if out.len() == count {
            break;
        }
        if out.iter().all(|s| s.day.abs_diff(t) >= MIN_PEAK_SEPARATION) {
            out.push(Seed {
                day: t,
                height: y[t],
                half_width: half_width(y, t),
            });
        }
    }
    let filler = y.iter().cloned().fold(0.0, f64::max);
    while out.len() < count {
        let day = n * (out.len() + 1) / (count + 1);
        out.push(Seed {
            day,
            height: filler,
            half_width: n as f64 / 8.0,
        });
    }
    out
}

/// Closed-form observation parameters given the infection parameters:
/// hazard from admissions over expected person-days at risk, gamma shape
/// and rate from the first two moments of the signal per infected.
pub fn moment_observation_params(
    series: &AggregatedSeries,
    params: &ModelParams,
    scenario: Scenario,
) -> Result<ModelParams> {
    let occupancy = propagate_occupancy(params)?;
    let latent = latent_expectations(series, &occupancy, scenario, params.population_size)?;
    let mut out = params.clone();
    for v in 1..=params.num_variants() {
        let (mut eh, mut er) = (0.0, 0.0);
        let (mut sw, mut ss) = (0.0, 0.0);
        let mut pairs = Vec::new();
        for t in 0..series.num_days() {
            eh += latent.admissions(t, v);
            er += latent.at_risk(t, v);
            let es = latent.active(t, v);
            let w = match (&series.wastewater_by_variant, latent.shares.get(t)) {
                (Some(by), _) => by[v - 1][t],
                (None, Some(pi)) => series.wastewater_total[t].map(|w| w * pi[v - 1]),
                (None, None) => None,
            };
            if let Some(w) = w {
                if w > 0.0 && es > 0.5 {
                    sw += w;
                    ss += es;
                    pairs.push((w, es));
                }
            }
        }
        if eh > 0.0 && er > 0.0 {
            out.hazard.variants[v - 1].intercept = (eh / er).ln();
        }
        if ss > 0.0 && sw > 0.0 {
            let m = sw / ss;
            // Var(W) = E(W) / rate for the aggregated gamma.
            let (mut num, mut den) = (0.0, 0.0);
            for (w, es) in pairs {
                let mean = es * m;
                num += mean;
                den += (w - mean).powi(2);
            }
            let rate = if den > 0.0 { num / den } else { 1.0 / m };
            let shape = (m * rate).clamp(1e-10, 1e6);
            out.shedding.variants[v - 1].shape = shape;
            out.shedding.variants[v - 1].intercept = (shape / m).ln();
        }
    }
    Ok(out)
}

struct Objective<'a> {
    pl: &'a PseudoLikelihood<'a>,
    layout: &'a ParamLayout,
}

impl Objective<'_> {
    /// Negative pseudo-log-likelihood; impossible regions score `f64::MAX`.
    fn value(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|x| !x.is_finite()) {
            return f64::MAX;
        }
        match self.pl.evaluate(&self.layout.decode(theta)) {
            Ok(v) => -v,
            Err(_) => f64::MAX,
        }
    }
}

fn minimize_block(
    obj: &Objective,
    theta: &mut [f64],
    block: &[usize],
    steps: &[f64],
    tol: Tolerances,
) -> Minimum {
    let base = theta.to_vec();
    let x0: Vec<f64> = block.iter().map(|&i| theta[i]).collect();
    let st: Vec<f64> = block.iter().map(|&i| steps[i]).collect();
    let mut full = base.clone();
    let m = nelder_mead(
        |x: &[f64]| {
            for (&i, &v) in block.iter().zip(x) {
                full[i] = v;
            }
            obj.value(&full)
        },
        &x0,
        &st,
        tol,
    );
    for (&i, &v) in block.iter().zip(&m.x) {
        theta[i] = v;
    }
    m
}

fn run_restart(obj: &Objective, start: &[f64], steps: &[f64], opt: &OptimizerConfig) -> Minimum {
    let layout = obj.layout;
    let infection: Vec<usize> = (0..layout.len()).filter(|&i| layout.kinds[i].is_infection()).collect();
    let observation: Vec<usize> = (0..layout.len()).filter(|&i| !layout.kinds[i].is_infection()).collect();
    let block_tol = Tolerances {
        ftol: opt.ftol * 100.0,
        xtol: opt.xtol * 100.0,
        max_evals: (opt.max_evals / 4).max(50),
    };
    let tol = Tolerances {
        ftol: opt.ftol,
        xtol: opt.xtol,
        max_evals: opt.max_evals,
    };
    let mut theta = start.to_vec();
    let mut evals = 0;
    for _ in 0..opt.block_cycles {
        if !observation.is_empty() {
            evals += minimize_block(obj, &mut theta, &observation, steps, block_tol).evals;
        }
        if !infection.is_empty() {
            evals += minimize_block(obj, &mut theta, &infection, steps, block_tol).evals;
        }
    }
    let joint = nelder_mead(|x: &[f64]| obj.value(x), &theta, steps, tol);
    evals += joint.evals;
    let polish = bfgs(|x: &[f64]| obj.value(x), &joint.x, tol);
    evals += polish.evals;
    let (x, f) = if polish.f <= joint.f {
        (polish.x, polish.f)
    } else {
        (joint.x, joint.f)
    };
    Minimum {
        x,
        f,
        evals,
        converged: polish.converged,
    }
}

/// Maximizes the pseudo-log-likelihood of `series`.
///
/// Non-convergence is reported in the result; errors are reserved for
/// malformed inputs.
pub fn fit(series: &AggregatedSeries, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let template = template_params(&config.structure, series)?;
    let obs_series = objective_series(series, config);
    let scenario = config.effective_scenario();
    let pl = PseudoLikelihood::new(&obs_series, scenario, config.structure.population_size)?;
    let template_layout = ParamLayout::new(&template, config.fix_centers);

    // Auto mode optimizes from every peak-based candidate; further restarts
    // perturb the first start. Fixed centers keep the values of their start.
    let starts: Vec<ModelParams> = match &config.initial_values {
        InitialValues::Given(p) => {
            check_given(p, &template)?;
            vec![p.clone()]
        }
        InitialValues::Auto => {
            let probe = Objective { pl: &pl, layout: &template_layout };
            auto_starts(&obs_series, &config.structure, scenario, &probe)?
        }
    };
    let steps: Vec<f64> = template_layout.kinds.iter().map(ParamKind::initial_step).collect();
    let mut points: Vec<(ParamLayout, Vec<f64>)> = starts
        .iter()
        .map(|p| {
            let layout = ParamLayout::new(p, config.fix_centers);
            let x = layout.encode(p);
            (layout, x)
        })
        .collect();
    for r in 1..config.optimizer.restarts {
        let (layout, x0) = &points[0];
        let x = perturb(x0, &steps, config.seed, r as u64);
        points.push((layout.clone(), x));
    }

    let mut best: Option<(usize, Minimum)> = None;
    let mut diagnostics = FitDiagnostics::default();
    let mut total_evals = 0;
    for (r, (layout, x0)) in points.iter().enumerate() {
        let obj = Objective { pl: &pl, layout };
        let m = run_restart(&obj, x0, &steps, &config.optimizer);
        total_evals += m.evals;
        diagnostics.restarts.push(RestartSummary {
            objective: m.f,
            converged: m.converged,
            evals: m.evals,
        });
        // Strict improvement keeps the lowest index on ties.
        if best.as_ref().is_none_or(|(_, b)| m.f < b.f) {
            best = Some((r, m));
        }
    }
    let (best_index, best) = best.expect("restarts >= 1");
    let layout = &points[best_index].0;
    let obj = Objective { pl: &pl, layout };
    let estimates = layout.decode(&best.x);
    let diverged = best.f >= f64::MAX / 2.0 || best.f >= 1e299;
    if diverged {
        diagnostics
            .warnings
            .push("every restart ended in an impossible parameter region".into());
    }
    diagnostics.breakdown = obj.pl.breakdown(&estimates).unwrap_or_default();
    diagnostics.boundary = boundary_flags(&estimates);

    let mut result = FitResult {
        loglik: -best.f,
        converged: best.converged && !diverged,
        n_evals: total_evals,
        scenario: config.scenario,
        naive_mode: config.naive_mode,
        names: layout.names(),
        natural: layout.natural(&best.x),
        estimates,
        se_fisher: None,
        bootstrap: None,
        diagnostics,
    };
    if config.compute_fisher && !diverged {
        let fisher = fisher_at(&obj, &best.x);
        result.diagnostics.hessian_asymmetry = Some(fisher.asymmetry);
        result.diagnostics.hessian_max_abs = Some(fisher.max_abs);
        result.diagnostics.undefined_se = result
            .names
            .iter()
            .zip(&fisher.se)
            .filter(|(_, s)| s.is_none())
            .map(|(n, _)| n.clone())
            .collect();
        result.se_fisher = Some(fisher.se);
    }
    Ok(result)
}

/// Auto starts, one per peak-based candidate: each is scanned over a
/// common amplitude multiplier with moment-based observation parameters.
fn auto_starts(
    series: &AggregatedSeries,
    structure: &ModelStructure,
    scenario: Scenario,
    obj: &Objective,
) -> Result<Vec<ModelParams>> {
    let candidates = initial_candidates(series, structure)?;
    Ok(candidates
        .into_iter()
        .map(|base| {
            let mut best: Option<(f64, ModelParams)> = None;
            for i in 0..=12 {
                let mult = 2f64.powf(-2.0 + 0.5 * i as f64);
                let mut p = base.clone();
                for v in &mut p.infection.variants {
                    for c in &mut v.components {
                        c.amplitude *= mult;
                    }
                }
                let Ok(p) = moment_observation_params(series, &p, scenario) else {
                    continue;
                };
                let f = obj.value(&obj.layout.encode(&p));
                if best.as_ref().is_none_or(|(b, _)| f < *b) {
                    best = Some((f, p));
                }
            }
            best.map(|(_, p)| p).unwrap_or(base)
        })
        .collect())
}

fn perturb(start: &[f64], steps: &[f64], seed: u64, restart: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    start
        .iter()
        .zip(steps)
        .map(|(&x, &s)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x + 0.5 * s * z
        })
        .collect()
}

fn boundary_flags(p: &ModelParams) -> Vec<String> {
    let mut out = Vec::new();
    let e = p.horizon as f64;
    for (v, var) in p.infection.variants.iter().enumerate() {
        for (m, c) in var.components.iter().enumerate() {
            if c.amplitude < 1e-10 {
                out.push(format!("a[{},{}]", v + 1, m + 1));
            }
            if c.center < 0.0 || c.center > e {
                out.push(format!("b[{},{}]", v + 1, m + 1));
            }
            if c.width < 0.5 || c.width > 10.0 * e {
                out.push(format!("c[{},{}]", v + 1, m + 1));
            }
        }
    }
    for (v, s) in p.shedding.variants.iter().enumerate() {
        if s.shape < 1e-9 || s.shape > 1e5 {
            out.push(format!("alpha[{}]", v + 1));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherSe {
    /// Natural-scale standard errors; `None` where the Hessian is not
    /// positive definite along that coordinate.
    pub se: Vec<Option<f64>>,
    pub asymmetry: f64,
    pub max_abs: f64,
}

fn fisher_at(obj: &Objective, theta: &[f64]) -> FisherSe {
    let steps: Vec<f64> = theta.iter().map(|x| (1e-4 * x.abs()).max(1e-4)).collect();
    let (h, asymmetry) = numerical_hessian(|x: &[f64]| obj.value(x), theta, &steps);
    let max_abs = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let var = if h.iter().all(|v| v.is_finite()) {
        inverse_diagonal(&h)
    } else {
        vec![None; theta.len()]
    };
    let internal: Vec<Option<f64>> = var.into_iter().map(|v| v.map(f64::sqrt)).collect();
    FisherSe {
        se: obj.layout.natural_se(theta, &internal),
        asymmetry,
        max_abs,
    }
}

/// Standard errors from the inverse observed information of the
/// pseudo-likelihood at `estimates`.
pub fn fisher_se(series: &AggregatedSeries, estimates: &ModelParams, config: &FitConfig) -> Result<FisherSe> {
    config.validate()?;
    let template = template_params(&config.structure, series)?;
    check_given(estimates, &template)?;
    let obs_series = objective_series(series, config);
    let pl = PseudoLikelihood::new(&obs_series, config.effective_scenario(), config.structure.population_size)?;
    let layout = ParamLayout::new(estimates, config.fix_centers);
    let obj = Objective { pl: &pl, layout: &layout };
    Ok(fisher_at(&obj, &layout.encode(estimates)))
}

/// Per-individual reporting probability implied by the under-reported days
/// of `series` at `params`.
pub fn infer_reporting_rate(series: &AggregatedSeries, params: &ModelParams) -> Result<f64> {
    let occ = propagate_occupancy(params)?;
    let complete = series.complete.clone().unwrap_or_else(|| vec![false; series.num_days()]);
    let (mut reported, mut expected) = (0.0, 0.0);
    for t in 0..series.num_days() {
        if !complete[t] {
            reported += series.reported_active[t] as f64;
            expected += params.population_size as f64 * occ.infected(t);
        }
    }
    Ok(if expected > 0.0 {
        (reported / expected).clamp(0.0, 1.0)
    } else {
        1.0
    })
}

/// One bootstrap dataset: a fresh population at `params`, re-aggregated to
/// the shape of `template`.
pub fn bootstrap_series(
    params: &ModelParams,
    template: &AggregatedSeries,
    reporting_rate: f64,
    seed: u64,
) -> Result<AggregatedSeries> {
    let sim = simulate_population(params, &template.covariates, seed)?;
    let complete: Vec<usize> = match &template.complete {
        Some(flags) => (0..flags.len()).filter(|&t| flags[t]).collect(),
        None => Vec::new(),
    };
    let reporting = ReportingConfig {
        complete_fraction: 0.0,
        reporting_rate,
        seed: seed ^ 0x9e37_79b9_7f4a_7c15,
        complete_days: CompleteDays::Explicit(complete),
    };
    let mut out = apply_reporting(&sim, &reporting)?;
    if template.complete.is_none() {
        out.complete = None;
    }
    if template.wastewater_by_variant.is_none() {
        out.wastewater_by_variant = None;
    }
    for t in 0..out.num_days() {
        if template.wastewater_total[t].is_none() {
            out.wastewater_total[t] = None;
            if let Some(by) = &mut out.wastewater_by_variant {
                for v in by.iter_mut() {
                    v[t] = None;
                }
            }
        }
    }
    Ok(out)
}

/// Derives `count` replicate seeds from a master seed.
pub fn replicate_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rand::Rng::random::<u64>(&mut rng)).collect()
}

fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

/// Parametric bootstrap: one replicate per seed, each simulated at
/// `estimates`, re-aggregated like `template` and refitted with `config`.
/// `reporting_rate` defaults to the rate inferred from `template`.
pub fn parametric_bootstrap(
    estimates: &ModelParams,
    template: &AggregatedSeries,
    config: &FitConfig,
    reporting_rate: Option<f64>,
    seeds: &[u64],
) -> Result<BootstrapResult> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParameter("bootstrap needs B >= 2".into()));
    }
    config.validate()?;
    let r2 = match reporting_rate {
        Some(r) => r,
        None => infer_reporting_rate(template, estimates)?,
    };
    let refit = FitConfig {
        compute_fisher: false,
        ..config.clone()
    };
    let fits: Vec<Result<FitResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let data = bootstrap_series(estimates, template, r2, seed)?;
            fit(&data, &refit)
        })
        .collect();
    let mut kept = Vec::new();
    let mut failed = 0;
    for f in fits {
        match f {
            Ok(r) if r.converged => kept.push(r.natural),
            Ok(_) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let p = ParamLayout::new(estimates, config.fix_centers).len();
    let se = (0..p)
        .map(|j| sample_sd(&kept.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect();
    let warning = (failed as f64 > 0.2 * seeds.len() as f64).then(|| {
        format!("{failed} of {} bootstrap replicates did not converge", seeds.len())
    });
    Ok(BootstrapResult {
        se,
        estimates: kept,
        requested: seeds.len(),
        failed,
        warning,
    })
}

/// Fits each scenario from shared initial values.
pub fn scenario_sweep(
    series: &AggregatedSeries,
    scenarios: &[Scenario],
    config: &FitConfig,
) -> Result<Vec<FitResult>> {
    config.validate()?;
    let init = match &config.initial_values {
        InitialValues::Given(p) => p.clone(),
        InitialValues::Auto => initial_values(series, &config.structure)?,
    };
    scenarios
        .par_iter()
        .map(|&scenario| {
            let c = FitConfig {
                scenario,
                initial_values: InitialValues::Given(init.clone()),
                ..config.clone()
            };
            fit(series, &c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovariateMatrix;
    use crate::replicate::study_truth;
    use crate::simulate::apply_reporting;

    fn series(n: u64, r1: f64, r2: f64, seed: u64) -> (ModelParams, AggregatedSeries) {
        let truth = study_truth(n, 1.0);
        let full = simulate_population(&truth, &CovariateMatrix::empty(truth.num_days()), seed).unwrap();
        let rep = apply_reporting(&full, &ReportingConfig::new(r1, r2, seed + 1).unwrap()).unwrap();
        (truth, rep)
    }

    fn quick(truth: &ModelParams, scenario: Scenario) -> FitConfig {
        let mut c = FitConfig::new(ModelStructure::of(truth), scenario);
        c.optimizer.restarts = 1;
        c
    }

    #[test]
    fn layout_names_and_round_trip() {
        let mut p = study_truth(1000, 1.0);
        p.hazard.variants[1].coefficients = vec![0.3];
        let layout = ParamLayout::new(&p, false);
        assert_eq!(
            layout.names(),
            [
                "a[1,1]", "b[1,1]", "c[1,1]", "a[2,1]", "b[2,1]", "c[2,1]", "alpha[1]", "beta[1]", "alpha[2]",
                "beta[2]", "lambda[1]", "lambda[2]", "lambda[2,x1]"
            ]
        );
        let theta = layout.encode(&p);
        let back = layout.decode(&theta);
        assert_eq!(layout.encode(&back), theta);
        let nat = layout.natural(&theta);
        assert!((nat[0] - 0.005).abs() < 1e-15);
        assert_eq!(nat[1], 60.0);
        assert!((nat[9] - 2e4).abs() < 1e-9);
        assert!((nat[11] - 0.005).abs() < 1e-15);
        assert_eq!(nat[12], 0.3);

        let fixed = ParamLayout::new(&p, true);
        assert_eq!(fixed.len(), layout.len() - 2);
        assert!(!fixed.names().iter().any(|n| n.starts_with("b[")));
        let mut theta = fixed.encode(&p);
        theta[0] += 0.1;
        assert_eq!(fixed.decode(&theta).infection.variants[0].components[0].center, 60.0);
    }

    #[test]
    fn delta_method() {
        let p = study_truth(1000, 1.0);
        let layout = ParamLayout::new(&p, false);
        let theta = layout.encode(&p);
        let se: Vec<Option<f64>> = (0..layout.len()).map(|i| (i != 2).then_some(0.1)).collect();
        let nat = layout.natural_se(&theta, &se);
        assert!((nat[0].unwrap() - 0.0005).abs() < 1e-15);
        assert_eq!(nat[1], Some(0.1));
        assert_eq!(nat[2], None);
        assert!((nat[11].unwrap() - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let (truth, data) = series(500, 0.5, 0.5, 1);
        let mut c = quick(&truth, Scenario::PolicyInformed);
        c.optimizer.restarts = 0;
        assert!(fit(&data, &c).is_err());
        let mut c = quick(&truth, Scenario::PolicyInformed);
        let mut wrong = truth.clone();
        wrong.infection.variants[0].components.push(GaussianComponent::new(0.001, 20.0, 5.0).unwrap());
        c.initial_values = InitialValues::Given(wrong);
        assert!(fit(&data, &c).is_err());
        let c = quick(&truth, Scenario::PolicyInformed);
        assert!(parametric_bootstrap(&truth, &data, &c, None, &[1]).is_err());
    }

    #[test]
    fn seeds_are_deterministic() {
        assert_eq!(replicate_seeds(9, 5), replicate_seeds(9, 5));
        assert_eq!(replicate_seeds(9, 5)[..3], replicate_seeds(9, 3)[..]);
        let s = replicate_seeds(9, 50);
        let mut u = s.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 50);
    }

    #[test]
    fn candidates_follow_the_waves() {
        let (truth, data) = series(20_000, 0.8, 0.8, 3);
        let c = initial_candidates(&data, &ModelStructure::of(&truth)).unwrap();
        assert_eq!(c.len(), 2);
        let centers = |p: &ModelParams| -> Vec<f64> {
            p.infection.variants.iter().map(|v| v.components[0].center).collect()
        };
        let first = centers(&c[0]);
        assert!((first[0] - 60.0).abs() < 15.0 && (first[1] - 125.0).abs() < 15.0, "{first:?}");
        assert_eq!(centers(&c[1]), vec![first[1], first[0]]);
    }

    #[test]
    fn reporting_rate_is_recovered_at_truth() {
        let (truth, data) = series(20_000, 0.5, 0.3, 5);
        let r = infer_reporting_rate(&data, &truth).unwrap();
        assert!((r - 0.3).abs() < 0.03, "{r}");
    }

    #[test]
    fn fit_recovers_hazards_and_is_deterministic() {
        let (truth, data) = series(20_000, 0.8, 0.8, 11);
        let mut c = quick(&truth, Scenario::PolicyInformed);
        c.initial_values = InitialValues::Given(truth.clone());
        let a = fit(&data, &c).unwrap();
        assert!(a.converged);
        assert!((a.value("lambda[2]").unwrap() / 0.005 - 1.0).abs() < 0.2);
        assert!((a.value("lambda[1]").unwrap() / 0.002 - 1.0).abs() < 0.3);
        let b = fit(&data, &c).unwrap();
        assert_eq!(a, b);

        let asym = a.diagnostics.hessian_asymmetry.unwrap();
        let max = a.diagnostics.hessian_max_abs.unwrap();
        assert!(asym < 1e-4 * max, "{asym} vs {max}");
        let se = a.fisher("lambda[2]").unwrap();
        assert!(se > 0.0 && se < 0.002);

        let direct = fisher_se(&data, &a.estimates, &c).unwrap();
        assert_eq!(Some(direct.se), a.se_fisher);
    }

    #[test]
    fn auto_init_matches_truth_init() {
        let (truth, data) = series(20_000, 0.8, 0.8, 12);
        let auto = fit(&data, &quick(&truth, Scenario::PolicyInformed)).unwrap();
        let mut c = quick(&truth, Scenario::PolicyInformed);
        c.initial_values = InitialValues::Given(truth.clone());
        let given = fit(&data, &c).unwrap();
        assert!(auto.loglik >= given.loglik - 1e-3, "{} vs {}", auto.loglik, given.loglik);
        assert!((auto.value("lambda[2]").unwrap() / given.value("lambda[2]").unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn full_and_policy_agree_when_every_day_is_complete() {
        let (truth, data) = series(5_000, 1.0, 1.0, 13);
        let mut full = quick(&truth, Scenario::FullObservability);
        full.initial_values = InitialValues::Given(truth.clone());
        full.compute_fisher = false;
        let policy = FitConfig {
            scenario: Scenario::PolicyInformed,
            ..full.clone()
        };
        let a = fit(&data, &full).unwrap();
        let b = fit(&data, &policy).unwrap();
        assert_eq!(a.natural, b.natural);
        assert_eq!(a.loglik, b.loglik);
    }

    #[test]
    fn naive_mode_treats_every_day_as_complete() {
        let (truth, data) = series(5_000, 0.2, 0.2, 14);
        let mut naive = quick(&truth, Scenario::PolicyInformed);
        naive.naive_mode = true;
        naive.initial_values = InitialValues::Given(truth.clone());
        naive.compute_fisher = false;
        let mut full = naive.clone();
        full.naive_mode = false;
        let mut all = data.clone();
        all.complete = Some(vec![true; all.num_days()]);
        let a = fit(&data, &naive).unwrap();
        let b = fit(&all, &full).unwrap();
        assert!(a.naive_mode);
        assert_eq!(a.natural, b.natural);
        // Under-counted cases push the naive hazard up.
        assert!(a.value("lambda[2]").unwrap() > 0.0075);
    }

    #[test]
    fn persistent_underreporting_fits() {
        let (truth, data) = series(5_000, 0.0, 0.5, 15);
        let mut c = quick(&truth, Scenario::PersistentUnderreporting);
        c.initial_values = InitialValues::Given(truth.clone());
        c.compute_fisher = false;
        let r = fit(&data, &c).unwrap();
        assert!(r.loglik.is_finite());
        assert_eq!(r.scenario, Scenario::PersistentUnderreporting);
    }

    #[test]
    fn bootstrap_with_repeated_seed_has_zero_spread() {
        let (truth, data) = series(3_000, 0.8, 0.8, 16);
        let mut c = quick(&truth, Scenario::PolicyInformed);
        c.initial_values = InitialValues::Given(truth.clone());
        let b = parametric_bootstrap(&truth, &data, &c, Some(0.8), &[77, 77]).unwrap();
        assert_eq!(b.requested, 2);
        if b.failed == 0 {
            assert_eq!(b.estimates[0], b.estimates[1]);
            assert!(b.se.iter().all(|s| *s == Some(0.0)));
        }
    }

    #[test]
    fn bootstrap_series_mirrors_template() {
        let (truth, mut data) = series(2_000, 0.5, 0.5, 17);
        data.wastewater_total[10] = None;
        if let Some(by) = &mut data.wastewater_by_variant {
            for v in by.iter_mut() {
                v[10] = None;
            }
        }
        let b = bootstrap_series(&truth, &data, 0.5, 3).unwrap();
        assert_eq!(b.complete, data.complete);
        assert_eq!(b.wastewater_total[10], None);
        assert!(b.wastewater_total[11].is_some());
        assert_eq!(b, bootstrap_series(&truth, &data, 0.5, 3).unwrap());
    }
}
