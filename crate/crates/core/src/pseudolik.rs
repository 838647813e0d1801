//! Pseudo-likelihood for aggregated surveillance series.
//!
//! Unobserved variant-specific counts (infected, admitted, at risk) are
//! replaced by their conditional expectations given the aggregated series
//! and the occupancy probabilities implied by the infection parameters.
//! Reported cases enter either as a binomial observation of the number
//! infected (complete days) or as a one-sided lower bound (under-reported
//! days).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{propagate_occupancy, CovariateMatrix, ModelParams, OccupancyTable};
use crate::simulate::{AggregatedSeries, IndividualTrajectory};
use crate::special::{gamma_ln_pdf, inverse_mills, ln_choose, std_normal_ln_sf};

/// Stand-in for `-inf` so derivative-free searches can step away from
/// impossible parameter regions.
pub const SENTINEL: f64 = -1e300;

/// Below this infected probability a day has no variant composition and
/// contributes only its case term.
pub const MIN_INFECTED: f64 = 1e-12;

/// Minimum aggregated gamma shape for a wastewater term to be evaluated.
pub const MIN_WASTEWATER_SHAPE: f64 = 1e-8;

/// Interpretation of reported active cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Reported cases equal true infections every day.
    FullObservability,
    /// Reported cases are complete only on days flagged by `L_t`.
    PolicyInformed,
    /// Reported cases are a lower bound every day.
    PersistentUnderreporting,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::FullObservability,
        Scenario::PolicyInformed,
        Scenario::PersistentUnderreporting,
    ];

    /// Scenario by its 1-based number.
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::FullObservability),
            2 => Some(Self::PolicyInformed),
            3 => Some(Self::PersistentUnderreporting),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::FullObservability => 1,
            Self::PolicyInformed => 2,
            Self::PersistentUnderreporting => 3,
        }
    }

    /// Per-day completeness flags implied by the scenario.
    pub fn complete_days(self, series: &AggregatedSeries) -> Result<Vec<bool>> {
        let n = series.num_days();
        match self {
            Self::FullObservability => Ok(vec![true; n]),
            Self::PersistentUnderreporting => Ok(vec![false; n]),
            Self::PolicyInformed => series.complete.clone().ok_or_else(|| {
                Error::InvalidData("policy-informed scenario needs the L column".into())
            }),
        }
    }
}

/// `P{s(t) = k | s(t) != 0}` per day; undefined on days without infection.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantShares {
    data: Vec<f64>,
    defined: Vec<bool>,
    num_variants: usize,
}

impl VariantShares {
    pub fn get(&self, t: usize) -> Option<&[f64]> {
        self.defined[t].then(|| &self.data[t * self.num_variants..(t + 1) * self.num_variants])
    }

    pub fn num_days(&self) -> usize {
        self.defined.len()
    }
}

pub fn variant_shares(occupancy: &OccupancyTable) -> VariantShares {
    let k = occupancy.num_variants();
    let n = occupancy.num_days();
    let mut data = vec![0.0; n * k];
    let mut defined = vec![false; n];
    for t in 0..n {
        let infected = occupancy.infected(t);
        if infected >= MIN_INFECTED {
            defined[t] = true;
            let row = occupancy.row(t);
            for v in 0..k {
                data[t * k + v] = row[v + 1] / infected;
            }
        }
    }
    VariantShares {
        data,
        defined,
        num_variants: k,
    }
}

/// `E(S | S >= lower)` for `S ~ Binomial(n, p)` under the normal
/// approximation with the inverse Mills ratio correction.
pub fn truncated_mean(n: u64, p: f64, lower: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("population must be >= 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    if !(lower >= 0.0 && lower.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lower bound must be finite and >= 0, got {lower}"
        )));
    }
    Ok(truncated_mean_unchecked(n as f64, p, lower))
}

#[inline]
fn truncated_mean_unchecked(n: f64, p: f64, lower: f64) -> f64 {
    let mu = n * p;
    let sigma = (mu * (1.0 - p)).sqrt();
    let z = (lower - mu) / sigma;
    if z <= -8.0 {
        mu
    } else {
        mu + sigma * inverse_mills(z)
    }
}

/// Conditional expectations of the latent variant-specific counts.
/// Arrays indexed by `[day * K + variant - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentExpectations {
    pub num_variants: usize,
    pub shares: VariantShares,
    /// Infected count used for day `t` after resolving the scenario.
    pub resolved_active: Vec<f64>,
    pub active: Vec<f64>,
    pub admissions: Vec<f64>,
    pub at_risk: Vec<f64>,
}

impl LatentExpectations {
    pub fn active(&self, t: usize, variant: usize) -> f64 {
        self.active[t * self.num_variants + variant - 1]
    }

    pub fn admissions(&self, t: usize, variant: usize) -> f64 {
        self.admissions[t * self.num_variants + variant - 1]
    }

    pub fn at_risk(&self, t: usize, variant: usize) -> f64 {
        self.at_risk[t * self.num_variants + variant - 1]
    }
}

fn check_horizon(series: &AggregatedSeries, occupancy: &OccupancyTable) -> Result<()> {
    if series.num_days() != occupancy.num_days() {
        return Err(Error::HorizonMismatch {
            expected: occupancy.num_days(),
            found: series.num_days(),
        });
    }
    Ok(())
}

/// Resolved infected count for one day.
#[inline]
fn resolve_active(complete: bool, reported: u64, n: u64, infected: f64) -> f64 {
    if complete || infected < MIN_INFECTED {
        reported as f64
    } else if infected >= 1.0 {
        n as f64
    } else {
        truncated_mean_unchecked(n as f64, infected, reported as f64)
    }
}

pub fn latent_expectations(
    series: &AggregatedSeries,
    occupancy: &OccupancyTable,
    scenario: Scenario,
    population_size: u64,
) -> Result<LatentExpectations> {
    check_horizon(series, occupancy)?;
    if let Some(t) = (0..series.num_days())
        .find(|&t| series.cumulative_admissions[t] > population_size)
    {
        return Err(Error::InvalidData(format!(
            "cumulative admissions exceed population on day {t}"
        )));
    }
    let complete = scenario.complete_days(series)?;
    let shares = variant_shares(occupancy);
    let k = occupancy.num_variants();
    let n = series.num_days();
    let mut out = LatentExpectations {
        num_variants: k,
        resolved_active: vec![0.0; n],
        active: vec![0.0; n * k],
        admissions: vec![0.0; n * k],
        at_risk: vec![0.0; n * k],
        shares,
    };
    let nf = population_size as f64;
    for t in 0..n {
        let s = resolve_active(
            complete[t],
            series.reported_active[t],
            population_size,
            occupancy.infected(t),
        );
        out.resolved_active[t] = s;
        let Some(pi) = out.shares.get(t) else {
            continue;
        };
        let free = 1.0 - series.cumulative_admissions[t] as f64 / nf;
        let h = series.admissions[t] as f64;
        for v in 0..k {
            let es = s * pi[v];
            out.active[t * k + v] = es;
            out.admissions[t * k + v] = h * pi[v];
            out.at_risk[t * k + v] = es * free;
        }
    }
    Ok(out)
}

/// Per-component value of the pseudo-log-likelihood plus bookkeeping of
/// wastewater terms that could not be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoglikBreakdown {
    pub hospital: f64,
    pub wastewater: f64,
    pub cases: f64,
    /// Day-variant wastewater terms dropped for zero signal or near-zero shape.
    pub dropped_wastewater: usize,
    /// Dropped terms with positive signal but no inferred infections.
    pub signal_without_infection: usize,
    /// Day-variant terms skipped because the measurement is missing.
    pub missing_wastewater: usize,
}

impl LoglikBreakdown {
    pub fn total(&self) -> f64 {
        let v = self.hospital + self.wastewater + self.cases;
        if v.is_finite() {
            v
        } else {
            SENTINEL
        }
    }
}

/// A series prepared for repeated pseudo-likelihood evaluation.
#[derive(Debug, Clone)]
pub struct PseudoLikelihood<'a> {
    series: &'a AggregatedSeries,
    population_size: u64,
    complete: Vec<bool>,
    /// `ln C(N, S*_t)` on complete days.
    ln_choose: Vec<f64>,
}

impl<'a> PseudoLikelihood<'a> {
    pub fn new(
        series: &'a AggregatedSeries,
        scenario: Scenario,
        population_size: u64,
    ) -> Result<Self> {
        series.validate()?;
        if population_size == 0 {
            return Err(Error::InvalidParameter("population must be >= 1".into()));
        }
        if let Some(t) = (0..series.num_days()).find(|&t| {
            series.reported_active[t] > population_size
                || series.cumulative_admissions[t] > population_size
        }) {
            return Err(Error::InvalidData(format!(
                "counts exceed the population on day {t}"
            )));
        }
        let complete = scenario.complete_days(series)?;
        let ln_choose = series
            .reported_active
            .iter()
            .zip(&complete)
            .map(|(&s, &c)| if c { ln_choose(population_size, s) } else { 0.0 })
            .collect();
        Ok(Self {
            series,
            population_size,
            complete,
            ln_choose,
        })
    }

    pub fn series(&self) -> &AggregatedSeries {
        self.series
    }

    pub fn complete(&self) -> &[bool] {
        &self.complete
    }

    pub fn evaluate(&self, params: &ModelParams) -> Result<f64> {
        Ok(self.breakdown(params)?.total())
    }

    pub fn breakdown(&self, params: &ModelParams) -> Result<LoglikBreakdown> {
        let series = self.series;
        if params.num_days() != series.num_days() {
            return Err(Error::HorizonMismatch {
                expected: params.num_days(),
                found: series.num_days(),
            });
        }
        if let Some(k) = series.num_variants() {
            if k != params.num_variants() {
                return Err(Error::InvalidParameter(format!(
                    "series has {k} wastewater variants, model has {}",
                    params.num_variants()
                )));
            }
        }
        // NaN is a caller error; anything else invalid is an impossible
        // configuration scored with the sentinel.
        if has_nan(params) {
            return Err(Error::InvalidParameter("NaN in parameters".into()));
        }
        if params.validate().is_err() {
            return Ok(LoglikBreakdown {
                cases: f64::NEG_INFINITY,
                ..Default::default()
            });
        }
        let occupancy = match propagate_occupancy(params) {
            Ok(o) => o,
            Err(Error::StepSize { .. }) => {
                return Ok(LoglikBreakdown {
                    cases: f64::NEG_INFINITY,
                    ..Default::default()
                })
            }
            Err(e) => return Err(e),
        };
        Ok(self.breakdown_with(params, &occupancy))
    }

    fn breakdown_with(&self, params: &ModelParams, occupancy: &OccupancyTable) -> LoglikBreakdown {
        let series = self.series;
        let k = params.num_variants();
        let n = self.population_size;
        let nf = n as f64;
        let mut out = LoglikBreakdown::default();
        let mut pi = vec![0.0; k];
        for t in 0..series.num_days() {
            let infected = occupancy.infected(t);
            let reported = series.reported_active[t];
            out.cases += if self.complete[t] {
                self.binomial_term(t, reported, infected)
            } else {
                lower_bound_term(reported, n, infected)
            };
            if infected < MIN_INFECTED {
                continue;
            }
            let row = occupancy.row(t);
            for v in 0..k {
                pi[v] = row[v + 1] / infected;
            }
            let s = resolve_active(self.complete[t], reported, n, infected);
            let free = 1.0 - series.cumulative_admissions[t] as f64 / nf;
            let h = series.admissions[t] as f64;
            let x = series.covariates.row(t);
            for v in 0..k {
                let es = s * pi[v];
                // Hospital admissions: Poisson-type term.
                let f = params.hazard.variants[v].rate(x);
                let eh = h * pi[v];
                let er = es * free;
                if eh > 0.0 {
                    out.hospital += eh * f.ln();
                }
                out.hospital -= f * er;

                // Wastewater: gamma with shape proportional to infections.
                let w = match &series.wastewater_by_variant {
                    Some(by_variant) => by_variant[v][t],
                    None => series.wastewater_total[t].map(|w| w * pi[v]),
                };
                let Some(w) = w else {
                    out.missing_wastewater += 1;
                    continue;
                };
                let sv = &params.shedding.variants[v];
                let shape = es * sv.shape;
                if w <= 0.0 || shape < MIN_WASTEWATER_SHAPE {
                    out.dropped_wastewater += 1;
                    if w > 0.0 {
                        out.signal_without_infection += 1;
                    }
                    continue;
                }
                out.wastewater += gamma_ln_pdf(w, shape, sv.rate(x));
            }
        }
        out
    }

    fn binomial_term(&self, t: usize, k: u64, p: f64) -> f64 {
        let n = self.population_size;
        if p <= 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if p >= 1.0 {
            return if k == n { 0.0 } else { f64::NEG_INFINITY };
        }
        self.ln_choose[t] + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
    }
}

/// `ln P(S >= lower)` under the normal approximation to `Binomial(n, p)`.
fn lower_bound_term(lower: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if lower == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return 0.0;
    }
    let mu = n as f64 * p;
    let sigma = (mu * (1.0 - p)).sqrt();
    std_normal_ln_sf((lower as f64 - mu) / sigma)
}

fn has_nan(params: &ModelParams) -> bool {
    let inf = params.infection.variants.iter().any(|v| {
        v.recovery_rate.is_nan()
            || v
                .components
                .iter()
                .any(|c| c.amplitude.is_nan() || c.center.is_nan() || c.width.is_nan())
    });
    let shed = params.shedding.variants.iter().any(|v| {
        v.shape.is_nan() || v.intercept.is_nan() || v.coefficients.iter().any(|b| b.is_nan())
    });
    let hosp = params
        .hazard
        .variants
        .iter()
        .any(|v| v.intercept.is_nan() || v.coefficients.iter().any(|b| b.is_nan()));
    inf || shed || hosp || params.time_step.is_nan()
}

/// Pseudo-log-likelihood of `series` at `params`.
pub fn pseudo_loglik(params: &ModelParams, series: &AggregatedSeries, scenario: Scenario) -> Result<f64> {
    PseudoLikelihood::new(series, scenario, params.population_size)?.evaluate(params)
}

/// Complete-data log-likelihood components, daily discretization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndividualLoglik {
    pub hospital: f64,
    pub shedding: f64,
    pub infection: f64,
}

impl IndividualLoglik {
    pub fn total(&self) -> f64 {
        self.hospital + self.shedding + self.infection
    }
}

/// Complete-data log-likelihood components summed over a population.
///
/// Daily discretization: the admission hazard is integrated over the days
/// before admission (all days when censored) and contributes `ln lambda` on
/// the admission day; the infection process integrates exit intensities
/// over days `0..E` and contributes `ln gamma` per transition, evaluated at
/// the day the transition leaves from.
pub fn individual_loglik_terms(
    population: &[IndividualTrajectory],
    params: &ModelParams,
    covariates: &CovariateMatrix,
) -> Result<IndividualLoglik> {
    params.validate()?;
    let num_days = params.num_days();
    if covariates.num_days() != num_days {
        return Err(Error::HorizonMismatch {
            expected: num_days,
            found: covariates.num_days(),
        });
    }
    let k = params.num_variants();
    let intensity: Vec<Vec<f64>> = (0..num_days)
        .map(|t| {
            (1..=k)
                .map(|v| params.infection.intensity(v, t as f64))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let hazard: Vec<Vec<f64>> = (0..num_days)
        .map(|t| {
            let x = covariates.row(t);
            params.hazard.variants.iter().map(|h| h.rate(x)).collect()
        })
        .collect();

    let mut out = IndividualLoglik::default();
    for traj in population {
        if traj.states.len() != num_days {
            return Err(Error::HorizonMismatch {
                expected: num_days,
                found: traj.states.len(),
            });
        }
        // Hospitalization.
        let exposure_end = if traj.hospitalized {
            traj.hosp_time
        } else {
            num_days
        };
        for t in 0..exposure_end {
            let s = traj.states[t] as usize;
            if s != 0 {
                out.hospital -= hazard[t][s - 1];
            }
        }
        if traj.hospitalized {
            let s = traj.states[traj.hosp_time] as usize;
            if s == 0 {
                return Err(Error::InvalidData("admission from the uninfected state".into()));
            }
            out.hospital += hazard[traj.hosp_time][s - 1].ln();
        }
        // Shedding.
        for t in 0..num_days {
            let s = traj.states[t] as usize;
            if s != 0 {
                let sv = &params.shedding.variants[s - 1];
                out.shedding += gamma_ln_pdf(traj.shedding[t], sv.shape, sv.rate(covariates.row(t)));
            }
        }
        // Infection process.
        for t in 0..params.horizon {
            let s = traj.states[t] as usize;
            let next = traj.states[t + 1] as usize;
            if s == 0 {
                out.infection -= intensity[t].iter().sum::<f64>();
                if next != 0 {
                    out.infection += intensity[t][next - 1].ln();
                }
            } else {
                let r = params.infection.variants[s - 1].recovery_rate;
                out.infection -= r;
                if next == 0 {
                    out.infection += r.ln();
                } else if next != s {
                    return Err(Error::InvalidData(
                        "direct transition between infected states".into(),
                    ));
                }
            }
        }
    }
    Ok(out)
}

pub fn individual_loglik_oracle(
    population: &[IndividualTrajectory],
    params: &ModelParams,
    covariates: &CovariateMatrix,
) -> Result<f64> {
    Ok(individual_loglik_terms(population, params, covariates)?.total())
}
