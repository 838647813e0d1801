//! Individual-level simulation of the joint model and aggregation into
//! daily population series, plus the case under-reporting mechanism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateMatrix, ModelParams};

/// Individuals per reduction block. Aggregates are summed within a block in
/// individual order and across blocks in block order, so the result does not
/// depend on how blocks are scheduled.
const BLOCK_SIZE: usize = 512;

/// Complete path of one simulated individual.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualTrajectory {
    /// State per day `0..=E`; `0` is uninfected.
    pub states: Vec<u8>,
    /// Daily shedding, exactly zero on uninfected days.
    pub shedding: Vec<f64>,
    /// Admission day, or `E` when censored.
    pub hosp_time: usize,
    pub hospitalized: bool,
    /// State at admission.
    pub hosp_variant: Option<usize>,
}

impl IndividualTrajectory {
    /// An individual who is never infected over days `0..=horizon`.
    pub fn uninfected(horizon: usize) -> Self {
        Self {
            states: vec![0; horizon + 1],
            shedding: vec![0.0; horizon + 1],
            hosp_time: horizon,
            hospitalized: false,
            hosp_variant: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

/// Daily population-level surveillance series.
///
/// Per-variant wastewater is indexed `[variant - 1][day]`. Missing
/// wastewater measurements are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedSeries {
    pub admissions: Vec<u64>,
    pub cumulative_admissions: Vec<u64>,
    pub wastewater_total: Vec<Option<f64>>,
    pub wastewater_by_variant: Option<Vec<Vec<Option<f64>>>>,
    /// True number of infected individuals; known only for simulated data.
    pub true_active: Option<Vec<u64>>,
    pub reported_active: Vec<u64>,
    /// Days on which reported cases are complete (`L_t`).
    pub complete: Option<Vec<bool>>,
    pub covariates: CovariateMatrix,
}

impl AggregatedSeries {
    pub fn num_days(&self) -> usize {
        self.admissions.len()
    }

    pub fn horizon(&self) -> usize {
        self.num_days() - 1
    }

    pub fn num_variants(&self) -> Option<usize> {
        self.wastewater_by_variant.as_ref().map(Vec::len)
    }

    /// Checks the structural invariants of the series.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_days();
        if n == 0 {
            return Err(Error::InvalidData("empty series".into()));
        }
        let same = |len: usize, what: &str| -> Result<()> {
            if len != n {
                return Err(Error::InvalidData(format!(
                    "{what} has {len} days, expected {n}"
                )));
            }
            Ok(())
        };
        same(self.cumulative_admissions.len(), "cumulative admissions")?;
        same(self.wastewater_total.len(), "wastewater total")?;
        same(self.reported_active.len(), "reported actives")?;
        same(self.covariates.num_days(), "covariates")?;
        if let Some(l) = &self.complete {
            same(l.len(), "reporting indicator")?;
        }
        if let Some(s) = &self.true_active {
            same(s.len(), "true actives")?;
            if let Some(t) = (0..n).find(|&t| self.reported_active[t] > s[t]) {
                return Err(Error::InvalidData(format!(
                    "reported actives exceed true actives on day {t}"
                )));
            }
        }
        let mut prev = 0;
        for t in 0..n {
            let c = self.cumulative_admissions[t];
            if c < prev || c - prev != self.admissions[t] {
                return Err(Error::InvalidData(format!(
                    "cumulative admissions inconsistent on day {t}"
                )));
            }
            prev = c;
        }
        if let Some(w) = &self.wastewater_by_variant {
            for series in w {
                same(series.len(), "variant wastewater")?;
            }
            for t in 0..n {
                let parts: Option<f64> = w.iter().map(|s| s[t]).sum();
                match (parts, self.wastewater_total[t]) {
                    (Some(p), Some(total)) => {
                        if (p - total).abs() > 1e-9 * total.abs().max(f64::MIN_POSITIVE) {
                            return Err(Error::InvalidData(format!(
                                "wastewater total differs from variant sum on day {t}"
                            )));
                        }
                    }
                    (None, None) => {}
                    _ => {
                        return Err(Error::InvalidData(format!(
                            "wastewater missing inconsistently on day {t}"
                        )))
                    }
                }
            }
        }
        for t in 0..n {
            if let Some(w) = self.wastewater_total[t] {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidData(format!("invalid wastewater on day {t}")));
                }
            }
        }
        Ok(())
    }
}

/// Which days are flagged as completely reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompleteDays {
    /// `ceil(r1 * (E + 1))` days drawn uniformly without replacement.
    Random,
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportingConfig {
    /// `r1`: fraction of days with complete reporting.
    pub complete_fraction: f64,
    /// `r2`: per-individual reporting probability on under-reported days.
    pub reporting_rate: f64,
    pub seed: u64,
    pub complete_days: CompleteDays,
}

impl ReportingConfig {
    pub fn new(complete_fraction: f64, reporting_rate: f64, seed: u64) -> Result<Self> {
        let c = Self {
            complete_fraction,
            reporting_rate,
            seed,
            complete_days: CompleteDays::Random,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("complete fraction r1", self.complete_fraction),
            ("reporting rate r2", self.reporting_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// RNG stream of individual `index` under `master_seed`.
pub fn individual_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Per-variant shedding samplers. Shapes far below one are sampled in log
/// space as `Gamma(shape + 1) * U^(1/shape)`.
struct SheddingSampler {
    base: Vec<Gamma<f64>>,
    shapes: Vec<f64>,
}

impl SheddingSampler {
    fn new(params: &ModelParams) -> Result<Self> {
        let shapes: Vec<f64> = params.shedding.variants.iter().map(|v| v.shape).collect();
        let base = shapes
            .iter()
            .map(|&a| {
                let boosted = if a < 1.0 { a + 1.0 } else { a };
                Gamma::new(boosted, 1.0)
                    .map_err(|e| Error::InvalidParameter(format!("shedding shape {a}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { base, shapes })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, slot: usize, rate: f64) -> f64 {
        let shape = self.shapes[slot];
        let g: f64 = self.base[slot].sample(rng);
        let w = if shape < 1.0 {
            let u: f64 = rng.random::<f64>();
            // u == 0 has probability 2^-53; treat it like the smallest draw.
            let log_w = g.ln() + u.max(f64::MIN_POSITIVE).ln() / shape - rate.ln();
            log_w.exp()
        } else {
            g / rate
        };
        w.max(f64::MIN_POSITIVE)
    }
}

/// Pre-evaluated daily quantities shared by every simulated individual.
struct DailyRates {
    substeps: usize,
    /// Infection probability per sub-step, `[step][variant]`.
    infect: Vec<Vec<f64>>,
    /// Recovery probability per sub-step, per variant.
    recover: Vec<f64>,
    /// Admission probability per sub-step, `[day][variant]`.
    admit: Vec<Vec<f64>>,
    /// Shedding rate, `[day][variant]`.
    shed_rate: Vec<Vec<f64>>,
}

impl DailyRates {
    fn new(params: &ModelParams, covariates: &CovariateMatrix) -> Result<Self> {
        params.validate()?;
        if params.num_variants() > u8::MAX as usize {
            return Err(Error::InvalidParameter("too many variants".into()));
        }
        if covariates.num_days() != params.num_days() {
            return Err(Error::HorizonMismatch {
                expected: params.num_days(),
                found: covariates.num_days(),
            });
        }
        let substeps = params.steps_per_day()?;
        let dt = params.time_step;
        let mut infect = Vec::with_capacity(params.horizon * substeps);
        for day in 0..params.horizon {
            for j in 0..substeps {
                let t = day as f64 + j as f64 * dt;
                let row: Vec<f64> = params
                    .infection
                    .variants
                    .iter()
                    .map(|v| v.components.iter().map(|c| c.eval(t)).sum::<f64>() * dt)
                    .collect();
                let total: f64 = row.iter().sum();
                if total > 1.0 + 1e-12 {
                    return Err(Error::StepSize {
                        day,
                        probability: total,
                    });
                }
                infect.push(row);
            }
        }
        let recover: Vec<f64> = params
            .infection
            .variants
            .iter()
            .map(|v| v.recovery_rate * dt)
            .collect();
        if let Some(&p) = recover.iter().find(|&&p| p > 1.0) {
            return Err(Error::StepSize {
                day: 0,
                probability: p,
            });
        }
        let mut admit = Vec::with_capacity(params.num_days());
        let mut shed_rate = Vec::with_capacity(params.num_days());
        for t in 0..params.num_days() {
            let x = covariates.row(t);
            admit.push(
                params
                    .hazard
                    .variants
                    .iter()
                    .map(|h| -(-h.rate(x) * dt).exp_m1())
                    .collect(),
            );
            shed_rate.push(params.shedding.variants.iter().map(|s| s.rate(x)).collect());
        }
        Ok(Self {
            substeps,
            infect,
            recover,
            admit,
            shed_rate,
        })
    }
}

fn simulate_with<R: Rng + ?Sized>(
    rates: &DailyRates,
    sampler: &SheddingSampler,
    horizon: usize,
    rng: &mut R,
) -> IndividualTrajectory {
    let mut traj = IndividualTrajectory::uninfected(horizon);
    let mut state = 0usize;
    for day in 0..=horizon {
        traj.states[day] = state as u8;
        if state != 0 {
            traj.shedding[day] = sampler.sample(rng, state - 1, rates.shed_rate[day][state - 1]);
        }
        // Sub-steps of day `day`; the last day only carries admission risk.
        // Admission risk applies only while in the state recorded for the day.
        let day_state = state;
        let steps = if day == horizon { 1 } else { rates.substeps };
        for j in 0..steps {
            if state != 0
                && state == day_state
                && !traj.hospitalized
                && rng.random::<f64>() < rates.admit[day][state - 1]
            {
                traj.hospitalized = true;
                traj.hosp_time = day;
                traj.hosp_variant = Some(state);
            }
            if day == horizon {
                break;
            }
            let u: f64 = rng.random();
            if state == 0 {
                let mut acc = 0.0;
                for (k, p) in rates.infect[day * rates.substeps + j].iter().enumerate() {
                    acc += p;
                    if u < acc {
                        state = k + 1;
                        break;
                    }
                }
            } else if u < rates.recover[state - 1] {
                state = 0;
            }
        }
    }
    traj
}

/// Simulates one individual's infection path, shedding and admission.
pub fn simulate_individual<R: Rng + ?Sized>(
    params: &ModelParams,
    covariates: &CovariateMatrix,
    rng: &mut R,
) -> Result<IndividualTrajectory> {
    let rates = DailyRates::new(params, covariates)?;
    let sampler = SheddingSampler::new(params)?;
    Ok(simulate_with(&rates, &sampler, params.horizon, rng))
}

/// Running sums over a block of individuals.
#[derive(Debug, Clone)]
struct Accumulator {
    num_variants: usize,
    admissions: Vec<u64>,
    active: Vec<u64>,
    /// `[day * K + variant - 1]`
    shedding: Vec<f64>,
}

impl Accumulator {
    fn new(num_days: usize, num_variants: usize) -> Self {
        Self {
            num_variants,
            admissions: vec![0; num_days],
            active: vec![0; num_days],
            shedding: vec![0.0; num_days * num_variants],
        }
    }

    fn add(&mut self, traj: &IndividualTrajectory) {
        if traj.hospitalized {
            self.admissions[traj.hosp_time] += 1;
        }
        for (t, (&s, &w)) in traj.states.iter().zip(&traj.shedding).enumerate() {
            if s != 0 {
                self.active[t] += 1;
                self.shedding[t * self.num_variants + s as usize - 1] += w;
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.admissions.iter_mut().zip(&other.admissions) {
            *a += b;
        }
        for (a, b) in self.active.iter_mut().zip(&other.active) {
            *a += b;
        }
        for (a, b) in self.shedding.iter_mut().zip(&other.shedding) {
            *a += b;
        }
    }

    fn into_series(self, covariates: &CovariateMatrix) -> AggregatedSeries {
        let k = self.num_variants;
        let num_days = self.admissions.len();
        let by_variant: Vec<Vec<Option<f64>>> = (0..k)
            .map(|v| (0..num_days).map(|t| Some(self.shedding[t * k + v])).collect())
            .collect();
        let total = (0..num_days)
            .map(|t| Some(self.shedding[t * k..(t + 1) * k].iter().sum()))
            .collect();
        let cumulative = self
            .admissions
            .iter()
            .scan(0u64, |c, &h| {
                *c += h;
                Some(*c)
            })
            .collect();
        AggregatedSeries {
            admissions: self.admissions,
            cumulative_admissions: cumulative,
            wastewater_total: total,
            wastewater_by_variant: Some(by_variant),
            true_active: Some(self.active.clone()),
            reported_active: self.active,
            complete: Some(vec![true; num_days]),
            covariates: covariates.clone(),
        }
    }
}

fn reduce_blocks(blocks: Vec<Accumulator>, num_days: usize, k: usize) -> Accumulator {
    let mut total = Accumulator::new(num_days, k);
    for b in &blocks {
        total.merge(b);
    }
    total
}

/// Sums individual trajectories into daily series. Reported actives equal
/// true actives and every day is flagged complete.
pub fn aggregate(
    population: &[IndividualTrajectory],
    params: &ModelParams,
    covariates: &CovariateMatrix,
) -> Result<AggregatedSeries> {
    if population.is_empty() {
        return Err(Error::InvalidData("empty population".into()));
    }
    let num_days = params.num_days();
    if covariates.num_days() != num_days {
        return Err(Error::HorizonMismatch {
            expected: num_days,
            found: covariates.num_days(),
        });
    }
    let k = params.num_variants();
    for traj in population {
        if traj.states.len() != num_days || traj.shedding.len() != num_days {
            return Err(Error::HorizonMismatch {
                expected: num_days,
                found: traj.states.len(),
            });
        }
        if traj.states.iter().any(|&s| s as usize > k) {
            return Err(Error::InvalidData("trajectory state exceeds variant count".into()));
        }
    }
    let blocks = population
        .chunks(BLOCK_SIZE)
        .map(|chunk| {
            let mut acc = Accumulator::new(num_days, k);
            for t in chunk {
                acc.add(t);
            }
            acc
        })
        .collect();
    Ok(reduce_blocks(blocks, num_days, k).into_series(covariates))
}

/// Simulates `params.population_size` individuals and aggregates them
/// without keeping trajectories in memory. Individual `i` draws from
/// `individual_rng(seed, i)`, so the result is identical for any thread
/// count and equals `aggregate` over the same individuals.
pub fn simulate_population(
    params: &ModelParams,
    covariates: &CovariateMatrix,
    seed: u64,
) -> Result<AggregatedSeries> {
    let rates = DailyRates::new(params, covariates)?;
    let sampler = SheddingSampler::new(params)?;
    let n = params.population_size as usize;
    let num_days = params.num_days();
    let k = params.num_variants();
    let num_blocks = n.div_ceil(BLOCK_SIZE);
    let blocks: Vec<Accumulator> = (0..num_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Accumulator::new(num_days, k);
            for i in b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(n) {
                let mut rng = individual_rng(seed, i as u64);
                acc.add(&simulate_with(&rates, &sampler, params.horizon, &mut rng));
            }
            acc
        })
        .collect();
    Ok(reduce_blocks(blocks, num_days, k).into_series(covariates))
}

/// Simulates and keeps every trajectory; memory grows with `N * E`.
pub fn simulate_trajectories(
    params: &ModelParams,
    covariates: &CovariateMatrix,
    seed: u64,
) -> Result<Vec<IndividualTrajectory>> {
    let rates = DailyRates::new(params, covariates)?;
    let sampler = SheddingSampler::new(params)?;
    Ok((0..params.population_size)
        .into_par_iter()
        .map(|i| {
            let mut rng = individual_rng(seed, i);
            simulate_with(&rates, &sampler, params.horizon, &mut rng)
        })
        .collect())
}

fn complete_day_count(fraction: f64, num_days: usize) -> usize {
    // Guard against 0.8 * 200 = 160.00000000000003 rounding up.
    ((fraction * num_days as f64 - 1e-9).ceil().max(0.0) as usize).min(num_days)
}

/// Applies the `(r1, r2)` under-reporting mechanism to the case series.
/// Admissions and wastewater are left untouched.
pub fn apply_reporting(series: &AggregatedSeries, config: &ReportingConfig) -> Result<AggregatedSeries> {
    config.validate()?;
    let truth = series
        .true_active
        .as_ref()
        .ok_or_else(|| Error::InvalidData("under-reporting needs true active counts".into()))?;
    let n = series.num_days();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut complete = vec![false; n];
    match &config.complete_days {
        CompleteDays::Random => {
            let m = complete_day_count(config.complete_fraction, n);
            for d in rand::seq::index::sample(&mut rng, n, m) {
                complete[d] = true;
            }
        }
        CompleteDays::Explicit(days) => {
            for &d in days {
                if d >= n {
                    return Err(Error::InvalidParameter(format!(
                        "complete day {d} beyond horizon"
                    )));
                }
                complete[d] = true;
            }
        }
    }
    let mut reported = Vec::with_capacity(n);
    for t in 0..n {
        let s = truth[t];
        reported.push(if complete[t] || s == 0 {
            s
        } else {
            Binomial::new(s, config.reporting_rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(&mut rng)
        });
    }
    Ok(AggregatedSeries {
        reported_active: reported,
        complete: Some(complete),
        ..series.clone()
    })
}
