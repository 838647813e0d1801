//! Model parameters and the deterministic kernel of the joint model:
//! infection intensities, the shedding and hospitalization observation
//! models, and forward propagation of state occupancy probabilities.
//!
//! State `0` is uninfected; states `1..=K` are the variant-specific
//! infected states. Every function taking a `variant` expects a state
//! index in `1..=K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma_ln_pdf;

/// Default recovery rate (1/day), roughly a 14-day infectious period.
pub const DEFAULT_RECOVERY_RATE: f64 = 0.07;

/// One Gaussian bump `a * exp(-(t - b)^2 / (2 c^2))` of an infection wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl GaussianComponent {
    pub fn new(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        let c = Self {
            amplitude,
            center,
            width,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.center.is_finite() && self.width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite mixture component {self:?}"
            )));
        }
        if self.amplitude < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative amplitude {}",
                self.amplitude
            )));
        }
        if self.width <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "non-positive width {}",
                self.width
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let d = (t - self.center) / self.width;
        self.amplitude * (-0.5 * d * d).exp()
    }
}

/// Infection-side parameters of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantIntensity {
    pub components: Vec<GaussianComponent>,
    /// Fixed recovery rate back to the uninfected state (1/day).
    pub recovery_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionParams {
    pub variants: Vec<VariantIntensity>,
}

impl InfectionParams {
    pub fn new(variants: Vec<VariantIntensity>) -> Result<Self> {
        let p = Self { variants };
        p.validate()?;
        Ok(p)
    }

    pub fn num_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.variants {
            for c in &v.components {
                c.validate()?;
            }
            if !(v.recovery_rate.is_finite() && v.recovery_rate > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "recovery rate must be positive, got {}",
                    v.recovery_rate
                )));
            }
        }
        Ok(())
    }

    /// Infection intensity `gamma_0k(t)` for state `variant` at day `t`.
    pub fn intensity(&self, variant: usize, t: f64) -> Result<f64> {
        let v = variant_slot(&self.variants, variant)?;
        Ok(v.components.iter().map(|c| c.eval(t)).sum())
    }
}

pub fn infection_intensity(params: &InfectionParams, variant: usize, t: f64) -> Result<f64> {
    params.intensity(variant, t)
}

/// Log-linear predictor `intercept + x' coef`; an empty coefficient vector
/// means the block carries no covariate effects.
#[inline]
pub(crate) fn linear_predictor(intercept: f64, coefficients: &[f64], x: &[f64]) -> f64 {
    if coefficients.is_empty() {
        return intercept;
    }
    debug_assert_eq!(coefficients.len(), x.len());
    intercept
        + coefficients
            .iter()
            .zip(x)
            .map(|(b, xi)| b * xi)
            .sum::<f64>()
}

fn check_dim(coefficients: &[f64], x: &[f64]) -> Result<()> {
    if !coefficients.is_empty() && coefficients.len() != x.len() {
        return Err(Error::InvalidParameter(format!(
            "covariate row has {} entries, coefficient vector has {}",
            x.len(),
            coefficients.len()
        )));
    }
    Ok(())
}

/// Gamma shedding model of one variant: shape `alpha` and log-rate
/// `intercept + x' coefficients` (shape-rate convention, mean = shape / rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheddingVariant {
    pub shape: f64,
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl SheddingVariant {
    #[inline]
    pub fn rate(&self, x: &[f64]) -> f64 {
        linear_predictor(self.intercept, &self.coefficients, x).exp()
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        self.shape / self.rate(x)
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        let r = self.rate(x);
        self.shape / (r * r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheddingParams {
    pub variants: Vec<SheddingVariant>,
}

impl SheddingParams {
    pub fn validate(&self) -> Result<()> {
        for v in &self.variants {
            if !(v.shape.is_finite() && v.shape > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "shedding shape must be positive, got {}",
                    v.shape
                )));
            }
            if !v.intercept.is_finite() || v.coefficients.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidParameter(
                    "non-finite shedding coefficient".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Log-density of one individual's daily shedding `w > 0` while infected
/// with `variant`.
pub fn shedding_density(
    params: &SheddingParams,
    variant: usize,
    covariates: &[f64],
    w: f64,
) -> Result<f64> {
    let v = variant_slot(&params.variants, variant)?;
    check_dim(&v.coefficients, covariates)?;
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "shedding value must be positive and finite, got {w}"
        )));
    }
    Ok(gamma_ln_pdf(w, v.shape, v.rate(covariates)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardVariant {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl HazardVariant {
    #[inline]
    pub fn rate(&self, x: &[f64]) -> f64 {
        linear_predictor(self.intercept, &self.coefficients, x).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    pub variants: Vec<HazardVariant>,
}

impl HazardParams {
    pub fn validate(&self) -> Result<()> {
        for v in &self.variants {
            if !v.intercept.is_finite() || v.coefficients.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidParameter(
                    "non-finite hazard coefficient".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Hospital admission hazard (1/day) of an individual infected with `variant`.
pub fn hazard_rate(params: &HazardParams, variant: usize, covariates: &[f64]) -> Result<f64> {
    let v = variant_slot(&params.variants, variant)?;
    check_dim(&v.coefficients, covariates)?;
    let rate = v.rate(covariates);
    if !rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hazard rate overflowed: {rate}"
        )));
    }
    Ok(rate)
}

/// All parameters of the joint model plus the fixed study constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub infection: InfectionParams,
    pub shedding: SheddingParams,
    pub hazard: HazardParams,
    pub population_size: u64,
    /// Last observed day `E`; days run `0..=E`.
    pub horizon: usize,
    /// Propagation/simulation step (days). `1 / time_step` must be an integer.
    pub time_step: f64,
}

impl ModelParams {
    pub fn num_variants(&self) -> usize {
        self.infection.num_variants()
    }

    pub fn num_days(&self) -> usize {
        self.horizon + 1
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_variants();
        if k == 0 {
            return Err(Error::InvalidParameter("at least one variant required".into()));
        }
        if self.shedding.variants.len() != k || self.hazard.variants.len() != k {
            return Err(Error::InvalidParameter(format!(
                "variant count mismatch: infection {k}, shedding {}, hazard {}",
                self.shedding.variants.len(),
                self.hazard.variants.len()
            )));
        }
        if self.population_size == 0 {
            return Err(Error::InvalidParameter("population size must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        self.steps_per_day()?;
        self.infection.validate()?;
        self.shedding.validate()?;
        self.hazard.validate()
    }

    /// Number of propagation sub-steps per day.
    pub fn steps_per_day(&self) -> Result<usize> {
        let dt = self.time_step;
        if !(dt.is_finite() && dt > 0.0 && dt <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "time step must lie in (0, 1], got {dt}"
            )));
        }
        let n = (1.0 / dt).round();
        if (n * dt - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "time step {dt} does not divide one day"
            )));
        }
        Ok(n as usize)
    }
}

/// Population-level covariates, one row per day `0..=E`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovariateMatrix {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl CovariateMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::InvalidData(format!(
                    "covariate row {t} has {} entries, expected {dim}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite covariate on day {t}")));
            }
        }
        Ok(Self { rows, dim })
    }

    /// Covariate-free design: `num_days` empty rows.
    pub fn empty(num_days: usize) -> Self {
        Self {
            rows: vec![Vec::new(); num_days],
            dim: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_days(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// `rho[t][k]`: probability of occupying state `k` on day `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    data: Vec<f64>,
    num_states: usize,
}

impl OccupancyTable {
    /// Builds a table from explicit rows; each row must be a probability
    /// vector over states `0..=K`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.first().map_or(0, Vec::len);
        if num_states < 2 {
            return Err(Error::InvalidData("occupancy needs at least two states".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * num_states);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != num_states {
                return Err(Error::InvalidData(format!("occupancy row {t} has wrong length")));
            }
            let sum: f64 = r.iter().sum();
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidData(format!(
                    "occupancy row {t} is not a probability vector"
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, num_states })
    }

    pub fn num_days(&self) -> usize {
        self.data.len() / self.num_states
    }

    pub fn num_variants(&self) -> usize {
        self.num_states - 1
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.num_states..(t + 1) * self.num_states]
    }

    pub fn get(&self, t: usize, state: usize) -> f64 {
        self.data[t * self.num_states + state]
    }

    /// `P(s(t) != 0)`, summed over the infected states.
    pub fn infected(&self, t: usize) -> f64 {
        self.row(t)[1..].iter().sum()
    }
}

/// Forward-propagates the initial distribution `(1, 0, ..., 0)` through the
/// discretized intensity matrix, recording one row per day.
pub fn propagate_occupancy(params: &ModelParams) -> Result<OccupancyTable> {
    let k = params.num_variants();
    if k == 0 {
        return Err(Error::InvalidParameter("at least one variant required".into()));
    }
    params.infection.validate()?;
    let substeps = params.steps_per_day()?;
    let dt = params.time_step;
    let num_states = k + 1;
    let num_days = params.num_days();

    let recovery: Vec<f64> = params
        .infection
        .variants
        .iter()
        .map(|v| v.recovery_rate * dt)
        .collect();
    if let Some(&p) = recovery.iter().find(|&&p| p > 1.0) {
        return Err(Error::StepSize {
            day: 0,
            probability: p,
        });
    }

    let mut data = Vec::with_capacity(num_days * num_states);
    let mut state = vec![0.0; num_states];
    state[0] = 1.0;
    data.extend_from_slice(&state);

    let mut infect = vec![0.0; k];
    for day in 0..params.horizon {
        for j in 0..substeps {
            let t = day as f64 + j as f64 * dt;
            let mut exit = 0.0;
            for (slot, v) in infect.iter_mut().zip(&params.infection.variants) {
                *slot = v.components.iter().map(|c| c.eval(t)).sum::<f64>() * dt;
                exit += *slot;
            }
            if exit > 1.0 + 1e-12 {
                return Err(Error::StepSize {
                    day,
                    probability: exit,
                });
            }
            let s0 = state[0];
            let mut back = 0.0;
            for i in 0..k {
                let sk = state[i + 1];
                back += sk * recovery[i];
                state[i + 1] = sk * (1.0 - recovery[i]) + s0 * infect[i];
            }
            // uninfected mass stays within [0, 1] under rounding
            state[0] = (s0 * (1.0 - exit) + back).min(1.0);
        }
        data.extend_from_slice(&state);
    }
    Ok(OccupancyTable { data, num_states })
}

fn variant_slot<T>(slots: &[T], variant: usize) -> Result<&T> {
    if variant == 0 || variant > slots.len() {
        return Err(Error::VariantOutOfRange {
            index: variant,
            num_variants: slots.len(),
        });
    }
    Ok(&slots[variant - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(a: f64, b: f64, c: f64) -> InfectionParams {
        InfectionParams::new(vec![VariantIntensity {
            components: vec![GaussianComponent::new(a, b, c).unwrap()],
            recovery_rate: DEFAULT_RECOVERY_RATE,
        }])
        .unwrap()
    }

    pub(crate) fn params_with(infection: InfectionParams, horizon: usize) -> ModelParams {
        let k = infection.num_variants();
        ModelParams {
            infection,
            shedding: SheddingParams {
                variants: vec![
                    SheddingVariant {
                        shape: 1e-3,
                        intercept: 1e4f64.ln(),
                        coefficients: vec![],
                    };
                    k
                ],
            },
            hazard: HazardParams {
                variants: vec![
                    HazardVariant {
                        intercept: 0.002f64.ln(),
                        coefficients: vec![],
                    };
                    k
                ],
            },
            population_size: 1000,
            horizon,
            time_step: 1.0,
        }
    }

    #[test]
    fn intensity_at_center_and_one_sigma() {
        let p = single(0.001, 50.0, 10.0);
        assert_eq!(p.intensity(1, 50.0).unwrap(), 0.001);
        let v = p.intensity(1, 60.0).unwrap();
        assert!((v - 0.001 * (-0.5f64).exp()).abs() < 1e-18);
        assert!((v - 6.0653e-4).abs() < 1e-8);
    }

    #[test]
    fn two_component_intensity() {
        let p = InfectionParams::new(vec![VariantIntensity {
            components: vec![
                GaussianComponent::new(0.001, 40.0, 8.0).unwrap(),
                GaussianComponent::new(0.002, 120.0, 12.0).unwrap(),
            ],
            recovery_rate: 0.07,
        }])
        .unwrap();
        // 0.001*exp(-(40/8)^2/2) + 0.002*exp(-(40/12)^2/2), evaluated separately.
        let expected = 3.726_653_172_078_671e-9 + 7.731_840_278_945_609e-6;
        let got = p.intensity(1, 80.0).unwrap();
        assert!((got - expected).abs() < 1e-17, "{got} vs {expected}");
    }

    #[test]
    fn invalid_variant_index() {
        let p = single(0.001, 50.0, 10.0);
        assert!(matches!(
            p.intensity(0, 1.0),
            Err(Error::VariantOutOfRange { .. })
        ));
        assert!(p.intensity(2, 1.0).is_err());
    }

    #[test]
    fn rejects_degenerate_components() {
        assert!(GaussianComponent::new(0.001, 50.0, 0.0).is_err());
        assert!(GaussianComponent::new(-0.001, 50.0, 1.0).is_err());
        assert!(GaussianComponent::new(f64::NAN, 50.0, 1.0).is_err());
    }

    #[test]
    fn zero_amplitude_keeps_everyone_uninfected() {
        let occ = propagate_occupancy(&params_with(single(0.0, 50.0, 10.0), 200)).unwrap();
        for t in 0..=200 {
            assert_eq!(occ.row(t), &[1.0, 0.0]);
        }
    }

    #[test]
    fn step_size_violation_names_day() {
        let p = params_with(single(2.0, 30.0, 5.0), 100);
        match propagate_occupancy(&p) {
            Err(Error::StepSize { day, .. }) => assert!(day > 10 && day <= 30),
            other => panic!("expected step-size error, got {other:?}"),
        }
    }

    #[test]
    fn nan_parameters_rejected() {
        let mut p = params_with(single(0.001, 50.0, 10.0), 10);
        p.infection.variants[0].components[0].center = f64::NAN;
        assert!(propagate_occupancy(&p).is_err());
    }

    #[test]
    fn finer_step_converges() {
        let mut p = params_with(single(0.01, 50.0, 10.0), 100);
        let coarse = propagate_occupancy(&p).unwrap();
        p.time_step = 0.125;
        let fine = propagate_occupancy(&p).unwrap();
        p.time_step = 1.0 / 64.0;
        let finer = propagate_occupancy(&p).unwrap();
        let e1 = (coarse.get(60, 1) - finer.get(60, 1)).abs();
        let e2 = (fine.get(60, 1) - finer.get(60, 1)).abs();
        assert!(e2 < e1);
    }

    #[test]
    fn shedding_mean_uses_rate_convention() {
        let v = SheddingVariant {
            shape: 0.004,
            intercept: 9.57,
            coefficients: vec![-0.51],
        };
        let base = v.mean(&[0.0]);
        assert!((base / 28.1e-8 - 1.0).abs() < 0.01, "{base}");
        let wild = v.mean(&[1.0]);
        assert!((wild / 46.7e-8 - 1.0).abs() < 0.01, "{wild}");
    }

    #[test]
    fn shedding_density_exponential() {
        let p = SheddingParams {
            variants: vec![SheddingVariant {
                shape: 1.0,
                intercept: 0.0,
                coefficients: vec![],
            }],
        };
        assert!((shedding_density(&p, 1, &[], 1.0).unwrap() + 1.0).abs() < 1e-14);
        assert!(shedding_density(&p, 1, &[], 0.0).is_err());
        assert!(shedding_density(&p, 1, &[], -1.0).is_err());
    }

    #[test]
    fn hazard_examples() {
        let p = HazardParams {
            variants: vec![
                HazardVariant {
                    intercept: -6.53,
                    coefficients: vec![0.0, 1.146],
                },
                HazardVariant {
                    intercept: 0.0,
                    coefficients: vec![],
                },
            ],
        };
        let base = hazard_rate(&p, 1, &[0.0, 0.0]).unwrap();
        assert!((base - 0.0015).abs() < 5e-5, "{base}");
        let ba3 = hazard_rate(&p, 1, &[0.0, 1.0]).unwrap();
        assert!((ba3 - 0.0046).abs() < 5e-5, "{ba3}");
        assert_eq!(hazard_rate(&p, 2, &[]).unwrap(), 1.0);
        assert!(hazard_rate(&p, 1, &[1.0]).is_err());
    }

    /// Composite Gauss-Legendre style quadrature in `u = ln w`, which
    /// resolves both the spike near zero and the exponential tail.
    fn integrate_gamma(shape: f64, rate: f64) -> f64 {
        let p = SheddingParams {
            variants: vec![SheddingVariant {
                shape,
                intercept: rate.ln(),
                coefficients: vec![],
            }],
        };
        let mean = shape / rate;
        let hi = (mean + 60.0 * (shape.sqrt() / rate) + 60.0 / rate).ln();
        let lo = (hi - 60.0 / shape.min(1.0) - 40.0).max(-700.0);
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        // Simpson on f(e^u) e^u
        let f = |u: f64| (shedding_density(&p, 1, &[], u.exp()).unwrap() + u).exp();
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let u = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        s * h / 3.0
    }

    #[test]
    fn shedding_density_integrates_to_one() {
        for &(shape, rate) in &[(0.5, 2.0), (1.0, 1.0), (3.7, 0.4), (12.0, 30.0), (0.05, 1e4)] {
            let total = integrate_gamma(shape, rate);
            assert!((total - 1.0).abs() < 1e-6, "shape {shape} rate {rate}: {total}");
        }
    }

    proptest! {
        #[test]
        fn occupancy_rows_are_distributions(
            a1 in 0.0..0.05f64, b1 in 0.0..200.0f64, c1 in 2.0..40.0f64,
            a2 in 0.0..0.05f64, b2 in 0.0..200.0f64, c2 in 2.0..40.0f64,
            r1 in 0.01..0.5f64, r2 in 0.01..0.5f64,
        ) {
            let infection = InfectionParams::new(vec![
                VariantIntensity { components: vec![GaussianComponent::new(a1, b1, c1).unwrap()], recovery_rate: r1 },
                VariantIntensity { components: vec![GaussianComponent::new(a2, b2, c2).unwrap()], recovery_rate: r2 },
            ]).unwrap();
            let occ = propagate_occupancy(&params_with(infection, 200)).unwrap();
            prop_assert_eq!(occ.row(0), &[1.0, 0.0, 0.0][..]);
            for t in 0..=200 {
                let row = occ.row(t);
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-10);
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }

        #[test]
        fn intensity_invariant_under_component_permutation(
            comps in proptest::collection::vec((0.0..0.01f64, 0.0..200.0f64, 1.0..50.0f64), 1..5),
            t in -50.0..250.0f64,
        ) {
            let build = |cs: &[(f64, f64, f64)]| InfectionParams::new(vec![VariantIntensity {
                components: cs.iter().map(|&(a, b, c)| GaussianComponent::new(a, b, c).unwrap()).collect(),
                recovery_rate: 0.07,
            }]).unwrap();
            let forward = build(&comps).intensity(1, t).unwrap();
            let mut rev = comps.clone();
            rev.reverse();
            let backward = build(&rev).intensity(1, t).unwrap();
            prop_assert!((forward - backward).abs() <= 1e-15 * forward.abs().max(1e-300));
            prop_assert!(forward >= 0.0);
        }

        #[test]
        fn hazard_is_log_linear(
            l0 in -8.0..0.0f64,
            coef in proptest::collection::vec(-2.0..2.0f64, 3),
            x in proptest::collection::vec(-1.0..1.0f64, 3),
            dx in proptest::collection::vec(-1.0..1.0f64, 3),
        ) {
            let p = HazardParams { variants: vec![HazardVariant { intercept: l0, coefficients: coef.clone() }] };
            let shifted: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let lhs = hazard_rate(&p, 1, &shifted).unwrap();
            let rhs = hazard_rate(&p, 1, &x).unwrap()
                * dx.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>().exp();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }
}
