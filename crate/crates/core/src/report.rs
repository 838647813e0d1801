//! Plot-ready summaries of a fitted model: occupancy curves and
//! posterior-predictive bands for wastewater and admissions.

use std::io::Write;

use rayon::prelude::*;
use statrs::statistics::{Data, OrderStatistics};

use crate::error::Result;
use crate::estimate::{bootstrap_series, replicate_seeds};
use crate::model::{propagate_occupancy, ModelParams};
use crate::simulate::AggregatedSeries;

/// Writes `day,rho_1..rho_K,infected` from the occupancy table.
pub fn write_prevalence<W: Write>(params: &ModelParams, writer: W) -> Result<()> {
    let occ = propagate_occupancy(params)?;
    let k = params.num_variants();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["day".to_string()];
    header.extend((1..=k).map(|v| format!("rho_{v}")));
    header.push("infected".into());
    w.write_record(&header)?;
    for t in 0..occ.num_days() {
        let mut rec = vec![t.to_string()];
        rec.extend((1..=k).map(|v| occ.get(t, v).to_string()));
        rec.push(occ.infected(t).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub lo: f64,
    pub hi: f64,
    pub observed: Option<f64>,
}

impl BandPoint {
    pub fn inside(&self) -> Option<bool> {
        self.observed.map(|o| o >= self.lo && o <= self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBands {
    pub wastewater: Vec<BandPoint>,
    pub admissions: Vec<BandPoint>,
    pub simulations: usize,
}

/// Fraction of days with an observation that lie inside the band.
pub fn coverage(band: &[BandPoint]) -> f64 {
    let flags: Vec<bool> = band.iter().filter_map(BandPoint::inside).collect();
    if flags.is_empty() {
        return f64::NAN;
    }
    flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
}

fn band(samples: &[Vec<f64>], observed: impl Fn(usize) -> Option<f64>, num_days: usize) -> Vec<BandPoint> {
    (0..num_days)
        .map(|t| {
            let column: Vec<f64> = samples.iter().map(|s| s[t]).filter(|v| v.is_finite()).collect();
            let (lo, hi) = if column.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let mut d = Data::new(column);
                (d.quantile(0.025), d.quantile(0.975))
            };
            BandPoint { lo, hi, observed: observed(t) }
        })
        .collect()
}

/// Central 95% bands of `W_total` and `H` over `simulations` datasets drawn
/// at `params` and shaped like `observed`.
pub fn predictive_bands(
    params: &ModelParams,
    observed: &AggregatedSeries,
    simulations: usize,
    seed: u64,
) -> Result<PredictiveBands> {
    let seeds = replicate_seeds(seed, simulations);
    let sims: Vec<AggregatedSeries> = seeds
        .par_iter()
        .map(|&s| bootstrap_series(params, observed, 1.0, s))
        .collect::<Result<_>>()?;
    let n = observed.num_days();
    let w: Vec<Vec<f64>> = sims
        .iter()
        .map(|s| s.wastewater_total.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    let h: Vec<Vec<f64>> = sims
        .iter()
        .map(|s| s.admissions.iter().map(|&v| v as f64).collect())
        .collect();
    Ok(PredictiveBands {
        wastewater: band(&w, |t| observed.wastewater_total[t], n),
        admissions: band(&h, |t| Some(observed.admissions[t] as f64), n),
        simulations,
    })
}

/// Writes `day,lo,hi,observed,inside`.
pub fn write_band<W: Write>(band: &[BandPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "lo", "hi", "observed", "inside"])?;
    for (t, b) in band.iter().enumerate() {
        w.write_record([
            t.to_string(),
            b.lo.to_string(),
            b.hi.to_string(),
            b.observed.map(|o| o.to_string()).unwrap_or_default(),
            b.inside().map(|i| (i as u8).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
