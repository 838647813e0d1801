use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use latentepi_core::estimate::{
    parametric_bootstrap, replicate_seeds, scenario_sweep, BootstrapResult, FitResult, ParamLayout,
};
use latentepi_core::io::{read_series_file, write_series_file, write_truth};
use latentepi_core::model::propagate_occupancy;
use latentepi_core::replicate::{
    run_cell, summarize_cell, CellConfig, FitSummary, ReplicateRecord, SUMMARY_PARAMETERS,
};
use latentepi_core::report::{coverage, predictive_bands, write_band, write_prevalence};
use latentepi_core::simulate::{apply_reporting, simulate_population};
use latentepi_core::{AggregatedSeries, ModelParams, ReportingConfig, Scenario};
use serde::Serialize;

use crate::config::RunConfig;

const REPORTING_STREAM: u64 = 0x5851_f42d_4c95_7f2d;
const BOOTSTRAP_STREAM: u64 = 0xb5ad_4ece_da1c_e2a9;
const BAND_STREAM: u64 = 0x2545_f491_4f6c_dd1d;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

fn input_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.io.input.as_deref().context("`io.input` is required for this command")
}

fn read_input(cfg: &RunConfig) -> Result<AggregatedSeries> {
    let path = input_path(cfg)?;
    read_series_file(path, Some(cfg.model.population_size)).with_context(|| format!("invalid input {}", path.display()))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    replicates: usize,
    complete_fraction: f64,
    reporting_rate: f64,
    files: Vec<ManifestEntry>,
    truth: &'a ModelParams,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    series: String,
    truth: String,
    seed: u64,
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let truth = cfg.truth()?;
    truth.validate().context("`simulate.variants`")?;
    propagate_occupancy(&truth).context("`model.time_step`")?;
    let covariates = cfg.covariates()?;
    let out = &cfg.io.output;
    let s = &cfg.simulate;
    ReportingConfig::new(s.complete_fraction, s.reporting_rate, 0)?;

    let seeds = replicate_seeds(s.seed, s.replicates);
    let mut entries = Vec::with_capacity(s.replicates);
    let mut data = Vec::with_capacity(s.replicates);
    for (r, &seed) in seeds.iter().enumerate() {
        let full = simulate_population(&truth, &covariates, seed)?;
        let reported = apply_reporting(&full, &ReportingConfig::new(s.complete_fraction, s.reporting_rate, seed ^ REPORTING_STREAM)?)?;
        let name = format!("series_{r:03}.csv");
        entries.push(ManifestEntry {
            series: name.clone(),
            truth: format!("truth/{name}"),
            seed,
        });
        data.push((name, reported));
    }

    create_dir(&out.join("truth"))?;
    for (name, series) in &data {
        write_series_file(series, &out.join(name))?;
        write_truth(series, open(&out.join("truth").join(name))?)?;
    }
    let manifest = Manifest {
        seed: s.seed,
        replicates: s.replicates,
        complete_fraction: s.complete_fraction,
        reporting_rate: s.reporting_rate,
        files: entries,
        truth: &truth,
    };
    write_file(&out.join("manifest.toml"), &toml::to_string(&manifest)?)?;
    eprintln!("wrote {} series to {}", s.replicates, out.display());
    Ok(Outcome::Done)
}

fn bootstrap_for(cfg: &RunConfig, series: &AggregatedSeries, estimates: &ModelParams) -> Result<BootstrapResult> {
    let mut fc = cfg.fit_config()?;
    fc.initial_values = latentepi_core::InitialValues::Auto;
    let seeds = replicate_seeds(cfg.fit.seed ^ BOOTSTRAP_STREAM, cfg.fit.bootstrap_replicates);
    Ok(parametric_bootstrap(estimates, series, &fc, cfg.fit.reporting_rate, &seeds)?)
}

fn fit_report(result: &FitResult, input: &Path) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "input: {}", input.display());
    let _ = writeln!(s, "scenario: {}", result.scenario.number());
    let _ = writeln!(s, "naive_mode: {}", result.naive_mode);
    let _ = writeln!(s, "converged: {}", result.converged);
    let _ = writeln!(s, "loglik: {}", result.loglik);
    let _ = writeln!(s, "evaluations: {}", result.n_evals);
    if let Some(b) = &result.bootstrap {
        let _ = writeln!(s, "bootstrap: {} requested, {} failed", b.requested, b.failed);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<16} {:>14} {:>14} {:>14}", "parameter", "estimate", "se_fisher", "se_bootstrap");
    for (name, value) in result.names.iter().zip(&result.natural) {
        let _ = writeln!(
            s,
            "{:<16} {:>14.6e} {:>14} {:>14}",
            name,
            value,
            result.fisher(name).map(|v| format!("{v:.6e}")).unwrap_or_else(|| "NA".into()),
            result.bootstrap_se(name).map(|v| format!("{v:.6e}")).unwrap_or_else(|| "NA".into()),
        );
    }
    let d = &result.diagnostics;
    if !d.boundary.is_empty() {
        let _ = writeln!(s, "\nat boundary: {}", d.boundary.join(", "));
    }
    if !d.undefined_se.is_empty() {
        let _ = writeln!(s, "undefined Fisher SE: {}", d.undefined_se.join(", "));
    }
    for w in d.warnings.iter().chain(result.bootstrap.as_ref().and_then(|b| b.warning.as_ref())) {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn fit_kv(result: &FitResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario = {}", result.scenario.number());
    let _ = writeln!(s, "naive_mode = {}", result.naive_mode);
    let _ = writeln!(s, "converged = {}", result.converged);
    let _ = writeln!(s, "loglik = {}", result.loglik);
    let _ = writeln!(s, "n_evals = {}", result.n_evals);
    if let Some(a) = result.diagnostics.hessian_asymmetry {
        let _ = writeln!(s, "hessian_asymmetry = {a}");
    }
    for (name, value) in result.names.iter().zip(&result.natural) {
        let _ = writeln!(s, "estimate.{name} = {value}");
        let _ = writeln!(s, "se_fisher.{name} = {}", fmt_opt(result.fisher(name)));
        let _ = writeln!(s, "se_bootstrap.{name} = {}", fmt_opt(result.bootstrap_se(name)));
    }
    s
}

pub fn fit(cfg: &RunConfig) -> Result<Outcome> {
    let series = read_input(cfg)?;
    let fc = cfg.fit_config()?;
    fc.validate().context("`fit`")?;
    let out = &cfg.io.output;
    create_dir(out)?;

    let mut result = latentepi_core::fit(&series, &fc)?;
    if cfg.fit.bootstrap_replicates >= 2 {
        result.bootstrap = Some(bootstrap_for(cfg, &series, &result.estimates)?);
    }
    write_file(&out.join("fit_report.txt"), &fit_report(&result, input_path(cfg)?))?;
    write_file(&out.join("fit.kv"), &fit_kv(&result))?;
    write_file(&cfg.params_path(), &toml::to_string(&result.estimates)?)?;
    eprintln!(
        "fit {} (loglik {:.4}); wrote {}",
        if result.converged { "converged" } else { "did not converge" },
        result.loglik,
        out.display()
    );
    Ok(if result.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn read_params(cfg: &RunConfig) -> Result<ModelParams> {
    let path = cfg.params_path();
    let text = fs::read_to_string(&path).with_context(|| format!("reading `io.params` {}", path.display()))?;
    let p: ModelParams = toml::from_str(&text).with_context(|| format!("invalid parameter file {}", path.display()))?;
    p.validate().with_context(|| format!("invalid parameter file {}", path.display()))?;
    Ok(p)
}

pub fn bootstrap(cfg: &RunConfig) -> Result<Outcome> {
    let series = read_input(cfg)?;
    let params = read_params(cfg)?;
    if cfg.fit.bootstrap_replicates < 2 {
        bail!("`fit.bootstrap_replicates` must be >= 2 for the bootstrap command");
    }
    let out = &cfg.io.output;
    create_dir(out)?;
    let b = bootstrap_for(cfg, &series, &params)?;
    let names = ParamLayout::new(&params, cfg.fit.fix_centers).names();

    let mut w = csv::Writer::from_writer(open(&out.join("bootstrap.csv"))?);
    w.write_record(&names)?;
    for row in &b.estimates {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;

    let mut kv = String::new();
    let _ = writeln!(kv, "requested = {}", b.requested);
    let _ = writeln!(kv, "failed = {}", b.failed);
    for (name, se) in names.iter().zip(&b.se) {
        let _ = writeln!(kv, "se_bootstrap.{name} = {}", fmt_opt(*se));
    }
    if let Some(warn) = &b.warning {
        eprintln!("warning: {warn}");
        let _ = writeln!(kv, "warning = {warn:?}");
    }
    write_file(&out.join("bootstrap_se.kv"), &kv)?;
    Ok(Outcome::Done)
}

fn record_rows(r: &ReplicateRecord) -> Vec<Vec<String>> {
    [("proposed", &r.proposed), ("naive", &r.naive)]
        .into_iter()
        .map(|(method, s)| {
            let mut row = vec![r.index.to_string(), r.seed.to_string(), method.to_string(), s.converged.to_string()];
            row.extend(s.estimates.iter().map(f64::to_string));
            row.extend(s.se_fisher.iter().map(|v| fmt_opt(*v)));
            row.extend(s.se_bootstrap.iter().map(|v| fmt_opt(*v)));
            row
        })
        .collect()
}

fn record_header() -> Vec<String> {
    let mut h: Vec<String> = ["index", "seed", "method", "converged"].iter().map(|s| s.to_string()).collect();
    for prefix in ["est", "se_fisher", "se_bootstrap"] {
        h.extend(SUMMARY_PARAMETERS.iter().map(|p| format!("{prefix}.{p}")));
    }
    h
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    Ok(if s == "NA" { None } else { Some(s.parse()?) })
}

/// Records of a previous partial run; rows from other seeds are discarded.
fn read_records(path: &Path, seeds: &[u64]) -> Result<Vec<ReplicateRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(record_header().iter().map(String::as_str)) {
        bail!("{} has an unexpected header; remove it to start over", path.display());
    }
    let p = SUMMARY_PARAMETERS.len();
    let mut partial: BTreeMap<usize, (u64, Option<FitSummary>, Option<FitSummary>)> = BTreeMap::new();
    for rec in rdr.records() {
        let Ok(rec) = rec else { break };
        if rec.len() != 4 + 3 * p {
            continue;
        }
        let parsed = (|| -> Result<(usize, u64, String, FitSummary)> {
            let f: Vec<&str> = rec.iter().collect();
            Ok((
                f[0].parse()?,
                f[1].parse()?,
                f[2].to_string(),
                FitSummary {
                    converged: f[3].parse()?,
                    estimates: f[4..4 + p].iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
                    se_fisher: f[4 + p..4 + 2 * p].iter().map(|s| parse_opt(s)).collect::<Result<_>>()?,
                    se_bootstrap: f[4 + 2 * p..].iter().map(|s| parse_opt(s)).collect::<Result<_>>()?,
                },
            ))
        })();
        let Ok((index, seed, method, summary)) = parsed else { continue };
        if seeds.get(index) != Some(&seed) {
            continue;
        }
        let e = partial.entry(index).or_insert((seed, None, None));
        match method.as_str() {
            "proposed" => e.1 = Some(summary),
            "naive" => e.2 = Some(summary),
            _ => {}
        }
    }
    Ok(partial
        .into_iter()
        .filter_map(|(index, (seed, p, n))| {
            Some(ReplicateRecord {
                index,
                seed,
                proposed: p?,
                naive: n?,
            })
        })
        .collect())
}

fn cell_tag(r1: f64, r2: f64) -> String {
    format!("r1_{r1}_r2_{r2}")
}

pub fn replicate_table1(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.model.num_variants != 2 || cfg.components().len() != 2 {
        bail!("`model.num_variants` must be 2 for replicate-table1");
    }
    if cfg.simulate.cells.is_empty() {
        bail!("`simulate.cells` must list at least one cell");
    }
    let truth = cfg.truth()?;
    truth.validate().context("`simulate.variants`")?;
    propagate_occupancy(&truth).context("`model.time_step`")?;
    let fc = cfg.fit_config()?;
    fc.validate().context("`fit`")?;
    let out = &cfg.io.output;
    create_dir(out)?;

    let cell_seeds = replicate_seeds(cfg.simulate.seed, cfg.simulate.cells.len());
    let mut any_failed = false;
    for (&[r1, r2], &seed) in cfg.simulate.cells.iter().zip(&cell_seeds) {
        let cell = CellConfig {
            complete_fraction: r1,
            reporting_rate: r2,
            replicates: cfg.simulate.replicates,
            seed,
            bootstrap_replicates: cfg.fit.bootstrap_replicates,
            bootstrap_datasets: cfg.simulate.bootstrap_datasets,
        };
        let tag = cell_tag(r1, r2);
        let records_path = out.join(format!("records_{tag}.csv"));
        let seeds = replicate_seeds(seed, cell.replicates);
        let done = read_records(&records_path, &seeds)?;

        let writer = Mutex::new(csv::Writer::from_writer(open(&records_path)?));
        let append = |r: &ReplicateRecord| -> Result<()> {
            let mut w = writer.lock().expect("record writer poisoned");
            for row in record_rows(r) {
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        };
        {
            let mut w = writer.lock().expect("record writer poisoned");
            w.write_record(record_header())?;
        }
        for r in &done {
            append(r)?;
        }
        let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());
        let records = run_cell(&truth, &cell, &fc, &done, |r| {
            if let Err(e) = append(r) {
                errors.lock().expect("error list poisoned").push(format!("{e:#}"));
            }
        })?;
        if let Some(e) = errors.into_inner().expect("error list poisoned").first() {
            bail!("writing {}: {e}", records_path.display());
        }
        drop(writer);

        let mut w = csv::Writer::from_writer(open(&records_path)?);
        w.write_record(record_header())?;
        for r in &records {
            for row in record_rows(r) {
                w.write_record(&row)?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(open(&out.join(format!("table1_{tag}.csv")))?);
        w.write_record([
            "parameter",
            "truth",
            "mean_naive",
            "sd_naive",
            "mean_proposed",
            "sd_proposed",
            "mean_se_fisher",
            "mean_se_bootstrap",
        ])?;
        for row in summarize_cell(&truth, &records) {
            w.write_record([
                row.parameter,
                row.truth.to_string(),
                row.mean_naive.to_string(),
                row.sd_naive.to_string(),
                row.mean_proposed.to_string(),
                row.sd_proposed.to_string(),
                row.mean_se_fisher.to_string(),
                row.mean_se_bootstrap.to_string(),
            ])?;
        }
        w.flush()?;
        let failed = records.iter().filter(|r| !r.proposed.converged).count();
        any_failed |= failed > 0;
        eprintln!("cell ({r1}, {r2}): {} replicates, {failed} proposed fits did not converge", records.len());
    }
    Ok(if any_failed { Outcome::NotConverged } else { Outcome::Done })
}

pub fn report(cfg: &RunConfig) -> Result<Outcome> {
    let series = read_input(cfg)?;
    let params = read_params(cfg)?;
    if params.num_days() != series.num_days() {
        bail!(
            "`io.params` covers {} days but `io.input` has {}",
            params.num_days(),
            series.num_days()
        );
    }
    let out = &cfg.io.output;
    create_dir(out)?;

    write_prevalence(&params, open(&out.join("prevalence.csv"))?)?;
    let bands = predictive_bands(&params, &series, cfg.fit.predictive_simulations, cfg.fit.seed ^ BAND_STREAM)?;
    write_band(&bands.wastewater, open(&out.join("band_W.csv"))?)?;
    write_band(&bands.admissions, open(&out.join("band_H.csv"))?)?;

    let mut kv = String::new();
    let _ = writeln!(kv, "simulations = {}", bands.simulations);
    let _ = writeln!(kv, "coverage_W = {}", coverage(&bands.wastewater));
    let _ = writeln!(kv, "coverage_H = {}", coverage(&bands.admissions));

    let mut outcome = Outcome::Done;
    if cfg.fit.sweep {
        let mut fc = cfg.fit_config()?;
        fc.compute_fisher = false;
        let fits = scenario_sweep(&series, &Scenario::ALL, &fc)?;
        for f in &fits {
            let n = f.scenario.number();
            write_prevalence(&f.estimates, open(&out.join(format!("prevalence_scenario{n}.csv")))?)?;
            let _ = writeln!(kv, "scenario{n}.loglik = {}", f.loglik);
            let _ = writeln!(kv, "scenario{n}.converged = {}", f.converged);
            if !f.converged {
                outcome = Outcome::NotConverged;
            }
        }
    }
    write_file(&out.join("report.kv"), &kv)?;
    Ok(outcome)
}
