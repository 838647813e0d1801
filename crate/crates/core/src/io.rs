//! Surveillance CSV ingestion and emission.
//!
//! Header: `day,H,S_star,W_total[,W_k1,...,W_kK][,L][,x1,...,xp]`.
//! Empty cells mark missing wastewater measurements.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::CovariateMatrix;
use crate::simulate::AggregatedSeries;

const REQUIRED: [&str; 4] = ["day", "H", "S_star", "W_total"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    num_variants: usize,
    has_l: bool,
    num_covariates: usize,
}

fn csv_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_header(header: &csv::StringRecord) -> Result<Layout> {
    let cols: Vec<&str> = header.iter().collect();
    for (i, want) in REQUIRED.iter().enumerate() {
        match cols.get(i) {
            Some(c) if c == want => {}
            Some(c) => return Err(csv_err(0, c, format!("expected column `{want}`"))),
            None => return Err(csv_err(0, want, "missing required column")),
        }
    }
    let mut i = REQUIRED.len();
    let mut k = 0;
    while i < cols.len() && cols[i] == format!("W_k{}", k + 1) {
        k += 1;
        i += 1;
    }
    let has_l = i < cols.len() && cols[i] == "L";
    if has_l {
        i += 1;
    }
    let mut p = 0;
    while i < cols.len() && cols[i] == format!("x{}", p + 1) {
        p += 1;
        i += 1;
    }
    if i < cols.len() {
        return Err(csv_err(0, cols[i], "unexpected column"));
    }
    Ok(Layout {
        num_variants: k,
        has_l,
        num_covariates: p,
    })
}

fn parse_count(cell: &str, row: usize, column: &str) -> Result<u64> {
    cell.trim()
        .parse::<u64>()
        .map_err(|_| csv_err(row, column, format!("expected a nonnegative integer, got `{cell}`")))
}

fn parse_signal(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        _ => Err(csv_err(row, column, format!("expected a nonnegative number, got `{cell}`"))),
    }
}

fn parse_flag(cell: &str, row: usize) -> Result<bool> {
    match cell.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        other => Err(csv_err(row, "L", format!("expected 0/1 or true/false, got `{other}`"))),
    }
}

/// Parses a surveillance CSV. Rows are numbered from 1 after the header.
/// With `population_size`, reported cases above it are rejected.
pub fn read_series<R: Read>(reader: R, population_size: Option<u64>) -> Result<AggregatedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let layout = parse_header(rdr.headers()?)?;
    let k = layout.num_variants;
    let mut admissions = Vec::new();
    let mut reported = Vec::new();
    let mut total = Vec::new();
    let mut by_variant: Vec<Vec<Option<f64>>> = vec![Vec::new(); k];
    let mut flags = Vec::new();
    let mut covariates = Vec::new();

    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(row, "", e.to_string()))?;
        let day = parse_count(&rec[0], row, "day")?;
        if day != i as u64 {
            return Err(csv_err(row, "day", format!("days must be contiguous from 0; expected {i}, got {day}")));
        }
        admissions.push(parse_count(&rec[1], row, "H")?);
        let s = parse_count(&rec[2], row, "S_star")?;
        if let Some(n) = population_size {
            if s > n {
                return Err(csv_err(row, "S_star", format!("{s} exceeds the population size {n}")));
            }
        }
        reported.push(s);
        let w = parse_signal(&rec[3], row, "W_total")?;
        total.push(w);
        let mut col = 4;
        let mut sum = 0.0;
        let mut any_missing = false;
        for (v, series) in by_variant.iter_mut().enumerate() {
            let name = format!("W_k{}", v + 1);
            let wk = parse_signal(&rec[col], row, &name)?;
            match wk {
                Some(x) => sum += x,
                None => any_missing = true,
            }
            series.push(wk);
            col += 1;
        }
        if k > 0 {
            match (w, any_missing) {
                (Some(wt), false) => {
                    if (wt - sum).abs() > 1e-6 * wt.abs().max(sum.abs()).max(f64::MIN_POSITIVE) {
                        return Err(csv_err(row, "W_total", format!("{wt} differs from the variant sum {sum}")));
                    }
                }
                (None, _) => {
                    if by_variant.iter().any(|s| s[i].is_some()) {
                        return Err(csv_err(row, "W_total", "missing while variant signals are present"));
                    }
                }
                (Some(_), true) => {
                    return Err(csv_err(row, "W_total", "present while a variant signal is missing"));
                }
            }
        }
        if layout.has_l {
            flags.push(parse_flag(&rec[col], row)?);
            col += 1;
        }
        let mut x = Vec::with_capacity(layout.num_covariates);
        for j in 0..layout.num_covariates {
            let name = format!("x{}", j + 1);
            let v = rec[col + j]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| csv_err(row, &name, format!("expected a number, got `{}`", &rec[col + j])))?;
            x.push(v);
        }
        covariates.push(x);
    }
    if admissions.len() < 2 {
        return Err(csv_err(admissions.len(), "day", "need at least two days"));
    }
    let mut cumulative = Vec::with_capacity(admissions.len());
    let mut c = 0u64;
    for &h in &admissions {
        c += h;
        cumulative.push(c);
    }
    if let Some(n) = population_size {
        if let Some(t) = cumulative.iter().position(|&c| c > n) {
            return Err(csv_err(t + 1, "H", format!("cumulative admissions exceed the population size {n}")));
        }
    }
    let covariates = if layout.num_covariates == 0 {
        CovariateMatrix::empty(admissions.len())
    } else {
        CovariateMatrix::new(covariates)?
    };
    let series = AggregatedSeries {
        admissions,
        cumulative_admissions: cumulative,
        wastewater_total: total,
        wastewater_by_variant: (k > 0).then_some(by_variant),
        true_active: None,
        reported_active: reported,
        complete: layout.has_l.then_some(flags),
        covariates,
    };
    series.validate()?;
    Ok(series)
}

pub fn read_series_file(path: &Path, population_size: Option<u64>) -> Result<AggregatedSeries> {
    read_series(std::fs::File::open(path)?, population_size)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `series` in the input schema. Floats use the shortest
/// round-trip representation, so reading back is lossless.
pub fn write_series<W: Write>(series: &AggregatedSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let k = series.wastewater_by_variant.as_ref().map_or(0, Vec::len);
    let p = series.covariates.dim();
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|v| format!("W_k{v}")));
    if series.complete.is_some() {
        header.push("L".into());
    }
    header.extend((1..=p).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for t in 0..series.num_days() {
        let mut rec = vec![
            t.to_string(),
            series.admissions[t].to_string(),
            series.reported_active[t].to_string(),
            cell(series.wastewater_total[t]),
        ];
        if let Some(by) = &series.wastewater_by_variant {
            rec.extend(by.iter().map(|v| cell(v[t])));
        }
        if let Some(l) = &series.complete {
            rec.push(if l[t] { "1".into() } else { "0".into() });
        }
        rec.extend(series.covariates.row(t).iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_file(series: &AggregatedSeries, path: &Path) -> Result<()> {
    write_series(series, std::fs::File::create(path)?)
}

/// Simulation-only truth: `day,S_true,C`.
pub fn write_truth<W: Write>(series: &AggregatedSeries, writer: W) -> Result<()> {
    let truth = series
        .true_active
        .as_ref()
        .ok_or_else(|| Error::InvalidData("series carries no true infection counts".into()))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "S_true", "C"])?;
    for t in 0..series.num_days() {
        w.write_record([
            t.to_string(),
            truth[t].to_string(),
            series.cumulative_admissions[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        "day,H,S_star,W_total,W_k1,W_k2,L,x1\n\
         0,0,10,1.5,1,0.5,1,0\n\
         1,2,12,,,,0,1\n\
         2,1,9,3.25,3,0.25,1,1\n"
    }

    #[test]
    fn parses_full_schema() {
        let s = read_series(sample().as_bytes(), Some(100)).unwrap();
        assert_eq!(s.admissions, vec![0, 2, 1]);
        assert_eq!(s.cumulative_admissions, vec![0, 2, 3]);
        assert_eq!(s.wastewater_total, vec![Some(1.5), None, Some(3.25)]);
        assert_eq!(s.wastewater_by_variant.as_ref().unwrap()[1], vec![Some(0.5), None, Some(0.25)]);
        assert_eq!(s.complete, Some(vec![true, false, true]));
        assert_eq!(s.covariates.row(1), &[1.0]);
    }

    #[test]
    fn round_trip_is_lossless() {
        let s = read_series(sample().as_bytes(), None).unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), sample());
        assert_eq!(read_series(&buf[..], None).unwrap(), s);
    }

    #[test]
    fn minimal_schema() {
        let s = read_series("day,H,S_star,W_total\n0,0,1,0.1\n1,0,2,0.2\n".as_bytes(), None).unwrap();
        assert!(s.wastewater_by_variant.is_none());
        assert!(s.complete.is_none());
        assert_eq!(s.covariates.dim(), 0);
    }

    fn expect_csv_error(text: &str, n: Option<u64>, row: usize, column: &str) {
        match read_series(text.as_bytes(), n) {
            Err(Error::Csv { row: r, column: c, .. }) => {
                assert_eq!((r, c.as_str()), (row, column), "{text}");
            }
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_gaps_negatives_and_overflow() {
        expect_csv_error("day,H,S_star,W_total\n0,0,1,0.1\n2,0,2,0.2\n", None, 2, "day");
        expect_csv_error("day,H,S_star,W_total\n0,-1,1,0.1\n1,0,2,0.2\n", None, 1, "H");
        expect_csv_error("day,H,S_star,W_total\n0,0,1,0.1\n1,0,200,0.2\n", Some(100), 2, "S_star");
        expect_csv_error("day,H,S_star,W_total\n0,0,1,-0.1\n1,0,2,0.2\n", None, 1, "W_total");
        expect_csv_error("day,H,S_total,W_total\n0,0,1,0.1\n", None, 0, "S_total");
        expect_csv_error("day,H,S_star,W_total,L\n0,0,1,0.1,2\n1,0,2,0.2,1\n", None, 1, "L");
        expect_csv_error("day,H,S_star,W_total,W_k1\n0,0,1,0.1,0.3\n1,0,2,0.2,0.2\n", None, 1, "W_total");
        expect_csv_error("day,H,S_star,W_total,extra\n0,0,1,0.1,3\n", None, 0, "extra");
    }
}
