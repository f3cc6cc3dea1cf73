//! Plain-text file formats for datasets and estimates.
//!
//! Sample file:
//!
//! ```text
//! longtail-samples v1
//! n=<n> d=<d> sigma=<sigma> seed=<seed>
//! triplets
//! <row> <feature> <+1|-1>     one line per nonzero, (row, feature) strictly
//! ...                         increasing lexicographically, both 1-based
//! labels
//! <y_1>
//! ...
//! <y_n>
//! ```
//!
//! Estimate file:
//!
//! ```text
//! longtail-estimate v1
//! d=<d> support=<|F|> rank=<rank> sv_tolerance=<tol> residual_norm=<norm>
//! <feature> <value>           one line per support feature, increasing
//! ```
//!
//! All reals are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every float bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::datagen::{SampleSet, SparseRow};
use crate::solver::{Estimate, SupportMap};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError::Parse { line, message: message.into() })
}

/// Splits a header line into the values of the expected `key=value` fields,
/// enforcing names and order.
fn header_values<'a>(
    line: &'a str,
    line_no: usize,
    keys: &[&str],
) -> Result<Vec<&'a str>, FormatError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != keys.len() {
        return parse_err(line_no, format!("expected {} header fields", keys.len()));
    }
    let mut out = Vec::with_capacity(keys.len());
    for (part, key) in parts.iter().zip(keys) {
        match part.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')) {
            Some(value) if !value.is_empty() => out.push(value),
            _ => return parse_err(line_no, format!("expected field {key}=...")),
        }
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(
    value: &str,
    line_no: usize,
    what: &str,
) -> Result<T, FormatError> {
    value.parse().map_err(|_| FormatError::Parse {
        line: line_no,
        message: format!("cannot parse {what} from `{value}`"),
    })
}

fn finite(value: f64, line_no: usize, what: &str) -> Result<f64, FormatError> {
    if value.is_finite() {
        Ok(value)
    } else {
        parse_err(line_no, format!("{what} must be finite"))
    }
}

pub fn write_samples(out: &mut impl Write, samples: &SampleSet) -> Result<(), FormatError> {
    writeln!(out, "longtail-samples v1")?;
    writeln!(
        out,
        "n={} d={} sigma={} seed={}",
        samples.n, samples.d, samples.sigma, samples.seed
    )?;
    writeln!(out, "triplets")?;
    for (j, row) in samples.rows.iter().enumerate() {
        for (i, s) in row.iter() {
            writeln!(out, "{} {} {}", j + 1, i, if s > 0 { "+1" } else { "-1" })?;
        }
    }
    writeln!(out, "labels")?;
    for y in &samples.y {
        writeln!(out, "{y}")?;
    }
    Ok(())
}

pub fn read_samples(input: &mut impl BufRead) -> Result<SampleSet, FormatError> {
    let mut lines = input.lines().enumerate();
    let mut next = || -> Result<(usize, String), FormatError> {
        match lines.next() {
            Some((idx, line)) => Ok((idx + 1, line?)),
            None => parse_err(0, "unexpected end of file"),
        }
    };

    let (no, line) = next()?;
    if line != "longtail-samples v1" {
        return parse_err(no, "expected `longtail-samples v1`");
    }
    let (no, line) = next()?;
    let vals = header_values(&line, no, &["n", "d", "sigma", "seed"])?;
    let n: usize = parse_field(vals[0], no, "n")?;
    let d: usize = parse_field(vals[1], no, "d")?;
    let sigma: f64 = finite(parse_field(vals[2], no, "sigma")?, no, "sigma")?;
    let seed: u64 = parse_field(vals[3], no, "seed")?;
    if n == 0 || d == 0 {
        return parse_err(no, "n and d must be positive");
    }
    if sigma < 0.0 {
        return parse_err(no, "sigma must be nonnegative");
    }

    let (no, line) = next()?;
    if line != "triplets" {
        return parse_err(no, "expected `triplets`");
    }

    let mut entries: Vec<Vec<(u32, i8)>> = vec![Vec::new(); n];
    let mut last: Option<(usize, u32)> = None;
    let labels_line;
    loop {
        let (no, line) = next()?;
        if line == "labels" {
            labels_line = no;
            break;
        }
        let mut parts = line.split_whitespace();
        let (Some(r), Some(f), Some(s), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return parse_err(no, "expected `row feature sign`");
        };
        let row: usize = parse_field(r, no, "row index")?;
        let feature: u32 = parse_field(f, no, "feature index")?;
        let sign: i8 = match s {
            "+1" => 1,
            "-1" => -1,
            _ => return parse_err(no, "sign must be +1 or -1"),
        };
        if row < 1 || row > n {
            return parse_err(no, format!("row index {row} outside 1..={n}"));
        }
        if feature < 1 || feature as usize > d {
            return parse_err(no, format!("feature index {feature} outside 1..={d}"));
        }
        if let Some(prev) = last {
            if (row, feature) <= prev {
                return parse_err(no, "triplets must be strictly increasing by (row, feature)");
            }
        }
        last = Some((row, feature));
        entries[row - 1].push((feature, sign));
    }

    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, line) = next()?;
        y.push(finite(parse_field(&line, no, "label")?, no, "label")?);
    }
    if let Some((idx, line)) = lines.next() {
        let line = line?;
        if !line.trim().is_empty() {
            return parse_err(idx + 1, "trailing content after labels");
        }
    }
    let _ = labels_line;

    let rows = entries.into_iter().map(SparseRow::from_entries).collect();
    Ok(SampleSet { n, d, rows, y, sigma, seed })
}

pub fn write_estimate(out: &mut impl Write, est: &Estimate) -> Result<(), FormatError> {
    writeln!(out, "longtail-estimate v1")?;
    writeln!(
        out,
        "d={} support={} rank={} sv_tolerance={} residual_norm={}",
        est.d(),
        est.support().len(),
        est.rank(),
        est.sv_tolerance(),
        est.residual_norm()
    )?;
    for (i, v) in est.iter() {
        writeln!(out, "{i} {v}")?;
    }
    Ok(())
}

pub fn read_estimate(input: &mut impl BufRead) -> Result<Estimate, FormatError> {
    let mut lines = input.lines().enumerate();
    let mut next = || -> Result<(usize, String), FormatError> {
        match lines.next() {
            Some((idx, line)) => Ok((idx + 1, line?)),
            None => parse_err(0, "unexpected end of file"),
        }
    };

    let (no, line) = next()?;
    if line != "longtail-estimate v1" {
        return parse_err(no, "expected `longtail-estimate v1`");
    }
    let (no, line) = next()?;
    let vals =
        header_values(&line, no, &["d", "support", "rank", "sv_tolerance", "residual_norm"])?;
    let d: usize = parse_field(vals[0], no, "d")?;
    let support_len: usize = parse_field(vals[1], no, "support")?;
    let rank: usize = parse_field(vals[2], no, "rank")?;
    let sv_tolerance: f64 = finite(parse_field(vals[3], no, "sv_tolerance")?, no, "sv_tolerance")?;
    let residual_norm: f64 =
        finite(parse_field(vals[4], no, "residual_norm")?, no, "residual_norm")?;
    if d == 0 {
        return parse_err(no, "d must be positive");
    }
    if rank > support_len {
        return parse_err(no, "rank cannot exceed support size");
    }
    if sv_tolerance < 0.0 || residual_norm < 0.0 {
        return parse_err(no, "tolerances and norms must be nonnegative");
    }

    let mut observed = Vec::with_capacity(support_len);
    let mut values = Vec::with_capacity(support_len);
    for _ in 0..support_len {
        let (no, line) = next()?;
        let mut parts = line.split_whitespace();
        let (Some(f), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return parse_err(no, "expected `feature value`");
        };
        let feature: u32 = parse_field(f, no, "feature index")?;
        let value: f64 = finite(parse_field(v, no, "coefficient")?, no, "coefficient")?;
        if feature < 1 || feature as usize > d {
            return parse_err(no, format!("feature index {feature} outside 1..={d}"));
        }
        if observed.last().is_some_and(|&prev| feature <= prev) {
            return parse_err(no, "support must be strictly increasing");
        }
        observed.push(feature);
        values.push(value);
    }
    if let Some((idx, line)) = lines.next() {
        let line = line?;
        if !line.trim().is_empty() {
            return parse_err(idx + 1, "trailing content after coefficients");
        }
    }

    let support = SupportMap::from_parts(d, observed);
    Ok(Estimate::from_parts(support, values, rank, sv_tolerance, residual_norm))
}

pub fn save_samples(path: impl AsRef<Path>, samples: &SampleSet) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_samples(&mut out, samples)?;
    out.flush()?;
    Ok(())
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleSet, FormatError> {
    read_samples(&mut BufReader::new(File::open(path)?))
}

pub fn save_estimate(path: impl AsRef<Path>, est: &Estimate) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_estimate(&mut out, est)?;
    out.flush()?;
    Ok(())
}

pub fn load_estimate(path: impl AsRef<Path>) -> Result<Estimate, FormatError> {
    read_estimate(&mut BufReader::new(File::open(path)?))
}
