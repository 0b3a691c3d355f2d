//! Plain CSV files of curves: the first row holds the grid, each following
//! row one curve. Comma separated, `.` decimals, no quoting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fda::{FunctionalSample, Grid};

fn data_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_row(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .enumerate()
        .map(|(col, field)| {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| {
                data_error(path, line, format!("column {}: cannot parse {field:?} as a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(data_error(path, line, format!("column {}: value is not finite", col + 1)));
            }
            Ok(v)
        })
        .collect()
}

/// Parses CSV text; `path` is only used in error messages.
pub fn parse_sample(path: &Path, text: &str) -> Result<FunctionalSample> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (grid_line, header) = rows
        .next()
        .ok_or_else(|| data_error(path, 1, "file is empty"))?;
    let grid = Grid::new(parse_row(path, grid_line, header)?)
        .map_err(|e| data_error(path, grid_line, format!("invalid grid row: {e}")))?;

    let mut data = Vec::new();
    let mut n_curves = 0usize;
    let mut last_line = grid_line;
    for (line, text) in rows {
        let row = parse_row(path, line, text)?;
        if row.len() != grid.len() {
            return Err(data_error(
                path,
                line,
                format!("row has {} values but the grid has {} points", row.len(), grid.len()),
            ));
        }
        data.extend(row);
        n_curves += 1;
        last_line = line;
    }
    if n_curves < 2 {
        return Err(data_error(
            path,
            last_line,
            format!("a group needs at least 2 curves, found {n_curves}"),
        ));
    }
    FunctionalSample::from_flat(grid, data).map_err(|e| data_error(path, last_line, e.to_string()))
}

pub fn read_sample(path: &Path) -> Result<FunctionalSample> {
    let text = fs::read_to_string(path).map_err(|e| data_error(path, 0, format!("cannot read file: {e}")))?;
    parse_sample(path, &text)
}

/// Reads one file per group and checks that all share the first file's grid.
pub fn read_groups(paths: &[impl AsRef<Path>]) -> Result<Vec<FunctionalSample>> {
    let samples: Vec<FunctionalSample> = paths.iter().map(|p| read_sample(p.as_ref())).collect::<Result<_>>()?;
    if let Some(first) = samples.first() {
        for (sample, path) in samples.iter().zip(paths).skip(1) {
            if sample.grid() != first.grid() {
                return Err(data_error(
                    path.as_ref(),
                    1,
                    format!("grid row differs from {}", paths[0].as_ref().display()),
                ));
            }
        }
    }
    Ok(samples)
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // Display prints the shortest representation that round-trips.
        write!(out, "{v}").expect("writing to a String");
    }
    out.push('\n');
}

pub fn sample_to_csv(sample: &FunctionalSample) -> String {
    let mut out = String::new();
    push_row(&mut out, sample.grid().points());
    for c in sample.curves() {
        push_row(&mut out, c);
    }
    out
}

pub fn write_sample(path: &Path, sample: &FunctionalSample) -> Result<()> {
    fs::write(path, sample_to_csv(sample))?;
    Ok(())
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let mut row = Vec::with_capacity(m.ncols());
    for r in 0..m.nrows() {
        row.clear();
        row.extend(m.row(r).iter().copied());
        push_row(&mut out, &row);
    }
    out
}
