//! CSV tables of aligned series: a `tick` column followed by one column per
//! series. Used for workload traces (`tick,consumer_1,...`) and per-QoS
//! requirement files (`tick,throughput,...`).
//!
//! Ticks are positive integers with uniform spacing; cells are decimal numbers.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            line,
            message: format!("expected {expected_len} cells, found {len}"),
        },
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Reads a series table. Every returned series shares the tick grid of the
/// file.
pub fn read_table<R: Read>(reader: R) -> Result<Vec<(String, TimeSeries)>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("tick") {
        return Err(Error::Parse { line: 1, message: "first column must be `tick`".into() });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if names.is_empty() {
        return Err(Error::Parse { line: 1, message: "no series columns after `tick`".into() });
    }
    if let Some(name) = names.iter().find(|n| n.is_empty()) {
        return Err(Error::Parse { line: 1, message: format!("empty column name `{name}`") });
    }

    let mut ticks: Vec<u64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for record in csv.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };
        let tick: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(format!("tick `{}` is not a positive integer", &record[0])))?;
        if tick == 0 {
            return Err(parse_err("ticks are 1-based".into()));
        }
        if let [.., prev_prev, prev] = ticks[..] {
            if tick.checked_sub(prev) != Some(prev - prev_prev) {
                return Err(parse_err(format!("tick {tick} breaks the uniform spacing")));
            }
        } else if let [prev] = ticks[..] {
            if tick <= prev {
                return Err(parse_err(format!("tick {tick} does not increase")));
            }
        }
        ticks.push(tick);
        for (column, cell) in columns.iter_mut().zip(record.iter().skip(1)) {
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("`{cell}` is not a number")))?;
            if !value.is_finite() {
                return Err(parse_err(format!("`{cell}` is not finite")));
            }
            column.push(value);
        }
    }
    let (start, step) = match ticks[..] {
        [] => return Err(Error::EmptyTrace),
        [only] => (only, 1),
        [first, second, ..] => (first, second - first),
    };
    names
        .into_iter()
        .zip(columns)
        .map(|(name, values)| Ok((name, TimeSeries::new(start, step, values)?)))
        .collect()
}

/// Writes series that share one grid as a table.
pub fn write_table<W: Write>(writer: W, columns: &[(&str, &TimeSeries)]) -> Result<()> {
    let (_, first) = columns.first().ok_or_else(|| Error::invalid("no columns to write"))?;
    if let Some((name, _)) = columns.iter().find(|(_, s)| !s.same_grid(first)) {
        return Err(Error::invalid(format!("column `{name}` is on a different grid")));
    }
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["tick"];
    header.extend(columns.iter().map(|(n, _)| *n));
    csv.write_record(&header).map_err(csv_error)?;
    for (i, tick) in first.ticks().enumerate() {
        let mut row = vec![tick.to_string()];
        row.extend(columns.iter().map(|(_, s)| s.values()[i].to_string()));
        csv.write_record(&row).map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}
