//! `time,value` CSV format for time series.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::TimeSeries;

/// Relative tolerance on sample spacing when reading a record.
const DT_TOLERANCE: f64 = 1e-6;

pub fn write_time_series<W: Write>(ts: &TimeSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "value"])?;
    for (k, x) in ts.samples.iter().enumerate() {
        w.write_record([format!("{}", ts.time(k)), format!("{x}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_time_series(ts: &TimeSeries, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_time_series(ts, std::io::BufWriter::new(file))
}

/// Parses a `time,value` CSV with a one-line header. Rows must be uniformly
/// spaced to within one part in a million.
pub fn read_time_series<R: Read>(input: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "value" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header 'time,value', found '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{what} '{s}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("{what} is not finite") });
            }
            Ok(v)
        };
        times.push(parse(&rec[0], "time")?);
        values.push(parse(&rec[1], "value")?);
    }

    if values.len() < 2 {
        return Err(Error::Parse {
            line: values.len() + 1,
            message: "need at least two samples".into(),
        });
    }

    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Parse { line: 2, message: "time must increase".into() });
    }
    for k in 1..n {
        let step = times[k] - times[k - 1];
        if ((step - dt) / dt).abs() > DT_TOLERANCE {
            return Err(Error::Parse {
                line: k + 2,
                message: format!("non-uniform sample spacing {step} (expected {dt})"),
            });
        }
    }
    TimeSeries::new(times[0], dt, values)
}

pub fn load_time_series(path: &Path) -> Result<TimeSeries> {
    let file = std::fs::File::open(path)?;
    read_time_series(std::io::BufReader::new(file))
}
