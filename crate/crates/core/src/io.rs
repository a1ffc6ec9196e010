//! Measure files: CSV with a header row, one atom per line, coordinates in the
//! leading columns and the weight in the last.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Weight sums further than this from one are reported when rescaled.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A measure read from disk, with the weight sum found in the file.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedMeasure {
    pub measure: DiscreteMeasure,
    pub raw_sum: f64,
    /// True when the weights were rescaled to sum to one.
    pub renormalized: bool,
}

pub fn read_measure(path: impl AsRef<Path>) -> Result<LoadedMeasure> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_measure_from(file).map_err(|e| match e {
        Error::MalformedFile(msg) => Error::MalformedFile(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Weights are always rescaled to sum to one; a sum off by more than
/// [`RENORMALIZE_TOLERANCE`] is logged as a warning.
pub fn read_measure_from(reader: impl Read) -> Result<LoadedMeasure> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let columns = rdr.headers()?.len();
    if columns < 2 {
        return Err(Error::MalformedFile("need at least one coordinate column and a weight column".into()));
    }
    let dim = columns - 1;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::MalformedFile(format!("row {}: column {} is not a number: {field:?}", line + 1, col + 1)))?;
            if col < dim {
                coords.push(v);
            } else {
                weights.push(v);
            }
        }
    }
    if weights.is_empty() {
        return Err(Error::EmptySupport);
    }
    let raw_sum: f64 = weights.iter().sum();
    let renormalized = (raw_sum - 1.0).abs() > RENORMALIZE_TOLERANCE;
    if renormalized {
        log::warn!("measure weights sum to {raw_sum}; renormalizing");
    }
    let measure = DiscreteMeasure::normalized(dim, coords, weights)?;
    Ok(LoadedMeasure { measure, raw_sum, renormalized })
}

pub fn write_measure(path: impl AsRef<Path>, mu: &DiscreteMeasure) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_measure_to(file, mu)
}

/// Floats are written with 17 significant digits so a reread is exact.
pub fn write_measure_to(writer: impl Write, mu: &DiscreteMeasure) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=mu.dim()).map(|j| format!("x{j}")).collect();
    header.push("weight".into());
    w.write_record(&header)?;
    for i in 0..mu.len() {
        let mut row: Vec<String> = mu.point(i).iter().map(|v| format_float(*v)).collect();
        row.push(format_float(mu.weights()[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Scientific notation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mu = DiscreteMeasure::from_flat(2, vec![0.1, -3.0, 1.0 / 3.0, 2.5], vec![0.3, 0.7]).unwrap();
        let mut buf = Vec::new();
        write_measure_to(&mut buf, &mu).unwrap();
        let back = read_measure_from(&buf[..]).unwrap();
        assert_eq!(back.measure, mu);
        assert!(!back.renormalized);
    }

    #[test]
    fn renormalizes_and_rejects_garbage() {
        let loaded = read_measure_from("x,w\n0,1\n1,3\n".as_bytes()).unwrap();
        assert!(loaded.renormalized);
        assert_eq!(loaded.measure.weights(), &[0.25, 0.75]);
        assert!(matches!(read_measure_from("x,w\n0,abc\n".as_bytes()), Err(Error::MalformedFile(_))));
        assert!(matches!(read_measure_from("x,w\n0,-1\n1,2\n".as_bytes()), Err(Error::NegativeWeight { .. })));
    }
}
