use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::QualityRow;
use crate::error::Result;

pub const QUALITY_HEADER: [&str; 6] = ["step", "imbalance", "entropy", "coverage", "energy_distance", "variant"];

/// Writes rows under an explicit header, so an empty run still yields one.
pub(crate) fn write_csv<'a, T, I>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_quality_csv<'a>(path: impl AsRef<Path>, rows: impl IntoIterator<Item = &'a QualityRow>) -> Result<()> {
    write_csv(path, &QUALITY_HEADER, rows)
}

pub fn read_quality_csv(path: impl AsRef<Path>) -> Result<Vec<QualityRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Variant;

    #[test]
    fn quality_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        write_quality_csv(&path, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "step,imbalance,entropy,coverage,energy_distance,variant\n"
        );
        let rows = vec![QualityRow {
            step: 320,
            imbalance: 1.5,
            entropy: 2.25,
            coverage: 1.0,
            energy_distance: 0.125,
            variant: Variant::Scm,
        }];
        write_quality_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("320,1.5,2.25,1.0,0.125,SCM\n"), "{text}");
        assert_eq!(read_quality_csv(&path).unwrap(), rows);
    }
}
