//! Plain-text fixtures: one row per entry holding the `L` descriptor values,
//! then `x, y, z`, then the timestamp. No header; `#` starts a comment line.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::types::{validate_set, DescriptorSet, SetKind, SetParts};

const TRAILING_COLUMNS: usize = 4;

pub fn read_csv_fixture<R: Read>(reader: R) -> Result<DescriptorSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut dim = None;
    let mut values = Vec::new();
    let mut poses = Vec::new();
    let mut timestamps = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() <= TRAILING_COLUMNS {
            return Err(Error::Csv(format!(
                "row {row} has {} columns, need at least {}",
                record.len(),
                TRAILING_COLUMNS + 1
            )));
        }
        let l = record.len() - TRAILING_COLUMNS;
        match dim {
            None => dim = Some(l),
            Some(d) if d != l => {
                return Err(Error::DimensionMismatch(format!(
                    "row {row} has {l} descriptor values, earlier rows have {d}"
                )))
            }
            _ => {}
        }
        let field = |i: usize| -> Result<&str> { Ok(&record[i]) };
        for i in 0..l {
            let v: f32 = field(i)?.parse().map_err(|e| Error::Csv(format!("row {row}, column {i}: {e}")))?;
            values.push(v);
        }
        let mut tail = [0.0f64; TRAILING_COLUMNS];
        for (k, slot) in tail.iter_mut().enumerate() {
            *slot =
                field(l + k)?.parse().map_err(|e| Error::Csv(format!("row {row}, column {}: {e}", l + k)))?;
        }
        poses.push([tail[0], tail[1], tail[2]]);
        timestamps.push(tail[3]);
    }
    let dim = dim.ok_or_else(|| Error::Csv("fixture has no rows".into()))?;
    validate_set(SetParts {
        count: poses.len(),
        dim,
        members: vec![values],
        variances: None,
        poses: Some(poses),
        timestamps: Some(timestamps),
        label: String::new(),
    })
}

/// Writes a single-member set as a fixture. Missing poses and timestamps are
/// written as zeros.
pub fn write_csv_fixture<W: Write>(set: &DescriptorSet, writer: W) -> Result<()> {
    if set.kind() != SetKind::Plain {
        return Err(Error::Csv("fixtures hold plain single-member sets only".into()));
    }
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..set.len() {
        let mut row: Vec<String> = set.descriptor(0, i).iter().map(f32::to_string).collect();
        let pose = set.poses().map_or([0.0; 3], |p| p[i]);
        row.extend(pose.iter().map(f64::to_string));
        row.push(set.timestamp(i).to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
