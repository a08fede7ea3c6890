use std::io::{Read, Write};

use crate::record::{format_timestamp, parse_timestamp, AnnotationRecord};

use super::SessionError;

pub const RECORDS_HEADER: [&str; 6] = [
    "session_id",
    "annotator_id",
    "image_id",
    "category_id",
    "option_id",
    "timestamp",
];

/// Reads annotation records; errors name the 1-based file line.
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, SessionError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(SessionError::csv)?.clone();
    if headers.iter().collect::<Vec<_>>() != RECORDS_HEADER {
        return Err(SessionError::Validation(format!(
            "annotation CSV header must be `{}`",
            RECORDS_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(SessionError::csv)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<String, SessionError> {
            match row.get(i) {
                Some(v) if !v.trim().is_empty() => Ok(v.trim().to_string()),
                _ => Err(SessionError::Validation(format!(
                    "line {line}: missing `{}`",
                    RECORDS_HEADER[i]
                ))),
            }
        };
        let timestamp = parse_timestamp(&field(5)?).map_err(|e| {
            SessionError::Validation(format!("line {line}: bad timestamp: {e}"))
        })?;
        out.push(AnnotationRecord {
            session_id: field(0)?,
            annotator_id: field(1)?,
            image_id: field(2)?,
            category_id: field(3)?,
            option_id: field(4)?,
            timestamp,
        });
    }
    Ok(out)
}

pub fn write_records_csv<W: Write>(
    writer: W,
    records: &[AnnotationRecord],
) -> Result<(), SessionError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RECORDS_HEADER).map_err(SessionError::csv)?;
    for r in records {
        wtr.write_record([
            r.session_id.as_str(),
            &r.annotator_id,
            &r.image_id,
            &r.category_id,
            &r.option_id,
            &format_timestamp(&r.timestamp),
        ])
        .map_err(SessionError::csv)?;
    }
    wtr.flush()?;
    Ok(())
}
