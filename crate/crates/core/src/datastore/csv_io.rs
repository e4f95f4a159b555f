use std::io::{Read, Write};

use super::row::{LogRow, CSV_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("header mismatch: expected `{}`, found `{found}`", CSV_HEADER.join(","))]
    Schema { found: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp {ts} does not increase")]
    Order { line: u64, ts: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes header and rows, CRLF-terminated.
pub fn write_csv<'a, W: Write>(out: W, rows: impl IntoIterator<Item = &'a LogRow>) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a log, checking the schema and strict timestamp order.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<LogRow>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CsvError::Schema { found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut rows: Vec<LogRow> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Fields never span lines, so the header is line 1 and row i is line i + 2.
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| CsvError::Parse { line, message: e.to_string() })?;
        let bad = |message: String| CsvError::Parse { line, message };
        let num = |i: usize| -> Result<f64, CsvError> {
            let s = &rec[i];
            let v: f64 = s.trim().parse().map_err(|_| bad(format!("{}: `{s}` is not a number", CSV_HEADER[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{}: non-finite value", CSV_HEADER[i])))
            }
        };
        let flag = |i: usize| -> Result<bool, CsvError> {
            match rec[i].trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                s => Err(bad(format!("{}: `{s}` is not 0 or 1", CSV_HEADER[i]))),
            }
        };
        let row = LogRow {
            timestamp: num(0)?,
            ph: num(1)?,
            tds: num(2)?,
            dissolved_oxygen: num(3)?,
            water_temp: num(4)?,
            air_temp: num(5)?,
            humidity: num(6)?,
            wp: flag(7)?,
            ap: flag(8)?,
        };
        if let Some(prev) = rows.last() {
            if row.timestamp <= prev.timestamp {
                return Err(CsvError::Order { line, ts: row.timestamp });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
