use std::io::{Read, Write};
use std::path::Path;

use crate::dataio::frame::{Column, ColumnKind, Frame, Schema};
use crate::error::{Error, Result};

/// Reads a CSV file whose header must list exactly the schema's columns, in
/// order. Cells equal to `missing_token` are marked missing.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, missing_token: &str) -> Result<Frame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, missing_token)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema, missing_token: &str) -> Result<Frame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::Empty("CSV file has no header".into())),
    };
    let found: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let expected: Vec<String> = schema.columns.iter().map(|c| c.name.clone()).collect();
    if found != expected {
        return Err(Error::HeaderMismatch { expected, found });
    }

    let d = expected.len();
    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); d];
    for record in records {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            raw[j].push(if cell == missing_token {
                None
            } else {
                Some(cell.to_string())
            });
        }
    }
    if raw.first().is_none_or(Vec::is_empty) {
        return Err(Error::Empty("CSV file has no data rows".into()));
    }

    let mut columns = Vec::with_capacity(d);
    for (spec, cells) in schema.columns.iter().zip(raw) {
        if spec.kind == ColumnKind::Categorical {
            let refs: Vec<Option<&str>> = cells.iter().map(|c| c.as_deref()).collect();
            columns.push(Column::categorical(spec.clone(), &refs));
            continue;
        }
        let mut values = Vec::with_capacity(cells.len());
        for (i, cell) in cells.iter().enumerate() {
            let Some(text) = cell else {
                values.push(f64::NAN);
                continue;
            };
            let parse_err = |message: String| Error::Parse {
                row: i + 1,
                column: spec.name.clone(),
                message,
            };
            let v: f64 = text
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("{text:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("{text:?} is not finite")));
            }
            match spec.kind {
                ColumnKind::Binary if v != 0.0 && v != 1.0 => {
                    return Err(parse_err(format!("binary cell holds {v}")));
                }
                ColumnKind::Score => {
                    if let Some([lo, hi]) = spec.range {
                        if v < lo || v > hi {
                            return Err(parse_err(format!("score {v} outside [{lo}, {hi}]")));
                        }
                    }
                }
                _ => {}
            }
            values.push(v);
        }
        columns.push(Column::numeric(spec.clone(), values));
    }
    Frame::new(columns, schema.label.clone())
}

pub fn write_csv(path: impl AsRef<Path>, frame: &Frame, missing_token: &str) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(std::io::BufWriter::new(file), frame, missing_token)
}

/// Numbers are written in shortest round-trip form, so reading the file back
/// reproduces every finite value bit-exactly.
pub fn write_csv_to<W: Write>(writer: W, frame: &Frame, missing_token: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(frame.columns().iter().map(|c| c.name()))?;
    let mut row = Vec::with_capacity(frame.columns().len());
    for i in 0..frame.n_rows() {
        row.clear();
        for c in frame.columns() {
            if c.missing[i] {
                row.push(missing_token.to_string());
            } else if c.kind() == ColumnKind::Categorical {
                row.push(c.levels[c.values[i] as usize].clone());
            } else {
                row.push(format!("{}", c.values[i]));
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::frame::ColumnSpec;

    fn two_continuous() -> Schema {
        Schema {
            label: None,
            columns: vec![
                ColumnSpec::new("apsiii", ColumnKind::Continuous),
                ColumnSpec::new("age", ColumnKind::Continuous),
            ],
        }
    }

    #[test]
    fn parses_three_rows() {
        let f = read_csv("apsiii,age\n50,70\n61.5,80\n40,77\n".as_bytes(), &two_continuous(), "").unwrap();
        assert_eq!(f.n_rows(), 3);
        assert!(!f.has_missing());
        assert_eq!(f.require("apsiii").unwrap().values, vec![50.0, 61.5, 40.0]);
    }

    #[test]
    fn empty_cell_is_missing() {
        let f = read_csv("apsiii,age\n50,\n".as_bytes(), &two_continuous(), "").unwrap();
        assert!(f.require("age").unwrap().missing[0]);
        assert!(!f.require("apsiii").unwrap().missing[0]);
    }

    #[test]
    fn custom_missing_token() {
        let f = read_csv("apsiii,age\nNA,70\n".as_bytes(), &two_continuous(), "NA").unwrap();
        assert!(f.require("apsiii").unwrap().missing[0]);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let err = read_csv("ap3,age\n1,2\n".as_bytes(), &two_continuous(), "").unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch { .. }), "{err}");
    }

    #[test]
    fn unparseable_cell_reports_location() {
        let err = read_csv("apsiii,age\n1,2\n3,old\n".as_bytes(), &two_continuous(), "").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(read_csv("".as_bytes(), &two_continuous(), ""), Err(Error::Empty(_))));
        assert!(matches!(
            read_csv("apsiii,age\n".as_bytes(), &two_continuous(), ""),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn binary_and_categorical_columns() {
        let schema = Schema {
            label: Some("died".into()),
            columns: vec![
                ColumnSpec::new("ward", ColumnKind::Categorical),
                ColumnSpec::new("died", ColumnKind::Binary),
            ],
        };
        let f = read_csv("ward,died\nA,0\nB,1\n,1\nA,0\n".as_bytes(), &schema, "").unwrap();
        let ward = f.require("ward").unwrap();
        assert_eq!(ward.levels, vec!["A", "B"]);
        assert!(ward.missing[2]);
        let mut out = Vec::new();
        write_csv_to(&mut out, &f, "").unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "ward,died\nA,0\nB,1\n,1\nA,0\n");

        let bad = read_csv("ward,died\nA,2\n".as_bytes(), &schema, "");
        assert!(matches!(bad, Err(Error::Parse { .. })));
    }
}
