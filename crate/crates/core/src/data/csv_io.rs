use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{column_names, Dataset, HarmonicRecord, N_COLUMNS};
use crate::error::{Error, Result, RowRejection};

pub const CSV_HEADER: &str =
    "timestamp,v3,v5,v7,v9,v11,v13,v15,v17,v19,thdv,i3,i5,i7,i9,i11,i13,i15,i17,i19,thdi";

/// Reads the 21-column layout; columns are matched by header name.
///
/// Every row with a missing, non-numeric, non-finite or negative value is
/// reported by physical line number (the header is line 1) and the load fails.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_csv(file)?;
    ds.provenance = path.display().to_string();
    Ok(ds)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::EmptyDataset("file has no header row".into()));
    }
    let names = column_names();
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing: Vec<&str> = names.iter().map(String::as_str).filter(|n| find(n).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "missing column(s) {}; expected header `{CSV_HEADER}`",
            missing.join(", ")
        )));
    }
    let index: Vec<usize> = names.iter().map(|n| find(n).expect("checked above")).collect();
    let ts_index = find("timestamp");

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        let mut values = [0.0; N_COLUMNS];
        let mut ok = true;
        for (c, &col) in index.iter().enumerate() {
            let reject = |reason: String| RowRejection {
                line,
                column: names[c].clone(),
                reason,
            };
            match row.get(col) {
                None | Some("") => {
                    rejected.push(reject("missing value".into()));
                    ok = false;
                }
                Some(raw) => match raw.parse::<f64>() {
                    Ok(v) if !v.is_finite() => {
                        rejected.push(reject(format!("non-finite value `{raw}`")));
                        ok = false;
                    }
                    Ok(v) if v < 0.0 => {
                        rejected.push(reject(format!("negative value {raw}")));
                        ok = false;
                    }
                    Ok(v) => values[c] = v,
                    Err(_) => {
                        rejected.push(reject(format!("non-numeric value `{raw}`")));
                        ok = false;
                    }
                },
            }
        }
        if ok {
            let timestamp = ts_index.and_then(|t| row.get(t)).filter(|s| !s.is_empty()).map(str::to_string);
            let mut rec = HarmonicRecord {
                timestamp,
                v: [0.0; 10],
                i: [0.0; 10],
            };
            for (c, v) in values.iter().enumerate() {
                *rec.value_mut(c) = *v;
            }
            records.push(rec);
        }
    }
    if !rejected.is_empty() {
        return Err(Error::InvalidRows(rejected));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset("header present but no data rows".into()));
    }
    Ok(Dataset::new(records, "csv"))
}

/// Writes the canonical layout; floats use the shortest representation that round-trips.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    let mut fields: Vec<String> = Vec::with_capacity(N_COLUMNS + 1);
    for r in &ds.records {
        fields.clear();
        fields.push(r.timestamp.clone().unwrap_or_default());
        fields.extend((0..N_COLUMNS).map(|c| format!("{:?}", r.value(c))));
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;

    fn canonical(rows: &[[f64; 20]]) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for (k, r) in rows.iter().enumerate() {
            s.push_str(&format!("2023-01-0{}T00:00:00Z", k + 1));
            for v in r {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    fn rows() -> Vec<[f64; 20]> {
        (0..3)
            .map(|k| {
                let mut r = [0.0; 20];
                for (c, v) in r.iter_mut().enumerate() {
                    *v = (k * 20 + c) as f64 * 0.5;
                }
                r
            })
            .collect()
    }

    #[test]
    fn three_row_fixture_round_trips() {
        let ds = read_csv(canonical(&rows()).as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        for (rec, want) in ds.records.iter().zip(rows()) {
            for c in 0..20 {
                assert_eq!(rec.value(c), want[c]);
            }
        }
        assert_eq!(ds.records[1].timestamp.as_deref(), Some("2023-01-02T00:00:00Z"));
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        let again = read_csv(out.as_slice()).unwrap();
        assert_eq!(again.records, ds.records);
    }

    #[test]
    fn negative_value_reports_line() {
        let mut text = String::from(CSV_HEADER);
        text.push('\n');
        for k in 0..8 {
            let cur = if k == 5 { "-0.2" } else { "0.2" };
            text.push_str(&format!(",1,1,1,1,1,1,1,1,1,1,{cur},1,1,1,1,1,1,1,1,1\n"));
        }
        // data row k sits on line k + 2, so the bad row is line 7
        match read_csv(text.as_bytes()) {
            Err(Error::InvalidRows(r)) => {
                assert_eq!(r.len(), 1);
                assert_eq!(r[0].line, 7);
                assert_eq!(r[0].column, "i3");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_short_rows_are_rejected() {
        let text = format!("{CSV_HEADER}\n,1,1,1,1,1,1,1,1,1,abc,1,1,1,1,1,1,1,1,1,1\n,1,1\n");
        match read_csv(text.as_bytes()) {
            Err(Error::InvalidRows(r)) => {
                assert!(r.iter().any(|x| x.line == 2 && x.column == "thdv"));
                assert!(r.iter().any(|x| x.line == 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn permuted_header_lands_in_canonical_order() {
        let canon = read_csv(canonical(&rows()).as_bytes()).unwrap();
        let names: Vec<&str> = CSV_HEADER.split(',').collect();
        let perm: Vec<usize> = (0..21).rev().collect();
        let mut text = perm.iter().map(|&p| names[p]).collect::<Vec<_>>().join(",");
        text.push('\n');
        for (k, r) in rows().iter().enumerate() {
            let mut fields = vec![format!("2023-01-0{}T00:00:00Z", k + 1)];
            fields.extend(r.iter().map(|v| v.to_string()));
            text.push_str(&perm.iter().map(|&p| fields[p].clone()).collect::<Vec<_>>().join(","));
            text.push('\n');
        }
        let permuted = read_csv(text.as_bytes()).unwrap();
        assert_eq!(permuted.records, canon.records);
    }

    #[test]
    fn missing_column_is_schema_error_with_expected_header() {
        let text = "timestamp,v3,v5\n,1,2\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Schema(msg)) => assert!(msg.contains(CSV_HEADER) && msg.contains("thdi")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_inputs_are_empty_dataset_errors() {
        assert!(matches!(read_csv("".as_bytes()), Err(Error::EmptyDataset(_))));
        assert!(matches!(read_csv(format!("{CSV_HEADER}\n").as_bytes()), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn writer_preserves_every_bit() {
        let mut ds = fixtures::dataset(2);
        ds.records[0].v[3] = 0.1 + 0.2;
        ds.records[1].i[9] = 1.0 / 3.0;
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        assert_eq!(read_csv(out.as_slice()).unwrap().records, ds.records);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_csv("/nonexistent/data.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/data.csv"));
    }
}
