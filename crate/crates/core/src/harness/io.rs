//! CSV formats: datasets with a missing-value token, label files, masks,
//! predictor matrices and completed imputations.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gmm::Partition;
use crate::impute_fcs::PredictorMatrix;
use crate::impute_jm::ChainTrace;
use crate::linalg::Matrix;
use crate::mechanisms::Dataset;
use crate::pooling::ChooseK;

/// Seventeen significant digits: enough to round-trip every `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_value(cell: &str, row: usize, column: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("'{cell}' is not a number"),
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r)
}

/// Parse a numeric table with a header row. Cells equal to `na_token` are
/// missing. When `label_column` names a header, that column becomes the
/// reference labels (distinct values mapped to `0..K` in sorted order).
pub fn read_dataset<R: Read>(r: R, na_token: &str, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = reader(r);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("no column named '{name}'")))?,
        ),
        None => None,
    };
    let width = headers.len();
    let p = width - usize::from(label_idx.is_some());
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // row numbers are 1-based and count the header
        let row = r + 2;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(parse_value(cell, row, c + 1)?);
            } else if cell.trim() == na_token {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                let v = parse_value(cell, row, c + 1)?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: c + 1,
                        message: "value is not finite".into(),
                    });
                }
                values.push(v);
                mask.push(true);
            }
        }
        n += 1;
    }
    let names = headers
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let data = Dataset::new(Matrix::new(n, p, values)?, mask)?.with_names(names)?;
    if label_idx.is_none() {
        return Ok(data);
    }
    let mut distinct = raw_labels.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let labels = raw_labels
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).expect("value present"))
        .collect();
    data.with_ref_labels(Partition::new(labels, distinct.len().max(1))?)
}

pub fn load_csv(path: &Path, na_token: &str) -> Result<Dataset> {
    read_dataset(File::open(path)?, na_token, None)
}

pub fn load_csv_with_labels(path: &Path, na_token: &str, label_column: &str) -> Result<Dataset> {
    read_dataset(File::open(path)?, na_token, Some(label_column))
}

pub fn write_dataset<W: Write>(w: W, data: &Dataset, na_token: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(data.names())?;
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.p())
            .map(|j| {
                if data.is_observed(i, j) {
                    format_value(data.values().get(i, j))
                } else {
                    na_token.to_string()
                }
            })
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: &Path, na_token: &str) -> Result<()> {
    write_dataset(File::create(path)?, data, na_token)
}

/// Write a complete matrix under the given column names.
pub fn save_matrix(m: &Matrix, names: &[String], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(names)?;
    for row in m.rows() {
        wtr.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a complete numeric matrix (header row skipped).
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let data = read_dataset(File::open(path)?, "\u{0}", None)?;
    Ok(data.values().clone())
}

/// Observation mask as 0/1 (1 = observed) under the dataset's column names.
pub fn save_mask(data: &Dataset, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(data.names())?;
    for i in 0..data.n() {
        wtr.write_record(data.observed_row(i).iter().map(|o| if *o { "1" } else { "0" }))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<Vec<bool>> {
    let mut rdr = reader(File::open(path)?);
    let width = rdr.headers()?.len();
    let mut mask = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::Parse {
                row: r + 2,
                column: record.len() + 1,
                message: format!("expected {width} fields"),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            mask.push(match cell.trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        row: r + 2,
                        column: c + 1,
                        message: format!("mask entry '{other}' is not 0 or 1"),
                    })
                }
            });
        }
    }
    Ok(mask)
}

/// Single-column file with header `label`.
pub fn save_labels(p: &Partition, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["label"])?;
    for l in p.labels() {
        wtr.write_record([l.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Partition> {
    let mut rdr = reader(File::open(path)?);
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = record.get(0).unwrap_or("");
        let l = cell.trim().parse::<usize>().map_err(|_| Error::Parse {
            row: r + 2,
            column: 1,
            message: format!("'{cell}' is not a cluster label"),
        })?;
        labels.push(l);
    }
    Ok(Partition::from_labels(labels))
}

/// `p x p` 0/1 matrix with variable names in the header row and first column.
pub fn read_predictor_matrix<R: Read>(r: R) -> Result<(PredictorMatrix, Vec<String>)> {
    let mut rdr = reader(r);
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let p = names.len();
    let mut entries = Vec::with_capacity(p * p);
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != p + 1 {
            return Err(Error::Parse {
                row: r + 2,
                column: record.len() + 1,
                message: format!("expected {} fields", p + 1),
            });
        }
        for (c, cell) in record.iter().enumerate().skip(1) {
            entries.push(match cell.trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        row: r + 2,
                        column: c + 1,
                        message: format!("predictor flag '{other}' is not 0 or 1"),
                    })
                }
            });
        }
        rows += 1;
    }
    if rows != p {
        return Err(Error::DimensionMismatch { expected: p, got: rows });
    }
    Ok((PredictorMatrix::new(p, entries)?, names))
}

pub fn load_predictor_matrix(path: &Path) -> Result<PredictorMatrix> {
    read_predictor_matrix(File::open(path)?).map(|(m, _)| m)
}

/// Completed datasets laid out as `<dir>/imputation_<m>.csv`, `m = 1, 2, ...`.
pub fn load_imputations(dir: &Path) -> Result<Vec<Matrix>> {
    let mut out = Vec::new();
    loop {
        let path = dir.join(format!("imputation_{}.csv", out.len() + 1));
        if !path.exists() {
            break;
        }
        out.push(load_matrix(&path)?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "no imputation_1.csv found in {}",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn save_imputations(completed: &[Matrix], names: &[String], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (m, c) in completed.iter().enumerate() {
        save_matrix(c, names, &dir.join(format!("imputation_{}.csv", m + 1)))?;
    }
    Ok(())
}

/// Chain statistics in long format: one row per stored scalar.
pub fn write_diagnostics<W: Write>(w: W, traces: &[ChainTrace]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["chain", "iteration", "quantity", "component", "variable", "value"])?;
    for t in traces {
        for r in &t.records {
            let mut row = |q: &str, c: usize, v: Option<usize>, x: f64| {
                wtr.write_record([
                    t.chain.to_string(),
                    r.iteration.to_string(),
                    q.to_string(),
                    (c + 1).to_string(),
                    v.map_or_else(String::new, |v| (v + 1).to_string()),
                    format_value(x),
                ])
            };
            for (c, &wt) in r.weights.iter().enumerate() {
                row("weight", c, None, wt)?;
            }
            for (c, mean) in r.means.iter().enumerate() {
                for (j, &x) in mean.iter().enumerate() {
                    row("mean", c, Some(j), x)?;
                }
            }
            for (c, &tr) in r.cov_traces.iter().enumerate() {
                row("cov_trace", c, None, tr)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Instability table with one row per (clustering, engine) and one column
/// per number of clusters; cells without a value are left empty.
pub fn write_instability_table<W: Write>(w: W, rows: &[(&str, &str, &ChooseK)]) -> Result<()> {
    let mut ks: Vec<usize> = rows.iter().flat_map(|r| r.2.table.iter().map(|t| t.0)).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["clustering".to_string(), "mi".to_string()];
    header.extend(ks.iter().map(|k| format!("K={k}")));
    header.push("best_k".into());
    wtr.write_record(&header)?;
    for (clustering, mi, res) in rows {
        let mut rec = vec![clustering.to_string(), mi.to_string()];
        for k in &ks {
            rec.push(
                res.table
                    .iter()
                    .find(|t| t.0 == *k)
                    .map_or_else(String::new, |t| format_value(t.1)),
            );
        }
        rec.push(res.best_k.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn na_token_marks_missing() {
        let text = "a,b\n1,NA\nNA,2.5\n";
        let d = read_dataset(text.as_bytes(), "NA", None).unwrap();
        assert_eq!(d.mask(), &[true, false, false, true]);
        assert_eq!(d.values().get(1, 1), 2.5);
        assert_eq!(d.names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn ragged_and_bad_cells_report_location() {
        match read_dataset("a,b\n1,2\n3\n".as_bytes(), "NA", None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        match read_dataset("a,b\n1,x\n".as_bytes(), "NA", None) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Matrix::new(2, 2, vec![0.1 + 0.2, -1e-300, std::f64::consts::PI, 12345.678]).unwrap();
        let d = Dataset::new(m, vec![true, true, false, true]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d, "NA").unwrap();
        let back = read_dataset(buf.as_slice(), "NA", None).unwrap();
        assert_eq!(back.mask(), d.mask());
        for (a, b) in back.values().as_slice().iter().zip(d.values().as_slice()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn label_column_is_mapped() {
        let text = "x,class\n1,3\n2,1\n3,3\n";
        let d = read_dataset(text.as_bytes(), "NA", Some("class")).unwrap();
        assert_eq!(d.p(), 1);
        assert_eq!(d.ref_labels().unwrap().labels(), &[1, 0, 1]);
    }

    #[test]
    fn predictor_matrix_parsing() {
        let text = ",a,b\na,0,1\nb,1,0\n";
        let (m, names) = read_predictor_matrix(text.as_bytes()).unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert!(m.get(0, 1) && !m.get(0, 0));
        assert!(read_predictor_matrix(",a,b\na,1,1\nb,1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn instability_table_is_wide() {
        let a = ChooseK {
            table: vec![(2, 0.25), (3, 0.125)],
            best_k: 3,
        };
        let b = ChooseK {
            table: vec![(2, 0.5)],
            best_k: 2,
        };
        let mut out = Vec::new();
        write_instability_table(&mut out, &[("kmeans", "fcs_homo", &a), ("pam", "jm_gl", &b)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "clustering,mi,K=2,K=3,best_k");
        assert_eq!(lines[1], format!("kmeans,fcs_homo,{},{},3", format_value(0.25), format_value(0.125)));
        assert_eq!(lines[2], format!("pam,jm_gl,{},,2", format_value(0.5)));
    }
}
