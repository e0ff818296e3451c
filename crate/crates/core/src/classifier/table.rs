use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Hemodynamic measurements attached to a lesion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub vffr: Option<f64>,
    /// Pa.
    pub wss: Option<f64>,
    pub dffr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub patient: String,
    pub branch: String,
    pub lesion_id: usize,
    /// Aligned with [`FeatureTable::feature_names`]; NaN marks a missing value.
    pub features: Vec<f64>,
    pub functional: Functional,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

const ID_COLUMNS: [&str; 3] = ["patient", "branch", "lesion_id"];
const FUNCTIONAL_COLUMNS: [&str; 3] = ["vffr", "wss", "dffr"];

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    }

    /// Values of the named columns for the given rows, row-major. Missing
    /// values are an error naming the column.
    pub fn matrix(&self, rows: &[usize], columns: &[String]) -> Result<ndarray::Array2<f64>> {
        let idx = columns.iter().map(|c| self.column(c)).collect::<Result<Vec<_>>>()?;
        let mut m = ndarray::Array2::zeros((rows.len(), idx.len()));
        for (r, &row) in rows.iter().enumerate() {
            for (c, &col) in idx.iter().enumerate() {
                let v = self.rows[row].features[col];
                if !v.is_finite() {
                    return Err(Error::MissingFeature(format!(
                        "{} (row {row}, patient {})",
                        columns[c], self.rows[row].patient
                    )));
                }
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }

    /// Rows whose branch is in `branches` (all rows when empty).
    pub fn subset(&self, branches: &[String]) -> FeatureTable {
        FeatureTable {
            feature_names: self.feature_names.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| branches.is_empty() || branches.contains(&r.branch))
                .cloned()
                .collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        ID_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.feature_names.iter().cloned())
            .chain(FUNCTIONAL_COLUMNS.iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn write_csv(&self, path: &Path, config_hash: &str) -> Result<()> {
        let header = self.header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut rec = vec![r.patient.clone(), r.branch.clone(), r.lesion_id.to_string()];
                rec.extend(r.features.iter().map(|&v| io::csv_float(v.is_finite().then_some(v))));
                rec.push(io::csv_float(r.functional.vffr));
                rec.push(io::csv_float(r.functional.wss));
                rec.push(io::csv_float(r.functional.dffr));
                rec
            })
            .collect();
        io::write_csv(path, config_hash, &header, &rows)
    }

    /// Reads a table. Columns other than the id and functional columns are
    /// features; empty cells are missing values.
    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let mut rdr = io::csv_reader(path)?;
        let parse_err = |e: csv::Error| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            Error::Parse {
                path: path.into(),
                offset,
                message: e.to_string(),
            }
        };
        let headers = rdr.headers().map_err(parse_err)?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let ids: Vec<usize> = ID_COLUMNS
            .iter()
            .map(|c| {
                find(c).ok_or_else(|| Error::Parse {
                    path: path.into(),
                    offset: 0,
                    message: format!("missing column `{c}`"),
                })
            })
            .collect::<Result<_>>()?;
        let functional: Vec<Option<usize>> = FUNCTIONAL_COLUMNS.iter().map(|c| find(c)).collect();
        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|i| !ids.contains(i) && !functional.contains(&Some(*i)))
            .collect();
        let feature_names = feature_cols.iter().map(|&i| headers[i].to_string()).collect();

        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(parse_err)?;
            let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
            let number = |i: usize| -> Result<Option<f64>> {
                let cell = rec.get(i).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                    path: path.into(),
                    offset,
                    message: format!("column `{}`: `{cell}` is not a number", &headers[i]),
                })
            };
            let lesion_id = rec[ids[2]].parse::<usize>().map_err(|_| Error::Parse {
                path: path.into(),
                offset,
                message: format!("lesion_id `{}` is not an integer", &rec[ids[2]]),
            })?;
            let features = feature_cols
                .iter()
                .map(|&i| number(i).map(|v| v.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<_>>>()?;
            let func = |k: usize| -> Result<Option<f64>> { functional[k].map_or(Ok(None), number) };
            rows.push(FeatureRow {
                patient: rec[ids[0]].to_string(),
                branch: rec[ids[1]].to_string(),
                lesion_id,
                features,
                functional: Functional {
                    vffr: func(0)?,
                    wss: func(1)?,
                    dffr: func(2)?,
                },
            });
        }
        Ok(FeatureTable { feature_names, rows })
    }
}

/// Functional measurements of one lesion, located by branch and an
/// abscissa inside the lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub branch: String,
    pub position_mm: f64,
    pub functional: Functional,
}

const FUNCTIONAL_HEADER: [&str; 5] = ["branch", "position_mm", "vffr", "wss", "dffr"];

pub fn write_functional_csv(path: &Path, config_hash: &str, records: &[FunctionalRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.branch.clone(),
                io::format_f64(r.position_mm),
                io::csv_float(r.functional.vffr),
                io::csv_float(r.functional.wss),
                io::csv_float(r.functional.dffr),
            ]
        })
        .collect();
    io::write_csv(path, config_hash, &FUNCTIONAL_HEADER, &rows)
}

pub fn read_functional_csv(path: &Path) -> Result<Vec<FunctionalRecord>> {
    let mut rdr = io::csv_reader(path)?;
    let parse_err = |offset: u64, message: String| Error::Parse {
        path: path.into(),
        offset,
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(e.position().map_or(0, |p| p.byte()), e.to_string()))?
        .clone();
    let cols = FUNCTIONAL_HEADER
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| parse_err(0, format!("missing column `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.byte()), e.to_string()))?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let number = |k: usize| -> Result<Option<f64>> {
            let cell = rec.get(cols[k]).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(offset, format!("column `{}`: `{cell}` is not a number", FUNCTIONAL_HEADER[k])))
        };
        let position_mm = number(1)?.ok_or_else(|| parse_err(offset, "empty position_mm".into()))?;
        out.push(FunctionalRecord {
            branch: rec.get(cols[0]).unwrap_or("").to_string(),
            position_mm,
            functional: Functional {
                vffr: number(2)?,
                wss: number(3)?,
                dffr: number(4)?,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTable {
        FeatureTable {
            feature_names: vec!["max_sd".into(), "fai".into()],
            rows: vec![
                FeatureRow {
                    patient: "p1".into(),
                    branch: "LAD".into(),
                    lesion_id: 0,
                    features: vec![0.45, -82.5],
                    functional: Functional {
                        vffr: Some(0.78),
                        wss: Some(16.0),
                        dffr: None,
                    },
                },
                FeatureRow {
                    patient: "p2".into(),
                    branch: "RCA".into(),
                    lesion_id: 1,
                    features: vec![0.1, f64::NAN],
                    functional: Functional::default(),
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let t = sample();
        t.write_csv(&path, "abc").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# coronary-pcat "));
        assert!(text.contains("config abc"));
        let back = FeatureTable::read_csv(&path).unwrap();
        assert_eq!(back.feature_names, t.feature_names);
        assert_eq!(back.rows[0], t.rows[0]);
        assert!(back.rows[1].features[1].is_nan());
    }

    #[test]
    fn missing_value_in_selected_column_is_named() {
        let t = sample();
        let err = t.matrix(&[0, 1], &["max_sd".into(), "fai".into()]).unwrap_err();
        assert!(err.to_string().contains("fai"), "{err}");
        assert!(matches!(t.matrix(&[0], &["nope".into()]), Err(Error::MissingFeature(_))));
    }

    #[test]
    fn functional_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("functional.csv");
        let recs = vec![FunctionalRecord {
            branch: "LAD".into(),
            position_mm: 41.5,
            functional: Functional {
                vffr: Some(0.71),
                wss: None,
                dffr: Some(0.09),
            },
        }];
        write_functional_csv(&path, "h", &recs).unwrap();
        assert_eq!(read_functional_csv(&path).unwrap(), recs);
    }

    #[test]
    fn bad_number_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "patient,branch,lesion_id,x\np1,LAD,0,1.5\np2,LAD,1,oops\n").unwrap();
        match FeatureTable::read_csv(&path).unwrap_err() {
            Error::Parse { offset, message, .. } => {
                assert_eq!(offset, 40);
                assert!(message.contains("oops"));
            }
            other => panic!("{other}"),
        }
    }
}
