//! Trajectory CSV files.
//!
//! Written files have the header `t,x,c,lambda,euler_residual,tvc_proxy` and
//! one row per node, every value printed with 17 significant digits so that
//! reading a file back reproduces the nodes bit for bit. Non-finite values
//! are written as `NaN`, `inf` and `-inf`.
//!
//! The reader accepts any CSV with a header containing `t`, `x` and `c`;
//! a `lambda` column is picked up when present and other columns are
//! ignored.

use std::fs;
use std::path::Path;

use octrl_core::hamiltonian::MultiplierPath;
use octrl_core::problem::AdmissiblePath;
use thiserror::Error;

pub const HEADER: [&str; 6] = ["t", "x", "c", "lambda", "euler_residual", "tvc_proxy"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("empty trajectory; nothing written to {0}")]
    Empty(String),
    #[error("column {column} has {got} values, expected {expected}")]
    Length {
        column: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: &'static str },
    #[error("{path}, line {line}, column `{column}`: cannot parse \"{text}\"")]
    Parse {
        path: String,
        line: u64,
        column: String,
        text: String,
    },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

/// Columns of a trajectory file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryTable {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub lambda: Vec<f64>,
    pub euler_residual: Vec<f64>,
    pub tvc_proxy: Vec<f64>,
}

impl TrajectoryTable {
    fn columns(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("t", &self.t),
            ("x", &self.x),
            ("c", &self.c),
            ("lambda", &self.lambda),
            ("euler_residual", &self.euler_residual),
            ("tvc_proxy", &self.tvc_proxy),
        ]
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Writes `table` to `path`. Nothing is written when the table is empty or
/// its columns disagree in length.
pub fn write_trajectory_csv(path: &Path, table: &TrajectoryTable) -> Result<(), CsvError> {
    let n = table.len();
    if n == 0 {
        return Err(CsvError::Empty(path.display().to_string()));
    }
    for (column, values) in table.columns() {
        if values.len() != n {
            return Err(CsvError::Length {
                column,
                got: values.len(),
                expected: n,
            });
        }
    }
    let csv_err = |source| CsvError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).map_err(csv_err)?;
    for k in 0..n {
        w.write_record(table.columns().iter().map(|(_, v)| format_value(v[k])))
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CsvError::Io {
        path: path.display().to_string(),
        source: e.into_error(),
    })?;
    fs::write(path, bytes).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A path read from CSV, with the multiplier when the file has one.
#[derive(Debug, Clone)]
pub struct PathFile {
    pub path: AdmissiblePath,
    pub multiplier: Option<MultiplierPath>,
}

pub fn read_path_csv(file: &Path) -> Result<PathFile, CsvError> {
    let name = file.display().to_string();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(file)
        .map_err(|source| CsvError::Csv {
            path: name.clone(),
            source,
        })?;
    let headers = r
        .headers()
        .map_err(|source| CsvError::Csv {
            path: name.clone(),
            source,
        })?
        .clone();
    let find = |column: &'static str| headers.iter().position(|h| h == column);
    let mut index = [0usize; 3];
    for (slot, column) in index.iter_mut().zip(["t", "x", "c"]) {
        *slot = find(column).ok_or(CsvError::MissingColumn {
            path: name.clone(),
            column,
        })?;
    }
    let lambda_index = find("lambda");

    let (mut t, mut x, mut c, mut lambda) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record.map_err(|source| CsvError::Csv {
            path: name.clone(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, CsvError> {
            let text = record.get(i).unwrap_or("");
            text.parse().map_err(|_| CsvError::Parse {
                path: name.clone(),
                line,
                column: headers.get(i).unwrap_or("?").to_string(),
                text: text.to_string(),
            })
        };
        t.push(field(index[0])?);
        x.push(field(index[1])?);
        c.push(field(index[2])?);
        if let Some(i) = lambda_index {
            lambda.push(field(i)?);
        }
    }
    let invalid = |e: octrl_core::Error| CsvError::Invalid {
        path: name.clone(),
        reason: e.to_string(),
    };
    let multiplier = match lambda_index {
        Some(_) => Some(MultiplierPath::new(t.clone(), lambda).map_err(invalid)?),
        None => None,
    };
    let path = AdmissiblePath::new(t, x, c).map_err(invalid)?;
    Ok(PathFile { path, multiplier })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TrajectoryTable {
        TrajectoryTable {
            t: vec![0.0, 0.5, 1.0],
            x: vec![1.0, 1.0 / 3.0, 2.0f64.sqrt()],
            c: vec![0.15, 1e-300, 123456.789],
            lambda: vec![1.0 / 0.15, f64::NAN, 0.1],
            euler_residual: vec![f64::NAN, -1.2345678901234567e-9, f64::NAN],
            tvc_proxy: vec![6.0, f64::INFINITY, 0.0],
        }
    }

    #[test]
    fn three_nodes_make_four_lines() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("toy.csv");
        write_trajectory_csv(&file, &toy()).unwrap();
        let text = fs::read_to_string(&file).unwrap();
        assert!(text.ends_with('\n'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "t,x,c,lambda,euler_residual,tvc_proxy");
    }

    #[test]
    fn values_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("toy.csv");
        let table = TrajectoryTable {
            lambda: vec![1.0 / 0.15, 7.0, 0.1],
            ..toy()
        };
        write_trajectory_csv(&file, &table).unwrap();
        let back = read_path_csv(&file).unwrap();
        for (a, b) in [
            (&back.path.t, &table.t),
            (&back.path.x, &table.x),
            (&back.path.c, &table.c),
        ] {
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        assert_eq!(back.multiplier.unwrap().lambda, table.lambda);
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("empty.csv");
        assert!(matches!(
            write_trajectory_csv(&file, &TrajectoryTable::default()),
            Err(CsvError::Empty(_))
        ));
        assert!(!file.exists());
    }

    #[test]
    fn ragged_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("ragged.csv");
        let mut table = toy();
        table.tvc_proxy.pop();
        assert!(matches!(
            write_trajectory_csv(&file, &table),
            Err(CsvError::Length {
                column: "tvc_proxy",
                ..
            })
        ));
        assert!(!file.exists());
    }

    #[test]
    fn reader_needs_t_x_c() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("p.csv");
        fs::write(&file, "t,c\n0,1\n1,1\n2,1\n").unwrap();
        assert!(matches!(
            read_path_csv(&file),
            Err(CsvError::MissingColumn { column: "x", .. })
        ));
        fs::write(&file, "c, x ,t,extra\n1,1,0,a\n1,1,1,b\n1,1,2,c\n").unwrap();
        let p = read_path_csv(&file).unwrap();
        assert_eq!(p.path.t, vec![0.0, 1.0, 2.0]);
        assert!(p.multiplier.is_none());
        fs::write(&file, "t,x,c\n0,1,1\n1,oops,1\n2,1,1\n").unwrap();
        assert!(matches!(read_path_csv(&file), Err(CsvError::Parse { line: 3, .. })));
    }
}
