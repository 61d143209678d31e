use std::path::Path;

use crate::tensor::Tensor;

use super::InterpError;

fn load_err(path: &Path, e: impl ToString) -> InterpError {
    InterpError::DataLoad {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, InterpError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| load_err(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| load_err(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(load_err(path, "no data rows"));
    }
    Ok(rows)
}

/// Numeric table with a header row: one element per row.
pub fn load_csv_table(path: &Path) -> Result<Tensor, InterpError> {
    let rows = read_rows(path)?;
    let width = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * width);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(load_err(
                path,
                format!("row {} has {} fields, expected {width}", i + 1, r.len()),
            ));
        }
        for v in r {
            data.push(
                v.parse::<f64>()
                    .map_err(|e| load_err(path, format!("row {}: {e}", i + 1)))?,
            );
        }
    }
    Tensor::new(vec![rows.len(), width], data).map_err(|e| load_err(path, e))
}

/// Table of element ids with a header row: one tuple per row.
pub fn load_csv_ids(path: &Path) -> Result<Vec<Vec<usize>>, InterpError> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|e| load_err(path, format!("row {}: {e}", i + 1)))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn reads_tables() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::File::create(&p)
            .unwrap()
            .write_all(b"a,b\n1.5, 2\n-3,4e-1\n")
            .unwrap();
        let t = load_csv_table(&p).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.5, 2.0, -3.0, 0.4]);
        let q = dir.path().join("ids.csv");
        std::fs::File::create(&q)
            .unwrap()
            .write_all(b"x,y\n0,3\n2,1\n")
            .unwrap();
        assert_eq!(load_csv_ids(&q).unwrap(), vec![vec![0, 3], vec![2, 1]]);
        assert!(load_csv_ids(&p).is_err());
        assert!(load_csv_table(&dir.path().join("missing.csv")).is_err());
    }
}
