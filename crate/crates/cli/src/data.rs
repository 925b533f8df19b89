//! Long-format CSV: one row per (unit, condition) with columns
//! `unit_id, condition_id, x, n` followed by any covariate columns.

use std::collections::HashMap;
use std::path::Path;

use bbgp::model::{CovariateTable, Observation, UnitRecord};
use bbgp::RepeatedCountData;

use crate::error::{CliError, Result};
use crate::output::write_atomic;

const REQUIRED: [&str; 4] = ["unit_id", "condition_id", "x", "n"];

struct Row {
    line: u64,
    condition: String,
    x: u64,
    n: u64,
    covariates: Vec<String>,
}

/// Reads a dataset. Units and conditions are ordered by first appearance;
/// `unit_columns` name covariates that must be constant within a unit.
pub fn load_csv(path: &Path, unit_columns: &[String]) -> Result<(RepeatedCountData, CovariateTable)> {
    let load = |line: u64, message: String| CliError::Load {
        path: path.into(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| load(1, e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(CliError::Input {
            path: path.into(),
            message: "file is empty".into(),
        });
    }
    let mut index = [0usize; 4];
    for (k, name) in REQUIRED.iter().enumerate() {
        index[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| load(1, format!("missing required column `{name}`")))?;
    }
    let cov_idx: Vec<usize> = (0..headers.len()).filter(|i| !index.contains(i)).collect();
    let cov_names: Vec<String> = cov_idx.iter().map(|&i| headers[i].to_string()).collect();
    for c in unit_columns {
        if !cov_names.contains(c) {
            return Err(load(1, format!("missing covariate column `{c}`")));
        }
    }
    let unit_cov: Vec<usize> = unit_columns
        .iter()
        .map(|c| cov_names.iter().position(|n| n == c).expect("checked above"))
        .collect();

    let mut unit_order: Vec<String> = Vec::new();
    let mut units: HashMap<String, Vec<Row>> = HashMap::new();
    let mut conditions: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            load(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(index[k]).unwrap_or("");
        let count = |k: usize| {
            field(k).parse::<u64>().map_err(|_| {
                load(line, format!("`{}` = `{}` is not a nonnegative integer", REQUIRED[k], field(k)))
            })
        };
        let (x, n) = (count(2)?, count(3)?);
        if x > n {
            return Err(load(line, format!("x = {x} exceeds n = {n}")));
        }
        let unit = field(0).to_string();
        let condition = field(1).to_string();
        if unit.is_empty() || condition.is_empty() {
            return Err(load(line, "empty unit_id or condition_id".into()));
        }
        if !conditions.contains(&condition) {
            conditions.push(condition.clone());
        }
        let covariates: Vec<String> = cov_idx.iter().map(|&i| record.get(i).unwrap_or("").to_string()).collect();
        let rows = units.entry(unit.clone()).or_insert_with(|| {
            unit_order.push(unit.clone());
            Vec::new()
        });
        if let Some(prev) = rows.iter().find(|r| r.condition == condition) {
            return Err(load(
                line,
                format!("unit `{unit}` repeats condition `{condition}` (first on line {})", prev.line),
            ));
        }
        if let Some(first) = rows.first() {
            for &c in &unit_cov {
                if first.covariates[c] != covariates[c] {
                    return Err(load(
                        line,
                        format!(
                            "unit `{unit}`: unit-level covariate `{}` is `{}` here but `{}` on line {}",
                            cov_names[c], covariates[c], first.covariates[c], first.line
                        ),
                    ));
                }
            }
        }
        rows.push(Row {
            line,
            condition,
            x,
            n,
            covariates,
        });
    }
    if unit_order.is_empty() {
        return Err(CliError::Input {
            path: path.into(),
            message: "file has no data rows".into(),
        });
    }

    let p = conditions.len();
    let mut records = Vec::with_capacity(unit_order.len());
    let mut values = Vec::with_capacity(unit_order.len() * p);
    for unit in &unit_order {
        let rows = &units[unit];
        if rows.len() != p {
            let missing: Vec<&str> = conditions
                .iter()
                .filter(|c| !rows.iter().any(|r| &r.condition == *c))
                .map(String::as_str)
                .collect();
            let last = rows.last().map_or(0, |r| r.line);
            return Err(load(
                last,
                format!("unit `{unit}` has no rows for condition(s) {}", missing.join(", ")),
            ));
        }
        let mut observations = Vec::with_capacity(p);
        for c in &conditions {
            let r = rows.iter().find(|r| &r.condition == c).expect("complete unit");
            observations.push(Observation {
                x: r.x,
                n: r.n,
                condition_id: c.clone(),
            });
            values.push(r.covariates.clone());
        }
        records.push(UnitRecord {
            unit_id: unit.clone(),
            observations,
        });
    }
    let data = RepeatedCountData::new(conditions, records)?;
    Ok((data, CovariateTable { names: cov_names, values }))
}

/// Writes a dataset in the format read by [`load_csv`].
pub fn save_csv(path: &Path, data: &RepeatedCountData, covariates: &CovariateTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.extend(covariates.names.iter().map(String::as_str));
    let csv_err = |e: csv::Error| CliError::Spec(format!("csv encoding: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let p = data.p();
    for (g, unit) in data.units().iter().enumerate() {
        for (h, obs) in unit.observations.iter().enumerate() {
            let mut rec = vec![
                unit.unit_id.clone(),
                obs.condition_id.clone(),
                obs.x.to_string(),
                obs.n.to_string(),
            ];
            rec.extend(covariates.values[g * p + h].iter().cloned());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Spec(e.to_string()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn toy_file_round_trips() {
        let f = file("unit_id,condition_id,x,n,g\nu1,a,1,2,k\nu1,b,0,3,k\nu2,b,4,4,m\nu2,a,2,5,m\n");
        let (data, cov) = load_csv(f.path(), &["g".into()]).unwrap();
        assert_eq!((data.m(), data.p()), (2, 2));
        assert_eq!(data.successes(), vec![1, 0, 2, 4]);
        assert_eq!(data.trials(), vec![2, 3, 5, 4]);
        assert_eq!(cov.values[2], vec!["m".to_string()]);
        let out = tempfile::NamedTempFile::new().unwrap();
        save_csv(out.path(), &data, &cov).unwrap();
        let (again, cov2) = load_csv(out.path(), &["g".into()]).unwrap();
        assert_eq!(again, data);
        assert_eq!(cov2, cov);
    }

    #[test]
    fn x_above_n_names_the_line() {
        let f = file("unit_id,condition_id,x,n\nu1,a,1,2\nu1,b,0,3\nu2,a,1,1\nu2,b,0,0\nu3,a,2,2\nu3,b,5,3\n");
        let err = load_csv(f.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("line 7"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ragged_units_rejected() {
        let f = file("unit_id,condition_id,x,n\nu1,a,1,2\nu1,b,0,3\nu2,a,1,1\n");
        let err = load_csv(f.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("unit `u2` has no rows for condition(s) b"), "{err}");
    }

    #[test]
    fn inconsistent_unit_covariate() {
        let f = file("unit_id,condition_id,x,n,g\nu1,a,1,2,k\nu1,b,0,3,j\n");
        let err = load_csv(f.path(), &["g".into()]).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn malformed_and_empty() {
        let f = file("unit_id,condition_id,x,n\nu1,a,one,2\n");
        assert!(load_csv(f.path(), &[]).unwrap_err().to_string().contains("line 2"));
        let f = file("");
        assert_eq!(load_csv(f.path(), &[]).unwrap_err().exit_code(), 2);
    }
}
