use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::metrics::report::{fmt_f64, MetricsReport, METRIC_COLUMNS};
use crate::metrics::pearson;

/// Variables besides the metric columns.
pub const FACTOR_COLUMNS: [&str; 2] = ["specimen", "level"];

/// Pairwise Pearson coefficients; `None` marks an undefined cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        self.values[i][j]
    }

    /// Square CSV with a leading name column; undefined cells are empty.
    pub fn to_csv(&self) -> String {
        let mut s = format!("variable,{}\n", self.columns.join(","));
        for (name, row) in self.columns.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| v.map(fmt_f64).unwrap_or_default()).collect();
            s.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        s
    }
}

/// Column values per row (`None` when undefined or non-finite). Specimen
/// ids that parse as numbers are used as such; otherwise they are ranked.
fn column(report: &MetricsReport, name: &str) -> Result<Vec<Option<f64>>> {
    let rows = &report.rows;
    match name {
        "specimen" => {
            let numeric: Option<Vec<f64>> = rows.iter().map(|r| r.specimen.parse::<f64>().ok()).collect();
            Ok(match numeric {
                Some(v) => v.into_iter().map(Some).collect(),
                None => {
                    let ids: BTreeSet<&str> = rows.iter().map(|r| r.specimen.as_str()).collect();
                    let ids: Vec<&str> = ids.into_iter().collect();
                    rows.iter()
                        .map(|r| ids.iter().position(|s| *s == r.specimen).map(|p| p as f64))
                        .collect()
                }
            })
        }
        "level" => Ok(rows.iter().map(|r| Some(r.level as f64)).collect()),
        m if METRIC_COLUMNS.contains(&m) => Ok(rows
            .iter()
            .map(|r| r.metric(m).filter(|v| v.is_finite()))
            .collect()),
        other => Err(Error::InvalidInput(format!("unknown correlation variable '{other}'"))),
    }
}

/// Pearson matrix over the chosen variables, using for each pair the rows
/// where both values are defined. Pairs with fewer than two such rows or
/// zero variance are undefined; a column with zero variance therefore has
/// an undefined diagonal.
pub fn correlation_matrix(report: &MetricsReport, variables: &[&str]) -> Result<CorrelationMatrix> {
    if report.rows.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "correlation needs at least 2 rows, got {}",
            report.rows.len()
        )));
    }
    let cols = variables
        .iter()
        .map(|v| column(report, v))
        .collect::<Result<Vec<_>>>()?;
    let k = cols.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let (x, y): (Vec<f64>, Vec<f64>) = cols[i]
                .iter()
                .zip(&cols[j])
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            let r = if x.len() >= 2 { pearson(&x, &y).ok() } else { None };
            let r = if i == j { r.map(|_| 1.0) } else { r };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        columns: variables.iter().map(|s| s.to_string()).collect(),
        values,
    })
}

/// Factor columns followed by every metric column.
pub fn default_variables() -> Vec<&'static str> {
    FACTOR_COLUMNS.iter().chain(METRIC_COLUMNS.iter()).copied().collect()
}
