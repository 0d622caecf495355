//! Per-sample metric rows, CSV persistence and per-level / per-specimen
//! aggregation.
//!
//! CSV layout (header line first, `.` decimal separator, floats written with
//! 17 significant digits so they reload bit-exactly):
//!
//! ```text
//! specimen,frame,level,iou_input,seg_iou,seg_accuracy,cd,cd_top,cd_bottom,f1,emd,snr_db
//! ```
//!
//! An empty field is an undefined value (for instance `cd_bottom` when the
//! ground truth has no occluded points, or `seg_*` when no predicted labels
//! were supplied). An infinite SNR is written as `inf`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub const METRIC_COLUMNS: [&str; 9] = [
    "iou_input",
    "seg_iou",
    "seg_accuracy",
    "cd",
    "cd_top",
    "cd_bottom",
    "f1",
    "emd",
    "snr_db",
];

pub const CSV_HEADER: &str =
    "specimen,frame,level,iou_input,seg_iou,seg_accuracy,cd,cd_top,cd_bottom,f1,emd,snr_db";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub specimen: String,
    pub frame: String,
    pub level: u32,
    pub iou_input: f64,
    pub seg_iou: Option<f64>,
    pub seg_accuracy: Option<f64>,
    pub cd: f64,
    pub cd_top: Option<f64>,
    pub cd_bottom: Option<f64>,
    pub f1: f64,
    pub emd: f64,
    pub snr_db: f64,
}

impl MetricsRow {
    /// Value of a metric column; `None` when undefined.
    pub fn metric(&self, column: &str) -> Option<f64> {
        match column {
            "iou_input" => Some(self.iou_input),
            "seg_iou" => self.seg_iou,
            "seg_accuracy" => self.seg_accuracy,
            "cd" => Some(self.cd),
            "cd_top" => self.cd_top,
            "cd_bottom" => self.cd_bottom,
            "f1" => Some(self.f1),
            "emd" => Some(self.emd),
            "snr_db" => Some(self.snr_db),
            _ => None,
        }
    }

    fn sort_key(&self) -> (&str, &str, u32) {
        (&self.specimen, &self.frame, self.level)
    }
}

/// Formats a float with 17 significant digits; `inf`/`-inf`/`nan` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!(
            "report line {line}: column {column} is not a number: {field:?}"
        ))
    })
}

fn parse_opt(field: &str, line: usize, column: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line, column).map(Some)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn new(mut rows: Vec<MetricsRow>) -> Self {
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Self { rows }
    }

    pub fn merge(reports: impl IntoIterator<Item = MetricsReport>) -> Self {
        Self::new(reports.into_iter().flat_map(|r| r.rows).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let fields = [
                r.specimen.clone(),
                r.frame.clone(),
                r.level.to_string(),
                fmt_f64(r.iou_input),
                fmt_opt(r.seg_iou),
                fmt_opt(r.seg_accuracy),
                fmt_f64(r.cd),
                fmt_opt(r.cd_top),
                fmt_opt(r.cd_bottom),
                fmt_f64(r.f1),
                fmt_f64(r.emd),
                fmt_f64(r.snr_db),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == CSV_HEADER => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "report header mismatch: expected {CSV_HEADER:?}, got {:?}",
                    other.map(|(_, h)| h)
                )))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 12 {
                return Err(Error::InvalidInput(format!(
                    "report line {line_no}: expected 12 fields, got {}",
                    f.len()
                )));
            }
            rows.push(MetricsRow {
                specimen: f[0].to_string(),
                frame: f[1].to_string(),
                level: f[2].parse().map_err(|_| {
                    Error::InvalidInput(format!("report line {line_no}: bad level {:?}", f[2]))
                })?,
                iou_input: parse_f64(f[3], line_no, "iou_input")?,
                seg_iou: parse_opt(f[4], line_no, "seg_iou")?,
                seg_accuracy: parse_opt(f[5], line_no, "seg_accuracy")?,
                cd: parse_f64(f[6], line_no, "cd")?,
                cd_top: parse_opt(f[7], line_no, "cd_top")?,
                cd_bottom: parse_opt(f[8], line_no, "cd_bottom")?,
                f1: parse_f64(f[9], line_no, "f1")?,
                emd: parse_f64(f[10], line_no, "emd")?,
                snr_db: parse_f64(f[11], line_no, "snr_db")?,
            });
        }
        Ok(Self::new(rows))
    }

    pub fn aggregate(&self) -> ReportSummary {
        let mut per_specimen: BTreeMap<String, Vec<&MetricsRow>> = BTreeMap::new();
        let mut per_level: BTreeMap<String, Vec<&MetricsRow>> = BTreeMap::new();
        for r in &self.rows {
            per_specimen.entry(r.specimen.clone()).or_default().push(r);
            per_level.entry(format!("L{}", r.level)).or_default().push(r);
        }
        let all: Vec<&MetricsRow> = self.rows.iter().collect();
        ReportSummary {
            overall: Aggregate::of(&all),
            per_specimen: per_specimen
                .into_iter()
                .map(|(k, v)| (k, Aggregate::of(&v)))
                .collect(),
            per_level: per_level
                .into_iter()
                .map(|(k, v)| (k, Aggregate::of(&v)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAggregate {
    /// Arithmetic mean over finite values; `None` when there are none.
    pub mean: Option<f64>,
    pub count: usize,
    pub undefined: usize,
    /// Rows with an infinite value (perfect SNR); left out of the mean.
    pub infinite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub rows: usize,
    pub metrics: BTreeMap<String, MetricAggregate>,
}

impl Aggregate {
    fn of(rows: &[&MetricsRow]) -> Self {
        let metrics = METRIC_COLUMNS
            .iter()
            .map(|&c| {
                let mut vals = Vec::new();
                let (mut undefined, mut infinite) = (0, 0);
                for r in rows {
                    match r.metric(c) {
                        None => undefined += 1,
                        Some(v) if v.is_infinite() => infinite += 1,
                        Some(v) if v.is_nan() => undefined += 1,
                        Some(v) => vals.push(v),
                    }
                }
                let agg = MetricAggregate {
                    mean: super::stats::mean(&vals),
                    count: vals.len(),
                    undefined,
                    infinite,
                };
                (c.to_string(), agg)
            })
            .collect();
        Self {
            rows: rows.len(),
            metrics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub overall: Aggregate,
    pub per_specimen: BTreeMap<String, Aggregate>,
    pub per_level: BTreeMap<String, Aggregate>,
}

impl ReportSummary {
    /// Table-style CSV: one line per group with the mean of every metric.
    pub fn to_csv(&self) -> String {
        let mut out = format!("scope,group,rows,{},snr_inf_count\n", METRIC_COLUMNS.join(","));
        let mut line = |scope: &str, group: &str, a: &Aggregate| {
            let means: Vec<String> = METRIC_COLUMNS
                .iter()
                .map(|c| fmt_opt(a.metrics[*c].mean))
                .collect();
            out.push_str(&format!(
                "{scope},{group},{},{},{}\n",
                a.rows,
                means.join(","),
                a.metrics["snr_db"].infinite
            ));
        };
        for (k, a) in &self.per_level {
            line("level", k, a);
        }
        for (k, a) in &self.per_specimen {
            line("specimen", k, a);
        }
        line("overall", "all", &self.overall);
        out
    }
}
