use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use super::{PanelDataset, PanelLabels};
use crate::error::{Error, Result};

/// Column mapping for long-format panel files (one row per individual-period).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id: String,
    pub period: String,
    pub y: String,
    pub x: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { id: "id".into(), period: "period".into(), y: "y".into(), x: Vec::new() }
    }
}

/// Loads a long-format CSV file into a validated [`PanelDataset`].
///
/// The first `lag_order` periods supply the pre-sample `y` values; regressors
/// observed in those periods are dropped.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, lag_order: usize) -> Result<PanelDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, lag_order)
}

struct Row {
    period: i64,
    y: f64,
    x: Vec<f64>,
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, lag_order: usize) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { row: 1, message: e.to_string() })?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col(&schema.id)?;
    let period_col = col(&schema.period)?;
    let y_col = col(&schema.y)?;
    let x_cols = schema.x.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { row: line, message: e.to_string() })?;
        let cell = |idx: usize, name: &str| -> Result<&str> {
            match rec.get(idx) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Parse { row: line, message: format!("missing value in column `{name}`") }),
            }
        };
        let num = |idx: usize, name: &str| -> Result<f64> {
            let s = cell(idx, name)?;
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse { row: line, message: format!("non-numeric value `{s}` in column `{name}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: line, message: format!("non-finite value in column `{name}`") });
            }
            Ok(v)
        };
        let id = cell(id_col, &schema.id)?.to_string();
        let period_str = cell(period_col, &schema.period)?;
        let period: i64 = period_str.parse().map_err(|_| Error::Parse {
            row: line,
            message: format!("period `{period_str}` is not an integer"),
        })?;
        let y = num(y_col, &schema.y)?;
        let x = x_cols.iter().zip(&schema.x).map(|(&c, n)| num(c, n)).collect::<Result<Vec<_>>>()?;
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(Row { period, y, x });
    }
    if order.is_empty() {
        return Err(Error::Invalid("no data rows".into()));
    }

    let lo = groups.values().flatten().map(|r| r.period).min().unwrap();
    let hi = groups.values().flatten().map(|r| r.period).max().unwrap();
    let n_all = (hi - lo + 1) as usize;

    let mut offenders = Vec::new();
    for id in &order {
        let rows = groups.get_mut(id).unwrap();
        rows.sort_by_key(|r| r.period);
        let complete = rows.len() == n_all && rows.iter().enumerate().all(|(k, r)| r.period == lo + k as i64);
        if !complete {
            offenders.push(id.clone());
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Unbalanced { individuals: offenders });
    }
    if n_all < lag_order + 2 {
        return Err(Error::InsufficientPeriods { found: n_all, required: lag_order + 2 });
    }

    let t = n_all - lag_order;
    let k = schema.x.len();
    let mut ys = Vec::with_capacity(order.len());
    let mut xs = Vec::with_capacity(order.len());
    for id in &order {
        let rows = &groups[id];
        ys.push(rows.iter().map(|r| r.y).collect());
        let mut xm = DMatrix::<f64>::zeros(t, k);
        for (s, r) in rows[lag_order..].iter().enumerate() {
            for (c, v) in r.x.iter().enumerate() {
                xm[(s, c)] = *v;
            }
        }
        xs.push(xm);
    }
    let labels = PanelLabels { individuals: order, periods: (lo..=hi).collect() };
    PanelDataset::new(ys, xs, lag_order, Some(labels))
}
