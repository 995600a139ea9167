//! Balanced panel data model, validation, and delimiter-separated ingestion.
//!
//! The on-disk format is delimited text with a header row; columns are the
//! unit id, the period, the outcome, and one column per regressor. Periods
//! may carry arbitrary integer labels in the file; they are re-indexed to
//! `0..T_obs-1` internally, preserving ascending order.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A balanced panel of outcomes and regressors indexed by (unit, period).
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    n: usize,
    t_obs: usize,
    k: usize,
    /// Outcome, `n x t_obs`; column t is the period-t cross section.
    y: DMatrix<f64>,
    /// Regressors, one `n x t_obs` matrix per regressor column.
    x: Vec<DMatrix<f64>>,
    /// Original period labels from the source file, ascending.
    period_labels: Option<Vec<i64>>,
}

impl PanelDataset {
    /// Build a panel from an outcome matrix and per-regressor matrices.
    /// Shapes must agree; value-level checks live in [`PanelDataset::validate`].
    pub fn new(
        y: DMatrix<f64>,
        x: Vec<DMatrix<f64>>,
        period_labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = y.nrows();
        let t_obs = y.ncols();
        let k = x.len();
        for (j, xk) in x.iter().enumerate() {
            if xk.nrows() != n || xk.ncols() != t_obs {
                return Err(Error::InvalidConfig(format!(
                    "regressor {j} has shape {}x{}, expected {n}x{t_obs}",
                    xk.nrows(),
                    xk.ncols(),
                )));
            }
        }
        if let Some(labels) = &period_labels {
            if labels.len() != t_obs {
                return Err(Error::InvalidConfig(format!(
                    "period_labels has length {}, expected {t_obs}",
                    labels.len()
                )));
            }
        }
        Ok(Self {
            n,
            t_obs,
            k,
            y,
            x,
            period_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observed periods (periods are indexed `0..t_obs-1`).
    pub fn t_obs(&self) -> usize {
        self.t_obs
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Regressor `k` as an `n x t_obs` matrix.
    pub fn x(&self, k: usize) -> &DMatrix<f64> {
        &self.x[k]
    }

    pub fn period_labels(&self) -> Option<&[i64]> {
        self.period_labels.as_deref()
    }

    /// Check the dataset invariants, returning every violation found.
    /// An empty list means the panel is valid for estimation.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n < 1 {
            out.push(Violation::NoUnits);
        }
        if self.t_obs < 3 {
            out.push(Violation::TooFewPeriods { t_obs: self.t_obs });
        }
        if self.k < 1 {
            out.push(Violation::NoRegressors);
        }
        for t in 0..self.t_obs {
            for i in 0..self.n {
                if !self.y[(i, t)].is_finite() {
                    out.push(Violation::NonFiniteOutcome { unit: i, period: t });
                }
                for k in 0..self.k {
                    if !self.x[k][(i, t)].is_finite() {
                        out.push(Violation::NonFiniteValue {
                            unit: i,
                            period: t,
                            regressor: k,
                        });
                    }
                }
            }
        }
        out
    }
}

/// A named invariant violation with its offending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoUnits,
    NoRegressors,
    TooFewPeriods { t_obs: usize },
    NonFiniteOutcome { unit: usize, period: usize },
    NonFiniteValue { unit: usize, period: usize, regressor: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoUnits => write!(f, "panel has no units"),
            Violation::NoRegressors => write!(f, "panel has no regressors"),
            Violation::TooFewPeriods { t_obs } => {
                write!(f, "panel has {t_obs} periods, need at least 3")
            }
            Violation::NonFiniteOutcome { unit, period } => {
                write!(f, "non-finite outcome at unit {unit}, period {period}")
            }
            Violation::NonFiniteValue {
                unit,
                period,
                regressor,
            } => write!(
                f,
                "non-finite value at unit {unit}, period {period}, regressor {regressor}"
            ),
        }
    }
}

/// Column-name mapping for [`load_panel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSchema {
    pub unit_col: String,
    pub period_col: String,
    pub y_col: String,
    /// Regressor columns in order. Empty means: every remaining header
    /// column, in file order.
    pub x_cols: Vec<String>,
    /// Field delimiter, comma by default.
    pub delimiter: u8,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            unit_col: "unit".into(),
            period_col: "period".into(),
            y_col: "y".into(),
            x_cols: Vec::new(),
            delimiter: b',',
        }
    }
}

/// Load a balanced panel from a delimited text file.
///
/// Units are ordered by first appearance, periods sorted ascending, and the
/// result is rejected if any (unit, period) cell is missing or duplicated.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();

    let col_index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };

    let unit_idx = col_index(&schema.unit_col)?;
    let period_idx = col_index(&schema.period_col)?;
    let y_idx = col_index(&schema.y_col)?;

    let x_idx: Vec<usize> = if schema.x_cols.is_empty() {
        (0..headers.len())
            .filter(|&j| j != unit_idx && j != period_idx && j != y_idx)
            .collect()
    } else {
        schema
            .x_cols
            .iter()
            .map(|name| col_index(name))
            .collect::<Result<Vec<_>>>()?
    };
    let k = x_idx.len();

    struct Row {
        unit: String,
        period: i64,
        y: f64,
        x: Vec<f64>,
    }

    let mut rows = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let line = rec_no as u64 + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or(Error::Parse {
                line,
                message: format!("row has {} fields, expected at least {}", record.len(), idx + 1),
            })
        };
        let parse_f64 = |idx: usize| -> Result<f64> {
            let s = field(idx)?;
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("'{s}' is not a number"),
            })
        };
        let period = field(period_idx)?.parse::<i64>().map_err(|_| Error::Parse {
            line,
            message: format!("'{}' is not an integer period", record.get(period_idx).unwrap_or("")),
        })?;
        rows.push(Row {
            unit: field(unit_idx)?.to_string(),
            period,
            y: parse_f64(y_idx)?,
            x: x_idx.iter().map(|&j| parse_f64(j)).collect::<Result<Vec<_>>>()?,
        });
    }

    // Units by first appearance; periods sorted ascending.
    let mut unit_order: Vec<String> = Vec::new();
    let mut unit_map: HashMap<String, usize> = HashMap::new();
    for row in &rows {
        if !unit_map.contains_key(&row.unit) {
            unit_map.insert(row.unit.clone(), unit_order.len());
            unit_order.push(row.unit.clone());
        }
    }
    let mut periods: Vec<i64> = rows.iter().map(|r| r.period).collect();
    periods.sort_unstable();
    periods.dedup();
    let period_map: HashMap<i64, usize> = periods.iter().enumerate().map(|(j, &p)| (p, j)).collect();

    let n = unit_order.len();
    let t_obs = periods.len();
    if n == 0 || t_obs == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "file contains no data rows".into(),
        });
    }

    let mut y = DMatrix::from_element(n, t_obs, f64::NAN);
    let mut x = vec![DMatrix::from_element(n, t_obs, f64::NAN); k];
    let mut seen = vec![false; n * t_obs];

    for row in &rows {
        let i = unit_map[&row.unit];
        let t = period_map[&row.period];
        if seen[i * t_obs + t] {
            return Err(Error::DuplicateCell {
                unit: row.unit.clone(),
                period: row.period,
            });
        }
        seen[i * t_obs + t] = true;
        y[(i, t)] = row.y;
        for (kk, &v) in row.x.iter().enumerate() {
            x[kk][(i, t)] = v;
        }
    }

    for (i, unit) in unit_order.iter().enumerate() {
        let found = (0..t_obs).filter(|&t| seen[i * t_obs + t]).count();
        if found != t_obs {
            return Err(Error::UnbalancedPanel {
                unit: unit.clone(),
                found,
                expected: t_obs,
            });
        }
    }

    PanelDataset::new(y, x, Some(periods))
}

/// Write a panel in the format read by [`load_panel`], with values printed
/// to 17 significant digits so the round trip is bit exact.
pub fn write_panel(panel: &PanelDataset, path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let d = delimiter as char;
    write!(file, "unit{d}period{d}y")?;
    for k in 0..panel.k() {
        write!(file, "{d}x{}", k + 1)?;
    }
    writeln!(file)?;
    for i in 0..panel.n() {
        for t in 0..panel.t_obs() {
            let label = panel
                .period_labels()
                .map_or(t as i64, |labels| labels[t]);
            write!(file, "{i}{d}{label}{d}{:.16e}", panel.y()[(i, t)])?;
            for k in 0..panel.k() {
                write!(file, "{d}{:.16e}", panel.x(k)[(i, t)])?;
            }
            writeln!(file)?;
        }
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn smallest_valid_panel_loads() {
        let f = write_tmp(
            "unit,period,y,x1\n\
             a,0,1.0,0.5\na,1,2.0,0.6\na,2,3.0,0.7\n\
             b,0,4.0,0.8\nb,1,5.0,0.9\nb,2,6.0,1.0\n",
        );
        let p = load_panel(f.path(), &PanelSchema::default()).unwrap();
        assert_eq!((p.n(), p.t_obs(), p.k()), (2, 3, 1));
        assert_eq!(p.y()[(1, 2)], 6.0);
        assert_eq!(p.x(0)[(0, 1)], 0.6);
        assert!(p.validate().is_empty());
    }

    #[test]
    fn missing_row_is_unbalanced() {
        let f = write_tmp(
            "unit,period,y,x1\n\
             a,0,1.0,0.5\na,1,2.0,0.6\na,2,3.0,0.7\n\
             b,0,4.0,0.8\nb,2,6.0,1.0\n",
        );
        match load_panel(f.path(), &PanelSchema::default()) {
            Err(Error::UnbalancedPanel { unit, .. }) => assert_eq!(unit, "b"),
            other => panic!("expected UnbalancedPanel, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let f = write_tmp(
            "unit,period,y,x1\n\
             1,0,1.0,0.5\n1,0,1.5,0.6\n1,1,2.0,0.7\n",
        );
        match load_panel(f.path(), &PanelSchema::default()) {
            Err(Error::DuplicateCell { unit, period }) => {
                assert_eq!(unit, "1");
                assert_eq!(period, 0);
            }
            other => panic!("expected DuplicateCell, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number_is_parse_error() {
        let f = write_tmp("unit,period,y,x1\na,0,one,0.5\n");
        assert!(matches!(
            load_panel(f.path(), &PanelSchema::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn periods_reindexed_preserving_order() {
        let f = write_tmp(
            "unit,period,y,x1\n\
             a,1995,1.0,0.1\na,2000,2.0,0.2\na,1990,0.5,0.3\n",
        );
        let p = load_panel(f.path(), &PanelSchema::default()).unwrap();
        assert_eq!(p.period_labels(), Some(&[1990, 1995, 2000][..]));
        assert_eq!(p.y()[(0, 0)], 0.5);
        assert_eq!(p.y()[(0, 2)], 2.0);
    }

    #[test]
    fn validate_reports_short_and_nonfinite() {
        let y = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        let x = vec![DMatrix::from_row_slice(1, 2, &[0.1, 0.2])];
        let p = PanelDataset::new(y, x, None).unwrap();
        let v = p.validate();
        assert!(v.contains(&Violation::TooFewPeriods { t_obs: 2 }));
        assert!(v.contains(&Violation::NonFiniteOutcome { unit: 0, period: 1 }));
    }

    #[test]
    fn write_then_load_round_trips_exactly() {
        let y = DMatrix::from_fn(3, 4, |i, t| (i as f64 + 1.0) / (t as f64 + 3.0));
        let x = vec![
            DMatrix::from_fn(3, 4, |i, t| ((i * 7 + t) as f64).sin()),
            DMatrix::from_fn(3, 4, |i, t| 1.0 / (1.0 + (i + t) as f64)),
        ];
        let p = PanelDataset::new(y, x, None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_panel(&p, f.path(), b',').unwrap();
        let q = load_panel(f.path(), &PanelSchema::default()).unwrap();
        assert_eq!(q.n(), p.n());
        assert_eq!(q.t_obs(), p.t_obs());
        assert_eq!(q.k(), p.k());
        assert_eq!(q.y(), p.y());
        for k in 0..p.k() {
            assert_eq!(q.x(k), p.x(k));
        }
    }

    #[test]
    fn custom_delimiter_and_schema() {
        let f = write_tmp("id;t;out;a;b\nu;0;1;2;3\nu;1;4;5;6\nu;2;7;8;9\n");
        let schema = PanelSchema {
            unit_col: "id".into(),
            period_col: "t".into(),
            y_col: "out".into(),
            x_cols: vec!["b".into(), "a".into()],
            delimiter: b';',
        };
        let p = load_panel(f.path(), &schema).unwrap();
        assert_eq!(p.k(), 2);
        // x_cols order is honored: first regressor is column "b".
        assert_eq!(p.x(0)[(0, 0)], 3.0);
        assert_eq!(p.x(1)[(0, 0)], 2.0);
    }
}
