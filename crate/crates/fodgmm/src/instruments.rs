//! Per-period instrument construction, projection utilities, and leverage.
//!
//! Instruments for transformed equation `t` are lags of the outcome and of
//! the regressors, assembled per a declarative plan. The block-diagonal
//! stacked instrument matrix is never materialized: every estimator works
//! with the per-period blocks `Z_t`, which is algebraically equivalent and
//! far cheaper.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Relative tolerance for the instrument rank check: the smallest diagonal
/// magnitude of the rank-revealing factor must exceed this fraction of the
/// largest.
pub const RANK_RTOL: f64 = 1e-10;

/// How the estimation-sample regressor vector is assembled from the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorLayout {
    /// `x'_{i,t} = (y_{i,t-1}, x_{i,t,1}, ..., x_{i,t,K})`: lagged outcome
    /// plus the current value of each panel regressor.
    ArWithRegressors,
    /// `x'_{i,t} = (y_{i,t-1})` only; instruments draw on lags of y alone.
    PureAr,
}

impl RegressorLayout {
    /// Number of regressors in the estimation equation.
    pub fn k_eff(&self, panel_k: usize) -> usize {
        match self {
            RegressorLayout::ArWithRegressors => 1 + panel_k,
            RegressorLayout::PureAr => 1,
        }
    }
}

/// Declarative rule mapping each equation index `t` to its instrument set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstrumentPlan {
    /// Up to the two most recent outcome lags plus, per regressor, the
    /// current value and up to two lags: `q_1 = 3`, `q_t = 5` (K = 1).
    Limited,
    /// Every available outcome lag and regressor lag: `q_t = 3 + 2(t-1)`
    /// for K = 1, growing linearly with `t`.
    AllAvailable,
    /// Budgeted plan `q_t = min(available_t, ceil((t+1)^alpha) * base)`,
    /// keeping the most recent lags first. `alpha = 0` caps the count at
    /// `base`; `alpha = 1` recovers the all-available plan.
    PowerLaw { alpha: f64, base: usize },
    /// Explicit per-variable lag-depth ranges: outcome depths
    /// `y_lag_min..=y_lag_max` (depth d uses `y_{t-d}`) and regressor depths
    /// `x_lag_min..=x_lag_max` (depth 0 is the current value), both clipped
    /// to availability.
    Custom {
        y_lag_min: usize,
        y_lag_max: usize,
        x_lag_min: usize,
        x_lag_max: usize,
    },
}

/// One instrument column: an outcome or regressor value at a fixed period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Outcome { period: usize },
    Regressor { k: usize, period: usize },
}

impl InstrumentPlan {
    /// The instrument columns this plan selects at equation index `t`
    /// (1-based), in canonical order: outcome lags by ascending period, then
    /// each regressor's lags by ascending period.
    fn columns(&self, layout: RegressorLayout, panel_k: usize, t: usize) -> Vec<Column> {
        let k = match layout {
            RegressorLayout::ArWithRegressors => panel_k,
            RegressorLayout::PureAr => 0,
        };
        let select = |y_range: (usize, usize), x_range: (usize, usize)| -> Vec<Column> {
            let mut cols = Vec::new();
            let (y_lo, y_hi) = y_range;
            let (x_lo, x_hi) = x_range;
            for d in (y_lo..=y_hi.min(t)).rev() {
                cols.push(Column::Outcome { period: t - d });
            }
            for kk in 0..k {
                for d in (x_lo..=x_hi.min(t)).rev() {
                    cols.push(Column::Regressor { k: kk, period: t - d });
                }
            }
            cols
        };
        match self {
            InstrumentPlan::Limited => select((1, 2), (0, 2)),
            InstrumentPlan::AllAvailable => select((1, t), (0, t)),
            InstrumentPlan::Custom {
                y_lag_min,
                y_lag_max,
                x_lag_min,
                x_lag_max,
            } => select((*y_lag_min, *y_lag_max), (*x_lag_min, *x_lag_max)),
            InstrumentPlan::PowerLaw { alpha, base } => {
                let budget = ((t as f64 + 1.0).powf(*alpha)).ceil() as usize * base;
                // Most recent lags first: depth 0 regressors, then per depth
                // the outcome lag followed by the regressor lags.
                let mut pool = Vec::new();
                for kk in 0..k {
                    pool.push(Column::Regressor { k: kk, period: t });
                }
                for d in 1..=t {
                    pool.push(Column::Outcome { period: t - d });
                    for kk in 0..k {
                        pool.push(Column::Regressor { k: kk, period: t - d });
                    }
                }
                pool.truncate(budget);
                // Canonical ordering of the selected set.
                let mut cols: Vec<Column> = pool;
                cols.sort_by_key(|c| match *c {
                    Column::Outcome { period } => (0usize, 0usize, period),
                    Column::Regressor { k, period } => (1, k, period),
                });
                cols
            }
        }
    }

    /// Instrument count at equation index `t` for the given layout.
    pub fn q_at(&self, layout: RegressorLayout, panel_k: usize, t: usize) -> usize {
        self.columns(layout, panel_k, t).len()
    }
}

/// Check a plan against the sample: `q_t <= n` and `q_t >= K` must hold for
/// every equation index `t = 1..=t_eff` (the order condition and the rank
/// feasibility of `Z_t' Z_t`). The first violating `t` is reported.
pub fn check_feasible(
    plan: &InstrumentPlan,
    layout: RegressorLayout,
    panel_k: usize,
    n: usize,
    t_eff: usize,
) -> Result<()> {
    let k_eff = layout.k_eff(panel_k);
    for t in 1..=t_eff {
        let q = plan.q_at(layout, panel_k, t);
        if q > n {
            return Err(Error::InfeasiblePlan { t, q, n });
        }
        if q < k_eff {
            return Err(Error::UnderIdentified { t, q, k: k_eff });
        }
    }
    Ok(())
}

/// Realized per-period instrument matrices for equations `t = 1..t_eff-1`,
/// each checked for full column rank, with the orthonormal column basis of
/// each block cached for projections.
#[derive(Debug, Clone)]
pub struct InstrumentMatrices {
    z: Vec<DMatrix<f64>>,
    basis: Vec<DMatrix<f64>>,
    q: Vec<usize>,
    q_star: usize,
}

impl InstrumentMatrices {
    /// Number of instrumented equations (`t_eff - 1`).
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `Z_t` for equation `t = idx + 1`.
    pub fn z(&self, idx: usize) -> &DMatrix<f64> {
        &self.z[idx]
    }

    /// Orthonormal basis `Q_t` of the column space of `Z_t`; `P_t V` equals
    /// `Q_t (Q_t' V)`.
    pub fn basis(&self, idx: usize) -> &DMatrix<f64> {
        &self.basis[idx]
    }

    pub fn q(&self) -> &[usize] {
        &self.q
    }

    /// Largest per-period instrument count actually used.
    pub fn q_star(&self) -> usize {
        self.q_star
    }
}

/// Orthonormal basis of the columns of `z` via rank-revealing QR; errors if
/// the numerical rank falls short of the column count.
fn orthonormal_basis(z: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    let q_cols = z.ncols();
    let qr = z.clone().col_piv_qr();
    let r = qr.r();
    let mut min_d = f64::INFINITY;
    let mut max_d = 0.0f64;
    for j in 0..q_cols {
        let d = r[(j, j)].abs();
        min_d = min_d.min(d);
        max_d = max_d.max(d);
    }
    if !(min_d > RANK_RTOL * max_d) || max_d == 0.0 {
        return Err(Error::RankDeficient { t });
    }
    Ok(qr.q())
}

/// Build the instrument matrices for a panel under a plan and layout.
pub fn build_instruments(
    panel: &PanelDataset,
    plan: &InstrumentPlan,
    layout: RegressorLayout,
) -> Result<InstrumentMatrices> {
    let t_obs = panel.t_obs();
    if t_obs < 3 {
        return Err(Error::TooFewPeriods { have: t_obs, need: 3 });
    }
    let t_eff = t_obs - 1;
    let n = panel.n();
    check_feasible(plan, layout, panel.k(), n, t_eff)?;

    let mut z = Vec::with_capacity(t_eff - 1);
    let mut basis = Vec::with_capacity(t_eff - 1);
    let mut q = Vec::with_capacity(t_eff - 1);
    for t in 1..t_eff {
        let cols = plan.columns(layout, panel.k(), t);
        let zt = DMatrix::from_fn(n, cols.len(), |i, j| match cols[j] {
            Column::Outcome { period } => panel.y()[(i, period)],
            Column::Regressor { k, period } => panel.x(k)[(i, period)],
        });
        basis.push(orthonormal_basis(&zt, t)?);
        q.push(zt.ncols());
        z.push(zt);
    }
    let q_star = q.iter().copied().max().unwrap_or(0);
    Ok(InstrumentMatrices { z, basis, q, q_star })
}

/// `P V` where `P = Z (Z'Z)^{-1} Z'`, computed from an orthonormal basis of
/// `Z` rather than any explicit inverse.
pub fn project(z: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let basis = orthonormal_basis(z, 0)?;
    Ok(&basis * (basis.transpose() * v))
}

/// Leverage values `n * z_i' (Z'Z)^{-1} z_i`, one per cross-section row.
/// Their mean equals the column count of `Z` (trace of the projection).
pub fn leverage(z: &DMatrix<f64>) -> Result<Vec<f64>> {
    let basis = orthonormal_basis(z, 0)?;
    let n = z.nrows();
    Ok((0..n)
        .map(|i| n as f64 * basis.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect())
}
