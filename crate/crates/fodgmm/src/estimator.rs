//! GMM estimators on transformed panels, standard errors, confidence
//! intervals, and bias diagnostics.
//!
//! Three estimators are provided. The forward-orthogonal-deviations (FOD)
//! estimator solves, period by period,
//!
//! ```text
//! beta_hat = (sum_t Xdd_t' P_t Xdd_t)^{-1} sum_t Xdd_t' P_t ydd_t
//! ```
//!
//! with `P_t` the projection onto the period-`t` instruments. The
//! first-difference (FD) estimator weights stacked instrument moments by the
//! inverse of `sum_i Z_di' G Z_di`, whose block-tridiagonal structure is
//! exploited. With all available instruments the two coincide, which is the
//! efficient estimator under conditional homoskedasticity.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::SimulatedPanel;
use crate::error::{Error, Result};
use crate::instruments::{build_instruments, InstrumentPlan, RegressorLayout};
use crate::linalg::BlockTridiagChol;
use crate::panel::PanelDataset;
use crate::stats::inv_norm_cdf;
use crate::transform::{fd_series, fod_series};

/// Which estimator produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Fod,
    Fd,
    Efficient,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Fod => write!(f, "fod"),
            EstimatorKind::Fd => write!(f, "fd"),
            EstimatorKind::Efficient => write!(f, "efficient"),
        }
    }
}

/// A fitted GMM estimate with its homoskedastic variance matrix.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub beta_hat: DVector<f64>,
    /// Estimated variance of `beta_hat` (not scaled by nT).
    pub vcov: DMatrix<f64>,
    /// Square roots of the `vcov` diagonal.
    pub se: DVector<f64>,
    /// Residual variance estimate.
    pub sigma2_hat: f64,
    pub estimator: EstimatorKind,
    /// Largest per-period instrument count used.
    pub q_star: usize,
    pub n: usize,
    /// Effective time length: transformed equations + 1.
    pub t_eff: usize,
}

/// Per-coefficient confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Finite-sample counterparts of the bias decomposition: the scaled moment
/// matrix `A`, the scaled instrument-error moment `b`, and `theta = A^{-1} b`
/// (a single-replication draw; averaging draws across replications estimates
/// the expectation version).
#[derive(Debug, Clone)]
pub struct BiasDiagnostics {
    pub a_nt: DMatrix<f64>,
    pub b_nt: DVector<f64>,
    pub theta_nt: DVector<f64>,
}

/// Raw estimation-sample series: outcome and regressors for equation indices
/// `t = 1..t_eff` over panel periods `0..t_obs-1`, before any transform.
struct EquationSample {
    outcome: DMatrix<f64>,
    regressors: Vec<DMatrix<f64>>,
}

fn equation_sample(panel: &PanelDataset, layout: RegressorLayout) -> Result<EquationSample> {
    let t_obs = panel.t_obs();
    if t_obs < 3 {
        return Err(Error::TooFewPeriods { have: t_obs, need: 3 });
    }
    let n = panel.n();
    let t_eff = t_obs - 1;

    let outcome = DMatrix::from_fn(n, t_eff, |i, idx| panel.y()[(i, idx + 1)]);
    let mut regressors = Vec::new();
    // Lagged outcome is always the first regressor.
    regressors.push(DMatrix::from_fn(n, t_eff, |i, idx| panel.y()[(i, idx)]));
    if layout == RegressorLayout::ArWithRegressors {
        for k in 0..panel.k() {
            regressors.push(DMatrix::from_fn(n, t_eff, |i, idx| panel.x(k)[(i, idx + 1)]));
        }
    }
    Ok(EquationSample { outcome, regressors })
}

/// Assemble the per-equation regressor matrix `n x k` from per-regressor
/// transformed series at equation offset `idx`.
fn regressor_block(series: &[DMatrix<f64>], idx: usize) -> DMatrix<f64> {
    let n = series[0].nrows();
    DMatrix::from_fn(n, series.len(), |i, j| series[j][(i, idx)])
}

struct FodSolution {
    fit: GmmFit,
    /// `A^{-1} b` scaled as `sqrt(nT) (beta_hat - beta)`; present when true
    /// errors were supplied.
    theta: Option<DVector<f64>>,
    moment: DMatrix<f64>,
}

/// Shared FOD path. `errors_eq`, when present, holds the true errors over
/// the equation sample (`n x t_eff`, column `t-1` for equation `t`) and
/// switches on the bias diagnostics.
fn solve_fod(
    panel: &PanelDataset,
    plan: &InstrumentPlan,
    layout: RegressorLayout,
    tag: EstimatorKind,
    errors_eq: Option<&DMatrix<f64>>,
) -> Result<FodSolution> {
    let eq = equation_sample(panel, layout)?;
    let iv = build_instruments(panel, plan, layout)?;
    let n = panel.n();
    let t_eff = eq.outcome.ncols();
    let k = eq.regressors.len();
    let m = t_eff - 1;

    let y_dd = fod_series(&eq.outcome)?;
    let x_dd = eq
        .regressors
        .iter()
        .map(fod_series)
        .collect::<Result<Vec<_>>>()?;
    let v_dd = errors_eq.map(fod_series).transpose()?;

    let mut s_xx = DMatrix::zeros(k, k);
    let mut s_xy = DVector::zeros(k);
    let mut s_xv = DVector::zeros(k);
    let mut blocks = Vec::with_capacity(m);
    for idx in 0..m {
        let xt = regressor_block(&x_dd, idx);
        let basis = iv.basis(idx);
        let qx = basis.transpose() * &xt;
        let qy = basis.transpose() * y_dd.column(idx);
        s_xx += qx.transpose() * &qx;
        s_xy += qx.transpose() * qy;
        if let Some(v) = &v_dd {
            let qv = basis.transpose() * v.column(idx);
            s_xv += qx.transpose() * qv;
        }
        blocks.push(xt);
    }

    let chol = Cholesky::new(s_xx.clone()).ok_or(Error::SingularMoment)?;
    let beta = chol.solve(&s_xy);

    let mut rss = 0.0;
    for idx in 0..m {
        let resid = y_dd.column(idx) - &blocks[idx] * &beta;
        rss += resid.norm_squared();
    }
    let sigma2 = rss / (n as f64 * m as f64);
    let vcov = chol.inverse() * sigma2;
    let se = DVector::from_fn(k, |j, _| vcov[(j, j)].max(0.0).sqrt());

    let theta = v_dd.map(|_| {
        // sqrt(nT) * (S_xx)^{-1} S_xv  ==  A^{-1} b with A = S_xx/(nT),
        // b = S_xv/sqrt(nT).
        chol.solve(&s_xv) * (n as f64 * t_eff as f64).sqrt()
    });

    Ok(FodSolution {
        fit: GmmFit {
            beta_hat: beta,
            vcov,
            se,
            sigma2_hat: sigma2,
            estimator: tag,
            q_star: iv.q_star(),
            n,
            t_eff,
        },
        theta,
        moment: s_xx,
    })
}

/// FOD GMM fit under the given instrument plan and regressor layout.
pub fn fit_fod(
    panel: &PanelDataset,
    plan: &InstrumentPlan,
    layout: RegressorLayout,
) -> Result<GmmFit> {
    Ok(solve_fod(panel, plan, layout, EstimatorKind::Fod, None)?.fit)
}

/// Efficient GMM: the FOD estimator with every available instrument.
/// Requires `n >= q_t` throughout the equation range.
pub fn fit_efficient(panel: &PanelDataset) -> Result<GmmFit> {
    Ok(solve_fod(
        panel,
        &InstrumentPlan::AllAvailable,
        RegressorLayout::ArWithRegressors,
        EstimatorKind::Efficient,
        None,
    )?
    .fit)
}

/// First-difference GMM fit weighted by `(sum_i Z_di' G Z_di)^{-1}`,
/// assembled and solved as a block-tridiagonal system.
pub fn fit_fd(
    panel: &PanelDataset,
    plan: &InstrumentPlan,
    layout: RegressorLayout,
) -> Result<GmmFit> {
    let eq = equation_sample(panel, layout)?;
    let iv = build_instruments(panel, plan, layout)?;
    let n = panel.n();
    let t_eff = eq.outcome.ncols();
    let k = eq.regressors.len();
    let m = t_eff - 1;

    let y_td = fd_series(&eq.outcome)?;
    let x_td = eq
        .regressors
        .iter()
        .map(fd_series)
        .collect::<Result<Vec<_>>>()?;

    // W = sum_i Z_di' G Z_di is block tridiagonal: diagonal blocks
    // 2 Z_t'Z_t, off-diagonal blocks -Z_t'Z_{t+1}.
    let mut diag = Vec::with_capacity(m);
    let mut superdiag = Vec::with_capacity(m.saturating_sub(1));
    let mut m_x = Vec::with_capacity(m);
    let mut m_y = Vec::with_capacity(m);
    for idx in 0..m {
        let zt = iv.z(idx);
        diag.push(zt.transpose() * zt * 2.0);
        if idx + 1 < m {
            superdiag.push(-(zt.transpose() * iv.z(idx + 1)));
        }
        let xt = regressor_block(&x_td, idx);
        m_x.push(zt.transpose() * &xt);
        m_y.push(zt.transpose() * y_td.columns(idx, 1));
    }

    let weight = BlockTridiagChol::factor(&diag, &superdiag).ok_or(Error::SingularWeight)?;
    let w_inv_mx = weight.solve_blocks(&m_x);
    let w_inv_my = weight.solve_blocks(&m_y);

    let mut s = DMatrix::zeros(k, k);
    let mut s_y = DVector::zeros(k);
    for idx in 0..m {
        s += m_x[idx].transpose() * &w_inv_mx[idx];
        s_y += m_x[idx].transpose() * w_inv_my[idx].column(0);
    }

    let chol = Cholesky::new(s.clone()).ok_or(Error::SingularMoment)?;
    let beta = chol.solve(&s_y);

    let mut rss = 0.0;
    for idx in 0..m {
        let xt = regressor_block(&x_td, idx);
        let resid = y_td.column(idx) - xt * &beta;
        rss += resid.norm_squared();
    }
    let sigma2 = rss / (2.0 * n as f64 * m as f64);
    let vcov = chol.inverse() * sigma2;
    let se = DVector::from_fn(k, |j, _| vcov[(j, j)].max(0.0).sqrt());

    Ok(GmmFit {
        beta_hat: beta,
        vcov,
        se,
        sigma2_hat: sigma2,
        estimator: EstimatorKind::Fd,
        q_star: iv.q_star(),
        n,
        t_eff,
    })
}

/// Two-sided confidence interval per coefficient at the given level, using
/// the normal quantile at `(1 + level)/2`.
///
/// `level` must lie strictly in (0, 1).
pub fn confidence_interval(fit: &GmmFit, level: f64) -> Vec<ConfidenceInterval> {
    assert!(level > 0.0 && level < 1.0, "level must lie in (0,1)");
    let z = inv_norm_cdf((1.0 + level) / 2.0);
    (0..fit.beta_hat.len())
        .map(|kk| ConfidenceInterval {
            lower: fit.beta_hat[kk] - z * fit.se[kk],
            upper: fit.beta_hat[kk] + z * fit.se[kk],
        })
        .collect()
}

/// Bias decomposition draw for a simulated panel, using the stored true
/// errors: `A = (1/nT) sum_t Xdd_t' P_t Xdd_t`,
/// `b = (1/sqrt(nT)) sum_t Xdd_t' P_t vdd_t`, `theta = A^{-1} b`.
pub fn bias_diagnostics(
    sim: &SimulatedPanel,
    plan: &InstrumentPlan,
    layout: RegressorLayout,
) -> Result<BiasDiagnostics> {
    let errors_eq = sim.errors_equation_sample();
    let sol = solve_fod(sim.panel(), plan, layout, EstimatorKind::Fod, Some(&errors_eq))?;
    let n = sol.fit.n as f64;
    let t_eff = sol.fit.t_eff as f64;
    let a_nt = sol.moment / (n * t_eff);
    let theta_nt = sol.theta.expect("errors were supplied");
    // b = A * theta by construction.
    let b_nt = &a_nt * &theta_nt;
    Ok(BiasDiagnostics { a_nt, b_nt, theta_nt })
}

/// Fit plus the bias-decomposition draw, sharing one pass over the data.
/// Used by the Monte Carlo engine; `theta` is `None` for non-FOD paths.
pub(crate) fn fit_fod_with_theta(
    sim: &SimulatedPanel,
    plan: &InstrumentPlan,
    layout: RegressorLayout,
    tag: EstimatorKind,
) -> Result<(GmmFit, DVector<f64>)> {
    let errors_eq = sim.errors_equation_sample();
    let sol = solve_fod(sim.panel(), plan, layout, tag, Some(&errors_eq))?;
    Ok((sol.fit, sol.theta.expect("errors were supplied")))
}
