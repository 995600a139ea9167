//! Replication engine: runs (design x estimator) cells, aggregates coverage,
//! bias, RMSE, relative precision, and scaled-deviation diagnostics.
//!
//! Replications parallelize over derived random streams and are reduced in
//! replication order with compensated summation, so a run is bit-identical
//! across thread counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{self, DesignConfig, NoiseScale};
use crate::error::{Error, Result};
use crate::estimator::{self, EstimatorKind};
use crate::instruments::{check_feasible, InstrumentPlan, RegressorLayout};
use crate::rng::mix;
use crate::stats::{inv_norm_cdf, mean, population_variance};

/// Absolute slack in the interval-hit test, so that exact fits whose
/// standard error collapses to zero still count as covered.
const HIT_ATOL: f64 = 1e-10;

fn default_levels() -> Vec<f64> {
    vec![0.95, 0.90, 0.50]
}

fn default_layout() -> RegressorLayout {
    RegressorLayout::ArWithRegressors
}

fn default_noise() -> NoiseScale {
    NoiseScale::default()
}

/// An estimator to run, with its instrument plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub plan: InstrumentPlan,
}

impl EstimatorSpec {
    pub fn fod(plan: InstrumentPlan) -> Self {
        Self { kind: EstimatorKind::Fod, plan }
    }

    pub fn fd(plan: InstrumentPlan) -> Self {
        Self { kind: EstimatorKind::Fd, plan }
    }

    pub fn efficient() -> Self {
        Self {
            kind: EstimatorKind::Efficient,
            plan: InstrumentPlan::AllAvailable,
        }
    }
}

/// A full experiment: designs, estimators, replication count, confidence
/// levels, and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub designs: Vec<DesignConfig>,
    pub estimators: Vec<EstimatorSpec>,
    pub reps: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_layout")]
    pub layout: RegressorLayout,
    /// Error-component scaling; the noise-free test hook sets these to zero.
    #[serde(default = "default_noise", skip_serializing_if = "is_default_noise")]
    pub noise: NoiseScale,
}

fn is_default_noise(n: &NoiseScale) -> bool {
    *n == NoiseScale::default()
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::InvalidConfig("no designs given".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators given".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::InvalidConfig(
                "confidence levels must lie strictly in (0,1)".into(),
            ));
        }
        for d in &self.designs {
            d.validate()?;
        }
        for e in &self.estimators {
            if e.kind == EstimatorKind::Efficient && e.plan != InstrumentPlan::AllAvailable {
                return Err(Error::InvalidConfig(
                    "the efficient estimator uses the all-available plan".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Coverage of one confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCoverage {
    pub level: f64,
    /// Fraction of effective replications whose interval contains the truth.
    pub coverage: f64,
    /// Binomial Monte Carlo standard error `sqrt(p(1-p)/reps_effective)`.
    pub mc_se: f64,
}

/// Per-coefficient aggregates for one (design, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefSummary {
    pub name: String,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub variance: f64,
    pub rmse: f64,
    /// MC standard error of `mean_estimate`.
    pub mean_mc_se: f64,
    /// Mean of `sqrt(nT) (beta_hat - beta)` across replications.
    pub mean_scaled_dev: f64,
    pub scaled_dev_mc_se: f64,
    /// Mean of the per-replication `A^{-1} b` draw (FOD-family only).
    pub mean_theta_draw: Option<f64>,
    /// RMSE over the efficient estimator's RMSE on the same design, when
    /// the efficient estimator ran.
    pub relative_precision: Option<f64>,
    pub coverage: Vec<LevelCoverage>,
}

/// One (design, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub design_id: Option<u8>,
    pub design_index: usize,
    pub n: usize,
    pub t_len: usize,
    pub estimator: EstimatorKind,
    pub skipped: bool,
    pub skip_reason: Option<String>,
    pub failures: usize,
    pub reps_effective: usize,
    pub coeffs: Vec<CoefSummary>,
}

/// Aggregated experiment results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub seed: u64,
    pub reps: usize,
    pub levels: Vec<f64>,
    pub layout: RegressorLayout,
    pub cells: Vec<CellSummary>,
}

struct FitRecord {
    beta: Vec<f64>,
    se: Vec<f64>,
    theta: Option<Vec<f64>>,
}

fn fit_one(
    sim: &dgp::SimulatedPanel,
    est: &EstimatorSpec,
    layout: RegressorLayout,
) -> std::result::Result<FitRecord, String> {
    match est.kind {
        EstimatorKind::Fod | EstimatorKind::Efficient => {
            estimator::fit_fod_with_theta(sim, &est.plan, layout, est.kind)
                .map(|(fit, theta)| FitRecord {
                    beta: fit.beta_hat.iter().copied().collect(),
                    se: fit.se.iter().copied().collect(),
                    theta: Some(theta.iter().copied().collect()),
                })
                .map_err(|e| e.code().to_string())
        }
        EstimatorKind::Fd => estimator::fit_fd(sim.panel(), &est.plan, layout)
            .map(|fit| FitRecord {
                beta: fit.beta_hat.iter().copied().collect(),
                se: fit.se.iter().copied().collect(),
                theta: None,
            })
            .map_err(|e| e.code().to_string()),
    }
}

/// Run the experiment. Per-replication estimation failures are counted and
/// excluded from the aggregates; infeasible (design, estimator) cells are
/// marked skipped. All estimators see the same generated panels.
pub fn run(spec: &ExperimentSpec) -> Result<McSummary> {
    spec.validate()?;
    let layout = spec.layout;
    let z_at: Vec<f64> = spec
        .levels
        .iter()
        .map(|l| inv_norm_cdf((1.0 + l) / 2.0))
        .collect();

    let mut cells = Vec::new();
    for (d_idx, design) in spec.designs.iter().enumerate() {
        let t_eff = design.t_len;
        let truth = design.true_beta(layout);
        let design_seed = mix(&[spec.seed, d_idx as u64]);

        let feasibility: Vec<Option<String>> = spec
            .estimators
            .iter()
            .map(|e| {
                check_feasible(&e.plan, layout, 1, design.n, t_eff)
                    .err()
                    .map(|err| err.to_string())
            })
            .collect();

        let any_feasible = feasibility.iter().any(Option::is_none);
        let rep_results: Vec<Vec<Option<std::result::Result<FitRecord, String>>>> = if any_feasible
        {
            (0..spec.reps)
                .into_par_iter()
                .map(|rep| {
                    let sim = dgp::generate_scaled(design, design_seed, rep as u64, &spec.noise);
                    spec.estimators
                        .iter()
                        .zip(&feasibility)
                        .map(|(est, feas)| {
                            feas.is_none().then(|| fit_one(&sim, est, layout))
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };

        for (e_idx, est) in spec.estimators.iter().enumerate() {
            if let Some(reason) = &feasibility[e_idx] {
                cells.push(CellSummary {
                    design_id: design.design_id,
                    design_index: d_idx,
                    n: design.n,
                    t_len: design.t_len,
                    estimator: est.kind,
                    skipped: true,
                    skip_reason: Some(reason.clone()),
                    failures: 0,
                    reps_effective: 0,
                    coeffs: Vec::new(),
                });
                continue;
            }

            // Successful records in replication order.
            let records: Vec<&FitRecord> = rep_results
                .iter()
                .filter_map(|per_rep| per_rep[e_idx].as_ref().and_then(|r| r.as_ref().ok()))
                .collect();
            let failures = spec.reps - records.len();
            let reps_eff = records.len();

            let scale = (design.n as f64 * t_eff as f64).sqrt();
            let coeffs = truth
                .iter()
                .enumerate()
                .map(|(k, &beta_true)| {
                    let betas: Vec<f64> = records.iter().map(|r| r.beta[k]).collect();
                    let mean_estimate = mean(&betas);
                    let bias = mean_estimate - beta_true;
                    let variance = population_variance(&betas);
                    let rmse = (variance + bias * bias).sqrt();
                    let mean_mc_se = if reps_eff > 0 {
                        (variance / reps_eff as f64).sqrt()
                    } else {
                        f64::NAN
                    };
                    let scaled: Vec<f64> =
                        betas.iter().map(|b| scale * (b - beta_true)).collect();
                    let mean_scaled_dev = mean(&scaled);
                    let scaled_dev_mc_se = if reps_eff > 0 {
                        (population_variance(&scaled) / reps_eff as f64).sqrt()
                    } else {
                        f64::NAN
                    };
                    let mean_theta_draw = records
                        .iter()
                        .map(|r| r.theta.as_ref().map(|t| t[k]))
                        .collect::<Option<Vec<f64>>>()
                        .map(|draws| mean(&draws));

                    let coverage = spec
                        .levels
                        .iter()
                        .zip(&z_at)
                        .map(|(&level, &z)| {
                            let hits = records
                                .iter()
                                .filter(|r| {
                                    let half = z * r.se[k];
                                    let atol = HIT_ATOL * r.beta[k].abs().max(1.0);
                                    beta_true >= r.beta[k] - half - atol
                                        && beta_true <= r.beta[k] + half + atol
                                })
                                .count();
                            let p = if reps_eff > 0 {
                                hits as f64 / reps_eff as f64
                            } else {
                                f64::NAN
                            };
                            LevelCoverage {
                                level,
                                coverage: p,
                                mc_se: if reps_eff > 0 {
                                    (p * (1.0 - p) / reps_eff as f64).sqrt()
                                } else {
                                    f64::NAN
                                },
                            }
                        })
                        .collect();

                    CoefSummary {
                        name: format!("beta{}", k + 1),
                        true_value: beta_true,
                        mean_estimate,
                        bias,
                        variance,
                        rmse,
                        mean_mc_se,
                        mean_scaled_dev,
                        scaled_dev_mc_se,
                        mean_theta_draw,
                        relative_precision: None,
                        coverage,
                    }
                })
                .collect();

            cells.push(CellSummary {
                design_id: design.design_id,
                design_index: d_idx,
                n: design.n,
                t_len: design.t_len,
                estimator: est.kind,
                skipped: false,
                skip_reason: None,
                failures,
                reps_effective: reps_eff,
                coeffs,
            });
        }
    }

    let mut summary = McSummary {
        seed: spec.seed,
        reps: spec.reps,
        levels: spec.levels.clone(),
        layout,
        cells,
    };
    fill_relative_precision(&mut summary, EstimatorKind::Efficient);
    Ok(summary)
}

/// Populate each coefficient's `relative_precision` as its RMSE over the
/// baseline estimator's RMSE on the same design. Cells whose design has no
/// non-skipped baseline keep `None`.
pub fn fill_relative_precision(summary: &mut McSummary, baseline: EstimatorKind) {
    let baseline_rmse: Vec<(usize, Vec<f64>)> = summary
        .cells
        .iter()
        .filter(|c| c.estimator == baseline && !c.skipped)
        .map(|c| (c.design_index, c.coeffs.iter().map(|k| k.rmse).collect()))
        .collect();
    for cell in &mut summary.cells {
        let Some((_, base)) = baseline_rmse.iter().find(|(d, _)| *d == cell.design_index) else {
            continue;
        };
        for (k, coef) in cell.coeffs.iter_mut().enumerate() {
            let b = base[k];
            coef.relative_precision = if coef.rmse == b {
                Some(1.0)
            } else if b > 0.0 {
                Some(coef.rmse / b)
            } else {
                None
            };
        }
    }
}

/// One row of a relative-precision table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelPrecisionRow {
    pub design_id: Option<u8>,
    pub design_index: usize,
    pub estimator: EstimatorKind,
    pub coefficient: String,
    pub ratio: f64,
}

/// RMSE ratios of every non-skipped cell against `baseline` on the same
/// design. Errors if the baseline never ran.
pub fn relative_precision(
    summary: &McSummary,
    baseline: EstimatorKind,
) -> Result<Vec<RelPrecisionRow>> {
    let baseline_cells: Vec<&CellSummary> = summary
        .cells
        .iter()
        .filter(|c| c.estimator == baseline && !c.skipped)
        .collect();
    if baseline_cells.is_empty() {
        return Err(Error::MissingBaseline(baseline.to_string()));
    }
    let mut rows = Vec::new();
    for cell in summary.cells.iter().filter(|c| !c.skipped) {
        let Some(base) = baseline_cells
            .iter()
            .find(|b| b.design_index == cell.design_index)
        else {
            continue;
        };
        for (k, coef) in cell.coeffs.iter().enumerate() {
            let b = base.coeffs[k].rmse;
            let ratio = if coef.rmse == b {
                1.0
            } else {
                coef.rmse / b
            };
            rows.push(RelPrecisionRow {
                design_id: cell.design_id,
                design_index: cell.design_index,
                estimator: cell.estimator,
                coefficient: coef.name.clone(),
                ratio,
            });
        }
    }
    Ok(rows)
}

impl McSummary {
    /// Long-format CSV: one row per design, estimator, coefficient, and
    /// level. Skipped cells are omitted (they appear in the JSON).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "design,estimator,T,n,coefficient,level,coverage,mc_se,bias,rmse,rel_precision,failures\n",
        );
        for cell in self.cells.iter().filter(|c| !c.skipped) {
            let design = cell
                .design_id
                .map(|id| id.to_string())
                .unwrap_or_else(|| format!("d{}", cell.design_index + 1));
            for coef in &cell.coeffs {
                for cov in &coef.coverage {
                    let rel = coef
                        .relative_precision
                        .map(|r| r.to_string())
                        .unwrap_or_default();
                    out.push_str(&format!(
                        "{design},{},{},{},{},{},{},{},{},{},{rel},{}\n",
                        cell.estimator,
                        cell.t_len,
                        cell.n,
                        coef.name,
                        cov.level,
                        cov.coverage,
                        cov.mc_se,
                        coef.bias,
                        coef.rmse,
                        cell.failures,
                    ));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Look up a non-skipped cell.
    pub fn cell(&self, design_index: usize, estimator: EstimatorKind) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.design_index == design_index && c.estimator == estimator && !c.skipped)
    }
}

/// One grid point of an instrument-growth sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub n: usize,
    pub t_len: usize,
    pub reps_effective: usize,
    pub failures: usize,
    pub mean_scaled_dev: f64,
    pub mc_se: f64,
    pub skipped: bool,
    pub skip_reason: Option<String>,
}

/// Sweep the instrument-growth exponent over an (n, T) grid on a pure-AR
/// design, recording the mean of `sqrt(nT) (beta_hat - beta)` per cell.
/// Instrument budgets follow `q_t = min(t, 2 ceil((t+1)^alpha))`.
pub fn theta_sweep(
    base: &DesignConfig,
    alphas: &[f64],
    n_grid: &[usize],
    t_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<SweepCell>> {
    if reps < 1 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    if alphas.is_empty() || n_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    let layout = RegressorLayout::PureAr;
    let mut out = Vec::new();
    for &alpha in alphas {
        for &n in n_grid {
            for &t_len in t_grid {
                let mut cfg = base.clone();
                cfg.n = n;
                cfg.t_len = t_len;
                cfg.design_id = None;
                cfg.validate()?;
                let plan = InstrumentPlan::PowerLaw { alpha, base: 2 };
                if let Err(err) = check_feasible(&plan, layout, 1, n, t_len) {
                    out.push(SweepCell {
                        alpha,
                        n,
                        t_len,
                        reps_effective: 0,
                        failures: 0,
                        mean_scaled_dev: f64::NAN,
                        mc_se: f64::NAN,
                        skipped: true,
                        skip_reason: Some(err.to_string()),
                    });
                    continue;
                }
                let cell_seed = mix(&[seed, alpha.to_bits(), n as u64, t_len as u64]);
                let truth = cfg.beta1;
                let scale = (n as f64 * t_len as f64).sqrt();
                let devs: Vec<Option<f64>> = (0..reps)
                    .into_par_iter()
                    .map(|rep| {
                        let sim = dgp::generate(&cfg, cell_seed, rep as u64);
                        estimator::fit_fod(sim.panel(), &plan, layout)
                            .ok()
                            .map(|fit| scale * (fit.beta_hat[0] - truth))
                    })
                    .collect();
                let ok: Vec<f64> = devs.iter().filter_map(|d| *d).collect();
                let failures = reps - ok.len();
                let mean_dev = mean(&ok);
                let mc_se = if ok.is_empty() {
                    f64::NAN
                } else {
                    (population_variance(&ok) / ok.len() as f64).sqrt()
                };
                out.push(SweepCell {
                    alpha,
                    n,
                    t_len,
                    reps_effective: ok.len(),
                    failures,
                    mean_scaled_dev: mean_dev,
                    mc_se,
                    skipped: false,
                    skip_reason: None,
                });
            }
        }
    }
    Ok(out)
}

/// CSV for sweep results.
pub fn sweep_to_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("alpha,n,T,mean_scaled_dev,mc_se,reps_effective,failures,skipped\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.alpha,
            c.n,
            c.t_len,
            c.mean_scaled_dev,
            c.mc_se,
            c.reps_effective,
            c.failures,
            c.skipped
        ));
    }
    out
}
