//! Report formatting: the estimate-mode fit report and the wide coverage
//! and relative-precision tables built from an experiment summary.

use fodgmm::montecarlo::McSummary;
use fodgmm::{confidence_interval, EstimatorKind, GmmFit};
use serde::Serialize;

/// Serializable fit report for estimate mode.
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub t_eff: usize,
    pub q_star: usize,
    pub sigma2_hat: f64,
    pub beta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub intervals: Vec<LevelIntervals>,
}

#[derive(Debug, Serialize)]
pub struct LevelIntervals {
    pub level: f64,
    pub intervals: Vec<[f64; 2]>,
}

impl FitReport {
    pub fn new(fit: &GmmFit, levels: &[f64]) -> Self {
        let k = fit.beta_hat.len();
        let intervals = levels
            .iter()
            .map(|&level| LevelIntervals {
                level,
                intervals: confidence_interval(fit, level)
                    .iter()
                    .map(|ci| [ci.lower, ci.upper])
                    .collect(),
            })
            .collect();
        Self {
            estimator: fit.estimator,
            n: fit.n,
            t_eff: fit.t_eff,
            q_star: fit.q_star,
            sigma2_hat: fit.sigma2_hat,
            beta_hat: fit.beta_hat.iter().copied().collect(),
            se: fit.se.iter().copied().collect(),
            vcov: (0..k)
                .map(|i| (0..k).map(|j| fit.vcov[(i, j)]).collect())
                .collect(),
            intervals,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "estimator: {}   n: {}   T: {}   q*: {}\nsigma2_hat: {:.6}\n\n",
            self.estimator, self.n, self.t_eff, self.q_star, self.sigma2_hat
        ));
        out.push_str(&format!("{:<8} {:>12} {:>12}", "coef", "estimate", "se"));
        for li in &self.intervals {
            out.push_str(&format!(" {:>24}", format!("{:.0}% interval", li.level * 100.0)));
        }
        out.push('\n');
        for k in 0..self.beta_hat.len() {
            out.push_str(&format!(
                "beta{:<4} {:>12.6} {:>12.6}",
                k + 1,
                self.beta_hat[k],
                self.se[k]
            ));
            for li in &self.intervals {
                out.push_str(&format!(
                    " {:>24}",
                    format!("[{:.6}, {:.6}]", li.intervals[k][0], li.intervals[k][1])
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// The design catalog as CSV.
pub fn design_catalog_csv() -> String {
    let mut out = String::from("design,beta1,beta2,rho,phi1,kappa1\n");
    for (id, b1, b2, rho, phi, kappa) in fodgmm::dgp::design_table() {
        out.push_str(&format!("{id},{b1},{b2},{rho},{phi},{kappa}\n"));
    }
    out
}

/// Coverage percentage for a cell at the reporting level (0.95 when run,
/// otherwise the first level).
fn coverage_at_report_level(summary: &McSummary, cell_idx: usize, coef: usize) -> Option<f64> {
    let cell = &summary.cells[cell_idx];
    let cov = &cell.coeffs.get(coef)?.coverage;
    let entry = cov
        .iter()
        .find(|c| (c.level - 0.95).abs() < 1e-12)
        .or_else(|| cov.first())?;
    Some(entry.coverage * 100.0)
}

/// Wide coverage tables, one per (coefficient, design block): rows are
/// estimator x T, columns are designs.
pub fn coverage_tables(summary: &McSummary) -> Vec<(String, String)> {
    let mut ids: Vec<u8> = summary
        .cells
        .iter()
        .filter_map(|c| c.design_id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Vec::new();
    }
    let blocks: Vec<(String, Vec<u8>)> = {
        let low: Vec<u8> = ids.iter().copied().filter(|&i| i <= 18).collect();
        let high: Vec<u8> = ids.iter().copied().filter(|&i| i > 18).collect();
        let mut blocks = Vec::new();
        if !low.is_empty() {
            blocks.push((format!("designs{:02}_{:02}", low[0], low[low.len() - 1]), low));
        }
        if !high.is_empty() {
            blocks.push((format!("designs{:02}_{:02}", high[0], high[high.len() - 1]), high));
        }
        blocks
    };

    let mut t_values: Vec<usize> = summary.cells.iter().map(|c| c.t_len).collect();
    t_values.sort_unstable();
    t_values.dedup();
    let estimator_order = [EstimatorKind::Efficient, EstimatorKind::Fd, EstimatorKind::Fod];
    let k_count = summary
        .cells
        .iter()
        .map(|c| c.coeffs.len())
        .max()
        .unwrap_or(0);

    let mut files = Vec::new();
    for coef in 0..k_count {
        for (block_name, block_ids) in &blocks {
            let mut table = String::from("estimator,T");
            for id in block_ids {
                table.push_str(&format!(",{id}"));
            }
            table.push('\n');
            for est in estimator_order {
                for &t in &t_values {
                    let mut row = format!("{est},{t}");
                    let mut any = false;
                    for &id in block_ids {
                        let cell_idx = summary.cells.iter().position(|c| {
                            c.design_id == Some(id)
                                && c.t_len == t
                                && c.estimator == est
                                && !c.skipped
                        });
                        match cell_idx {
                            Some(idx) => {
                                any = true;
                                match coverage_at_report_level(summary, idx, coef) {
                                    Some(v) => row.push_str(&format!(",{v:.1}")),
                                    None => row.push(','),
                                }
                            }
                            None => row.push(','),
                        }
                    }
                    if any {
                        table.push_str(&row);
                        table.push('\n');
                    }
                }
            }
            files.push((format!("coverage_beta{}_{block_name}.csv", coef + 1), table));
        }
    }
    files
}

/// Relative-precision line-plot data: per (coefficient, T), ratios of the
/// FD and FOD RMSE to the efficient RMSE by design.
pub fn relative_precision_tables(summary: &McSummary) -> Vec<(String, String)> {
    let mut t_values: Vec<usize> = summary.cells.iter().map(|c| c.t_len).collect();
    t_values.sort_unstable();
    t_values.dedup();
    let k_count = summary
        .cells
        .iter()
        .map(|c| c.coeffs.len())
        .max()
        .unwrap_or(0);

    let mut files = Vec::new();
    for coef in 0..k_count {
        for &t in &t_values {
            let mut ids: Vec<u8> = summary
                .cells
                .iter()
                .filter(|c| c.t_len == t && !c.skipped)
                .filter_map(|c| c.design_id)
                .collect();
            ids.sort_unstable();
            ids.dedup();

            let mut table = String::from("design,fd,fod\n");
            let mut any = false;
            for id in ids {
                let ratio_of = |est: EstimatorKind| -> Option<f64> {
                    summary
                        .cells
                        .iter()
                        .find(|c| {
                            c.design_id == Some(id) && c.t_len == t && c.estimator == est
                                && !c.skipped
                        })
                        .and_then(|c| c.coeffs.get(coef))
                        .and_then(|k| k.relative_precision)
                };
                let fd = ratio_of(EstimatorKind::Fd);
                let fod = ratio_of(EstimatorKind::Fod);
                if fd.is_some() || fod.is_some() {
                    any = true;
                    table.push_str(&format!(
                        "{id},{},{}\n",
                        fd.map(|v| format!("{v:.6}")).unwrap_or_default(),
                        fod.map(|v| format!("{v:.6}")).unwrap_or_default()
                    ));
                }
            }
            if any {
                files.push((format!("relprec_beta{}_T{t}.csv", coef + 1), table));
            }
        }
    }
    files
}
