//! Simulation data-generating processes and AR lag-polynomial tools.
//!
//! Panels are generated from a dynamic regression with one predetermined
//! regressor: `y_t = beta1 y_{t-1} + beta2 x_t + eta + v_t`, where `x`
//! follows an AR(1) filter in uniform innovations plus optional loadings on
//! the fixed effect (`kappa1`) and on the lagged error (`phi1`). Fifty
//! burn-in periods are generated and dropped; the kept sample is
//! `(x_0, y_0), ..., (x_T, y_T)`. Each (replication, unit) pair draws from
//! its own derived random stream, so generation is reproducible under any
//! parallel schedule.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::RegressorLayout;
use crate::panel::PanelDataset;
use crate::rng::{uniform_unit_variance, unit_stream};

pub const DEFAULT_BURN_IN: usize = 50;

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

/// One simulation design: regression and x-process parameters plus sample
/// dimensions. `design_id`, when set, must agree with the 36-design catalog
/// (see [`design_table`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub phi1: f64,
    pub kappa1: f64,
    pub n: usize,
    /// Post-burn-in horizon: data are kept for periods `0..=t_len`.
    pub t_len: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub design_id: Option<u8>,
    /// Alternative reading of the x process in which the lagged-error term
    /// is fed through the AR filter at every date rather than added outside
    /// it. Off by default.
    #[serde(default)]
    pub filtered_phi: bool,
}

/// Catalog row: `(id, beta1, beta2, rho, phi1, kappa1)`.
pub type DesignPoint = (u8, f64, f64, f64, f64, f64);

fn grid_params(id: u8) -> (f64, f64, f64, f64, f64) {
    let beta1 = if id <= 18 { 0.25 } else { 0.75 };
    let j = usize::from(id - 1) % 18;
    let rho = if j < 9 { 0.50 } else { 0.95 };
    let l = j % 9;
    let phi1 = [-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0][l];
    let kappa1 = [-1.0, 0.0, 1.0][l % 3];
    (beta1, 1.0 - beta1, rho, phi1, kappa1)
}

/// The full 36-design catalog.
pub fn design_table() -> Vec<DesignPoint> {
    (1..=36u8)
        .map(|id| {
            let (b1, b2, rho, phi, kappa) = grid_params(id);
            (id, b1, b2, rho, phi, kappa)
        })
        .collect()
}

impl DesignConfig {
    /// Design from the catalog, with sample dimensions.
    pub fn from_design_id(id: u8, n: usize, t_len: usize) -> Result<Self> {
        if !(1..=36).contains(&id) {
            return Err(Error::InvalidConfig(format!(
                "design id {id} outside the catalog (1..=36)"
            )));
        }
        let (beta1, beta2, rho, phi1, kappa1) = grid_params(id);
        Ok(Self {
            beta1,
            beta2,
            rho,
            phi1,
            kappa1,
            n,
            t_len,
            burn_in: DEFAULT_BURN_IN,
            design_id: Some(id),
            filtered_phi: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta1.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "|beta1| must be < 1, got {}",
                self.beta1
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "|rho| must be < 1, got {}",
                self.rho
            )));
        }
        for (name, v) in [
            ("beta2", self.beta2),
            ("phi1", self.phi1),
            ("kappa1", self.kappa1),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.t_len < 2 {
            return Err(Error::InvalidConfig(
                "t_len must be >= 2 (at least 3 kept periods)".into(),
            ));
        }
        if let Some(id) = self.design_id {
            if !(1..=36).contains(&id) {
                return Err(Error::InvalidConfig(format!(
                    "design id {id} outside the catalog (1..=36)"
                )));
            }
            let (b1, b2, rho, phi, kappa) = grid_params(id);
            let same = self.beta1 == b1
                && self.beta2 == b2
                && self.rho == rho
                && self.phi1 == phi
                && self.kappa1 == kappa;
            if !same {
                return Err(Error::InvalidConfig(format!(
                    "parameters do not match catalog design {id}"
                )));
            }
        }
        Ok(())
    }

    /// True coefficient vector under an estimation layout.
    pub fn true_beta(&self, layout: RegressorLayout) -> Vec<f64> {
        match layout {
            RegressorLayout::ArWithRegressors => vec![self.beta1, self.beta2],
            RegressorLayout::PureAr => vec![self.beta1],
        }
    }
}

/// Scale factors applied to the drawn error components; zeroing one is the
/// noise-free test hook. Stream consumption is unchanged, so a scaled run
/// stays draw-for-draw aligned with the default run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub v: f64,
    pub eta: f64,
}

impl Default for NoiseScale {
    fn default() -> Self {
        Self { v: 1.0, eta: 1.0 }
    }
}

/// A generated panel together with the latent quantities the diagnostics
/// need: fixed effects and the full error history (burn-in included).
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    panel: PanelDataset,
    eta: DVector<f64>,
    /// Errors `v_{i,t}` for `t = -burn_in..=t_len`; column `j` holds period
    /// `j - burn_in`.
    v: DMatrix<f64>,
    truth: DesignConfig,
}

impl SimulatedPanel {
    pub fn panel(&self) -> &PanelDataset {
        &self.panel
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn errors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn truth(&self) -> &DesignConfig {
        &self.truth
    }

    /// Errors over the estimation equations: column `t-1` holds `v_{i,t}`
    /// for kept periods `t = 1..=t_len`.
    pub fn errors_equation_sample(&self) -> DMatrix<f64> {
        let n = self.panel.n();
        let t_eff = self.truth.t_len;
        let burn = self.truth.burn_in;
        DMatrix::from_fn(n, t_eff, |i, idx| self.v[(i, burn + idx + 1)])
    }
}

/// Generate a panel for replication `rep` under `master_seed`.
pub fn generate(cfg: &DesignConfig, master_seed: u64, rep: u64) -> SimulatedPanel {
    generate_scaled(cfg, master_seed, rep, &NoiseScale::default())
}

/// [`generate`] with error components scaled by `scale` (test hook).
pub fn generate_scaled(
    cfg: &DesignConfig,
    master_seed: u64,
    rep: u64,
    scale: &NoiseScale,
) -> SimulatedPanel {
    let n = cfg.n;
    let total = cfg.t_len + 1 + cfg.burn_in; // periods -burn_in..=t_len
    let kept = cfg.t_len + 1;

    let mut y_kept = DMatrix::zeros(n, kept);
    let mut x_kept = DMatrix::zeros(n, kept);
    let mut eta = DVector::zeros(n);
    let mut v_all = DMatrix::zeros(n, total);

    let mut w = vec![0.0f64; total];
    let mut x = vec![0.0f64; total];
    let mut y = vec![0.0f64; total];

    for i in 0..n {
        let mut rng = unit_stream(master_seed, rep, i as u64);
        let eta_draw: f64 = StandardNormal.sample(&mut rng);
        let eta_i = scale.eta * eta_draw;
        eta[i] = eta_i;
        for j in 0..total {
            let v_draw: f64 = StandardNormal.sample(&mut rng);
            v_all[(i, j)] = scale.v * v_draw;
        }
        let eps: Vec<f64> = (0..total).map(|_| uniform_unit_variance(&mut rng)).collect();

        // x process: start-up, then the filter recursion. The lagged-error
        // term enters the filter at the second date and is added outside it
        // afterwards (or kept inside under `filtered_phi`).
        w[0] = eps[0];
        x[0] = cfg.kappa1 * eta_i + w[0];
        if total > 1 {
            w[1] = cfg.rho * w[0] + eps[1] + cfg.phi1 * v_all[(i, 0)];
            x[1] = cfg.kappa1 * eta_i + w[1];
        }
        for j in 2..total {
            if cfg.filtered_phi {
                w[j] = cfg.rho * w[j - 1] + eps[j] + cfg.phi1 * v_all[(i, j - 1)];
                x[j] = cfg.kappa1 * eta_i + w[j];
            } else {
                w[j] = cfg.rho * w[j - 1] + eps[j];
                x[j] = cfg.kappa1 * eta_i + w[j] + cfg.phi1 * v_all[(i, j - 1)];
            }
        }

        // y recursion with zero start-up value.
        y[0] = 0.0;
        for j in 1..total {
            y[j] = cfg.beta1 * y[j - 1] + cfg.beta2 * x[j] + eta_i + v_all[(i, j)];
        }

        for (idx, j) in (cfg.burn_in..total).enumerate() {
            y_kept[(i, idx)] = y[j];
            x_kept[(i, idx)] = x[j];
        }
    }

    let period_labels: Vec<i64> = (0..kept as i64).collect();
    let panel = PanelDataset::new(y_kept, vec![x_kept], Some(period_labels))
        .expect("generated shapes are consistent");
    SimulatedPanel {
        panel,
        eta,
        v: v_all,
        truth: cfg.clone(),
    }
}

/// A lag polynomial `beta(L) = 1 - beta_1 L - ... - beta_K L^K` with
/// innovation variance `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArPolynomial {
    pub coeffs: Vec<f64>,
    pub sigma2: f64,
}

impl ArPolynomial {
    pub fn new(coeffs: Vec<f64>, sigma2: f64) -> Self {
        Self { coeffs, sigma2 }
    }

    /// All roots of the characteristic equation lie outside the unit circle,
    /// checked via the companion-matrix eigenvalue moduli (with a 1e-10
    /// margin so a unit root is not missed to eigenvalue rounding).
    pub fn is_stationary(&self) -> bool {
        let k = self.coeffs.len();
        if k == 0 {
            return true;
        }
        let companion = DMatrix::from_fn(k, k, |r, c| {
            if r == 0 {
                self.coeffs[c]
            } else if r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion
            .complex_eigenvalues()
            .iter()
            .all(|z| z.norm() < 1.0 - 1e-10)
    }

    /// Process mean implied by a fixed effect `eta`: `eta / beta(1)`.
    pub fn implied_mean(&self, eta: f64) -> Result<f64> {
        if !self.is_stationary() {
            return Err(Error::NonStationary);
        }
        Ok(eta / (1.0 - self.coeffs.iter().sum::<f64>()))
    }
}

/// Moving-average weights `psi_0..psi_J` of the inverted lag polynomial:
/// `psi_0 = 1`, `psi_j = sum_{m=1..min(j,K)} beta_m psi_{j-m}`.
pub fn moment_weights(ar: &ArPolynomial, horizon: usize) -> Result<Vec<f64>> {
    if !ar.is_stationary() {
        return Err(Error::NonStationary);
    }
    let k = ar.coeffs.len();
    let mut psi = Vec::with_capacity(horizon + 1);
    psi.push(1.0);
    for j in 1..=horizon {
        let mut acc = 0.0;
        for m in 1..=j.min(k) {
            acc += ar.coeffs[m - 1] * psi[j - m];
        }
        psi.push(acc);
    }
    Ok(psi)
}

/// Analytic conditional covariance between the period-`t` error and the
/// outcome `s-1` periods ahead: `sigma2 * psi_{s-1}` for `s >= 1`.
pub fn conditional_cov_oracle(ar: &ArPolynomial, s: usize) -> Result<f64> {
    assert!(s >= 1, "horizon s must be >= 1");
    let psi = moment_weights(ar, s - 1)?;
    Ok(ar.sigma2 * psi[s - 1])
}
