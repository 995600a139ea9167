//! Fixed-effect-removing transformations.
//!
//! Forward orthogonal deviations subtract from each observation the mean of
//! all later observations, scaled by `c_t = sqrt((T-t)/(T-t+1))` so that
//! i.i.d. homoskedastic errors stay uncorrelated with unchanged variance.
//! First differences subtract the previous observation; the resulting MA(1)
//! error correlation is captured by the tridiagonal matrix `G`.
//!
//! Both transformations run as column recurrences in O(nT) per series; the
//! explicit matrix builders below exist as test oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Forward-orthogonal-deviations transform of a panel: `y_dd` and `x_dd`
/// hold the transformed outcome and regressors for equations `t = 1..T-1`
/// (column `t-1`), where `T` is the number of input periods.
#[derive(Debug, Clone)]
pub struct FodPanel {
    pub y_dd: DMatrix<f64>,
    pub x_dd: Vec<DMatrix<f64>>,
    /// Scale factors `c_t`, entry `t-1` for equation `t`.
    pub c: DVector<f64>,
    /// Number of input periods (= transformed equations + 1).
    pub t_len: usize,
}

/// First-difference transform of a panel: column `t-1` holds the difference
/// between periods `t+1` and `t` of the input, for `t = 1..T-1`. The FD error
/// covariance structure `G` (tridiagonal 2/-1) is implicit in the dimension.
#[derive(Debug, Clone)]
pub struct FdPanel {
    pub y_td: DMatrix<f64>,
    pub x_td: Vec<DMatrix<f64>>,
    pub t_len: usize,
}

/// `c_t^2 = (T-t)/(T-t+1)` for `t = 1..T-1`.
pub fn fod_scales(t_len: usize) -> DVector<f64> {
    DVector::from_fn(t_len - 1, |idx, _| {
        let t = idx + 1;
        (((t_len - t) as f64) / ((t_len - t + 1) as f64)).sqrt()
    })
}

/// Apply the FOD transform to each row of an `n x T` matrix, producing
/// `n x (T-1)`: `out[:, t-1] = c_t * (in[:, t-1] - mean(in[:, t..T]))` in
/// 1-based period terms. Runs as a backward recurrence on running sums.
pub fn fod_series(series: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = series.nrows();
    let t_len = series.ncols();
    if t_len < 2 {
        return Err(Error::TooFewPeriods { have: t_len, need: 2 });
    }
    let c = fod_scales(t_len);
    let mut out = DMatrix::zeros(n, t_len - 1);
    // future_sum[i] accumulates columns t+1..T while t walks backwards.
    let mut future_sum: Vec<f64> = (0..n).map(|i| series[(i, t_len - 1)]).collect();
    for t in (1..t_len).rev() {
        let remaining = (t_len - t) as f64;
        let ct = c[t - 1];
        for i in 0..n {
            let current = series[(i, t - 1)];
            out[(i, t - 1)] = ct * (current - future_sum[i] / remaining);
            future_sum[i] += current;
        }
    }
    Ok(out)
}

/// First differences of each row of an `n x T` matrix, producing `n x (T-1)`
/// with column `t-1 = in[:, t] - in[:, t-1]` (0-based columns).
pub fn fd_series(series: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = series.nrows();
    let t_len = series.ncols();
    if t_len < 2 {
        return Err(Error::TooFewPeriods { have: t_len, need: 2 });
    }
    let mut out = DMatrix::zeros(n, t_len - 1);
    for t in 0..t_len - 1 {
        for i in 0..n {
            out[(i, t)] = series[(i, t + 1)] - series[(i, t)];
        }
    }
    Ok(out)
}

/// FOD-transform the outcome and every regressor of a panel.
pub fn fod(panel: &PanelDataset) -> Result<FodPanel> {
    let t_len = panel.t_obs();
    let y_dd = fod_series(panel.y())?;
    let x_dd = (0..panel.k())
        .map(|k| fod_series(panel.x(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FodPanel {
        y_dd,
        x_dd,
        c: fod_scales(t_len),
        t_len,
    })
}

/// First-difference the outcome and every regressor of a panel.
pub fn fd(panel: &PanelDataset) -> Result<FdPanel> {
    let t_len = panel.t_obs();
    let y_td = fd_series(panel.y())?;
    let x_td = (0..panel.k())
        .map(|k| fd_series(panel.x(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FdPanel { y_td, x_td, t_len })
}

/// Explicit `(T-1) x T` FOD matrix `F`: row `t` is
/// `c_t * [0,...,0, 1, -1/(T-t), ..., -1/(T-t)]`. Satisfies `F F' = I` and
/// `F 1 = 0`. Test oracle; the transforms above never materialize it.
pub fn build_fod_matrix(t_len: usize) -> Result<DMatrix<f64>> {
    if t_len < 2 {
        return Err(Error::TooFewPeriods { have: t_len, need: 2 });
    }
    let c = fod_scales(t_len);
    let mut f = DMatrix::zeros(t_len - 1, t_len);
    for t in 1..t_len {
        let ct = c[t - 1];
        f[(t - 1, t - 1)] = ct;
        let w = -ct / (t_len - t) as f64;
        for s in t..t_len {
            f[(t - 1, s)] = w;
        }
    }
    Ok(f)
}

/// Explicit `(T-1) x T` first-difference matrix `D` with rows `(-1, 1)`
/// shifted; satisfies `D D' = G` and `D 1 = 0`. Test oracle.
pub fn build_fd_matrix(t_len: usize) -> Result<DMatrix<f64>> {
    if t_len < 2 {
        return Err(Error::TooFewPeriods { have: t_len, need: 2 });
    }
    let mut d = DMatrix::zeros(t_len - 1, t_len);
    for t in 0..t_len - 1 {
        d[(t, t)] = -1.0;
        d[(t, t + 1)] = 1.0;
    }
    Ok(d)
}

/// The `(T-1) x (T-1)` symmetric tridiagonal matrix `G` with twos on the
/// main diagonal and minus ones just above and below it.
pub fn g_matrix(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::RowDVector;
    use proptest::prelude::*;

    fn row(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_rows(&[RowDVector::from_row_slice(values)])
    }

    #[test]
    fn constant_series_is_annihilated() {
        let out = fod_series(&row(&[5.0, 5.0, 5.0, 5.0])).unwrap();
        for v in out.iter() {
            assert!(v.abs() < 1e-14);
        }
        let out = fd_series(&row(&[5.0, 5.0, 5.0, 5.0])).unwrap();
        for v in out.iter() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn two_period_fod_value() {
        let out = fod_series(&row(&[1.0, 0.0])).unwrap();
        assert!((out[(0, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fd_of_short_series() {
        let out = fd_series(&row(&[1.0, 3.0, 6.0])).unwrap();
        assert_eq!(out[(0, 0)], 2.0);
        assert_eq!(out[(0, 1)], 3.0);
    }

    #[test]
    fn too_few_periods_rejected() {
        assert!(matches!(
            fod_series(&row(&[1.0])),
            Err(Error::TooFewPeriods { .. })
        ));
        assert!(matches!(build_fod_matrix(1), Err(Error::TooFewPeriods { .. })));
    }

    #[test]
    fn fod_matrix_small_cases() {
        let f2 = build_fod_matrix(2).unwrap();
        let r = 0.5f64.sqrt();
        assert!((f2[(0, 0)] - r).abs() < 1e-15);
        assert!((f2[(0, 1)] + r).abs() < 1e-15);

        let f3 = build_fod_matrix(3).unwrap();
        let c1 = (2.0f64 / 3.0).sqrt();
        assert!((f3[(0, 0)] - c1).abs() < 1e-15);
        assert!((f3[(0, 1)] + c1 / 2.0).abs() < 1e-15);
        assert!((f3[(0, 2)] + c1 / 2.0).abs() < 1e-15);
        assert!((f3[(1, 0)]).abs() < 1e-15);
        assert!((f3[(1, 1)] - r).abs() < 1e-15);
        assert!((f3[(1, 2)] + r).abs() < 1e-15);
    }

    #[test]
    fn fod_recurrence_matches_matrix_oracle() {
        let series = row(&[0.31, -1.2, 2.44, 0.07]);
        let fast = fod_series(&series).unwrap();
        let f = build_fod_matrix(4).unwrap();
        let dense = &series * f.transpose();
        for t in 0..3 {
            assert!((fast[(0, t)] - dense[(0, t)]).abs() < 1e-14);
        }
    }

    #[test]
    fn semi_orthogonality_and_annihilation() {
        for t_len in 2..=50 {
            let f = build_fod_matrix(t_len).unwrap();
            let gram = &f * f.transpose();
            let eye = DMatrix::<f64>::identity(t_len - 1, t_len - 1);
            assert!((gram - eye).abs().max() < 1e-12, "T={t_len}");
            let ones = DVector::from_element(t_len, 1.0);
            assert!((&f * ones).abs().max() < 1e-14, "T={t_len}");
        }
    }

    #[test]
    fn fd_matrix_gram_is_g() {
        for t_len in 2..=50 {
            let d = build_fd_matrix(t_len).unwrap();
            let gram = &d * d.transpose();
            assert!((gram - g_matrix(t_len - 1)).abs().max() < 1e-14, "T={t_len}");
        }
    }

    #[test]
    fn scales_monotone_with_known_endpoints() {
        for t_len in [2usize, 5, 17, 40] {
            let c = fod_scales(t_len);
            for idx in 0..c.len() {
                let t = idx + 1;
                let expect = ((t_len - t) as f64 / (t_len - t + 1) as f64).sqrt();
                assert_eq!(c[idx], expect);
                assert!(c[idx] > 0.0 && c[idx] < 1.0);
                if idx > 0 {
                    assert!(c[idx] < c[idx - 1], "c_t increases in t (T={t_len})");
                }
            }
            assert!((c[t_len - 2].powi(2) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn fod_of_iid_normals_has_near_identity_covariance() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (n, t_len) = (4000, 6);
        let series = DMatrix::from_fn(n, t_len, |_, _| {
            // Box-Muller from two uniforms keeps this test free of rand_distr.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let out = fod_series(&series).unwrap();
        let cov = out.transpose() * &out / n as f64;
        let eye = DMatrix::<f64>::identity(t_len - 1, t_len - 1);
        // Entries have MC standard error ~ 1/sqrt(n) = 0.016.
        assert!((cov - eye).abs().max() < 0.1);
    }

    proptest! {
        #[test]
        fn fod_matches_oracle_on_random_series(values in prop::collection::vec(-50.0f64..50.0, 2..12)) {
            let series = row(&values);
            let t_len = values.len();
            let fast = fod_series(&series).unwrap();
            let dense = &series * build_fod_matrix(t_len).unwrap().transpose();
            for t in 0..t_len - 1 {
                prop_assert!((fast[(0, t)] - dense[(0, t)]).abs() < 1e-10);
            }
        }

        #[test]
        fn fixed_effect_shift_is_annihilated(
            values in prop::collection::vec(-10.0f64..10.0, 3..10),
            shift in -100.0f64..100.0,
        ) {
            let base = row(&values);
            let shifted = base.add_scalar(shift);
            let a = fod_series(&base).unwrap();
            let b = fod_series(&shifted).unwrap();
            for t in 0..values.len() - 1 {
                prop_assert!((a[(0, t)] - b[(0, t)]).abs() < 1e-9);
            }
        }
    }
}
