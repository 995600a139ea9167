//! Block-tridiagonal Cholesky factorization.
//!
//! The first-difference GMM weighting matrix is block tridiagonal (blocks
//! follow the per-period instrument counts), so it is factored and solved
//! block-row by block-row instead of as one dense matrix.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Cholesky factorization of a symmetric positive definite block-tridiagonal
/// matrix, held as per-block lower factors `L_t` and coupling blocks
/// `F_t = L_t^{-1} E_t` for super-diagonal blocks `E_t`.
pub struct BlockTridiagChol {
    l: Vec<Cholesky<f64, Dyn>>,
    f: Vec<DMatrix<f64>>,
    sizes: Vec<usize>,
}

impl BlockTridiagChol {
    /// Factor the matrix with diagonal blocks `diag` and super-diagonal
    /// blocks `superdiag` (`superdiag.len() == diag.len() - 1`; block `t`
    /// couples block rows `t` and `t+1`). Returns `None` if any Schur
    /// complement fails to be positive definite.
    pub fn factor(diag: &[DMatrix<f64>], superdiag: &[DMatrix<f64>]) -> Option<Self> {
        assert!(!diag.is_empty());
        assert_eq!(superdiag.len() + 1, diag.len());

        let m = diag.len();
        let mut l = Vec::with_capacity(m);
        let mut f = Vec::with_capacity(m.saturating_sub(1));
        let sizes: Vec<usize> = diag.iter().map(|d| d.nrows()).collect();

        l.push(Cholesky::new(diag[0].clone())?);
        for t in 1..m {
            let prev_l = l[t - 1].l_dirty();
            // F_{t-1} = L_{t-1}^{-1} E_{t-1}
            let f_prev = prev_l.solve_lower_triangular(&superdiag[t - 1])?;
            let schur = &diag[t] - f_prev.transpose() * &f_prev;
            f.push(f_prev);
            l.push(Cholesky::new(schur)?);
        }
        Some(Self { l, f, sizes })
    }

    /// Solve `W x = b` where `b` is given as stacked blocks matching the
    /// factored block sizes. Each block is `q_t x k`.
    pub fn solve_blocks(&self, rhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let m = self.l.len();
        assert_eq!(rhs.len(), m);
        for (b, &q) in rhs.iter().zip(&self.sizes) {
            assert_eq!(b.nrows(), q);
        }

        // Forward pass: L u = b with the block bidiagonal L.
        let mut u: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        for t in 0..m {
            let mut b = rhs[t].clone();
            if t > 0 {
                b -= self.f[t - 1].transpose() * &u[t - 1];
            }
            let sol = self.l[t]
                .l_dirty()
                .solve_lower_triangular(&b)
                .expect("factor has nonsingular triangular blocks");
            u.push(sol);
        }

        // Backward pass: L' x = u.
        let mut x = vec![DMatrix::zeros(0, 0); m];
        for t in (0..m).rev() {
            let mut b = u[t].clone();
            if t + 1 < m {
                b -= &self.f[t] * &x[t + 1];
            }
            x[t] = self.l[t]
                .l_dirty()
                .tr_solve_lower_triangular(&b)
                .expect("factor has nonsingular triangular blocks");
        }
        x
    }
}

/// Stack block rows into one dense matrix (test and interop helper).
pub fn stack_blocks(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((offset, 0), (b.nrows(), b.ncols())).copy_from(b);
        offset += b.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_spd_block_tridiag(
        sizes: &[usize],
        rng: &mut impl Rng,
    ) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DMatrix<f64>) {
        // Build W = B'B + I from a random tall B so it is SPD, then extract
        // its block-tridiagonal part as the actual test matrix (the extracted
        // part stays SPD because the dropped blocks are zero here: we build B
        // so that only adjacent blocks couple).
        let total: usize = sizes.iter().sum();
        let m = sizes.len();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();

        let mut dense = DMatrix::zeros(total, total);
        let mut diag = Vec::new();
        let mut sup = Vec::new();
        for t in 0..m {
            let q = sizes[t];
            let a = DMatrix::from_fn(q + 2, q, |_, _| rng.random::<f64>() - 0.5);
            let d = a.transpose() * &a + DMatrix::identity(q, q) * (q as f64);
            dense.view_mut((offsets[t], offsets[t]), (q, q)).copy_from(&d);
            diag.push(d);
            if t + 1 < m {
                let e = DMatrix::from_fn(q, sizes[t + 1], |_, _| 0.3 * (rng.random::<f64>() - 0.5));
                dense
                    .view_mut((offsets[t], offsets[t + 1]), (q, sizes[t + 1]))
                    .copy_from(&e);
                dense
                    .view_mut((offsets[t + 1], offsets[t]), (sizes[t + 1], q))
                    .copy_from(&e.transpose());
                sup.push(e);
            }
        }
        (diag, sup, dense)
    }

    #[test]
    fn block_solve_matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let sizes = vec![3, 5, 5, 4, 2];
        let (diag, sup, dense) = random_spd_block_tridiag(&sizes, &mut rng);

        let chol = BlockTridiagChol::factor(&diag, &sup).expect("SPD by construction");
        let total: usize = sizes.iter().sum();
        let rhs_dense = DVector::from_fn(total, |i, _| (i as f64 * 0.37).sin());

        let mut rhs_blocks = Vec::new();
        let mut off = 0;
        for &q in &sizes {
            rhs_blocks.push(DMatrix::from_fn(q, 1, |i, _| rhs_dense[off + i]));
            off += q;
        }

        let x_blocks = stack_blocks(&chol.solve_blocks(&rhs_blocks));
        let x_dense = dense
            .clone()
            .cholesky()
            .expect("dense SPD")
            .solve(&rhs_dense);

        for i in 0..total {
            assert!(
                (x_blocks[(i, 0)] - x_dense[i]).abs() < 1e-10,
                "entry {i}: {} vs {}",
                x_blocks[(i, 0)],
                x_dense[i]
            );
        }
    }

    #[test]
    fn single_block_case() {
        let d = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let chol = BlockTridiagChol::factor(&[d.clone()], &[]).unwrap();
        let rhs = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = &chol.solve_blocks(&[rhs.clone()])[0];
        let residual = &d * x - rhs;
        assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn not_positive_definite_is_rejected() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // indefinite
        assert!(BlockTridiagChol::factor(&[d], &[]).is_none());
    }
}
