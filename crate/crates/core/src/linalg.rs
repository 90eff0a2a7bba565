//! Small dense symmetric kernels shared by the regression engine and the
//! model/sampling code.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative pivot threshold below which a symmetric block is treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Relative eigenvalue threshold for the positive-definiteness check.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Pivoted LDLᵀ factorization of a principal block of a symmetric matrix.
///
/// Buffers are kept between calls so the hot loops of the subset searches do
/// not allocate. Diagonal pivoting picks the largest remaining |a_tt|; the block
/// is rejected when a pivot drops under `PIVOT_TOLERANCE` times the first one.
#[derive(Debug, Clone, Default)]
pub struct BlockFactor {
    k: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
    work: Vec<f64>,
}

impl BlockFactor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// Factorizes `m[idx, idx]`. Returns `false` if the block is singular.
    pub fn factor(&mut self, m: &DMatrix<f64>, idx: &[usize]) -> bool {
        let k = idx.len();
        self.k = k;
        self.a.clear();
        self.a.resize(k * k, 0.0);
        self.perm.clear();
        self.perm.extend(0..k);
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                self.a[r * k + c] = m[(gr, gc)];
            }
        }
        self.factor_loaded()
    }

    fn factor_loaded(&mut self) -> bool {
        let k = self.k;
        let a = &mut self.a;
        let mut first_pivot = 0.0_f64;
        for s in 0..k {
            let mut r = s;
            let mut best = a[s * k + s].abs();
            for t in (s + 1)..k {
                let v = a[t * k + t].abs();
                if v > best {
                    best = v;
                    r = t;
                }
            }
            if r != s {
                for c in 0..k {
                    a.swap(s * k + c, r * k + c);
                }
                for row in 0..k {
                    a.swap(row * k + s, row * k + r);
                }
                self.perm.swap(s, r);
            }
            let piv = a[s * k + s];
            if s == 0 {
                first_pivot = piv.abs();
            }
            if !(piv.abs() > PIVOT_TOLERANCE * first_pivot) || first_pivot == 0.0 {
                return false;
            }
            for t in (s + 1)..k {
                let lt = a[t * k + s] / piv;
                if lt == 0.0 {
                    continue;
                }
                for u in (s + 1)..k {
                    a[t * k + u] -= lt * a[s * k + u];
                }
            }
            for t in (s + 1)..k {
                a[t * k + s] /= piv;
            }
        }
        true
    }

    /// Solves the factored system in place. `rhs` is indexed like the `idx`
    /// slice passed to [`BlockFactor::factor`].
    pub fn solve_in_place(&mut self, rhs: &mut [f64]) {
        let k = self.k;
        debug_assert_eq!(rhs.len(), k);
        let a = &self.a;
        self.work.clear();
        self.work.extend(self.perm.iter().map(|&p| rhs[p]));
        let w = &mut self.work;
        for s in 0..k {
            let mut acc = w[s];
            for u in 0..s {
                acc -= a[s * k + u] * w[u];
            }
            w[s] = acc;
        }
        for s in 0..k {
            w[s] /= a[s * k + s];
        }
        for s in (0..k).rev() {
            let mut acc = w[s];
            for t in (s + 1)..k {
                acc -= a[t * k + s] * w[t];
            }
            w[s] = acc;
        }
        for (s, &p) in self.perm.iter().enumerate() {
            rhs[p] = w[s];
        }
    }
}

/// Eigenvalue-based positive-definiteness test: every eigenvalue must exceed
/// `PD_TOLERANCE` times the largest one.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return false;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    max > 0.0 && eig.eigenvalues.iter().all(|&l| l > PD_TOLERANCE * max)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Copies the average of the two triangles into both.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_factor_solves_against_lu() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, 0.5, 0.2, 1.0, 3.0, 0.3, 0.1, 0.5, 0.3, 2.0, 0.4, 0.2, 0.1, 0.4, 5.0,
            ],
        );
        let idx = [3, 0, 2];
        let mut f = BlockFactor::new();
        assert!(f.factor(&m, &idx));
        let mut rhs = vec![1.0, -2.0, 0.5];
        f.solve_in_place(&mut rhs);
        let sub = DMatrix::from_fn(3, 3, |r, c| m[(idx[r], idx[c])]);
        let expect = sub
            .lu()
            .solve(&nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]))
            .unwrap();
        for t in 0..3 {
            assert!((rhs[t] - expect[t]).abs() < 1e-13);
        }
    }

    #[test]
    fn block_factor_rejects_rank_deficient_block() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0]);
        let mut f = BlockFactor::new();
        assert!(!f.factor(&m, &[0, 1]));
        assert!(f.factor(&m, &[0, 2]));
        assert!(!f.factor(&DMatrix::zeros(2, 2), &[0]));
    }

    #[test]
    fn block_factor_handles_indefinite_nonsingular_block() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut f = BlockFactor::new();
        // zero diagonal cannot be pivoted on without 2x2 pivots
        assert!(!f.factor(&m, &[0, 1]));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(f.factor(&m, &[0, 1]));
        let mut rhs = vec![3.0, 3.0];
        f.solve_in_place(&mut rhs);
        assert!((rhs[0] - 1.0).abs() < 1e-14 && (rhs[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pd_check() {
        assert!(is_positive_definite(&DMatrix::identity(3, 3)));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(!is_positive_definite(&m));
    }
}
