//! Dense linear-algebra helpers on top of `faer`.

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

/// Moore-Penrose pseudo-inverse together with the rank it was built at.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    pub matrix: Mat<f64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Pseudo-inverse via thin SVD; singular values below `rel_tol · σ_max` are
/// treated as zero.
pub fn pseudo_inverse(a: MatRef<'_, f64>, rel_tol: f64) -> Result<PseudoInverse> {
    if !all_finite(a) {
        return Err(Error::NonFinite);
    }
    let (rows, cols) = (a.nrows(), a.ncols());
    if rows == 0 || cols == 0 {
        return Ok(PseudoInverse {
            matrix: Mat::zeros(cols, rows),
            rank: 0,
            singular_values: Vec::new(),
        });
    }
    let svd = a.thin_svd().map_err(|_| Error::SvdFailure)?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * smax;
    let rank = s.iter().take_while(|&&v| v > cutoff && v > 0.0).count();

    let u = svd.U();
    let v = svd.V();
    // A† = V_r Σ_r⁻¹ U_rᵀ
    let scaled_v = Mat::from_fn(cols, rank, |i, j| v[(i, j)] / s[j]);
    let matrix = &scaled_v * u.get(.., ..rank).transpose();
    Ok(PseudoInverse {
        matrix,
        rank,
        singular_values: s,
    })
}

pub fn all_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

/// Numerical rank of a complex matrix at `rel_tol · σ_max`.
pub fn numerical_rank(a: MatRef<'_, c64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    match a.singular_values() {
        Ok(s) => {
            let smax = s.first().copied().unwrap_or(0.0);
            if smax == 0.0 {
                return 0;
            }
            s.iter().filter(|&&v| v > rel_tol * smax).count()
        }
        Err(_) => 0,
    }
}

pub fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// Matrix from row slices.
pub fn from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (j, xj) in x.iter().enumerate() {
        if *xj == 0.0 {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += a[(i, j)] * xj;
        }
    }
    y
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_pinv() {
        let i = Mat::<f64>::identity(4, 4);
        let p = pseudo_inverse(i.as_ref(), 1e-10).unwrap();
        assert_eq!(p.rank, 4);
        assert_abs_diff_eq!((&p.matrix - &i).norm_l2(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn row_vector_pinv() {
        let a = from_rows(&[vec![1.0, 2.0]]);
        let p = pseudo_inverse(a.as_ref(), 1e-10).unwrap();
        assert_eq!((p.matrix.nrows(), p.matrix.ncols()), (2, 1));
        // Aᵀ / (A Aᵀ)
        assert_abs_diff_eq!(p.matrix[(0, 0)], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(p.matrix[(1, 0)], 0.4, epsilon = 1e-15);
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn truncation_drops_tiny_singular_values() {
        let a = from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-16]]);
        let p = pseudo_inverse(a.as_ref(), 1e-10).unwrap();
        assert_eq!(p.rank, 1);
        assert_abs_diff_eq!(p.matrix[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(p.matrix[(1, 1)], 0.0);
        assert_eq!(p.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let a = from_rows(&[vec![1.0, f64::NAN]]);
        assert!(matches!(pseudo_inverse(a.as_ref(), 1e-10), Err(Error::NonFinite)));
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let p = pseudo_inverse(Mat::<f64>::zeros(3, 5).as_ref(), 1e-10).unwrap();
        assert_eq!(p.rank, 0);
        assert_eq!(p.matrix.norm_l2(), 0.0);
    }

    fn well_conditioned(rows: usize, cols: usize, vals: &[f64]) -> Mat<f64> {
        let mut a = Mat::from_fn(rows, cols, |i, j| vals[(i * cols + j) % vals.len()]);
        for k in 0..rows.min(cols) {
            a[(k, k)] += 4.0;
        }
        a
    }

    proptest! {
        #[test]
        fn penrose_conditions(
            rows in 1usize..7,
            cols in 1usize..7,
            vals in prop::collection::vec(-1.0f64..1.0, 49),
        ) {
            let a = well_conditioned(rows, cols, &vals);
            let p = pseudo_inverse(a.as_ref(), 1e-12).unwrap();
            let apa = &(&a * &p.matrix) * &a;
            let pap = &(&p.matrix * &a) * &p.matrix;
            prop_assert!((&apa - &a).norm_l2() < 1e-9);
            prop_assert!((&pap - &p.matrix).norm_l2() < 1e-9);
        }
    }
}
