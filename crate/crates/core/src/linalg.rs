//! Dense linear-algebra helpers with a fixed accumulation order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `X^T diag(d) X`, accumulated row by row in storage order.
pub(crate) fn weighted_gram(design: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let k = design.ncols();
    let mut out = DMatrix::<f64>::zeros(k, k);
    for (i, &di) in d.iter().enumerate() {
        for a in 0..k {
            let xa = design[(i, a)] * di;
            for b in 0..=a {
                out[(a, b)] += xa * design[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            out[(b, a)] = out[(a, b)];
        }
    }
    out
}

/// `X^T v`, accumulated row by row in storage order.
pub(crate) fn transpose_times(design: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    let k = design.ncols();
    let mut out = DVector::<f64>::zeros(k);
    for (i, &vi) in v.iter().enumerate() {
        for a in 0..k {
            out[a] += design[(i, a)] * vi;
        }
    }
    out
}

/// Linear scores `X beta`.
pub(crate) fn scores(design: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (0..design.nrows())
        .map(|i| {
            let mut s = 0.0;
            for j in 0..design.ncols() {
                s += design[(i, j)] * beta[j];
            }
            s
        })
        .collect()
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation(what));
    }
    nalgebra::Cholesky::new(m.clone()).ok_or(Error::SingularInformation(what))
}

/// Inverse of a symmetric positive definite matrix, symmetrised.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let inv = cholesky(m, what)?.inverse();
    Ok(symmetrize(&inv))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Max-abs entry.
pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Detects linear dependence among the columns of `design` using modified
/// Gram-Schmidt with reorthogonalisation.
///
/// Returns `None` when the columns are independent. Otherwise returns the
/// first dependent column together with the earlier columns that take part
/// in the dependency, in ascending order.
pub(crate) fn dependent_columns(design: &DMatrix<f64>) -> Option<Vec<usize>> {
    let n = design.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    // Column index of each basis vector and the upper-triangular factor.
    let mut owners: Vec<usize> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();

    for j in 0..design.ncols() {
        let original = design.column(j).into_owned();
        let scale = original.norm();
        let mut v = original.clone();
        let mut coeffs = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (k, q) in basis.iter().enumerate() {
                let c = q.dot(&v);
                coeffs[k] += c;
                v.axpy(-c, q, 1.0);
            }
        }
        let resid = v.norm();
        if scale == 0.0 || resid <= 1e-10 * scale.max(1.0) * (n as f64).sqrt() {
            // Solve R c = coeffs by back substitution to express column j in
            // terms of the earlier independent columns.
            let m = basis.len();
            let mut c = vec![0.0; m];
            for a in (0..m).rev() {
                let mut s = coeffs[a];
                for b in (a + 1)..m {
                    s -= r_cols[b][a] * c[b];
                }
                c[a] = s / r_cols[a][a];
            }
            let mut involved: Vec<usize> = c
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > 1e-8)
                .map(|(k, _)| owners[k])
                .collect();
            involved.push(j);
            involved.sort_unstable();
            return Some(involved);
        }
        let mut r = coeffs;
        r.push(resid);
        basis.push(v / resid);
        owners.push(j);
        r_cols.push(r);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_matches_nalgebra_product() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let d = [0.5, 2.0, 1.5];
        let expected = x.transpose() * DMatrix::from_diagonal(&DVector::from_row_slice(&d)) * &x;
        let got = weighted_gram(&x, &d);
        assert!((got - expected).abs().max() < 1e-14);
    }

    #[test]
    fn detects_duplicate_column() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(dependent_columns(&x), Some(vec![1, 2]));
    }

    #[test]
    fn detects_complement_column() {
        // x2 = 1 - x1 depends on the intercept and x1.
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(dependent_columns(&x), Some(vec![0, 1, 2]));
    }

    #[test]
    fn zero_column_is_dependent_alone() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(dependent_columns(&x), Some(vec![1]));
    }

    #[test]
    fn independent_columns_pass() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        assert_eq!(dependent_columns(&x), None);
    }
}
