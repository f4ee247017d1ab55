//! Eigendecomposition of moment estimates and subspace diagnostics.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::MomentEstimate;
use crate::functions::TargetFunction;

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, eigenvectors)` sorted by descending eigenvalue.
/// Each eigenvector has its largest-magnitude entry positive; exactly equal
/// eigenvalues are ordered by lexicographic comparison of their vectors.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch { expected: n, actual: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let tol = 1e-12 * scale;

    let off = |a: &DMatrix<f64>| {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    for _ in 0..MAX_SWEEPS {
        if off(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, DVector<f64>)> = (0..n)
        .map(|j| {
            let mut col = v.column(j).into_owned();
            let idx = col
                .iter()
                .enumerate()
                .fold((0usize, -1.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
                .0;
            if col[idx] < 0.0 {
                col.neg_mut();
            }
            (a[(j, j)], col)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| {
        lb.total_cmp(la).then_with(|| {
            va.iter()
                .zip(vb.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    let values = DVector::from_iterator(n, pairs.iter().map(|(l, _)| *l));
    let vectors = DMatrix::from_columns(&pairs.into_iter().map(|(_, c)| c).collect::<Vec<_>>());
    Ok((values, vectors))
}

/// Ordered eigenpairs of an estimate and the leading `r`-dimensional basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubspace {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub r: usize,
}

impl ActiveSubspace {
    /// Same eigenpairs, leading dimension `r`.
    pub fn with_rank(mut self, r: usize) -> Result<Self> {
        if r == 0 || r > self.eigenvalues.len() {
            return Err(Error::InvalidArgument(format!("rank must lie in 1..={}, got {r}", self.eigenvalues.len())));
        }
        self.r = r;
        Ok(self)
    }

    /// `n × r` orthonormal basis of the leading eigenvectors.
    pub fn basis(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.r).into_owned()
    }

    /// `λ_r - λ_{r+1}`, or `λ_r` when `r = n`.
    pub fn eigen_gap(&self) -> f64 {
        let next = self.eigenvalues.get(self.r).copied().unwrap_or(0.0);
        self.eigenvalues[self.r - 1] - next
    }
}

/// Full eigendecomposition of an estimate (`r = n`).
pub fn eigendecompose(est: &MomentEstimate) -> Result<ActiveSubspace> {
    let (eigenvalues, eigenvectors) = symmetric_eigen(&est.matrix)?;
    let r = eigenvalues.len();
    Ok(ActiveSubspace { eigenvalues, eigenvectors, r })
}

fn check_orthonormal(u: &DMatrix<f64>) -> Result<()> {
    let dev = (u.transpose() * u - DMatrix::identity(u.ncols(), u.ncols())).amax();
    if dev > 1e-8 {
        return Err(Error::NotOrthonormal(dev));
    }
    Ok(())
}

/// All principal angles between `span(U)` and `span(V)`, ascending.
pub fn principal_angles(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch { expected: u.nrows(), actual: v.nrows() });
    }
    if u.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch { expected: u.ncols(), actual: v.ncols() });
    }
    check_orthonormal(u)?;
    check_orthonormal(v)?;
    let utv = u.transpose() * v;
    let residual = v - u * &utv;
    // Cosines from U*V, sines from (I - UU*)V; pairing them through atan2 keeps
    // small angles accurate.
    let mut cos: Vec<f64> = utv.singular_values().iter().map(|c| c.min(1.0)).collect();
    let mut sin: Vec<f64> = residual.singular_values().iter().map(|s| s.min(1.0)).collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    sin.sort_by(f64::total_cmp);
    Ok(cos.iter().zip(&sin).map(|(c, s)| s.atan2(*c)).collect())
}

/// Largest principal angle between `span(U)` and `span(V)`, in `[0, π/2]`.
pub fn principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    Ok(principal_angles(u, v)?.last().copied().unwrap_or(0.0))
}

/// How well an estimate recovers the subspace of a ridge function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub eigenvalues: Vec<f64>,
    pub r: usize,
    pub principal_angle_rad: f64,
    pub principal_angles_rad: Vec<f64>,
    pub eigen_gap: f64,
}

pub fn subspace_recovery_report(f: &TargetFunction, est: &MomentEstimate, r: usize) -> Result<SubspaceReport> {
    let truth = f.ridge_basis().ok_or(Error::MissingOracle("ridge basis"))?;
    let n = est.n;
    if r == 0 || r >= n {
        return Err(Error::InvalidArgument(format!("rank must lie in 1..{n}, got {r}")));
    }
    if truth.ncols() != r {
        return Err(Error::DimensionMismatch { expected: truth.ncols(), actual: r });
    }
    let subspace = eigendecompose(est)?.with_rank(r)?;
    let angles = principal_angles(&subspace.basis(), truth)?;
    Ok(SubspaceReport {
        eigenvalues: subspace.eigenvalues.iter().copied().collect(),
        r,
        principal_angle_rad: *angles.last().expect("r >= 1"),
        principal_angles_rad: angles,
        eigen_gap: subspace.eigen_gap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_matrix_is_sorted() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let (l, v) = symmetric_eigen(&m).unwrap();
        assert_eq!(l.as_slice(), &[3.0, 2.0, 1.0]);
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(v, p);
    }

    #[test]
    fn rank_one_matrix() {
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let (l, v) = symmetric_eigen(&(&b * b.transpose())).unwrap();
        assert_relative_eq!(l[0], 5.0, epsilon = 1e-14);
        assert!(l[1].abs() < 1e-14);
        assert_relative_eq!(v.column(0).into_owned(), b / 5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(symmetric_eigen(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn principal_angle_examples() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(principal_angle(&e1, &e1).unwrap(), 0.0);
        assert_relative_eq!(principal_angle(&e1, &e2).unwrap(), std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        let rot = DMatrix::from_column_slice(2, 1, &[0.3f64.cos(), 0.3f64.sin()]);
        assert_relative_eq!(principal_angle(&e1, &rot).unwrap(), 0.3, epsilon = 1e-10);
        assert!(principal_angle(&e1, &DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn eigen_gap_uses_next_eigenvalue() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 4.0, 1.0]));
        let est = crate::estimator::MomentEstimate::from_json(
            &serde_json::json!({"kind": "oracle", "n": 3, "N": 1, "N_total": null, "N_min": null,
                "epsilon": null, "seed": null, "matrix": [[5.0, 0, 0], [0, 4.0, 0], [0, 0, 1.0]]})
                .to_string(),
        )
        .unwrap();
        assert_eq!(est.matrix, m);
        let s = eigendecompose(&est).unwrap().with_rank(2).unwrap();
        assert_eq!(s.eigen_gap(), 3.0);
        assert_eq!(s.basis().ncols(), 2);
    }
}
