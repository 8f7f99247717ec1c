//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Eigenvalues (descending) and matching eigenvectors (as rows) of a
/// symmetric matrix. Convergence is driven to machine precision relative to
/// the input's Frobenius norm.
pub fn symmetric_eigen(matrix: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    if matrix.rank() != 2 || matrix.rows() != matrix.cols() {
        return Err(Error::shape(
            "symmetric_eigen",
            format!("{:?}", matrix.shape()),
        ));
    }
    let n = matrix.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix.get(i, j) - matrix.get(j, i)).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "symmetric_eigen: matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut a = matrix.clone();
    let mut v = Tensor::zeros(&[n, n]);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let frob: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = (frob * 1e-14).max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j).powi(2);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    order.sort_by(|&x, &y| diag[y].partial_cmp(&diag[x]).unwrap());

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Tensor::zeros(&[n, n]);
    for (row, &col) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(row, k, v.get(k, col));
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let m = Tensor::from_vec(&[3, 3], vec![2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert_eq!(vals, vec![5.0, 2.0, 1.0]);
        // Row 0 should be +/- e_1.
        assert!((vecs.get(0, 1).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_known_2x2_eigenpair() {
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1.
        let m = Tensor::from_vec(&[2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        for r in 0..2 {
            // Residual || M v - lambda v ||.
            let v0 = vecs.get(r, 0);
            let v1 = vecs.get(r, 1);
            let mv = [
                m.get(0, 0) * v0 + m.get(0, 1) * v1,
                m.get(1, 0) * v0 + m.get(1, 1) * v1,
            ];
            let res = ((mv[0] - vals[r] * v0).powi(2) + (mv[1] - vals[r] * v1).powi(2)).sqrt();
            assert!(res < 1e-12);
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let mut data = vec![0.0; 36];
        // A fixed symmetric matrix with distinct spectrum.
        for i in 0..6 {
            for j in 0..6 {
                data[i * 6 + j] = ((i * j) as f64).sin() + if i == j { 3.0 + i as f64 } else { 0.0 };
            }
        }
        for i in 0..6 {
            for j in 0..i {
                let avg = (data[i * 6 + j] + data[j * 6 + i]) / 2.0;
                data[i * 6 + j] = avg;
                data[j * 6 + i] = avg;
            }
        }
        let m = Tensor::from_vec(&[6, 6], data).unwrap();
        let (_, vecs) = symmetric_eigen(&m).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = (0..6).map(|k| vecs.get(i, k) * vecs.get(j, k)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "rows {i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(symmetric_eigen(&m).is_err());
    }
}
