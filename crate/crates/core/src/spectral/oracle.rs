//! Cyclic Jacobi eigenvalue routine for tiny matrices.
//!
//! Shares no code with the QR-based path in the parent module, so the two can
//! cross-check each other.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_DIM: usize = 8;
const MAX_SWEEPS: usize = 100;
const OFF_TOLERANCE: f64 = 1e-14;

fn off_norm(a: &[[f64; MAX_DIM]; MAX_DIM], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += a[p][q] * a[p][q];
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues of a symmetric matrix of dimension at most 8, sorted ascending.
///
/// Sweeps rotations over all `(p, q)` pairs until the off-diagonal Frobenius
/// norm is below `1e-14 · max(1, ‖A‖_F)`.
pub fn brute_force_oracle(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidArgument("oracle needs a square matrix".into()));
    }
    if n > MAX_DIM {
        return Err(Error::OracleTooLarge(n));
    }
    let mut a = [[0.0f64; MAX_DIM]; MAX_DIM];
    for p in 0..n {
        for q in 0..n {
            let x = m[(p, q)];
            if !x.is_finite() {
                return Err(Error::NonFinite { row: p, col: q });
            }
            if x != m[(q, p)] {
                return Err(Error::NotSymmetric { row: p.min(q), col: p.max(q) });
            }
            a[p][q] = x;
        }
    }
    let scale = m.norm().max(1.0);
    let mut sweeps = 0;
    while off_norm(&a, n) >= OFF_TOLERANCE * scale {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(format!(
                "Jacobi oracle on {n}x{n} matrix after {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}
