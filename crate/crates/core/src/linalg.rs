//! Small dense complex linear algebra used by the dynamics engine:
//! Hermitian symmetrization, Jacobi eigenvalues, Gaussian elimination and
//! numerical rank. Everything here targets matrices of dimension <= 16.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("singular matrix (pivot {0:.3e} below tolerance)")]
    Singular(f64),
    #[error("dimension mismatch")]
    Shape,
}

/// Replace m by its Hermitian part (m + m^dagger)/2.
pub fn hermitize(m: &mut Array2<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn trace(m: &Array2<C64>) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations,
/// returned in ascending order.
pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm_sqr() < 1e-36 {
                    continue;
                }
                // Unitary 2x2 rotation diagonalizing the (p,q) block.
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // column rotation: col_p' = c col_p - s phase* col_q, etc.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * phase.conj() * akq;
                    a[(k, q)] = s * phase * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * phase * aqk;
                    a[(q, k)] = s * phase.conj() * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<C64>, b: &Array1<C64>) -> Result<Array1<C64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(LinalgError::Shape);
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let (piv, pmag) = (col..n)
            .map(|r| (r, m[(r, col)].norm()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pmag < 1e-300 {
            return Err(LinalgError::Singular(pmag));
        }
        if piv != col {
            for k in 0..n {
                m.swap((col, k), (piv, k));
            }
            rhs.swap(col, piv);
        }
        let d = m[(col, col)];
        for r in (col + 1)..n {
            let f = m[(r, col)] / d;
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for k in col..n {
                let v = m[(col, k)];
                m[(r, k)] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[(row, k)] * x[k];
        }
        x[row] = acc / m[(row, row)];
    }
    Ok(x)
}

/// Numerical rank by row echelon reduction with relative tolerance `tol`
/// (relative to the largest row norm).
pub fn rank(a: &Array2<C64>, tol: f64) -> usize {
    let (nr, nc) = (a.nrows(), a.ncols());
    let mut m = a.clone();
    let scale = (0..nr)
        .map(|r| (0..nc).map(|c| m[(r, c)].norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let thresh = tol * scale;
    let mut rank = 0;
    let mut row = 0;
    for col in 0..nc {
        let (piv, pmag) = (row..nr)
            .map(|r| (r, m[(r, col)].norm()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap_or((row, 0.0));
        if pmag <= thresh {
            continue;
        }
        if piv != row {
            for k in 0..nc {
                m.swap((row, k), (piv, k));
            }
        }
        let d = m[(row, col)];
        for r in (row + 1)..nr {
            let f = m[(r, col)] / d;
            for k in col..nc {
                let v = m[(row, k)];
                m[(r, k)] -= f * v;
            }
        }
        rank += 1;
        row += 1;
        if row == nr {
            break;
        }
    }
    rank
}
