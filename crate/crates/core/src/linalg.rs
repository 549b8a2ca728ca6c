//! Dense complex Hermitian eigendecomposition by cyclic Jacobi rotations.

use ndarray::{Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_REL_TOL: f64 = 1e-12;

/// Eigenpairs sorted by ascending eigenvalue; `vectors` holds them as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Array2<Complex64>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += a[[p, q]].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix. Only the Hermitian part
/// `(A + A^H) / 2` is used.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `1e-12 * ||A||_F`; exceeding [`JACOBI_MAX_SWEEPS`] is an error carrying
/// the residual.
pub fn hermitian_eigen(a: &Array2<Complex64>) -> Result<HermitianEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "eigendecomposition",
            expected: format!("square matrix ({n} x {n})"),
            got: format!("{:?}", a.dim()),
        });
    }
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let mut m = Array2::from_shape_fn((n, n), |(i, j)| (a[[i, j]] + a[[j, i]].conj()) * 0.5);
    let mut v = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let frob = m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let tol = JACOBI_REL_TOL * frob;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m);
        if off <= tol || frob == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence {
                sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE {
                    continue;
                }
                // Phase-rotate q so the pivot is real, then a real Jacobi rotation.
                let e = apq.conj() / r; // e^{-i alpha}
                let theta = (m[[q, q]].re - m[[p, p]].re) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (upp, upq) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
                let (uqp, uqq) = (-e * s, e * c);

                // A <- A U (columns p, q)
                for i in 0..n {
                    let (aip, aiq) = (m[[i, p]], m[[i, q]]);
                    m[[i, p]] = aip * upp + aiq * uqp;
                    m[[i, q]] = aip * upq + aiq * uqq;
                }
                // A <- U^H A (rows p, q)
                for j in 0..n {
                    let (apj, aqj) = (m[[p, j]], m[[q, j]]);
                    m[[p, j]] = upp.conj() * apj + uqp.conj() * aqj;
                    m[[q, j]] = upq.conj() * apj + uqq.conj() * aqj;
                }
                m[[p, q]] = Complex64::new(0.0, 0.0);
                m[[q, p]] = Complex64::new(0.0, 0.0);
                m[[p, p]].im = 0.0;
                m[[q, q]].im = 0.0;
                for i in 0..n {
                    let (vip, viq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = vip * upp + viq * uqp;
                    v[[i, q]] = vip * upq + viq * uqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].re.total_cmp(&m[[j, j]].re));
    let values = order.iter().map(|&i| m[[i, i]].re).collect();
    let vectors = v.select(Axis(1), &order);
    Ok(HermitianEigen {
        values,
        vectors,
        sweeps,
    })
}

/// `A^H B` for complex matrices.
pub fn adjoint_mul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|x| x.conj()).dot(b)
}

/// Largest deviation of `Q^H Q` from the identity.
pub fn orthonormality_error(q: &Array2<Complex64>) -> f64 {
    let g = adjoint_mul(q, q);
    g.indexed_iter()
        .map(|((i, j), v)| {
            let target = if i == j { 1.0 } else { 0.0 };
            (v - Complex64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}
