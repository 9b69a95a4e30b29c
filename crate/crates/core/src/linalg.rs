//! Sparse helpers: Kronecker products and preconditioned conjugate gradients.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// `a ⊗ b` with the index of `b` running fastest.
pub fn kron(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    let mut coo = CooMatrix::new(ra * rb, ca * cb);
    for (i, j, &va) in a.triplet_iter() {
        for (k, l, &vb) in b.triplet_iter() {
            coo.push(i * rb + k, j * cb + l, va * vb);
        }
    }
    CsrMatrix::from(&coo)
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator `apply`.
pub fn conjugate_gradient(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    diagonal: &DVector<f64>,
    b: &DVector<f64>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<CgOutcome> {
    let b_norm = b.norm();
    let mut x = DVector::zeros(b.len());
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let precondition = |r: &DVector<f64>| r.component_div(diagonal);
    let mut r = b.clone();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 1..=max_iterations {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::numerical(
                "conjugate gradients met a non-positive curvature direction",
                r.norm() / b_norm,
            ));
        }
        let step = rz / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rel = r.norm() / b_norm;
        if rel <= tolerance {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
            });
        }
        z = precondition(&r);
        let rz_next = r.dot(&z);
        p = &z + (rz_next / rz) * &p;
        rz = rz_next;
    }
    Err(Error::numerical(
        format!("conjugate gradients did not converge in {max_iterations} iterations"),
        r.norm() / b_norm,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn kron_matches_dense_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 4.0, 5.0, 0.0, 6.0]);
        let k = DMatrix::from(&kron(
            &CsrMatrix::from(&a),
            &CsrMatrix::from(&b),
        ));
        assert_eq!(k, a.kronecker(&b));
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 30;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let out = conjugate_gradient(|v| &a * v, &a.diagonal(), &b, 1e-12, 200).unwrap();
        assert!((&a * &out.solution - &b).norm() <= 1e-11 * b.norm());
    }
}
