//! The tensor-product space `S¹₀(Ω) ⊗ S^r(0, Y)` of the truncated cylinder.
//!
//! Coefficients are indexed `j * n_omega + i` with the Ω dof `i` running
//! fastest, so a coefficient vector is the column-major storage of an
//! `n_omega × n_y` matrix whose column `j` is the slice at y-dof `j`. Column 0
//! holds the nodal values at `y = 0`: the trace slice.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::omega::OmegaMesh;
use crate::ymesh::GradedExtensionMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace {
    omega: OmegaMesh,
    ymesh: GradedExtensionMesh,
}

pub fn build_tensor_space(omega: OmegaMesh, ymesh: GradedExtensionMesh) -> TensorSpace {
    TensorSpace { omega, ymesh }
}

impl TensorSpace {
    pub fn omega(&self) -> &OmegaMesh {
        &self.omega
    }

    pub fn ymesh(&self) -> &GradedExtensionMesh {
        &self.ymesh
    }

    pub fn omega_dofs(&self) -> usize {
        self.omega.dof_count()
    }

    pub fn y_dofs(&self) -> usize {
        self.ymesh.dof_count()
    }

    pub fn dof_count(&self) -> usize {
        self.omega_dofs() * self.y_dofs()
    }

    pub fn index(&self, omega_dof: usize, y_dof: usize) -> usize {
        y_dof * self.omega_dofs() + omega_dof
    }

    pub fn trace_slice(&self) -> Range<usize> {
        0..self.omega_dofs()
    }

    /// The coefficient vector viewed as an `n_omega × n_y` matrix.
    pub fn as_matrix(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.omega_dofs(), self.y_dofs(), v.as_slice())
    }

    pub fn from_matrix(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_column_slice(m.as_slice())
    }

    /// Point value of the discrete function with coefficients `v` at `(x, y)`.
    pub fn evaluate(&self, v: &DVector<f64>, x: f64, y: f64) -> f64 {
        let profile = self.as_matrix(v) * self.ymesh.basis_values(y);
        self.omega.evaluate(&profile, x)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.omega.fingerprint().to_le_bytes());
        hasher.update(self.ymesh.fingerprint().to_le_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ymesh::geometric_mesh;

    #[test]
    fn dof_counting() {
        let omega = OmegaMesh::unit_interval(4).unwrap();
        let ymesh =
            GradedExtensionMesh::from_parts(vec![0.0, 0.5, 1.0], vec![1, 1], 0.5, 1.0).unwrap();
        let space = build_tensor_space(omega, ymesh);
        assert_eq!(space.dof_count(), 6);
        assert_eq!(space.trace_slice().len(), 3);
        let space = build_tensor_space(
            OmegaMesh::unit_interval(4).unwrap(),
            geometric_mesh(1.0, 3, 0.5, 1.0).unwrap(),
        );
        assert_eq!(space.y_dofs(), 6);
        assert_eq!(space.dof_count(), 18);
    }

    #[test]
    fn trace_basis_is_nodal() {
        let space = build_tensor_space(
            OmegaMesh::unit_interval(5).unwrap(),
            geometric_mesh(2.0, 3, 0.5, 1.0).unwrap(),
        );
        let nodes = space.omega().nodes().to_vec();
        for d in 0..space.dof_count() {
            let mut v = DVector::zeros(space.dof_count());
            v[d] = 1.0;
            for (i, &x) in nodes.iter().enumerate() {
                let expected = if d == space.index(i, 0) { 1.0 } else { 0.0 };
                assert!((space.evaluate(&v, x, 0.0) - expected).abs() < 1e-12);
            }
        }
    }
}
