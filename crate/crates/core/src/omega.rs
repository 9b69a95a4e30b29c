//! The physical domain: a partition of the interval `Ω = (a, b)` carrying the
//! diffusion coefficient, continuous P1 functions vanishing on `∂Ω`, and
//! piecewise-constant reaction coefficients.
//!
//! P1 functions are stored by their values at the interior nodes, so a mesh
//! with `n` cells has `n - 1` degrees of freedom. Cellwise fields (reaction
//! coefficients, gradients) are stored one value per cell.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMesh {
    breakpoints: Vec<f64>,
    diffusion: Vec<f64>,
}

impl OmegaMesh {
    pub fn new(breakpoints: Vec<f64>, diffusion: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Config("a mesh needs at least one cell".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "mesh breakpoints must be strictly increasing".into(),
            ));
        }
        if diffusion.len() != breakpoints.len() - 1 {
            return Err(Error::Config(format!(
                "{} diffusion values given for {} cells",
                diffusion.len(),
                breakpoints.len() - 1
            )));
        }
        if diffusion.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Config(
                "diffusion coefficient must be positive on every cell".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            diffusion,
        })
    }

    /// Uniform partition of `(a, b)` with unit diffusion.
    pub fn uniform(a: f64, b: f64, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Config("a mesh needs at least one cell".into()));
        }
        let h = (b - a) / cells as f64;
        let mut breakpoints: Vec<f64> = (0..=cells).map(|i| a + h * i as f64).collect();
        breakpoints[cells] = b;
        Self::new(breakpoints, vec![1.0; cells])
    }

    pub fn unit_interval(cells: usize) -> Result<Self> {
        Self::uniform(0.0, 1.0, cells)
    }

    pub fn with_diffusion(mut self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let diffusion = (0..self.cell_count())
            .map(|k| f(self.cell_midpoint(k)))
            .collect();
        self.diffusion = diffusion;
        Self::new(self.breakpoints, self.diffusion)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn cell_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Number of interior P1 nodes.
    pub fn dof_count(&self) -> usize {
        self.cell_count() - 1
    }

    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        (self.breakpoints[k], self.breakpoints[k + 1])
    }

    pub fn cell_width(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }

    pub fn cell_midpoint(&self, k: usize) -> f64 {
        0.5 * (self.breakpoints[k] + self.breakpoints[k + 1])
    }

    pub fn cell_widths(&self) -> DVector<f64> {
        DVector::from_iterator(self.cell_count(), (0..self.cell_count()).map(|k| self.cell_width(k)))
    }

    /// Largest cell width `h`.
    pub fn meshwidth(&self) -> f64 {
        (0..self.cell_count())
            .map(|k| self.cell_width(k))
            .fold(0.0, f64::max)
    }

    /// Coordinates of the interior nodes, in dof order.
    pub fn nodes(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    /// Dofs of the left and right vertex of cell `k`; boundary vertices have none.
    pub fn cell_dofs(&self, k: usize) -> [Option<usize>; 2] {
        let n = self.cell_count();
        let left = (k >= 1).then(|| k - 1);
        let right = (k + 1 < n).then_some(k);
        [left, right]
    }

    pub fn local_mass(&self, k: usize) -> [[f64; 2]; 2] {
        let h = self.cell_width(k);
        [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
    }

    pub fn local_stiffness(&self, k: usize) -> [[f64; 2]; 2] {
        let c = self.diffusion[k] / self.cell_width(k);
        [[c, -c], [-c, c]]
    }

    /// Nodal interpolant of `f` (boundary values are dropped).
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.dof_count(), self.nodes().iter().map(|&x| f(x)))
    }

    /// Point evaluation of the P1 function with interior values `values`.
    pub fn evaluate(&self, values: &DVector<f64>, x: f64) -> f64 {
        let (a, b) = self.interval();
        if x <= a || x >= b {
            return 0.0;
        }
        let k = match self
            .breakpoints
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(i) => return if i == 0 || i == self.cell_count() { 0.0 } else { values[i - 1] },
            Err(i) => i - 1,
        };
        let (xl, xr) = self.cell_bounds(k);
        let [dl, dr] = self.cell_dofs(k);
        let vl = dl.map_or(0.0, |d| values[d]);
        let vr = dr.map_or(0.0, |d| values[d]);
        let t = (x - xl) / (xr - xl);
        (1.0 - t) * vl + t * vr
    }

    /// Interpolates a P1 function on this mesh onto the nodes of `target`.
    /// Exact when `target` refines this mesh.
    pub fn transfer(&self, values: &DVector<f64>, target: &OmegaMesh) -> DVector<f64> {
        DVector::from_iterator(
            target.dof_count(),
            target.nodes().iter().map(|&x| self.evaluate(values, x)),
        )
    }

    /// Bisects every cell; diffusion values are inherited.
    pub fn refine(&self) -> OmegaMesh {
        let mut breakpoints = Vec::with_capacity(2 * self.breakpoints.len() - 1);
        let mut diffusion = Vec::with_capacity(2 * self.cell_count());
        for k in 0..self.cell_count() {
            breakpoints.push(self.breakpoints[k]);
            breakpoints.push(self.cell_midpoint(k));
            diffusion.extend([self.diffusion[k]; 2]);
        }
        breakpoints.push(*self.breakpoints.last().unwrap());
        OmegaMesh {
            breakpoints,
            diffusion,
        }
    }

    /// Index of the cell containing `x` (right-continuous, last cell closed).
    pub fn locate(&self, x: f64) -> usize {
        let k = self.breakpoints.partition_point(|&p| p <= x);
        k.saturating_sub(1).min(self.cell_count() - 1)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for v in self.breakpoints.iter().chain(&self.diffusion) {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// `L²(Ω)` inner product of two cellwise-constant fields.
    pub fn cell_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (0..self.cell_count())
            .map(|k| self.cell_width(k) * a[k] * b[k])
            .sum()
    }

    pub fn cell_norm(&self, a: &DVector<f64>) -> f64 {
        self.cell_inner(a, a).sqrt()
    }

    fn assemble(&self, local: impl Fn(usize) -> [[f64; 2]; 2]) -> CsrMatrix<f64> {
        let n = self.dof_count();
        let mut coo = CooMatrix::new(n, n);
        for k in 0..self.cell_count() {
            let m = local(k);
            let dofs = self.cell_dofs(k);
            for (a, da) in dofs.iter().enumerate() {
                for (b, db) in dofs.iter().enumerate() {
                    if let (Some(i), Some(j)) = (da, db) {
                        coo.push(*i, *j, m[a][b]);
                    }
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    /// `∫ A w' v'`.
    pub fn stiffness_matrix(&self) -> CsrMatrix<f64> {
        self.assemble(|k| self.local_stiffness(k))
    }

    /// Consistent P1 mass matrix.
    pub fn mass_matrix(&self) -> CsrMatrix<f64> {
        self.assemble(|k| self.local_mass(k))
    }

    /// `∫ c w v` for a cellwise-constant weight `c`.
    pub fn weighted_mass_matrix(&self, weights: &[f64]) -> CsrMatrix<f64> {
        self.assemble(|k| {
            let m = self.local_mass(k);
            let c = weights[k];
            [[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]]
        })
    }
}

/// A reaction coefficient in the admissible box `0 <= q <= q̄`,
/// constant on each cell of the Ω mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    values: DVector<f64>,
    upper: f64,
}

impl Coefficient {
    pub fn new(values: DVector<f64>, upper: f64) -> Result<Self> {
        if !(upper > 0.0) {
            return Err(Error::Config(format!("upper bound q̄ = {upper} must be positive")));
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(0.0..=upper).contains(&v))
        {
            return Err(Error::Constraint(format!(
                "coefficient value {v} on cell {k} outside [0, {upper}]"
            )));
        }
        Ok(Self { values, upper })
    }

    pub fn constant(cells: usize, value: f64, upper: f64) -> Result<Self> {
        Self::new(DVector::from_element(cells, value), upper)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for v in self.values.iter().chain(std::iter::once(&self.upper)) {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    /// Piecewise-constant prolongation onto a refinement of `coarse`.
    pub fn transfer(&self, coarse: &OmegaMesh, fine: &OmegaMesh) -> Coefficient {
        let values = DVector::from_iterator(
            fine.cell_count(),
            (0..fine.cell_count()).map(|k| self.values[coarse.locate(fine.cell_midpoint(k))]),
        );
        Coefficient {
            values,
            upper: self.upper,
        }
    }
}

/// Ω-side bilinear forms restricted to the interior P1 dofs.
#[derive(Debug, Clone)]
pub struct OmegaForms {
    /// `∫ A w' v'`
    pub stiffness: CsrMatrix<f64>,
    /// `∫ q w v`
    pub reaction_mass: CsrMatrix<f64>,
    /// `a_Ω(w, v) = ∫ A w' v' + q w v`
    pub reaction_stiffness: CsrMatrix<f64>,
    pub mass: CsrMatrix<f64>,
}

pub fn assemble_omega_forms(mesh: &OmegaMesh, q: &Coefficient) -> Result<OmegaForms> {
    if q.len() != mesh.cell_count() {
        return Err(Error::Config(format!(
            "coefficient has {} cells, mesh has {}",
            q.len(),
            mesh.cell_count()
        )));
    }
    let stiffness = mesh.stiffness_matrix();
    let reaction_mass = mesh.weighted_mass_matrix(q.values().as_slice());
    let reaction_stiffness = &stiffness + &reaction_mass;
    Ok(OmegaForms {
        stiffness,
        reaction_mass,
        reaction_stiffness,
        mass: mesh.mass_matrix(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from(m)
    }

    #[test]
    fn single_hat_forms() {
        let mesh = OmegaMesh::unit_interval(2).unwrap();
        let q = Coefficient::constant(2, 0.0, 1.0).unwrap();
        let forms = assemble_omega_forms(&mesh, &q).unwrap();
        let k = dense(&forms.reaction_stiffness);
        let m = dense(&forms.mass);
        assert_eq!(k.shape(), (1, 1));
        assert!((k[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((m[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn constant_reaction_shifts_by_mass() {
        let mesh = OmegaMesh::unit_interval(7).unwrap();
        let zero = Coefficient::constant(7, 0.0, 5.0).unwrap();
        let c = Coefficient::constant(7, 2.5, 5.0).unwrap();
        let f0 = assemble_omega_forms(&mesh, &zero).unwrap();
        let fc = assemble_omega_forms(&mesh, &c).unwrap();
        let diff = dense(&fc.reaction_stiffness) - dense(&f0.reaction_stiffness) - 2.5 * dense(&f0.mass);
        assert!(diff.amax() < 1e-13);
    }

    #[test]
    fn mismatched_coefficient_is_rejected() {
        let mesh = OmegaMesh::unit_interval(4).unwrap();
        let q = Coefficient::constant(3, 0.0, 1.0).unwrap();
        assert!(matches!(
            assemble_omega_forms(&mesh, &q),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn coefficient_box_is_enforced() {
        assert!(matches!(
            Coefficient::new(DVector::from_vec(vec![0.2, 1.1]), 1.0),
            Err(Error::Constraint(_))
        ));
        assert!(Coefficient::new(DVector::from_vec(vec![0.0, 1.0]), 1.0).is_ok());
    }

    #[test]
    fn invalid_meshes_are_rejected() {
        assert!(OmegaMesh::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0; 3]).is_err());
        assert!(OmegaMesh::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(OmegaMesh::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn transfer_to_refinement_is_exact() {
        let coarse = OmegaMesh::unit_interval(4).unwrap();
        let fine = coarse.refine().refine();
        let v = coarse.interpolate(|x| x * (1.0 - x));
        let w = coarse.transfer(&v, &fine);
        for (i, &x) in fine.nodes().iter().enumerate() {
            assert!((w[i] - coarse.evaluate(&v, x)).abs() < 1e-15);
        }
        // Back to the coarse nodes recovers the original values.
        let back = fine.transfer(&w, &coarse);
        assert!((back - v).amax() < 1e-15);
    }

    #[test]
    fn locate_finds_cells() {
        let mesh = OmegaMesh::unit_interval(4).unwrap();
        assert_eq!(mesh.locate(0.0), 0);
        assert_eq!(mesh.locate(0.3), 1);
        assert_eq!(mesh.locate(0.5), 2);
        assert_eq!(mesh.locate(1.0), 3);
    }
}
