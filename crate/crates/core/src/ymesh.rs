//! Meshes and hp finite elements for the extension variable `y ∈ [0, Y]`.
//!
//! Each element carries nodal Lagrange shape functions on Gauss–Lobatto
//! points. Neighbouring elements share their endpoint node, and the node at
//! `y = Y` is removed so that every discrete function vanishes on the top of
//! the truncated cylinder. Global y-dof `0` is the node at `y = 0`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi, gauss_legendre, gauss_lobatto_nodes};

/// Guards `⌈slope (i - 1)⌉` against products that land a few ulps above an integer.
const CEIL_GUARD: f64 = 1e-12;
/// Largest number of Gauss–Legendre points used on a single element.
const MAX_SMOOTH_POINTS: usize = 96;

#[derive(Debug, Clone, PartialEq)]
pub struct GradedExtensionMesh {
    height: f64,
    grading: f64,
    slope: f64,
    breakpoints: Vec<f64>,
    degrees: Vec<usize>,
}

/// `r_i = 1 + ⌈slope (i - 1)⌉` for the 1-based element index `i`.
pub fn linear_degrees(elements: usize, slope: f64) -> Vec<usize> {
    (0..elements)
        .map(|i| 1 + (slope * i as f64 - CEIL_GUARD).ceil().max(0.0) as usize)
        .collect()
}

/// Geometric mesh with `elements` cells on `[0, height]` graded toward `y = 0`
/// by the factor `grading`, and linearly increasing degrees.
pub fn geometric_mesh(
    height: f64,
    elements: usize,
    grading: f64,
    slope: f64,
) -> Result<GradedExtensionMesh> {
    if !(grading > 0.0 && grading < 1.0) {
        return Err(Error::Domain(format!("grading factor {grading} outside (0, 1)")));
    }
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::Domain(format!("truncation height {height} must be positive")));
    }
    if elements == 0 {
        return Err(Error::Domain("a y-mesh needs at least one element".into()));
    }
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(Error::Domain(format!("degree slope {slope} must be positive")));
    }
    let mut breakpoints = Vec::with_capacity(elements + 1);
    breakpoints.push(0.0);
    for i in 1..=elements {
        breakpoints.push(height * grading.powi((elements - i) as i32));
    }
    Ok(GradedExtensionMesh {
        height,
        grading,
        slope,
        breakpoints,
        degrees: linear_degrees(elements, slope),
    })
}

impl GradedExtensionMesh {
    /// Arbitrary mesh from explicit breakpoints and degrees. `grading` and
    /// `slope` are carried as descriptive metadata only.
    pub fn from_parts(
        breakpoints: Vec<f64>,
        degrees: Vec<usize>,
        grading: f64,
        slope: f64,
    ) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 {
            return Err(Error::Config(
                "y-mesh breakpoints must start at 0 and contain an element".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || !breakpoints.iter().all(|b| b.is_finite()) {
            return Err(Error::Config("y-mesh breakpoints must be strictly increasing".into()));
        }
        if degrees.len() != breakpoints.len() - 1 || degrees.contains(&0) {
            return Err(Error::Config(format!(
                "need one positive degree per element, got {} for {} elements",
                degrees.len(),
                breakpoints.len() - 1
            )));
        }
        Ok(Self {
            height: *breakpoints.last().unwrap(),
            grading,
            slope,
            breakpoints,
            degrees,
        })
    }

    /// The first `elements` elements, truncated at their top breakpoint.
    pub fn prefix(&self, elements: usize) -> Result<Self> {
        if elements == 0 || elements > self.element_count() {
            return Err(Error::Config(format!(
                "prefix of {elements} elements requested from {}",
                self.element_count()
            )));
        }
        Self::from_parts(
            self.breakpoints[..=elements].to_vec(),
            self.degrees[..elements].to_vec(),
            self.grading,
            self.slope,
        )
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn element_count(&self) -> usize {
        self.degrees.len()
    }

    pub fn element(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    /// Number of y-dofs: all shared nodes except the one at `y = Y`.
    pub fn dof_count(&self) -> usize {
        self.degrees.iter().sum()
    }

    /// Dof index of local node 0 of element `i`.
    pub fn element_offset(&self, i: usize) -> usize {
        self.degrees[..i].iter().sum()
    }

    /// Global dof of each local node of element `i`; `None` for the removed top node.
    pub fn element_dofs(&self, i: usize) -> Vec<Option<usize>> {
        let offset = self.element_offset(i);
        let n = self.dof_count();
        (0..=self.degrees[i])
            .map(|a| Some(offset + a).filter(|&d| d < n))
            .collect()
    }

    /// Coordinates of the y-dofs.
    pub fn dof_coordinates(&self) -> Vec<f64> {
        let mut coords = Vec::with_capacity(self.dof_count());
        for i in 0..self.element_count() {
            let (c, d) = self.element(i);
            let nodes = gauss_lobatto_nodes(self.degrees[i]);
            for &x in &nodes[..nodes.len() - 1] {
                coords.push(c + 0.5 * (d - c) * (1.0 + x));
            }
        }
        coords
    }

    /// Values of all y-basis functions at `y`.
    pub fn basis_values(&self, y: f64) -> DVector<f64> {
        let mut values = DVector::zeros(self.dof_count());
        if !(0.0..self.height).contains(&y) {
            return values;
        }
        let i = self.breakpoints.partition_point(|&b| b <= y).saturating_sub(1);
        let (c, d) = self.element(i);
        let shape = LagrangeBasis::new(self.degrees[i]);
        let local = shape.values(2.0 * (y - c) / (d - c) - 1.0);
        for (a, dof) in self.element_dofs(i).into_iter().enumerate() {
            if let Some(dof) = dof {
                values[dof] = local[a];
            }
        }
        values
    }

    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for b in &self.breakpoints {
            hasher.update(b.to_le_bytes());
        }
        for &r in &self.degrees {
            hasher.update((r as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Text form: `Y M sigma slope`, then the breakpoints, then the degrees.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{} {} {} {}",
            self.height,
            self.element_count(),
            self.grading,
            self.slope
        )
        .unwrap();
        let join = |v: Vec<String>| v.join(" ");
        writeln!(out, "{}", join(self.breakpoints.iter().map(f64::to_string).collect())).unwrap();
        writeln!(out, "{}", join(self.degrees.iter().map(usize::to_string).collect())).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Config(format!("y-mesh file is missing the {what} line")))
        };
        let header: Vec<&str> = next("header")?.split_whitespace().collect();
        if header.len() != 4 {
            return Err(Error::Config(
                "y-mesh header must read `Y M sigma slope`".into(),
            ));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse `{s}` as a number")))
        };
        let parse_u = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("cannot parse `{s}` as an integer")))
        };
        let height = parse_f(header[0])?;
        let elements = parse_u(header[1])?;
        let grading = parse_f(header[2])?;
        let slope = parse_f(header[3])?;
        let breakpoints = next("breakpoint")?
            .split_whitespace()
            .map(parse_f)
            .collect::<Result<Vec<_>>>()?;
        let degrees = next("degree")?
            .split_whitespace()
            .map(parse_u)
            .collect::<Result<Vec<_>>>()?;
        let mesh = Self::from_parts(breakpoints, degrees, grading, slope)?;
        if mesh.element_count() != elements || mesh.height != height {
            return Err(Error::Config(
                "y-mesh header disagrees with its breakpoints".into(),
            ));
        }
        Ok(mesh)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Nodal Lagrange basis of degree `p` on the Gauss–Lobatto points of `[-1, 1]`.
/// Degree 0 is the single constant function.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(p: usize) -> Self {
        Self {
            nodes: gauss_lobatto_nodes(p),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&m| m != i)
                    .map(|m| (x - self.nodes[m]) / (self.nodes[i] - self.nodes[m]))
                    .product()
            })
            .collect()
    }

    pub fn derivatives(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&m| m != i)
                    .map(|m| {
                        let rest: f64 = (0..n)
                            .filter(|&l| l != i && l != m)
                            .map(|l| (x - self.nodes[l]) / (self.nodes[i] - self.nodes[l]))
                            .product();
                        rest / (self.nodes[i] - self.nodes[m])
                    })
                    .sum()
            })
            .collect()
    }
}

/// Weighted element matrices on one y-element.
#[derive(Debug, Clone)]
pub struct ElementForms {
    /// `∫ y^α N_a N_b dy`
    pub mass: DMatrix<f64>,
    /// `∫ y^α N_a' N_b' dy`
    pub stiffness: DMatrix<f64>,
    /// `N_a(0)`, present when the element touches `y = 0`.
    pub trace: Option<DVector<f64>>,
}

/// Gauss–Legendre point count for `y^α · (degree 2p polynomial)` on `[c, d]`
/// with `c > 0`: enough points to resolve `y^α` up to roundoff, from the
/// Bernstein-ellipse parameter of the singularity at `y = 0`.
fn smooth_point_count(c: f64, d: f64, p: usize) -> usize {
    let a = (d + c) / (d - c);
    let rho = a + (a * a - 1.0).sqrt();
    let extra = (19.0 / rho.ln()).ceil() as usize;
    (p + 2 + extra).min(MAX_SMOOTH_POINTS)
}

/// Mass and stiffness matrices of the degree-`p` nodal basis on `[c, d]`
/// against the weight `y^α`. An element starting at `y = 0` is integrated with
/// Gauss–Jacobi quadrature for the weight, all others with Gauss–Legendre.
pub fn weighted_elemental_forms(c: f64, d: f64, p: usize, alpha: f64) -> Result<ElementForms> {
    if !(alpha > -1.0) {
        return Err(Error::Domain(format!(
            "weight exponent {alpha} makes y^α non-integrable"
        )));
    }
    if !(d > c && c >= 0.0) {
        return Err(Error::Domain(format!("invalid y-element [{c}, {d}]")));
    }
    let basis = LagrangeBasis::new(p);
    let n = basis.len();
    let half = 0.5 * (d - c);
    // Points on [-1, 1] and weights that already contain y^α dy.
    let (points, weights): (Vec<f64>, Vec<f64>) = if c == 0.0 {
        let rule = gauss_jacobi(p + 2, 0.0, alpha)?;
        let scale = half.powf(alpha + 1.0);
        (rule.nodes, rule.weights.iter().map(|w| w * scale).collect())
    } else {
        let rule = gauss_legendre(smooth_point_count(c, d, p));
        let weights = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * half * (c + half * (1.0 + x)).powf(alpha))
            .collect();
        (rule.nodes, weights)
    };
    let mut mass = DMatrix::zeros(n, n);
    let mut stiffness = DMatrix::zeros(n, n);
    for (&x, &w) in points.iter().zip(&weights) {
        let v = basis.values(x);
        let dv: Vec<f64> = basis.derivatives(x).iter().map(|g| g / half).collect();
        for a in 0..n {
            for b in a..n {
                mass[(a, b)] += w * v[a] * v[b];
                stiffness[(a, b)] += w * dv[a] * dv[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            mass[(a, b)] = mass[(b, a)];
            stiffness[(a, b)] = stiffness[(b, a)];
        }
    }
    let trace = (c == 0.0).then(|| DVector::from_vec(basis.values(-1.0)));
    Ok(ElementForms {
        mass,
        stiffness,
        trace,
    })
}

/// Global weighted y-matrices and the trace vector `t_y[j] = χ_j(0)`.
#[derive(Debug, Clone)]
pub struct YForms {
    pub mass: CsrMatrix<f64>,
    pub stiffness: CsrMatrix<f64>,
    pub trace: DVector<f64>,
}

pub fn assemble_y_forms(mesh: &GradedExtensionMesh, alpha: f64) -> Result<YForms> {
    let elements: Vec<ElementForms> = (0..mesh.element_count())
        .into_par_iter()
        .map(|i| {
            let (c, d) = mesh.element(i);
            weighted_elemental_forms(c, d, mesh.degrees()[i], alpha)
        })
        .collect::<Result<_>>()?;
    let n = mesh.dof_count();
    let mut mass = CooMatrix::new(n, n);
    let mut stiffness = CooMatrix::new(n, n);
    let mut trace = DVector::zeros(n);
    for (i, forms) in elements.iter().enumerate() {
        let dofs = mesh.element_dofs(i);
        for (a, da) in dofs.iter().enumerate() {
            let Some(da) = *da else { continue };
            if let Some(t) = &forms.trace {
                trace[da] += t[a];
            }
            for (b, db) in dofs.iter().enumerate() {
                let Some(db) = *db else { continue };
                mass.push(da, db, forms.mass[(a, b)]);
                stiffness.push(da, db, forms.stiffness[(a, b)]);
            }
        }
    }
    Ok(YForms {
        mass: CsrMatrix::from(&mass),
        stiffness: CsrMatrix::from(&stiffness),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn geometric_breakpoints_and_degrees() {
        let mesh = geometric_mesh(1.0, 3, 0.5, 1.0).unwrap();
        assert_eq!(mesh.breakpoints(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(mesh.degrees(), &[1, 2, 3]);
        let single = geometric_mesh(2.0, 1, 0.5, 1.0).unwrap();
        assert_eq!(single.breakpoints(), &[0.0, 2.0]);
        assert_eq!(single.degrees(), &[1]);
        let half = geometric_mesh(1.0, 4, 0.5, 0.5).unwrap();
        assert_eq!(half.degrees(), &[1, 2, 2, 3]);
    }

    #[test]
    fn grading_outside_unit_interval_is_rejected() {
        for sigma in [0.0, 1.0, 1.5, -0.2] {
            assert!(matches!(
                geometric_mesh(1.0, 3, sigma, 1.0),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn constant_basis_moment() {
        for alpha in [-0.6, 0.0, 0.4] {
            let b: f64 = 0.7;
            let forms = weighted_elemental_forms(0.0, b, 0, alpha).unwrap();
            let exact = b.powf(1.0 + alpha) / (1.0 + alpha);
            assert!(close(forms.mass[(0, 0)], exact, 1e-13));
            assert_eq!(forms.stiffness[(0, 0)], 0.0);
        }
    }

    #[test]
    fn unweighted_forms_are_standard() {
        let forms = weighted_elemental_forms(0.3, 0.8, 1, 0.0).unwrap();
        let h = 0.5;
        assert!(close(forms.mass[(0, 0)], h / 3.0, 1e-13));
        assert!(close(forms.mass[(0, 1)], h / 6.0, 1e-13));
        assert!(close(forms.stiffness[(0, 0)], 1.0 / h, 1e-13));
        assert!(close(forms.stiffness[(0, 1)], -1.0 / h, 1e-13));
        let first = weighted_elemental_forms(0.0, 0.5, 1, 0.0).unwrap();
        assert!(close(first.mass[(1, 1)], h / 3.0, 1e-13));
        assert_eq!(first.trace.unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn weighted_hat_moment() {
        let forms = weighted_elemental_forms(0.0, 1.0, 1, 0.5).unwrap();
        assert!(close(forms.mass[(1, 1)], 2.0 / 7.0, 1e-13));
    }

    #[test]
    fn nonintegrable_weight_is_rejected() {
        assert!(matches!(
            weighted_elemental_forms(0.0, 1.0, 2, -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn monomial_moments_are_exact() {
        // Σ_ab N_a N_b over all a, b equals 1, and Σ_ab y-weighted combinations
        // reproduce moments; test ∫ y^α y^m via the nodal interpolant of y^m.
        for alpha in [-0.8, -0.2, 0.0, 0.6] {
            for p in 1..=6 {
                for (c, d) in [(0.0, 0.3), (0.2, 0.9), (1.0, 2.0)] {
                    let forms = weighted_elemental_forms(c, d, p, alpha).unwrap();
                    let basis = LagrangeBasis::new(p);
                    let ys: Vec<f64> = basis
                        .nodes()
                        .iter()
                        .map(|x| c + 0.5 * (d - c) * (1.0 + x))
                        .collect();
                    for m1 in 0..=p {
                        for m2 in 0..=p {
                            let u = DVector::from_iterator(p + 1, ys.iter().map(|y| y.powi(m1 as i32)));
                            let v = DVector::from_iterator(p + 1, ys.iter().map(|y| y.powi(m2 as i32)));
                            let got = u.dot(&(&forms.mass * &v));
                            let e = alpha + (m1 + m2) as f64 + 1.0;
                            let exact = (d.powf(e) - c.powf(e)) / e;
                            assert!(
                                close(got, exact, 1e-12),
                                "α={alpha} p={p} [{c},{d}] m={m1}+{m2}: {got} vs {exact}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_linear_element_forms() {
        let mesh = geometric_mesh(1.0, 1, 0.5, 1.0).unwrap();
        let forms = assemble_y_forms(&mesh, 0.0).unwrap();
        assert_eq!(mesh.dof_count(), 1);
        assert!(close(DMatrix::from(&forms.stiffness)[(0, 0)], 1.0, 1e-13));
        assert!(close(DMatrix::from(&forms.mass)[(0, 0)], 1.0 / 3.0, 1e-13));
        assert_eq!(forms.trace.as_slice(), &[1.0]);
    }

    #[test]
    fn assembled_forms_are_symmetric_and_definite() {
        let mesh = geometric_mesh(3.0, 5, 0.4, 1.0).unwrap();
        for alpha in [-0.5, 0.3] {
            let forms = assemble_y_forms(&mesh, alpha).unwrap();
            let m = DMatrix::from(&forms.mass);
            let s = DMatrix::from(&forms.stiffness);
            assert_eq!(m, m.transpose());
            assert_eq!(s, s.transpose());
            assert!(m.diagonal().iter().all(|&v| v > 0.0));
            assert!(s.clone().symmetric_eigen().eigenvalues.min() > 0.0);
            assert_eq!(forms.trace.iter().filter(|&&t| t != 0.0).count(), 1);
            assert_eq!(forms.trace[0], 1.0);
        }
    }

    #[test]
    fn forms_scale_under_geometric_shift() {
        // y ↦ σ y maps element I_{i+1} of the mesh with M + 1 elements onto
        // element I_i of the mesh with M elements.
        let alpha = -0.4;
        let sigma = 0.5;
        let (c, d) = (0.25, 0.5);
        let outer = weighted_elemental_forms(c, d, 3, alpha).unwrap();
        let inner = weighted_elemental_forms(sigma * c, sigma * d, 3, alpha).unwrap();
        let mass_ratio = sigma.powf(1.0 + alpha);
        let stiff_ratio = sigma.powf(alpha - 1.0);
        assert!((&inner.mass - mass_ratio * &outer.mass).amax() < 1e-13);
        assert!((&inner.stiffness - stiff_ratio * &outer.stiffness).amax() < 1e-11);
    }

    #[test]
    fn dof_counts() {
        let mesh = geometric_mesh(1.0, 2, 0.5, 1e-9).unwrap();
        assert_eq!(mesh.degrees(), &[1, 2]);
        let linear = GradedExtensionMesh::from_parts(vec![0.0, 0.5, 1.0], vec![1, 1], 0.5, 1.0).unwrap();
        assert_eq!(linear.dof_count(), 2);
        let mesh = geometric_mesh(1.0, 3, 0.5, 1.0).unwrap();
        assert_eq!(mesh.dof_count(), 6);
        assert_eq!(mesh.dof_coordinates().len(), 6);
    }

    #[test]
    fn breakpoints_telescope() {
        let mesh = geometric_mesh(7.3, 12, 0.3, 1.0).unwrap();
        let total: f64 = (0..12).map(|i| mesh.element(i).1 - mesh.element(i).0).sum();
        assert!((total - 7.3).abs() < 1e-14);
        assert_eq!(*mesh.breakpoints().last().unwrap(), 7.3);
        let sizes: Vec<f64> = (0..12).map(|i| mesh.element(i).1 - mesh.element(i).0).collect();
        assert!(sizes.windows(2).skip(1).all(|w| w[1] > w[0]));
    }

    #[test]
    fn basis_is_nodal() {
        let mesh = geometric_mesh(2.0, 3, 0.5, 1.0).unwrap();
        for (j, &y) in mesh.dof_coordinates().iter().enumerate() {
            let v = mesh.basis_values(y);
            for (k, &vk) in v.iter().enumerate() {
                let expected = if k == j { 1.0 } else { 0.0 };
                assert!((vk - expected).abs() < 1e-12);
            }
        }
        assert_eq!(mesh.basis_values(2.0).amax(), 0.0);
    }

    #[test]
    fn text_round_trip() {
        let mesh = geometric_mesh(4.2, 5, 0.37, 0.8).unwrap();
        let back = GradedExtensionMesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(back, mesh);
        assert!(GradedExtensionMesh::from_text("1 2 0.5\n0 1\n1\n").is_err());
    }
}
