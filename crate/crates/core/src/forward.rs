//! The discrete truncated extension problem and its solution.
//!
//! For a reaction coefficient `q` the cylinder operator is
//! `K = M_y ⊗ (S_x + M_x^q) + S_y ⊗ M_x` in the Ω-fastest layout of
//! [`TensorSpace`]. The load for data `f` is `d_s (M_x f)` placed on the trace
//! slice. Systems are factored once with a sparse Cholesky decomposition of
//! the y-fastest permutation of `K`, which is banded with bandwidth `O(n_y)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, kron};
use crate::omega::{assemble_omega_forms, Coefficient, OmegaForms, OmegaMesh};
use crate::params::FractionalParams;
use crate::snapshot;
use crate::spectral::eigenpairs;
use crate::tensor::{build_tensor_space, TensorSpace};
use crate::ymesh::{assemble_y_forms, geometric_mesh, GradedExtensionMesh, YForms};

/// Relative residual every state solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LinearSolver {
    /// Sparse Cholesky factorization.
    #[default]
    Direct,
    /// Diagonalizes the q-independent y-pencil `(S_y, M_y)` once, reducing
    /// every solve to `n_y` tridiagonal Ω systems `A_x + μ_j M_x`.
    Diagonalized,
    /// Matrix-free Jacobi-preconditioned conjugate gradients.
    ConjugateGradient {
        tolerance: f64,
        max_iterations: usize,
    },
}

/// q-independent part of the discretization: the space, the fractional order
/// and the weighted y-matrices.
#[derive(Debug, Clone)]
pub struct Discretization {
    space: Arc<TensorSpace>,
    params: FractionalParams,
    yforms: YForms,
    omega_mass: CsrMatrix<f64>,
    ybasis: OnceLock<std::result::Result<YEigenbasis, String>>,
}

/// `S_y W = M_y W diag(μ)` with `Wᵀ M_y W = I`.
#[derive(Debug, Clone)]
struct YEigenbasis {
    w: DMatrix<f64>,
    mu: DVector<f64>,
}

impl YEigenbasis {
    fn new(forms: &YForms) -> std::result::Result<Self, String> {
        let m = DMatrix::from(&forms.mass);
        let s = DMatrix::from(&forms.stiffness);
        let l = m
            .cholesky()
            .ok_or("y-mass matrix is not positive definite")?
            .l();
        let ls = l.solve_lower_triangular(&s).ok_or("singular y-mass factor")?;
        let mut c = l
            .solve_lower_triangular(&ls.transpose())
            .ok_or("singular y-mass factor")?;
        c = 0.5 * (&c + c.transpose());
        let eig = c.symmetric_eigen();
        let w = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or("singular y-mass factor")?;
        if eig.eigenvalues.min() <= 0.0 {
            return Err("y-stiffness matrix is not positive definite".into());
        }
        Ok(Self {
            w,
            mu: eig.eigenvalues,
        })
    }
}

impl Discretization {
    pub fn new(space: TensorSpace, params: FractionalParams) -> Result<Self> {
        let yforms = assemble_y_forms(space.ymesh(), params.alpha())?;
        let omega_mass = space.omega().mass_matrix();
        Ok(Self {
            space: Arc::new(space),
            params,
            yforms,
            omega_mass,
            ybasis: OnceLock::new(),
        })
    }

    fn ybasis(&self) -> Result<&YEigenbasis> {
        self.ybasis
            .get_or_init(|| YEigenbasis::new(&self.yforms))
            .as_ref()
            .map_err(|e| Error::numerical(e.clone(), f64::NAN))
    }

    pub fn space(&self) -> &TensorSpace {
        &self.space
    }

    pub fn shared_space(&self) -> Arc<TensorSpace> {
        Arc::clone(&self.space)
    }

    pub fn params(&self) -> FractionalParams {
        self.params
    }

    pub fn yforms(&self) -> &YForms {
        &self.yforms
    }

    pub fn omega_mass(&self) -> &CsrMatrix<f64> {
        &self.omega_mass
    }

    /// Load vector `d_s (M_x f) ⊗ t_y` for P1 data `f`.
    pub fn load(&self, f: &DVector<f64>) -> DVector<f64> {
        self.trace_load(&(self.params.d_s() * (&self.omega_mass * f)))
    }

    /// Places an Ω vector `g` on the trace slice: `g ⊗ t_y`.
    pub fn trace_load(&self, g: &DVector<f64>) -> DVector<f64> {
        let t = &self.yforms.trace;
        let mut b = DMatrix::zeros(self.space.omega_dofs(), self.space.y_dofs());
        for (j, &tj) in t.iter().enumerate() {
            if tj != 0.0 {
                b.set_column(j, &(tj * g));
            }
        }
        self.space.from_matrix(&b)
    }

    /// `tr v = Σ_j t_y[j] v_j`, the P1 function at `y = 0`.
    pub fn trace(&self, v: &DVector<f64>) -> DVector<f64> {
        self.space.as_matrix(v) * &self.yforms.trace
    }

    /// `(X ⊗ Y) v` in the Ω-fastest layout, i.e. `X V Yᵀ` on the matrix view.
    fn kron_apply(&self, x: &CsrMatrix<f64>, y: &CsrMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let xv = x * v;
        (y * xv.transpose()).transpose()
    }

    /// `B(h) v = (M_y ⊗ M_x^h) v` for a cellwise reaction perturbation `h`.
    pub fn apply_reaction(&self, h: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mh = self.space.omega().weighted_mass_matrix(h.as_slice());
        let out = self.kron_apply(&mh, &self.yforms.mass, &self.space.as_matrix(v));
        self.space.from_matrix(&out)
    }

    /// `c_K(a, b) = ∫_{K × (0, Y)} y^α a b` for every Ω cell `K`, computed
    /// from the same element matrices as the operator.
    pub fn cell_cross_terms(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mesh = self.space.omega();
        let am = self.space.as_matrix(a);
        // Rows of B M_y, one per Ω dof.
        let bmy = (&self.yforms.mass * self.space.as_matrix(b).transpose()).transpose();
        DVector::from_iterator(
            mesh.cell_count(),
            (0..mesh.cell_count()).map(|k| {
                let local = mesh.local_mass(k);
                let dofs = mesh.cell_dofs(k);
                let mut total = 0.0;
                for (r, dr) in dofs.iter().enumerate() {
                    for (c, dc) in dofs.iter().enumerate() {
                        if let (Some(i), Some(j)) = (dr, dc) {
                            total += local[r][c] * am.row(*i).dot(&bmy.row(*j));
                        }
                    }
                }
                total
            }),
        )
    }
}

enum Factor {
    Cholesky(Box<CscCholesky<f64>>),
    Diagonalized(Vec<Tridiagonal>),
    Iterative { tolerance: f64, max_iterations: usize },
}

/// The operator for one coefficient, ready to solve.
pub struct AssembledSystem {
    disc: Arc<Discretization>,
    q: Coefficient,
    omega_forms: OmegaForms,
    factor: Factor,
    coefficient_tag: u64,
}

impl std::fmt::Debug for AssembledSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AssembledSystem")
            .field("dofs", &self.disc.space.dof_count())
            .field("q", &self.q)
            .finish()
    }
}

pub fn assemble_system(
    space: TensorSpace,
    q: &Coefficient,
    params: FractionalParams,
) -> Result<AssembledSystem> {
    let disc = Arc::new(Discretization::new(space, params)?);
    assemble_with(&disc, q, LinearSolver::Direct)
}

/// Assembles and factors the operator for `q` on an existing discretization.
pub fn assemble_with(
    disc: &Arc<Discretization>,
    q: &Coefficient,
    solver: LinearSolver,
) -> Result<AssembledSystem> {
    let omega_forms = assemble_omega_forms(disc.space.omega(), q)?;
    let factor = match solver {
        LinearSolver::Direct => {
            // y-fastest ordering keeps the factor banded.
            let permuted = &kron(&omega_forms.reaction_stiffness, &disc.yforms.mass)
                + &kron(&omega_forms.mass, &disc.yforms.stiffness);
            let csc = CscMatrix::from(&permuted);
            let chol = CscCholesky::factor(&csc).map_err(|e| {
                Error::numerical(format!("Cholesky factorization failed: {e}"), f64::NAN)
            })?;
            Factor::Cholesky(Box::new(chol))
        }
        LinearSolver::Diagonalized => {
            let basis = disc.ybasis()?;
            let columns = basis
                .mu
                .iter()
                .map(|&mu| {
                    Tridiagonal::factor(&omega_forms.reaction_stiffness, &omega_forms.mass, mu)
                })
                .collect::<Result<Vec<_>>>()?;
            Factor::Diagonalized(columns)
        }
        LinearSolver::ConjugateGradient {
            tolerance,
            max_iterations,
        } => Factor::Iterative {
            tolerance,
            max_iterations,
        },
    };
    Ok(AssembledSystem {
        disc: Arc::clone(disc),
        q: q.clone(),
        omega_forms,
        factor,
        coefficient_tag: q.fingerprint(),
    })
}

impl AssembledSystem {
    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn space(&self) -> &TensorSpace {
        &self.disc.space
    }

    pub fn params(&self) -> FractionalParams {
        self.disc.params
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.q
    }

    pub fn omega_forms(&self) -> &OmegaForms {
        &self.omega_forms
    }

    /// Matrix-free `K v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let vm = self.disc.space.as_matrix(v);
        let out = self.disc.kron_apply(&self.omega_forms.reaction_stiffness, &self.disc.yforms.mass, &vm)
            + self.disc.kron_apply(&self.omega_forms.mass, &self.disc.yforms.stiffness, &vm);
        self.disc.space.from_matrix(&out)
    }

    /// Explicit sparse `K` in the Ω-fastest layout.
    pub fn operator(&self) -> CsrMatrix<f64> {
        &kron(&self.disc.yforms.mass, &self.omega_forms.reaction_stiffness)
            + &kron(&self.disc.yforms.stiffness, &self.omega_forms.mass)
    }

    /// `diag(K)`, the Jacobi preconditioner.
    pub fn diagonal(&self) -> DVector<f64> {
        let dx = diagonal_of(&self.omega_forms.reaction_stiffness);
        let mx = diagonal_of(&self.omega_forms.mass);
        let my = diagonal_of(&self.disc.yforms.mass);
        let sy = diagonal_of(&self.disc.yforms.stiffness);
        let n = self.disc.space.omega_dofs();
        DVector::from_fn(self.disc.space.dof_count(), |g, _| {
            let (i, j) = (g % n, g / n);
            dx[i] * my[j] + mx[i] * sy[j]
        })
    }

    fn to_y_fastest(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(self.disc.space.as_matrix(v).transpose().as_slice())
    }

    fn to_x_fastest(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(self.disc.space.y_dofs(), self.disc.space.omega_dofs(), v.as_slice());
        DVector::from_column_slice(m.transpose().as_slice())
    }

    fn raw_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.factor {
            Factor::Cholesky(chol) => {
                let x = chol.solve(&self.to_y_fastest(b));
                Ok(self.to_x_fastest(&DVector::from_column_slice(x.as_slice())))
            }
            Factor::Diagonalized(columns) => {
                let w = &self.disc.ybasis()?.w;
                let mut z = self.disc.space.as_matrix(b) * w;
                for (j, column) in columns.iter().enumerate() {
                    let solved = column.solve(&z.column(j).into_owned());
                    z.set_column(j, &solved);
                }
                Ok(self.disc.space.from_matrix(&(z * w.transpose())))
            }
            Factor::Iterative {
                tolerance,
                max_iterations,
            } => Ok(conjugate_gradient(
                |v| self.apply(v),
                &self.diagonal(),
                b,
                *tolerance,
                *max_iterations,
            )?
            .solution),
        }
    }

    /// Solves `K x = b` to relative residual [`SOLVE_TOLERANCE`], with a few
    /// steps of iterative refinement on top of the factorization.
    pub fn solve_load(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let b_norm = b.norm();
        if b_norm == 0.0 {
            return Ok(DVector::zeros(b.len()));
        }
        let mut x = self.raw_solve(b)?;
        let mut r = b - self.apply(&x);
        let mut rel = r.norm() / b_norm;
        if !matches!(self.factor, Factor::Iterative { .. }) {
            for _ in 0..REFINEMENT_STEPS {
                if rel <= 1e-3 * SOLVE_TOLERANCE {
                    break;
                }
                x += self.raw_solve(&r)?;
                r = b - self.apply(&x);
                rel = r.norm() / b_norm;
            }
        }
        if !(rel <= SOLVE_TOLERANCE) {
            return Err(Error::numerical("state solve did not reach tolerance", rel));
        }
        Ok(x)
    }

    pub fn state(&self, coefficients: DVector<f64>) -> TensorState {
        TensorState {
            space: self.disc.shared_space(),
            coefficients,
            params: self.disc.params,
            coefficient_tag: Some(self.coefficient_tag),
        }
    }

    pub fn coefficient_tag(&self) -> u64 {
        self.coefficient_tag
    }

    /// `√(vᵀ K v)`.
    pub fn energy_norm_of(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.apply(v)).max(0.0).sqrt()
    }
}

/// LU factors of the SPD tridiagonal matrix `A + μ M` (Thomas algorithm).
struct Tridiagonal {
    lower: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn factor(a: &CsrMatrix<f64>, m: &CsrMatrix<f64>, mu: f64) -> Result<Self> {
        let n = a.nrows();
        let entry = |i: usize, j: usize| {
            a.get_entry(i, j).map_or(0.0, |e| e.into_value())
                + mu * m.get_entry(i, j).map_or(0.0, |e| e.into_value())
        };
        let mut lower = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let diag = entry(i, i);
            if i > 0 {
                let sub = entry(i, i - 1);
                lower[i] = sub / pivots[i - 1];
                pivots[i] = diag - lower[i] * upper[i - 1];
            } else {
                pivots[i] = diag;
            }
            if !(pivots[i] > 0.0) {
                return Err(Error::numerical("non-positive pivot in tridiagonal solve", pivots[i]));
            }
            if i + 1 < n {
                upper[i] = entry(i, i + 1);
            }
        }
        Ok(Self {
            lower,
            pivots,
            upper,
        })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = b.len();
        let mut x = b.clone();
        for i in 1..n {
            x[i] -= self.lower[i] * x[i - 1];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                x[i] -= self.upper[i] * x[i + 1];
            }
            x[i] /= self.pivots[i];
        }
        x
    }
}

fn diagonal_of(m: &CsrMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| m.get_entry(i, i).map_or(0.0, |e| e.into_value()))
        .collect()
}

/// Galerkin solution of the truncated problem for P1 data `f`.
pub fn solve_state(system: &AssembledSystem, f: &DVector<f64>) -> Result<TensorState> {
    if f.len() != system.space().omega_dofs() {
        return Err(Error::Config(format!(
            "data has {} values, Ω space has {} dofs",
            f.len(),
            system.space().omega_dofs()
        )));
    }
    let b = system.disc.load(f);
    Ok(system.state(system.solve_load(&b)?))
}

/// A discrete function on the truncated cylinder.
#[derive(Debug, Clone)]
pub struct TensorState {
    space: Arc<TensorSpace>,
    coefficients: DVector<f64>,
    params: FractionalParams,
    /// Fingerprint of the reaction coefficient whose operator produced the state.
    coefficient_tag: Option<u64>,
}

impl TensorState {
    pub fn new(space: Arc<TensorSpace>, coefficients: DVector<f64>, params: FractionalParams) -> Result<Self> {
        if coefficients.len() != space.dof_count() {
            return Err(Error::Contract(format!(
                "{} coefficients for a space of {} dofs",
                coefficients.len(),
                space.dof_count()
            )));
        }
        Ok(Self {
            space,
            coefficients,
            params,
            coefficient_tag: None,
        })
    }

    pub fn zero(space: Arc<TensorSpace>, params: FractionalParams) -> Self {
        let n = space.dof_count();
        Self {
            space,
            coefficients: DVector::zeros(n),
            params,
            coefficient_tag: None,
        }
    }

    pub fn space(&self) -> &Arc<TensorSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn params(&self) -> FractionalParams {
        self.params
    }

    pub fn coefficient_tag(&self) -> Option<u64> {
        self.coefficient_tag
    }

    /// Writes `magic, space hash, s, length, coefficients`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(snapshot::STATE_MAGIC)?;
        snapshot::write_u64(&mut w, self.space.fingerprint())?;
        snapshot::write_f64s(&mut w, &[self.params.s()])?;
        snapshot::write_u64(&mut w, self.coefficients.len() as u64)?;
        snapshot::write_f64s(&mut w, self.coefficients.as_slice())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, space: Arc<TensorSpace>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        snapshot::read_magic(&mut r, snapshot::STATE_MAGIC)?;
        let hash = snapshot::read_u64(&mut r)?;
        if hash != space.fingerprint() {
            return Err(Error::Snapshot(format!(
                "state snapshot belongs to space {hash:016x}, not {:016x}",
                space.fingerprint()
            )));
        }
        let s = snapshot::read_f64(&mut r)?;
        let len = snapshot::read_u64(&mut r)? as usize;
        if len != space.dof_count() {
            return Err(Error::Snapshot(format!(
                "state snapshot has {len} coefficients, space has {}",
                space.dof_count()
            )));
        }
        let coefficients = DVector::from_vec(snapshot::read_f64s(&mut r, len)?);
        Self::new(space, coefficients, FractionalParams::new(s)?)
    }
}

/// Nodal trace `tr V` at `y = 0`.
pub fn trace(v: &TensorState) -> DVector<f64> {
    let n = v.space.omega_dofs();
    v.coefficients.rows(0, n).into_owned()
}

/// `‖V‖ = a_Y(V, V)^{1/2}` for the operator of `system`.
pub fn energy_norm(v: &TensorState, system: &AssembledSystem) -> f64 {
    system.energy_norm_of(&v.coefficients)
}

/// Smallest eigenvalue of `-(A u')' + q u` on the P1 space of `mesh`.
pub fn smallest_eigenvalue(mesh: &OmegaMesh, q: &Coefficient) -> Result<f64> {
    let forms = assemble_omega_forms(mesh, q)?;
    Ok(eigenpairs(&forms, 1)?.eigenvalues()[0])
}

/// `Y = max(1, c_Y (4 / √λ₁) |ln h|)`, which makes the truncation bound
/// `e^{-√λ₁ Y / 4}` at most `h^{c_Y}`.
pub fn choose_truncation(h: f64, lambda1: f64, safety: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!("meshwidth {h} outside (0, 1)")));
    }
    if !(lambda1 > 0.0) {
        return Err(Error::Domain(format!("λ₁ = {lambda1} must be positive")));
    }
    if !(safety >= 1.0) {
        return Err(Error::Domain(format!("truncation safety factor {safety} below 1")));
    }
    Ok((safety * 4.0 / lambda1.sqrt() * h.ln().abs()).max(1.0))
}

/// Parameters of the y-discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionParams {
    /// Grading factor σ of the geometric mesh.
    pub grading: f64,
    /// Slope of the linear degree vector.
    pub slope: f64,
    /// Safety factor `c_Y` in [`choose_truncation`].
    pub height_safety: f64,
    /// Elements per unit height: `M = ⌈c_M Y⌉`.
    pub elements_per_unit_height: f64,
}

impl Default for ExtensionParams {
    fn default() -> Self {
        Self {
            grading: 0.5,
            slope: 1.0,
            height_safety: 2.0,
            elements_per_unit_height: 1.0,
        }
    }
}

impl ExtensionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.grading > 0.0 && self.grading < 1.0) {
            return Err(Error::Config(format!("grading {} outside (0, 1)", self.grading)));
        }
        if !(self.slope > 0.0) {
            return Err(Error::Config(format!("degree slope {} must be positive", self.slope)));
        }
        if !(self.height_safety >= 1.0) {
            return Err(Error::Config(format!(
                "height safety {} must be at least 1",
                self.height_safety
            )));
        }
        if !(self.elements_per_unit_height > 0.0) {
            return Err(Error::Config(format!(
                "elements per unit height {} must be positive",
                self.elements_per_unit_height
            )));
        }
        Ok(())
    }

    /// Graded y-mesh for Ω meshwidth `h` and first eigenvalue `lambda1`.
    pub fn ymesh(&self, h: f64, lambda1: f64) -> Result<GradedExtensionMesh> {
        let height = choose_truncation(h, lambda1, self.height_safety)?;
        let elements = ((self.elements_per_unit_height * height) - 1e-12).ceil().max(1.0) as usize;
        geometric_mesh(height, elements, self.grading, self.slope)
    }

    pub fn space(&self, omega: OmegaMesh, lambda1: f64) -> Result<TensorSpace> {
        let ymesh = self.ymesh(omega.meshwidth(), lambda1)?;
        Ok(build_tensor_space(omega, ymesh))
    }
}
