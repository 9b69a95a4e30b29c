//! Reference solver for `L^s` through its eigen-expansion.
//!
//! The generalized problem `(A + M_q) φ = λ M φ` on the P1 space is solved
//! densely after reducing with the Cholesky factor of the consistent mass
//! matrix. Every eigenvector is `M`-orthonormal, so spectral coefficients of
//! a P1 function `w` are `φ_kᵀ M w`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::omega::OmegaForms;
use crate::snapshot;

/// Relative eigen-residual above which a decomposition is rejected.
const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Series-truncation level that triggers a warning in [`EigenDecomposition::fractional_solve`].
pub const TAIL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    mass: CsrMatrix<f64>,
    fingerprint: u64,
}

/// Output of a fractional solve together with its series-truncation estimate
/// `|⟨f, φ_K⟩| λ_K^{-s}` (zero when all modes are retained).
#[derive(Debug, Clone)]
pub struct FractionalSolution {
    pub values: DVector<f64>,
    pub tail_estimate: f64,
}

/// Identity of a pair of Ω forms, used to tie snapshots to their operator.
pub fn forms_fingerprint(forms: &OmegaForms) -> u64 {
    let mut hasher = Sha256::new();
    for m in [&forms.reaction_stiffness, &forms.mass] {
        hasher.update((m.nrows() as u64).to_le_bytes());
        for (i, j, v) in m.triplet_iter() {
            hasher.update((i as u64).to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// The `count` smallest generalized eigenpairs of `(reaction_stiffness, mass)`.
pub fn eigenpairs(forms: &OmegaForms, count: usize) -> Result<EigenDecomposition> {
    let n = forms.mass.nrows();
    if count == 0 || count > n {
        return Err(Error::Config(format!(
            "requested {count} eigenpairs from a space of dimension {n}"
        )));
    }
    let a = DMatrix::from(&forms.reaction_stiffness);
    let m = DMatrix::from(&forms.mass);
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("mass matrix is not positive definite", f64::NAN))?;
    let l = chol.l();
    let la = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::numerical("singular mass factor", f64::NAN))?;
    let mut c = l
        .solve_lower_triangular(&la.transpose())
        .ok_or_else(|| Error::numerical("singular mass factor", f64::NAN))?;
    c = 0.5 * (&c + c.transpose());

    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order.truncate(count);

    let lt = l.transpose();
    let mut eigenvalues = DVector::zeros(count);
    let mut eigenvectors = DMatrix::zeros(n, count);
    for (col, &idx) in order.iter().enumerate() {
        eigenvalues[col] = eig.eigenvalues[idx];
        let mut phi = lt
            .solve_upper_triangular(&eig.eigenvectors.column(idx).into_owned())
            .ok_or_else(|| Error::numerical("singular mass factor", f64::NAN))?;
        // Fix the sign so that decompositions are reproducible.
        let pivot = phi.iamax();
        if phi[pivot] < 0.0 {
            phi.neg_mut();
        }
        eigenvectors.set_column(col, &phi);
    }

    let decomposition = EigenDecomposition {
        eigenvalues,
        eigenvectors,
        mass: forms.mass.clone(),
        fingerprint: forms_fingerprint(forms),
    };
    let residual = decomposition.residual(&forms.reaction_stiffness);
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::numerical(
            "generalized eigensolve did not converge",
            residual,
        ));
    }
    if decomposition.eigenvalues[0] <= 0.0 {
        return Err(Error::numerical(
            "operator is not positive definite",
            decomposition.eigenvalues[0],
        ));
    }
    Ok(decomposition)
}

fn row_sum_norm(m: &CsrMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.values().iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// All eigenpairs: the default for desk-scale meshes.
pub fn full_eigenpairs(forms: &OmegaForms) -> Result<EigenDecomposition> {
    eigenpairs(forms, forms.mass.nrows())
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Normwise backward error `max_k ‖A φ_k - λ_k M φ_k‖_∞ / ((‖A‖_∞ + |λ_k| ‖M‖_∞) ‖φ_k‖_∞)`.
    pub fn residual(&self, reaction_stiffness: &CsrMatrix<f64>) -> f64 {
        let a_norm = row_sum_norm(reaction_stiffness);
        let m_norm = row_sum_norm(&self.mass);
        let av = reaction_stiffness * &self.eigenvectors;
        let mv = &self.mass * &self.eigenvectors;
        (0..self.len())
            .map(|k| {
                let lambda = self.eigenvalues[k];
                let r = av.column(k) - lambda * mv.column(k);
                let scale = (a_norm + lambda.abs() * m_norm) * self.eigenvectors.column(k).amax();
                r.amax() / scale.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// `Gram = Φᵀ M Φ`; the identity for a valid decomposition.
    pub fn gram(&self) -> DMatrix<f64> {
        self.eigenvectors.transpose() * (&self.mass * &self.eigenvectors)
    }

    /// Spectral coefficients `w_k = ⟨w, φ_k⟩_{L²}`.
    pub fn coefficients(&self, w: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.transpose() * (&self.mass * w)
    }

    fn synthesize(&self, coefficients: &DVector<f64>) -> DVector<f64> {
        &self.eigenvectors * coefficients
    }

    /// `Σ λ_k^p w_k φ_k` over the retained modes.
    pub fn spectral_multiplier(&self, w: &DVector<f64>, power: f64) -> DVector<f64> {
        let mut c = self.coefficients(w);
        for (ck, lambda) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ck *= lambda.powf(power);
        }
        self.synthesize(&c)
    }

    /// Weak solution of `L^s u = f`: `u = Σ λ_k^{-s} ⟨f, φ_k⟩ φ_k`.
    pub fn fractional_solve(&self, f: &DVector<f64>, s: f64) -> Result<FractionalSolution> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("fractional order {s} must be nonnegative")));
        }
        let mut c = self.coefficients(f);
        let last = self.len() - 1;
        let tail_estimate = if self.len() == self.dimension() {
            0.0
        } else {
            c[last].abs() * self.eigenvalues[last].powf(-s)
        };
        if tail_estimate > TAIL_TOLERANCE {
            log::warn!(
                "fractional solve truncated at {} modes; tail estimate {tail_estimate:e}",
                self.len()
            );
        }
        for (ck, lambda) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ck *= lambda.powf(-s);
        }
        Ok(FractionalSolution {
            values: self.synthesize(&c),
            tail_estimate,
        })
    }

    /// `L^s w = Σ λ_k^s w_k φ_k`.
    pub fn apply_ls(&self, w: &DVector<f64>, s: f64) -> DVector<f64> {
        self.spectral_multiplier(w, s)
    }

    /// `‖w‖_{ℍ^s} = (Σ λ_k^s w_k²)^{1/2}` for `s ∈ [-1, 1]`.
    pub fn hs_norm(&self, w: &DVector<f64>, s: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("norm order {s} outside [-1, 1]")));
        }
        let c = self.coefficients(w);
        Ok(c
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(ck, lambda)| lambda.powf(s) * ck * ck)
            .sum::<f64>()
            .sqrt())
    }

    /// Writes `magic, mesh hash, n, K, s, λ[K], Φ (column-major)`.
    pub fn save(&self, path: &Path, s: f64) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(snapshot::EIGEN_MAGIC)?;
        snapshot::write_u64(&mut w, self.fingerprint)?;
        snapshot::write_u64(&mut w, self.dimension() as u64)?;
        snapshot::write_u64(&mut w, self.len() as u64)?;
        snapshot::write_f64s(&mut w, &[s])?;
        snapshot::write_f64s(&mut w, self.eigenvalues.as_slice())?;
        snapshot::write_f64s(&mut w, self.eigenvectors.as_slice())?;
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot written by [`save`](Self::save) and checks that it
    /// belongs to `forms`. Returns the decomposition and the stored `s`.
    pub fn load(path: &Path, forms: &OmegaForms) -> Result<(Self, f64)> {
        let mut r = BufReader::new(File::open(path)?);
        snapshot::read_magic(&mut r, snapshot::EIGEN_MAGIC)?;
        let fingerprint = snapshot::read_u64(&mut r)?;
        let expected = forms_fingerprint(forms);
        if fingerprint != expected {
            return Err(Error::Snapshot(format!(
                "snapshot mesh hash {fingerprint:016x} does not match {expected:016x}"
            )));
        }
        let n = snapshot::read_u64(&mut r)? as usize;
        let count = snapshot::read_u64(&mut r)? as usize;
        if n != forms.mass.nrows() || count == 0 || count > n {
            return Err(Error::Snapshot(format!(
                "inconsistent dimensions n = {n}, K = {count}"
            )));
        }
        let s = snapshot::read_f64(&mut r)?;
        let eigenvalues = DVector::from_vec(snapshot::read_f64s(&mut r, count)?);
        let eigenvectors = DMatrix::from_vec(n, count, snapshot::read_f64s(&mut r, n * count)?);
        Ok((
            Self {
                eigenvalues,
                eigenvectors,
                mass: forms.mass.clone(),
                fingerprint,
            },
            s,
        ))
    }
}
