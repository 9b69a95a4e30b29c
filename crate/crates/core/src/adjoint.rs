//! The reduced Tikhonov functional
//! `D(Q) = ½ ‖tr V(Q) - z‖² + (ρ/2) ‖Q - q*‖²` over piecewise-constant `Q`,
//! with exact derivatives of the discrete problem.
//!
//! Gradients and Hessian actions are returned as cellwise fields `g` that
//! represent the derivative in the `L²(Ω)` inner product, so that
//! `D'(Q) h = Σ_K |K| g_K h_K`. With the state `V`, the adjoint `P` solving
//! `K P = d_s (tr V - z) ⊗ t_y` in the `M_x` pairing, and the cell cross terms
//! `c_K(a, b) = ∫_{K × (0, Y)} y^α a b`, the misfit part of the gradient is
//! `-(1/d_s) c_K(V, P) / |K|`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::{assemble_with, energy_norm, solve_state, AssembledSystem, Discretization, LinearSolver, TensorState};
use crate::omega::{Coefficient, OmegaMesh};

/// Adjoint state for the misfit `tr V - z`.
pub fn solve_adjoint(system: &AssembledSystem, v: &TensorState, z: &DVector<f64>) -> Result<TensorState> {
    check_state(system, v, "state")?;
    let disc = system.discretization();
    let residual = disc.trace(v.coefficients()) - z;
    let load = disc.trace_load(&(system.params().d_s() * (disc.omega_mass() * residual)));
    Ok(system.state(system.solve_load(&load)?))
}

fn check_state(system: &AssembledSystem, v: &TensorState, what: &str) -> Result<()> {
    if v.coefficients().len() != system.space().dof_count() {
        return Err(Error::Contract(format!("{what} does not belong to the system's space")));
    }
    if v.coefficient_tag().is_some_and(|t| t != system.coefficient_tag()) {
        return Err(Error::Contract(format!(
            "{what} was computed for a different reaction coefficient"
        )));
    }
    Ok(())
}

/// Misfit part `𝔯_h(Q)` of the gradient field: `-(1/d_s) c_K(V, P) / |K|`.
pub fn reduced_gradient_field(system: &AssembledSystem, v: &TensorState, p: &TensorState) -> Result<DVector<f64>> {
    check_state(system, v, "state")?;
    check_state(system, p, "adjoint")?;
    if v.coefficient_tag() != p.coefficient_tag() {
        return Err(Error::Contract(
            "state and adjoint were computed for different coefficients".into(),
        ));
    }
    let disc = system.discretization();
    let widths = disc.space().omega().cell_widths();
    let cross = disc.cell_cross_terms(v.coefficients(), p.coefficients());
    Ok(-cross.component_div(&widths) / system.params().d_s())
}

/// `ψ = V'(Q) h`: solves `a(ψ, φ) = -∫ y^α h V φ` for all discrete `φ`.
pub fn sensitivity_solve(system: &AssembledSystem, v: &TensorState, h: &DVector<f64>) -> Result<TensorState> {
    check_state(system, v, "state")?;
    let load = -system.discretization().apply_reaction(h, v.coefficients());
    Ok(system.state(system.solve_load(&load)?))
}

/// Data of one reduced problem instance.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    disc: Arc<Discretization>,
    source: DVector<f64>,
    data: DVector<f64>,
    rho: f64,
    prior: Coefficient,
    solver: LinearSolver,
}

/// Everything computed at one coefficient.
#[derive(Debug)]
pub struct ReducedEvaluation {
    pub coefficient: Coefficient,
    pub value: f64,
    pub misfit: f64,
    pub penalty: f64,
    /// Full gradient field `𝔯_h(Q) + ρ (Q - q*)`.
    pub gradient: DVector<f64>,
    /// Misfit part `𝔯_h(Q)`.
    pub misfit_gradient: DVector<f64>,
    pub state: TensorState,
    pub adjoint: TensorState,
    pub system: AssembledSystem,
}

impl ReducedProblem {
    pub fn new(
        disc: Arc<Discretization>,
        source: DVector<f64>,
        data: DVector<f64>,
        rho: f64,
        prior: Coefficient,
    ) -> Result<Self> {
        let n = disc.space().omega_dofs();
        if source.len() != n || data.len() != n {
            return Err(Error::Config(format!(
                "source and data must have {n} nodal values"
            )));
        }
        if prior.len() != disc.space().omega().cell_count() {
            return Err(Error::Config("prior does not match the Ω mesh".into()));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Config(format!("regularization ρ = {rho} must be nonnegative")));
        }
        Ok(Self {
            disc,
            source,
            data,
            rho,
            prior,
            solver: LinearSolver::Direct,
        })
    }

    pub fn with_solver(mut self, solver: LinearSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn mesh(&self) -> &OmegaMesh {
        self.disc.space().omega()
    }

    pub fn source(&self) -> &DVector<f64> {
        &self.source
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn prior(&self) -> &Coefficient {
        &self.prior
    }

    pub fn upper(&self) -> f64 {
        self.prior.upper()
    }

    pub fn system(&self, q: &Coefficient) -> Result<AssembledSystem> {
        if q.len() != self.mesh().cell_count() {
            return Err(Error::Config("coefficient does not match the Ω mesh".into()));
        }
        assemble_with(&self.disc, q, self.solver)
    }

    /// `½ ‖tr V - z‖²_{L²}`.
    pub fn misfit_of(&self, trace: &DVector<f64>) -> f64 {
        let r = trace - &self.data;
        0.5 * r.dot(&(self.disc.omega_mass() * &r))
    }

    /// `(ρ/2) ‖Q - q*‖²_{L²}`.
    pub fn penalty_of(&self, q: &Coefficient) -> f64 {
        let d = q.values() - self.prior.values();
        0.5 * self.rho * self.mesh().cell_inner(&d, &d)
    }

    /// State, misfit and penalty without the adjoint.
    pub fn value(&self, q: &Coefficient) -> Result<(f64, f64, f64)> {
        let system = self.system(q)?;
        let v = solve_state(&system, &self.source)?;
        let misfit = self.misfit_of(&self.disc.trace(v.coefficients()));
        let penalty = self.penalty_of(q);
        Ok((misfit + penalty, misfit, penalty))
    }

    pub fn evaluate(&self, q: &Coefficient) -> Result<ReducedEvaluation> {
        let system = self.system(q)?;
        let state = solve_state(&system, &self.source)?;
        let adjoint = solve_adjoint(&system, &state, &self.data)?;
        let misfit = self.misfit_of(&self.disc.trace(state.coefficients()));
        let penalty = self.penalty_of(q);
        let misfit_gradient = reduced_gradient_field(&system, &state, &adjoint)?;
        let gradient = &misfit_gradient + self.rho * (q.values() - self.prior.values());
        Ok(ReducedEvaluation {
            coefficient: q.clone(),
            value: misfit + penalty,
            misfit,
            penalty,
            gradient,
            misfit_gradient,
            state,
            adjoint,
            system,
        })
    }

    /// Action of the reduced Hessian on `h` as an `L²` field, from one
    /// sensitivity solve and one second-adjoint solve.
    pub fn hessian_vector(&self, eval: &ReducedEvaluation, h: &DVector<f64>) -> Result<DVector<f64>> {
        let system = &eval.system;
        let disc = system.discretization();
        let d_s = system.params().d_s();
        let psi = sensitivity_solve(system, &eval.state, h)?;
        let tr_psi = disc.trace(psi.coefficients());
        let load = disc.trace_load(&(d_s * (disc.omega_mass() * tr_psi)))
            - disc.apply_reaction(h, eval.adjoint.coefficients());
        let w = system.solve_load(&load)?;
        let cross = disc.cell_cross_terms(eval.state.coefficients(), &w)
            + disc.cell_cross_terms(eval.adjoint.coefficients(), psi.coefficients());
        let widths = self.mesh().cell_widths();
        Ok(-cross.component_div(&widths) / d_s + self.rho * h)
    }

    /// `(a, b)_{L²}` for cellwise fields.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.mesh().cell_inner(a, b)
    }
}

/// `Q + t h`, rejected when it leaves the admissible box.
pub fn perturb(q: &Coefficient, h: &DVector<f64>, t: f64) -> Result<Coefficient> {
    Coefficient::new(q.values() + t * h, q.upper())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckRow {
    pub direction: usize,
    pub step: f64,
    pub fd_value: f64,
    pub adjoint_value: f64,
    pub rel_error: f64,
}

/// Central differences `(D(Q + εh) - D(Q - εh)) / 2ε` against `(g, h)_{L²}`.
pub fn gradient_check(
    problem: &ReducedProblem,
    eval: &ReducedEvaluation,
    directions: &[DVector<f64>],
    steps: &[f64],
) -> Result<Vec<GradientCheckRow>> {
    let mut rows = Vec::new();
    for (d, h) in directions.iter().enumerate() {
        let adjoint_value = problem.inner(&eval.gradient, h);
        for &eps in steps {
            let plus = problem.value(&perturb(&eval.coefficient, h, eps)?)?.0;
            let minus = problem.value(&perturb(&eval.coefficient, h, -eps)?)?.0;
            let fd_value = (plus - minus) / (2.0 * eps);
            rows.push(GradientCheckRow {
                direction: d,
                step: eps,
                fd_value,
                adjoint_value,
                rel_error: (fd_value - adjoint_value).abs() / adjoint_value.abs().max(f64::MIN_POSITIVE),
            });
        }
    }
    Ok(rows)
}

/// Smallest relative error over the step sweep for each direction.
pub fn best_errors(rows: &[GradientCheckRow]) -> Vec<f64> {
    let directions = rows.iter().map(|r| r.direction + 1).max().unwrap_or(0);
    (0..directions)
        .map(|d| {
            rows.iter()
                .filter(|r| r.direction == d)
                .map(|r| r.rel_error)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Energy-norm remainders `‖V(Q + th) - V(Q) - t ψ‖` for each `t`.
pub fn taylor_remainders(
    problem: &ReducedProblem,
    eval: &ReducedEvaluation,
    h: &DVector<f64>,
    ts: &[f64],
) -> Result<Vec<f64>> {
    let psi = sensitivity_solve(&eval.system, &eval.state, h)?;
    ts.iter()
        .map(|&t| {
            let system = problem.system(&perturb(&eval.coefficient, h, t)?)?;
            let vt = solve_state(&system, problem.source())?;
            let r = vt.coefficients() - eval.state.coefficients() - t * psi.coefficients();
            Ok(energy_norm(&eval.system.state(r), &eval.system))
        })
        .collect()
}

/// Observed orders `log(r_k / r_{k+1}) / log(t_k / t_{k+1})`.
pub fn observed_orders(ts: &[f64], remainders: &[f64]) -> Vec<f64> {
    ts.windows(2)
        .zip(remainders.windows(2))
        .map(|(t, r)| (r[0] / r[1]).ln() / (t[0] / t[1]).ln())
        .collect()
}

/// `|(H h₁, h₂) - (H h₂, h₁)| / max(‖H h₁‖ ‖h₂‖, ‖H h₂‖ ‖h₁‖)`.
pub fn hessian_symmetry_defect(
    problem: &ReducedProblem,
    eval: &ReducedEvaluation,
    h1: &DVector<f64>,
    h2: &DVector<f64>,
) -> Result<f64> {
    let hh1 = problem.hessian_vector(eval, h1)?;
    let hh2 = problem.hessian_vector(eval, h2)?;
    let a = problem.inner(&hh1, h2);
    let b = problem.inner(&hh2, h1);
    let norm = |v: &DVector<f64>| problem.inner(v, v).sqrt();
    let scale = (norm(&hh1) * norm(h2)).max(norm(&hh2) * norm(h1));
    Ok((a - b).abs() / scale.max(f64::MIN_POSITIVE))
}

/// Second-order central difference `(D(Q+εh) - 2D(Q) + D(Q-εh)) / ε²`.
pub fn second_difference(
    problem: &ReducedProblem,
    eval: &ReducedEvaluation,
    h: &DVector<f64>,
    eps: f64,
) -> Result<f64> {
    let plus = problem.value(&perturb(&eval.coefficient, h, eps)?)?.0;
    let minus = problem.value(&perturb(&eval.coefficient, h, -eps)?)?.0;
    Ok((plus - 2.0 * eval.value + minus) / (eps * eps))
}

/// Cellwise y-integrated squares `c_K(V, V) / |K|` and `c_K(P, P) / |K|`.
pub fn state_fields(eval: &ReducedEvaluation) -> (DVector<f64>, DVector<f64>) {
    let disc = eval.system.discretization();
    let widths = disc.space().omega().cell_widths();
    let v = eval.state.coefficients();
    let p = eval.adjoint.coefficients();
    (
        disc.cell_cross_terms(v, v).component_div(&widths),
        disc.cell_cross_terms(p, p).component_div(&widths),
    )
}

/// Smallest Ritz value of the reduced Hessian on the Krylov space of
/// dimension `steps`, built with two-pass Gram–Schmidt in the `L²` cell inner
/// product. The projected matrix is formed explicitly, so the Ritz values
/// interlace the spectrum even when the spectrum is clustered.
pub fn smallest_ritz_value(
    problem: &ReducedProblem,
    eval: &ReducedEvaluation,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    let n = problem.mesh().cell_count();
    let steps = steps.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = |v: &DVector<f64>| problem.inner(v, v).sqrt();
    let mut q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    q /= norm(&q);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut images: Vec<DVector<f64>> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let hq = problem.hessian_vector(eval, &q)?;
        basis.push(q);
        images.push(hq.clone());
        let mut w = hq;
        for _ in 0..2 {
            for b in &basis {
                let c = problem.inner(b, &w);
                w.axpy(-c, b, 1.0);
            }
        }
        let beta = norm(&w);
        if beta <= 1e-10 * norm(images.last().unwrap()).max(f64::MIN_POSITIVE) {
            break;
        }
        q = w / beta;
    }
    let m = basis.len();
    let mut t = DMatrix::from_fn(m, m, |i, j| problem.inner(&basis[i], &images[j]));
    t = 0.5 * (&t + t.transpose());
    Ok(t.symmetric_eigen().eigenvalues.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{trace, ExtensionParams};
    use crate::params::FractionalParams;
    use crate::tensor::build_tensor_space;
    use crate::ymesh::geometric_mesh;

    fn setup(cells: usize, s: f64, rho: f64) -> (ReducedProblem, Coefficient) {
        let omega = OmegaMesh::unit_interval(cells).unwrap();
        let space = build_tensor_space(omega.clone(), geometric_mesh(3.0, 4, 0.5, 1.0).unwrap());
        let disc = Arc::new(Discretization::new(space, FractionalParams::new(s).unwrap()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(cells as u64);
        let q = Coefficient::new(
            DVector::from_fn(cells, |_, _| rng.random_range(0.2..0.8)),
            1.0,
        )
        .unwrap();
        let f = omega.interpolate(|x| 20.0 * (1.0 + x) * (2.5 * x).cos());
        let z = omega.interpolate(|x| 3.0 * (std::f64::consts::PI * x).sin());
        let prior = Coefficient::constant(cells, 0.5, 1.0).unwrap();
        (ReducedProblem::new(disc, f, z, rho, prior).unwrap(), q)
    }

    fn random_direction(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn value_splits_into_misfit_and_penalty() {
        let (problem, q) = setup(8, 0.4, 0.3);
        let eval = problem.evaluate(&q).unwrap();
        assert_eq!(eval.value, eval.misfit + eval.penalty);
        assert_eq!(eval.gradient.len(), 8);
    }

    #[test]
    fn perfect_fit_leaves_only_penalty() {
        let (problem, q) = setup(8, 0.6, 0.2);
        let eval = problem.evaluate(&q).unwrap();
        let fit = ReducedProblem::new(
            problem.discretization().clone(),
            problem.source().clone(),
            trace(&eval.state),
            0.2,
            problem.prior().clone(),
        )
        .unwrap();
        let e = fit.evaluate(&q).unwrap();
        assert_eq!(e.adjoint.coefficients().amax(), 0.0);
        assert_eq!(e.misfit, 0.0);
        assert_eq!(e.misfit_gradient.amax(), 0.0);
        let expected = 0.2 * (q.values() - problem.prior().values());
        assert!((e.gradient - expected).amax() < 1e-15);

        let zero_rho = ReducedProblem::new(
            problem.discretization().clone(),
            problem.source().clone(),
            trace(&eval.state),
            0.0,
            problem.prior().clone(),
        )
        .unwrap();
        assert_eq!(zero_rho.evaluate(&q).unwrap().value, 0.0);
    }

    #[test]
    fn prior_point_has_no_penalty() {
        let (problem, _) = setup(8, 0.5, 1.0);
        let eval = problem.evaluate(problem.prior()).unwrap();
        assert_eq!(eval.penalty, 0.0);
        assert_eq!(eval.value, eval.misfit);
    }

    #[test]
    fn adjoint_is_linear_in_the_residual() {
        let (problem, q) = setup(8, 0.3, 0.1);
        let system = problem.system(&q).unwrap();
        let v = solve_state(&system, problem.source()).unwrap();
        let tr = trace(&v);
        let p = solve_adjoint(&system, &v, problem.data()).unwrap();
        // Data reflected through tr V negates the residual.
        let mirrored = 2.0 * &tr - problem.data();
        let m = solve_adjoint(&system, &v, &mirrored).unwrap();
        assert!((p.coefficients() + m.coefficients()).amax() < 1e-10 * p.coefficients().amax());
        let zero = solve_adjoint(&system, &v, &tr).unwrap();
        assert_eq!(zero.coefficients().amax(), 0.0);
    }

    #[test]
    fn adjoint_identity_against_random_functions() {
        let (problem, q) = setup(8, 0.45, 0.1);
        let system = problem.system(&q).unwrap();
        let disc = system.discretization();
        let v = solve_state(&system, problem.source()).unwrap();
        let p = solve_adjoint(&system, &v, problem.data()).unwrap();
        let residual = trace(&v) - problem.data();
        let d_s = system.params().d_s();
        for seed in 0..10 {
            let w = random_direction(disc.space().dof_count(), 100 + seed);
            let lhs = system.apply(&w).dot(p.coefficients());
            let rhs = d_s * residual.dot(&(disc.omega_mass() * disc.trace(&w)));
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn zero_state_gives_zero_gradient_field() {
        let (problem, q) = setup(8, 0.5, 0.1);
        let system = problem.system(&q).unwrap();
        let v = solve_state(&system, problem.source()).unwrap();
        let zero = system.state(DVector::zeros(system.space().dof_count()));
        assert_eq!(reduced_gradient_field(&system, &zero, &v).unwrap().amax(), 0.0);
        assert_eq!(reduced_gradient_field(&system, &v, &zero).unwrap().amax(), 0.0);
    }

    #[test]
    fn mismatched_coefficients_are_a_contract_error() {
        let (problem, q) = setup(8, 0.5, 0.1);
        let a = problem.system(&q).unwrap();
        let b = problem.system(problem.prior()).unwrap();
        let v = solve_state(&a, problem.source()).unwrap();
        let w = solve_state(&b, problem.source()).unwrap();
        assert!(matches!(
            reduced_gradient_field(&a, &v, &w),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (problem, q) = setup(10, 0.35, 0.05);
        let eval = problem.evaluate(&q).unwrap();
        let directions: Vec<_> = (0..5).map(|k| random_direction(10, k)).collect();
        let rows = gradient_check(&problem, &eval, &directions, &[1e-3, 1e-4, 1e-5, 1e-6]).unwrap();
        for best in best_errors(&rows) {
            assert!(best < 1e-5, "best relative error {best}");
        }
    }

    #[test]
    fn negative_gradient_is_a_descent_direction() {
        for seed in 0..10u64 {
            let (problem, _) = setup(6, 0.3 + 0.04 * seed as f64, 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = Coefficient::new(DVector::from_fn(6, |_, _| rng.random_range(0.3..0.7)), 1.0).unwrap();
            let eval = problem.evaluate(&q).unwrap();
            let t = 1e-3 / eval.gradient.amax();
            let trial = perturb(&q, &eval.gradient, -t).unwrap();
            assert!(problem.value(&trial).unwrap().0 < eval.value);
        }
    }

    #[test]
    fn sensitivity_is_linear_and_second_order_accurate() {
        let (problem, q) = setup(8, 0.4, 0.1);
        let eval = problem.evaluate(&q).unwrap();
        let h = random_direction(8, 5);
        let psi = sensitivity_solve(&eval.system, &eval.state, &h).unwrap();
        let psi2 = sensitivity_solve(&eval.system, &eval.state, &(2.0 * &h)).unwrap();
        assert!((psi2.coefficients() - 2.0 * psi.coefficients()).amax() <= 1e-10 * psi.coefficients().amax());
        let zero = sensitivity_solve(&eval.system, &eval.state, &DVector::zeros(8)).unwrap();
        assert_eq!(zero.coefficients().amax(), 0.0);
        let ts = [1e-1, 1e-2, 1e-3];
        let r = taylor_remainders(&problem, &eval, &(0.1 * &h), &ts).unwrap();
        for order in observed_orders(&ts, &r) {
            assert!(order >= 1.9, "order {order}");
        }
    }

    #[test]
    fn hessian_is_symmetric_and_matches_second_differences() {
        let (problem, q) = setup(8, 0.55, 0.05);
        let eval = problem.evaluate(&q).unwrap();
        let h1 = random_direction(8, 21);
        let h2 = random_direction(8, 22);
        assert!(hessian_symmetry_defect(&problem, &eval, &h1, &h2).unwrap() <= 1e-8);
        assert_eq!(problem.hessian_vector(&eval, &DVector::zeros(8)).unwrap().amax(), 0.0);
        let h = 0.2 * h1;
        let hv = problem.inner(&problem.hessian_vector(&eval, &h).unwrap(), &h);
        let fd = second_difference(&problem, &eval, &h, 1e-3).unwrap();
        assert!((hv - fd).abs() <= 1e-4 * hv.abs(), "{hv} vs {fd}");
    }

    #[test]
    fn penalty_only_regime_is_gauss_newton() {
        // With a perfect fit the adjoint vanishes and the Hessian reduces to
        // J*J + ρ, so (H h, h) ≥ ρ ‖h‖².
        let (problem, q) = setup(8, 0.5, 0.3);
        let eval = problem.evaluate(&q).unwrap();
        let fit = ReducedProblem::new(
            problem.discretization().clone(),
            problem.source().clone(),
            trace(&eval.state),
            0.3,
            problem.prior().clone(),
        )
        .unwrap();
        let e = fit.evaluate(&q).unwrap();
        let h = random_direction(8, 9);
        let hv = fit.inner(&fit.hessian_vector(&e, &h).unwrap(), &h);
        assert!(hv >= 0.3 * fit.inner(&h, &h) * (1.0 - 1e-12));
        let ritz = smallest_ritz_value(&fit, &e, 20, 1).unwrap();
        assert!(ritz >= 0.3 * (1.0 - 1e-8), "ritz {ritz}");
    }

    #[test]
    fn state_fields_are_nonnegative() {
        let omega = OmegaMesh::unit_interval(16).unwrap();
        let space = ExtensionParams::default().space(omega.clone(), 9.8).unwrap();
        let disc = Arc::new(Discretization::new(space, FractionalParams::new(0.5).unwrap()).unwrap());
        let prior = Coefficient::constant(16, 0.5, 1.0).unwrap();
        let problem = ReducedProblem::new(
            disc,
            omega.interpolate(|_| 1.0),
            omega.interpolate(|_| 0.0),
            0.1,
            prior.clone(),
        )
        .unwrap();
        let eval = problem.evaluate(&prior).unwrap();
        let (e, p) = state_fields(&eval);
        assert!(e.iter().all(|&v| v > 0.0));
        assert!(p.iter().all(|&v| v > 0.0));
    }
}
