//! Projected-gradient minimization of the reduced functional over
//! piecewise-constant coefficients in the box `[0, q̄]`, with the two
//! stationarity certificates (projection fixed point and variational
//! inequality), synthetic noise, partial observations and the
//! regularization schedule.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{ReducedEvaluation, ReducedProblem};
use crate::error::{Error, Result};
use crate::omega::{Coefficient, OmegaMesh};

/// Cellwise clamp onto `[0, q̄]`.
pub fn project_box(values: &DVector<f64>, upper: f64) -> Result<Coefficient> {
    if !(upper > 0.0) {
        return Err(Error::Config(format!("upper bound q̄ = {upper} must be positive")));
    }
    Coefficient::new(values.map(|v| v.clamp(0.0, upper)), upper)
}

/// Cell means of a P1 function (exact: the mean of a linear function over a
/// cell is the average of its endpoint values).
pub fn project_piecewise_constant(g: &DVector<f64>, mesh: &OmegaMesh) -> DVector<f64> {
    DVector::from_iterator(
        mesh.cell_count(),
        (0..mesh.cell_count()).map(|k| {
            let [l, r] = mesh.cell_dofs(k);
            0.5 * (l.map_or(0.0, |i| g[i]) + r.map_or(0.0, |i| g[i]))
        }),
    )
}

/// Cell means of a general function by Gauss–Legendre quadrature.
pub fn cell_means(f: impl Fn(f64) -> f64, mesh: &OmegaMesh) -> DVector<f64> {
    let rule = crate::quadrature::gauss_legendre(8);
    DVector::from_iterator(
        mesh.cell_count(),
        (0..mesh.cell_count()).map(|k| {
            let (a, b) = mesh.cell_bounds(k);
            0.5 * rule.integrate(|x| f(a + 0.5 * (b - a) * (1.0 + x)))
        }),
    )
}

/// Barzilai–Borwein formula for the trial step after the first iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `(s, s) / (s, y)`
    Long,
    /// `(s, y) / (y, y)`
    Short,
    /// Long and short steps on alternate iterations.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub step_rule: StepRule,
    pub max_iterations: usize,
    /// Stop when both the projected-gradient norm and the fixed-point
    /// residual are below this value.
    pub tolerance: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step reduction factor during backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Alternating,
            max_iterations: 2000,
            tolerance: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("optimizer tolerance must be positive".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Config("Armijo constant must lie in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtracking factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub value: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub pg_norm: f64,
}

#[derive(Debug)]
pub struct IdentificationResult {
    pub evaluation: ReducedEvaluation,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
    pub fixed_point_residual: f64,
    pub history: Vec<HistoryEntry>,
}

impl IdentificationResult {
    pub fn coefficient(&self) -> &Coefficient {
        &self.evaluation.coefficient
    }

    pub fn final_value(&self) -> f64 {
        self.evaluation.value
    }
}

/// `‖Q - Π(Q - g)‖_{L²}`.
pub fn projected_gradient_norm(problem: &ReducedProblem, eval: &ReducedEvaluation) -> f64 {
    let q = eval.coefficient.values();
    let step = (q - &eval.gradient).map(|v| v.clamp(0.0, problem.upper()));
    problem.mesh().cell_norm(&(q - step))
}

/// `‖Q - Π(q* - 𝔯_h(Q) / ρ)‖_{L²}`.
pub fn fixed_point_residual(problem: &ReducedProblem, eval: &ReducedEvaluation) -> Result<f64> {
    let rho = problem.rho();
    if !(rho > 0.0) {
        return Err(Error::Domain("the fixed-point residual needs ρ > 0".into()));
    }
    let target = (problem.prior().values() - &eval.misfit_gradient / rho)
        .map(|v| v.clamp(0.0, problem.upper()));
    Ok(problem.mesh().cell_norm(&(eval.coefficient.values() - target)))
}

/// `min_P (g, P - Q)_{L²}` over `samples` uniformly random feasible `P`;
/// nonnegative at a stationary point.
pub fn variational_inequality_residual(
    problem: &ReducedProblem,
    eval: &ReducedEvaluation,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = eval.coefficient.len();
    let upper = problem.upper();
    (0..samples)
        .map(|_| {
            let p = DVector::from_fn(n, |_, _| rng.random_range(0.0..=upper));
            problem.inner(&eval.gradient, &(p - eval.coefficient.values()))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Projected gradient with Armijo backtracking along the projection arc and
/// Barzilai–Borwein initial steps.
pub fn identify(
    problem: &ReducedProblem,
    initial: &Coefficient,
    config: &OptimizerConfig,
) -> Result<IdentificationResult> {
    config.validate()?;
    let upper = problem.upper();
    let mut eval = problem.evaluate(&project_box(initial.values(), upper)?)?;
    let mut history = Vec::new();
    let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;
    for iteration in 0..=config.max_iterations {
        let pg = projected_gradient_norm(problem, &eval);
        let fp = fixed_point_residual(problem, &eval).unwrap_or(pg);
        history.push(HistoryEntry {
            iteration,
            value: eval.value,
            misfit: eval.misfit,
            penalty: eval.penalty,
            pg_norm: pg,
        });
        log::debug!("iteration {iteration}: value {:e}, pg {pg:e}, fp {fp:e}", eval.value);
        if pg.max(fp) <= config.tolerance || iteration == config.max_iterations {
            return Ok(IdentificationResult {
                evaluation: eval,
                iterations: iteration,
                converged: pg.max(fp) <= config.tolerance,
                projected_gradient_norm: pg,
                fixed_point_residual: fp,
                history,
            });
        }
        let q = eval.coefficient.values().clone();
        let g = eval.gradient.clone();
        let initial_step = upper / g.amax().max(f64::MIN_POSITIVE);
        let mut step = match &previous {
            Some((q_prev, g_prev)) => {
                let s = &q - q_prev;
                let y = &g - g_prev;
                let sy = problem.inner(&s, &y);
                if sy > 0.0 {
                    let long = iteration % 2 == 1 || config.step_rule == StepRule::Long;
                    if long && config.step_rule != StepRule::Short {
                        problem.inner(&s, &s) / sy
                    } else {
                        sy / problem.inner(&y, &y)
                    }
                } else {
                    initial_step
                }
            }
            None => initial_step,
        };
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial = project_box(&(&q - step * &g), upper)?;
            if trial.values() == &q {
                // The step no longer moves the iterate in floating point.
                break;
            }
            let decrease = problem.inner(&g, &(trial.values() - &q));
            let trial_eval = problem.evaluate(&trial)?;
            if trial_eval.value <= eval.value + config.armijo * decrease {
                accepted = Some(trial_eval);
                break;
            }
            step *= config.backtrack;
        }
        let Some(next) = accepted else {
            if pg.max(fp) <= 10.0 * config.tolerance {
                // Roundoff in the functional dominates the remaining decrease.
                return Ok(IdentificationResult {
                    evaluation: eval,
                    iterations: iteration,
                    converged: true,
                    projected_gradient_norm: pg,
                    fixed_point_residual: fp,
                    history,
                });
            }
            return Err(Error::Optimizer {
                message: format!(
                    "no sufficient decrease after {} backtracking steps (value {:e}, projected gradient {pg:e})",
                    config.max_backtracks, eval.value
                ),
                iterations: iteration,
            });
        };
        previous = Some((q, g));
        eval = next;
    }
    unreachable!("the loop returns at max_iterations")
}

/// `z = u + δ η / ‖η‖_{L²}` with a seeded random P1 direction `η` that is
/// `L²`-orthogonal to the interpolant of the constant function.
pub fn make_noisy_data(u: &DVector<f64>, delta: f64, mesh: &OmegaMesh, seed: u64) -> Result<DVector<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("noise level δ = {delta} must be nonnegative")));
    }
    if delta == 0.0 {
        return Ok(u.clone());
    }
    let mass = mesh.mass_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eta = DVector::from_fn(u.len(), |_, _| rng.random_range(-1.0..1.0));
    let one = DVector::from_element(u.len(), 1.0);
    let m_one = &mass * &one;
    eta -= (eta.dot(&m_one) / one.dot(&m_one)) * &one;
    let norm = eta.dot(&(&mass * &eta)).sqrt();
    Ok(u + (delta / norm) * eta)
}

/// Observations on a union of cells, spliced with the fill `u*` elsewhere.
/// A node takes the observed value when it touches an observed cell.
pub fn observation_extension(
    z: &DVector<f64>,
    observed: &[bool],
    fill: &DVector<f64>,
    mesh: &OmegaMesh,
) -> Result<DVector<f64>> {
    if observed.len() != mesh.cell_count() || z.len() != mesh.dof_count() || fill.len() != mesh.dof_count() {
        return Err(Error::Config("observation mask does not match the mesh".into()));
    }
    if !observed.iter().any(|&o| o) {
        return Err(Error::Config("observation mask covers no cells".into()));
    }
    Ok(DVector::from_fn(mesh.dof_count(), |i, _| {
        // Interior node i separates cells i and i + 1.
        if observed[i] || observed[i + 1] {
            z[i]
        } else {
            fill[i]
        }
    }))
}

/// `h_n = h₀ 2^{-n}`, `ρ_n = c_ρ h_n^{a_ρ}`, `δ_n = c_δ h_n^{a_δ}`, for an
/// assumed coefficient smoothness `γ`. A zero `delta_scale` gives exact data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub h0: f64,
    pub gamma: f64,
    pub rho_exponent: f64,
    pub rho_scale: f64,
    pub delta_exponent: f64,
    pub delta_scale: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            h0: 0.125,
            gamma: 0.9,
            rho_exponent: 0.9,
            rho_scale: 1.0,
            delta_exponent: 0.9,
            delta_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleLevel {
    pub n: u32,
    pub h: f64,
    pub rho: f64,
    pub delta: f64,
}

impl Schedule {
    /// Checks that `ρ_n → 0`, `δ_n²/ρ_n → 0` and `h_n^{2γ}/ρ_n → 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.h0 < 1.0) {
            return Err(Error::Config(format!("base meshwidth h0 = {} outside (0, 1)", self.h0)));
        }
        if !(self.rho_scale > 0.0 && self.delta_scale >= 0.0) {
            return Err(Error::Config("schedule scales must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("smoothness γ = {} outside (0, 1]", self.gamma)));
        }
        if !(self.rho_exponent > 0.0) {
            return Err(Error::Config(format!(
                "ρ_n = h_n^{} does not tend to zero",
                self.rho_exponent
            )));
        }
        if !(2.0 * self.gamma - self.rho_exponent > 0.0) {
            return Err(Error::Config(format!(
                "h_n^(2γ)/ρ_n = h_n^({}) does not tend to zero",
                2.0 * self.gamma - self.rho_exponent
            )));
        }
        if self.delta_scale > 0.0 && !(2.0 * self.delta_exponent - self.rho_exponent > 0.0) {
            return Err(Error::Config(format!(
                "δ_n²/ρ_n = h_n^({}) does not tend to zero",
                2.0 * self.delta_exponent - self.rho_exponent
            )));
        }
        Ok(())
    }

    /// Level `n` without validating the exponents.
    pub fn level(&self, n: u32) -> ScheduleLevel {
        let h = self.h0 * 0.5f64.powi(n as i32);
        ScheduleLevel {
            n,
            h,
            rho: self.rho_scale * h.powf(self.rho_exponent),
            delta: if self.delta_scale > 0.0 {
                self.delta_scale * h.powf(self.delta_exponent)
            } else {
                0.0
            },
        }
    }
}

/// Level `n` of a validated schedule.
pub fn parameter_schedule(n: u32, schedule: &Schedule) -> Result<ScheduleLevel> {
    schedule.validate()?;
    Ok(schedule.level(n))
}
