//! Central-difference, Taylor and Hessian-symmetry checks of the reduced
//! functional at the prior, with data generated from the exact coefficient.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{metadata, profile_coefficient, source_vector, ExperimentConfig, RunOptions, StudyOutput, Table};
use crate::adjoint::{
    best_errors, gradient_check, hessian_symmetry_defect, observed_orders, second_difference, taylor_remainders,
    ReducedProblem,
};
use crate::error::Result;
use crate::forward::{assemble_with, smallest_eigenvalue, solve_state, trace, Discretization};
use crate::omega::{Coefficient, OmegaMesh};
use crate::params::FractionalParams;
use crate::tensor::build_tensor_space;

/// Tables `grad_check` (one row per direction and step), `grad_check_best`,
/// `taylor` and `hessian`.
pub fn run_gradient_check(config: &ExperimentConfig, options: &RunOptions) -> Result<StudyOutput> {
    let omega = OmegaMesh::unit_interval(config.cells)?;
    let truth = profile_coefficient(&config.coefficient, &omega, config.upper)?;
    let prior = Coefficient::constant(omega.cell_count(), config.prior, config.upper)?;
    let f = source_vector(&config.source, &omega);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let directions: Vec<DVector<f64>> = (0..config.directions)
        .map(|_| DVector::from_fn(omega.cell_count(), |_, _| rng.random_range(-1.0..1.0)))
        .collect();

    let mut fd = Table::new("grad_check", &["direction_id", "step", "fd_value", "adjoint_value", "rel_error"])
        .with_plot("step", &["rel_error"], true, true);
    let mut best = Table::new("grad_check_best", &["s", "direction_id", "best_rel_error"]);
    let mut taylor = Table::new("taylor", &["s", "t", "remainder", "observed_order"])
        .with_plot("t", &["remainder"], true, true);
    let mut hessian = Table::new(
        "hessian",
        &["s", "pair", "symmetry_defect", "quadratic_form", "second_difference", "relative_gap"],
    );
    let lambda1 = smallest_eigenvalue(&omega, &Coefficient::constant(omega.cell_count(), 0.0, config.upper)?)?;
    for (block, &s) in config.s.iter().enumerate() {
        let space = match &options.ymesh {
            Some(ymesh) => build_tensor_space(omega.clone(), ymesh.clone()),
            None => config.extension.space(omega.clone(), lambda1)?,
        };
        let disc = Arc::new(Discretization::new(space, FractionalParams::new(s)?)?);
        let z = trace(&solve_state(&assemble_with(&disc, &truth, config.solver)?, &f)?);
        let problem = ReducedProblem::new(disc, f.clone(), z, config.rho, prior.clone())?.with_solver(config.solver);
        let eval = problem.evaluate(&prior)?;
        let offset = block * config.directions;

        let rows = gradient_check(&problem, &eval, &directions, &config.steps)?;
        for r in &rows {
            fd.push(vec![
                (offset + r.direction).into(),
                r.step.into(),
                r.fd_value.into(),
                r.adjoint_value.into(),
                r.rel_error.into(),
            ]);
        }
        for (d, e) in best_errors(&rows).into_iter().enumerate() {
            best.push(vec![s.into(), (offset + d).into(), e.into()]);
        }

        let remainders = taylor_remainders(&problem, &eval, &directions[0], &config.taylor_steps)?;
        let orders = observed_orders(&config.taylor_steps, &remainders);
        for (k, (&t, &r)) in config.taylor_steps.iter().zip(&remainders).enumerate() {
            let order = k.checked_sub(1).map(|j| orders[j]);
            taylor.push(vec![s.into(), t.into(), r.into(), order.into()]);
        }

        for (pair, h) in directions.chunks_exact(2).enumerate() {
            let defect = hessian_symmetry_defect(&problem, &eval, &h[0], &h[1])?;
            let hh = problem.hessian_vector(&eval, &h[0])?;
            let quadratic = problem.inner(&hh, &h[0]);
            let second = second_difference(&problem, &eval, &h[0], 1e-3)?;
            hessian.push(vec![
                s.into(),
                pair.into(),
                defect.into(),
                quadratic.into(),
                second.into(),
                ((second - quadratic).abs() / quadratic.abs()).into(),
            ]);
        }
        log::info!("gradient check s = {s} done");
    }
    let meta = metadata(
        config,
        "central differences of the discrete reduced functional at the prior",
    );
    Ok(StudyOutput {
        config: config.clone(),
        tables: vec![fd, best, taylor, hessian],
        metadata: meta,
        state: None,
    })
}
