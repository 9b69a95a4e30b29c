//! Trace error of the truncated extension solve against the spectral oracle
//! under dyadic refinement.

use std::sync::Arc;

use rayon::prelude::*;

use super::{metadata, observed_order, profile_coefficient, source_vector, ExperimentConfig, RunOptions, StudyOutput, Table};
use crate::error::Result;
use crate::forward::{assemble_with, smallest_eigenvalue, solve_state, trace, Discretization, TensorState};
use crate::omega::{assemble_omega_forms, OmegaMesh};
use crate::params::FractionalParams;
use crate::spectral::full_eigenpairs;
use crate::tensor::build_tensor_space;

struct LevelResult {
    level: u32,
    h: f64,
    height: f64,
    elements: usize,
    dofs: usize,
    err_hs: f64,
    err_l2: f64,
    state: TensorState,
}

/// Rows `(s, level, h, Y, dofs, err_trace_Hs, err_trace_L2, observed_order)`
/// with orders between consecutive rows of the same `s`.
pub fn run_forward_convergence(config: &ExperimentConfig, options: &RunOptions) -> Result<StudyOutput> {
    let reference = OmegaMesh::unit_interval(1 << config.reference_level)?;
    let q_ref = profile_coefficient(&config.coefficient, &reference, config.upper)?;
    let oracle = full_eigenpairs(&assemble_omega_forms(&reference, &q_ref)?)?;
    let f_ref = source_vector(&config.source, &reference);
    let mass = reference.mass_matrix();

    let per_order: Vec<Vec<LevelResult>> = config
        .s
        .par_iter()
        .map(|&s| {
            let params = FractionalParams::new(s)?;
            let exact = oracle.fractional_solve(&f_ref, s)?.values;
            config
                .levels
                .iter()
                .map(|&level| {
                    let mesh = OmegaMesh::unit_interval(1 << level)?;
                    let q = profile_coefficient(&config.coefficient, &mesh, config.upper)?;
                    let space = match &options.ymesh {
                        Some(ymesh) => build_tensor_space(mesh.clone(), ymesh.clone()),
                        None => config.extension.space(mesh.clone(), smallest_eigenvalue(&mesh, &q)?)?,
                    };
                    let height = space.ymesh().height();
                    let elements = space.ymesh().element_count();
                    let dofs = space.dof_count();
                    let disc = Arc::new(Discretization::new(space, params)?);
                    let system = assemble_with(&disc, &q, config.solver)?;
                    let state = solve_state(&system, &source_vector(&config.source, &mesh))?;
                    let e = &exact - mesh.transfer(&trace(&state), &reference);
                    log::info!("forward rate s = {s}, level {level}: {dofs} dofs");
                    Ok(LevelResult {
                        level,
                        h: mesh.meshwidth(),
                        height,
                        elements,
                        dofs,
                        err_hs: oracle.hs_norm(&e, s)?,
                        err_l2: e.dot(&(&mass * &e)).sqrt(),
                        state,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(
        "forward_rate",
        &["s", "level", "h", "Y", "M", "dofs", "err_trace_Hs", "err_trace_L2", "observed_order", "observed_order_L2"],
    )
    .with_plot("h", &["err_trace_Hs", "err_trace_L2"], true, true);
    let mut summary = Table::new("forward_rate_summary", &["s", "levels", "min_order_last3", "min_order_L2_last3"]);
    for (&s, rows) in config.s.iter().zip(&per_order) {
        let mut orders = Vec::new();
        for (k, r) in rows.iter().enumerate() {
            let (order, order_l2) = match k.checked_sub(1).map(|j| &rows[j]) {
                Some(p) => (
                    Some(observed_order(p.err_hs, r.err_hs, p.h, r.h)),
                    Some(observed_order(p.err_l2, r.err_l2, p.h, r.h)),
                ),
                None => (None, None),
            };
            if let (Some(a), Some(b)) = (order, order_l2) {
                orders.push((a, b));
            }
            table.push(vec![
                s.into(),
                r.level.into(),
                r.h.into(),
                r.height.into(),
                r.elements.into(),
                r.dofs.into(),
                r.err_hs.into(),
                r.err_l2.into(),
                order.into(),
                order_l2.into(),
            ]);
        }
        let last = &orders[orders.len().saturating_sub(3)..];
        let min = |f: fn(&(f64, f64)) -> f64| {
            (!last.is_empty()).then(|| last.iter().map(f).fold(f64::INFINITY, f64::min))
        };
        summary.push(vec![s.into(), rows.len().into(), min(|o| o.0).into(), min(|o| o.1).into()]);
    }

    let mut meta = metadata(
        config,
        &format!(
            "spectral oracle: full generalized eigendecomposition on {} uniform cells",
            reference.cell_count()
        ),
    );
    meta.insert("ymesh".into(), if options.ymesh.is_some() { "file" } else { "automatic" }.into());
    let state = per_order
        .into_iter()
        .next()
        .and_then(|rows| rows.into_iter().last())
        .map(|r| r.state);
    Ok(StudyOutput {
        config: config.clone(),
        tables: vec![table, summary],
        metadata: meta,
        state,
    })
}
