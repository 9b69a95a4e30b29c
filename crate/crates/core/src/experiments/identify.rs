//! Identification of a manufactured coefficient from oracle data, for one
//! schedule level or along the whole schedule.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use super::{cells_for, metadata, profile_coefficient, source_vector, ExperimentConfig, RunOptions, StudyOutput, Table};
use crate::adjoint::{smallest_ritz_value, state_fields, ReducedProblem};
use crate::error::Result;
use crate::forward::{smallest_eigenvalue, Discretization};
use crate::identification::{identify, make_noisy_data, variational_inequality_residual, IdentificationResult, ScheduleLevel};
use crate::omega::{assemble_omega_forms, Coefficient, OmegaMesh};
use crate::params::FractionalParams;
use crate::spectral::full_eigenpairs;
use crate::tensor::build_tensor_space;

/// Exact data `u† = L(q†)^{-s} f` on the oracle mesh.
struct Oracle {
    mesh: OmegaMesh,
    states: Vec<DVector<f64>>,
}

impl Oracle {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let mesh = OmegaMesh::unit_interval(1 << config.reference_level)?;
        let q = profile_coefficient(&config.coefficient, &mesh, config.upper)?;
        let eig = full_eigenpairs(&assemble_omega_forms(&mesh, &q)?)?;
        let f = source_vector(&config.source, &mesh);
        let states = config
            .s
            .iter()
            .map(|&s| Ok(eig.fractional_solve(&f, s)?.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mesh, states })
    }
}

struct LevelRun {
    s: f64,
    level: ScheduleLevel,
    mesh: OmegaMesh,
    result: IdentificationResult,
    error: f64,
    initial_error: f64,
    vi_residual: f64,
    ritz_value: f64,
    e_sup: f64,
    p_sup: f64,
}

fn run_level(
    config: &ExperimentConfig,
    options: &RunOptions,
    oracle: &Oracle,
    order: usize,
    n: u32,
    warm: Option<(&OmegaMesh, &Coefficient)>,
) -> Result<LevelRun> {
    let s = config.s[order];
    let level = config.schedule.level(n);
    let mesh = OmegaMesh::unit_interval(cells_for(level.h)?)?;
    let space = match &options.ymesh {
        Some(ymesh) => build_tensor_space(mesh.clone(), ymesh.clone()),
        // q ≥ 0 only raises λ₁, so the coefficient-free value is safe for
        // every iterate.
        None => {
            let lambda1 = smallest_eigenvalue(&mesh, &Coefficient::constant(mesh.cell_count(), 0.0, config.upper)?)?;
            config.extension.space(mesh.clone(), lambda1)?
        }
    };
    let disc = Arc::new(Discretization::new(space, FractionalParams::new(s)?)?);
    let exact = oracle.mesh.transfer(&oracle.states[order], &mesh);
    let data = make_noisy_data(&exact, level.delta, &mesh, config.seed)?;
    let prior = Coefficient::constant(mesh.cell_count(), config.prior, config.upper)?;
    let problem = ReducedProblem::new(disc, source_vector(&config.source, &mesh), data, level.rho, prior.clone())?
        .with_solver(config.solver);
    let initial = match warm {
        Some((coarse, q)) => q.transfer(coarse, &mesh),
        None => prior.clone(),
    };
    let result = identify(&problem, &initial, &config.optimizer)?;
    let truth = profile_coefficient(&config.coefficient, &mesh, config.upper)?;
    let error = mesh.cell_norm(&(result.coefficient().values() - truth.values()));
    let initial_error = mesh.cell_norm(&(prior.values() - truth.values()));
    let vi_residual = variational_inequality_residual(&problem, &result.evaluation, config.vi_samples, config.seed);
    let ritz_value = smallest_ritz_value(&problem, &result.evaluation, config.ritz_steps, config.seed)?;
    let (e, p) = state_fields(&result.evaluation);
    log::info!(
        "s = {s}, level {n}: error {error:e} after {} iterations (converged: {})",
        result.iterations,
        result.converged
    );
    Ok(LevelRun {
        s,
        level,
        mesh,
        result,
        error,
        initial_error,
        vi_residual,
        ritz_value,
        e_sup: e.amax(),
        p_sup: p.amax(),
    })
}

fn diagnostics_row(run: &LevelRun) -> Vec<super::Cell> {
    let r = &run.result;
    vec![
        r.converged.into(),
        r.iterations.into(),
        r.projected_gradient_norm.into(),
        r.fixed_point_residual.into(),
        run.vi_residual.into(),
        run.ritz_value.into(),
        run.e_sup.into(),
        run.p_sup.into(),
    ]
}

const DIAGNOSTIC_COLUMNS: [&str; 8] = [
    "converged",
    "iterations",
    "pg_norm",
    "fixed_point_residual",
    "vi_residual",
    "ritz_value",
    "e_sup",
    "p_sup",
];

fn oracle_note(oracle: &Oracle) -> String {
    format!(
        "spectral oracle for the exact coefficient on {} uniform cells",
        oracle.mesh.cell_count()
    )
}

/// One identification at the last configured schedule level, written as
/// `q_recovered`, `history` and `diagnostics` tables.
pub fn run_identification(config: &ExperimentConfig, options: &RunOptions) -> Result<StudyOutput> {
    let oracle = Oracle::new(config)?;
    let n = *config.levels.last().expect("validated levels");
    let run = run_level(config, options, &oracle, 0, n, None)?;

    let mut q = Table::new("q_recovered", &["cell_left", "cell_right", "value"]);
    for (k, &v) in run.result.coefficient().values().iter().enumerate() {
        let (a, b) = run.mesh.cell_bounds(k);
        q.push(vec![a.into(), b.into(), v.into()]);
    }
    let mut history = Table::new("history", &["iter", "value", "misfit", "penalty", "pg_norm"])
        .with_plot("iter", &["value", "pg_norm"], false, true);
    for e in &run.result.history {
        history.push(vec![
            e.iteration.into(),
            e.value.into(),
            e.misfit.into(),
            e.penalty.into(),
            e.pg_norm.into(),
        ]);
    }
    let mut columns = vec!["s", "n", "h", "rho", "delta", "error_L2", "initial_error_L2"];
    columns.extend(DIAGNOSTIC_COLUMNS);
    let mut diagnostics = Table::new("diagnostics", &columns);
    let mut row = vec![
        run.s.into(),
        n.into(),
        run.level.h.into(),
        run.level.rho.into(),
        run.level.delta.into(),
        run.error.into(),
        run.initial_error.into(),
    ];
    row.extend(diagnostics_row(&run));
    diagnostics.push(row);

    let mut meta = metadata(config, &oracle_note(&oracle));
    meta.insert("schedule_valid".into(), config.schedule.validate().is_ok().into());
    Ok(StudyOutput {
        config: config.clone(),
        tables: vec![q, history, diagnostics],
        metadata: meta,
        state: Some(run.result.evaluation.state.clone()),
    })
}

/// Rows `(n, h_n, δ_n, ρ_n, ‖Q_n - q†‖, misfit, iterations)` with
/// stationarity diagnostics, the distance to the finest recovered
/// coefficient and a flag on every level whose error grew.
pub fn run_identification_study(config: &ExperimentConfig, options: &RunOptions) -> Result<StudyOutput> {
    let oracle = Oracle::new(config)?;
    let mut levels = config.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let per_order: Vec<Vec<LevelRun>> = (0..config.s.len())
        .into_par_iter()
        .map(|order| {
            if config.warm_start {
                let mut runs: Vec<LevelRun> = Vec::new();
                for &n in &levels {
                    let warm = runs.last().map(|r| (&r.mesh, r.result.coefficient()));
                    let run = run_level(config, options, &oracle, order, n, warm)?;
                    runs.push(run);
                }
                Ok(runs)
            } else {
                levels
                    .par_iter()
                    .map(|&n| run_level(config, options, &oracle, order, n, None))
                    .collect::<Result<Vec<_>>>()
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut columns = vec![
        "s",
        "n",
        "h_n",
        "delta_n",
        "rho_n",
        "error_L2",
        "misfit",
        "error_vs_finest",
        "transient",
    ];
    columns.extend(DIAGNOSTIC_COLUMNS);
    let mut table = Table::new("schedule_study", &columns).with_plot("h_n", &["error_L2", "error_vs_finest"], true, true);
    let mut nonincreasing = true;
    let mut transients = Vec::new();
    for runs in &per_order {
        let finest = runs.last().expect("validated levels");
        for (k, run) in runs.iter().enumerate() {
            let lifted = run.result.coefficient().transfer(&run.mesh, &finest.mesh);
            let vs_finest = finest
                .mesh
                .cell_norm(&(lifted.values() - finest.result.coefficient().values()));
            let grew = k > 0 && run.error > runs[k - 1].error;
            if grew {
                nonincreasing = false;
                transients.push(toml::Value::Integer(run.level.n as i64));
            }
            let mut row = vec![
                run.s.into(),
                run.level.n.into(),
                run.level.h.into(),
                run.level.delta.into(),
                run.level.rho.into(),
                run.error.into(),
                run.result.evaluation.misfit.into(),
                vs_finest.into(),
                grew.into(),
            ];
            row.extend(diagnostics_row(run));
            table.push(row);
        }
    }

    let mut meta = metadata(config, &oracle_note(&oracle));
    let validity = config.schedule.validate();
    meta.insert("schedule_valid".into(), validity.is_ok().into());
    if let Err(e) = validity {
        meta.insert("schedule_violation".into(), e.to_string().into());
    }
    meta.insert("error_nonincreasing".into(), nonincreasing.into());
    meta.insert("transient_levels".into(), toml::Value::Array(transients));
    meta.insert(
        "initial_error_L2".into(),
        per_order[0][0].initial_error.into(),
    );
    meta.insert(
        "coefficient_reference".into(),
        "finest-level recovered coefficient, standing in for the continuous truncated minimizer".into(),
    );
    meta.insert("noise_free".into(), (config.schedule.delta_scale == 0.0).into());
    let state = per_order
        .into_iter()
        .next()
        .and_then(|runs| runs.into_iter().last())
        .map(|r| r.result.evaluation.state);
    Ok(StudyOutput {
        config: config.clone(),
        tables: vec![table],
        metadata: meta,
        state,
    })
}
