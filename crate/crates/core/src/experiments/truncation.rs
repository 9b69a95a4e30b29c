//! Energy error of truncating the cylinder at height `Y`, measured against a
//! much taller solve on a nested y-mesh.

use std::sync::Arc;

use rayon::prelude::*;

use super::{metadata, source_vector, ExperimentConfig, StudyOutput, Table};
use crate::error::Result;
use crate::forward::{assemble_with, smallest_eigenvalue, solve_state, Discretization};
use crate::omega::{Coefficient, OmegaMesh};
use crate::params::FractionalParams;
use crate::tensor::build_tensor_space;
use crate::ymesh::{linear_degrees, GradedExtensionMesh};

/// Graded elements below `y = 1`.
const GRADED_ELEMENTS: usize = 10;

/// `GRADED_ELEMENTS` geometric elements on `[0, 1]` followed by unit
/// elements up to `height`, all of the top degree of the graded part. Every
/// whole number up to `height` is a breakpoint, so each truncated mesh is a
/// prefix and its space is a subspace of the reference space.
pub fn composite_reference_mesh(height: u32, grading: f64, slope: f64) -> Result<GradedExtensionMesh> {
    let mut breakpoints = vec![0.0];
    breakpoints.extend((1..=GRADED_ELEMENTS).map(|i| grading.powi((GRADED_ELEMENTS - i) as i32)));
    let mut degrees = linear_degrees(GRADED_ELEMENTS, slope);
    let top = *degrees.last().unwrap();
    for y in 2..=height {
        breakpoints.push(y as f64);
        degrees.push(top);
    }
    GradedExtensionMesh::from_parts(breakpoints, degrees, grading, slope)
}

/// Least-squares slope of `ln e` against `Y`.
fn fitted_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, e)| (a + x / n, b + e.ln() / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), &(x, e)| {
        (a + (x - mx) * (e.ln() - my), b + (x - mx) * (x - mx))
    });
    Some(sxy / sxx)
}

struct Row {
    s: f64,
    shift: f64,
    lambda1: f64,
    height: f64,
    error: f64,
    relative: f64,
    floor: bool,
}

/// Rows `(Y, energy error, e^{-√λ₁ Y / 4})` per fractional order and shift,
/// and a fit table with the least-squares slope over the rows above the
/// solver floor.
pub fn run_truncation_study(config: &ExperimentConfig) -> Result<StudyOutput> {
    let omega = OmegaMesh::unit_interval(config.cells)?;
    let reference = composite_reference_mesh(config.reference_height, config.extension.grading, config.extension.slope)?;
    let f = source_vector(&config.source, &omega);
    let cases: Vec<(f64, f64)> = config
        .s
        .iter()
        .flat_map(|&s| config.shifts.iter().map(move |&c| (s, c)))
        .collect();
    let blocks: Vec<Vec<Row>> = cases
        .par_iter()
        .map(|&(s, shift)| {
            let params = FractionalParams::new(s)?;
            let q = Coefficient::constant(omega.cell_count(), shift, shift.max(config.upper))?;
            let lambda1 = smallest_eigenvalue(&omega, &q)?;
            let disc = Arc::new(Discretization::new(build_tensor_space(omega.clone(), reference.clone()), params)?);
            let ref_system = assemble_with(&disc, &q, config.solver)?;
            let v_ref = solve_state(&ref_system, &f)?;
            let ref_norm = ref_system.energy_norm_of(v_ref.coefficients());
            let mut floor = false;
            config
                .heights
                .iter()
                .map(|&height| {
                    let elements = GRADED_ELEMENTS + height as usize - 1;
                    let space = build_tensor_space(omega.clone(), reference.prefix(elements)?);
                    let disc = Arc::new(Discretization::new(space, params)?);
                    let v = solve_state(&assemble_with(&disc, &q, config.solver)?, &f)?;
                    // Prefix dofs come first in the y-slowest layout.
                    let mut d = v_ref.coefficients().clone();
                    let mut head = d.rows_mut(0, v.coefficients().len());
                    head -= v.coefficients();
                    let error = ref_system.energy_norm_of(&d);
                    let relative = error / ref_norm;
                    floor |= relative < config.solver_floor;
                    Ok(Row {
                        s,
                        shift,
                        lambda1,
                        height: height as f64,
                        error,
                        relative,
                        floor,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(
        "truncation",
        &["s", "shift", "lambda1", "Y", "energy_error", "relative_error", "bound", "at_solver_floor"],
    )
    .with_plot("Y", &["relative_error", "bound"], false, true);
    let mut fit = Table::new(
        "truncation_fit",
        &["s", "shift", "lambda1", "fitted_slope", "bound_slope", "rows_used"],
    );
    for rows in &blocks {
        for r in rows {
            table.push(vec![
                r.s.into(),
                r.shift.into(),
                r.lambda1.into(),
                r.height.into(),
                r.error.into(),
                r.relative.into(),
                (-(r.lambda1.sqrt()) * r.height / 4.0).exp().into(),
                r.floor.into(),
            ]);
        }
        let used: Vec<(f64, f64)> = rows.iter().filter(|r| !r.floor).map(|r| (r.height, r.error)).collect();
        let first = &rows[0];
        fit.push(vec![
            first.s.into(),
            first.shift.into(),
            first.lambda1.into(),
            fitted_slope(&used).into(),
            (-first.lambda1.sqrt() / 4.0).into(),
            used.len().into(),
        ]);
    }
    let mut meta = metadata(
        config,
        &format!(
            "truncated solve at height {} on a nested y-mesh whose prefixes are the truncated meshes",
            config.reference_height
        ),
    );
    meta.insert("graded_elements".into(), toml::Value::Integer(GRADED_ELEMENTS as i64));
    meta.insert("reference_ydofs".into(), toml::Value::Integer(reference.dof_count() as i64));
    Ok(StudyOutput {
        config: config.clone(),
        tables: vec![table, fit],
        metadata: meta,
        state: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_mesh_nests_whole_heights() {
        let mesh = composite_reference_mesh(5, 0.5, 1.0).unwrap();
        assert_eq!(mesh.element_count(), GRADED_ELEMENTS + 4);
        assert_eq!(mesh.breakpoints()[GRADED_ELEMENTS], 1.0);
        assert_eq!(mesh.height(), 5.0);
        for y in 1..=5usize {
            assert_eq!(mesh.prefix(GRADED_ELEMENTS + y - 1).unwrap().height(), y as f64);
        }
        assert!(mesh.degrees()[GRADED_ELEMENTS..].iter().all(|&r| r == GRADED_ELEMENTS));
    }

    #[test]
    fn slope_fit_recovers_exponent() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|y| (y as f64, 3.0 * (-0.7 * y as f64).exp())).collect();
        assert!((fitted_slope(&pts).unwrap() + 0.7).abs() < 1e-12);
        assert_eq!(fitted_slope(&pts[..1]), None);
    }
}
