//! Reproducible studies driven by [`ExperimentConfig`].
//!
//! Every study returns its tables and a metadata record naming the oracle it
//! measured against; [`StudyOutput::write`] puts them in a run directory next
//! to the resolved config echo.

pub mod config;
mod forward_rate;
mod grad_check;
mod identify;
pub mod table;
mod truncation;

use std::path::{Path, PathBuf};

use nalgebra::DVector;

pub use config::{cells_for, default_truth, ExperimentConfig, ExperimentKind, Piece, Profile, Source};
pub use forward_rate::run_forward_convergence;
pub use grad_check::run_gradient_check;
pub use identify::{run_identification, run_identification_study};
pub use table::{write_tables, Cell, PlotSpec, Table};
pub use truncation::{composite_reference_mesh, run_truncation_study};

use crate::error::{Error, Result};
use crate::forward::TensorState;
use crate::omega::{Coefficient, OmegaMesh};
use crate::ymesh::GradedExtensionMesh;

/// Overrides that come from the command line rather than the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the automatically chosen y-mesh on every level.
    pub ymesh: Option<GradedExtensionMesh>,
    /// Where to write the binary snapshot of the final discrete state.
    pub dump_state: Option<PathBuf>,
}

#[derive(Debug)]
pub struct StudyOutput {
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub metadata: toml::Table,
    /// Final state of the study, written when a dump path is requested.
    pub state: Option<TensorState>,
}

impl StudyOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `config.toml`, `metadata.toml` and every table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let config = dir.join("config.toml");
        std::fs::write(&config, self.config.to_toml())?;
        let metadata = dir.join("metadata.toml");
        let text = toml::to_string(&self.metadata).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&metadata, text)?;
        let mut written = vec![config, metadata];
        written.extend(write_tables(dir, &self.tables)?);
        Ok(written)
    }

    pub fn dump_state(&self, path: &Path) -> Result<()> {
        match &self.state {
            Some(state) => state.save(path),
            None => Err(Error::Config(format!(
                "the {} study produces no state to dump",
                self.config.kind
            ))),
        }
    }
}

/// Runs the study named by `config.kind`.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<StudyOutput> {
    config.validate()?;
    match config.kind {
        ExperimentKind::ForwardRate => run_forward_convergence(config, options),
        ExperimentKind::Truncation => run_truncation_study(config),
        ExperimentKind::GradCheck => run_gradient_check(config, options),
        ExperimentKind::Identify => run_identification(config, options),
        ExperimentKind::ScheduleStudy => run_identification_study(config, options),
    }
}

/// Profile sampled at cell midpoints, with an upper bound at least `upper`.
fn profile_coefficient(profile: &Profile, mesh: &OmegaMesh, upper: f64) -> Result<Coefficient> {
    let domain = mesh.interval();
    let values = DVector::from_fn(mesh.cell_count(), |k, _| profile.evaluate(mesh.cell_midpoint(k), domain));
    let upper = values.iter().fold(upper, |u, &v| u.max(v));
    Coefficient::new(values, upper)
}

fn source_vector(source: &Source, mesh: &OmegaMesh) -> DVector<f64> {
    let domain = mesh.interval();
    mesh.interpolate(|x| source.evaluate(x, domain))
}

fn metadata(config: &ExperimentConfig, oracle: &str) -> toml::Table {
    let mut m = toml::Table::new();
    m.insert("kind".into(), config.kind.name().into());
    m.insert("oracle".into(), oracle.into());
    m.insert("seed".into(), toml::Value::Integer(config.seed as i64));
    m
}

/// `log(e_prev / e) / log(h_prev / h)`.
fn observed_order(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}
