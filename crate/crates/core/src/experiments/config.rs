//! Declarative TOML configuration shared by every study.
//!
//! Keys absent from a file take defaults that depend on the study kind, so a
//! config names only what it changes. The echo written next to the results
//! is fully resolved and parses back to the same value.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ExtensionParams, LinearSolver};
use crate::identification::{OptimizerConfig, Schedule};
use crate::params::FractionalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ForwardRate,
    Truncation,
    GradCheck,
    Identify,
    ScheduleStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::ForwardRate,
        ExperimentKind::Truncation,
        ExperimentKind::GradCheck,
        ExperimentKind::Identify,
        ExperimentKind::ScheduleStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ForwardRate => "forward-rate",
            ExperimentKind::Truncation => "truncation",
            ExperimentKind::GradCheck => "grad-check",
            ExperimentKind::Identify => "identify",
            ExperimentKind::ScheduleStudy => "schedule-study",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

/// A piece `[left, right)` of a piecewise-constant profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub left: f64,
    pub right: f64,
    pub value: f64,
}

/// Reaction coefficient profile on Ω, sampled at cell midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    PiecewiseConstant { background: f64, pieces: Vec<Piece> },
    /// `mean + amplitude sin(π (x - a) / (b - a))`.
    Sine { mean: f64, amplitude: f64 },
}

impl Profile {
    pub fn evaluate(&self, x: f64, (a, b): (f64, f64)) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::PiecewiseConstant { background, pieces } => pieces
                .iter()
                .rev()
                .find(|p| p.left <= x && x < p.right)
                .map_or(*background, |p| p.value),
            Profile::Sine { mean, amplitude } => {
                mean + amplitude * (std::f64::consts::PI * (x - a) / (b - a)).sin()
            }
        }
    }

    /// Bounds every value of the profile can take.
    fn range(&self) -> (f64, f64) {
        match self {
            Profile::Constant { value } => (*value, *value),
            Profile::PiecewiseConstant { background, pieces } => pieces
                .iter()
                .fold((*background, *background), |(lo, hi), p| (lo.min(p.value), hi.max(p.value))),
            Profile::Sine { mean, amplitude } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }
}

/// Right-hand side `f` on Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    Constant { value: f64 },
    /// `amplitude √(2/|Ω|) sin(k π (x - a) / |Ω|)`, the `k`-th Dirichlet
    /// eigenfunction of `-u''` scaled to unit `L²` norm.
    Sine { amplitude: f64, frequency: u32 },
}

impl Source {
    pub fn evaluate(&self, x: f64, (a, b): (f64, f64)) -> f64 {
        match *self {
            Source::Constant { value } => value,
            Source::Sine { amplitude, frequency } => {
                let width = b - a;
                amplitude
                    * (2.0 / width).sqrt()
                    * (frequency as f64 * std::f64::consts::PI * (x - a) / width).sin()
            }
        }
    }
}

/// Resolved configuration of one study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Fractional orders; studies loop over them.
    pub s: Vec<f64>,
    /// Forward rate: `h = 2^{-level}`. Schedule study and identify: schedule
    /// indices `n`, `h = h₀ 2^{-n}` (identify runs the last one).
    pub levels: Vec<u32>,
    /// Oracle mesh `h = 2^{-reference_level}`.
    pub reference_level: u32,
    /// Ω cells for the truncation study and the gradient check.
    pub cells: usize,
    /// Constant reaction coefficients of the truncation study.
    pub shifts: Vec<f64>,
    /// Truncation heights of the truncation study (whole numbers).
    pub heights: Vec<u32>,
    /// Height of the truncation reference solve.
    pub reference_height: u32,
    /// Smallest relative energy error still counted as truncation error.
    pub solver_floor: f64,
    /// Exact coefficient `q†` (the evaluation point of the gradient check).
    pub coefficient: Profile,
    /// Constant prior `q*`.
    pub prior: f64,
    /// Upper bound `q̄` of the admissible set.
    pub upper: f64,
    pub source: Source,
    /// Regularization weight of the gradient check.
    pub rho: f64,
    pub directions: usize,
    pub steps: Vec<f64>,
    pub taylor_steps: Vec<f64>,
    pub ritz_steps: usize,
    pub vi_samples: usize,
    /// Start each schedule level from the previous minimizer.
    pub warm_start: bool,
    pub seed: u64,
    pub output: PathBuf,
    pub solver: LinearSolver,
    pub extension: ExtensionParams,
    pub schedule: Schedule,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<ExperimentKind>,
    #[serde(deserialize_with = "one_or_many")]
    s: Vec<f64>,
    levels: Option<Vec<u32>>,
    reference_level: Option<u32>,
    cells: Option<usize>,
    shifts: Option<Vec<f64>>,
    heights: Option<Vec<u32>>,
    reference_height: Option<u32>,
    solver_floor: Option<f64>,
    coefficient: Option<Profile>,
    prior: Option<f64>,
    upper: Option<f64>,
    source: Option<Source>,
    rho: Option<f64>,
    directions: Option<usize>,
    steps: Option<Vec<f64>>,
    taylor_steps: Option<Vec<f64>>,
    ritz_steps: Option<usize>,
    vi_samples: Option<usize>,
    warm_start: Option<bool>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    solver: Option<LinearSolver>,
    extension: Option<ExtensionParams>,
    schedule: Option<Schedule>,
    optimizer: Option<OptimizerConfig>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// `q† = 0.5 + 0.3 · 1_{[0.25, 0.75)}`.
pub fn default_truth() -> Profile {
    Profile::PiecewiseConstant {
        background: 0.5,
        pieces: vec![Piece {
            left: 0.25,
            right: 0.75,
            value: 0.8,
        }],
    }
}

/// Source amplitude of the identification studies. The state reaches about
/// 36, which keeps the misfit sensitive to `q` at desk-scale noise levels.
pub const IDENTIFICATION_SOURCE: f64 = 100.0;

impl ExperimentConfig {
    /// Defaults of `kind` for orders `s`.
    pub fn defaults(kind: ExperimentKind, s: Vec<f64>) -> Self {
        let identification = matches!(kind, ExperimentKind::Identify | ExperimentKind::ScheduleStudy);
        Self {
            kind,
            s,
            levels: match kind {
                ExperimentKind::ForwardRate => (4..=8).collect(),
                ExperimentKind::Identify => vec![3],
                _ => (1..=4).collect(),
            },
            reference_level: match kind {
                ExperimentKind::ForwardRate => 10,
                _ => 9,
            },
            cells: match kind {
                ExperimentKind::GradCheck => 16,
                _ => 32,
            },
            shifts: vec![0.0, 5.0, 20.0],
            heights: (1..=6).collect(),
            reference_height: 18,
            solver_floor: 1e-10,
            coefficient: match kind {
                ExperimentKind::ForwardRate | ExperimentKind::Truncation => Profile::Constant { value: 0.0 },
                _ => default_truth(),
            },
            prior: 0.5,
            upper: 1.0,
            source: match kind {
                ExperimentKind::ForwardRate => Source::Sine {
                    amplitude: 1.0,
                    frequency: 1,
                },
                ExperimentKind::Truncation => Source::Constant { value: 1.0 },
                _ => Source::Constant {
                    value: IDENTIFICATION_SOURCE,
                },
            },
            rho: 1e-2,
            directions: 10,
            steps: (2..=7).map(|k| 10f64.powi(-k)).collect(),
            taylor_steps: (1..=6).map(|k| 0.5f64.powi(k)).collect(),
            ritz_steps: 20,
            vi_samples: 100,
            warm_start: false,
            seed: 7,
            output: PathBuf::from("results").join(kind.name()),
            solver: if identification || kind == ExperimentKind::GradCheck {
                LinearSolver::Diagonalized
            } else {
                LinearSolver::Direct
            },
            extension: ExtensionParams::default(),
            schedule: Schedule::default(),
            optimizer: OptimizerConfig::default(),
        }
    }

    /// Default config for `kind`, as used when no file is given.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let s = match kind {
            ExperimentKind::ForwardRate => vec![0.3, 0.5, 0.7],
            _ => vec![0.5],
        };
        Self::defaults(kind, s)
    }

    /// Parses TOML text. `kind` resolves the study when the text names none;
    /// a conflicting `kind` key is an error.
    pub fn parse(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let kind = match (raw.kind, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config is for `{a}`, not `{b}`")));
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(Error::Config("missing field `kind`".into())),
        };
        let d = Self::defaults(kind, raw.s);
        let config = Self {
            kind,
            s: d.s,
            levels: raw.levels.unwrap_or(d.levels),
            reference_level: raw.reference_level.unwrap_or(d.reference_level),
            cells: raw.cells.unwrap_or(d.cells),
            shifts: raw.shifts.unwrap_or(d.shifts),
            heights: raw.heights.unwrap_or(d.heights),
            reference_height: raw.reference_height.unwrap_or(d.reference_height),
            solver_floor: raw.solver_floor.unwrap_or(d.solver_floor),
            coefficient: raw.coefficient.unwrap_or(d.coefficient),
            prior: raw.prior.unwrap_or(d.prior),
            upper: raw.upper.unwrap_or(d.upper),
            source: raw.source.unwrap_or(d.source),
            rho: raw.rho.unwrap_or(d.rho),
            directions: raw.directions.unwrap_or(d.directions),
            steps: raw.steps.unwrap_or(d.steps),
            taylor_steps: raw.taylor_steps.unwrap_or(d.taylor_steps),
            ritz_steps: raw.ritz_steps.unwrap_or(d.ritz_steps),
            vi_samples: raw.vi_samples.unwrap_or(d.vi_samples),
            warm_start: raw.warm_start.unwrap_or(d.warm_start),
            seed: raw.seed.unwrap_or(d.seed),
            output: raw.output.unwrap_or(d.output),
            solver: raw.solver.unwrap_or(d.solver),
            extension: raw.extension.unwrap_or(d.extension),
            schedule: raw.schedule.unwrap_or(d.schedule),
            optimizer: raw.optimizer.unwrap_or(d.optimizer),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, kind)
    }

    /// Fully resolved TOML echo.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.is_empty() {
            return Err(Error::Config("`s` lists no fractional order".into()));
        }
        for &s in &self.s {
            FractionalParams::new(s).map_err(|_| Error::Config(format!("s = {s} outside (0, 1)")))?;
        }
        self.extension.validate()?;
        self.optimizer.validate()?;
        if !(self.upper > 0.0) {
            return Err(Error::Config(format!("upper bound {} must be positive", self.upper)));
        }
        if !(0.0..=self.upper).contains(&self.prior) {
            return Err(Error::Config(format!("prior {} outside [0, {}]", self.prior, self.upper)));
        }
        let (lo, hi) = self.coefficient.range();
        let needs_box = !matches!(self.kind, ExperimentKind::ForwardRate | ExperimentKind::Truncation);
        if needs_box && !(lo >= 0.0 && hi <= self.upper) {
            return Err(Error::Config(format!(
                "coefficient range [{lo}, {hi}] outside [0, {}]",
                self.upper
            )));
        }
        if !(lo >= 0.0) {
            return Err(Error::Config(format!("coefficient takes the negative value {lo}")));
        }
        if self.kind == ExperimentKind::Identify && self.s.len() != 1 {
            return Err(Error::Config("identify runs a single fractional order `s`".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("`levels` is empty".into()));
        }
        match self.kind {
            ExperimentKind::ForwardRate => {
                if self.levels.iter().any(|&l| l == 0 || l >= self.reference_level) {
                    return Err(Error::Config(format!(
                        "forward levels must lie in 1..{}",
                        self.reference_level
                    )));
                }
                if self.reference_level > 11 {
                    return Err(Error::Config("reference level above 11 (2048 cells)".into()));
                }
            }
            ExperimentKind::Identify | ExperimentKind::ScheduleStudy => {
                let finest = self.levels.iter().map(|&n| self.schedule.level(n).h).fold(1.0, f64::min);
                let reference = 0.5f64.powi(self.reference_level as i32);
                if !(reference < finest) || self.reference_level > 11 {
                    return Err(Error::Config(format!(
                        "reference level {} must be finer than every schedule level and at most 11",
                        self.reference_level
                    )));
                }
                for &n in &self.levels {
                    cells_for(self.schedule.level(n).h)?;
                }
                if !(self.schedule.h0 > 0.0 && self.schedule.h0 < 1.0) {
                    return Err(Error::Config(format!("base meshwidth h0 = {} outside (0, 1)", self.schedule.h0)));
                }
            }
            ExperimentKind::Truncation => {
                if self.heights.is_empty()
                    || self.heights.windows(2).any(|w| w[0] >= w[1])
                    || self.heights[0] == 0
                    || *self.heights.last().unwrap() >= self.reference_height
                {
                    return Err(Error::Config(format!(
                        "truncation heights must increase strictly within 1..{}",
                        self.reference_height
                    )));
                }
                if self.shifts.is_empty() || self.shifts.iter().any(|&c| !(c >= 0.0)) {
                    return Err(Error::Config("truncation shifts must be nonnegative".into()));
                }
                if !(self.solver_floor > 0.0) {
                    return Err(Error::Config("solver floor must be positive".into()));
                }
            }
            ExperimentKind::GradCheck => {
                if self.steps.is_empty() || self.steps.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::Config("finite-difference steps must be positive".into()));
                }
                if self.taylor_steps.len() < 2 || self.taylor_steps.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::Config("at least two positive Taylor steps are required".into()));
                }
                if self.directions < 2 {
                    return Err(Error::Config("the gradient check needs at least two directions".into()));
                }
                if !(self.rho >= 0.0) {
                    return Err(Error::Config(format!("ρ = {} must be nonnegative", self.rho)));
                }
            }
        }
        if matches!(self.kind, ExperimentKind::GradCheck | ExperimentKind::Truncation) && self.cells < 2 {
            return Err(Error::Config("at least two cells are required".into()));
        }
        Ok(())
    }
}

/// Cell count of a uniform unit-interval mesh with meshwidth `h`.
pub fn cells_for(h: f64) -> Result<usize> {
    let cells = (1.0 / h).round();
    if !((cells * h - 1.0).abs() < 1e-9 && (2.0..=1e6).contains(&cells)) {
        return Err(Error::Config(format!("meshwidth {h} does not divide the unit interval")));
    }
    Ok(cells as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_idempotent() {
        for kind in ExperimentKind::ALL {
            let config = ExperimentConfig::default_for(kind);
            let echo = config.to_toml();
            let parsed = ExperimentConfig::parse(&echo, None).unwrap();
            assert_eq!(parsed, config, "{echo}");
            assert_eq!(parsed.to_toml(), echo);
        }
    }

    #[test]
    fn partial_file_takes_kind_defaults() {
        let c = ExperimentConfig::parse("s = 0.3\nseed = 11\n[schedule]\nrho_exponent = 0.5\n", Some(ExperimentKind::ScheduleStudy)).unwrap();
        assert_eq!(c.s, vec![0.3]);
        assert_eq!(c.seed, 11);
        assert_eq!(c.levels, vec![1, 2, 3, 4]);
        assert_eq!(c.schedule.rho_exponent, 0.5);
        assert_eq!(c.schedule.gamma, 0.9);
        assert_eq!(c.solver, LinearSolver::Diagonalized);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("s = 0.5\nsigma_typo = 2\n", Some(ExperimentKind::ForwardRate)).unwrap_err();
        assert!(err.is_configuration());
        assert!(err.to_string().contains("sigma_typo"), "{err}");
        let err = ExperimentConfig::parse("s = 0.5\n[extension]\ngrade = 0.3\n", Some(ExperimentKind::ForwardRate)).unwrap_err();
        assert!(err.to_string().contains("grade"), "{err}");
    }

    #[test]
    fn missing_order_is_rejected() {
        let err = ExperimentConfig::parse("levels = [3, 4]\n", Some(ExperimentKind::ForwardRate)).unwrap_err();
        assert!(err.to_string().contains("`s`"), "{err}");
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for text in [
            "s = 1.0",
            "s = [0.5, 0.0]",
            "s = 0.5\n[extension]\ngrading = 1.5",
            "s = 0.5\n[extension]\nslope = -1",
            "s = 0.5\nlevels = [4, 12]",
            "s = 0.5\nkind = \"truncation\"",
        ] {
            let err = ExperimentConfig::parse(text, Some(ExperimentKind::ForwardRate)).unwrap_err();
            assert!(err.is_configuration(), "{text}: {err}");
        }
        let err = ExperimentConfig::parse("s = 0.5\nheights = [3, 2]", Some(ExperimentKind::Truncation)).unwrap_err();
        assert!(err.to_string().contains("heights"));
        let err = ExperimentConfig::parse("s = 0.5\nupper = 0.7", Some(ExperimentKind::Identify)).unwrap_err();
        assert!(err.to_string().contains("coefficient range"));
    }

    #[test]
    fn profiles_evaluate() {
        let dom = (0.0, 1.0);
        let q = default_truth();
        assert_eq!(q.evaluate(0.1, dom), 0.5);
        assert_eq!(q.evaluate(0.25, dom), 0.8);
        assert_eq!(q.evaluate(0.75, dom), 0.5);
        let sine = Profile::Sine { mean: 1.0, amplitude: 0.5 };
        assert!((sine.evaluate(0.5, dom) - 1.5).abs() < 1e-15);
        let f = Source::Sine { amplitude: 1.0, frequency: 1 };
        assert!((f.evaluate(0.5, dom) - 2f64.sqrt()).abs() < 1e-15);
        let parsed: Profile = toml::from_str("kind = \"sine\"\nmean = 1\namplitude = 0.25").unwrap();
        assert_eq!(parsed, Profile::Sine { mean: 1.0, amplitude: 0.25 });
    }
}
