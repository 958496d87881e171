use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::stability_bound;
use crate::model::Potential;
use crate::numerics::GridSpec;
use crate::pathint::KernelForm;
use crate::scenarios::{self, InitialState, Scenario};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "GRW_OUTPUT_DIR";

/// Output directory used when neither the document nor the environment names one.
pub const FALLBACK_OUTPUT_DIR: &str = "grw-out";

pub const DEFAULT_TRAJECTORIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Master,
    Superop,
    Pathint,
    Unravel,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Master => "master",
            Solver::Superop => "superop",
            Solver::Pathint => "pathint",
            Solver::Unravel => "unravel",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "master" => Ok(Solver::Master),
            "superop" => Ok(Solver::Superop),
            "pathint" => Ok(Solver::Pathint),
            "unravel" => Ok(Solver::Unravel),
            other => Err(Error::config(
                "solver",
                format!("unknown solver `{other}`; expected master, superop, pathint or unravel"),
            )),
        }
    }
}

/// Configuration document as written, before defaults and validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<String>,
    pub solver: Option<Solver>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub physics: RawPhysics,
    pub grid: Option<RawGrid>,
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub numerics: RawNumerics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPhysics {
    pub lambda: Option<f64>,
    pub r_c: Option<f64>,
    pub mass: Option<f64>,
    pub hbar: Option<f64>,
    pub kinetic: Option<bool>,
    pub potential: Option<Potential>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNumerics {
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub trajectories: Option<usize>,
    /// Steps between density snapshots; 0 keeps only the initial and final fields.
    pub snapshot_every: Option<usize>,
    pub threads: Option<usize>,
    pub kernel: Option<KernelForm>,
}

/// Validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub solver: Solver,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Path-integral steps.
    pub n_steps: usize,
    pub trajectories: usize,
    pub snapshot_every: usize,
    pub threads: Option<usize>,
    pub kernel: KernelForm,
}

/// Parses a TOML document; errors carry the dotted path of the offending key.
pub fn parse_raw(text: &str) -> Result<RawConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<document>".to_string() } else { path };
        Error::config(key, e.into_inner().message().to_string())
    })
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_raw(text)?.resolve()
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { key, message } => Error::config(format!("{prefix}.{key}"), message),
        other => other,
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be > 0, got {v}")))
    }
}

impl RawConfig {
    /// Applies defaults (output directory from `GRW_OUTPUT_DIR`) and validates.
    pub fn resolve(self) -> Result<RunConfig> {
        let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        self.resolve_with_default_dir(env_dir)
    }

    pub fn resolve_with_default_dir(self, default_dir: Option<PathBuf>) -> Result<RunConfig> {
        let solver = self
            .solver
            .ok_or_else(|| Error::config("solver", "missing required key"))?;
        let base = match &self.scenario {
            Some(name) => Some(scenarios::preset(name).map_err(|e| Error::config("scenario", e.to_string()))?),
            None => None,
        };

        let mut params = base.as_ref().map(|s| s.params.clone()).unwrap_or_default();
        let ph = &self.physics;
        params.lambda = ph.lambda.unwrap_or(params.lambda);
        params.r_c = ph.r_c.unwrap_or(params.r_c);
        params.mass = ph.mass.unwrap_or(params.mass);
        params.hbar = ph.hbar.unwrap_or(params.hbar);
        params.kinetic = ph.kinetic.unwrap_or(params.kinetic);
        if let Some(v) = &ph.potential {
            params.potential = v.clone();
        }
        params.validate().map_err(|e| prefixed("physics", e))?;

        let grid = match (self.grid, &base) {
            (Some(g), _) => GridSpec::new(g.n_points, g.x_min, g.x_max).map_err(|e| Error::config("grid", e.to_string()))?,
            (None, Some(s)) => s.grid,
            (None, None) => return Err(Error::config("grid", "missing required section (no scenario preset given)")),
        };
        let initial = match (&self.initial, &base) {
            (Some(i), _) => i.clone(),
            (None, Some(s)) => s.initial.clone(),
            (None, None) => return Err(Error::config("initial", "missing required section (no scenario preset given)")),
        };
        let num = &self.numerics;
        let t_final = match (num.t_final, &base) {
            (Some(t), _) => t,
            (None, Some(s)) => s.t_final,
            (None, None) => return Err(Error::config("numerics.t_final", "missing required key")),
        };
        positive("numerics.t_final", t_final)?;
        let dt = match (num.dt, &base) {
            (Some(t), _) => t,
            (None, Some(s)) => s.dt,
            (None, None) if solver == Solver::Superop => t_final,
            (None, None) if solver == Solver::Pathint && num.n_steps.is_some() => t_final / num.n_steps.unwrap_or(1) as f64,
            (None, None) => return Err(Error::config("numerics.dt", "missing required key")),
        };
        positive("numerics.dt", dt)?;

        let n_steps = num.n_steps.unwrap_or_else(|| (t_final / dt).ceil().max(1.0) as usize);
        if n_steps == 0 {
            return Err(Error::config("numerics.n_steps", "must be at least 1"));
        }
        let trajectories = num.trajectories.unwrap_or(DEFAULT_TRAJECTORIES);
        if trajectories == 0 {
            return Err(Error::config("numerics.trajectories", "must be at least 1"));
        }
        if num.threads == Some(0) {
            return Err(Error::config("numerics.threads", "must be at least 1"));
        }

        match solver {
            Solver::Master => {
                let bound = stability_bound(&grid, &params);
                if dt > bound {
                    return Err(Error::config(
                        "numerics.dt",
                        format!("{dt} exceeds the stability bound {bound} (0.4 m dx^2 / hbar)"),
                    ));
                }
            }
            Solver::Pathint => {
                let le = params.lambda * t_final / n_steps as f64;
                if le >= 0.1 {
                    return Err(Error::config(
                        "numerics.n_steps",
                        format!("lambda * t_final / n_steps = {le} must stay below 0.1"),
                    ));
                }
            }
            Solver::Unravel if self.seed.is_none() => {
                return Err(Error::config(
                    "seed",
                    "stochastic runs need an explicit seed for reproducibility",
                ));
            }
            _ => {}
        }

        let name = self.scenario.clone().unwrap_or_else(|| "inline".to_string());
        let tags = base.as_ref().map(|s| s.tags.clone()).unwrap_or_default();
        let scenario = Scenario {
            name,
            grid,
            params,
            initial,
            t_final,
            dt,
            tags,
        };
        scenario.initial_field().map_err(|e| prefixed("initial", e))?;

        Ok(RunConfig {
            scenario,
            solver,
            seed: self.seed,
            output_dir: self
                .output_dir
                .or(default_dir)
                .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR)),
            n_steps,
            trajectories,
            snapshot_every: num.snapshot_every.unwrap_or(0),
            threads: num.threads,
            kernel: num.kernel.unwrap_or_default(),
        })
    }
}
