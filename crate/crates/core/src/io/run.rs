use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{RunConfig, Solver};
use super::plot::{emit_plot_data, PlotData, CSV_SCHEMA_VERSION};
use super::snapshot::{read_density, write_density};
use crate::error::{Error, Result};
use crate::limits::{self, coherence_report, default_p_grid, liouville_reference, PhaseField, VisibilityProbe};
use crate::master::{self, trace_distance, DensityField, DiagnosticSample, DiagnosticsSeries};
use crate::pathint;
use crate::scenarios::InitialState;
use crate::superop;
use crate::unravel::{self, WaveField};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct ManifestError {
    pub category: String,
    pub message: String,
}

/// Machine-readable record written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub csv_schema_version: u32,
    pub status: &'static str,
    pub error: Option<ManifestError>,
    pub solver: Solver,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub total_jumps: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub grw_core: &'static str,
    pub snapshot_format: u16,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_field: DensityField,
    pub snapshots: Vec<PathBuf>,
    pub manifest: Manifest,
}

/// Final field plus solver-specific extras.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub final_field: DensityField,
    pub total_jumps: Option<usize>,
}

/// Runs the configured solver without touching the file system. `sink`
/// receives the initial field, every `snapshot_every`-th intermediate field
/// and the final field, in time order.
pub fn solve(config: &RunConfig, mut sink: impl FnMut(&DensityField) -> Result<()>) -> Result<SolveOutcome> {
    let sc = &config.scenario;
    let initial = sc.initial_field()?;
    let every = if config.snapshot_every == 0 {
        usize::MAX
    } else {
        config.snapshot_every
    };
    match config.solver {
        Solver::Master => {
            let (fin, _) = master::evolve_observed(&initial, &sc.params, sc.t_final, sc.dt, every, &mut sink)?;
            Ok(SolveOutcome {
                final_field: fin,
                total_jumps: None,
            })
        }
        Solver::Pathint => {
            sink(&initial)?;
            let mut k = 0usize;
            let prop = pathint::propagate_with(&initial, &sc.params, sc.t_final, config.n_steps, config.kernel, &[], |f| {
                k += 1;
                if k % every == 0 && k < config.n_steps {
                    sink(f)?;
                }
                Ok(())
            })?;
            sink(&prop.field)?;
            Ok(SolveOutcome {
                final_field: prop.field,
                total_jumps: None,
            })
        }
        Solver::Superop => {
            let h = superop::build_effective_hamiltonian(&sc.grid, &sc.params)?;
            sink(&initial)?;
            let out = superop::evolve_exponential(&superop::vectorize(&initial), &h, sc.t_final - initial.time())?;
            let fin = superop::devectorize(&out, sc.t_final)?;
            sink(&fin)?;
            Ok(SolveOutcome {
                final_field: fin,
                total_jumps: None,
            })
        }
        Solver::Unravel => {
            let seed = config
                .seed
                .ok_or_else(|| Error::config("seed", "stochastic runs need an explicit seed"))?;
            let psi0 = WaveField::new(sc.grid, sc.initial_wave()?, 0.0)?;
            sink(&initial)?;
            let records = unravel::run_ensemble(&psi0, &sc.params, sc.t_final, sc.dt, seed, config.trajectories)?;
            let total_jumps = records.iter().map(|r| r.jump_count()).sum();
            let states: Vec<WaveField> = records.into_iter().map(|r| r.final_state).collect();
            let fin = unravel::ensemble_density(&states, &sc.grid)?.with_time(sc.t_final);
            sink(&fin)?;
            Ok(SolveOutcome {
                final_field: fin,
                total_jumps: Some(total_jumps),
            })
        }
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("numerics.threads", e.to_string()))?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(f())
}

fn csv_params(config: &RunConfig) -> Vec<(&'static str, String)> {
    let p = &config.scenario.params;
    vec![
        ("scenario", config.scenario.name.clone()),
        ("solver", config.solver.name().to_string()),
        ("lambda", p.lambda.to_string()),
        ("r_c", p.r_c.to_string()),
        ("mass", p.mass.to_string()),
        ("hbar", p.hbar.to_string()),
        ("seed", config.seed.map_or_else(|| "none".to_string(), |s| s.to_string())),
    ]
}

/// Visibility probe for a two-Gaussian initial state with distinct centres.
pub fn probe_for(initial: &InitialState, hbar: f64) -> Option<VisibilityProbe> {
    match *initial {
        InitialState::TwoGaussian { a1, a2, .. } if a1 != a2 => Some(VisibilityProbe::for_separation(a2 - a1, hbar)),
        _ => None,
    }
}

fn relative(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn execute(config: &RunConfig, dir: &Path, outputs: &mut Vec<PathBuf>, jumps: &mut Option<usize>) -> Result<RunSummary> {
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    let mut fields = Vec::new();
    let mut snapshots = Vec::new();
    let outcome = solve(config, |f| {
        let path = snap_dir.join(format!("snap_{:05}.grwd", snapshots.len()));
        write_density(f, &path)?;
        outputs.push(path.clone());
        snapshots.push(path);
        fields.push(f.clone());
        Ok(())
    })?;
    *jumps = outcome.total_jumps;

    let params = csv_params(config);
    let series = DiagnosticsSeries {
        samples: fields
            .iter()
            .map(|f| DiagnosticSample::of(f, config.scenario.params.r_c))
            .collect(),
    };
    let diag_path = dir.join("diagnostics.csv");
    emit_plot_data(PlotData::Diagnostics(&series), &params, &diag_path)?;
    outputs.push(diag_path);

    if let Some(probe) = probe_for(&config.scenario.initial, config.scenario.params.hbar) {
        let report = coherence_report(&fields, &config.scenario.params, &probe)?;
        let path = dir.join("coherence.csv");
        emit_plot_data(PlotData::Coherence(&report), &params, &path)?;
        outputs.push(path);
    }
    Ok(RunSummary {
        final_field: outcome.final_field,
        snapshots,
        manifest: placeholder_manifest(config),
    })
}

fn placeholder_manifest(config: &RunConfig) -> Manifest {
    Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        csv_schema_version: CSV_SCHEMA_VERSION,
        status: "running",
        error: None,
        solver: config.solver,
        config: config.clone(),
        seed: config.seed,
        versions: Versions {
            grw_core: env!("CARGO_PKG_VERSION"),
            snapshot_format: super::snapshot::FORMAT_VERSION,
        },
        wall_time_s: 0.0,
        outputs: Vec::new(),
        total_jumps: None,
    }
}

/// Runs the solver, writing snapshots, CSV diagnostics and `manifest.json`
/// to the configured output directory. A failed run still writes a
/// manifest, with status `failed` and the error category.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let start = Instant::now();
    let mut outputs = Vec::new();
    let mut jumps = None;
    let result = in_pool(config.threads, || execute(config, &dir, &mut outputs, &mut jumps)).and_then(|r| r);

    let mut manifest = placeholder_manifest(config);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.outputs = outputs.iter().map(|p| relative(&dir, p)).collect();
    manifest.total_jumps = jumps;
    match &result {
        Ok(_) => manifest.status = "ok",
        Err(e) => {
            manifest.status = "failed";
            manifest.error = Some(ManifestError {
                category: e.category().to_string(),
                message: e.to_string(),
            });
        }
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    result.map(|mut s| {
        s.manifest = manifest;
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareReport {
    pub max_abs_gap: f64,
    pub trace_distance: f64,
}

/// Runs the same scenario with two solvers and reports their gaps.
pub fn compare(config: &RunConfig, a: Solver, b: Solver) -> Result<CompareReport> {
    let with = |s: Solver| RunConfig {
        solver: s,
        ..config.clone()
    };
    let (ca, cb) = (with(a), with(b));
    let fa = in_pool(config.threads, || solve(&ca, |_| Ok(())))??.final_field;
    let fb = in_pool(config.threads, || solve(&cb, |_| Ok(())))??.final_field;
    Ok(CompareReport {
        max_abs_gap: fa.max_abs_diff(&fb)?,
        trace_distance: trace_distance(&fa, &fb)?,
    })
}

#[derive(Debug, Clone)]
pub struct ClassicalLimitReport {
    pub grw: PhaseField,
    pub liouville: PhaseField,
    /// `∫|grw - liouville| / ∫|liouville|`.
    pub l1_gap: f64,
}

/// Initial state with interference terms removed.
pub fn decohered(initial: &InitialState) -> InitialState {
    match *initial {
        InitialState::TwoGaussian { a1, a2, r, weights } => InitialState::TwoGaussian {
            a1,
            a2,
            r,
            weights: [[weights[0][0], 0.0], [0.0, weights[1][1]]],
        },
        ref other => other.clone(),
    }
}

/// GRW master evolution versus the Liouville flow of the decohered initial field.
pub fn classical_limit(config: &RunConfig) -> Result<ClassicalLimitReport> {
    let sc = &config.scenario;
    let hbar = sc.params.hbar;
    let p_grid = default_p_grid(&sc.grid, hbar)?;
    let (grw_end, _) = in_pool(config.threads, || master::evolve(&sc.initial_field()?, &sc.params, sc.t_final, sc.dt))??;
    let grw = limits::to_phase_space(&grw_end, &p_grid, hbar)?;
    let start = decohered(&sc.initial).build(&sc.grid, hbar)?;
    let classical0 = limits::to_phase_space(&start, &p_grid, hbar)?;
    let liouville = liouville_reference(&classical0, &sc.params, sc.t_final)?;
    let l1_gap = grw.relative_l1(&liouville)?;
    Ok(ClassicalLimitReport { grw, liouville, l1_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub n_points: usize,
    pub time: f64,
    pub trace_error: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: Option<f64>,
    pub passed: bool,
}

/// Trace, Hermiticity and (on grids of at most 64 points) positivity of a field.
pub fn check_invariants(field: &DensityField) -> Result<InvariantReport> {
    let n = field.grid().n_points();
    let min_eigenvalue = if n <= 64 { Some(field.min_eigenvalue()?) } else { None };
    let trace_error = (field.trace() - 1.0).abs();
    let hermiticity = field.hermiticity_residue();
    Ok(InvariantReport {
        n_points: n,
        time: field.time(),
        trace_error,
        hermiticity,
        min_eigenvalue,
        passed: trace_error <= 1e-8 && hermiticity <= 1e-10 && min_eigenvalue.is_none_or(|e| e >= -1e-8),
    })
}

pub fn validate_snapshot(path: impl AsRef<Path>) -> Result<InvariantReport> {
    check_invariants(&read_density(path)?)
}
