use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grw_core::io::plot::{emit_plot_data, PlotData};
use grw_core::io::{self, RawConfig, RunConfig, Solver};
use grw_core::scenarios::PRESET_NAMES;
use grw_core::Error;

#[derive(Parser)]
#[command(name = "grw", version, about = "GRW spontaneous-localisation density-matrix solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a density matrix with a deterministic solver.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// master, superop, pathint or unravel
        #[arg(long)]
        solver: Option<Solver>,
    },
    /// Average seeded jump trajectories.
    Unravel {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Run one scenario with two solvers and print the max-abs and trace-distance gaps.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "master")]
        solver: Solver,
        #[arg(long = "with")]
        other: Solver,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// GRW evolution against the Liouville flow of the decohered initial state.
    ClassicalLimit {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check trace, Hermiticity and positivity of snapshot files.
    Validate {
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
    },
    /// List scenario presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Scenario preset (overrides the file's `scenario`)
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (default: $GRW_OUTPUT_DIR, then ./grw-out)
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn raw(&self) -> grw_core::Result<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                io::parse_raw(&text)?
            }
            None => RawConfig::default(),
        };
        if self.preset.is_some() {
            raw.scenario = self.preset.clone();
        }
        if self.output_dir.is_some() {
            raw.output_dir = self.output_dir.clone();
        }
        let num = &mut raw.numerics;
        num.t_final = self.t_final.or(num.t_final);
        num.dt = self.dt.or(num.dt);
        num.n_steps = self.n_steps.or(num.n_steps);
        num.snapshot_every = self.snapshot_every.or(num.snapshot_every);
        num.threads = self.threads.or(num.threads);
        raw.physics.lambda = self.lambda.or(raw.physics.lambda);
        Ok(raw)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "configuration" | "lookup" | "dimension" => 2,
        "format" => 3,
        "io" => 4,
        "domain" | "fidelity" => 5,
        "validation" => 6,
        _ => 1,
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn resolve(mut raw: RawConfig, solver: Option<Solver>) -> grw_core::Result<RunConfig> {
    if solver.is_some() {
        raw.solver = solver;
    }
    raw.resolve()
}

fn execute(cli: Cli) -> grw_core::Result<bool> {
    match cli.command {
        Command::Evolve { run, solver } => {
            let cfg = resolve(run.raw()?, solver)?;
            let s = io::run(&cfg)?;
            println!(
                "{} run of `{}` finished: {} snapshots in {} ({:.2} s)",
                cfg.solver.name(),
                cfg.scenario.name,
                s.snapshots.len(),
                cfg.output_dir.display(),
                s.manifest.wall_time_s
            );
        }
        Command::Unravel { run, seed, trajectories } => {
            let mut raw = run.raw()?;
            raw.seed = seed.or(raw.seed);
            raw.numerics.trajectories = trajectories.or(raw.numerics.trajectories);
            let cfg = resolve(raw, Some(Solver::Unravel))?;
            let s = io::run(&cfg)?;
            println!(
                "{} trajectories of `{}` (seed {}) averaged, {} jumps: output in {} ({:.2} s)",
                cfg.trajectories,
                cfg.scenario.name,
                cfg.seed.unwrap_or_default(),
                s.manifest.total_jumps.unwrap_or_default(),
                cfg.output_dir.display(),
                s.manifest.wall_time_s
            );
        }
        Command::Compare { run, solver, other, seed } => {
            let mut raw = run.raw()?;
            raw.seed = seed.or(raw.seed);
            // validate against both solvers' constraints
            resolve(raw.clone(), Some(other))?;
            let cfg = resolve(raw, Some(solver))?;
            print_json(&io::compare(&cfg, solver, other)?);
        }
        Command::ClassicalLimit { run } => {
            let cfg = resolve(run.raw()?, Some(Solver::Master))?;
            let rep = io::classical_limit(&cfg)?;
            let dir = &cfg.output_dir;
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let params = [
                ("scenario", cfg.scenario.name.clone()),
                ("lambda", cfg.scenario.params.lambda.to_string()),
                ("t_final", cfg.scenario.t_final.to_string()),
            ];
            let (g, l) = (dir.join("phase_grw.csv"), dir.join("phase_liouville.csv"));
            emit_plot_data(PlotData::Phase(&rep.grw), &params, &g)?;
            emit_plot_data(PlotData::Phase(&rep.liouville), &params, &l)?;
            print_json(&serde_json::json!({
                "scenario": cfg.scenario.name,
                "relative_l1": rep.l1_gap,
                "grw": g,
                "liouville": l,
            }));
        }
        Command::Validate { snapshots } => {
            let mut all = true;
            for path in snapshots {
                let rep = io::validate_snapshot(&path)?;
                all &= rep.passed;
                print_json(&serde_json::json!({ "file": path, "report": rep }));
            }
            return Ok(all);
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(6),
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
