//! Run configuration, GRWD snapshot files, CSV emission and the run driver
//! behind the command-line tool.

pub mod config;
pub mod plot;
pub mod run;
pub mod snapshot;

pub use config::{parse_config, parse_raw, RawConfig, RunConfig, Solver};
pub use plot::{emit_plot_data, render_plot_data, PlotData};
pub use run::{check_invariants, classical_limit, compare, run, solve, validate_snapshot};
pub use snapshot::{decode_density, encode_density, read_density, write_density, FieldFileHeader};
