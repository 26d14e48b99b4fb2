//! `podrom`: generate Burgers snapshots, extract POD bases, interpolate them,
//! run Galerkin ROMs and sweep the PROM accuracy over its three factors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use podrom::sweep::Axis;
use podrom::Method;

/// Exit code for usage and validation errors.
const EXIT_USAGE: u8 = 2;
/// Exit code for numerical failures (divergence, geodesic domain, ...).
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "podrom", version, about = "Parametric POD-Galerkin ROMs with GMI and MRPWI basis interpolation")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overwrite existing snapshot files.
    #[arg(long, global = true)]
    force: bool,

    /// Seed for generated initial conditions and benchmark bases.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Burgers solver for every Reynolds number of a config.
    Generate {
        /// Flat `key = value` config; defaults to the 17-case catalog.
        config: Option<PathBuf>,
    },
    /// Extract a POD basis from a snapshot file.
    Pod {
        snapshots: PathBuf,
        #[arg(long)]
        rank: usize,
        /// Use the method of snapshots instead of the thin SVD.
        #[arg(long)]
        gram: bool,
        #[arg(long)]
        subtract_mean: bool,
    },
    /// Interpolate POD bases of neighbouring cases to a target parameter.
    Interpolate {
        /// gmi or mrpwi.
        #[arg(long)]
        method: Method,
        /// Manifest of `parameter<TAB>path` lines.
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 2)]
        neighbors: usize,
        #[arg(long)]
        rank: usize,
        /// Restrict candidates to the lattice target +/- (k + 1/2) * delta.
        #[arg(long)]
        delta: Option<f64>,
        /// Allow a case sitting on the target (validation runs).
        #[arg(long)]
        include_exact: bool,
        #[arg(long)]
        extrapolate: bool,
        /// Weighted-orthonormalize MRPWI output.
        #[arg(long)]
        orthonormalize: bool,
    },
    /// Galerkin ROM on a basis file, scored against a truth snapshot file.
    Rom {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Burgers config describing the grid (default: 256 points on 2 pi).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to 1 / (basis parameter).
        #[arg(long)]
        viscosity: Option<f64>,
        /// Number of recorded snapshots to predict (default: all).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run a sweep plan and write its CSV table and chart.
    Sweep { plan: PathBuf },
    /// Re-plot sweep tables or time the interpolation step.
    Report {
        #[command(subcommand)]
        what: Report,
    },
}

#[derive(Debug, Subcommand)]
enum Report {
    /// Render the SVG chart of a sweep CSV and print its RLE table.
    Chart {
        csv: PathBuf,
        /// n_rank, delta_param or n_neighbors.
        #[arg(long, default_value = "n_rank")]
        axis: Axis,
    },
    /// Median single-thread wall time of GMI and MRPWI on a manufactured family.
    Timing {
        #[arg(long, default_value_t = 200_000)]
        n_dof: usize,
        #[arg(long, default_value_t = 13)]
        rank: usize,
        #[arg(long, default_value_t = 4)]
        neighbors: usize,
        #[arg(long, default_value_t = 7)]
        repetitions: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        // only fails if a pool exists already, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE })
        }
    }
}
