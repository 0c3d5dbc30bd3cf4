//! `rdt`: ingest raw radar archives into a versioned chunk store, query it,
//! derive products and benchmark against the file-per-scan pipeline.

mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::Config;
pub use report::{BenchResult, Failure, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFLICT: i32 = 3;
pub const EXIT_PATH: i32 = 4;
pub const EXIT_ROLLBACK: i32 = 5;
pub const EXIT_BENCH_INVALID: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "rdt", version, about = "Versioned chunked archive for weather-radar volumes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Repository directory.
    #[arg(long, global = true, env = "RDT_REPO")]
    pub repo: Option<PathBuf>,
    /// Branch to read or write [default: main].
    #[arg(long, global = true)]
    pub branch: Option<String>,
    /// Branch name or snapshot id (or unique prefix) to read from.
    #[arg(long = "ref", global = true)]
    pub reference: Option<String>,
    /// Inclusive lower time bound, RFC 3339.
    #[arg(long, global = true)]
    pub time_start: Option<String>,
    /// Inclusive upper time bound, RFC 3339.
    #[arg(long, global = true)]
    pub time_end: Option<String>,
    /// Output file (a directory for `synth`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// csv, json or bin.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// json or quiet [default: json].
    #[arg(long, global = true)]
    pub report: Option<String>,
    /// Key/value (TOML) file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replace a branch's content with every volume in a directory.
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        write: WriteArgs,
    },
    /// Add volume files to a branch as one transaction.
    Append {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        write: WriteArgs,
    },
    /// List groups and arrays.
    Tree { path: Option<String> },
    /// Read an array (or group attributes) by path.
    Get {
        path: String,
        /// Single time index along the leading time axis.
        #[arg(long)]
        time: Option<u64>,
    },
    /// Quasi-vertical profile.
    Qvp {
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        qvp: QvpArgs,
    },
    /// Rainfall accumulation.
    Qpe {
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        qpe: QpeArgs,
    },
    /// Nearest-gate series at a location.
    Timeseries {
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Snapshot history of a branch.
    Log,
    /// Restore an ancestor snapshot as a new commit.
    Rollback {
        snapshot: String,
        #[arg(long)]
        message: Option<String>,
        #[arg(long)]
        author: Option<String>,
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Time a product through the store and through raw files.
    Bench {
        /// qvp, qpe or timeseries.
        #[arg(long)]
        task: Option<String>,
        /// Raw archive the repository was ingested from.
        #[arg(long)]
        raw_dir: Option<PathBuf>,
        /// Runs per path; the fastest counts [default: 3].
        #[arg(long)]
        repeat: Option<usize>,
        /// Canonical rays per sweep used by the raw path [default: 360].
        #[arg(long)]
        n_rays: Option<usize>,
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        qvp: QvpArgs,
        #[command(flatten)]
        qpe: QpeArgs,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Write a synthetic raw archive into --out.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct WriteArgs {
    /// Time steps per chunk [default: 32].
    #[arg(long)]
    pub chunk_time: Option<u64>,
    /// Rays per chunk [default: whole sweep].
    #[arg(long)]
    pub chunk_azimuth: Option<u64>,
    /// Gates per chunk [default: whole ray].
    #[arg(long)]
    pub chunk_range: Option<u64>,
    /// raw, deflate or deflate:LEVEL [default: deflate:1].
    #[arg(long)]
    pub codec: Option<String>,
    #[arg(long)]
    pub message: Option<String>,
    #[arg(long)]
    pub author: Option<String>,
    /// Commit time, RFC 3339 [default: now].
    #[arg(long)]
    pub timestamp: Option<String>,
    /// Canonical rays per sweep [default: 360].
    #[arg(long)]
    pub n_rays: Option<usize>,
    /// Re-executions allowed when another writer commits first [default: 64].
    #[arg(long)]
    pub max_retries: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    /// Scan-pattern group [default: the only group].
    #[arg(long)]
    pub group: Option<String>,
    /// Sweep index [default: 0].
    #[arg(long)]
    pub sweep: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct QvpArgs {
    /// Moment code [default: DBZH].
    #[arg(long)]
    pub moment: Option<String>,
    /// Minimum valid fraction per profile sample [default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct QpeArgs {
    /// Z-R coefficient a [default: 200].
    #[arg(long)]
    pub zr_a: Option<f64>,
    /// Z-R exponent b [default: 1.6].
    #[arg(long)]
    pub zr_b: Option<f64>,
    /// Longest scan gap integrated across, seconds [default: 900].
    #[arg(long)]
    pub max_gap: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub lat: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (TOML); the flags below override it.
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
    /// VCP-12 or VCP-212.
    #[arg(long)]
    pub vcp: Option<String>,
    #[arg(long)]
    pub n_volumes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_rays: Option<usize>,
    #[arg(long)]
    pub n_gates: Option<usize>,
    /// Number of leading sweeps to keep.
    #[arg(long)]
    pub n_sweeps: Option<usize>,
    /// constant, storm or noise.
    #[arg(long)]
    pub field: Option<String>,
    /// Constant dBZ, storm peak or noise mean.
    #[arg(long, allow_negative_numbers = true)]
    pub value: Option<f32>,
    /// Comma-separated moment codes.
    #[arg(long, value_delimiter = ',')]
    pub moments: Option<Vec<String>>,
    /// First volume time, RFC 3339.
    #[arg(long)]
    pub start_time: Option<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Append { .. } => "append",
            Command::Tree { .. } => "tree",
            Command::Get { .. } => "get",
            Command::Qvp { .. } => "qvp",
            Command::Qpe { .. } => "qpe",
            Command::Timeseries { .. } => "timeseries",
            Command::Log => "log",
            Command::Rollback { .. } => "rollback",
            Command::Bench { .. } => "bench",
            Command::Synth(_) => "synth",
        }
    }
}

/// Run one invocation. `args` includes the program name. Returns the exit
/// status; exactly one run report is written to `stderr` unless reporting is
/// quiet or the invocation only asked for help.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let started = Instant::now();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return EXIT_OK;
            }
            let _ = write!(stderr, "{}", e.render());
            let mut report = RunReport::new("");
            report.finish(started, Err(&Failure::input(e.kind().to_string())));
            let _ = report.emit(stderr);
            return EXIT_INPUT;
        }
    };
    let mut report = RunReport::new(cli.command.name());
    let (quiet, result) = commands::dispatch(&cli, &mut report, stdout);
    if let Err(f) = &result {
        let _ = writeln!(stderr, "error: {}", f.message);
        if let Some(c) = &f.conflicts {
            let _ = writeln!(stderr, "{c}");
        }
    }
    let code = report.finish(started, result.as_ref().map(|_| ()));
    if !quiet {
        let _ = report.emit(stderr);
    }
    code
}
