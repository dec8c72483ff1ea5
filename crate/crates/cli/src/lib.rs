//! Command-line driver: `simulate`, `mdl`, `pidemo` and `kmap`.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! run fails or its output cannot be written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use avnmp::anet::{self, Topology};
use avnmp::engine::{run as run_scenario, RunError, Scenario};
use avnmp::kmap::{self, SurfaceMode};
use avnmp::mdl;
use avnmp::metrics;
use avnmp::series;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Event log written by `simulate`.
pub const EVENT_LOG: &str = "events.jsonl";
/// Files written by `kmap`.
pub const KMAP_FILES: [&str; 4] = ["min_paths.csv", "flows.csv", "levels.csv", "surface.csv"];
pub const DEFAULT_GRID: [u16; 6] = [1, 2, 4, 8, 16, 32];

#[derive(Debug, Parser)]
#[command(
    name = "avnmp",
    version,
    about = "Prediction engine and complexity analyses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario; write the event log and one CSV per metric.
    Simulate(SimulateArgs),
    /// Score hypothesis windows on a `time_s,value` trace.
    Mdl(MdlArgs),
    /// Compare code and data packets for 22/7 on a four-link chain.
    Pidemo(PidemoArgs),
    /// Path costs, insecurity flows and a surface for a component graph.
    Kmap(KmapArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Replaces `seed.value`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scenario override, e.g. `--set window.lookahead=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct MdlArgs {
    pub trace: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    pub grid: Vec<u16>,
    /// Also write the table to `<out>/mdl.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PidemoArgs {
    /// Significant digits in the decimal answer.
    #[arg(long, default_value_t = anet::PI_PRECISION)]
    pub precision: usize,
    /// Link capacity override in bytes/s, e.g. `--capacity 2=500`.
    #[arg(long, value_name = "ID=BPS", value_parser = parse_capacity)]
    pub capacity: Vec<(u32, f64)>,
    /// Also write the table to `<out>/pidemo.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Path,
    Flow,
}

#[derive(Debug, Args)]
pub struct KmapArgs {
    pub graph: PathBuf,
    /// Surface height: cheapest path cost from START, or negated insecurity level.
    #[arg(long, value_enum, default_value_t = Mode::Path)]
    pub mode: Mode,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn parse_capacity(s: &str) -> Result<(u32, f64), String> {
    let (id, bps) = s
        .split_once('=')
        .ok_or_else(|| format!("{s:?}: expected ID=BPS"))?;
    let id = id
        .trim()
        .parse()
        .map_err(|e| format!("link id {id:?}: {e}"))?;
    let bps = bps
        .trim()
        .parse()
        .map_err(|e| format!("capacity {bps:?}: {e}"))?;
    Ok((id, bps))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

/// Parse `args` (program name first), run the command and return the exit
/// code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Mdl(a) => cmd_mdl(a, out),
        Command::Pidemo(a) => cmd_pidemo(a, out),
        Command::Kmap(a) => cmd_kmap(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut overrides = a.overrides.clone();
    if let Some(seed) = a.seed {
        overrides.push(format!("seed.value={seed}"));
    }
    let scenario = Scenario::from_path(&a.scenario, &overrides).map_err(CliError::config)?;
    let trace = run_scenario(&scenario).map_err(|e| match e {
        RunError::Scenario(e) => CliError::config(e),
        RunError::Engine(e) => CliError::runtime(e),
    })?;
    let series = metrics::derive_metrics(&trace).map_err(CliError::runtime)?;

    create_dir(&a.out)?;
    let log_path = a.out.join(EVENT_LOG);
    let mut log = create_file(&log_path)?;
    trace
        .write_jsonl(&mut log)
        .and_then(|_| log.flush())
        .map_err(|e| CliError::runtime(format!("{}: {e}", log_path.display())))?;
    let written = metrics::write_all_csv(&a.out, &series).map_err(CliError::runtime)?;

    let c = &trace.counters;
    writeln!(
        out,
        "{} s simulated: {} messages, {} anti-messages, {} rollbacks, {} events processed",
        scenario.engine.duration,
        c.virtual_messages,
        c.anti_messages,
        c.rollbacks,
        c.events_processed
    )
    .map_err(CliError::runtime)?;
    writeln!(
        out,
        "wrote {} and {} metric files to {}",
        EVENT_LOG,
        written.len(),
        a.out.display()
    )
    .map_err(CliError::runtime)?;
    Ok(())
}

/// Write the table to `w`: `w,sum_abs_error,description_length_bits,selected`.
fn write_mdl_table(
    w: &mut dyn Write,
    scores: &[mdl::HypothesisScore],
    selected: u16,
) -> std::io::Result<()> {
    writeln!(w, "w,sum_abs_error,description_length_bits,selected")?;
    for s in scores {
        let mark = if s.hypothesis.window() == selected {
            "*"
        } else {
            ""
        };
        writeln!(
            w,
            "{},{},{},{}",
            s.hypothesis.window(),
            s.sum_abs_error,
            s.description_length,
            mark
        )?;
    }
    Ok(())
}

pub fn cmd_mdl(a: &MdlArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let data = series::read_csv_path(&a.trace)
        .map_err(|e| CliError::config(format!("{}: {e}", a.trace.display())))?;
    if data.is_empty() {
        return Err(CliError::config(format!(
            "{}: empty trace",
            a.trace.display()
        )));
    }
    let step = match data.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => 1.0,
    };
    let scores = mdl::score_grid(&a.grid, step, &data).map_err(CliError::config)?;
    let (best, _) = mdl::select_hypothesis(&a.grid, step, &data).map_err(CliError::config)?;
    write_mdl_table(out, &scores, best.window()).map_err(CliError::runtime)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join("mdl.csv");
        let mut f = create_file(&path)?;
        write_mdl_table(&mut f, &scores, best.window())
            .and_then(|_| f.flush())
            .map_err(CliError::runtime)?;
    }
    Ok(())
}

fn write_pidemo_table(w: &mut dyn Write, demo: &anet::PiDemo) -> std::io::Result<()> {
    writeln!(
        w,
        "link_id,algorithmic_bytes,algorithmic_transit_s,static_bytes,static_transit_s"
    )?;
    let (alg, stat) = (&demo.report.per_packet[0], &demo.report.per_packet[1]);
    for id in demo.report.links.keys() {
        let a = alg.get(id).copied().unwrap_or_default();
        let s = stat.get(id).copied().unwrap_or_default();
        writeln!(
            w,
            "{id},{},{},{},{}",
            a.load_bytes, a.transit_s, s.load_bytes, s.transit_s
        )?;
    }
    Ok(())
}

pub fn cmd_pidemo(a: &PidemoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.precision == 0 {
        return Err(CliError::config("--precision must be at least 1"));
    }
    let mut topo = Topology::chain(&anet::PI_CAPACITIES, anet::PI_PROCESSING_RATE)
        .map_err(CliError::config)?;
    for &(id, bps) in &a.capacity {
        topo.set_capacity(id, bps).map_err(CliError::config)?;
    }
    let demo = anet::pi_demo(&topo, a.precision).map_err(CliError::runtime)?;
    write_pidemo_table(out, &demo).map_err(CliError::runtime)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join("pidemo.csv");
        let mut f = create_file(&path)?;
        write_pidemo_table(&mut f, &demo)
            .and_then(|_| f.flush())
            .map_err(CliError::runtime)?;
    }
    Ok(())
}

pub fn cmd_kmap(a: &KmapArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let g = kmap::load_graph(&a.graph).map_err(CliError::config)?;
    for w in g.warnings() {
        writeln!(out, "warning: {w}").map_err(CliError::runtime)?;
    }
    let mode = match a.mode {
        Mode::Path => SurfaceMode::PathHeight,
        Mode::Flow => SurfaceMode::FlowLevel,
    };
    let paths = kmap::min_complexity_paths(&g);
    let pairs = kmap::pair_flows(&g);
    let levels = kmap::levels_from_pairs(g.len(), &pairs);
    let surface = kmap::export_surface(&g, mode);

    create_dir(&a.out)?;
    let [paths_f, flows_f, levels_f, surface_f] = KMAP_FILES.map(|f| a.out.join(f));
    kmap::write_matrix_csv(&g, &paths, create_file(&paths_f)?).map_err(CliError::runtime)?;
    kmap::write_flows_csv(&g, &pairs, create_file(&flows_f)?).map_err(CliError::runtime)?;
    kmap::write_levels_csv(&g, &levels, create_file(&levels_f)?).map_err(CliError::runtime)?;
    kmap::write_surface_csv(&surface, create_file(&surface_f)?).map_err(CliError::runtime)?;
    writeln!(
        out,
        "{} nodes, {} edges; wrote {} files to {}",
        g.len(),
        g.edges().len(),
        KMAP_FILES.len(),
        a.out.display()
    )
    .map_err(CliError::runtime)?;
    Ok(())
}
