// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! The `dataclock` command line.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::metrics::Metrics;
use crate::sim::{self, read_trace, write_trace, Scenario, SimError};
use crate::verify::{verify_metrics, verify_trace, VerifyError};

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "dataclock", version, about = "Simulate and audit a hierarchical data clock")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its trace and metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the scenario's duration, in ticks.
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        /// Also write the namespace index dump.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Audit a trace; exits 1 on the first violated invariant.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// Also check a metrics file against the trace.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Measure root-slot thickness under saturation.
    Resolution {
        /// Group sizes, bottom level first, e.g. `10,3`.
        #[arg(value_parser = parse_groups)]
        topologies: Vec<Vec<u32>>,
        #[arg(long, default_value_t = 1000)]
        duration: u64,
    },
}

fn parse_groups(s: &str) -> Result<Vec<u32>, String> {
    s.trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(|g| g.trim().parse::<u32>().map_err(|e| format!("bad group size {g:?}: {e}")))
        .collect()
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let code = execute(cli.command, &mut stdout.lock(), &mut stderr.lock());
    ExitCode::from(code)
}

/// Runs one command; returns its exit status.
pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match command {
        Command::Run { scenario, seed, duration, trace, metrics, index } => {
            cmd_run(&scenario, seed, duration, &trace, &metrics, index.as_deref(), out)
        }
        Command::Verify { trace, metrics } => cmd_verify(&trace, metrics.as_deref(), out),
        Command::Resolution { topologies, duration } => cmd_resolution(&topologies, duration, out),
    };
    match result {
        Ok(()) => 0,
        Err((code, message)) => {
            let _ = writeln!(err, "{message}");
            code
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn usage(e: impl std::fmt::Display) -> (u8, String) {
    (EXIT_USAGE, format!("error: {e}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, (u8, String)> {
    File::create(path).map(BufWriter::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_run(
    scenario: &Path,
    seed: Option<u64>,
    duration: Option<u64>,
    trace_path: &Path,
    metrics_path: &Path,
    index_path: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let text = std::fs::read_to_string(scenario).map_err(|e| usage(format!("{}: {e}", scenario.display())))?;
    let mut scenario = Scenario::from_toml(&text).map_err(usage)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(duration) = duration {
        scenario.duration = i64::try_from(duration).map_err(|_| usage("--duration is out of range"))?;
    }
    let output = sim::run(&scenario).map_err(|e| match e {
        SimError::Config(c) => usage(c),
        other => (EXIT_VIOLATION, format!("error: {other}")),
    })?;
    let io_err = |e: io::Error| usage(e);
    let mut w = create(trace_path)?;
    write_trace(&output.trace, &mut w).map_err(io_err)?;
    let mut w = create(metrics_path)?;
    output.metrics.write_json(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    if let Some(path) = index_path {
        let mut w = create(path)?;
        output.index.dump(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    let m = &output.metrics;
    let _ = writeln!(
        out,
        "{} events, {} publications through t_R={}; accepted {}, rejected {}, refused {}, aborted {}",
        output.trace.len(),
        m.publish_count,
        m.final_root_tick,
        m.accepted,
        m.rejected,
        m.refused,
        m.aborted
    );
    if let Some(r) = &m.resolution {
        let _ = writeln!(
            out,
            "resolution: {:.2} handler ticks per root tick (max {}, predicted {}), {:.2} ms at 1 ms per tick",
            r.mean, r.max, r.predicted, r.mean
        );
    }
    Ok(())
}

fn cmd_verify(trace_path: &Path, metrics_path: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let file = File::open(trace_path).map_err(|e| usage(format!("{}: {e}", trace_path.display())))?;
    let trace = read_trace(BufReader::new(file)).map_err(usage)?;
    let fail = |e: VerifyError| match e {
        VerifyError::Malformed(m) => usage(m),
        VerifyError::Violation(v) => (EXIT_VIOLATION, format!("FAIL: {v}")),
    };
    let report = verify_trace(&trace).map_err(fail)?;
    if let Some(path) = metrics_path {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let metrics: Metrics = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        verify_metrics(&trace, &metrics).map_err(fail)?;
    }
    let _ = writeln!(
        out,
        "ok: {} events, {} publications, {} records through t_R={}",
        report.events, report.publishes, report.records, report.final_root_tick
    );
    Ok(())
}

fn cmd_resolution(topologies: &[Vec<u32>], duration: u64, out: &mut dyn Write) -> CmdResult {
    let defaults = [vec![1], vec![2], vec![4, 2], vec![10, 3], vec![3, 3, 3]];
    let topologies = if topologies.is_empty() { &defaults[..] } else { topologies };
    let _ = writeln!(out, "{:<12} {:>9} {:>9} {:>5} {:>8}", "topology", "predicted", "measured", "max", "samples");
    for groups in topologies {
        let label = format!("({})", groups.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
        let r = sim::resolution(groups, duration).map_err(|e| match e {
            SimError::Config(c) => usage(c),
            other => (EXIT_VIOLATION, format!("error: {other}")),
        })?;
        match r {
            Some(r) => {
                let _ = writeln!(out, "{label:<12} {:>9} {:>9.2} {:>5} {:>8}", r.predicted, r.mean, r.max, r.samples);
            }
            None => {
                let predicted: u64 = groups.iter().map(|&g| g as u64).product();
                let _ = writeln!(out, "{label:<12} {predicted:>9} {:>9} {:>5} {:>8}", "n/a", "-", 0);
            }
        }
    }
    Ok(())
}
