//! Command-line front end. Configuration comes from an optional `key = value`
//! file, overridden by flags of the same names, with `MACSIM_SEED` taking
//! final precedence over the seed. CSV goes to standard output (or `output`);
//! run metadata goes to standard error so pipelines stay clean.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime fault, 3 self-check
//! violation.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use macsim::configfile::{parse_config, ExperimentConfig};
use macsim::experiment::{csv_document, run_experiment, sweep_figures};
use macsim::rng::PRNG_NAME;
use macsim::sim::{run, ProtocolKind, RunOptions, SimFault};

const EXIT_CONFIG: i32 = 1;
const EXIT_RUNTIME: i32 = 2;
const EXIT_SELF_CHECK: i32 = 3;

#[derive(Parser)]
#[command(
    name = "macsim",
    version,
    about = "Discrete-event comparison of two priority-aware MAC protocols"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one experiment and emit its CSV summary.
    Run(CommonArgs),
    /// Execute the full benchmark sweep and write fig4a/4b/5a/5b CSV files.
    Figures(CommonArgs),
    /// Execute a single replication and dump its event trace.
    Trace(TraceArgs),
    /// Check a configuration and report the effective settings.
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol to simulate: bop or frog.
    #[arg(long)]
    protocol: Option<String>,
    /// Stations including the sink (minimum 2).
    #[arg(long = "node_count")]
    node_count: Option<u32>,
    /// Payload bytes per fragment (fragmenting protocol only).
    #[arg(long = "fragment_payload")]
    fragment_payload: Option<u32>,
    /// Simulated seconds per replication.
    #[arg(long = "duration_s")]
    duration_s: Option<u64>,
    /// Leading seconds excluded from every measurement.
    #[arg(long = "warmup_s")]
    warmup_s: Option<u64>,
    /// Independent runs aggregated into each row.
    #[arg(long)]
    replications: Option<u32>,
    /// Base seed; replication r runs under seed + r.
    #[arg(long = "master_seed")]
    master_seed: Option<u64>,
    /// Mean urgent interarrival in milliseconds; 0 disables the class.
    #[arg(long = "urgent_mean_ms")]
    urgent_mean_ms: Option<u64>,
    /// Normal packet period in milliseconds; 0 disables the class.
    #[arg(long = "normal_period_ms")]
    normal_period_ms: Option<u64>,
    /// Output path: a file for `run`, a directory for `figures`.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Maximum number of trace lines to emit.
    #[arg(long, default_value_t = 100_000)]
    limit: u64,
}

/// File settings, then flag overrides, then the seed environment override.
fn effective_config(args: &CommonArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.protocol {
        cfg.protocol = ProtocolKind::parse(p)
            .ok_or_else(|| format!("unknown protocol `{p}` (expected bop or frog)"))?;
    }
    if let Some(v) = args.node_count {
        cfg.node_count = v;
    }
    if let Some(v) = args.fragment_payload {
        cfg.fragment_payload = v;
    }
    if let Some(v) = args.duration_s {
        cfg.duration_s = v;
    }
    if let Some(v) = args.warmup_s {
        cfg.warmup_s = v;
    }
    if let Some(v) = args.replications {
        cfg.replications = v;
    }
    if let Some(v) = args.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = args.urgent_mean_ms {
        cfg.urgent_mean_ms = v;
    }
    if let Some(v) = args.normal_period_ms {
        cfg.normal_period_ms = v;
    }
    if let Some(v) = &args.output {
        cfg.output = Some(v.clone());
    }
    match std::env::var("MACSIM_SEED") {
        Ok(s) => {
            cfg.master_seed = s
                .trim()
                .parse()
                .map_err(|_| format!("MACSIM_SEED must be an unsigned integer, got `{s}`"))?;
        }
        Err(std::env::VarError::NotPresent) => {}
        Err(e) => return Err(format!("MACSIM_SEED: {e}")),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn settings_line(cfg: &ExperimentConfig) -> String {
    format!(
        "protocol={} node_count={} fragment_payload={} duration_s={} warmup_s={} \
         replications={} master_seed={} urgent_mean_ms={} normal_period_ms={}",
        cfg.protocol,
        cfg.node_count,
        cfg.fragment_payload,
        cfg.duration_s,
        cfg.warmup_s,
        cfg.replications,
        cfg.master_seed,
        cfg.urgent_mean_ms,
        cfg.normal_period_ms,
    )
}

fn print_metadata(cfg: &ExperimentConfig) {
    // ack_turnaround_ns states the fixed modeling assumption that replies go
    // on air immediately after the frame they answer.
    eprintln!(
        "# macsim {} prng={PRNG_NAME} ack_turnaround_ns=0",
        settings_line(cfg)
    );
}

fn config_error(message: &str) -> i32 {
    eprintln!("macsim: configuration error: {message}");
    EXIT_CONFIG
}

fn fault_exit(fault: &SimFault) -> i32 {
    eprintln!("macsim: {fault}");
    match fault {
        SimFault::Internal(_) => EXIT_RUNTIME,
        SimFault::SelfCheck(_) => EXIT_SELF_CHECK,
    }
}

fn cmd_run(args: &CommonArgs) -> i32 {
    let cfg = match effective_config(args) {
        Ok(c) => c,
        Err(m) => return config_error(&m),
    };
    print_metadata(&cfg);
    let rows = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(f) => return fault_exit(&f),
    };
    let csv = csv_document(&rows);
    match &cfg.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &csv) {
                eprintln!("macsim: writing {path}: {e}");
                return EXIT_RUNTIME;
            }
            eprintln!("# wrote {path}");
        }
        None => print!("{csv}"),
    }
    0
}

fn cmd_figures(args: &CommonArgs) -> i32 {
    let cfg = match effective_config(args) {
        Ok(c) => c,
        Err(m) => return config_error(&m),
    };
    print_metadata(&cfg);
    let figs = match sweep_figures(&cfg) {
        Ok(f) => f,
        Err(f) => return fault_exit(&f),
    };
    let dir = PathBuf::from(cfg.output.as_deref().unwrap_or("."));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("macsim: creating {}: {e}", dir.display());
        return EXIT_RUNTIME;
    }
    for (name, text) in figs.files() {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, text) {
            eprintln!("macsim: writing {}: {e}", path.display());
            return EXIT_RUNTIME;
        }
        eprintln!("# wrote {}", path.display());
    }
    0
}

fn cmd_trace(args: &TraceArgs) -> i32 {
    let cfg = match effective_config(&args.common) {
        Ok(c) => c,
        Err(m) => return config_error(&m),
    };
    print_metadata(&cfg);
    let sim = cfg.sim_config(cfg.rep_seed(0));
    let opts = RunOptions {
        trace_limit: Some(args.limit),
        ..RunOptions::default()
    };
    let out = match run(&sim, &opts) {
        Ok(o) => o,
        Err(f) => return fault_exit(&f),
    };
    let mut stdout = std::io::stdout().lock();
    for l in &out.trace {
        if writeln!(stdout, "{},{},{},{}", l.time_ns, l.seq, l.target, l.action).is_err() {
            return EXIT_RUNTIME;
        }
    }
    eprintln!(
        "# events_dispatched={} trace_lines={}",
        out.events_dispatched,
        out.trace.len()
    );
    0
}

fn cmd_validate(args: &CommonArgs) -> i32 {
    match effective_config(args) {
        Ok(cfg) => {
            println!("ok: {}", settings_line(&cfg));
            0
        }
        Err(m) => config_error(&m),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version are successes; usage mistakes are config errors.
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match &cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Figures(a) => cmd_figures(a),
        Cmd::Trace(a) => cmd_trace(a),
        Cmd::Validate(a) => cmd_validate(a),
    };
    std::process::exit(code);
}
