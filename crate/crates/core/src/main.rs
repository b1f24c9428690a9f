use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bigjump::report::{run, summary, Origin, RawConfig};
use bigjump::{Error, Result};

#[derive(Parser)]
#[command(name = "bigjump", version, about = "Heavy-tailed sums conditioned on a large value")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// TV decomposition terms over a grid
    TvScan(Flags),
    /// P[S_n in x + Delta] / (n mu(x + Delta)) over a grid
    RatioScan(Flags),
    /// Classify the fluctuation regime and test it by KS
    Fluct(Flags),
    /// Mass ratio on the counterexample windows
    Counterexample(Flags),
    /// Decomposition vs brute-force enumeration on a lattice law
    OracleCheck(Flags),
    /// Product-limit check on the small coordinates
    MarginalsCheck(Flags),
    /// Run the experiment named in a config file
    Run(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// flat key = value file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// distribution spec, e.g. pareto:alpha=3
    #[arg(long)]
    dist: Option<String>,
    /// comma-separated n values
    #[arg(long)]
    n: Option<String>,
    /// comma-separated x values, or multiples of d_n such as 2d,5d,10d
    #[arg(long)]
    x: Option<String>,
    /// interval length: inf, a number, a*b_n or a*psi
    #[arg(long)]
    delta: Option<String>,
    /// conditional draws (fluct, marginals) or proposals (scans)
    #[arg(long)]
    samples: Option<String>,
    /// reference draws for simulated references
    #[arg(long)]
    ref_samples: Option<String>,
    /// root seed; defaults to $BIGJUMP_SEED, then 0
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// exact or mc
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    /// KS threshold used by --check
    #[arg(long)]
    threshold: Option<String>,
    /// exit with status 4 when a check fails
    #[arg(long)]
    check: bool,
    /// ECDF overlay (SVG) for the first fluct point
    #[arg(long)]
    plot: Option<String>,
    /// block indices for the counterexample
    #[arg(long)]
    k: Option<String>,
    /// truncation for unbounded lattice laws in oracle-check
    #[arg(long)]
    kmax: Option<String>,
}

fn build(experiment: Option<&str>, flags: &Flags) -> Result<RawConfig> {
    let mut raw = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RawConfig::parse_file(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                e => e,
            })?
        }
        None => RawConfig::default(),
    };
    if let Some(e) = experiment {
        raw.set("experiment", e, Origin::Cli)?;
    }
    let pairs = [
        ("dist", &flags.dist),
        ("n", &flags.n),
        ("x", &flags.x),
        ("delta", &flags.delta),
        ("samples", &flags.samples),
        ("ref-samples", &flags.ref_samples),
        ("seed", &flags.seed),
        ("workers", &flags.workers),
        ("out", &flags.out),
        ("format", &flags.format),
        ("method", &flags.method),
        ("rho", &flags.rho),
        ("threshold", &flags.threshold),
        ("plot", &flags.plot),
        ("k", &flags.k),
        ("kmax", &flags.kmax),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            raw.set(key, v.clone(), Origin::Cli)?;
        }
    }
    if flags.check {
        raw.set("check", "true", Origin::Cli)?;
    }
    if let Ok(seed) = std::env::var("BIGJUMP_SEED") {
        raw.set_default("seed", seed, Origin::Env)?;
    }
    Ok(raw)
}

fn execute(cli: Cli) -> Result<i32> {
    let (name, flags) = match &cli.command {
        Command::TvScan(f) => (Some("tv-scan"), f),
        Command::RatioScan(f) => (Some("ratio-scan"), f),
        Command::Fluct(f) => (Some("fluct"), f),
        Command::Counterexample(f) => (Some("counterexample"), f),
        Command::OracleCheck(f) => (Some("oracle-check"), f),
        Command::MarginalsCheck(f) => (Some("marginals-check"), f),
        Command::Run(f) => (None, f),
    };
    let cfg = build(name, flags)?.build()?;
    let out = run(&cfg)?;
    if cfg.out.is_none() {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(out.payload.as_bytes())?;
    }
    eprint!("{}", summary(&out));
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
