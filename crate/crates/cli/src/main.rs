use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semirad::scenario::{
    compare, run, Certificate, RunOptions, RunOutput, Scenario, ScenarioError, Stages,
};

const EXIT_PHYSICS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "semirad",
    version,
    about = "Far-field radiation of quantum probability currents"
)]
struct Cli {
    /// Worker threads (defaults to SEMIRAD_THREADS, then the core count).
    #[arg(long, global = true, env = "SEMIRAD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for certificate.json and the CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_order: Option<usize>,
    /// Force the retarded-field oracle on or off.
    #[arg(long, value_enum)]
    oracle: Option<Toggle>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the scenario and check band limits.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Sample the current and write the moment history.
    Moments(RunArgs),
    /// Moment certification plus conservation checks.
    Certify(RunArgs),
    /// Certification plus far-field power.
    Radiate(RunArgs),
    /// Retarded-field oracle flux scan.
    Oracle(RunArgs),
    /// Spectral analysis of the moment or density series.
    Spectrum(RunArgs),
    /// Every stage.
    Run(RunArgs),
    /// Field-wise comparison of two certificates.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn exit_for(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Numerical { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn load(path: &Path) -> Result<Scenario, u8> {
    Scenario::load(path).map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })
}

fn execute(args: &RunArgs, stages: Stages) -> Result<RunOutput, u8> {
    let scenario = load(&args.scenario)?;
    let opts = RunOptions {
        stages,
        max_order: args.max_order,
        oracle: args.oracle.map(|t| matches!(t, Toggle::On)),
    };
    let out = run(&scenario, &opts).map_err(|e| {
        eprintln!("error: {e}");
        exit_for(&e)
    })?;
    if let Some(dir) = &args.out {
        out.write(dir).map_err(|e| {
            eprintln!("error: {e}");
            exit_for(&e)
        })?;
    }
    for c in &out.certificate.checks {
        println!(
            "{:<4} {:<28} {:<12.4e} {}",
            if c.pass { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.rule
        );
    }
    println!(
        "{}: {}",
        out.certificate.scenario,
        if out.certificate.pass { "pass" } else { "fail" }
    );
    Ok(out)
}

fn verdict(out: RunOutput) -> u8 {
    if out.certificate.pass {
        0
    } else {
        EXIT_PHYSICS
    }
}

fn read_certificate(path: &Path) -> Result<Certificate, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    Certificate::from_json(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_CONFIG
    })
}

fn dispatch(cli: Cli) -> Result<u8, u8> {
    let stages = |certify, conservation, radiate, spectrum, oracle| Stages {
        certify,
        conservation,
        radiate,
        spectrum,
        oracle,
    };
    match cli.command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            let reports = s.band_limit_reports().map_err(|e| {
                eprintln!("error: {e}");
                exit_for(&e)
            })?;
            let mut ok = true;
            for (i, r) in reports.iter().enumerate() {
                println!(
                    "band limit [{i}]: {} (worst margin {:.4e} at component {}, v_max {:.4})",
                    if r.pass { "ok" } else { "FAIL" },
                    r.worst_margin,
                    r.worst_component,
                    r.v_max
                );
                ok &= r.pass;
            }
            println!("{}: {}", s.id, if ok { "valid" } else { "rejected" });
            Ok(if ok { 0 } else { EXIT_NUMERICAL })
        }
        Command::Moments(a) => execute(&a, Stages::none()).map(|_| 0),
        Command::Certify(a) => execute(&a, stages(true, true, false, false, false)).map(verdict),
        Command::Radiate(a) => execute(&a, stages(true, false, true, false, false)).map(verdict),
        Command::Oracle(a) => execute(&a, stages(false, false, false, false, true)).map(verdict),
        Command::Spectrum(a) => execute(&a, stages(false, false, false, true, false)).map(verdict),
        Command::Run(a) => execute(&a, Stages::all()).map(verdict),
        Command::Compare { a, b, tol } => {
            let (ca, cb) = (read_certificate(&a)?, read_certificate(&b)?);
            let diffs = compare(&ca, &cb, tol).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_CONFIG
            })?;
            for d in &diffs {
                println!(
                    "{}: {:?} vs {:?} (relative {:.3e})",
                    d.path, d.a, d.b, d.relative
                );
            }
            println!("{} field(s) differ beyond {tol:e}", diffs.len());
            Ok(if diffs.is_empty() { 0 } else { EXIT_PHYSICS })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: {e}");
        }
    }
    ExitCode::from(dispatch(cli).unwrap_or_else(|code| code))
}
