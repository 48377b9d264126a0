use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coverify_core::config::ProofConfig;
use coverify_core::locallemma::{check_weights, density_lower_bound, newton_fixed_point};
use coverify_core::oracle::{covers, max_bias, parse_system, uncovered_density, CongruenceSystem};
use coverify_core::primes::{stats_for_primes, window_claims, PrimeWindow};
use coverify_core::report::{build_report, ProofReport, Verdict};
use coverify_core::shearer::{primes_from_five, verify_chain, ChainVerdict};
use coverify_core::{Error, Interval};

#[derive(Parser)]
#[command(
    name = "coverify",
    version,
    about = "Certificates for covering systems avoiding 2 and 3"
)]
struct Cli {
    /// TOML file overriding the bundled constants.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and emit a JSON proof report.
    Prove {
        /// Write the report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check the Shearer chain over primes 5..=pmax.
    Stage1Shearer {
        #[arg(long, default_value_t = 221)]
        pmax: u64,
    },
    /// Sieve a prime window and check its explicit estimates.
    Primes {
        /// Window index; defaults to the windows in the config.
        #[arg(long)]
        window: Vec<u32>,
    },
    /// Local Lemma fixed point for the congruences in a system file.
    Lll {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long = "m", visible_alias = "M", default_value = "2.949873427")]
        m: String,
    },
    /// Exact computations on a system file.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
    /// Re-check a saved proof report.
    Report { input: PathBuf },
    /// Print the effective configuration.
    Config,
}

#[derive(Subcommand)]
enum OracleAction {
    Check {
        system: PathBuf,
        /// Print the exact uncovered density.
        #[arg(long)]
        density: bool,
        /// Print the exact maximal bias for this modulus.
        #[arg(long)]
        bias: Option<u64>,
    },
}

/// Failure worth exit code 1, as opposed to a usage or input problem.
enum Outcome {
    Failed(String),
    Usage(String),
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        match e {
            Error::Verification { .. }
            | Error::Precondition(_)
            | Error::Divergence(_)
            | Error::TailDivergence(_)
            | Error::EmptyFiber(_) => Outcome::Failed(e.to_string()),
            _ => Outcome::Usage(e.to_string()),
        }
    }
}

type Run = Result<(), Outcome>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Outcome::Failed(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Outcome::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ProofConfig, Error> {
    match path {
        Some(p) => ProofConfig::load(p),
        None => Ok(ProofConfig::default()),
    }
}

fn read_system(path: &Path) -> Result<CongruenceSystem, Error> {
    parse_system(&fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Run {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Prove { output } => prove(&cfg, output.as_deref()),
        Command::Stage1Shearer { pmax } => shearer(pmax),
        Command::Primes { window } => primes(if window.is_empty() { &cfg.windows } else { &window }),
        Command::Lll { instance, m } => lll(&instance, &m),
        Command::Oracle {
            action: OracleAction::Check { system, density, bias },
        } => oracle_check(&system, density, bias),
        Command::Report { input } => recheck(&input),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn summarize(report: &ProofReport) -> Run {
    let failures = report.failures();
    if failures.is_empty() {
        eprintln!("verdict: proved");
        return Ok(());
    }
    for (section, c) in &failures {
        eprintln!(
            "FAIL [{section}] {}: computed {} against {}",
            c.label, c.computed, c.bound
        );
    }
    Err(Outcome::Failed(format!(
        "verdict: not proved ({} failing inequalities)",
        failures.len()
    )))
}

fn prove(cfg: &ProofConfig, output: Option<&Path>) -> Run {
    let report = build_report(cfg)?;
    let json = report.to_json();
    match output {
        Some(path) => fs::write(path, json + "\n").map_err(Error::from)?,
        None => println!("{json}"),
    }
    summarize(&report)
}

fn shearer(pmax: u64) -> Run {
    let primes = primes_from_five(pmax)?;
    let cert = verify_chain(&primes)?;
    match &cert.verdict {
        ChainVerdict::Holds => {
            let rho = cert.rho_final().unwrap_or(Interval::ZERO);
            println!("chain holds for {} primes 5..={pmax}; rho in {rho}", primes.len());
            Ok(())
        }
        ChainVerdict::Fails { prime, reason, .. } => {
            println!("chain fails at {prime}");
            Err(Outcome::Failed(format!("chain fails at {prime}: {reason}")))
        }
    }
}

fn primes(windows: &[u32]) -> Run {
    let mut failed = Vec::new();
    for &i in windows {
        let w = PrimeWindow::new(i)?;
        let stats = stats_for_primes(&w.primes, w.lo, w.hi)?;
        println!("window {i}: [{}, {}), {} primes", w.lo, w.hi, stats.count);
        println!("  prod p/(p-1)   {}", stats.prod_p_over_pm1);
        println!("  sum 1/(p-1)^2  {}", stats.sum_inv_sq);
        println!("  sum 1/(p-1)^3  {}", stats.sum_inv_cube);
        println!("  sum tau_2      {}", stats.sum_tau2);
        println!("  sum tau_3      {}", stats.sum_tau3);
        if i >= 2 {
            for c in window_claims(&stats, i)? {
                println!(
                    "  {} {}: {} < {}",
                    if c.ok { "ok  " } else { "FAIL" },
                    c.label,
                    c.computed.hi(),
                    c.bound.lo()
                );
                if !c.ok {
                    failed.push(format!("window {i}: {}", c.label));
                }
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Outcome::Failed(format!("failed: {}", failed.join("; "))))
    }
}

fn lll(path: &Path, m: &str) -> Run {
    let m = Interval::from_decimal(m)?;
    let inst = read_system(path)?.to_instance()?;
    let cert = newton_fixed_point(&inst, &m)?;
    let hi = |v: &[Interval]| v.iter().map(|x| x.hi()).collect::<Vec<_>>();
    let lo = |v: &[Interval]| v.iter().map(|x| x.lo()).collect::<Vec<_>>();
    // the supersolution end of the enclosure is the certified weight vector
    let weights: Vec<Interval> = cert.fixed_point.iter().map(|x| Interval::point(x.hi())).collect();
    let weights_ok = check_weights(&inst, &weights);
    let density = if weights_ok {
        Some(density_lower_bound(&inst, &weights)?.lo())
    } else {
        None
    };
    let out = serde_json::json!({
        "primes": inst.primes(),
        "m": m,
        "b_inf": cert.b_inf,
        "b_20": cert.b_20,
        "b_op": cert.b_op,
        "theta": cert.theta,
        "eps_norm": cert.eps_norm,
        "condition_ok": cert.condition_ok,
        "x0": lo(&cert.x0),
        "fixed_point_lo": lo(&cert.fixed_point),
        "fixed_point_hi": hi(&cert.fixed_point),
        "weights_certified": weights_ok,
        "density_lower_bound": density,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    if !weights_ok {
        return Err(Outcome::Failed("weights not certified".into()));
    }
    if !cert.condition_ok {
        return Err(Outcome::Failed(format!("B_20/(1 - theta) < M fails for M = {m}")));
    }
    Ok(())
}

fn oracle_check(path: &Path, density: bool, bias: Option<u64>) -> Run {
    let sys = read_system(path)?;
    let d = uncovered_density(&sys)?;
    if density {
        println!("{d}");
    }
    if let Some(n) = bias {
        println!("{}", max_bias(&sys, n)?);
    }
    if !density && bias.is_none() {
        println!("period {}", sys.period()?);
        println!("uncovered density {d}");
        println!("covers: {}", if covers(&sys)? { "yes" } else { "no" });
    }
    Ok(())
}

fn recheck(path: &Path) -> Run {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let report = ProofReport::from_json(&text)?;
    if !report.consistent() {
        return Err(Outcome::Failed("report verdicts disagree with its checks".into()));
    }
    for s in &report.sections {
        let ok = s.checks.iter().filter(|c| c.ok).count();
        println!("{:<16} {}/{} checks", s.name, ok, s.checks.len());
    }
    println!(
        "verdict: {}",
        match report.verdict {
            Verdict::Proved => "proved",
            Verdict::NotProved => "not proved",
        }
    );
    summarize(&report)
}
