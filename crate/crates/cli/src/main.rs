//! `kcq`: reproducible command-line runner for the keyed-basis qubit
//! key-generation simulator.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 protocol abort.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use kcq_core::adversary::run_attack;
use kcq_core::analysis::{rate_window, sweep_m, write_sweep_csv, MAX_KEYLESS_M};
use kcq_core::protocol::run_protocol;
use kcq_core::{seeded_rng, AttackStrategy, ProtocolConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] kcq_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser)]
#[command(name = "kcq", version, about = "Keyed-basis qubit key generation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the key generation protocol once.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run an eavesdropping strategy for a number of Monte Carlo trials.
    Attack {
        /// intercept[:fraction], fixed:<phi>, breidbart, keyguess, blockguess:<k>
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Eavesdropper error metrics for a list of basis counts, as CSV.
    Sweep {
        /// Comma-separated powers of two, e.g. "2,4,8".
        #[arg(long)]
        m: String,
        /// Skip the keyless column (it is the slow one).
        #[arg(long)]
        no_keyless: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the admissible code-rate window for a channel error rate.
    RateWindow {
        #[arg(long)]
        p_c: f64,
    },
    /// Run a scenario file bundling a config, an optional attack and a trial count.
    Scenario {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        meta: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write `<output>.meta.json` with wall-clock metadata.
    #[arg(long, requires = "output")]
    meta: bool,
}

/// A named, replayable experiment.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    name: String,
    config: ProtocolConfig,
    #[serde(default)]
    attack: Option<String>,
    trials: u64,
    output: PathBuf,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    trials: u64,
    verified: u64,
    generated: u64,
    net: i64,
}

fn main() -> ExitCode {
    // Clap reports usage errors with status 2, which is reserved for aborts.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kcq: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Run { config, common } => cmd_run(&config, &common),
        Command::Attack {
            strategy,
            config,
            trials,
            threads,
            common,
        } => {
            let strategy: AttackStrategy = strategy.parse()?;
            let config = load_config(&config)?;
            let report = with_threads(threads, || run_attack(strategy, &config, trials, common.seed))??;
            emit(common.output.as_deref(), &report.to_json())?;
            write_meta(&common, "attack")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { m, no_keyless, output } => {
            let ms = parse_m_list(&m)?;
            let rows = sweep_m(&ms, !no_keyless)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf).expect("writing to memory");
            emit(output.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RateWindow { p_c } => {
            let w = rate_window(p_c)?;
            println!("{}", serde_json::to_string(&w).expect("window serializes"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario {
            file,
            threads,
            seed,
            meta,
        } => cmd_scenario(&file, threads, seed, meta),
    }
}

fn cmd_run(path: &Path, common: &Common) -> Result<ExitCode, CliError> {
    let config = load_config(path)?;
    let outcome = run_protocol(&config, &mut seeded_rng(common.seed))?;
    emit(common.output.as_deref(), &outcome.to_json())?;
    write_meta(common, "run")?;
    match outcome.abort_reason {
        None => Ok(ExitCode::SUCCESS),
        Some(reason) => {
            eprintln!("kcq: protocol aborted: {}", reason.as_str());
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_scenario(path: &Path, threads: Option<usize>, seed: u64, meta: bool) -> Result<ExitCode, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if scenario.name.trim().is_empty() {
        return Err(CliError::Usage("scenario name must not be empty".into()));
    }
    if scenario.trials == 0 {
        return Err(CliError::Usage("scenario needs at least one trial".into()));
    }
    scenario.config.validate()?;

    let body = match &scenario.attack {
        Some(s) => {
            let strategy: AttackStrategy = s.parse()?;
            with_threads(threads, || run_attack(strategy, &scenario.config, scenario.trials, seed))??.to_json()
        }
        None => {
            let mut summary = RunSummary {
                name: &scenario.name,
                trials: scenario.trials,
                verified: 0,
                generated: 0,
                net: 0,
            };
            for t in 0..scenario.trials {
                let out = run_protocol(&scenario.config, &mut seeded_rng(seed.wrapping_add(t)))?;
                summary.verified += out.verified as u64;
                summary.generated += out.ledger.generated;
                summary.net += out.ledger.net;
            }
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        }
    };
    emit(Some(&scenario.output), &body)?;
    if meta {
        write_meta_file(&scenario.output, "scenario", seed)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: &Path) -> Result<ProtocolConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ProtocolConfig::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_m_list(text: &str) -> Result<Vec<u32>, CliError> {
    let ms = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("invalid basis count {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(&m) = ms.iter().find(|&&m| m > MAX_KEYLESS_M) {
        return Err(CliError::Usage(format!("m = {m} exceeds {MAX_KEYLESS_M}")));
    }
    Ok(ms)
}

/// Runs `f` on a dedicated pool when a thread count is given.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut text = body.to_owned();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            fs::write(p, text).map_err(io_err(p))
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", body.trim_end()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn write_meta(common: &Common, command: &str) -> Result<(), CliError> {
    match (&common.output, common.meta) {
        (Some(out), true) => write_meta_file(out, command, common.seed),
        _ => Ok(()),
    }
}

// Wall-clock data lives only in the sidecar so primary outputs stay
// byte-identical across runs.
fn write_meta_file(output: &Path, command: &str, seed: u64) -> Result<(), CliError> {
    let unix_time = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "command": command,
        "seed": seed,
        "output": output.display().to_string(),
        "unix_time": unix_time,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    let path = PathBuf::from(name);
    fs::write(&path, format!("{meta:#}\n")).map_err(io_err(&path))
}
