use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsma_vlc::channel::NoiseMode;
use rsma_vlc::scenarios::{scenario, ScenarioSpec, CATALOG_NAMES};
use rsma_vlc::{run_sweep_with_workers, Scheme};

mod output;
mod validate;

use output::{write_atomic, Format};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "rsma-vlc", version, about = "RSMA / SDMA / NOMA precoding for multi-user VLC downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every (scheme, sweep point) of a scenario and write the results.
    Run(RunArgs),
    /// Print the channel matrix and per-user noise of a scenario.
    ChannelDump(DumpArgs),
    /// Cross-check analytic SINRs by Monte Carlo and the AO against a grid search.
    Validate(ValidateArgs),
    /// Print a cataloged scenario as an editable scenario file.
    Scenario {
        /// Catalog name; omit to list the catalog.
        name: Option<String>,
    },
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct SourceArgs {
    /// Catalog scenario name.
    #[arg(long, group = "source")]
    scenario: Option<String>,
    /// Path to a TOML scenario file.
    #[arg(long, group = "source")]
    scenario_file: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated subset of rsma,sdma,noma.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// Comma-separated SNR points in dB; replaces the scenario's SNR list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    noise_mode: Option<NoiseModeArg>,
    /// AO stopping tolerance on the WSR (bits/s/Hz).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Random restarts per solve, on top of the structured starts.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, env = "RSMA_VLC_WORKERS")]
    workers: Option<usize>,
    /// Also exit with status 2 when a solve stops at the iteration cap.
    #[arg(long)]
    strict_convergence: bool,
    /// Suppress the summary table.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    noise_mode: Option<NoiseModeArg>,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Also check a scenario's channel.
    #[arg(long, conflicts_with = "scenario_file")]
    scenario: Option<String>,
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// Base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds, starting at the base seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Random instances per seed for each check.
    #[arg(long, default_value_t = 4)]
    instances: usize,
    #[arg(long, default_value_t = 1_000_000)]
    symbols: usize,
    /// Inject a known defect to confirm the suite catches it.
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<validate::Fault>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseModeArg {
    Unit,
    Physical,
}

impl From<NoiseModeArg> for NoiseMode {
    fn from(v: NoiseModeArg) -> Self {
        match v {
            NoiseModeArg::Unit => NoiseMode::Unit,
            NoiseModeArg::Physical => NoiseMode::Physical,
        }
    }
}

fn load_spec(name: Option<&str>, file: Option<&PathBuf>) -> Result<ScenarioSpec, String> {
    match (name, file) {
        (Some(name), _) => scenario(name).map_err(|e| e.to_string()),
        (None, Some(path)) => ScenarioSpec::load(path).map_err(|e| format!("{}: {e}", path.display())),
        (None, None) => Err("no scenario given".into()),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let mut spec = load_spec(args.source.scenario.as_deref(), args.source.scenario_file.as_ref())?;
    if let Some(schemes) = args.schemes {
        spec.schemes = schemes;
    }
    if let Some(snr) = args.snr {
        spec.sweep = spec.sweep.with_snr(snr);
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(mode) = args.noise_mode {
        spec.noise_mode = mode.into();
    }
    if let Some(delta) = args.delta {
        spec.solver.tolerance = delta;
    }
    if let Some(n) = args.max_iters {
        spec.solver.max_iterations = n;
    }
    if let Some(n) = args.restarts {
        spec.solver.restarts = n;
    }
    if args.workers == Some(0) {
        return Err("--workers must be at least 1".into());
    }
    spec.validate().map_err(|e| e.to_string())?;

    let result = run_sweep_with_workers(&spec, args.workers).map_err(|e| e.to_string())?;
    let body = match args.format {
        Format::Csv => result.to_csv_string(),
        Format::Json => result.to_json_string(),
    }
    .map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => {
            write_atomic(path, body.as_bytes()).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            if !args.quiet {
                print!("{}", output::summary(&result));
            }
        }
        None => {
            print!("{body}");
            if !args.quiet {
                eprint!("{}", output::summary(&result));
            }
        }
    }

    let failed = result.failures();
    let unconverged = result.rows.iter().filter(|r| r.result().is_some_and(|p| !p.converged)).count();
    for row in &result.rows {
        if let rsma_vlc::scenarios::Outcome::Failed { message } = &row.outcome {
            eprintln!("error: {} {}={}: {message}", row.scheme, row.sweep_name, row.sweep_value);
        }
    }
    if failed > 0 || (args.strict_convergence && unconverged > 0) {
        eprintln!("{failed} failed and {unconverged} unconverged of {} solves", result.rows.len());
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_channel_dump(args: DumpArgs) -> Result<ExitCode, String> {
    let mut spec = load_spec(args.source.scenario.as_deref(), args.source.scenario_file.as_ref())?;
    if let Some(mode) = args.noise_mode {
        spec.noise_mode = mode.into();
    }
    spec.validate().map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for point in &spec.sweep.points() {
        if seen.contains(&point.separation_m) {
            continue;
        }
        seen.push(point.separation_m);
        let ch = spec.channel_at(point).map_err(|e| e.to_string())?;
        if let Some(d) = point.separation_m {
            println!("# separation_m={d}");
        }
        print!("{}", output::channel_table(&ch));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_scenario(name: Option<String>) -> Result<ExitCode, String> {
    match name {
        None => {
            for name in CATALOG_NAMES {
                let spec = scenario(name).map_err(|e| e.to_string())?;
                println!("{name:<24} {}", spec.description);
            }
        }
        Some(name) => {
            let spec = scenario(&name).map_err(|e| e.to_string())?;
            print!("{}", spec.to_toml_string().map_err(|e| e.to_string())?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::ChannelDump(args) => cmd_channel_dump(args),
        Command::Validate(args) => validate::cmd_validate(args),
        Command::Scenario { name } => cmd_scenario(name),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
