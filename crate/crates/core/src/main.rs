use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sinai_lab::config::{ExperimentConfig, PolesSection, Units};
use sinai_lab::experiment::{run_experiment, Command, LabError, RunOptions};
use sinai_lab::poles::Radius;

/// Two-slit interference laboratory for straight and curved triangular billiards.
#[derive(Parser)]
#[command(name = "sinai-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Output directory; relative paths go under $SINAI_LAB_OUTPUT_ROOT when set
    #[arg(long)]
    out: PathBuf,
    /// Replace the outputs of a previous run in --out
    #[arg(long)]
    force: bool,
    /// Worker threads (outputs do not depend on this)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WithConfig {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Si,
    Natural,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate the wave packet and record the film pattern
    Simulate(WithConfig),
    /// Classical trajectories, Lyapunov exponent and direction census
    Classical(WithConfig),
    /// Lowest billiard levels, Poincaré time and spacing ratio
    Spectrum(WithConfig),
    /// Equilibrium-state interference term and its large-|x| decay
    Sid(WithConfig),
    /// Decompose both/only-1/only-2 patterns into p1, p2 and p_int
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        both: PathBuf,
        #[arg(long)]
        only1: PathBuf,
        #[arg(long)]
        only2: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Pole position and decoherence time. U0 and A are user inputs; they
    /// are not derived here. Flags override values from --config.
    Poles {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        u0: Option<f64>,
        #[arg(long = "a-coef")]
        a_coef: Option<f64>,
        /// Order of the first non-vanishing derivative of the wall potential
        #[arg(long)]
        nu: Option<u32>,
        /// Wall radius, or `inf` for a flat wall
        #[arg(long = "a", value_parser = parse_radius)]
        radius: Option<f64>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        hbar: Option<f64>,
        #[arg(long, value_enum)]
        units: Option<UnitArg>,
        /// Comma-separated radii for a sweep CSV
        #[arg(long, value_delimiter = ',', value_parser = parse_radius)]
        sweep: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_radius(s: &str) -> Result<f64, String> {
    Radius::parse(s).map(Radius::value).ok_or_else(|| format!("not a radius: {s:?}"))
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, LabError> {
    Ok(ExperimentConfig::load(path)?)
}

#[allow(clippy::too_many_arguments)]
fn poles_config(
    config: Option<PathBuf>,
    u0: Option<f64>,
    a_coef: Option<f64>,
    nu: Option<u32>,
    radius: Option<f64>,
    mass: Option<f64>,
    hbar: Option<f64>,
    units: Option<UnitArg>,
    sweep: Vec<f64>,
) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &config {
        Some(p) => load(p)?,
        None => ExperimentConfig::parse("", "<flags>")?,
    };
    let base = cfg.poles.take();
    let missing = |k: &str| LabError::Config(format!("poles: --{k} is required (no value in a config)"));
    let units = match units {
        Some(UnitArg::Si) => Units::Si,
        Some(UnitArg::Natural) => Units::Natural,
        None => base.as_ref().map_or(Units::Si, |b| b.units),
    };
    let unit_changed = base.as_ref().is_some_and(|b| b.units != units);
    let section = PolesSection {
        u0: u0.or(base.as_ref().map(|b| b.u0)).ok_or_else(|| missing("u0"))?,
        a_coef: a_coef.or(base.as_ref().map(|b| b.a_coef)).ok_or_else(|| missing("a-coef"))?,
        wall_order: nu.or(base.as_ref().map(|b| b.wall_order)).ok_or_else(|| missing("nu"))?,
        radius: radius.or(base.as_ref().map(|b| b.radius)).ok_or_else(|| missing("a"))?,
        units,
        mass: mass.or(if unit_changed { None } else { base.as_ref().and_then(|b| b.mass) }),
        hbar: hbar.or(if unit_changed { None } else { base.as_ref().and_then(|b| b.hbar) }),
        sweep: if sweep.is_empty() { base.map(|b| b.sweep).unwrap_or_default() } else { sweep },
    };
    cfg.poles = Some(section);
    // reparse so defaults are filled exactly as for a file
    Ok(ExperimentConfig::parse(&cfg.echo(), "<flags>")?)
}

fn run(cli: Cli) -> Result<serde_json::Value, LabError> {
    let (cfg, command, common, inputs) = match cli.command {
        Cmd::Simulate(w) => (load(&w.config)?, Command::Simulate, w.common, None),
        Cmd::Classical(w) => (load(&w.config)?, Command::Classical, w.common, None),
        Cmd::Spectrum(w) => (load(&w.config)?, Command::Spectrum, w.common, None),
        Cmd::Sid(w) => (load(&w.config)?, Command::Sid, w.common, None),
        Cmd::Analyze { config, both, only1, only2, common } => {
            (load(&config)?, Command::Analyze, common, Some([both, only1, only2]))
        }
        Cmd::Poles { config, u0, a_coef, nu, radius, mass, hbar, units, sweep, common } => {
            (poles_config(config, u0, a_coef, nu, radius, mass, hbar, units, sweep)?, Command::Poles, common, None)
        }
    };
    let opts = RunOptions { force: common.force, analyze_inputs: inputs };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let out = pool.install(|| run_experiment(&cfg, command, &common.out, &opts))?;
    let mut summary = out.summary;
    summary["output_dir"] = serde_json::json!(out.dir.display().to_string());
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sinai-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
