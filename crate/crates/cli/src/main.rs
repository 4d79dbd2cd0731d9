use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flywheel_core::coefficients::{find_negative_damping_interval, build_table};
use flywheel_core::sweep::{analyze_populations, run_sweep, voltage_dir};
use flywheel_core::validate::{validate, CheckStatus};
use flywheel_core::{Error, RunConfig};

const EXIT_PARTIAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "flywheel", version, about = "Voltage-driven nano-electromechanical oscillator: sweeps, checks and work analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults reproduce the reference device.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed; per-voltage seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// SDE steps per voltage.
    #[arg(long)]
    steps: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline for every configured voltage.
    Sweep(Common),
    /// Check the electronic steady state without integrating.
    Validate(Common),
    /// Build and store coefficient tables only.
    Coeffs(Common),
    /// Recompute thermodynamics from stored populations of a finished sweep.
    Analyze(Common),
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.out_dir {
            config.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(n) = self.steps {
            config.integrator.n_steps = n;
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        config.validate()?;
        Ok(config)
    }
}

fn config_error(e: Error) -> ExitCode {
    eprintln!("configuration error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn sweep(config: RunConfig) -> anyhow::Result<ExitCode> {
    let outcome = run_sweep(&config)?;
    for (record, result) in outcome.records.iter().zip(&outcome.results) {
        match result {
            Ok(r) => println!(
                "V = {:<6} nbar = {:.4e}  g2 = {}  W_E = {:.4e}  W_F = {:.4e}  ({:.1} s)",
                r.voltage,
                r.report.nbar,
                r.report.g2.map_or("n/a".into(), |g| format!("{g:.4}")),
                r.report.ergotropy,
                r.report.free_energy_work,
                record.runtime_s
            ),
            Err(e) => println!("V = {:<6} FAILED: {e}", record.voltage),
        }
    }
    println!("summary: {}", outcome.summary_path().display());
    Ok(if outcome.failures() > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn run_validate(config: RunConfig) -> anyhow::Result<ExitCode> {
    let report = validate(&config)?;
    for c in &report.checks {
        let tag = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "skip",
        };
        println!("[{tag}] V = {:<6} {:<20} {}", c.voltage, c.name, c.detail);
    }
    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("validation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
}

fn coeffs(config: RunConfig) -> anyhow::Result<ExitCode> {
    let mut failed = 0;
    for (i, &v) in config.voltages.iter().enumerate() {
        let params = config.device.params_at(v);
        let reach = config.table.half_width * params.x0();
        let dir = config.out_dir.join(voltage_dir(i, v));
        std::fs::create_dir_all(&dir)?;
        match build_table(&params, -reach, reach, config.table.nodes) {
            Ok(table) => {
                table.write_csv(&dir.join("coefficients.csv"))?;
                match find_negative_damping_interval(&table) {
                    Some((lo, hi)) => println!("V = {v:<6} negative damping on [{:.4}, {:.4}] x0", lo / params.x0(), hi / params.x0()),
                    None => println!("V = {v:<6} damping positive everywhere"),
                }
            }
            Err(e) => {
                failed += 1;
                println!("V = {v:<6} FAILED: {e}");
            }
        }
    }
    Ok(if failed > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn analyze(config: RunConfig) -> anyhow::Result<ExitCode> {
    let beta = config.reference_beta()?;
    let mut out = String::from("V,nbar,U,S,g2,W_E,W_F,passive,above_threshold\n");
    let mut failed = 0;
    for (i, &v) in config.voltages.iter().enumerate() {
        let dir = config.out_dir.join(voltage_dir(i, v));
        let above = flywheel_core::coefficients::CoefficientTable::read_csv(&dir.join("coefficients.csv"))
            .map(|t| find_negative_damping_interval(&t).is_some());
        let report = above.and_then(|a| analyze_populations(&dir.join("populations.csv"), v, beta, a));
        match report {
            Ok(t) => {
                let f = flywheel_core::io::fmt_f64;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    f(v),
                    f(t.nbar),
                    f(t.energy),
                    f(t.entropy),
                    t.g2.map(f).unwrap_or_default(),
                    f(t.ergotropy),
                    f(t.free_energy_work),
                    t.passive,
                    t.above_threshold
                ));
            }
            Err(e) => {
                failed += 1;
                eprintln!("V = {v}: {e}");
            }
        }
    }
    print!("{out}");
    std::fs::write(config.out_dir.join("analysis_summary.csv"), out)?;
    Ok(if failed > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, fn(RunConfig) -> anyhow::Result<ExitCode>) = match &cli.command {
        Command::Sweep(c) => (c, sweep),
        Command::Validate(c) => (c, run_validate),
        Command::Coeffs(c) => (c, coeffs),
        Command::Analyze(c) => (c, analyze),
    };
    let config = match common.load() {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    match run(config) {
        Ok(code) => code,
        Err(e) => match e.downcast::<Error>() {
            Ok(Error::Config(msg)) => config_error(Error::Config(msg)),
            Ok(Error::InvalidParameter { name, reason }) => config_error(Error::InvalidParameter { name, reason }),
            Ok(other) => {
                eprintln!("error: {other}");
                ExitCode::FAILURE
            }
            Err(other) => {
                eprintln!("error: {other:#}");
                ExitCode::FAILURE
            }
        },
    }
}
