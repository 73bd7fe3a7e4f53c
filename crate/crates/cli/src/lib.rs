//! Command-line experiments for AAA secret-key generation.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::hash::{BuildHasher, RandomState};
use std::path::PathBuf;

use clap::Parser;

use aaa_core::sources::LeakDist;
use commands::{CliError, Command, Report};
use config::{ExperimentConfig, Format, Grid, Span};

#[derive(Debug, Parser)]
#[command(name = "aaa", version, about = "AAA secret-key generation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed; a random one is generated and printed when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Erasure probability, one value or one per packet.
    #[arg(long, global = true, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub key_len: Option<usize>,
    /// `start:stop:count` or a comma-separated list.
    #[arg(long, global = true)]
    pub alpha_grid: Option<Grid>,
    #[arg(long, global = true)]
    pub mu_grid: Option<Grid>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,
    /// `fixed:k`, `uniform:a..b` or `binomial:N,q`.
    #[arg(long, global = true)]
    pub l_dist: Option<LeakDist>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Pilot symbols per half period (S).
    #[arg(long, global = true)]
    pub symbols: Option<usize>,
    /// Symbol power (p).
    #[arg(long, global = true)]
    pub power: Option<f64>,
    /// Coherence periods (M).
    #[arg(long, global = true)]
    pub periods: Option<usize>,
    /// Bits per symbol (R).
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub gamma_m: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub mu_e: Option<f64>,
    /// Period sweep, e.g. `M=1..100`.
    #[arg(long, global = true)]
    pub sweep: Option<Span>,
    /// `wifi`, `lora` or `zigbee` (compare only).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub sessions: Option<u64>,
    /// Points per axis of the exact-verification grid.
    #[arg(long, global = true)]
    pub exact_points: Option<usize>,
    /// Packet count for the Monte Carlo verification.
    #[arg(long, global = true)]
    pub mc_n: Option<usize>,
}

impl Cli {
    fn flags(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            trials: self.trials,
            format: self.format,
            out: self.out.clone(),
            alpha: self.alpha,
            mu: self.mu.clone(),
            n: self.n,
            key_len: self.key_len,
            alpha_grid: self.alpha_grid.clone(),
            mu_grid: self.mu_grid.clone(),
            ladder: self.ladder.clone(),
            l_dist: self.l_dist,
            n_max: self.n_max,
            symbols: self.symbols,
            power: self.power,
            periods: self.periods,
            rate: self.rate,
            gamma: self.gamma,
            gamma_m: self.gamma_m.clone(),
            mu_e: self.mu_e,
            sweep: self.sweep,
            preset: self.preset.clone(),
            sessions: self.sessions,
            exact_points: self.exact_points,
            mc_n: self.mc_n,
        }
    }

    /// Flags over config file over preset.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        let cfg = self.flags().or(file);
        let preset = match (&cfg.preset, self.command) {
            (Some(name), _) => ExperimentConfig::preset(name)?,
            (None, Command::Compare) => ExperimentConfig::preset("wifi")?,
            (None, _) => ExperimentConfig::default(),
        };
        Ok(cfg.or(preset))
    }
}

fn fresh_seed() -> u64 {
    RandomState::new().hash_one(std::time::SystemTime::now())
}

fn emit(report: &Report, out: Option<&str>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, &report.body).map_err(|source| CliError::Io {
            path: path.to_string(),
            source,
        }),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(report.body.as_bytes())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = cli.resolve().and_then(|cfg| {
        let seed = cfg.seed.unwrap_or_else(|| {
            let s = fresh_seed();
            eprintln!("seed = {s}");
            s
        });
        let report = commands::execute(cli.command, &cfg, seed)?;
        emit(&report, cfg.out.as_deref())?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("{note}");
            }
            if report.ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
