//! Command-line front end.
//!
//! Experiment files are TOML with one table per module:
//!
//! ```toml
//! [experiment]
//! schemes = ["rwa", "mpra", "tra", "cpa"]
//! seeds = 10
//! seed_base = 0
//!
//! [market]
//! n_buyers = 200
//!
//! [attack]
//! kind = "buyer-collusion"
//! byzantine_ratio = 0.2
//! ```
//!
//! Unknown keys are rejected. Every flag overrides its file equivalent and
//! the effective configuration is written next to the CSV as
//! `<out>.effective.toml`. The seed base falls back to `SIM_SEED_BASE`, then 0.
//!
//! Exit codes: 0 success, 2 configuration or argument error, 3 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AttackConfig, AttackKind, MAX_BYZANTINE_RATIO};
use crate::engine::{
    self, AmmConfig, BaselineConfig, EngineError, MarketConfig, MetricsRecord, Scheme, SimConfig, SweepParam,
    SweepPoint,
};
use crate::ledger::LedgerParams;

pub const SEED_ENV: &str = "SIM_SEED_BASE";

pub const CSV_HEADER: &str =
    "scheme,sweep_param,sweep_value,attack_kind,utilization_mean,utilization_std,n_seeds,leftover_mean,defaults_mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub schemes: Vec<Scheme>,
    pub seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_base: Option<u64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { schemes: Scheme::ALL.to_vec(), seeds: 10, seed_base: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub buyers_from: usize,
    pub buyers_to: usize,
    pub buyers_step: usize,
    pub ratios: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { buyers_from: 100, buyers_to: 300, buyers_step: 50, ratios: vec![0.0, 0.1, 0.2, 0.3] }
    }
}

/// Parsed experiment file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentSection,
    pub market: MarketConfig,
    pub ledger: LedgerParams,
    pub amm: AmmConfig,
    pub baselines: BaselineConfig,
    pub attack: AttackConfig,
    pub sweep: SweepSection,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            market: self.market.clone(),
            ledger: self.ledger,
            amm: self.amm.clone(),
            baselines: self.baselines.clone(),
            attack: self.attack,
        }
    }

    fn seeds(&self) -> Vec<u64> {
        let base = self.experiment.seed_base.unwrap_or(0);
        (0..self.experiment.seeds as u64).map(|i| base + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Sim(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Sim(_) => 1,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ConfigInvalid(_) | EngineError::UnknownParameter(_) => CliError::Config(e.to_string()),
            EngineError::Internal(_) => CliError::Sim(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rwasim", version, about = "Tokenized spectrum market simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Number of seeds per point.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed; later seeds count up from it.
    #[arg(long)]
    pub seed_base: Option<u64>,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every scheme in a config file.
    Run {
        config: PathBuf,
        /// Seed base override.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one JSON-lines chain trace per run into this directory.
        #[arg(long)]
        chain_dump: Option<PathBuf>,
    },
    /// Utilization against the number of buyers.
    SweepBuyers {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        from: Option<usize>,
        #[arg(long)]
        to: Option<usize>,
        #[arg(long)]
        step: Option<usize>,
        #[arg(long)]
        sellers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Utilization against the Byzantine ratio for one attack.
    SweepByzantine {
        #[arg(long)]
        config: Option<PathBuf>,
        /// buyer-collusion, seller-collusion or default.
        #[arg(long)]
        attack: Option<String>,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        buyers: Option<usize>,
        #[arg(long)]
        sellers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rwasim: {e}");
            e.exit_code()
        }
    }
}

fn env_seed_base() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not a seed"))),
        Err(_) => Ok(None),
    }
}

fn base_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn apply_common(cfg: &mut FileConfig, seed_base: Option<u64>, seeds: Option<usize>) -> Result<(), CliError> {
    if let Some(s) = seed_base {
        cfg.experiment.seed_base = Some(s);
    }
    if cfg.experiment.seed_base.is_none() {
        cfg.experiment.seed_base = Some(env_seed_base()?.unwrap_or(0));
    }
    if let Some(n) = seeds {
        cfg.experiment.seeds = n;
    }
    if cfg.experiment.seeds < 1 {
        return Err(CliError::Config("seeds must be at least 1".into()));
    }
    if cfg.experiment.schemes.is_empty() {
        return Err(CliError::Config("experiment.schemes is empty".into()));
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, seed, seeds, out, chain_dump } => {
            let mut cfg = FileConfig::load(&config)?;
            apply_common(&mut cfg, seed, seeds)?;
            cmd_run(&cfg, out.as_deref(), chain_dump.as_deref())
        }
        Command::SweepBuyers { config, from, to, step, sellers, common } => {
            let mut cfg = base_config(config.as_deref())?;
            apply_common(&mut cfg, common.seed_base, common.seeds)?;
            let s = &mut cfg.sweep;
            s.buyers_from = from.unwrap_or(s.buyers_from);
            s.buyers_to = to.unwrap_or(s.buyers_to);
            s.buyers_step = step.unwrap_or(s.buyers_step);
            if let Some(n) = sellers {
                cfg.market.n_sellers = n;
            }
            cmd_sweep_buyers(&cfg, common.out.as_deref())
        }
        Command::SweepByzantine { config, attack, ratios, buyers, sellers, common } => {
            let mut cfg = base_config(config.as_deref())?;
            apply_common(&mut cfg, common.seed_base, common.seeds)?;
            if let Some(a) = attack {
                cfg.attack.kind = a.parse::<AttackKind>().map_err(CliError::Config)?;
            }
            if let Some(r) = ratios {
                cfg.sweep.ratios = r;
            }
            if let Some(n) = buyers {
                cfg.market.n_buyers = n;
            }
            if let Some(n) = sellers {
                cfg.market.n_sellers = n;
            }
            cmd_sweep_byzantine(&cfg, common.out.as_deref())
        }
    }
}

pub fn cmd_run(cfg: &FileConfig, out: Option<&Path>, chain_dump: Option<&Path>) -> Result<(), CliError> {
    let sim = cfg.sim();
    sim.validate()?;
    let seeds = cfg.seeds();
    let mut records: Vec<MetricsRecord> = Vec::new();
    if let Some(dir) = chain_dump {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    for &scheme in &cfg.experiment.schemes {
        for &seed in &seeds {
            let output = engine::run_detailed(&sim, scheme, seed)?;
            if let Some(dir) = chain_dump {
                let path = dir.join(format!("{scheme}-seed{seed}.jsonl"));
                let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                output
                    .world
                    .ledger
                    .dump_chain(io::BufWriter::new(file))
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            }
            records.push(output.metrics);
        }
    }
    emit(cfg, &engine::aggregate(&records), out)
}

pub fn cmd_sweep_buyers(cfg: &FileConfig, out: Option<&Path>) -> Result<(), CliError> {
    let s = &cfg.sweep;
    if s.buyers_step == 0 || s.buyers_from > s.buyers_to || s.buyers_from == 0 {
        return Err(CliError::Config(format!(
            "invalid buyer range: from {} to {} step {}",
            s.buyers_from, s.buyers_to, s.buyers_step
        )));
    }
    let values: Vec<f64> = (s.buyers_from..=s.buyers_to).step_by(s.buyers_step).map(|v| v as f64).collect();
    let records = engine::sweep(&cfg.sim(), &cfg.experiment.schemes, SweepParam::NBuyers, &values, &cfg.seeds())?;
    emit(cfg, &engine::aggregate(&records), out)
}

pub fn cmd_sweep_byzantine(cfg: &FileConfig, out: Option<&Path>) -> Result<(), CliError> {
    if cfg.attack.kind == AttackKind::None {
        return Err(CliError::Config("an attack kind is required (--attack)".into()));
    }
    if let Some(r) = cfg.sweep.ratios.iter().find(|r| !(0.0..=MAX_BYZANTINE_RATIO).contains(*r)) {
        return Err(CliError::Config(format!("byzantine ratio {r} outside [0, {MAX_BYZANTINE_RATIO}]")));
    }
    let records =
        engine::sweep(&cfg.sim(), &cfg.experiment.schemes, SweepParam::ByzantineRatio, &cfg.sweep.ratios, &cfg.seeds())?;
    emit(cfg, &engine::aggregate(&records), out)
}

/// CSV text for aggregated points, header included.
pub fn render_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{:.6},{},{:.6},{:.6},{},{:.6},{:.6}",
            p.scheme,
            p.sweep_param,
            p.sweep_value,
            p.attack_kind.as_str(),
            p.utilization_mean,
            p.utilization_std,
            p.n_seeds,
            p.leftover_mean,
            p.defaults_mean
        );
    }
    s
}

/// Scheme-by-value table of mean utilization.
pub fn render_summary(points: &[SweepPoint]) -> String {
    let mut values: Vec<f64> = Vec::new();
    for p in points {
        if !values.contains(&p.sweep_value) {
            values.push(p.sweep_value);
        }
    }
    let param = points.first().map(|p| p.sweep_param.as_str()).unwrap_or("none");
    let mut s = format!("{param:>16}");
    for v in &values {
        let _ = write!(s, " {v:>8.2}");
    }
    s.push('\n');
    let mut schemes: Vec<Scheme> = points.iter().map(|p| p.scheme).collect();
    schemes.dedup();
    for scheme in schemes {
        let _ = write!(s, "{:>16}", scheme.as_str());
        for v in &values {
            match points.iter().find(|p| p.scheme == scheme && p.sweep_value == *v) {
                Some(p) => {
                    let _ = write!(s, " {:>8.3}", p.utilization_mean);
                }
                None => s.push_str("        -"),
            }
        }
        s.push('\n');
    }
    s
}

fn emit(cfg: &FileConfig, points: &[SweepPoint], out: Option<&Path>) -> Result<(), CliError> {
    let csv = render_csv(points);
    match out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut sidecar = path.as_os_str().to_owned();
            sidecar.push(".effective.toml");
            let text = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
            fs::write(&sidecar, text).map_err(|e| CliError::Io(format!("{}: {e}", Path::new(&sidecar).display())))?;
            eprint!("{}", render_summary(points));
        }
        None => {
            io::stdout().write_all(csv.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}
