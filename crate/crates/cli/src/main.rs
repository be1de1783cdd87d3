use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use sensmat::alloc::Allocator;
use sensmat::config::{ConfigError, ExperimentConfig, Line, RawConfig, KEYS};
use sensmat::energy::{expected_sensings, total_search_energy, HandoverTerm};
use sensmat::experiments::{configured_allocator, run_experiment_sweep, ExperimentError, Preset};
use sensmat::model::{parse_matrix, validate_matrix, ModelError, SensingMatrix, Violation};
use sensmat::sim::{run_simulation, SimConfig, SimError};
use sensmat::table::TableError;
use sensmat::throughput::{
    expected_throughput_exact, network_throughput_closed_form, optimal_matrix_search, SearchError, ThroughputError,
};

#[derive(Parser)]
#[command(name = "sensmat", version, about = "Sensing-matrix allocation and evaluation for multi-user cognitive radio")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the sensing matrix the configured allocator builds.
    Allocate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Slot index (1-based); selects the round-1 rotation.
        #[arg(long, default_value_t = 1)]
        slot: u64,
    },
    /// Closed-form and exact error-free throughput and energy of a matrix.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Matrix as `[[1,2],[0,3]]` or `1,2;0,3`; defaults to the configured allocator's.
        #[arg(long)]
        matrix: Option<String>,
    },
    /// Exhaustive search for the throughput-optimal matrix.
    Optimal {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Monte-Carlo run of the configured allocator or a given matrix.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        matrix: Option<String>,
    },
    /// Run a preset sweep and write CSV.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = value_parser!(Preset))]
        preset: Preset,
    },
}

/// `--config`, `--out` and one `--key-name` flag per config key.
struct ConfigArgs {
    file: Option<PathBuf>,
    out: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let overrides = KEYS
            .iter()
            .filter_map(|&k| m.get_one::<String>(k).map(|v| (k, v.clone())))
            .collect();
        Ok(ConfigArgs {
            file: m.get_one::<PathBuf>("config").cloned(),
            out: m.get_one::<PathBuf>("out").cloned(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let mut cmd = cmd
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(value_parser!(PathBuf))
                    .help("Config file of `key = value` lines"),
            )
            .arg(
                Arg::new("out")
                    .long("out")
                    .value_name("FILE")
                    .value_parser(value_parser!(PathBuf))
                    .help("Write output here instead of stdout"),
            );
        for &key in KEYS {
            cmd = cmd.arg(
                Arg::new(key)
                    .long(flag(key))
                    .value_name("VALUE")
                    .help(format!("Overrides config key `{key}`")),
            );
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}", origin(path, source))]
    Config { path: Option<PathBuf>, source: ConfigError },
    #[error("matrix: {0}")]
    Matrix(#[from] ModelError),
    #[error("matrix: {}", join(.0))]
    InvalidMatrix(Vec<Violation>),
    #[error("matrix has {found} rows but ns = {ns}")]
    Rows { found: usize, ns: usize },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Throughput(#[from] ThroughputError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] TableError),
}

fn origin(path: &Option<PathBuf>, e: &ConfigError) -> String {
    match (path, e.line()) {
        (Some(p), Line::At(_)) => format!("{}: {e}", p.display()),
        _ => e.to_string(),
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config { .. } => "config",
            CliError::Matrix(_) | CliError::InvalidMatrix(_) | CliError::Rows { .. } => "matrix",
            CliError::Experiment(ExperimentError::Config(_)) => "config",
            CliError::Experiment(ExperimentError::Search(_)) | CliError::Search(_) => "search",
            CliError::Experiment(_) => "experiment",
            CliError::Throughput(_) => "throughput",
            CliError::Sim(_) => "simulation",
            CliError::Table(_) => "csv",
        }
    }

    fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Config { source, .. } = self {
            if let Line::At(n) = source.line() {
                v["line"] = json!(n);
            }
        }
        v
    }
}

impl ConfigArgs {
    fn raw(&self) -> Result<RawConfig, CliError> {
        let mut raw = match &self.file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                RawConfig::parse(&text).map_err(|e| self.config_error(e))?
            }
            None => RawConfig::default(),
        };
        for (key, value) in &self.overrides {
            raw.set(key, value).map_err(|e| self.config_error(e))?;
        }
        Ok(raw)
    }

    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        self.raw()?.resolve().map_err(|e| self.config_error(e))
    }

    fn config_error(&self, source: ConfigError) -> CliError {
        CliError::Config {
            path: self.file.clone(),
            source,
        }
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            }),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|source| CliError::Io {
                        path: Path::new("<stdout>").to_path_buf(),
                        source,
                    })
            }
        }
    }
}

fn given_matrix(text: &str, cfg: &ExperimentConfig) -> Result<SensingMatrix, CliError> {
    let sm = parse_matrix(text)?;
    validate_matrix(&sm, &cfg.profile(), usize::MAX).map_err(CliError::InvalidMatrix)?;
    if sm.ns() != cfg.ns {
        return Err(CliError::Rows {
            found: sm.ns(),
            ns: cfg.ns,
        });
    }
    Ok(sm)
}

fn allocator_matrix(cfg: &ExperimentConfig, slot: u64) -> Result<SensingMatrix, CliError> {
    let (profile, timing, quality) = (cfg.profile(), cfg.timing(), cfg.quality());
    let mut notes = Vec::new();
    let allocator = configured_allocator(cfg, &profile, &timing, &mut notes)?;
    let sm = allocator
        .build(&profile, &timing, &quality, cfg.ns, slot)
        .map_err(ExperimentError::from)?;
    Ok(sm)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn allocate(args: &ConfigArgs, slot: u64) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let sm = allocator_matrix(&cfg, slot.max(1))?;
    args.emit(&format!("{sm}\n"))
}

fn analyze(args: &ConfigArgs, matrix: Option<&str>) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let sm = match matrix {
        Some(text) => given_matrix(text, &cfg)?,
        None => allocator_matrix(&cfg, 1)?,
    };
    let (profile, timing) = (cfg.profile(), cfg.timing());
    let closed = network_throughput_closed_form(&sm, &profile, &timing)?;
    let exact = expected_throughput_exact(&sm, &profile, &timing)?;
    let per_su_sensings: Vec<f64> = (0..sm.ns())
        .map(|su| expected_sensings(&sm.sequence(su), &profile))
        .collect();
    let energy = cfg.energy();
    let out = json!({
        "matrix": sm.to_rows(),
        "closed_form_throughput": closed.total,
        "closed_form_per_column": closed.per_column,
        "exact_throughput": exact,
        "expected_sensings": per_su_sensings.iter().sum::<f64>(),
        "expected_sensings_per_su": per_su_sensings,
        "search_energy": total_search_energy(&sm, &profile, &energy, HandoverTerm::Include),
        "config_digest": cfg.digest(),
    });
    args.emit(&pretty(&out))
}

fn optimal(args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let opts = cfg.search_options();
    let found = optimal_matrix_search(&cfg.profile(), &cfg.timing(), cfg.ns, &opts)?;
    let out = json!({
        "matrix": found.matrix.to_rows(),
        "value": found.value,
        "candidates": found.candidates,
        "objective": cfg.objective.to_string(),
        "search_space": cfg.search_space.to_string(),
        "config_digest": cfg.digest(),
    });
    args.emit(&pretty(&out))
}

fn simulate(args: &ConfigArgs, matrix: Option<&str>) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let (profile, timing) = (cfg.profile(), cfg.timing());
    let mut notes = Vec::new();
    let allocator = match matrix {
        Some(text) => Allocator::Fixed(given_matrix(text, &cfg)?),
        None => configured_allocator(&cfg, &profile, &timing, &mut notes)?,
    };
    let label = allocator.to_string();
    let r = run_simulation(&SimConfig {
        profile,
        timing,
        quality: cfg.quality(),
        energy: cfg.energy(),
        ns: cfg.ns,
        n_slots: cfg.n_slots,
        seed: cfg.seed,
        allocator,
        rebuild_per_slot: cfg.rebuild_per_slot,
    })?;
    let out = json!({
        "allocator": label,
        "seed": r.seed,
        "n_slots": r.n_slots,
        "first_matrix": r.first_matrix.to_rows(),
        "network_throughput": r.network_throughput,
        "network_throughput_se": r.network_throughput_se,
        "per_su_throughput": r.per_su_throughput,
        "su_collisions": r.su_collisions,
        "pu_interference_events": r.pu_interference_events,
        "sensings_per_slot": r.sensings_per_slot,
        "sensings_per_slot_se": r.sensings_per_slot_se,
        "per_su_sensings": r.per_su_sensings,
        "sensing_energy": r.sensing_energy_mean,
        "handover_energy": r.handover_energy_mean,
        "fairness_spread": r.fairness.spread,
        "config_digest": cfg.digest(),
    });
    args.emit(&pretty(&out))
}

fn sweep(args: &ConfigArgs, preset: Preset) -> Result<(), CliError> {
    let cfg = preset.configure(args.raw()?).map_err(|e| args.config_error(e))?;
    let table = run_experiment_sweep(preset, &cfg)?;
    args.emit(&table.to_csv_string()?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Cmd::Allocate { cfg, slot } => allocate(cfg, *slot),
        Cmd::Analyze { cfg, matrix } => analyze(cfg, matrix.as_deref()),
        Cmd::Optimal { cfg } => optimal(cfg),
        Cmd::Simulate { cfg, matrix } => simulate(cfg, matrix.as_deref()),
        Cmd::Sweep { cfg, preset } => sweep(cfg, *preset),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
