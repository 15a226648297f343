use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgesync_core::bho::{offline_profile, write_profile, TrainingSetup};
use edgesync_core::config::{load_stream_dir, Config, StreamSource};
use edgesync_core::experiments::{format_table, format_verdicts, run_experiment, write_report, ExperimentSpec};
use edgesync_core::model::StudentModel;
use edgesync_core::sim::{
    resolve_policy, run_simulation, write_metrics_csv, write_series_csv, write_summary, write_trace_csv, SimSettings,
};
use edgesync_core::stream::{benchmark_library, save_feature_file, split_across_cameras, CATALOG};
use edgesync_core::types::RngSeed;
use edgesync_core::util::write_atomic;
use edgesync_core::Error;

/// Deterministic edge-cloud continuous-learning simulator.
#[derive(Parser)]
#[command(name = "edgesync", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic feature streams.
    GenData(GenData),
    /// Search training hyperparameters on a directory of streams.
    ProfileOffline(ProfileOffline),
    /// Run one policy and write its metrics.
    Simulate(Simulate),
    /// Run a multi-seed experiment spec and judge its claims.
    Compare(Compare),
}

#[derive(Args)]
struct GenData {
    /// A catalog schedule, or `library` for the whole multi-camera library.
    #[arg(long)]
    schedule: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; a directory for `library`.
    #[arg(long)]
    out: PathBuf,
    /// Edges the library is split across.
    #[arg(long)]
    cameras: Option<usize>,
    /// Video index within the catalog kind.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileOffline {
    /// Directory of `*.stream` files.
    #[arg(long)]
    streams: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flags that override the config file.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    cameras: Option<usize>,
    /// Read edge streams from this directory instead of the synthetic library.
    #[arg(long)]
    streams: Option<PathBuf>,
    /// Hyperparameters from a `profile-offline` result.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    upload_fraction: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// `recency` or `literal`.
    #[arg(long)]
    timeliness_mode: Option<String>,
}

#[derive(Args)]
struct Simulate {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write the per-frame trace.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Compare {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Usage errors exit with 2, runtime failures with 1.
enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage<T>(r: Result<T, Error>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let cfg = match path {
        Some(p) => usage(Config::load(p))?,
        None => Config::default(),
    };
    Ok(cfg)
}

fn apply(cfg: &mut Config, o: &Overrides) {
    if let Some(p) = &o.policy {
        cfg.sim.policy = p.clone();
    }
    if let Some(c) = o.cameras {
        cfg.streams.cameras = c;
    }
    if let Some(d) = &o.streams {
        cfg.streams.source = StreamSource::Dir;
        cfg.streams.dir = Some(d.clone());
    }
    if let Some(p) = &o.profile {
        cfg.hyperparams.profile = Some(p.clone());
    }
    if let Some(k) = o.upload_fraction {
        cfg.filter.upload_fraction = k;
    }
    if let Some(a) = o.alpha {
        cfg.filter.alpha = a;
    }
    if let Some(b) = o.beta {
        cfg.filter.beta = b;
    }
    if let Some(m) = &o.timeliness_mode {
        cfg.filter.timeliness_mode = m.clone();
    }
}

fn gen_data(a: GenData) -> Result<(), Failure> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(c) = a.cameras {
        cfg.streams.cameras = c;
    }
    usage(cfg.validate())?;
    let world = cfg.world(RngSeed(a.seed))?;
    if a.schedule == "library" {
        let streams = split_across_cameras(&benchmark_library(&world)?, cfg.streams.cameras)?;
        fs::create_dir_all(&a.out)?;
        for (i, s) in streams.iter().enumerate() {
            save_feature_file(&a.out.join(format!("edge_{i:02}.stream")), s)?;
        }
        let model = world.pretrained_model()?;
        write_atomic(&a.out.join("student.ckpt"), |w| model.write_checkpoint(w))?;
        log::info!("wrote {} streams and student.ckpt to {}", streams.len(), a.out.display());
    } else {
        if !CATALOG.contains(&a.schedule.as_str()) {
            return Err(Failure::Usage(Error::Config(format!(
                "unknown schedule {:?}; expected library or one of {}",
                a.schedule,
                CATALOG.join(", ")
            ))));
        }
        if a.cameras.is_some() {
            return Err(Failure::Usage(Error::Config("--cameras only applies to --schedule library".into())));
        }
        let stream = world.video(&a.schedule, a.index)?;
        save_feature_file(&a.out, &stream)?;
        log::info!("wrote {} records to {}", stream.len(), a.out.display());
    }
    Ok(())
}

fn initial_model(cfg: &Config, seed: RngSeed) -> Result<StudentModel, Error> {
    match &cfg.model.checkpoint {
        Some(p) => StudentModel::read_checkpoint(BufReader::new(File::open(p)?), p),
        None => cfg.world(seed)?.pretrained_model(),
    }
}

fn profile(a: ProfileOffline) -> Result<(), Failure> {
    let cfg = load_config(a.config.as_deref())?;
    usage(cfg.validate())?;
    let seed = RngSeed(a.seed);
    let streams = load_stream_dir(&a.streams)?;
    let settings = cfg.sim_settings()?;
    let setup = TrainingSetup {
        initial: initial_model(&cfg, seed)?,
        budget: settings.budget,
        cost: settings.costs.epoch,
        trainer: settings.trainer,
    };
    let res = offline_profile(&streams, &setup, &cfg.profile_config(), seed)?;
    write_atomic(&a.out, |w| write_profile(&res, w))?;
    log::info!(
        "profile: learning_rate={} momentum={} weight_decay={} value={:.4}",
        res.h.learning_rate,
        res.h.momentum,
        res.h.weight_decay,
        res.value
    );
    Ok(())
}

fn simulate(a: Simulate) -> Result<(), Failure> {
    let mut cfg = load_config(Some(&a.config))?;
    apply(&mut cfg, &a.overrides);
    usage(cfg.validate())?;
    let seed = RngSeed(a.seed);
    let (streams, initial) = cfg.load_inputs(seed)?;
    let settings = SimSettings {
        record_trace: a.trace,
        ..cfg.sim_settings()?
    };
    let policy = resolve_policy(&cfg.sim.policy, &cfg.policies, &streams, &initial, &settings, seed)?;
    let out = run_simulation(&streams, &initial, &policy, &settings, seed)?;
    let dir = &a.out_dir;
    fs::create_dir_all(dir)?;
    let edges = streams.len();
    write_atomic(&dir.join("metrics.csv"), |w| write_metrics_csv(&out.report, edges, w))?;
    write_atomic(&dir.join("series.csv"), |w| write_series_csv(&out.report, w))?;
    if a.trace {
        write_atomic(&dir.join("trace.csv"), |w| write_trace_csv(&out.trace, w))?;
    }
    write_atomic(&dir.join("config.toml"), |w| w.write_all(cfg.to_toml().as_bytes()))?;
    write_atomic(&dir.join("summary.txt"), |w| write_summary(&out.report, w))?;
    println!(
        "{}: accuracy {:.4}, {} updates, mean cycle {:.3} s",
        out.report.policy, out.report.accuracy, out.report.update_cycles, out.report.mean_cycle_s
    );
    Ok(())
}

fn compare(a: Compare) -> Result<(), Failure> {
    let (spec, cfg) = usage(ExperimentSpec::load(&a.spec))?;
    usage(spec.validate().and_then(|_| cfg.validate()))?;
    let report = run_experiment(&spec, &cfg)?;
    write_report(&report, &a.out_dir)?;
    let mut out = std::io::stdout().lock();
    write!(out, "{}", format_table(&report))?;
    write!(out, "{}", format_verdicts(&report.verdicts))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::ProfileOffline(a) => profile(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
    };
    let (e, code) = match result {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => (e, ExitCode::from(2)),
        Err(Failure::Runtime(e)) => (e, ExitCode::FAILURE),
    };
    // One line, so scripts can split on the first colon.
    let msg = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error[{}]: {msg}", e.kind());
    code
}
