use clap::{Args, Parser, Subcommand};
use halmdp::bench::{
    load_env, load_or_compute_oracle, report, run_experiment, Algorithm, EnvConfig, ExperimentConfig, ReportSpace,
};
use halmdp::envs::{NRoomSpec, TaxiSpec};
use halmdp::format::{write_json, AlmdpDocument, EnvironmentDocument, PartitionDocument};
use halmdp::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "halmdp", version, about = "Average-reward LMDP solvers and learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model-based solver (flat-rvi, flat-bisect, hier-eigen).
    Solve(SolveArgs),
    /// Run a learner (flat-td, hier-online) over several seeds.
    Train(TrainArgs),
    /// Compute the relative value iteration oracle and cache it.
    Oracle(CommonArgs),
    /// Compare finished runs by their results.csv.
    Report {
        /// Output directories; the first is the baseline.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Write an environment as a JSON document.
    Export {
        #[command(flatten)]
        common: CommonArgs,
        /// Destination file.
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Environment kind: nroom, taxi, or file.
    #[arg(long)]
    env: Option<String>,
    /// JSON environment document (implies --env file).
    #[arg(long)]
    env_file: Option<PathBuf>,
    /// Rooms per side of a square N-room grid.
    #[arg(long)]
    rooms: Option<usize>,
    /// Room side length.
    #[arg(long)]
    room_size: Option<usize>,
    /// Taxi grid side length.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Temperature of the environment.
    #[arg(long)]
    eta: Option<f64>,
    /// MAE space: z or v.
    #[arg(long)]
    report_space: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algorithm: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
    /// Bisection tolerance on the exponentiated gain.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    algorithm: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    alpha_decay_c: Option<f64>,
    #[arg(long)]
    alpha_exit0: Option<f64>,
    #[arg(long)]
    alpha_exit_decay_c: Option<f64>,
    #[arg(long)]
    alpha_gain0: Option<f64>,
    #[arg(long)]
    alpha_gain_decay_c: Option<f64>,
}

fn base_config(common: &CommonArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(space) = &common.report_space {
        cfg.report_space = space.parse::<ReportSpace>()?;
    }
    let kind = match (&common.env, &common.env_file) {
        (_, Some(_)) => Some("file"),
        (Some(k), None) => Some(k.as_str()),
        (None, None) => None,
    };
    match kind {
        Some("nroom") if !matches!(cfg.env, EnvConfig::Nroom(_)) => cfg.env = EnvConfig::Nroom(NRoomSpec::square(2, 5)),
        Some("taxi") if !matches!(cfg.env, EnvConfig::Taxi(_)) => cfg.env = EnvConfig::Taxi(TaxiSpec::default()),
        Some("file") => {
            let path = common
                .env_file
                .clone()
                .or_else(|| match &cfg.env {
                    EnvConfig::File { path } => Some(path.clone()),
                    _ => None,
                })
                .ok_or_else(|| Error::Config("--env file needs --env-file <path>".into()))?;
            cfg.env = EnvConfig::File { path };
        }
        Some("nroom") | Some("taxi") | None => {}
        Some(other) => return Err(Error::Config(format!("unknown environment `{other}` (expected nroom, taxi, or file)"))),
    }
    match &mut cfg.env {
        EnvConfig::Nroom(spec) => {
            if let Some(r) = common.rooms {
                spec.room_rows = r;
                spec.room_cols = r;
            }
            if let Some(m) = common.room_size {
                spec.room_size = m;
            }
            if let Some(eta) = common.eta {
                spec.eta = eta;
            }
        }
        EnvConfig::Taxi(spec) => {
            if let Some(g) = common.grid_size {
                spec.grid_size = g;
            }
            if let Some(eta) = common.eta {
                spec.eta = eta;
            }
        }
        EnvConfig::File { .. } => {
            if common.eta.is_some() {
                return Err(Error::Config("--eta cannot override a file environment".into()));
            }
        }
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn select_algorithm(cfg: &mut ExperimentConfig, flag: Option<String>, solver: bool) -> Result<(), Error> {
    if let Some(a) = flag {
        cfg.algorithm = a.parse::<Algorithm>()?;
    } else if cfg.algorithm.is_solver() != solver {
        cfg.algorithm = if solver { Algorithm::HierEigen } else { Algorithm::HierOnline };
    }
    if cfg.algorithm.is_solver() != solver {
        let which = if solver { "solve" } else { "train" };
        return Err(Error::Config(format!("`{}` is not available under `{which}`", cfg.algorithm)));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve(args) => {
            let mut cfg = base_config(&args.common)?;
            select_algorithm(&mut cfg, args.algorithm, true)?;
            set(&mut cfg.solver.epsilon, args.epsilon);
            let report = run_experiment(&cfg)?;
            print!("{}", report.summary());
        }
        Command::Train(args) => {
            let mut cfg = base_config(&args.common)?;
            select_algorithm(&mut cfg, args.algorithm, false)?;
            set(&mut cfg.seeds, args.seeds);
            let l = &mut cfg.learner;
            set(&mut l.steps, args.steps);
            set(&mut l.eval_every, args.eval_every);
            set(&mut l.lambda, args.lambda);
            set(&mut l.alpha0, args.alpha0);
            set(&mut l.alpha_decay_c, args.alpha_decay_c);
            set(&mut l.alpha_exit0, args.alpha_exit0);
            set(&mut l.alpha_exit_decay_c, args.alpha_exit_decay_c);
            set(&mut l.alpha_gain0, args.alpha_gain0);
            set(&mut l.alpha_gain_decay_c, args.alpha_gain_decay_c);
            let report = run_experiment(&cfg)?;
            print!("{}", report.summary());
        }
        Command::Oracle(common) => {
            let cfg = base_config(&common)?;
            let env = load_env(&cfg.env)?;
            let oracle = load_or_compute_oracle(&cfg.out, &env)?;
            println!("environment {}", oracle.environment);
            println!("reference_state {}", env.almdp.labels()[oracle.reference_state]);
            println!("gamma {}", oracle.gamma);
            println!("rho {}", oracle.rho);
            println!("written {}", cfg.out.join(halmdp::bench::ORACLE_FILE).display());
        }
        Command::Report { dirs } => print!("{}", report(&dirs)?),
        Command::Export { common, file } => {
            let cfg = base_config(&common)?;
            let env = load_env(&cfg.env)?;
            let doc = EnvironmentDocument {
                name: env.name.clone(),
                almdp: AlmdpDocument::from_almdp(&env.almdp),
                partition: env
                    .partition
                    .as_ref()
                    .map(|(p, d)| PartitionDocument::from_parts(&env.almdp, p, d.as_ref())),
                start: Some(env.almdp.labels()[env.start].clone()),
            };
            write_json(&file, &doc)?;
            println!("wrote {} ({} states)", file.display(), env.almdp.n_states());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::UnknownLabel(_) | Error::InvalidModel(_) | Error::Decomposition(_) => 2,
        Error::NotConverged { .. } | Error::Bracket { .. } | Error::NoUniqueSolution(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
