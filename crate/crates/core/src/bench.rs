//! Experiment harness: builds or loads an environment, runs one algorithm
//! over a list of seeds, and writes `results.csv` and `summary.txt`.

use crate::almdp::{
    default_gamma_hi, relative_value_iteration, relative_value_iteration_traced, solve_flat_binary_search_traced, Almdp,
};
use crate::envs::{build_nroom, build_taxi, NRoomSpec, TaxiSpec};
use crate::error::{Error, Result};
use crate::format::{read_json, write_json, AlmdpDocument, EnvironmentDocument};
use crate::hierarchy::{
    algorithm1_eigenvector_traced, ClassDeclarations, Decomposition, EigenConfig, PartitionSpec, RepresentationSize,
};
use crate::learner::{run_flat_learner, LearnerConfig};
use crate::online::run_online_learner_decomposed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const ORACLE_FILE: &str = "oracle.json";
/// Convergence tolerance of the MAE oracle.
pub const ORACLE_TOL: f64 = 1e-12;
const ORACLE_MAX_ITER: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FlatRvi,
    FlatBisect,
    HierEigen,
    FlatTd,
    HierOnline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FlatRvi,
        Algorithm::FlatBisect,
        Algorithm::HierEigen,
        Algorithm::FlatTd,
        Algorithm::HierOnline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FlatRvi => "flat-rvi",
            Algorithm::FlatBisect => "flat-bisect",
            Algorithm::HierEigen => "hier-eigen",
            Algorithm::FlatTd => "flat-td",
            Algorithm::HierOnline => "hier-online",
        }
    }

    /// Solvers are deterministic and run once regardless of seeds.
    pub fn is_solver(self) -> bool {
        matches!(self, Algorithm::FlatRvi | Algorithm::FlatBisect | Algorithm::HierEigen)
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Algorithm::HierEigen | Algorithm::HierOnline)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected one of flat-rvi, flat-bisect, hier-eigen, flat-td, hier-online)")))
    }
}

/// Space in which MAE is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSpace {
    /// Desirabilities normalized so that `z(s*) = 1`.
    #[default]
    Z,
    /// Values `ln z / η` shifted so that `v(s*) = 0`.
    V,
}

impl FromStr for ReportSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" => Ok(ReportSpace::Z),
            "v" => Ok(ReportSpace::V),
            _ => Err(Error::Config(format!("unknown report space `{s}` (expected z or v)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Nroom(NRoomSpec),
    Taxi(TaxiSpec),
    /// A JSON environment document.
    File { path: PathBuf },
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Nroom(NRoomSpec::square(2, 5))
    }
}

/// Solver settings. `gamma_hi` defaults to `e^{η max R}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub gamma_lo: f64,
    pub gamma_hi: Option<f64>,
    /// Residual tolerance of `flat-rvi`.
    pub tol: f64,
    pub max_iter: usize,
    /// `flat-rvi` writes a row every this many sweeps.
    pub eval_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-8,
            gamma_lo: 0.0,
            gamma_hi: None,
            tol: 1e-10,
            max_iter: 10_000_000,
            eval_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub report_space: ReportSpace,
    pub env: EnvConfig,
    pub solver: SolverConfig,
    /// `eta` here is ignored: learners use the environment's `η`.
    pub learner: LearnerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::HierOnline,
            out: PathBuf::from("results"),
            seeds: (0..5).collect(),
            report_space: ReportSpace::Z,
            env: EnvConfig::default(),
            solver: SolverConfig::default(),
            learner: LearnerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithm.is_solver() {
            if !(self.solver.epsilon > 0.0) {
                return Err(Error::Config(format!(
                    "solver.epsilon must be positive, got {}",
                    self.solver.epsilon
                )));
            }
            if self.solver.eval_every == 0 {
                return Err(Error::Config("solver.eval_every must be positive".into()));
            }
        } else {
            if self.seeds.is_empty() {
                return Err(Error::Config("learners need at least one seed in `seeds`".into()));
            }
            self.learner.validate()?;
        }
        Ok(())
    }
}

/// An environment ready to run: the model, an optional decomposition, the
/// learner start state, and the normalization state `s*`.
#[derive(Debug, Clone)]
pub struct LoadedEnv {
    pub name: String,
    pub almdp: Almdp,
    pub partition: Option<(PartitionSpec, Option<ClassDeclarations>)>,
    pub start: usize,
    pub reference_state: usize,
}

impl LoadedEnv {
    pub fn decomposition(&self) -> Result<Decomposition> {
        let Some((partition, declarations)) = &self.partition else {
            return Err(Error::Config(format!(
                "environment `{}` has no partition; hierarchical algorithms need one",
                self.name
            )));
        };
        let declarations = match declarations {
            Some(d) => d.clone(),
            None => ClassDeclarations::induced(&self.almdp, partition)?,
        };
        Decomposition::new(self.almdp.clone(), partition.clone(), declarations)
    }
}

pub fn load_env(config: &EnvConfig) -> Result<LoadedEnv> {
    let bundle = match config {
        EnvConfig::Nroom(spec) => build_nroom(spec)?,
        EnvConfig::Taxi(spec) => build_taxi(spec)?,
        EnvConfig::File { path } => return load_env_file(path),
    };
    Ok(LoadedEnv {
        name: bundle.name,
        almdp: bundle.almdp,
        start: bundle.restart_state,
        reference_state: bundle.oracle_reference_state,
        partition: Some((bundle.partition, Some(bundle.class_declarations))),
    })
}

fn load_env_file(path: &Path) -> Result<LoadedEnv> {
    let doc: EnvironmentDocument = read_json(path)?;
    let almdp = doc.almdp.to_almdp()?;
    let start = match &doc.start {
        Some(label) => almdp.index_of(label).ok_or_else(|| Error::UnknownLabel(label.clone()))?,
        None => 0,
    };
    let partition = doc.partition.as_ref().map(|p| p.to_parts(&almdp)).transpose()?;
    let mut env = LoadedEnv {
        name: if doc.name.is_empty() {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            doc.name.clone()
        },
        almdp,
        partition,
        start,
        reference_state: 0,
    };
    if env.partition.is_some() {
        env.reference_state = env.decomposition()?.reference_state();
    }
    Ok(env)
}

/// Oracle values over all states, normalized at `s*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub environment: String,
    pub reference_state: usize,
    pub tol: f64,
    pub gamma: f64,
    pub rho: f64,
    pub z: Vec<f64>,
    /// The model the oracle was computed for; a cache hit requires equality.
    pub model: AlmdpDocument,
}

pub fn compute_oracle(env: &LoadedEnv) -> Result<Oracle> {
    let (z, gain) = relative_value_iteration(&env.almdp, env.reference_state, ORACLE_TOL, ORACLE_MAX_ITER)?;
    Ok(Oracle {
        environment: env.name.clone(),
        reference_state: env.reference_state,
        tol: ORACLE_TOL,
        gamma: gain.gamma_hat,
        rho: gain.rho_hat,
        z: z.normalized_at(env.reference_state).into_vec(),
        model: AlmdpDocument::from_almdp(&env.almdp),
    })
}

/// Reads `oracle.json` from `dir` when it matches `env`, otherwise computes
/// and stores it.
pub fn load_or_compute_oracle(dir: &Path, env: &LoadedEnv) -> Result<Oracle> {
    let path = dir.join(ORACLE_FILE);
    if path.exists() {
        if let Ok(cached) = read_json::<Oracle>(&path) {
            if cached.reference_state == env.reference_state
                && cached.tol == ORACLE_TOL
                && cached.model == AlmdpDocument::from_almdp(&env.almdp)
            {
                return Ok(cached);
            }
        }
    }
    let oracle = compute_oracle(env)?;
    std::fs::create_dir_all(dir)?;
    write_json(&path, &oracle)?;
    Ok(oracle)
}

/// `(1/|S|) Σ_s |ẑ(s) − z(s)|` after normalizing both tables at `s*`.
pub fn compute_mae(z_hat: &[f64], z_oracle: &[f64], reference_state: usize) -> Result<f64> {
    compute_mae_in(z_hat, z_oracle, reference_state, ReportSpace::Z, 1.0)
}

/// MAE in the chosen space. In v-space both tables are mapped to
/// `ln z / η` and shifted to vanish at `s*`.
pub fn compute_mae_in(z_hat: &[f64], z_oracle: &[f64], reference_state: usize, space: ReportSpace, eta: f64) -> Result<f64> {
    if z_hat.len() != z_oracle.len() {
        return Err(Error::Dimension {
            expected: z_oracle.len(),
            found: z_hat.len(),
        });
    }
    if reference_state >= z_hat.len() {
        return Err(Error::Dimension {
            expected: reference_state + 1,
            found: z_hat.len(),
        });
    }
    let (hr, or) = (z_hat[reference_state], z_oracle[reference_state]);
    let total: f64 = match space {
        ReportSpace::Z => z_hat.iter().zip(z_oracle).map(|(a, b)| (a / hr - b / or).abs()).sum(),
        ReportSpace::V => z_hat
            .iter()
            .zip(z_oracle)
            .map(|(a, b)| ((a / hr).ln() / eta - (b / or).ln() / eta).abs())
            .sum(),
    };
    Ok(total / z_hat.len() as f64)
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub seed: u64,
    pub step: u64,
    pub mae: f64,
    pub rho_hat: f64,
}

/// Mean and sample standard deviation of the final MAE over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl FinalStats {
    /// Uses the last row of every seed, in order of first appearance.
    pub fn from_points(points: &[CurvePoint]) -> Self {
        let mut seeds: Vec<u64> = Vec::new();
        let mut finals: Vec<f64> = Vec::new();
        for p in points {
            match seeds.iter().position(|&s| s == p.seed) {
                Some(i) => finals[i] = p.mae,
                None => {
                    seeds.push(p.seed);
                    finals.push(p.mae);
                }
            }
        }
        let n = finals.len();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        FinalStats { n, mean, std }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub algorithm: Algorithm,
    pub environment: String,
    pub points: Vec<CurvePoint>,
    pub stats: FinalStats,
    pub oracle_gamma: f64,
    pub representation_size: Option<RepresentationSize>,
}

impl ExperimentReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "algorithm {}\nenvironment {}\nseeds {}\nfinal_mae_mean {}\nfinal_mae_std {}\noracle_gamma {}\n",
            self.algorithm, self.environment, self.stats.n, self.stats.mean, self.stats.std, self.oracle_gamma
        );
        if let Some(size) = self.representation_size {
            s.push_str(&format!("representation_size {size}\n"));
        }
        s
    }
}

fn run_solver(config: &ExperimentConfig, env: &LoadedEnv, mae: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Vec<CurvePoint>> {
    let eta = env.almdp.eta();
    let seed = 0;
    let solver = &config.solver;
    let gamma_hi = solver.gamma_hi.unwrap_or_else(|| default_gamma_hi(&env.almdp));
    let mut points = Vec::new();
    match config.algorithm {
        Algorithm::FlatRvi => {
            let mut sweeps = 0;
            let (z, gain) = relative_value_iteration_traced(
                &env.almdp,
                env.reference_state,
                solver.tol,
                solver.max_iter,
                |it, z, gamma| {
                    sweeps = it;
                    if it % solver.eval_every == 0 {
                        points.push(CurvePoint {
                            seed,
                            step: it as u64,
                            mae: mae(z),
                            rho_hat: gamma.ln() / eta,
                        });
                    }
                },
            )?;
            if sweeps % solver.eval_every != 0 {
                points.push(CurvePoint {
                    seed,
                    step: sweeps as u64,
                    mae: mae(z.as_slice()),
                    rho_hat: gain.rho_hat,
                });
            }
        }
        Algorithm::FlatBisect => {
            solve_flat_binary_search_traced(
                &env.almdp,
                env.reference_state,
                solver.epsilon,
                solver.gamma_lo,
                gamma_hi,
                |step| {
                    points.push(CurvePoint {
                        seed,
                        step: step.iteration as u64,
                        mae: step.z.as_ref().map_or(f64::NAN, |z| mae(z.as_slice())),
                        rho_hat: step.gamma_hat.ln() / eta,
                    })
                },
            )?;
        }
        Algorithm::HierEigen => {
            let decomposition = env.decomposition()?;
            let eigen = EigenConfig {
                epsilon: solver.epsilon,
                gamma_lo: solver.gamma_lo,
                gamma_hi,
                ..Default::default()
            };
            algorithm1_eigenvector_traced(&decomposition, &eigen, |step| {
                points.push(CurvePoint {
                    seed,
                    step: step.iteration as u64,
                    mae: step.z.as_ref().map_or(f64::NAN, |z| mae(z.as_slice())),
                    rho_hat: step.gamma_hat.ln() / eta,
                })
            })?;
        }
        _ => unreachable!("learners are handled by run_learners"),
    }
    Ok(points)
}

fn run_learners(config: &ExperimentConfig, env: &LoadedEnv, mae: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Vec<CurvePoint>> {
    // A single-block partition has nothing to decompose: the hierarchical
    // learner degenerates to the flat one.
    let single_block = matches!(&env.partition, Some((p, _)) if p.n_blocks() == 1);
    let decomposition = match config.algorithm {
        Algorithm::HierOnline if !single_block => Some(env.decomposition()?),
        _ => None,
    };
    let runs: Vec<Result<Vec<CurvePoint>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let learner = LearnerConfig {
                seed,
                eta: env.almdp.eta(),
                ..config.learner.clone()
            };
            let curve = match &decomposition {
                Some(d) => run_online_learner_decomposed(d, env.start, &learner, mae)?,
                None => run_flat_learner(&env.almdp, env.start, &learner, mae)?,
            };
            Ok(curve
                .into_iter()
                .map(|c| CurvePoint {
                    seed,
                    step: c.step,
                    mae: c.mae,
                    rho_hat: c.rho_hat,
                })
                .collect())
        })
        .collect();
    let mut points = Vec::new();
    for run in runs {
        points.extend(run?);
    }
    Ok(points)
}

pub fn write_results(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for p in points {
        writer.serialize(p)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers != vec!["seed", "step", "mae", "rho_hat"] {
        return Err(Error::Parse(format!(
            "{}: expected header seed,step,mae,rho_hat",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Runs the configured algorithm and writes `results.csv`, `summary.txt`,
/// and the cached oracle into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let env = load_env(&config.env)?;
    std::fs::create_dir_all(&config.out)?;
    let oracle = load_or_compute_oracle(&config.out, &env)?;
    let (space, eta, reference) = (config.report_space, env.almdp.eta(), env.reference_state);
    let mae = |z: &[f64]| compute_mae_in(z, &oracle.z, reference, space, eta).unwrap_or(f64::NAN);
    let points = if config.algorithm.is_solver() {
        run_solver(config, &env, &mae)?
    } else {
        run_learners(config, &env, &mae)?
    };
    let representation_size = if config.algorithm.is_hierarchical() {
        Some(env.decomposition()?.representation_size())
    } else {
        None
    };
    let report = ExperimentReport {
        algorithm: config.algorithm,
        environment: env.name.clone(),
        stats: FinalStats::from_points(&points),
        points,
        oracle_gamma: oracle.gamma,
        representation_size,
    };
    write_results(&config.out.join(RESULTS_FILE), &report.points)?;
    let mut summary = std::fs::File::create(config.out.join(SUMMARY_FILE))?;
    summary.write_all(report.summary().as_bytes())?;
    Ok(report)
}

/// Per-directory digest used by `report`.
#[derive(Debug, Clone)]
pub struct RunDigest {
    pub dir: PathBuf,
    pub label: String,
    pub stats: FinalStats,
    /// Curve of the cross-seed mean MAE at each step shared by all seeds.
    pub mean_curve: Vec<(u64, f64)>,
}

pub fn digest_run(dir: &Path) -> Result<RunDigest> {
    let points = read_results(&dir.join(RESULTS_FILE))?;
    if points.is_empty() {
        return Err(Error::Parse(format!("{}: no rows", dir.join(RESULTS_FILE).display())));
    }
    let summary = std::fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap_or_default();
    let label = summary
        .lines()
        .find_map(|l| l.strip_prefix("algorithm "))
        .unwrap_or("?")
        .to_string();
    let mut seeds: Vec<u64> = points.iter().map(|p| p.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut steps: Vec<u64> = points.iter().map(|p| p.step).collect();
    steps.sort_unstable();
    steps.dedup();
    let mean_curve = steps
        .into_iter()
        .filter_map(|step| {
            let at: Vec<f64> = points.iter().filter(|p| p.step == step).map(|p| p.mae).collect();
            (at.len() == seeds.len()).then(|| (step, at.iter().sum::<f64>() / at.len() as f64))
        })
        .collect();
    Ok(RunDigest {
        dir: dir.to_path_buf(),
        label,
        stats: FinalStats::from_points(&points),
        mean_curve,
    })
}

/// Text table comparing runs: final MAE statistics and, relative to the
/// first run, the first step at which each run's mean curve reaches the
/// first run's final mean MAE.
pub fn report(dirs: &[PathBuf]) -> Result<String> {
    let digests = dirs.iter().map(|d| digest_run(d)).collect::<Result<Vec<_>>>()?;
    let mut out = String::from("run\talgorithm\tseeds\tfinal_mae_mean\tfinal_mae_std\tsteps_to_baseline\n");
    let baseline = digests.first().map(|d| d.stats.mean);
    for d in &digests {
        let reach = baseline
            .and_then(|b| d.mean_curve.iter().find(|(_, m)| *m <= b))
            .map_or("-".to_string(), |(s, _)| s.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.6e}\t{:.6e}\t{}\n",
            d.dir.display(),
            d.label,
            d.stats.n,
            d.stats.mean,
            d.stats.std,
            reach
        ));
    }
    Ok(out)
}
