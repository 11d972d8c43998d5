//! Experiment orchestration: seeding, the batched round loop, replication
//! across runs, and summaries.
//!
//! Every run owns three independent random streams derived from
//! `(master_seed, run)`: contexts, reward noise, and tie-breaking. The
//! first two are shared by all algorithms on the same run index, so
//! algorithms are compared on identical context and noise sequences. The
//! tie-breaking stream is additionally keyed by the algorithm.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bank_ucb::{BankUcb, BankUcbConfig};
use crate::binse::{BinSe, BinSeConfig};
use crate::config::{Algorithm, EnvironmentSpec, ExperimentConfig};
use crate::env::{load_dataset, make_setting1, make_setting2, Draw, Environment};
use crate::error::{PolicyError, RunError};
use crate::knn::Sample;
use crate::metrics::{aggregate_runs, instantaneous_regret, mean_series, rolling_error, RegretTrace, SummarySeries};
use crate::policy::{BatchedPolicy, UniformRandom};
use crate::schedule::{make_grid, BatchGrid};

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "BANKUCB_WORKERS";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replication.
pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(run as u64))
}

/// The independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Contexts,
    Noise,
    Ties(Algorithm),
    /// Draws the random parts of the problem instance itself (bump centers).
    Instance,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Contexts => 0,
            Stream::Noise => 1,
            Stream::Instance => 2,
            Stream::Ties(a) => 16 + a.index(),
        }
    }
}

/// A ChaCha stream keyed by the run seed, with a distinct stream id per
/// purpose so no two purposes share keystream.
pub fn stream_rng(master_seed: u64, run: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(master_seed, run));
    rng.set_stream(stream.id());
    rng
}

/// The stream used for per-experiment (not per-run) randomness.
pub fn instance_rng(master_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed));
    rng.set_stream(Stream::Instance.id());
    rng
}

/// Order in which a batch's observations are handed to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    InOrder,
    /// Shuffled with a dedicated stream seeded by the value.
    Shuffled(u64),
}

/// Everything one (algorithm, run) pair produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub run: usize,
    pub trace: RegretTrace,
    /// Round index of every commit, in order.
    pub commit_times: Vec<u64>,
}

impl RunOutput {
    pub fn actions(&self) -> Vec<usize> {
        self.trace.steps().iter().map(|s| s.chosen_arm).collect()
    }
}

/// Plays `policy` through every batch of `grid` on the given contexts.
///
/// Rewards are drawn when an arm is pulled, but only handed to the policy
/// after the batch's last round, followed by a commit.
pub fn simulate(
    policy: &mut dyn BatchedPolicy,
    env: &Environment,
    grid: &BatchGrid,
    draws: &[Draw],
    noise: &mut ChaCha8Rng,
    delivery: Delivery,
    run: usize,
) -> Result<RunOutput, PolicyError> {
    let horizon = grid.horizon();
    assert!(draws.len() as u64 >= horizon, "need one context per round");
    let mut trace = RegretTrace::with_capacity(horizon as usize);
    let mut commit_times = Vec::with_capacity(grid.num_batches());
    for m in 1..=grid.num_batches() {
        let (start, end) = (grid.endpoint(m - 1), grid.endpoint(m));
        let mut observed = Vec::with_capacity((end - start) as usize);
        for t in start + 1..=end {
            let draw = &draws[t as usize - 1];
            let arm = policy.select_action(&draw.context)?;
            let reward = env.draw_reward(arm, draw, noise);
            trace.push(
                t,
                m,
                draw.context.coords().to_vec(),
                arm,
                env.optimal_arm(draw),
                reward,
                instantaneous_regret(env, draw, arm),
            );
            observed.push(Sample::new(draw.context.clone(), arm, reward, t));
        }
        if let Delivery::Shuffled(seed) = delivery {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            observed.shuffle(&mut rng);
        }
        for s in observed {
            policy.record(s)?;
        }
        policy.commit_batch()?;
        log::debug!("{} run {run}: committed batch {m} at t = {end}", policy.name());
        commit_times.push(end);
    }
    Ok(RunOutput {
        run,
        trace,
        commit_times,
    })
}

/// Builds the configured environment. Random parts of the instance are
/// drawn once per experiment from the master seed.
pub fn build_environment(cfg: &ExperimentConfig) -> Result<Environment, RunError> {
    Ok(match &cfg.environment {
        EnvironmentSpec::Setting1 { d, bumps, radius, .. } => {
            let height = cfg.bump_height().expect("setting1");
            let mut rng = instance_rng(cfg.master_seed);
            make_setting1(*d, *bumps, *radius, height, cfg.sigma, &mut rng)?.into()
        }
        EnvironmentSpec::Setting2 { d } => make_setting2(*d, cfg.sigma)?.into(),
        EnvironmentSpec::Dataset { path, .. } => {
            let opts = cfg.environment.dataset_options().expect("dataset")?;
            load_dataset(path, &opts)?.into()
        }
    })
}

/// Instantiates `algorithm` for one run.
pub fn make_policy(
    algorithm: Algorithm,
    cfg: &ExperimentConfig,
    env: &Environment,
    grid: &BatchGrid,
    run: usize,
) -> Result<Box<dyn BatchedPolicy + Send>, PolicyError> {
    let ties = stream_rng(cfg.master_seed, run, Stream::Ties(algorithm));
    Ok(match algorithm {
        Algorithm::BankUcb => Box::new(BankUcb::with_rng(
            BankUcbConfig {
                lipschitz: cfg.lipschitz,
                sigma: cfg.sigma,
                num_arms: env.num_arms(),
                dim: env.dim(),
                tie_seed: run_seed(cfg.master_seed, run),
            },
            grid.clone(),
            ties,
        )?),
        Algorithm::Binse => Box::new(BinSe::with_rng(
            BinSeConfig {
                num_arms: env.num_arms(),
                dim: env.dim(),
                lipschitz: cfg.lipschitz,
                sigma: cfg.sigma,
                support: env.support(),
                tie_seed: run_seed(cfg.master_seed, run),
            },
            grid.clone(),
            ties,
        )?),
        Algorithm::UniformRandom => Box::new(UniformRandom::new(env.num_arms(), grid.clone(), ties)?),
    })
}

/// Runs of one algorithm plus their cross-run summaries.
#[derive(Debug, Clone)]
pub struct AlgorithmResults {
    pub algorithm: Algorithm,
    /// Ordered by run index.
    pub runs: Vec<RunOutput>,
    pub checkpoints: Vec<u64>,
    /// Mean cumulative regret per checkpoint.
    pub mean_regret: Vec<f64>,
    /// `None` with a single run.
    pub regret_summary: Option<SummarySeries>,
    /// Checkpoints at or beyond the rolling window.
    pub rolling_checkpoints: Vec<u64>,
    pub mean_rolling_error: Vec<f64>,
    pub rolling_summary: Option<SummarySeries>,
}

impl AlgorithmResults {
    pub fn final_regrets(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.trace.final_regret()).collect()
    }

    pub fn mean_final_regret(&self) -> f64 {
        *self.mean_regret.last().unwrap_or(&0.0)
    }
}

/// The in-memory result of a whole experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub horizon: u64,
    pub grid: BatchGrid,
    pub rolling_window: usize,
    pub results: Vec<AlgorithmResults>,
}

impl ExperimentOutcome {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmResults> {
        self.results.iter().find(|r| r.algorithm == algorithm)
    }
}

/// Checkpoints `stride, 2 stride, ...` plus `T` itself.
pub fn checkpoints(horizon: u64, stride: u64) -> Vec<u64> {
    let mut cps: Vec<u64> = (1..)
        .map(|i| i * stride)
        .take_while(|&t| t <= horizon)
        .collect();
    if cps.last() != Some(&horizon) {
        cps.push(horizon);
    }
    cps
}

fn summarize(
    algorithm: Algorithm,
    runs: Vec<RunOutput>,
    cps: &[u64],
    window: usize,
) -> Result<AlgorithmResults, RunError> {
    let regret: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| cps.iter().map(|&t| r.trace.cumulative_at(t)).collect())
        .collect();
    let rolling_cps: Vec<u64> = cps.iter().copied().filter(|&t| t >= window as u64).collect();
    let rolling: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            let series = rolling_error(&r.trace, window)?;
            // series[i] ends at round window + i.
            Ok(rolling_cps
                .iter()
                .map(|&t| series[t as usize - window].1)
                .collect())
        })
        .collect::<Result<_, crate::error::MetricsError>>()?;
    let with_band = runs.len() >= 2;
    Ok(AlgorithmResults {
        algorithm,
        mean_regret: mean_series(&regret, cps)?,
        regret_summary: with_band.then(|| aggregate_runs(&regret, cps)).transpose()?,
        mean_rolling_error: mean_series(&rolling, &rolling_cps)?,
        rolling_summary: with_band
            .then(|| aggregate_runs(&rolling, &rolling_cps))
            .transpose()?,
        rolling_checkpoints: rolling_cps,
        checkpoints: cps.to_vec(),
        runs,
    })
}

fn worker_pool() -> Result<rayon::ThreadPool, RunError> {
    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))
}

/// Runs every configured algorithm for every run and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, RunError> {
    cfg.validate()?;
    let env = build_environment(cfg)?;
    let horizon = match env.fixed_horizon() {
        Some(rows) => {
            let needed = 2 * cfg.batches as u64;
            if rows < needed {
                return Err(RunError::DatasetTooShort {
                    rows: rows as usize,
                    needed,
                    batches: cfg.batches,
                });
            }
            rows
        }
        None => cfg.horizon.expect("validated"),
    };
    let grid = make_grid(horizon, cfg.batches, cfg.alpha, env.dim())?;
    log::info!("grid endpoints: {:?}", grid.endpoints());

    let pool = worker_pool()?;
    let per_run: Vec<Vec<RunOutput>> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let draws = env.contexts(horizon, &mut stream_rng(cfg.master_seed, run, Stream::Contexts));
                cfg.algorithms
                    .iter()
                    .map(|&alg| {
                        let mut policy = make_policy(alg, cfg, &env, &grid, run)?;
                        let mut noise = stream_rng(cfg.master_seed, run, Stream::Noise);
                        simulate(policy.as_mut(), &env, &grid, &draws, &mut noise, Delivery::InOrder, run)
                    })
                    .collect::<Result<Vec<_>, PolicyError>>()
            })
            .collect::<Result<Vec<_>, PolicyError>>()
    })?;

    let mut by_alg: BTreeMap<usize, Vec<RunOutput>> = BTreeMap::new();
    for outputs in per_run {
        for (i, out) in outputs.into_iter().enumerate() {
            by_alg.entry(i).or_default().push(out);
        }
    }
    let cps = checkpoints(horizon, cfg.checkpoint_stride_for(horizon));
    let window = cfg.rolling_window_for(horizon);
    let results = by_alg
        .into_iter()
        .map(|(i, runs)| summarize(cfg.algorithms[i], runs, &cps, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        environment: env,
        horizon,
        grid,
        rolling_window: window,
        results,
    })
}
