//! The batched-feedback contract shared by every policy.
//!
//! A policy picks one arm per round, but rewards only become usable at batch
//! endpoints: [`BatchedPolicy::record`] buffers an observation and
//! [`BatchedPolicy::commit_batch`] is the single place where buffered data
//! reaches the estimator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::PolicyError;
use crate::knn::{Context, Sample};
use crate::schedule::BatchGrid;

pub trait BatchedPolicy {
    fn name(&self) -> &'static str;

    /// Chooses the arm for the next round and advances the round counter.
    fn select_action(&mut self, x: &Context) -> Result<usize, PolicyError>;

    /// Buffers the reward of a round from the current batch.
    fn record(&mut self, sample: Sample) -> Result<(), PolicyError>;

    /// Closes the current batch once its last round has been played.
    fn commit_batch(&mut self) -> Result<(), PolicyError>;
}

/// Round and batch bookkeeping against a fixed grid.
#[derive(Debug, Clone)]
pub struct BatchClock {
    grid: BatchGrid,
    batch: usize,
    round: u64,
    seen: Vec<bool>,
}

impl BatchClock {
    pub fn new(grid: BatchGrid) -> Self {
        let first = grid.endpoint(1) as usize;
        Self {
            grid,
            batch: 1,
            round: 0,
            seen: vec![false; first],
        }
    }

    pub fn grid(&self) -> &BatchGrid {
        &self.grid
    }

    /// Current batch `m`, 1-based. Equals `M + 1` after the last commit.
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Rounds played so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn finished(&self) -> bool {
        self.batch > self.grid.num_batches()
    }

    /// `t_{m-1}`: the last round whose data is visible to the estimator.
    pub fn frozen_horizon(&self) -> u64 {
        self.grid
            .endpoint((self.batch - 1).min(self.grid.num_batches()))
    }

    /// `(t_{m-1}, t_m]` of the current batch.
    pub fn interval(&self) -> Result<(u64, u64), PolicyError> {
        if self.finished() {
            return Err(PolicyError::Finished(self.grid.num_batches()));
        }
        Ok((self.grid.endpoint(self.batch - 1), self.grid.endpoint(self.batch)))
    }

    /// Starts the next round and returns its index.
    pub fn advance(&mut self) -> Result<u64, PolicyError> {
        let (start, end) = self.interval()?;
        let next = self.round + 1;
        if next > end {
            return Err(PolicyError::OutsideBatch {
                time: next,
                start,
                end,
            });
        }
        self.round = next;
        Ok(next)
    }

    /// Accepts `time` for recording: it must be a played round of the
    /// current batch that has not been recorded yet.
    pub fn check_record(&mut self, time: u64) -> Result<(), PolicyError> {
        let (start, end) = self.interval()?;
        if time <= start || time > end {
            return Err(PolicyError::OutsideBatch { time, start, end });
        }
        let slot = (time - start - 1) as usize;
        if self.seen[slot] {
            return Err(PolicyError::DuplicateRecord(time));
        }
        self.seen[slot] = true;
        Ok(())
    }

    pub fn commit(&mut self) -> Result<(), PolicyError> {
        let (_, end) = self.interval()?;
        if self.round != end {
            return Err(PolicyError::CommitMidBatch {
                batch: self.batch,
                round: self.round,
                end,
            });
        }
        self.batch += 1;
        let len = if self.finished() {
            0
        } else {
            (self.grid.endpoint(self.batch) - end) as usize
        };
        self.seen.clear();
        self.seen.resize(len, false);
        Ok(())
    }
}

/// Picks uniformly among `candidates`, drawing from `rng` only when there is
/// more than one.
pub(crate) fn break_tie(candidates: &[usize], rng: &mut ChaCha8Rng) -> usize {
    match candidates {
        [only] => *only,
        _ => candidates[rng.random_range(0..candidates.len())],
    }
}

/// Ignores all feedback and pulls a uniformly random arm every round.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    num_arms: usize,
    clock: BatchClock,
    rng: ChaCha8Rng,
}

impl UniformRandom {
    pub fn new(num_arms: usize, grid: BatchGrid, rng: ChaCha8Rng) -> Result<Self, PolicyError> {
        if num_arms < 2 {
            return Err(PolicyError::Config(format!(
                "need at least 2 arms, got {num_arms}"
            )));
        }
        Ok(Self {
            num_arms,
            clock: BatchClock::new(grid),
            rng,
        })
    }
}

impl BatchedPolicy for UniformRandom {
    fn name(&self) -> &'static str {
        "uniform_random"
    }

    fn select_action(&mut self, _x: &Context) -> Result<usize, PolicyError> {
        self.clock.advance()?;
        Ok(self.rng.random_range(0..self.num_arms))
    }

    fn record(&mut self, sample: Sample) -> Result<(), PolicyError> {
        self.clock.check_record(sample.time)
    }

    fn commit_batch(&mut self) -> Result<(), PolicyError> {
        self.clock.commit()
    }
}
