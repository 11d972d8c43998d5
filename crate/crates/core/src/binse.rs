//! Batched successive elimination over dyadic bins.
//!
//! Contexts are mapped affinely onto `[0, 1]^d` and routed to dyadic cells.
//! Each cell runs its own elimination bandit: arms are rotated least-pulled
//! first, and at every batch endpoint an arm is dropped when its upper
//! bound (plus a slack for within-cell variation of the means) falls below
//! another arm's lower bound. Cells that still hold several arms are then
//! split down to the next level of the schedule, and the children start
//! fresh with the parent's surviving arms.
//!
//! The level used in batch `m` is `ceil(log2(t_m^(1/(d+2))))`, so the cell
//! side shrinks like `t_m^(-1/(d+2))`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KnnError, PolicyError};
use crate::knn::{Context, Sample};
use crate::policy::{break_tie, BatchClock, BatchedPolicy};
use crate::schedule::BatchGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSeConfig {
    pub num_arms: usize,
    pub dim: usize,
    pub lipschitz: f64,
    pub sigma: f64,
    /// Per-coordinate bounds of the raw contexts.
    pub support: (f64, f64),
    pub tie_seed: u64,
}

impl BinSeConfig {
    fn validate(&self) -> Result<(), PolicyError> {
        if self.num_arms < 2 || self.num_arms > u32::MAX as usize {
            return Err(PolicyError::Config(format!(
                "need at least 2 arms, got {}",
                self.num_arms
            )));
        }
        if self.dim == 0 {
            return Err(PolicyError::Config("dimension must be at least 1".into()));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(PolicyError::Config("lipschitz constant must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(PolicyError::Config("sigma must be nonnegative".into()));
        }
        let (lo, hi) = self.support;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PolicyError::Config(format!(
                "support ({lo}, {hi}) is not a proper interval"
            )));
        }
        Ok(())
    }
}

/// Identifies a dyadic cell: its level and integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinId {
    pub level: u32,
    pub cell: Vec<u32>,
}

impl BinId {
    /// The cell containing this one at a coarser `level`.
    pub fn ancestor(&self, level: u32) -> BinId {
        assert!(level <= self.level);
        let shift = self.level - level;
        BinId {
            level,
            cell: self.cell.iter().map(|c| c >> shift).collect(),
        }
    }
}

/// The level-`level` dyadic cell containing `y` in `[0, 1]^d`.
///
/// Cells are half-open `[k 2^-l, (k+1) 2^-l)`, except that coordinate 1.0
/// belongs to the top cell.
pub fn bin_of(y: &[f64], level: u32) -> Result<BinId, PolicyError> {
    let side = (1u64 << level) as f64;
    let top = (1u64 << level) - 1;
    let cell = y
        .iter()
        .enumerate()
        .map(|(coord, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(PolicyError::OutOfSupport { coord, value: v });
            }
            Ok(((v * side).floor() as u64).min(top) as u32)
        })
        .collect::<Result<_, _>>()?;
    Ok(BinId { level, cell })
}

/// Bin level for each batch: `ceil(log2(t_m) / (d + 2))`.
pub fn level_schedule(grid: &BatchGrid, dim: usize) -> Vec<u32> {
    grid.endpoints()[1..]
        .iter()
        .map(|&t| {
            let l = ((t as f64).log2() / (dim as f64 + 2.0)).ceil();
            l.clamp(0.0, 30.0) as u32
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Bin {
    active: Vec<usize>,
    pulls: Vec<u64>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    child_level: Option<u32>,
}

impl Bin {
    fn new(active: Vec<usize>, num_arms: usize) -> Self {
        Self {
            active,
            pulls: vec![0; num_arms],
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            child_level: None,
        }
    }
}

/// The binned successive-elimination baseline.
#[derive(Debug, Clone)]
pub struct BinSe {
    cfg: BinSeConfig,
    clock: BatchClock,
    levels: Vec<u32>,
    bins: BTreeMap<BinId, Bin>,
    pending: Vec<(Sample, BinId)>,
    ties: ChaCha8Rng,
    log_term: f64,
}

impl BinSe {
    pub fn new(cfg: BinSeConfig, grid: BatchGrid) -> Result<Self, PolicyError> {
        Self::with_rng(cfg, grid, ChaCha8Rng::seed_from_u64(cfg.tie_seed))
    }

    pub fn with_rng(cfg: BinSeConfig, grid: BatchGrid, ties: ChaCha8Rng) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let levels = level_schedule(&grid, cfg.dim);
        let log_term = (2.0 * cfg.num_arms as f64 * grid.num_batches() as f64 * grid.horizon() as f64).ln();
        Ok(Self {
            cfg,
            clock: BatchClock::new(grid),
            levels,
            bins: BTreeMap::new(),
            pending: Vec::new(),
            ties,
            log_term,
        })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Affine map of a raw context onto `[0, 1]^d`.
    pub fn normalize(&self, x: &Context) -> Result<Vec<f64>, PolicyError> {
        if x.dim() != self.cfg.dim {
            return Err(KnnError::DimensionMismatch {
                expected: self.cfg.dim,
                found: x.dim(),
            }
            .into());
        }
        let (lo, hi) = self.cfg.support;
        Ok(x.coords().iter().map(|v| (v - lo) / (hi - lo)).collect())
    }

    fn current_level(&self) -> u32 {
        let m = self.clock.batch().min(self.levels.len());
        self.levels[m - 1]
    }

    /// Finds (creating on first visit) the leaf cell that owns `x`.
    fn route(&mut self, x: &Context) -> Result<BinId, PolicyError> {
        let y = self.normalize(x)?;
        let current = self.current_level();
        let mut level = self.levels[0];
        let mut inherited: Vec<usize> = (0..self.cfg.num_arms).collect();
        loop {
            let id = bin_of(&y, level)?;
            let num_arms = self.cfg.num_arms;
            let bin = self.bins.entry(id.clone()).or_insert_with(|| {
                let mut b = Bin::new(inherited.clone(), num_arms);
                // A region first reached late has skipped the refinements
                // it would have received.
                if level < current && b.active.len() > 1 {
                    b.child_level = Some(current);
                }
                b
            });
            match bin.child_level {
                Some(next) => {
                    inherited = bin.active.clone();
                    level = next;
                }
                None => return Ok(id),
            }
        }
    }

    /// Active arms of the leaf cell that currently owns `x`.
    pub fn active_arms(&mut self, x: &Context) -> Result<Vec<usize>, PolicyError> {
        let id = self.route(x)?;
        Ok(self.bins[&id].active.clone())
    }

    /// The leaf cell that currently owns `x`.
    pub fn leaf_of(&mut self, x: &Context) -> Result<BinId, PolicyError> {
        self.route(x)
    }

    fn eliminate(&self, bin: &mut Bin, level: u32) {
        if bin.active.len() < 2 || bin.active.iter().any(|&a| bin.counts[a] == 0) {
            return;
        }
        let slack = 2.0 * self.cfg.lipschitz * (self.cfg.dim as f64).sqrt() * (-(level as f64)).exp2();
        let var = 2.0 * self.cfg.sigma * self.cfg.sigma * self.log_term;
        let bounds: Vec<(usize, f64, f64)> = bin
            .active
            .iter()
            .map(|&a| {
                let n = bin.counts[a] as f64;
                (a, bin.sums[a] / n, (var / n).sqrt())
            })
            .collect();
        let best_lower = bounds
            .iter()
            .map(|&(_, mean, width)| mean - width)
            .fold(f64::NEG_INFINITY, f64::max);
        bin.active = bounds
            .iter()
            .filter(|&&(_, mean, width)| mean + width + slack >= best_lower)
            .map(|&(a, _, _)| a)
            .collect();
    }
}

impl BatchedPolicy for BinSe {
    fn name(&self) -> &'static str {
        "binse"
    }

    fn select_action(&mut self, x: &Context) -> Result<usize, PolicyError> {
        self.clock.interval()?;
        let id = self.route(x)?;
        self.clock.advance()?;
        let bin = self.bins.get_mut(&id).expect("routed bin exists");
        let fewest = bin.active.iter().map(|&a| bin.pulls[a]).min().expect("nonempty");
        let candidates: Vec<usize> = bin
            .active
            .iter()
            .copied()
            .filter(|&a| bin.pulls[a] == fewest)
            .collect();
        let arm = break_tie(&candidates, &mut self.ties);
        bin.pulls[arm] += 1;
        Ok(arm)
    }

    fn record(&mut self, sample: Sample) -> Result<(), PolicyError> {
        if sample.arm >= self.cfg.num_arms {
            return Err(KnnError::UnknownArm {
                arm: sample.arm,
                num_arms: self.cfg.num_arms,
            }
            .into());
        }
        let id = self.route(&sample.context)?;
        self.clock.check_record(sample.time)?;
        self.pending.push((sample, id));
        Ok(())
    }

    fn commit_batch(&mut self) -> Result<(), PolicyError> {
        self.clock.commit()?;
        self.pending.sort_by_key(|(s, _)| s.time);
        for (s, id) in self.pending.drain(..) {
            let bin = self.bins.get_mut(&id).expect("recorded bin exists");
            bin.counts[s.arm] += 1;
            bin.sums[s.arm] += s.reward;
        }
        let next_level = self.levels.get(self.clock.batch() - 1).copied();
        let leaves: Vec<BinId> = self
            .bins
            .iter()
            .filter(|(_, b)| b.child_level.is_none())
            .map(|(id, _)| id.clone())
            .collect();
        for id in leaves {
            let mut bin = self.bins.remove(&id).expect("leaf exists");
            self.eliminate(&mut bin, id.level);
            if let Some(next) = next_level {
                if bin.active.len() > 1 && next > id.level {
                    bin.child_level = Some(next);
                }
            }
            self.bins.insert(id, bin);
        }
        Ok(())
    }
}
