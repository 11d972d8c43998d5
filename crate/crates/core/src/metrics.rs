//! Regret traces and their summaries.

use serde::{Deserialize, Serialize};

use crate::env::{Draw, Environment};
use crate::error::MetricsError;

/// Multiplier of the standard error in reported confidence bands.
pub const Z_95: f64 = 1.96;

/// `f_*(x) - f_a(x)` at the round's context.
pub fn instantaneous_regret(env: &Environment, draw: &Draw, arm: usize) -> f64 {
    // The difference is nonnegative by construction; max() only guards -0.0.
    (env.optimal_value(draw) - env.mean_reward(arm, draw)).max(0.0)
}

/// One round of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: u64,
    pub batch: usize,
    pub context: Vec<f64>,
    pub chosen_arm: usize,
    pub optimal_arm: usize,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

/// Per-round regret of one run, with the running total.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    steps: Vec<Step>,
}

impl RegretTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            steps: Vec::with_capacity(n),
        }
    }

    /// Appends a round; `cum_regret` is computed from the previous step.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        t: u64,
        batch: usize,
        context: Vec<f64>,
        chosen_arm: usize,
        optimal_arm: usize,
        reward: f64,
        inst_regret: f64,
    ) {
        let cum_regret = self.final_regret() + inst_regret;
        self.steps.push(Step {
            t,
            batch,
            context,
            chosen_arm,
            optimal_arm,
            reward,
            inst_regret,
            cum_regret,
        });
    }

    /// Rebuilds a trace from stored steps (e.g. parsed back from CSV).
    pub fn from_steps(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }

    /// Cumulative regret after round `t` (1-based); 0 for `t = 0`.
    pub fn cumulative_at(&self, t: u64) -> f64 {
        match t {
            0 => 0.0,
            _ => self.steps[t as usize - 1].cum_regret,
        }
    }
}

/// Realized regret split by (arm, batch).
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTable {
    /// `cells[arm][batch - 1]`.
    pub cells: Vec<Vec<f64>>,
}

impl RegretTable {
    pub fn get(&self, arm: usize, batch: usize) -> f64 {
        self.cells[arm][batch - 1]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }
}

/// Sums each round's regret into the cell of its chosen arm and batch.
pub fn per_arm_batch_regret(trace: &RegretTrace, num_arms: usize, num_batches: usize) -> RegretTable {
    let mut cells = vec![vec![0.0; num_batches]; num_arms];
    for s in trace.steps() {
        cells[s.chosen_arm][s.batch - 1] += s.inst_regret;
    }
    RegretTable { cells }
}

/// Fraction of rounds in `(t - window, t]` whose chosen arm was not the
/// optimal one, for every `t` from `window` to the end of the trace.
pub fn rolling_error(trace: &RegretTrace, window: usize) -> Result<Vec<(u64, f64)>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let steps = trace.steps();
    if window > steps.len() {
        return Err(MetricsError::WindowTooLong {
            window,
            len: steps.len(),
        });
    }
    let wrong = |s: &Step| usize::from(s.chosen_arm != s.optimal_arm);
    let mut errors: usize = steps[..window].iter().map(wrong).sum();
    let mut out = Vec::with_capacity(steps.len() - window + 1);
    out.push((steps[window - 1].t, errors as f64 / window as f64));
    for i in window..steps.len() {
        errors = errors + wrong(&steps[i]) - wrong(&steps[i - window]);
        out.push((steps[i].t, errors as f64 / window as f64));
    }
    Ok(out)
}

/// Pointwise mean and `1.96 * standard error` across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarySeries {
    pub checkpoints: Vec<u64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

fn check_ragged(series: &[Vec<f64>], expected: usize) -> Result<(), MetricsError> {
    match series.iter().position(|s| s.len() != expected) {
        Some(run) => Err(MetricsError::Ragged {
            run,
            found: series[run].len(),
            expected,
        }),
        None => Ok(()),
    }
}

/// Pointwise mean over runs, for when there are too few runs for a band.
pub fn mean_series(series: &[Vec<f64>], checkpoints: &[u64]) -> Result<Vec<f64>, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::TooFewRuns(0));
    }
    check_ragged(series, checkpoints.len())?;
    Ok((0..checkpoints.len())
        .map(|i| sorted(series.iter().map(|s| s[i])).iter().sum::<f64>() / series.len() as f64)
        .collect())
}

/// Mean and half-width at each checkpoint. Values are summed in sorted
/// order, so the result does not depend on the order of the runs.
pub fn aggregate_runs(series: &[Vec<f64>], checkpoints: &[u64]) -> Result<SummarySeries, MetricsError> {
    let n = series.len();
    if n < 2 {
        return Err(MetricsError::TooFewRuns(n));
    }
    check_ragged(series, checkpoints.len())?;
    let mut mean = Vec::with_capacity(checkpoints.len());
    let mut half_width = Vec::with_capacity(checkpoints.len());
    for i in 0..checkpoints.len() {
        let values = sorted(series.iter().map(|s| s[i]));
        let m = values.iter().sum::<f64>() / n as f64;
        let ss = sorted(values.iter().map(|v| (v - m) * (v - m))).iter().sum::<f64>();
        let sd = (ss / (n - 1) as f64).sqrt();
        mean.push(m);
        half_width.push(Z_95 * sd / (n as f64).sqrt());
    }
    Ok(SummarySeries {
        checkpoints: checkpoints.to_vec(),
        mean,
        half_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_setting2;
    use crate::knn::Context;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_from(rows: &[(usize, usize, usize, f64)]) -> RegretTrace {
        let mut tr = RegretTrace::new();
        for (i, &(batch, chosen, optimal, regret)) in rows.iter().enumerate() {
            tr.push(i as u64 + 1, batch, vec![0.0], chosen, optimal, 0.0, regret);
        }
        tr
    }

    fn random_trace(seed: u64, len: usize, arms: usize, batches: usize) -> RegretTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<_> = (0..len)
            .map(|i| {
                let chosen = rng.random_range(0..arms);
                let optimal = rng.random_range(0..arms);
                let regret = if chosen == optimal { 0.0 } else { rng.random::<f64>() };
                (1 + i * batches / len, chosen, optimal, regret)
            })
            .collect();
        trace_from(&rows)
    }

    #[test]
    fn regret_values() {
        let env: Environment = make_setting2(2, 0.0).unwrap().into();
        let origin = Draw::point(Context::new(vec![0.0, 0.0]).unwrap());
        assert_eq!(instantaneous_regret(&env, &origin, 1), 0.0);
        assert_eq!(instantaneous_regret(&env, &origin, 0), 0.5);
        let ds = crate::env::DatasetEnv::from_rows(
            vec![vec![0.0], vec![1.0]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let env: Environment = ds.into();
        let row0 = Draw {
            context: Context::new(vec![0.0]).unwrap(),
            row: Some(0),
        };
        assert_eq!(instantaneous_regret(&env, &row0, 1), 1.0);
        assert_eq!(instantaneous_regret(&env, &row0, 0), 0.0);
    }

    #[test]
    fn cumulative_is_prefix_sum() {
        let tr = trace_from(&[(1, 0, 1, 0.5), (1, 1, 1, 0.0), (2, 0, 1, 0.25)]);
        let cums: Vec<f64> = tr.steps().iter().map(|s| s.cum_regret).collect();
        assert_eq!(cums, vec![0.5, 0.5, 0.75]);
        assert_eq!(tr.cumulative_at(0), 0.0);
        assert_eq!(tr.cumulative_at(2), 0.5);
    }

    #[test]
    fn single_cell_table() {
        let tr = trace_from(&[(1, 1, 0, 0.3), (1, 1, 0, 0.2)]);
        let table = per_arm_batch_regret(&tr, 2, 1);
        assert_eq!(table.get(1, 1), 0.5);
        assert_eq!(table.get(0, 1), 0.0);
    }

    #[test]
    fn table_matches_regrouping() {
        let tr = random_trace(1, 100, 3, 4);
        let table = per_arm_batch_regret(&tr, 3, 4);
        for arm in 0..3 {
            for batch in 1..=4 {
                let brute: f64 = tr
                    .steps()
                    .iter()
                    .filter(|s| s.chosen_arm == arm && s.batch == batch)
                    .map(|s| s.inst_regret)
                    .sum();
                assert!((table.get(arm, batch) - brute).abs() < 1e-12);
            }
        }
        assert!((table.total() - tr.final_regret()).abs() <= 1e-9 * tr.final_regret());
    }

    #[test]
    fn rolling_error_examples() {
        let tr = trace_from(&[(1, 0, 0, 0.0); 5]);
        assert!(rolling_error(&tr, 2).unwrap().iter().all(|&(_, e)| e == 0.0));
        let alt: Vec<_> = (0..10).map(|i| (1, i % 2, 0, 0.0)).collect();
        let tr = trace_from(&alt);
        let r = rolling_error(&tr, 2).unwrap();
        assert_eq!(r.len(), 9);
        assert!(r.iter().all(|&(_, e)| e == 0.5));
        assert_eq!(r[0].0, 2);
        assert_eq!(rolling_error(&tr, 0), Err(MetricsError::ZeroWindow));
        assert!(rolling_error(&tr, 11).is_err());
    }

    #[test]
    fn rolling_error_matches_recount() {
        let tr = random_trace(7, 300, 2, 3);
        let window = 17;
        let fast = rolling_error(&tr, window).unwrap();
        for (i, &(t, e)) in fast.iter().enumerate() {
            let end = i + window;
            let wrong = tr.steps()[end - window..end]
                .iter()
                .filter(|s| s.chosen_arm != s.optimal_arm)
                .count();
            assert_eq!(t, tr.steps()[end - 1].t);
            assert_eq!(e, wrong as f64 / window as f64);
        }
    }

    #[test]
    fn aggregate_examples() {
        let same = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        let s = aggregate_runs(&same, &[1, 2]).unwrap();
        assert_eq!(s.half_width, vec![0.0, 0.0]);
        let s = aggregate_runs(&[vec![0.0], vec![2.0]], &[5]).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert!((s.half_width[0] - 1.96).abs() < 1e-12);
        assert_eq!(aggregate_runs(&[vec![1.0]], &[1]), Err(MetricsError::TooFewRuns(1)));
        assert!(matches!(
            aggregate_runs(&[vec![1.0], vec![1.0, 2.0]], &[1]),
            Err(MetricsError::Ragged { run: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn aggregate_ignores_run_order(
            runs in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..8),
            rot in 0usize..8,
        ) {
            let mut shuffled = runs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let cp = [1, 2, 3, 4];
            prop_assert_eq!(aggregate_runs(&runs, &cp).unwrap(), aggregate_runs(&shuffled, &cp).unwrap());
        }

        #[test]
        fn trace_invariants(seed in 0u64..1000, len in 1usize..200, window in 1usize..50) {
            let tr = random_trace(seed, len, 3, 2);
            prop_assert!(tr.steps().windows(2).all(|w| w[0].cum_regret <= w[1].cum_regret));
            let table = per_arm_batch_regret(&tr, 3, 2);
            prop_assert!((table.total() - tr.final_regret()).abs() <= 1e-9 * tr.final_regret().max(1.0));
            if window <= len {
                for (_, e) in rolling_error(&tr, window).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&e));
                }
            }
        }
    }
}
