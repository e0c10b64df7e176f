//! Pareto regret and fairness over the Pareto band.

use serde::{Deserialize, Serialize};

use crate::envs::{ContextOracle, Environment};
use crate::error::{Error, Result};
use crate::pcz::RoundRecord;
use crate::similarity_space::ArmGrid;

/// Number of fairness bins across the band.
pub const FAIRNESS_BINS: usize = 6;
/// Width of one fairness bin.
pub const BIN_WIDTH: f64 = 1.0 / 30.0;

/// Per-round regret increments and their running sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub seed: u64,
    pub increments: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretSeries {
    pub fn from_increments(seed: u64, increments: Vec<f64>) -> Self {
        let cumulative = increments
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        RegretSeries {
            seed,
            increments,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Cumulative regret after the last round, 0 for an empty series.
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Gap of each played arm against the grid front at its context.
///
/// Played arms need not lie on `grid`; a finer oracle grid measures the
/// discretization error of a coarser policy grid.
pub fn accumulate_regret(
    records: &[RoundRecord],
    env: &Environment,
    grid: &ArmGrid,
    seed: u64,
) -> Result<RegretSeries> {
    assert!(
        records.windows(2).all(|w| w[0].t < w[1].t),
        "records must be ordered by round"
    );
    let increments = records
        .iter()
        .map(|r| {
            let oracle = ContextOracle::new(env, &r.context, grid)?;
            Ok(oracle.gap(&env.mean_reward(&r.context, &r.arm)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegretSeries::from_increments(seed, increments))
}

/// Selection counts over the six band bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub counts: [u64; FAIRNESS_BINS],
    /// Counts over `pareto_selections`; all zero when nothing landed in the band.
    pub ratios: [f64; FAIRNESS_BINS],
    pub pareto_selections: u64,
}

impl FairnessReport {
    pub fn from_counts(counts: [u64; FAIRNESS_BINS]) -> Self {
        let pareto_selections = counts.iter().sum();
        let ratios = counts.map(|c| {
            if pareto_selections == 0 {
                0.0
            } else {
                c as f64 / pareto_selections as f64
            }
        });
        FairnessReport {
            counts,
            ratios,
            pareto_selections,
        }
    }

    /// Pools several reports by adding their counts.
    pub fn pooled<'a>(reports: impl IntoIterator<Item = &'a FairnessReport>) -> Self {
        let mut counts = [0u64; FAIRNESS_BINS];
        for r in reports {
            for (c, x) in counts.iter_mut().zip(r.counts) {
                *c += x;
            }
        }
        FairnessReport::from_counts(counts)
    }
}

/// Bin (0-based) of arm `y` at context `x`, or `None` outside the band
/// `[y1, y2]`. Bin 0 is closed on both sides, the rest are half-open
/// `(y1 + k/30, y1 + (k+1)/30]`.
pub fn fairness_bin(band: (f64, f64), y: f64) -> Option<usize> {
    let (y1, y2) = band;
    if y < y1 || y > y2 {
        return None;
    }
    let offset = y - y1;
    let k = (offset / BIN_WIDTH).ceil() as usize;
    // y2 - y1 is 6/30 up to rounding, so clamp the top edge into the last bin.
    Some(k.saturating_sub(1).min(FAIRNESS_BINS - 1))
}

/// Fairness over the records of one run. The environment must define a
/// Pareto band.
pub fn fairness_bins(records: &[RoundRecord], env: &Environment) -> Result<FairnessReport> {
    let mut counts = [0u64; FAIRNESS_BINS];
    for r in records {
        let band = env
            .pareto_band(r.context[0])
            .ok_or_else(|| Error::config("env", "fairness bins need an environment with a Pareto band"))?;
        if let Some(b) = fairness_bin(band, r.arm[0]) {
            counts[b] += 1;
        }
    }
    Ok(FairnessReport::from_counts(counts))
}

/// Pointwise mean and standard error across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub runs: usize,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl RegretSummary {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

/// Averages the cumulative curves of equally long runs. The standard error
/// uses the unbiased sample variance and is 0 for a single run.
pub fn summarize_runs(series: &[RegretSeries]) -> RegretSummary {
    assert!(!series.is_empty(), "no runs to summarize");
    let len = series[0].len();
    assert!(
        series.iter().all(|s| s.len() == len),
        "runs differ in length"
    );
    let n = series.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std_err = vec![0.0; len];
    for t in 0..len {
        let m = series.iter().map(|s| s.cumulative[t]).sum::<f64>() / n;
        mean[t] = m;
        if series.len() > 1 {
            let var = series
                .iter()
                .map(|s| (s.cumulative[t] - m).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            std_err[t] = (var / n).sqrt();
        }
    }
    RegretSummary {
        runs: series.len(),
        mean,
        std_err,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ridge_one_arm, ridge_two_arm, MeanSurface, Noise};
    use crate::pareto::RewardVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(t: u64, x: f64, y: f64) -> RoundRecord {
        RoundRecord {
            t,
            context: vec![x],
            arm: vec![y],
            arm_index: 0,
            ball_id: None,
            reward: RewardVector(vec![0.0, 0.0]),
            child_created: None,
            front_size: None,
        }
    }

    fn env() -> Environment {
        Environment::new(MeanSurface::AppendixD, Noise::None).unwrap()
    }

    #[test]
    fn on_front_play_has_zero_regret() {
        let grid = ArmGrid::new(101, 1).unwrap();
        let records: Vec<_> = (1..=50).map(|t| record(t, 0.5, 0.45)).collect();
        let s = accumulate_regret(&records, &env(), &grid, 0).unwrap();
        assert!(s.increments.iter().all(|&d| d == 0.0));
        assert_eq!(s.total(), 0.0);
    }

    #[test]
    fn table_instance_gap() {
        // Arms 0, 0.5, 1 with means (0.5,0.4), (0.3,0.6), (0.2,0.3) at every context.
        let table = crate::envs::MeanTable {
            contexts: vec![0.0, 1.0],
            arms: vec![0.0, 0.5, 1.0],
            means: vec![
                vec![vec![0.5, 0.3, 0.2], vec![0.5, 0.3, 0.2]],
                vec![vec![0.4, 0.6, 0.3], vec![0.4, 0.6, 0.3]],
            ],
        };
        let e = Environment::new(MeanSurface::Table(table), Noise::None).unwrap();
        let grid = ArmGrid::new(3, 1).unwrap();
        let s = accumulate_regret(&[record(1, 0.3, 1.0)], &e, &grid, 0).unwrap();
        assert_eq!(s.increments.len(), 1);
        assert!((s.increments[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_increment_sum() {
        let grid = ArmGrid::new(101, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<_> = (1..=500)
            .map(|t| record(t, rng.gen(), (rng.gen_range(0..101) as f64) / 100.0))
            .collect();
        let s = accumulate_regret(&records, &env(), &grid, 3).unwrap();
        assert!(s.cumulative.windows(2).all(|w| w[0] <= w[1]));
        assert!((s.total() - s.increments.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(s.len(), 500);
    }

    #[test]
    fn bin_edges() {
        for x in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let band = (ridge_one_arm(x), ridge_two_arm(x));
            assert_eq!(fairness_bin(band, band.0), Some(0));
            assert_eq!(fairness_bin(band, band.1), Some(5));
            assert_eq!(fairness_bin(band, band.0 + 1e-9), Some(0));
            assert_eq!(fairness_bin(band, band.0 + 0.05), Some(1));
            assert_eq!(fairness_bin(band, band.1 + 1e-9), None);
            assert_eq!(fairness_bin(band, band.0 - 1e-9), None);
        }
    }

    #[test]
    fn all_selections_on_the_first_ridge() {
        let records: Vec<_> = (1..=10)
            .map(|t| {
                let x = t as f64 / 10.0;
                record(t, x, ridge_one_arm(x))
            })
            .collect();
        let rep = fairness_bins(&records, &env()).unwrap();
        assert_eq!(rep.ratios[0], 1.0);
        assert_eq!(rep.pareto_selections, 10);
    }

    #[test]
    fn uniform_band_selections_fill_bins_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let records: Vec<_> = (1..=n)
            .map(|t| {
                let x: f64 = rng.gen();
                record(t, x, ridge_one_arm(x) + 0.2 * rng.gen::<f64>())
            })
            .collect();
        let rep = fairness_bins(&records, &env()).unwrap();
        assert_eq!(rep.counts.iter().sum::<u64>(), rep.pareto_selections);
        let p = 1.0 / 6.0;
        let sigma = (p * (1.0 - p) / rep.pareto_selections as f64).sqrt();
        for r in rep.ratios {
            assert!((r - p).abs() < 3.0 * sigma, "{r}");
        }
    }

    #[test]
    fn off_band_selections_are_ignored() {
        let records = vec![record(1, 0.5, 0.0), record(2, 0.5, 0.9)];
        let rep = fairness_bins(&records, &env()).unwrap();
        assert_eq!(rep.pareto_selections, 0);
        assert_eq!(rep.ratios, [0.0; 6]);
    }

    #[test]
    fn fairness_needs_a_band() {
        let e = Environment::new(
            MeanSurface::IdenticalObjectives {
                base: Box::new(MeanSurface::AppendixD),
                objectives: 2,
            },
            Noise::None,
        )
        .unwrap();
        assert!(fairness_bins(&[record(1, 0.5, 0.5)], &e).is_err());
    }

    #[test]
    fn summary_of_one_and_two_runs() {
        let a = RegretSeries::from_increments(0, vec![1.0, 1.0, 1.0]);
        let s = summarize_runs(std::slice::from_ref(&a));
        assert_eq!(s.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.std_err, vec![0.0; 3]);
        let b = RegretSeries::from_increments(1, vec![3.0, 3.0, 3.0]);
        let s = summarize_runs(&[a, b]);
        assert_eq!(s.mean, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn standard_error_scales_with_sqrt_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma = 2.0;
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let series: Vec<_> = (0..100)
            .map(|i| {
                RegretSeries::from_increments(i, vec![rand_distr::Distribution::sample(&normal, &mut rng)])
            })
            .collect();
        let s = summarize_runs(&series);
        // sigma / 10, with the sample sd within ~25% at n = 100.
        assert!((s.std_err[0] - 0.2).abs() < 0.05, "{}", s.std_err[0]);
    }

    #[test]
    #[should_panic(expected = "differ in length")]
    fn mismatched_runs_panic() {
        summarize_runs(&[
            RegretSeries::from_increments(0, vec![1.0]),
            RegretSeries::from_increments(1, vec![1.0, 2.0]),
        ]);
    }
}
