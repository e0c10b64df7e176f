//! Comparison policies: single-objective contextual zooming and uniform
//! random arm selection.
//!
//! Contextual zooming is the zooming engine run with one objective. With a
//! single objective the front of index vectors is the set of maximal
//! indices, so no separate implementation is needed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::pcz::{PczConfig, PczState, RoundRecord};
use crate::similarity_space::ArmGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Pcz,
    ContextualZooming,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Pcz => "pcz",
            PolicyKind::ContextualZooming => "contextual-zooming",
            PolicyKind::Random => "random",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A running policy.
#[derive(Debug, Clone)]
pub enum Policy {
    Pcz(PczState),
    ContextualZooming(PczState),
    Random { grid: ArmGrid, round: u64 },
}

impl Policy {
    /// Builds `kind` for an environment. `config.objectives` is overridden:
    /// the environment's count for PCZ, 1 for contextual zooming.
    pub fn new(kind: PolicyKind, mut config: PczConfig, env: &Environment) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Pcz => {
                config.objectives = env.objectives();
                Policy::Pcz(PczState::new(config)?)
            }
            PolicyKind::ContextualZooming => {
                config.objectives = 1;
                Policy::ContextualZooming(PczState::new(config)?)
            }
            PolicyKind::Random => {
                config.validate()?;
                Policy::Random {
                    grid: ArmGrid::new(config.arm_grid_size, config.metric.arm_dim())?,
                    round: 1,
                }
            }
        })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Pcz(_) => PolicyKind::Pcz,
            Policy::ContextualZooming(_) => PolicyKind::ContextualZooming,
            Policy::Random { .. } => PolicyKind::Random,
        }
    }

    pub fn grid(&self) -> &ArmGrid {
        match self {
            Policy::Pcz(s) | Policy::ContextualZooming(s) => s.grid(),
            Policy::Random { grid, .. } => grid,
        }
    }

    /// Learner state, if the policy has one.
    pub fn state(&self) -> Option<&PczState> {
        match self {
            Policy::Pcz(s) | Policy::ContextualZooming(s) => Some(s),
            Policy::Random { .. } => None,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        context: &[f64],
        env: &Environment,
        rng: &mut R,
    ) -> Result<RoundRecord> {
        match self {
            Policy::Pcz(s) => s.step(context, env, rng),
            Policy::ContextualZooming(s) => cz_step(s, context, env, rng),
            Policy::Random { grid, round } => {
                let rec = random_step(*round, context, grid, env, rng)?;
                *round += 1;
                Ok(rec)
            }
        }
    }
}

/// One round of contextual zooming: learns from objective 1 only, logs the
/// full reward vector.
pub fn cz_step<R: Rng + ?Sized>(
    state: &mut PczState,
    context: &[f64],
    env: &Environment,
    rng: &mut R,
) -> Result<RoundRecord> {
    if state.objectives() != 1 {
        return Err(Error::config(
            "objectives",
            "contextual zooming runs with a single objective",
        ));
    }
    state.step_learning_prefix(context, env, rng)
}

/// One round of uniform random selection over the grid. Consumes one
/// integer draw for the arm, then the environment's noise; never looks at
/// the context beyond passing it to the environment.
pub fn random_step<R: Rng + ?Sized>(
    t: u64,
    context: &[f64],
    grid: &ArmGrid,
    env: &Environment,
    rng: &mut R,
) -> Result<RoundRecord> {
    assert!(!grid.is_empty(), "empty arm grid");
    let arm_index = rng.gen_range(0..grid.len());
    let arm = grid.arm(arm_index).to_vec();
    let reward = env.sample_reward(context, &arm, rng)?;
    Ok(RoundRecord {
        t,
        context: context.to_vec(),
        arm,
        arm_index,
        ball_id: None,
        reward,
        child_created: None,
        front_size: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ContextOracle, MeanSurface, Noise};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(noise: Noise) -> Environment {
        Environment::new(MeanSurface::AppendixD, noise).unwrap()
    }

    #[test]
    fn random_arms_are_uniform() {
        let grid = ArmGrid::new(101, 1).unwrap();
        let e = env(Noise::None);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000u32;
        let mut counts = vec![0u32; grid.len()];
        for t in 1..=n {
            let rec = random_step(t as u64, &[0.25], &grid, &e, &mut rng).unwrap();
            counts[rec.arm_index] += 1;
        }
        let p = 1.0 / 101.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let outside = counts
            .iter()
            .filter(|&&c| (c as f64 - n as f64 * p).abs() > 3.0 * sigma)
            .count();
        assert!(outside <= 3, "{outside}");
    }

    #[test]
    fn random_ignores_the_context() {
        let grid = ArmGrid::new(101, 1).unwrap();
        let e = env(Noise::None);
        let arms = |x: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (1..200)
                .map(|t| random_step(t, &[x], &grid, &e, &mut rng).unwrap().arm_index)
                .collect::<Vec<_>>()
        };
        assert_eq!(arms(0.1), arms(0.9));
        assert_eq!(arms(0.1), arms(0.1));
    }

    #[test]
    fn random_regret_matches_the_grid_average_gap() {
        let grid = ArmGrid::new(101, 1).unwrap();
        let e = env(Noise::Bernoulli);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = [0.37];
        let oracle = ContextOracle::new(&e, &x, &grid).unwrap();
        let gaps: Vec<f64> = (0..grid.len()).map(|k| oracle.gap_of_arm(k)).collect();
        let exact = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - exact).powi(2)).sum::<f64>() / gaps.len() as f64;
        let n = 100_000;
        let total: f64 = (1..=n)
            .map(|t| gaps[random_step(t, &x, &grid, &e, &mut rng).unwrap().arm_index])
            .sum();
        let mc = total / n as f64;
        assert!((mc - exact).abs() < 3.0 * (var / n as f64).sqrt(), "{mc} vs {exact}");
    }

    #[test]
    fn cz_logs_both_objectives() {
        let e = env(Noise::Bernoulli);
        let mut p = Policy::new(PolicyKind::ContextualZooming, PczConfig::new(50, 2), &e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let rec = p.step(&[0.5], &e, &mut rng).unwrap();
            assert_eq!(rec.reward.len(), 2);
        }
        assert_eq!(p.state().unwrap().objectives(), 1);
        assert_eq!(p.state().unwrap().stats(0).mean.len(), 1);
    }

    #[test]
    fn cz_refuses_multi_objective_state() {
        let e = env(Noise::None);
        let mut s = PczState::new(PczConfig::new(10, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(cz_step(&mut s, &[0.5], &e, &mut rng).is_err());
    }

    #[test]
    fn cz_matches_pcz_on_identical_objectives() {
        let e = Environment::new(
            MeanSurface::IdenticalObjectives {
                base: Box::new(MeanSurface::AppendixD),
                objectives: 2,
            },
            Noise::Bernoulli,
        )
        .unwrap();
        let horizon = 1500;
        let mut pcz = Policy::new(PolicyKind::Pcz, PczConfig::new(horizon, 2), &e).unwrap();
        let mut cz = Policy::new(PolicyKind::ContextualZooming, PczConfig::new(horizon, 2), &e)
            .unwrap();
        // Same confidence constant on both sides so the trajectories can match.
        let (Policy::Pcz(a), Policy::ContextualZooming(b)) = (&pcz, &cz) else {
            unreachable!()
        };
        assert_ne!(a.confidence(), b.confidence());
        let mut cfg = PczConfig::new(horizon, 2);
        cfg.objectives = 1;
        cfg.delta /= 2.0;
        let b = PczState::new(cfg).unwrap();
        assert_eq!(a.confidence(), b.confidence());
        cz = Policy::ContextualZooming(b);

        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        for t in 0..horizon {
            let x = [((t * 7) % 50) as f64 / 49.0];
            let p = pcz.step(&x, &e, &mut r1).unwrap();
            let c = cz.step(&x, &e, &mut r2).unwrap();
            assert_eq!(p, c);
        }
    }

    #[test]
    fn single_objective_front_is_the_argmax_set() {
        let e = Environment::new(
            MeanSurface::IdenticalObjectives {
                base: Box::new(MeanSurface::AppendixD),
                objectives: 1,
            },
            Noise::Bernoulli,
        )
        .unwrap();
        let mut p = Policy::new(PolicyKind::Pcz, PczConfig::new(800, 1), &e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for t in 0..800 {
            let x = [(t % 13) as f64 / 12.0];
            if let Policy::Pcz(s) = &p {
                let relevant = s.relevant_balls(&x);
                let front = s.pareto_ball_set(&relevant);
                let best = relevant
                    .iter()
                    .map(|&id| s.index(id, 0))
                    .fold(f64::NEG_INFINITY, f64::max);
                let argmax: Vec<usize> = relevant
                    .iter()
                    .copied()
                    .filter(|&id| s.index(id, 0) == best)
                    .collect();
                assert_eq!(front, argmax);
            }
            p.step(&x, &e, &mut rng).unwrap();
        }
    }
}
