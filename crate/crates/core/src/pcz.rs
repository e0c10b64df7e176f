//! Pareto contextual zooming.
//!
//! The learner keeps a growing collection of closed balls over the
//! context-arm space. Each round it
//!
//! 1. finds the *relevant* balls, those whose domain meets the current
//!    context slice on at least one grid arm,
//! 2. computes an optimistic index vector for each relevant ball and keeps
//!    the balls whose index is not Pareto dominated,
//! 3. draws an arm uniformly from the union of those balls' domains on the
//!    slice, then a ball uniformly among the front balls owning that arm,
//! 4. observes the reward, activates a half-radius child at the played point
//!    when the chosen ball's sample uncertainty has dropped to its radius, and
//!    credits the reward to the chosen ball.
//!
//! Random draws per round happen in a fixed order: arm, ball, then the
//! environment's noise.
//!
//! Unplayed balls have an infinite pre-index, represented by
//! `f64::INFINITY`; it propagates through sums and loses every `min`.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::pareto::{pareto_front, RewardVector};
use crate::similarity_space::{ArmGrid, Ball, Metric, Point};

/// Default number of arm grid points per axis.
pub const DEFAULT_ARM_GRID_SIZE: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PczConfig {
    pub horizon: u64,
    pub delta: f64,
    pub objectives: usize,
    pub arm_grid_size: usize,
    pub metric: Metric,
    /// Seeds [`PczConfig::rng`].
    pub seed: u64,
}

impl PczConfig {
    /// Two objectives on the unit square with the scaled Euclidean metric,
    /// `delta = 1/T` and a 101-point arm grid.
    pub fn new(horizon: u64, objectives: usize) -> Self {
        PczConfig {
            horizon,
            delta: 1.0 / horizon.max(1) as f64,
            objectives,
            arm_grid_size: DEFAULT_ARM_GRID_SIZE,
            metric: Metric::scaled_euclidean(1, 1),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if self.objectives == 0 {
            return Err(Error::config("objectives", "must be at least 1"));
        }
        if self.arm_grid_size < 2 {
            return Err(Error::config("arm_grid_size", "must be at least 2"));
        }
        self.metric.validate()
    }

    /// Confidence constant `1 + 2 ln(2√2 · d_r · T^{3/2} / δ)`.
    pub fn confidence(&self) -> f64 {
        confidence_constant(self.horizon, self.delta, self.objectives)
    }

    /// The random stream a simulation driven by this config should use.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `1 + 2 ln(2√2 · objectives · horizon^{3/2} / delta)`, natural log.
pub fn confidence_constant(horizon: u64, delta: f64, objectives: usize) -> f64 {
    let t = horizon as f64;
    1.0 + 2.0 * (2.0 * SQRT_2 * objectives as f64 * t * t.sqrt() / delta).ln()
}

/// `sqrt(2A/n)`, infinite for an unplayed ball.
pub fn sample_uncertainty(count: u64, confidence: f64) -> f64 {
    if count == 0 {
        f64::INFINITY
    } else {
        (2.0 * confidence / count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallStats {
    pub count: u64,
    pub mean: RewardVector,
}

impl BallStats {
    fn new(objectives: usize) -> Self {
        BallStats {
            count: 0,
            mean: RewardVector::zeros(objectives),
        }
    }
}

/// Audit trail of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub context: Vec<f64>,
    pub arm: Vec<f64>,
    /// Position of the arm in the policy's grid.
    pub arm_index: usize,
    /// `None` for policies without balls.
    pub ball_id: Option<usize>,
    pub reward: RewardVector,
    pub child_created: Option<usize>,
    /// Number of balls whose index is on the front.
    pub front_size: Option<usize>,
}

/// Result of one draw by [`PczState::select`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub arm_index: usize,
    pub arm: Vec<f64>,
    pub ball_id: usize,
    pub front: Vec<usize>,
}

/// Which balls own each grid arm at one context.
///
/// A ball owns `(x, y)` when the point is inside the ball and inside no
/// strictly smaller active ball, i.e. when it has the largest depth among
/// the balls containing the point.
#[derive(Debug, Clone)]
pub struct SliceDomains {
    candidates: Vec<usize>,
    candidate_depth: Vec<u32>,
    // candidates.len() x arms, row-major
    contains: Vec<bool>,
    owner_depth: Vec<Option<u32>>,
}

impl SliceDomains {
    fn arms(&self) -> usize {
        self.owner_depth.len()
    }

    fn owns(&self, slot: usize, arm: usize) -> bool {
        self.contains[slot * self.arms() + arm]
            && self.owner_depth[arm] == Some(self.candidate_depth[slot])
    }

    /// Ball ids owning grid arm `arm`.
    pub fn owners(&self, arm: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.candidates.len())
            .filter(move |&slot| self.owns(slot, arm))
            .map(move |slot| self.candidates[slot])
    }

    /// Ids of balls owning at least one grid arm, in id order.
    pub fn relevant(&self) -> Vec<usize> {
        (0..self.candidates.len())
            .filter(|&slot| (0..self.arms()).any(|arm| self.owns(slot, arm)))
            .map(|slot| self.candidates[slot])
            .collect()
    }

    /// Grid arms with no owner. Empty whenever the collection covers the slice.
    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.arms())
            .filter(|&a| self.owner_depth[a].is_none())
            .collect()
    }

    fn slot_of(&self, id: usize) -> Option<usize> {
        self.candidates.iter().position(|&c| c == id)
    }
}

/// Full learner state: active balls, their statistics and the round counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PczState {
    config: PczConfig,
    confidence: f64,
    grid: ArmGrid,
    balls: Vec<Ball>,
    stats: Vec<BallStats>,
    round: u64,
}

impl PczState {
    /// One radius-1 ball centred at the middle of the space, zero stats, `t = 1`.
    pub fn new(config: PczConfig) -> Result<Self> {
        config.validate()?;
        let grid = ArmGrid::new(config.arm_grid_size, config.metric.arm_dim())?;
        let center = Point::new(
            vec![0.5; config.metric.context_dim()],
            vec![0.5; config.metric.arm_dim()],
        );
        let confidence = config.confidence();
        Ok(PczState {
            stats: vec![BallStats::new(config.objectives)],
            balls: vec![Ball::root(center)],
            confidence,
            grid,
            config,
            round: 1,
        })
    }

    pub fn config(&self) -> &PczConfig {
        &self.config
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn grid(&self) -> &ArmGrid {
        &self.grid
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn ball(&self, id: usize) -> &Ball {
        self.balls
            .get(id)
            .unwrap_or_else(|| panic!("unknown ball {id}"))
    }

    pub fn stats(&self, id: usize) -> &BallStats {
        self.stats
            .get(id)
            .unwrap_or_else(|| panic!("unknown ball {id}"))
    }

    /// Current round, 1-based: the round the next `step` will play.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn objectives(&self) -> usize {
        self.config.objectives
    }

    pub fn uncertainty(&self, id: usize) -> f64 {
        sample_uncertainty(self.stats(id).count, self.confidence)
    }

    /// Mean plus sample uncertainty plus radius, in objective `objective` (0-based).
    pub fn pre_index(&self, id: usize, objective: usize) -> f64 {
        assert!(objective < self.objectives(), "objective out of range");
        let stats = self.stats(id);
        if stats.count == 0 {
            return f64::INFINITY;
        }
        stats.mean[objective] + self.uncertainty(id) + self.ball(id).radius
    }

    /// `r(B) + min_B' (pre_index(B') + D(B', B))` in one objective.
    pub fn index(&self, id: usize, objective: usize) -> f64 {
        self.index_vector(id)[objective]
    }

    /// The index in every objective.
    pub fn index_vector(&self, id: usize) -> Vec<f64> {
        let target = self.ball(id);
        let metric = &self.config.metric;
        let mut best = vec![f64::INFINITY; self.objectives()];
        for (other, stats) in self.balls.iter().zip(&self.stats) {
            if stats.count == 0 {
                continue;
            }
            let offset = sample_uncertainty(stats.count, self.confidence)
                + other.radius
                + metric.distance(&other.center, &target.center);
            for (b, m) in best.iter_mut().zip(stats.mean.iter()) {
                *b = b.min(m + offset);
            }
        }
        for b in &mut best {
            *b += target.radius;
        }
        best
    }

    /// Domain ownership of every grid arm at `context`.
    pub fn slice(&self, context: &[f64]) -> SliceDomains {
        let metric = &self.config.metric;
        let candidates: Vec<usize> = self
            .balls
            .iter()
            .filter(|b| metric.context_gap(&b.center.context, context) <= b.radius)
            .map(|b| b.id)
            .collect();
        let arms = self.grid.len();
        let mut contains = vec![false; candidates.len() * arms];
        let mut owner_depth: Vec<Option<u32>> = vec![None; arms];
        let candidate_depth: Vec<u32> = candidates.iter().map(|&id| self.balls[id].depth).collect();
        for (slot, &id) in candidates.iter().enumerate() {
            let ball = &self.balls[id];
            for (a, arm) in self.grid.iter().enumerate() {
                if ball.contains_parts(context, arm, metric) {
                    contains[slot * arms + a] = true;
                    let d = &mut owner_depth[a];
                    if d.is_none_or(|cur| ball.depth > cur) {
                        *d = Some(ball.depth);
                    }
                }
            }
        }
        SliceDomains {
            candidates,
            candidate_depth,
            contains,
            owner_depth,
        }
    }

    /// Balls whose domain contains `(context, y)` for some grid arm `y`.
    pub fn relevant_balls(&self, context: &[f64]) -> Vec<usize> {
        self.slice(context).relevant()
    }

    /// Relevant balls whose index vector is not dominated by another
    /// relevant ball's. Equal index vectors are all kept.
    pub fn pareto_ball_set(&self, relevant: &[usize]) -> Vec<usize> {
        assert!(!relevant.is_empty(), "no relevant balls");
        let indices: Vec<Vec<f64>> = relevant.iter().map(|&id| self.index_vector(id)).collect();
        pareto_front(&indices)
            .into_iter()
            .map(|i| relevant[i])
            .collect()
    }

    /// Draws an arm and a ball for `context`.
    pub fn select<R: Rng + ?Sized>(&self, context: &[f64], rng: &mut R) -> Result<Selection> {
        let slice = self.slice(context);
        self.select_in(&slice, rng)
    }

    fn select_in<R: Rng + ?Sized>(&self, slice: &SliceDomains, rng: &mut R) -> Result<Selection> {
        let relevant = slice.relevant();
        if relevant.is_empty() {
            return Err(Error::Invariant {
                round: self.round,
                message: "no relevant ball: the active balls do not cover the context slice"
                    .into(),
            });
        }
        let front = self.pareto_ball_set(&relevant);
        let front_slots: Vec<usize> = front
            .iter()
            .map(|&id| slice.slot_of(id).expect("front balls are candidates"))
            .collect();
        let eligible: Vec<usize> = (0..self.grid.len())
            .filter(|&a| front_slots.iter().any(|&s| slice.owns(s, a)))
            .collect();
        let arm_index = eligible[rng.gen_range(0..eligible.len())];
        let holders: Vec<usize> = front_slots
            .iter()
            .filter(|&&s| slice.owns(s, arm_index))
            .map(|&s| slice.candidates[s])
            .collect();
        let ball_id = holders[rng.gen_range(0..holders.len())];
        Ok(Selection {
            arm_index,
            arm: self.grid.arm(arm_index).to_vec(),
            ball_id,
            front,
        })
    }

    /// Activates a child if the chosen ball is ready, then credits `reward`
    /// to the chosen ball and advances the round. Returns the child id.
    pub fn update(&mut self, ball_id: usize, point: &Point, reward: &[f64]) -> Option<usize> {
        assert_eq!(reward.len(), self.objectives(), "reward has the wrong length");
        let parent = self.ball(ball_id).clone();
        let child = if self.uncertainty(ball_id) <= parent.radius {
            let id = self.balls.len();
            self.balls
                .push(Ball::child_of(&parent, id, point.clone(), self.round));
            self.stats.push(BallStats::new(self.objectives()));
            Some(id)
        } else {
            None
        };
        let stats = &mut self.stats[ball_id];
        let n = stats.count as f64;
        for (m, r) in stats.mean.0.iter_mut().zip(reward) {
            *m = (*m * n + r) / (n + 1.0);
        }
        stats.count += 1;
        self.round += 1;
        child
    }

    /// Plays one round against `env`, whose objective count must match.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        context: &[f64],
        env: &Environment,
        rng: &mut R,
    ) -> Result<RoundRecord> {
        if env.objectives() != self.objectives() {
            return Err(Error::config(
                "objectives",
                format!(
                    "learner has {} objectives, environment {}",
                    self.objectives(),
                    env.objectives()
                ),
            ));
        }
        self.step_learning_prefix(context, env, rng)
    }

    /// Plays one round, learning only from the first `objectives()`
    /// coordinates of the environment's reward. The record keeps them all.
    pub(crate) fn step_learning_prefix<R: Rng + ?Sized>(
        &mut self,
        context: &[f64],
        env: &Environment,
        rng: &mut R,
    ) -> Result<RoundRecord> {
        if self.round > self.config.horizon {
            return Err(Error::Invariant {
                round: self.round,
                message: format!("horizon {} exhausted", self.config.horizon),
            });
        }
        if env.objectives() < self.objectives() {
            return Err(Error::config("objectives", "environment has too few objectives"));
        }
        let t = self.round;
        let slice = self.slice(context);
        let sel = self.select_in(&slice, rng)?;
        let reward = env.sample_reward(context, &sel.arm, rng)?;
        let point = Point::new(context.to_vec(), sel.arm.clone());
        let child = self.update(sel.ball_id, &point, &reward[..self.objectives()]);
        if let Some(id) = child {
            self.check_new_ball(id)?;
        }
        Ok(RoundRecord {
            t,
            context: context.to_vec(),
            arm: sel.arm,
            arm_index: sel.arm_index,
            ball_id: Some(sel.ball_id),
            reward,
            child_created: child,
            front_size: Some(sel.front.len()),
        })
    }

    /// Lineage and same-radius packing for a freshly activated ball.
    fn check_new_ball(&self, id: usize) -> Result<()> {
        let ball = &self.balls[id];
        let metric = &self.config.metric;
        let fail = |message: String| Error::Invariant {
            round: self.round - 1,
            message,
        };
        let parent = &self.balls[ball.parent.expect("children have parents")];
        if ball.radius != parent.radius / 2.0 {
            return Err(fail(format!("ball {id} radius is not half its parent's")));
        }
        if metric.distance(&ball.center, &parent.center) > parent.radius {
            return Err(fail(format!("ball {id} centre lies outside its parent")));
        }
        for other in &self.balls[..id] {
            if other.depth == ball.depth
                && metric.distance(&other.center, &ball.center) < ball.radius - 1e-12
            {
                return Err(fail(format!(
                    "balls {} and {id} of radius {} are closer than their radius",
                    other.id, ball.radius
                )));
            }
        }
        if self.balls.len() as u64 > self.round {
            return Err(fail("more balls than rounds".into()));
        }
        Ok(())
    }

    /// Full structural audit at `context`: every grid arm of the slice is in
    /// some ball's domain, the ball count is at most `t`, and every ball
    /// satisfies lineage and same-radius packing.
    pub fn check_invariants(&self, context: &[f64]) -> Result<()> {
        let fail = |message: String| Error::Invariant {
            round: self.round,
            message,
        };
        let metric = &self.config.metric;
        for arm in self.grid.iter() {
            if !self.balls.iter().any(|b| b.contains_parts(context, arm, metric)) {
                return Err(fail(format!("arm {arm:?} at context {context:?} is uncovered")));
            }
        }
        if self.balls.len() as u64 > self.round {
            return Err(fail("more balls than rounds".into()));
        }
        if self.balls[0].radius != 1.0 || self.balls[0].parent.is_some() {
            return Err(fail("root ball is malformed".into()));
        }
        for (i, ball) in self.balls.iter().enumerate().skip(1) {
            let parent = ball
                .parent
                .map(|p| &self.balls[p])
                .ok_or_else(|| fail(format!("ball {i} has no parent")))?;
            if ball.radius != parent.radius / 2.0
                || metric.distance(&ball.center, &parent.center) > parent.radius
            {
                return Err(fail(format!("ball {i} breaks lineage")));
            }
            for other in &self.balls[..i] {
                if other.depth == ball.depth
                    && metric.distance(&other.center, &ball.center) < ball.radius - 1e-12
                {
                    return Err(fail(format!("balls {} and {i} overlap centres", other.id)));
                }
            }
        }
        Ok(())
    }

    /// JSON snapshot of the state.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            config: self.config.clone(),
            confidence: self.confidence,
            round: self.round,
            balls: self
                .balls
                .iter()
                .zip(&self.stats)
                .map(|(b, s)| BallSnapshot {
                    ball: b.clone(),
                    stats: s.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snapshot: Snapshot) -> Result<Self> {
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(Error::config("format", format!("expected {SNAPSHOT_FORMAT}")));
        }
        let mut state = PczState::new(snapshot.config)?;
        if snapshot.balls.iter().enumerate().any(|(i, b)| b.ball.id != i) {
            return Err(Error::config("balls", "ids must equal positions"));
        }
        if snapshot.balls.is_empty() {
            return Err(Error::config("balls", "snapshot has no root"));
        }
        state.round = snapshot.round;
        (state.balls, state.stats) = snapshot
            .balls
            .into_iter()
            .map(|b| (b.ball, b.stats))
            .unzip();
        Ok(state)
    }
}

pub const SNAPSHOT_FORMAT: &str = "pcz-state/1";

/// Serialized learner state.
///
/// ```json
/// {
///   "format": "pcz-state/1",
///   "config": {"horizon": .., "delta": .., "objectives": .., "arm_grid_size": ..,
///              "metric": {..}, "seed": ..},
///   "confidence": ..,
///   "round": ..,
///   "balls": [{"id": .., "center": {"context": [..], "arm": [..]}, "depth": ..,
///              "radius": .., "parent": null, "birth_round": ..,
///              "count": .., "mean": [..]}]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub config: PczConfig,
    pub confidence: f64,
    pub round: u64,
    pub balls: Vec<BallSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSnapshot {
    #[serde(flatten)]
    pub ball: Ball,
    #[serde(flatten)]
    pub stats: BallStats,
}
