//! Reward environments over `[0,1] × [0,1]`, context generators, and the
//! per-context Pareto oracle used for regret.
//!
//! The built-in bi-objective surface places the ridge of objective 1 on the
//! line `8x + 10y = 8` and the ridge of objective 2 on `8x + 10y = 10`, so the
//! Pareto optimal arms for context `x` form the band `[y1(x), y2(x)]` with
//! `y2 - y1 = 0.2`. Its slopes exceed those allowed by the scaled Euclidean
//! metric, so the Lipschitz assumption does not hold for it; the algorithm
//! runs on it regardless.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::{pareto_front, psg_against_front, RewardVector};
use crate::similarity_space::ArmGrid;

/// Mean reward surfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanSurface {
    /// The two-ridge synthetic surface.
    AppendixD,
    /// Every objective equals the first objective of `base`.
    IdenticalObjectives {
        base: Box<MeanSurface>,
        objectives: usize,
    },
    /// Tabulated means with bilinear interpolation.
    Table(MeanTable),
}

impl MeanSurface {
    pub fn objectives(&self) -> usize {
        match self {
            MeanSurface::AppendixD => 2,
            MeanSurface::IdenticalObjectives { objectives, .. } => *objectives,
            MeanSurface::Table(t) => t.means.len(),
        }
    }

    fn eval(&self, x: f64, y: f64, out: &mut Vec<f64>) {
        match self {
            MeanSurface::AppendixD => {
                out.push(ridge_one(x, y));
                out.push(ridge_two(x, y));
            }
            MeanSurface::IdenticalObjectives { base, objectives } => {
                let mut tmp = Vec::with_capacity(base.objectives());
                base.eval(x, y, &mut tmp);
                out.extend(std::iter::repeat_n(tmp[0], *objectives));
            }
            MeanSurface::Table(t) => t.eval(x, y, out),
        }
    }
}

/// `y1(x)`, the ridge of objective 1.
pub fn ridge_one_arm(x: f64) -> f64 {
    (8.0 - 8.0 * x) / 10.0
}

/// `y2(x)`, the ridge of objective 2.
pub fn ridge_two_arm(x: f64) -> f64 {
    (10.0 - 8.0 * x) / 10.0
}

fn ridge_one(x: f64, y: f64) -> f64 {
    (1.0 - 5.0 * (y - ridge_one_arm(x)).abs()).max(0.0)
}

fn ridge_two(x: f64, y: f64) -> f64 {
    let y2 = ridge_two_arm(x);
    if y <= y2 {
        (1.0 - 5.0 * (y2 - y)).max(0.0)
    } else {
        (1.0 - (y - y2) / 4.0).max(0.0)
    }
}

/// Means tabulated on a context grid × arm grid, one slab per objective.
///
/// JSON layout: `{"contexts": [..], "arms": [..], "means": [[[..]]]}` with
/// `means[objective][context_index][arm_index]`. Both grids must be strictly
/// increasing from 0 to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanTable {
    pub contexts: Vec<f64>,
    pub arms: Vec<f64>,
    pub means: Vec<Vec<Vec<f64>>>,
}

impl MeanTable {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: MeanTable = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.display().to_string(),
            source,
        })?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("table.contexts", &self.contexts)?;
        check_axis("table.arms", &self.arms)?;
        if self.means.is_empty() {
            return Err(Error::config("table.means", "need at least one objective"));
        }
        for (i, slab) in self.means.iter().enumerate() {
            if slab.len() != self.contexts.len()
                || slab.iter().any(|row| row.len() != self.arms.len())
            {
                return Err(Error::config(
                    format!("table.means[{i}]"),
                    format!(
                        "expected a {} x {} slab",
                        self.contexts.len(),
                        self.arms.len()
                    ),
                ));
            }
            if let Some(v) = slab.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::config(
                    format!("table.means[{i}]"),
                    format!("mean {v} outside [0,1]"),
                ));
            }
        }
        Ok(())
    }

    fn eval(&self, x: f64, y: f64, out: &mut Vec<f64>) {
        let (i, tx) = locate(&self.contexts, x);
        let (j, ty) = locate(&self.arms, y);
        for slab in &self.means {
            let v00 = slab[i][j];
            let v01 = slab[i][j + 1];
            let v10 = slab[i + 1][j];
            let v11 = slab[i + 1][j + 1];
            let lo = v00 + (v01 - v00) * ty;
            let hi = v10 + (v11 - v10) * ty;
            out.push(lo + (hi - lo) * tx);
        }
    }
}

fn check_axis(field: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::config(field, "need at least two grid points"));
    }
    if axis[0] != 0.0 || axis[axis.len() - 1] != 1.0 {
        return Err(Error::config(field, "grid must start at 0 and end at 1"));
    }
    if axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config(field, "grid must be strictly increasing"));
    }
    Ok(())
}

// Cell index and fractional position of `v` on a validated axis.
fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    let upper = axis.partition_point(|a| *a <= v).clamp(1, axis.len() - 1);
    let i = upper - 1;
    (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Noise {
    /// Independent Bernoulli draw per objective.
    Bernoulli,
    /// Gaussian around the mean, `sigma <= 1/2`.
    Gaussian { sigma: f64 },
    /// Rewards equal the means.
    None,
}

/// A reward environment: a mean surface plus a noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    surface: MeanSurface,
    noise: Noise,
}

impl Environment {
    pub fn new(surface: MeanSurface, noise: Noise) -> Result<Self> {
        match &surface {
            MeanSurface::IdenticalObjectives { base, objectives } => {
                if *objectives == 0 {
                    return Err(Error::config("env.objectives", "must be at least 1"));
                }
                if let MeanSurface::Table(t) = base.as_ref() {
                    t.validate()?;
                }
            }
            MeanSurface::Table(t) => t.validate()?,
            MeanSurface::AppendixD => {}
        }
        if let Noise::Gaussian { sigma } = noise {
            if !(sigma > 0.0 && sigma <= 0.5) {
                return Err(Error::config("env.noise.sigma", "must lie in (0, 1/2]"));
            }
        }
        Ok(Environment { surface, noise })
    }

    pub fn surface(&self) -> &MeanSurface {
        &self.surface
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn objectives(&self) -> usize {
        self.surface.objectives()
    }

    pub fn context_dim(&self) -> usize {
        1
    }

    pub fn arm_dim(&self) -> usize {
        1
    }

    /// Whether all objectives share one noise draw per round.
    pub fn shares_noise(&self) -> bool {
        matches!(self.surface, MeanSurface::IdenticalObjectives { .. })
    }

    fn coordinates(&self, context: &[f64], arm: &[f64]) -> Result<(f64, f64)> {
        let (&[x], &[y]) = (context, arm) else {
            return Err(Error::Domain(format!(
                "environment expects scalar context and arm, got dims ({}, {})",
                context.len(),
                arm.len()
            )));
        };
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain(format!("point ({x}, {y}) outside the unit square")));
        }
        Ok((x, y))
    }

    /// Expected reward vector at `(context, arm)`.
    pub fn mean_reward(&self, context: &[f64], arm: &[f64]) -> Result<RewardVector> {
        let (x, y) = self.coordinates(context, arm)?;
        let mut out = Vec::with_capacity(self.objectives());
        self.surface.eval(x, y, &mut out);
        Ok(RewardVector(out))
    }

    /// Draws a reward vector. Rng consumption: one uniform per objective for
    /// Bernoulli (one in total when noise is shared), one normal per
    /// objective for Gaussian (likewise), nothing for `None`.
    pub fn sample_reward<R: Rng + ?Sized>(
        &self,
        context: &[f64],
        arm: &[f64],
        rng: &mut R,
    ) -> Result<RewardVector> {
        let RewardVector(mut values) = self.mean_reward(context, arm)?;
        let draws = if self.shares_noise() { 1 } else { values.len() };
        match self.noise {
            Noise::None => {}
            Noise::Bernoulli => {
                let mut shared = 0.0;
                for (i, v) in values.iter_mut().enumerate() {
                    if i < draws {
                        shared = rng.gen::<f64>();
                    }
                    *v = if shared < *v { 1.0 } else { 0.0 };
                }
            }
            Noise::Gaussian { sigma } => {
                let normal = Normal::new(0.0, sigma).expect("sigma validated");
                let mut shared = 0.0;
                for (i, v) in values.iter_mut().enumerate() {
                    if i < draws {
                        shared = normal.sample(rng);
                    }
                    *v += shared;
                }
            }
        }
        Ok(RewardVector(values))
    }

    /// The Pareto optimal band `[y1(x), y2(x)]` of the two-ridge surface.
    /// `None` for other surfaces.
    pub fn pareto_band(&self, x: f64) -> Option<(f64, f64)> {
        match self.surface {
            MeanSurface::AppendixD => Some((ridge_one_arm(x), ridge_two_arm(x))),
            _ => None,
        }
    }
}

/// Pareto front of the grid means at one context, reusable across arms.
#[derive(Debug, Clone)]
pub struct ContextOracle {
    means: Vec<RewardVector>,
    front: Vec<usize>,
}

impl ContextOracle {
    pub fn new(env: &Environment, context: &[f64], grid: &ArmGrid) -> Result<Self> {
        assert!(!grid.is_empty(), "empty arm grid");
        let means = grid
            .iter()
            .map(|y| env.mean_reward(context, y))
            .collect::<Result<Vec<_>>>()?;
        let front = pareto_front(&means);
        Ok(ContextOracle { means, front })
    }

    /// Indices of the grid arms on the front.
    pub fn front(&self) -> &[usize] {
        &self.front
    }

    pub fn means(&self) -> &[RewardVector] {
        &self.means
    }

    /// Gap of an arbitrary mean vector against the grid front.
    pub fn gap(&self, mean: &[f64]) -> f64 {
        psg_against_front(mean, self.front.iter().map(|&i| self.means[i].as_ref()))
    }

    /// Gap of grid arm `index`.
    pub fn gap_of_arm(&self, index: usize) -> f64 {
        self.gap(&self.means[index])
    }
}

/// Gap of arm `y` at context `x` against the Pareto front of the grid.
pub fn psg_oracle(env: &Environment, context: &[f64], arm: &[f64], grid: &ArmGrid) -> Result<f64> {
    let oracle = ContextOracle::new(env, context, grid)?;
    let mean = env.mean_reward(context, arm)?;
    Ok(oracle.gap(&mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ContextGenerator {
    /// Independent uniform draws on `[0,1]`.
    Uniform,
    /// Element `t-1` at round `t`; must be at least as long as the horizon.
    FixedSequence { values: Vec<f64> },
    /// Element `(t-1) mod len` at round `t`.
    RoundRobin { values: Vec<f64> },
}

impl ContextGenerator {
    pub fn validate(&self, horizon: u64) -> Result<()> {
        match self {
            ContextGenerator::Uniform => Ok(()),
            ContextGenerator::FixedSequence { values } | ContextGenerator::RoundRobin { values } => {
                if values.is_empty() {
                    return Err(Error::config("contexts.values", "must not be empty"));
                }
                if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::config("contexts.values", format!("{v} outside [0,1]")));
                }
                if matches!(self, ContextGenerator::FixedSequence { .. })
                    && (values.len() as u64) < horizon
                {
                    return Err(Error::config(
                        "contexts.values",
                        format!("fixed sequence of length {} is shorter than T = {horizon}", values.len()),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Context for round `t` (1-based). Uniform draws consume one `f64`.
    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R, t: u64) -> Result<Vec<f64>> {
        assert!(t >= 1, "rounds are 1-based");
        let idx = (t - 1) as usize;
        match self {
            ContextGenerator::Uniform => Ok(vec![rng.gen::<f64>()]),
            ContextGenerator::FixedSequence { values } => values
                .get(idx)
                .map(|v| vec![*v])
                .ok_or_else(|| Error::config("contexts.values", format!("sequence exhausted at t = {t}"))),
            ContextGenerator::RoundRobin { values } => Ok(vec![values[idx % values.len()]]),
        }
    }
}
