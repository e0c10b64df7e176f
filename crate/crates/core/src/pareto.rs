//! Pareto algebra on reward vectors: dominance, fronts, the Pareto
//! suboptimality gap (PSG), and packing diagnostics.
//!
//! Larger is better in every objective. Comparisons are exact; there is no
//! tolerance anywhere in the dominance relation.

use std::cmp::Ordering;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::similarity_space::{Metric, Point};

/// One value per objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn zeros(objectives: usize) -> Self {
        RewardVector(vec![0.0; objectives])
    }
}

impl Deref for RewardVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for RewardVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for RewardVector {
    fn from(v: Vec<f64>) -> Self {
        RewardVector(v)
    }
}

fn check_lengths(u: &[f64], v: &[f64]) {
    assert_eq!(u.len(), v.len(), "reward vectors differ in length");
}

/// `u` is at least as large as `v` in every objective.
pub fn weakly_dominates(u: &[f64], v: &[f64]) -> bool {
    check_lengths(u, v);
    u.iter().zip(v).all(|(a, b)| a >= b)
}

/// `u` weakly dominates `v` and is strictly larger somewhere.
pub fn dominates(u: &[f64], v: &[f64]) -> bool {
    check_lengths(u, v);
    let mut strict = false;
    for (a, b) in u.iter().zip(v) {
        if a < b {
            return false;
        }
        strict |= a > b;
    }
    strict
}

/// Neither vector dominates the other. Equal vectors are incomparable.
pub fn incomparable(u: &[f64], v: &[f64]) -> bool {
    !dominates(u, v) && !dominates(v, u)
}

/// Indices of the non-dominated vectors, in ascending order. Duplicates of a
/// front vector are all kept.
///
/// Vectors are visited in order of decreasing coordinate sum (ties broken
/// lexicographically, larger first). A dominator always comes strictly
/// earlier in that order, so each candidate only needs checking against the
/// front found so far.
///
/// Panics on an empty list or mixed lengths.
pub fn pareto_front<V: AsRef<[f64]>>(vs: &[V]) -> Vec<usize> {
    assert!(!vs.is_empty(), "pareto_front of an empty list");
    let width = vs[0].as_ref().len();
    assert!(
        vs.iter().all(|v| v.as_ref().len() == width),
        "reward vectors differ in length"
    );
    let sums: Vec<f64> = vs.iter().map(|v| v.as_ref().iter().sum()).collect();
    let mut order: Vec<usize> = (0..vs.len()).collect();
    order.sort_by(|&a, &b| {
        sums[b]
            .partial_cmp(&sums[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| lex_cmp(vs[b].as_ref(), vs[a].as_ref()))
    });

    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let v = vs[i].as_ref();
        if !front.iter().any(|&f| dominates(vs[f].as_ref(), v)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Pareto suboptimality gap of `v` among `all`: the smallest uniform boost
/// after which no front member dominates `v`.
///
/// Computed as `max(0, max_f min_i (f_i - v_i))` over front members `f`.
pub fn psg<V: AsRef<[f64]>>(v: &[f64], all: &[V]) -> f64 {
    let front = pareto_front(all);
    psg_against_front(v, front.iter().map(|&i| all[i].as_ref()))
}

pub(crate) fn psg_against_front<'a>(v: &[f64], front: impl Iterator<Item = &'a [f64]>) -> f64 {
    front
        .map(|f| {
            check_lengths(f, v);
            f.iter()
                .zip(v)
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Grid-scan oracle for [`psg`]. Walks `ε = 0, step, 2·step, …` and returns
/// the first value at which `v + ε` is incomparable with every member of the
/// front, or at least no longer dominated by any of them.
///
/// The scan is bounded by the spread of all entries plus one step, beyond
/// which nothing can dominate `v + ε`.
pub fn psg_bruteforce<V: AsRef<[f64]>>(v: &[f64], all: &[V], eps_step: f64) -> f64 {
    assert!(eps_step > 0.0, "eps_step must be positive");
    // Front by exhaustion so the oracle shares no code with `pareto_front`.
    let front: Vec<&[f64]> = all
        .iter()
        .map(AsRef::as_ref)
        .filter(|&u| !all.iter().any(|w| dominates(w.as_ref(), u)))
        .collect();
    let (lo, hi) = all
        .iter()
        .flat_map(|a| a.as_ref().iter())
        .chain(v)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let steps = ((hi - lo) / eps_step).ceil() as u64 + 1;
    let mut boosted = v.to_vec();
    let mut first_undominated = None;
    for k in 0..=steps {
        let eps = k as f64 * eps_step;
        for (b, x) in boosted.iter_mut().zip(v) {
            *b = x + eps;
        }
        if front.iter().all(|f| incomparable(&boosted, f)) {
            return eps;
        }
        if first_undominated.is_none() && front.iter().all(|f| !dominates(f, &boosted)) {
            first_undominated = Some(eps);
        }
    }
    first_undominated.unwrap_or(steps as f64 * eps_step)
}

/// Size of a greedy, insertion-order maximal `r`-packing of `points`.
pub fn r_packing_greedy(points: &[Point], r: f64, metric: &Metric) -> usize {
    assert!(r > 0.0, "packing radius must be positive");
    let mut chosen: Vec<&Point> = Vec::new();
    for p in points {
        if chosen.iter().all(|q| metric.distance(p, q) >= r) {
            chosen.push(p);
        }
    }
    chosen.len()
}

/// Grid pairs whose gap is at most `12 r`: a discretization of the
/// near-optimal set used for zooming-number estimates.
pub fn near_optimal_set(
    env: &Environment,
    context_grid: &[Vec<f64>],
    arm_grid: &[Vec<f64>],
    r: f64,
) -> crate::error::Result<Vec<Point>> {
    assert!(r > 0.0, "radius must be positive");
    assert!(!context_grid.is_empty() && !arm_grid.is_empty(), "empty grid");
    let mut out = Vec::new();
    for x in context_grid {
        let means = arm_grid
            .iter()
            .map(|y| env.mean_reward(x, y))
            .collect::<crate::error::Result<Vec<_>>>()?;
        let front: Vec<usize> = pareto_front(&means);
        for (y, mu) in arm_grid.iter().zip(&means) {
            let gap = psg_against_front(mu, front.iter().map(|&i| means[i].as_ref()));
            if gap <= 12.0 * r {
                out.push(Point::new(x.clone(), y.clone()));
            }
        }
    }
    Ok(out)
}
