//! Geometry of the context-arm similarity space.
//!
//! Points live in `[0,1]^dx × [0,1]^dy`. A [`Metric`] is a product metric with
//! per-axis scale factors, checked at construction so that no two points of
//! the unit cube are further than 1 apart. Balls are closed. The domain of a
//! ball is the ball minus every active ball of strictly smaller radius; it is
//! never materialized, only queried.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A context-arm pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub context: Vec<f64>,
    pub arm: Vec<f64>,
}

impl Point {
    pub fn new(context: Vec<f64>, arm: Vec<f64>) -> Self {
        Point { context, arm }
    }

    /// Shorthand for the one-dimensional case.
    pub fn scalar(x: f64, y: f64) -> Self {
        Point {
            context: vec![x],
            arm: vec![y],
        }
    }

    /// Checks dimensions and that every coordinate is in `[0,1]`.
    pub fn validate(&self, context_dim: usize, arm_dim: usize) -> Result<()> {
        if self.context.len() != context_dim || self.arm.len() != arm_dim {
            return Err(Error::config(
                "point",
                format!(
                    "expected dims ({context_dim}, {arm_dim}), got ({}, {})",
                    self.context.len(),
                    self.arm.len()
                ),
            ));
        }
        if let Some(c) = self
            .context
            .iter()
            .chain(&self.arm)
            .find(|c| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::Domain(format!("coordinate {c} outside [0,1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    ScaledEuclidean,
    MaxOfPerAxis,
}

/// Product metric on the unit cube with per-axis scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    kind: MetricKind,
    context_scales: Vec<f64>,
    arm_scales: Vec<f64>,
}

impl Metric {
    /// Validated constructor. Rejects scales that would let two points of
    /// the unit cube be more than 1 apart.
    pub fn new(kind: MetricKind, context_scales: Vec<f64>, arm_scales: Vec<f64>) -> Result<Self> {
        if context_scales.is_empty() || arm_scales.is_empty() {
            return Err(Error::config("metric", "need at least one context and one arm axis"));
        }
        let all = || context_scales.iter().chain(&arm_scales);
        if all().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::config("metric.scales", "scales must be finite and positive"));
        }
        let diameter = match kind {
            MetricKind::ScaledEuclidean => all().map(|s| s * s).sum::<f64>().sqrt(),
            MetricKind::MaxOfPerAxis => all().copied().fold(0.0, f64::max),
        };
        // Rounding in 1/sqrt(n) scales can put the diameter a few ulps over 1.
        if diameter > 1.0 + 1e-12 {
            return Err(Error::config(
                "metric.scales",
                format!("diameter of the unit cube is {diameter}, must be at most 1"),
            ));
        }
        Ok(Metric {
            kind,
            context_scales,
            arm_scales,
        })
    }

    /// Euclidean distance with every axis scaled by `1/sqrt(dx+dy)`.
    pub fn scaled_euclidean(context_dim: usize, arm_dim: usize) -> Self {
        let s = 1.0 / ((context_dim + arm_dim) as f64).sqrt();
        Metric::new(
            MetricKind::ScaledEuclidean,
            vec![s; context_dim],
            vec![s; arm_dim],
        )
        .expect("default scaled euclidean metric is valid")
    }

    /// Unscaled Chebyshev distance.
    pub fn max_of_per_axis(context_dim: usize, arm_dim: usize) -> Self {
        Metric::new(
            MetricKind::MaxOfPerAxis,
            vec![1.0; context_dim],
            vec![1.0; arm_dim],
        )
        .expect("unit max metric is valid")
    }

    /// Re-runs the constructor checks, for metrics that arrived through serde.
    pub fn validate(&self) -> Result<()> {
        Metric::new(self.kind, self.context_scales.clone(), self.arm_scales.clone()).map(|_| ())
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn context_dim(&self) -> usize {
        self.context_scales.len()
    }

    pub fn arm_dim(&self) -> usize {
        self.arm_scales.len()
    }

    /// Distance between two points.
    ///
    /// Panics if the point dimensions do not match the metric.
    pub fn distance(&self, p: &Point, q: &Point) -> f64 {
        self.distance_parts(&p.context, &p.arm, &q.context, &q.arm)
    }

    /// Checked form of [`Metric::distance`].
    pub fn try_distance(&self, p: &Point, q: &Point) -> Result<f64> {
        let dims_ok = |a: &Point| {
            a.context.len() == self.context_dim() && a.arm.len() == self.arm_dim()
        };
        if !dims_ok(p) || !dims_ok(q) {
            return Err(Error::config("point", "dimension mismatch with metric"));
        }
        Ok(self.distance(p, q))
    }

    pub(crate) fn distance_parts(
        &self,
        p_context: &[f64],
        p_arm: &[f64],
        q_context: &[f64],
        q_arm: &[f64],
    ) -> f64 {
        assert_eq!(p_context.len(), self.context_dim(), "context dimension mismatch");
        assert_eq!(q_context.len(), self.context_dim(), "context dimension mismatch");
        assert_eq!(p_arm.len(), self.arm_dim(), "arm dimension mismatch");
        assert_eq!(q_arm.len(), self.arm_dim(), "arm dimension mismatch");
        let terms = axis_terms(&self.context_scales, p_context, q_context)
            .chain(axis_terms(&self.arm_scales, p_arm, q_arm));
        match self.kind {
            MetricKind::ScaledEuclidean => terms.map(|d| d * d).sum::<f64>().sqrt(),
            MetricKind::MaxOfPerAxis => terms.fold(0.0, f64::max),
        }
    }

    /// Distance restricted to the context axes. It never exceeds the full
    /// distance, so a ball whose context gap exceeds its radius cannot meet
    /// the context slice.
    pub(crate) fn context_gap(&self, p_context: &[f64], q_context: &[f64]) -> f64 {
        let terms = axis_terms(&self.context_scales, p_context, q_context);
        match self.kind {
            MetricKind::ScaledEuclidean => terms.map(|d| d * d).sum::<f64>().sqrt(),
            MetricKind::MaxOfPerAxis => terms.fold(0.0, f64::max),
        }
    }
}

fn axis_terms<'a>(
    scales: &'a [f64],
    a: &'a [f64],
    b: &'a [f64],
) -> impl Iterator<Item = f64> + 'a {
    scales
        .iter()
        .zip(a.iter().zip(b))
        .map(|(s, (u, v))| s * (u - v).abs())
}

/// A closed ball of the active collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub id: usize,
    pub center: Point,
    /// Radius is `2^-depth`.
    pub depth: u32,
    pub radius: f64,
    pub parent: Option<usize>,
    pub birth_round: u64,
}

impl Ball {
    pub fn root(center: Point) -> Self {
        Ball {
            id: 0,
            center,
            depth: 0,
            radius: 1.0,
            parent: None,
            birth_round: 1,
        }
    }

    /// A half-radius child of `parent` centred at `center`.
    pub fn child_of(parent: &Ball, id: usize, center: Point, birth_round: u64) -> Self {
        let depth = parent.depth + 1;
        Ball {
            id,
            center,
            depth,
            radius: radius_at_depth(depth),
            parent: Some(parent.id),
            birth_round,
        }
    }

    /// Closed-ball membership.
    pub fn contains(&self, p: &Point, metric: &Metric) -> bool {
        metric.distance(&self.center, p) <= self.radius
    }

    pub(crate) fn contains_parts(&self, context: &[f64], arm: &[f64], metric: &Metric) -> bool {
        metric.distance_parts(&self.center.context, &self.center.arm, context, arm) <= self.radius
    }
}

pub fn radius_at_depth(depth: u32) -> f64 {
    0.5f64.powi(depth as i32)
}

/// True iff `p` lies in the domain of `ball` with respect to `active`.
///
/// Panics if `ball` is not a member of `active`.
pub fn domain_contains(ball: &Ball, active: &[Ball], p: &Point, metric: &Metric) -> bool {
    assert!(
        active.iter().any(|b| b == ball),
        "ball {} is not in the active collection",
        ball.id
    );
    ball.contains(p, metric)
        && !active
            .iter()
            .any(|b| b.radius < ball.radius && b.contains(p, metric))
}

/// True iff every probe lies in the domain of at least one active ball.
pub fn verify_cover(active: &[Ball], probes: &[Point], metric: &Metric) -> bool {
    probes.iter().all(|p| {
        active
            .iter()
            .any(|b| domain_contains(b, active, p, metric))
    })
}

/// Uniform grid of `per_axis^dim` arms on `[0,1]^dim`, in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmGrid {
    per_axis: usize,
    dim: usize,
    arms: Vec<Vec<f64>>,
}

impl ArmGrid {
    pub fn new(per_axis: usize, dim: usize) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::config("arm_grid_size", "need at least 2 points per axis"));
        }
        if dim == 0 {
            return Err(Error::config("arm_dim", "need at least one arm axis"));
        }
        let total = per_axis
            .checked_pow(dim as u32)
            .filter(|n| *n <= 1 << 24)
            .ok_or_else(|| Error::config("arm_grid_size", "grid too large"))?;
        let step = 1.0 / (per_axis - 1) as f64;
        let arms = (0..total)
            .map(|mut flat| {
                let mut arm = vec![0.0; dim];
                for coord in arm.iter_mut().rev() {
                    *coord = grid_coordinate(flat % per_axis, per_axis, step);
                    flat /= per_axis;
                }
                arm
            })
            .collect();
        Ok(ArmGrid {
            per_axis,
            dim,
            arms,
        })
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm(&self, index: usize) -> &[f64] {
        &self.arms[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.arms.iter().map(Vec::as_slice)
    }
}

// i/(M-1), with the last point pinned to exactly 1.
fn grid_coordinate(i: usize, per_axis: usize, step: f64) -> f64 {
    if i + 1 == per_axis {
        1.0
    } else {
        i as f64 * step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_are_at_distance_zero() {
        let m = Metric::scaled_euclidean(1, 1);
        let p = Point::scalar(0.3, 0.9);
        assert_eq!(m.distance(&p, &p), 0.0);
    }

    #[test]
    fn opposite_corners_are_at_distance_one() {
        let m = Metric::scaled_euclidean(1, 1);
        let d = m.distance(&Point::scalar(0.0, 0.0), &Point::scalar(1.0, 1.0));
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_step_on_one_axis() {
        let m = Metric::scaled_euclidean(1, 1);
        let d = m.distance(&Point::scalar(0.0, 0.0), &Point::scalar(1.0, 0.0));
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let m = Metric::scaled_euclidean(1, 1);
        let p = Point::new(vec![0.1, 0.2], vec![0.3]);
        assert!(matches!(
            m.try_distance(&p, &Point::scalar(0.0, 0.0)),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn oversized_scales_rejected() {
        let err = Metric::new(MetricKind::ScaledEuclidean, vec![1.0], vec![1.0]);
        assert!(err.is_err());
        assert!(Metric::new(MetricKind::MaxOfPerAxis, vec![1.0], vec![1.0]).is_ok());
        assert!(Metric::new(MetricKind::MaxOfPerAxis, vec![1.5], vec![1.0]).is_err());
        assert!(Metric::new(MetricKind::ScaledEuclidean, vec![0.0], vec![0.5]).is_err());
    }

    #[test]
    fn default_metric_accepted_in_higher_dimensions() {
        for dx in 1..5 {
            for dy in 1..5 {
                let m = Metric::scaled_euclidean(dx, dy);
                let lo = Point::new(vec![0.0; dx], vec![0.0; dy]);
                let hi = Point::new(vec![1.0; dx], vec![1.0; dy]);
                assert!(m.distance(&lo, &hi) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn radius_one_ball_contains_the_cube() {
        let m = Metric::scaled_euclidean(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        for p in [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)] {
            assert!(root.contains(&Point::scalar(p.0, p.1), &m));
        }
        let corner = Ball::root(Point::scalar(0.0, 0.0));
        assert!(corner.contains(&Point::scalar(1.0, 1.0), &m));
    }

    #[test]
    fn boundary_belongs_to_the_ball() {
        let m = Metric::max_of_per_axis(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        let child = Ball::child_of(&root, 1, Point::scalar(0.5, 0.5), 2);
        let quarter = Ball::child_of(&child, 2, Point::scalar(0.5, 0.5), 3);
        assert_eq!(quarter.radius, 0.25);
        let edge = Point::scalar(0.75, 0.5);
        assert_eq!(m.distance(&quarter.center, &edge), 0.25);
        assert!(quarter.contains(&edge, &m));
        assert!(quarter.contains(&quarter.center, &m));
        assert!(!quarter.contains(&Point::scalar(0.76, 0.5), &m));
    }

    #[test]
    fn single_root_domain_is_everything() {
        let m = Metric::scaled_euclidean(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        let active = vec![root.clone()];
        assert!(domain_contains(&root, &active, &Point::scalar(0.0, 1.0), &m));
    }

    #[test]
    fn smaller_ball_carves_out_of_parent_domain() {
        let m = Metric::scaled_euclidean(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        let child = Ball::child_of(&root, 1, Point::scalar(0.2, 0.2), 2);
        let active = vec![root.clone(), child.clone()];
        let inside = Point::scalar(0.25, 0.2);
        assert!(!domain_contains(&root, &active, &inside, &m));
        assert!(domain_contains(&child, &active, &inside, &m));
        let outside = Point::scalar(1.0, 1.0);
        assert!(domain_contains(&root, &active, &outside, &m));
    }

    #[test]
    fn equal_radius_domains_may_overlap() {
        let m = Metric::scaled_euclidean(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        let a = Ball::child_of(&root, 1, Point::scalar(0.3, 0.5), 2);
        let b = Ball::child_of(&root, 2, Point::scalar(0.7, 0.5), 3);
        let active = vec![root, a.clone(), b.clone()];
        let overlap = Point::scalar(0.5, 0.5);
        assert!(domain_contains(&a, &active, &overlap, &m));
        assert!(domain_contains(&b, &active, &overlap, &m));
    }

    #[test]
    #[should_panic(expected = "not in the active collection")]
    fn domain_query_for_inactive_ball_panics() {
        let m = Metric::scaled_euclidean(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        let stray = Ball::child_of(&root, 7, Point::scalar(0.1, 0.1), 2);
        domain_contains(&stray, &[root], &Point::scalar(0.1, 0.1), &m);
    }

    fn probe_grid(n: usize) -> Vec<Point> {
        let step = 1.0 / (n - 1) as f64;
        (0..n)
            .flat_map(|i| (0..n).map(move |j| Point::scalar(i as f64 * step, j as f64 * step)))
            .collect()
    }

    #[test]
    fn cover_holds_with_root_and_fails_without_it() {
        let m = Metric::scaled_euclidean(1, 1);
        let root = Ball::root(Point::scalar(0.5, 0.5));
        let child = Ball::child_of(&root, 1, Point::scalar(0.1, 0.1), 2);
        let probes = probe_grid(21);
        assert!(verify_cover(std::slice::from_ref(&root), &probes, &m));
        assert!(verify_cover(&[root, child.clone()], &probes, &m));
        // (1,1) is sqrt(2*0.81)/sqrt(2) = 0.9 from the child centre.
        assert!(!verify_cover(&[child], &probes, &m));
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = ArmGrid::new(101, 1).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g.arm(0), &[0.0]);
        assert_eq!(g.arm(100), &[1.0]);
        assert_eq!(g.arm(50), &[0.5]);
        let g2 = ArmGrid::new(3, 2).unwrap();
        assert_eq!(g2.len(), 9);
        assert_eq!(g2.arm(5), &[0.5, 1.0]);
        assert!(ArmGrid::new(1, 1).is_err());
    }
}
