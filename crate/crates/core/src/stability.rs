//! Stable-throughput regions in the `(lambda1, lambda2)` plane.
//!
//! Every half-duplex, finite-battery and full-duplex region shares one shape:
//! a triangle `O-B-D` cut by the Type I condition
//! `lambda1 <= q1 (1 - lambda2 / (1 - q1))` and the Type II energy line
//! `lambda2 <= (1 - q1) m lambda1 / (q1 (1 - m))`, where `m` is the effective
//! Type II transmission rate under backlog. They differ only in `m`:
//!
//! * infinite half-duplex battery: `m = min{q1 p_h / (1 + q1 p_h), q2}`
//! * finite battery of `M` units:  `m = q2 zeta`
//! * full-duplex harvesting:       `m = q2 Psi`
//!
//! The closure over all `(q1, q2)` is an implicit inequality and is evaluated
//! pointwise; its boundary is found by bisection.

use serde::{Deserialize, Serialize};

use crate::battery::{
    occupancy_full_duplex_infinite, occupancy_half_duplex_finite,
};
use crate::params::HarvestProbs;

/// Slack applied to every membership inequality so that analytic boundary
/// points test as inside despite rounding.
pub const MEMBERSHIP_EPS: f64 = 1e-12;

/// Bisection tolerance used by [`trace_boundary`].
pub const TRACE_TOL: f64 = 1e-9;

/// `min{q1 p_h / (1 + q1 p_h), q2}`: Type II's effective transmission rate under backlog.
pub fn effective_rate(q1: f64, q2: f64, p_h1: f64) -> f64 {
    q2_star(q1, p_h1).min(q2)
}

/// Smallest `q2` that maximises Type II's service rate.
pub fn q2_star(q1: f64, p_h1: f64) -> f64 {
    let a = q1 * p_h1;
    a / (1.0 + a)
}

/// Renewal-reward rate of a Type II node that transmits as soon as it has energy:
/// one packet per `1 + 1/(q1 p_h)` slots.
pub fn renewal_reward_rate(q1: f64, p_h1: f64) -> f64 {
    let harvest = q1 * p_h1;
    if harvest <= 0.0 {
        return 0.0;
    }
    let expected_reward = 1.0;
    let expected_cycle = 1.0 + 1.0 / harvest;
    expected_reward / expected_cycle
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturatedRates {
    pub mu1_s: f64,
    pub mu2_s: f64,
    pub lambda1_tilde: f64,
    pub q2_star: f64,
    pub q2_eff: f64,
}

/// Service rates with both data queues saturated.
pub fn saturated_rates(q1: f64, q2: f64, p_h1: f64) -> SaturatedRates {
    let m = effective_rate(q1, q2, p_h1);
    let mu1_s = q1 * (1.0 - m);
    SaturatedRates {
        mu1_s,
        mu2_s: (1.0 - q1) * m,
        lambda1_tilde: mu1_s,
        q2_star: q2_star(q1, p_h1),
        q2_eff: renewal_reward_rate(q1, p_h1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    /// Exact region of the deprived system.
    Deprived,
    /// The same triangle read as an inner bound of the equivalent system.
    InnerBound,
    /// First dominant system (Type II sends dummy packets).
    DominantFirst,
    /// Interference-limited part of the second dominant system.
    DominantSecond,
    /// Union of the inner bound over all transmission probabilities.
    Closure,
    FiniteBattery,
    FullDuplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Shape {
    /// `lambda1 <= q1 (1 - lambda2/(1-q1))`, `lambda2 <= slope(m) lambda1`.
    Triangle { q1: f64, m: f64 },
    /// `lambda1 <= lambda1_tilde`, `lambda2 <= slope(m) lambda1`.
    DominantFirst { q1: f64, m: f64 },
    /// `lambda1_tilde <= lambda1 <= q1 (1 - lambda2/(1-q1))`, `lambda2 <= mu2_s`.
    DominantSecond { q1: f64, m: f64 },
    Closure { p_h1: f64 },
}

/// A stability region: membership predicate plus analytic upper boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub shape: Shape,
}

fn energy_slope(q1: f64, m: f64) -> f64 {
    let den = q1 * (1.0 - m);
    if den <= 0.0 {
        0.0
    } else {
        (1.0 - q1) * m / den
    }
}

/// `lambda1 <= q1 (1 - lambda2/(1-q1))`; for `q1 = 1` only `lambda2 = 0` survives.
fn type1_condition(q1: f64, l1: f64, l2: f64) -> bool {
    if q1 >= 1.0 {
        l2 <= MEMBERSHIP_EPS && l1 <= q1 + MEMBERSHIP_EPS
    } else {
        l1 <= q1 * (1.0 - l2 / (1.0 - q1)) + MEMBERSHIP_EPS
    }
}

/// Largest `lambda1` allowed by the Type I condition at `lambda2`.
fn type1_limit(q1: f64, l2: f64) -> f64 {
    if q1 >= 1.0 {
        if l2 <= 0.0 {
            q1
        } else {
            f64::NEG_INFINITY
        }
    } else {
        q1 * (1.0 - l2 / (1.0 - q1))
    }
}

impl Shape {
    fn corner_b(q1: f64, m: f64) -> (f64, f64) {
        (q1 * (1.0 - m), (1.0 - q1) * m)
    }
}

impl RegionSpec {
    pub fn contains(&self, l1: f64, l2: f64) -> bool {
        if l1 < -MEMBERSHIP_EPS || l2 < -MEMBERSHIP_EPS {
            return false;
        }
        match self.shape {
            Shape::Triangle { q1, m } => {
                type1_condition(q1, l1, l2) && l2 <= energy_slope(q1, m) * l1 + MEMBERSHIP_EPS
            }
            Shape::DominantFirst { q1, m } => {
                let (b1, _) = Shape::corner_b(q1, m);
                l1 <= b1 + MEMBERSHIP_EPS && l2 <= energy_slope(q1, m) * l1 + MEMBERSHIP_EPS
            }
            Shape::DominantSecond { q1, m } => {
                let (b1, b2) = Shape::corner_b(q1, m);
                l1 >= b1 - MEMBERSHIP_EPS
                    && type1_condition(q1, l1, l2)
                    && l2 <= b2 + MEMBERSHIP_EPS
            }
            Shape::Closure { p_h1 } => closure_contains(p_h1, l1, l2),
        }
    }

    /// Range of `lambda1` over which the region has points.
    pub fn lambda1_range(&self) -> (f64, f64) {
        match self.shape {
            Shape::Triangle { q1, .. } => (0.0, q1),
            Shape::DominantFirst { q1, m } => (0.0, Shape::corner_b(q1, m).0),
            Shape::DominantSecond { q1, m } => (Shape::corner_b(q1, m).0, q1),
            Shape::Closure { .. } => (0.0, 1.0),
        }
    }

    /// Corner `B` of the triangle shapes.
    pub fn corner(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Triangle { q1, m }
            | Shape::DominantFirst { q1, m }
            | Shape::DominantSecond { q1, m } => Some(Shape::corner_b(q1, m)),
            Shape::Closure { .. } => None,
        }
    }

    /// Analytic upper boundary as a polyline ordered by `lambda1`.
    ///
    /// Triangles are exact with their vertices; the closure is sampled at
    /// `closure_points` abscissae along its two analytic arcs.
    pub fn boundary(&self, closure_points: usize) -> Vec<(f64, f64)> {
        match self.shape {
            Shape::Triangle { q1, m } => vec![(0.0, 0.0), Shape::corner_b(q1, m), (q1, 0.0)],
            Shape::DominantFirst { q1, m } => {
                let b = Shape::corner_b(q1, m);
                vec![(0.0, 0.0), b, (b.0, 0.0)]
            }
            Shape::DominantSecond { q1, m } => {
                let b = Shape::corner_b(q1, m);
                vec![(b.0, 0.0), b, (q1, 0.0)]
            }
            Shape::Closure { p_h1 } => {
                let n = closure_points.max(2);
                (0..n)
                    .map(|i| {
                        let x = i as f64 / (n - 1) as f64;
                        (x, closure_boundary_at(p_h1, x))
                    })
                    .collect()
            }
        }
    }

    /// Euclidean distance from a point to the analytic upper boundary.
    pub fn boundary_distance(&self, l1: f64, l2: f64) -> f64 {
        let poly = self.boundary(2001);
        poly.windows(2)
            .map(|w| segment_distance((l1, l2), w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// `lambda2 <= (p_h lambda1 / 2)(1 - lambda1 + lambda2 + sqrt((1 + lambda1 - lambda2)^2 - 4 lambda1))`.
///
/// A negative discriminant means no `q1` satisfies the Type I condition, so
/// the point is outside.
fn closure_contains(p_h1: f64, l1: f64, l2: f64) -> bool {
    if l1 > 1.0 + MEMBERSHIP_EPS {
        return false;
    }
    let b = 1.0 + l1 - l2;
    if b < 0.0 {
        return false;
    }
    let disc = b * b - 4.0 * l1;
    if disc < -MEMBERSHIP_EPS {
        return false;
    }
    let root = disc.max(0.0).sqrt();
    l2 <= 0.5 * p_h1 * l1 * (1.0 - l1 + l2 + root) + MEMBERSHIP_EPS
}

/// `lambda1` where the trace of `B` meets the `sqrt(lambda1) + sqrt(lambda2) = 1` arc.
pub fn closure_switch_point(p_h1: f64) -> f64 {
    let p = p_h1;
    (1.0 + 2.0 * p - (1.0 + 4.0 * p).sqrt()) / (2.0 * p * p)
}

/// Trace of corner `B` over `q1`: `y = p_h x (1 - x / (1 - p_h x))`.
pub fn corner_trace(p_h1: f64, x: f64) -> f64 {
    p_h1 * x * (1.0 - x / (1.0 - p_h1 * x))
}

/// Upper boundary of the closure at `lambda1 = x`.
pub fn closure_boundary_at(p_h1: f64, x: f64) -> f64 {
    if x <= closure_switch_point(p_h1) {
        corner_trace(p_h1, x).max(0.0)
    } else {
        (1.0 - x.sqrt()).powi(2)
    }
}

/// Exact stability region of the deprived system.
pub fn region_r_d(q1: f64, q2: f64, p_h1: f64) -> RegionSpec {
    RegionSpec {
        kind: RegionKind::Deprived,
        shape: Shape::Triangle {
            q1,
            m: effective_rate(q1, q2, p_h1),
        },
    }
}

/// Inner bound for the equivalent Bernoulli-harvesting system (same triangle).
pub fn region_inner_bound(q1: f64, q2: f64, p_h1: f64) -> RegionSpec {
    RegionSpec {
        kind: RegionKind::InnerBound,
        ..region_r_d(q1, q2, p_h1)
    }
}

pub fn region_dominant_first(q1: f64, q2: f64, p_h1: f64) -> RegionSpec {
    RegionSpec {
        kind: RegionKind::DominantFirst,
        shape: Shape::DominantFirst {
            q1,
            m: effective_rate(q1, q2, p_h1),
        },
    }
}

pub fn region_dominant_second_interference(q1: f64, q2: f64, p_h1: f64) -> RegionSpec {
    let m = effective_rate(q1, q2, p_h1);
    debug_assert!(q1 * (1.0 - m) <= q1);
    RegionSpec {
        kind: RegionKind::DominantSecond,
        shape: Shape::DominantSecond { q1, m },
    }
}

pub fn region_closure(p_h1: f64) -> RegionSpec {
    RegionSpec {
        kind: RegionKind::Closure,
        shape: Shape::Closure { p_h1 },
    }
}

pub fn region_finite_battery(q1: f64, q2: f64, p_h1: f64, m: u32) -> RegionSpec {
    let zeta = occupancy_half_duplex_finite(q1, q2, p_h1, m);
    RegionSpec {
        kind: RegionKind::FiniteBattery,
        shape: Shape::Triangle { q1, m: q2 * zeta },
    }
}

pub fn region_full_duplex(q1: f64, q2: f64, probs: &HarvestProbs) -> RegionSpec {
    let psi = occupancy_full_duplex_infinite(q1, q2, probs);
    RegionSpec {
        kind: RegionKind::FullDuplex,
        shape: Shape::Triangle { q1, m: q2 * psi },
    }
}

/// For `n_points` evenly spaced `lambda1` over the region's range, bisects
/// for the largest `lambda2` in `[0, 1]` still inside.
pub fn trace_boundary(region: &RegionSpec, n_points: usize) -> Vec<(f64, f64)> {
    let n = n_points.max(2);
    let (lo, hi) = region.lambda1_range();
    (0..n)
        .map(|i| {
            let l1 = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (l1, sup_lambda2(region, l1))
        })
        .collect()
}

fn sup_lambda2(region: &RegionSpec, l1: f64) -> f64 {
    if !region.contains(l1, 0.0) {
        return 0.0;
    }
    if region.contains(l1, 1.0) {
        return 1.0;
    }
    let (mut inside, mut outside) = (0.0, 1.0);
    while outside - inside > TRACE_TOL {
        let mid = 0.5 * (inside + outside);
        if region.contains(l1, mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Triangle boundary's `lambda2` at `lambda1`, or `None` outside `[0, q1]`.
pub fn triangle_height(q1: f64, m: f64, l1: f64) -> Option<f64> {
    if !(0.0..=q1).contains(&l1) {
        return None;
    }
    // inverse of the Type I condition: lambda2 <= (1 - q1)(1 - lambda1/q1)
    let type1 = if q1 >= 1.0 { 0.0 } else { (1.0 - q1) * (1.0 - l1 / q1) };
    debug_assert!(q1 >= 1.0 || type1_limit(q1, type1) - l1 < 1e-9);
    Some(type1.min(energy_slope(q1, m) * l1))
}

/// Uniform grid of `n x n` points on `[0, 1]^2`, endpoints included.
pub fn unit_grid(n: usize) -> impl Iterator<Item = (f64, f64)> {
    let step = 1.0 / (n.max(2) - 1) as f64;
    (0..n).flat_map(move |i| (0..n).map(move |j| (i as f64 * step, j as f64 * step)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::occupancy_half_duplex_infinite;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn saturated_rates_reference() {
        let s = saturated_rates(0.4, 0.4, 0.6);
        assert_abs_diff_eq!(s.mu1_s, 0.4 * (1.0 - 0.24 / 1.24), epsilon = 1e-15);
        assert_abs_diff_eq!(s.mu1_s, 0.32258, epsilon = 1e-5);
        assert_abs_diff_eq!(s.mu2_s, 0.11613, epsilon = 1e-5);
        assert_abs_diff_eq!(s.lambda1_tilde, 0.32258, epsilon = 1e-5);
        assert_abs_diff_eq!(s.q2_star, 0.19355, epsilon = 1e-5);
        assert_abs_diff_eq!(s.q2_eff, s.q2_star, epsilon = 1e-15);
        assert_eq!(s.lambda1_tilde, s.mu1_s);
    }

    #[test]
    fn saturated_rates_edges() {
        let s = saturated_rates(0.0, 0.5, 0.6);
        assert_eq!(s.mu1_s, 0.0);
        assert_eq!(s.mu2_s, 0.0);
        let s = saturated_rates(1.0, 1.0, 0.5);
        assert_abs_diff_eq!(effective_rate(1.0, 1.0, 0.5), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mu1_s, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.mu2_s, 0.0);
    }

    #[test]
    fn effective_rate_folds_occupancy() {
        // q2 * min{rho, 1} == min{q1 p/(1+q1 p), q2}
        for &(q1, q2, p) in &[(0.4, 0.4, 0.6), (0.4, 0.05, 0.6), (0.9, 0.3, 1.0)] {
            let folded = q2 * occupancy_half_duplex_infinite(q1, q2, p);
            assert_abs_diff_eq!(folded, effective_rate(q1, q2, p), epsilon = 1e-15);
        }
    }

    #[test]
    fn r_d_membership() {
        let r = region_r_d(0.4, 0.4, 0.6);
        assert!(r.contains(0.30, 0.10));
        assert!(!r.contains(0.30, 0.12));
        assert!(r.contains(0.0, 0.0));
        assert!(!r.contains(0.4 + 1e-6, 0.0));
        let b = r.corner().unwrap();
        assert!(r.contains(b.0, b.1));
        assert!(!r.contains(b.0, b.1 + 1e-6));
    }

    #[test]
    fn r_d_degenerate_q1() {
        let r = region_r_d(1.0, 0.4, 0.6);
        assert!(r.contains(1.0, 0.0));
        assert!(r.contains(0.5, 0.0));
        assert!(!r.contains(0.5, 1e-6));
        let r = region_r_d(0.0, 0.4, 0.6);
        assert!(r.contains(0.0, 0.0));
        assert!(!r.contains(1e-6, 0.0));
        assert!(!r.contains(0.0, 1e-6));
    }

    #[test]
    fn dominant_regions() {
        let s = saturated_rates(0.4, 0.4, 0.6);
        let r1 = region_dominant_first(0.4, 0.4, 0.6);
        let r2 = region_dominant_second_interference(0.4, 0.4, 0.6);
        assert!(r1.contains(0.0, 0.0));
        assert!(r1.contains(s.lambda1_tilde, s.mu2_s));
        assert!(!r1.contains(s.lambda1_tilde, s.mu2_s + 1e-6));
        assert!(r2.contains(0.33, 0.05));
        assert!(!r2.contains(0.30, 0.01));
        assert!(!r2.contains(0.33, s.mu2_s + 1e-6));
    }

    #[test]
    fn dominant_union_equals_r_d() {
        for &(q1, q2, p) in &[(0.4, 0.4, 0.6), (0.7, 0.1, 0.3), (0.2, 0.9, 1.0)] {
            let rd = region_r_d(q1, q2, p);
            let r1 = region_dominant_first(q1, q2, p);
            let r2 = region_dominant_second_interference(q1, q2, p);
            for (l1, l2) in unit_grid(200) {
                assert_eq!(
                    rd.contains(l1, l2),
                    r1.contains(l1, l2) || r2.contains(l1, l2),
                    "({l1}, {l2}) at {q1},{q2},{p}"
                );
            }
        }
    }

    #[test]
    fn closure_examples() {
        let c = region_closure(0.6);
        for i in 0..=100 {
            assert!(c.contains(i as f64 / 100.0, 0.0));
        }
        assert_abs_diff_eq!(closure_switch_point(0.2), (1.4 - 1.8f64.sqrt()) / 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(closure_switch_point(0.2), 0.729490, epsilon = 1e-6);
        // corner B for q1 = 0.5 sits exactly on the closure boundary
        let (q1, p) = (0.5, 0.6);
        let b = (q1 / (1.0 + q1 * p), q1 * p * (1.0 - q1) / (1.0 + q1 * p));
        assert_abs_diff_eq!(b.0, 0.38462, epsilon = 1e-5);
        assert_abs_diff_eq!(b.1, 0.11538, epsilon = 1e-5);
        assert!(c.contains(b.0, b.1));
        assert!(!c.contains(b.0, b.1 + 1e-6));
        assert_abs_diff_eq!(closure_boundary_at(p, b.0), b.1, epsilon = 1e-12);
    }

    #[test]
    fn closure_arcs_meet() {
        for &p in &[0.1, 0.2, 0.6, 1.0] {
            let x = closure_switch_point(p);
            assert_abs_diff_eq!(corner_trace(p, x), (1.0 - x.sqrt()).powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn closure_contains_every_triangle() {
        let p = 0.6;
        let c = region_closure(p);
        for i in 1..=20 {
            for j in 1..=20 {
                let (q1, q2) = (i as f64 / 20.0, j as f64 / 20.0);
                let rd = region_r_d(q1, q2, p);
                for (l1, l2) in unit_grid(60) {
                    if rd.contains(l1, l2) {
                        assert!(c.contains(l1, l2), "({l1},{l2}) q=({q1},{q2})");
                    }
                }
            }
        }
    }

    #[test]
    fn closure_is_tight_against_triangles() {
        // Points just inside the closure boundary are covered by some triangle.
        let p = 0.6;
        let qs: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        for k in 1..20 {
            let x = k as f64 / 20.0;
            let y = closure_boundary_at(p, x) - 2e-3;
            if y <= 0.0 {
                continue;
            }
            let covered = qs
                .iter()
                .any(|&q1| region_r_d(q1, 1.0, p).contains(x, y));
            assert!(covered, "x={x}");
        }
    }

    #[test]
    fn finite_battery_examples() {
        let r = region_finite_battery(0.4, 0.4, 0.6, 1);
        if let Shape::Triangle { q1, m } = r.shape {
            assert_abs_diff_eq!(m, 0.4 * 0.375, epsilon = 1e-12);
            assert_abs_diff_eq!(energy_slope(q1, m), 0.26471, epsilon = 1e-5);
        } else {
            panic!("triangle expected");
        }
        let big = region_finite_battery(0.4, 0.4, 0.6, 10_000);
        let rd = region_r_d(0.4, 0.4, 0.6);
        for (l1, l2) in unit_grid(200) {
            assert_eq!(big.contains(l1, l2), rd.contains(l1, l2));
        }
    }

    #[test]
    fn full_duplex_examples() {
        let half = HarvestProbs::half_duplex(0.6).unwrap();
        let fd = region_full_duplex(0.4, 0.4, &half);
        let rd = region_r_d(0.4, 0.4, 0.6);
        for (l1, l2) in unit_grid(200) {
            assert_eq!(fd.contains(l1, l2), rd.contains(l1, l2));
        }
    }

    #[test]
    fn trace_matches_triangle_vertices() {
        let r = region_r_d(0.4, 0.4, 0.6);
        let Shape::Triangle { q1, m } = r.shape else { unreachable!() };
        let trace = trace_boundary(&r, 401);
        for &(l1, l2) in &trace {
            let h = triangle_height(q1, m, l1).unwrap();
            assert!((l2 - h).abs() < 1e-6, "{l1}: {l2} vs {h}");
        }
        let b = r.corner().unwrap();
        let nearest = trace
            .iter()
            .map(|&(x, y)| ((x - b.0).powi(2) + (y - b.1).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-3);
        assert_abs_diff_eq!(trace.last().unwrap().0, 0.4, epsilon = 1e-15);
        assert!(trace.last().unwrap().1 < 1e-6);
    }

    #[test]
    fn trace_degenerate_and_closure_end() {
        let empty = region_r_d(0.0, 0.4, 0.6);
        assert!(trace_boundary(&empty, 10).iter().all(|&(x, y)| x == 0.0 && y == 0.0));
        let c = region_closure(0.2);
        let trace = trace_boundary(&c, 201);
        let last = trace.last().unwrap();
        assert_eq!(last.0, 1.0);
        assert!(last.1 < 1e-6);
        for &(x, y) in &trace {
            assert!((y - closure_boundary_at(0.2, x)).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn boundary_distance_basic() {
        let r = region_r_d(0.4, 0.4, 0.6);
        assert!(r.boundary_distance(0.0, 0.0) < 1e-12);
        assert_abs_diff_eq!(r.boundary_distance(0.5, 0.0), 0.1, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn boundary_points_inside_and_just_above_outside(
            q1 in 0.05f64..0.95, q2 in 0.01f64..1.0, p in 0.05f64..1.0, t in 0.0f64..1.0
        ) {
            let r = region_r_d(q1, q2, p);
            let l1 = t * q1;
            let Shape::Triangle { m, .. } = r.shape else { unreachable!() };
            let h = triangle_height(q1, m, l1).unwrap();
            prop_assert!(r.contains(l1, h));
            prop_assert!(!r.contains(l1, h + 1e-6));
        }

        #[test]
        fn memberships_are_down_closed_in_lambda2(
            q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0, p in 0.01f64..=1.0,
            l1 in 0.0f64..1.0, l2 in 0.0f64..1.0, s2 in 0.0f64..=1.0
        ) {
            let regions = [
                region_r_d(q1, q2, p),
                region_dominant_first(q1, q2, p),
                region_dominant_second_interference(q1, q2, p),
                region_closure(p),
                region_finite_battery(q1, q2, p, 3),
            ];
            for r in &regions {
                if r.contains(l1, l2) {
                    prop_assert!(r.contains(l1, l2 * s2), "{:?}", r.kind);
                }
            }
        }

        #[test]
        fn q2_beyond_star_is_irrelevant(q1 in 0.01f64..0.99, p in 0.01f64..1.0, extra in 0.0f64..1.0) {
            let star = q2_star(q1, p);
            let q2 = star + extra * (1.0 - star);
            let a = region_r_d(q1, star, p);
            let b = region_r_d(q1, q2, p);
            for (l1, l2) in unit_grid(40) {
                prop_assert_eq!(a.contains(l1, l2), b.contains(l1, l2));
            }
        }
    }
}
