//! The battery as a birth-death chain under backlogged data queues.
//!
//! With both data queues backlogged the battery decouples: from the empty
//! state it moves up with probability `up_rate`; from any non-empty state it
//! moves up with `up_rate_busy` and down with `down_rate`. Harvested units are
//! usable from the next slot, so the empty state never moves down.

use serde::Serialize;

use crate::params::{BatteryCapacity, HarvestProbs};

/// Relative tolerance for detecting `q2 = q1 p_h / (1 + q1 p_h)`.
const KNIFE_EDGE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryChain {
    /// Arrival probability from the empty state.
    pub up_rate: f64,
    /// Net +1 probability from a non-empty state.
    pub up_rate_busy: f64,
    /// Net -1 probability from a non-empty state.
    pub down_rate: f64,
    pub capacity: BatteryCapacity,
}

impl BatteryChain {
    /// Half-duplex: harvesting only while Type II is silent.
    pub fn half_duplex(q1: f64, q2: f64, p_h1: f64, capacity: BatteryCapacity) -> Self {
        Self {
            up_rate: q1 * p_h1,
            up_rate_busy: q1 * p_h1 * (1.0 - q2),
            down_rate: q2,
            capacity,
        }
    }

    /// Full-duplex: a transmitting node may still harvest (self-interference,
    /// or Type I signal plus self-interference), which cancels its spend.
    pub fn full_duplex(q1: f64, q2: f64, probs: &HarvestProbs, capacity: BatteryCapacity) -> Self {
        Self {
            up_rate: q1 * probs.p_h1,
            up_rate_busy: q1 * (1.0 - q2) * probs.p_h1,
            down_rate: q2 * (1.0 - (1.0 - q1) * probs.p_h2 - q1 * probs.p_h12),
            capacity,
        }
    }
}

/// `min{ q1 p_h / (q2 (1 + q1 p_h)), 1 }`.
pub fn occupancy_half_duplex_infinite(q1: f64, q2: f64, p_h1: f64) -> f64 {
    let a = q1 * p_h1;
    if a <= 0.0 {
        return 0.0;
    }
    if q2 <= 0.0 {
        return 1.0;
    }
    (a / (q2 * (1.0 + a))).min(1.0)
}

/// Non-empty probability with a battery of `m` units.
///
/// Algebraically `rho (1 - x^M) / (1 - rho x^M)` with
/// `x = q1 p_h (1 - q2) / q2`; evaluated as `S / (1 + S)` with
/// `S = (q1 p_h / q2) * sum_{k<M} x^k` so that neither `x -> 1` nor `x^M`
/// overflow loses precision. At `q2 = q1 p_h / (1 + q1 p_h)` (`x = 1`) the
/// geometric sum is exactly `M`.
pub fn occupancy_half_duplex_finite(q1: f64, q2: f64, p_h1: f64, m: u32) -> f64 {
    let a = q1 * p_h1;
    if a <= 0.0 {
        return 0.0;
    }
    if q2 <= 0.0 {
        return 1.0;
    }
    let m = m.max(1) as f64;
    let x = a * (1.0 - q2) / q2;
    // x - 1 without cancellation
    let gap = a - q2 * (1.0 + a);
    let geom = if gap.abs() <= KNIFE_EDGE_RTOL * a.max(q2 * (1.0 + a)) {
        m
    } else if x == 0.0 {
        1.0
    } else {
        (m * x.ln()).exp_m1() / (gap / q2)
    };
    let s = a / q2 * geom;
    if s.is_infinite() {
        1.0
    } else {
        s / (1.0 + s)
    }
}

/// `Psi = min{ q1 p_h1 / (q2 (1 - q1 (p_h12 - p_h1) - (1 - q1) p_h2)), 1 }`.
pub fn occupancy_full_duplex_infinite(q1: f64, q2: f64, probs: &HarvestProbs) -> f64 {
    let num = q1 * probs.p_h1;
    if num <= 0.0 {
        return 0.0;
    }
    let den = q2 * (1.0 - q1 * (probs.p_h12 - probs.p_h1) - (1.0 - q1) * probs.p_h2);
    if den <= 0.0 {
        return 1.0;
    }
    (num / den).min(1.0)
}

/// Numerical steady state of a [`BatteryChain`].
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    /// `1 - pi_0`.
    pub occupancy: f64,
    pub distribution: Vec<f64>,
    /// Estimated mass beyond the truncation (zero for finite chains).
    pub tail_mass: f64,
    /// False when an infinite chain has no stationary distribution.
    pub converged: bool,
}

/// Solves the chain by the balance recurrence `pi_k down = pi_(k-1) up` and normalisation.
///
/// Finite chains are solved on exactly `M + 1` states; infinite chains on
/// `truncation` states, with the geometric tail beyond it estimated. An
/// infinite chain whose busy up-rate reaches its down-rate has no stationary
/// law and reports occupancy 1.
pub fn steady_state_oracle(chain: &BatteryChain, truncation: usize) -> SteadyState {
    let states = match chain.capacity {
        BatteryCapacity::Finite(m) => m as usize + 1,
        BatteryCapacity::Infinite => truncation.max(2),
    };
    let point = |k: usize| {
        let mut d = vec![0.0; states];
        d[k] = 1.0;
        d
    };
    if chain.up_rate <= 0.0 {
        return SteadyState {
            occupancy: 0.0,
            distribution: point(0),
            tail_mass: 0.0,
            converged: true,
        };
    }
    let infinite = chain.capacity == BatteryCapacity::Infinite;
    if chain.down_rate <= 0.0 || (infinite && chain.up_rate_busy >= chain.down_rate) {
        return SteadyState {
            occupancy: 1.0,
            distribution: point(states - 1),
            tail_mass: if infinite { 1.0 } else { 0.0 },
            converged: !infinite,
        };
    }

    // log-space recurrence, normalised with log-sum-exp
    let mut log_pi = Vec::with_capacity(states);
    log_pi.push(0.0);
    log_pi.push(chain.up_rate.ln() - chain.down_rate.ln());
    let step = chain.up_rate_busy.ln() - chain.down_rate.ln();
    for k in 2..states {
        log_pi.push(log_pi[k - 1] + step);
    }
    let max = log_pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_pi.iter().map(|l| (l - max).exp()).sum();
    let log_norm = max + total.ln();
    let distribution: Vec<f64> = log_pi.iter().map(|l| (l - log_norm).exp()).collect();

    let tail_mass = if infinite {
        let x = chain.up_rate_busy / chain.down_rate;
        distribution[states - 1] * x / (1.0 - x)
    } else {
        0.0
    };
    SteadyState {
        occupancy: 1.0 - distribution[0],
        distribution,
        tail_mass,
        converged: true,
    }
}
