//! RF energy arrivals.
//!
//! The exact process accumulates received power `eta * P1 * h * gain` (plus
//! self-interference in full duplex) until it reaches the quantum `gamma`,
//! at which point one energy unit enters the battery. With a persistent
//! Type I transmitter and Rayleigh fading the number of slots per unit is a
//! shifted Poisson variable `Z = 1 + Poisson(theta)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::params::PhysicalParams;

/// Which transmissions reach the harvesting circuit in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransmitSet {
    pub type1: bool,
    pub self_interference: bool,
}

impl TransmitSet {
    pub const NONE: Self = Self {
        type1: false,
        self_interference: false,
    };
    pub const TYPE1: Self = Self {
        type1: true,
        self_interference: false,
    };
    pub const SELF: Self = Self {
        type1: false,
        self_interference: true,
    };
    pub const BOTH: Self = Self {
        type1: true,
        self_interference: true,
    };

    pub fn is_empty(&self) -> bool {
        !self.type1 && !self.self_interference
    }
}

/// Received power for pinned fading gains `h` (Type I link) and `g` (loopback).
pub fn received_power(phys: &PhysicalParams, sources: TransmitSet, h: f64, g: f64) -> f64 {
    let mut power = 0.0;
    if sources.type1 {
        power += phys.p1 * h * phys.pathloss_gain;
    }
    if sources.self_interference {
        power += phys.p2 * phys.loopback_c * g;
    }
    phys.eta * power
}

/// Draws independent `Exp(1)` fading gains for the active sources and returns the received power.
pub fn sample_received_power<R: Rng + ?Sized>(
    rng: &mut R,
    phys: &PhysicalParams,
    sources: TransmitSet,
) -> f64 {
    let h = if sources.type1 { Exp1.sample(rng) } else { 0.0 };
    let g = if sources.self_interference {
        Exp1.sample(rng)
    } else {
        0.0
    };
    received_power(phys, sources, h, g)
}

/// Running sum of received energy towards the next quantum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyAccumulator {
    pub accumulated: f64,
}

impl EnergyAccumulator {
    /// Adds `power`; returns 1 and resets to zero once the total reaches `gamma`.
    /// Any residual above `gamma` is discarded.
    pub fn accumulate(&mut self, power: f64, gamma: f64) -> u8 {
        self.accumulated += power;
        if self.accumulated >= gamma {
            self.accumulated = 0.0;
            1
        } else {
            0
        }
    }
}

fn check_k(k: u64) -> Result<()> {
    if k < 1 {
        return Err(Error::Domain(format!("k must be >= 1, got {k}")));
    }
    Ok(())
}

fn ln_poisson(theta: f64, j: u64) -> f64 {
    -theta + j as f64 * theta.ln() - ln_gamma(j as f64 + 1.0)
}

/// `P[Z = k] = e^-theta theta^(k-1) / (k-1)!`, evaluated in log space.
pub fn z_pmf(theta: f64, k: u64) -> Result<f64> {
    check_k(k)?;
    if theta < 0.0 || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be finite and >= 0, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(if k == 1 { 1.0 } else { 0.0 });
    }
    Ok(ln_poisson(theta, k - 1).exp())
}

/// `P[h_1 + ... + h_n < theta]` for iid `Exp(1)` gains, i.e. the `Erlang(n, 1)` CDF.
///
/// Equal to `P[Poisson(theta) >= n]`. Below the mode it is `1 - (lower sum)`;
/// above it the upper tail is summed directly so small probabilities keep
/// their relative precision.
pub fn erlang_cdf(theta: f64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if theta <= 0.0 {
        return 0.0;
    }
    if (n as f64) <= theta {
        let mut term = (-theta).exp();
        let mut sum = term;
        for j in 1..n {
            term *= theta / j as f64;
            sum += term;
        }
        (1.0 - sum).max(0.0)
    } else {
        let mut term = ln_poisson(theta, n).exp();
        let mut sum = 0.0;
        let mut j = n;
        while term > 0.0 && term > sum * 1e-18 {
            sum += term;
            j += 1;
            term *= theta / j as f64;
        }
        sum.min(1.0)
    }
}

/// The same mass as [`z_pmf`], computed as a difference of Erlang CDFs.
pub fn z_pmf_via_erlang(theta: f64, k: u64) -> Result<f64> {
    check_k(k)?;
    Ok(erlang_cdf(theta, k - 1) - erlang_cdf(theta, k))
}

/// Slots-per-energy-unit distribution for a given `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZDistribution {
    pub theta: f64,
}

impl ZDistribution {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Domain(format!("theta must be finite and >= 0, got {theta}")));
        }
        Ok(Self { theta })
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            z_pmf(self.theta, k).expect("theta validated")
        }
    }

    /// Truncation index with tail mass below 1e-10.
    pub fn truncation(&self) -> u64 {
        (self.theta + 12.0 * self.theta.sqrt() + 30.0).ceil() as u64
    }

    pub fn mean(&self) -> f64 {
        1.0 + self.theta
    }

    pub fn partial_sum(&self, kmax: u64) -> f64 {
        (1..=kmax).map(|k| self.pmf(k)).sum()
    }
}

/// Draws `n` inter-arrival times (in slots) of the exact process under a
/// persistent, saturated Type I transmitter and a silent Type II node.
pub fn sample_interarrivals<R: Rng + ?Sized>(
    rng: &mut R,
    phys: &PhysicalParams,
    n: usize,
) -> Vec<u64> {
    let mut acc = EnergyAccumulator::default();
    let mut out = Vec::with_capacity(n);
    let mut slots = 0u64;
    while out.len() < n {
        slots += 1;
        let power = sample_received_power(rng, phys, TransmitSet::TYPE1);
        if acc.accumulate(power, phys.gamma) == 1 {
            out.push(slots);
            slots = 0;
        }
    }
    out
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub significance: f64,
}

impl ChiSquare {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Tests observed inter-arrival samples against `Z`.
///
/// Regular cells cover the contiguous run of `k` whose expected count is at
/// least 5 (the PMF is unimodal); mass on either side is pooled into one head
/// and one tail cell, each folded into its neighbour when undersized.
pub fn chi_square_vs_z(samples: &[u64], theta: f64, significance: f64) -> Result<ChiSquare> {
    let dist = ZDistribution::new(theta)?;
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let n = samples.len() as f64;
    let kmax = dist.truncation().max(samples.iter().copied().max().unwrap_or(1));
    let regular: Vec<u64> = (1..=kmax).filter(|&k| n * dist.pmf(k) >= 5.0).collect();
    let (lo, hi) = match (regular.first(), regular.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::Domain("too few samples for a chi-square test".into())),
    };
    // cells: [head (k < lo)], lo..=hi, [tail (k > hi)]
    let width = (hi - lo + 1) as usize;
    let mut observed = vec![0.0; width + 2];
    for &s in samples {
        let idx = if s < lo {
            0
        } else if s > hi {
            width + 1
        } else {
            (s - lo) as usize + 1
        };
        observed[idx] += 1.0;
    }
    let mut expected = vec![0.0; width + 2];
    expected[0] = n * (1..lo).map(|k| dist.pmf(k)).sum::<f64>();
    for k in lo..=hi {
        expected[(k - lo) as usize + 1] = n * dist.pmf(k);
    }
    let body: f64 = expected.iter().sum();
    expected[width + 1] = (n - body).max(0.0);

    let mut cells: Vec<(f64, f64)> = observed.into_iter().zip(expected).collect();
    if cells[0].1 < 5.0 {
        let (o, e) = cells.remove(0);
        cells[0].0 += o;
        cells[0].1 += e;
    }
    if cells.len() > 1 && cells[cells.len() - 1].1 < 5.0 {
        let (o, e) = cells.pop().unwrap();
        let last = cells.len() - 1;
        cells[last].0 += o;
        cells[last].1 += e;
    }
    let statistic = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let critical = ChiSquared::new(dof as f64)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(1.0 - significance);
    Ok(ChiSquare {
        statistic,
        dof,
        critical,
        significance,
    })
}

/// One row of the `harvest-pmf` table.
#[derive(Debug, Clone, Serialize)]
pub struct PmfRow {
    pub k: u64,
    pub pmf_analytic: f64,
    pub pmf_empirical: f64,
    pub abs_error: f64,
}

/// Compares the empirical histogram of `samples` with the analytic PMF for `k = 1..=kmax`.
pub fn pmf_table(samples: &[u64], theta: f64, kmax: u64) -> Result<Vec<PmfRow>> {
    let dist = ZDistribution::new(theta)?;
    let mut counts = vec![0u64; kmax as usize + 1];
    for &s in samples {
        if s <= kmax {
            counts[s as usize] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    Ok((1..=kmax)
        .map(|k| {
            let analytic = dist.pmf(k);
            let empirical = counts[k as usize] as f64 / n;
            PmfRow {
                k,
                pmf_analytic: analytic,
                pmf_empirical: empirical,
                abs_error: (analytic - empirical).abs(),
            }
        })
        .collect())
}

/// Monte-Carlo estimate of a harvesting probability with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbEstimate {
    pub value: f64,
    pub std_err: f64,
    pub mean_slots: f64,
    pub samples: usize,
}

pub const MIN_ESTIMATION_SAMPLES: usize = 10_000;

/// Estimates `p_h|{1,2}` as the reciprocal mean number of slots to harvest one
/// unit when Type I signal and self-interference are both received every slot.
///
/// The standard error is propagated from the sample mean with the delta method.
pub fn estimate_p_h12<R: Rng + ?Sized>(
    rng: &mut R,
    phys: &PhysicalParams,
    n_samples: usize,
) -> Result<ProbEstimate> {
    if n_samples < MIN_ESTIMATION_SAMPLES {
        return Err(Error::Domain(format!(
            "need at least {MIN_ESTIMATION_SAMPLES} samples, got {n_samples}"
        )));
    }
    let mut acc = EnergyAccumulator::default();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let mut slots = 0u64;
        loop {
            slots += 1;
            let power = sample_received_power(rng, phys, TransmitSet::BOTH);
            if acc.accumulate(power, phys.gamma) == 1 {
                break;
            }
        }
        let z = slots as f64;
        sum += z;
        sum_sq += z * z;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let se_mean = (var / n).sqrt();
    Ok(ProbEstimate {
        value: 1.0 / mean,
        std_err: se_mean / (mean * mean),
        mean_slots: mean,
        samples: n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_p_h, derive_p_h2, derive_theta};
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;

    fn factorial(n: u64) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn pmf_direct_values() {
        // Plain e^-t t^(k-1)/(k-1)! for small k.
        let t: f64 = 0.667;
        assert_abs_diff_eq!(z_pmf(t, 1).unwrap(), (-t).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(z_pmf(t, 1).unwrap(), 0.5133, epsilon = 1e-4);
        assert_abs_diff_eq!(z_pmf(t, 2).unwrap(), 0.3424, epsilon = 1e-4);
        assert_abs_diff_eq!(
            z_pmf(2.0, 5).unwrap(),
            (-2.0f64).exp() * 16.0 / factorial(4),
            epsilon = 1e-15
        );
        assert_eq!(z_pmf(0.0, 1).unwrap(), 1.0);
        assert_eq!(z_pmf(0.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn pmf_domain_error() {
        assert!(z_pmf(1.0, 0).is_err());
        assert!(z_pmf_via_erlang(1.0, 0).is_err());
        assert!(z_pmf(-1.0, 1).is_err());
    }

    #[test]
    fn pmf_large_k_no_overflow() {
        let p = z_pmf(10.0, 400).unwrap();
        assert!((0.0..1e-100).contains(&p));
    }

    #[test]
    fn erlang_route_agrees() {
        assert_abs_diff_eq!(
            z_pmf_via_erlang(0.667, 1).unwrap(),
            z_pmf(0.667, 1).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            z_pmf_via_erlang(2.0, 3).unwrap(),
            z_pmf(2.0, 3).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(z_pmf_via_erlang(1.0, 1).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        for &theta in &[0.1, 0.667, 2.0, 10.0] {
            for k in 1..=100 {
                let a = z_pmf(theta, k).unwrap();
                let b = z_pmf_via_erlang(theta, k).unwrap();
                assert!((a - b).abs() <= 1e-12, "theta={theta} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn truncated_mass_and_mean() {
        for &theta in &[0.1, 0.667, 2.0, 10.0, 50.0] {
            let d = ZDistribution::new(theta).unwrap();
            let kmax = d.truncation();
            let mass = d.partial_sum(kmax);
            assert!(1.0 - mass < 1e-10, "theta={theta} residual {}", 1.0 - mass);
            let mean: f64 = (1..=kmax).map(|k| k as f64 * d.pmf(k)).sum();
            assert!((mean - d.mean()).abs() < 1e-8, "theta={theta}");
        }
    }

    #[test]
    fn accumulator_threshold() {
        let gamma = 1.0;
        let mut acc = EnergyAccumulator::default();
        assert_eq!(acc.accumulate(1.2, gamma), 1);
        assert_eq!(acc.accumulated, 0.0);
        let mut acc = EnergyAccumulator { accumulated: 0.9 };
        assert_eq!(acc.accumulate(0.05, gamma), 0);
        assert_abs_diff_eq!(acc.accumulated, 0.95, epsilon = 1e-15);
        let mut acc = EnergyAccumulator::default();
        assert_eq!(acc.accumulate(gamma, gamma), 1);
    }

    #[test]
    fn received_power_pinned() {
        let phys = PhysicalParams::reference();
        assert_eq!(received_power(&phys, TransmitSet::NONE, 1.0, 1.0), 0.0);
        assert_abs_diff_eq!(
            received_power(&phys, TransmitSet::TYPE1, 1.0, 0.0),
            0.35,
            epsilon = 1e-15
        );
        let mut rng = stream(1, 0, Purpose::Fading);
        assert_eq!(sample_received_power(&mut rng, &phys, TransmitSet::NONE), 0.0);
    }

    #[test]
    fn received_power_mean() {
        let phys = PhysicalParams::reference();
        let mut rng = stream(11, 0, Purpose::Fading);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| sample_received_power(&mut rng, &phys, TransmitSet::TYPE1))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.35).abs() / 0.35 < 0.01, "mean {mean}");
    }

    #[test]
    fn interarrivals_match_shifted_poisson() {
        let phys = PhysicalParams::reference();
        let theta = derive_theta(&phys);
        let mut rng = stream(2024, 0, Purpose::Fading);
        let samples = sample_interarrivals(&mut rng, &phys, 100_000);
        let mean = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
        assert!((mean - (1.0 + theta)).abs() / (1.0 + theta) < 0.01, "mean {mean}");
        let chi = chi_square_vs_z(&samples, theta, 0.01).unwrap();
        assert!(chi.passes(), "{chi:?}");
    }

    #[test]
    fn chi_square_rejects_wrong_theta() {
        let phys = PhysicalParams::reference();
        let mut rng = stream(5, 0, Purpose::Fading);
        let samples = sample_interarrivals(&mut rng, &phys, 100_000);
        let chi = chi_square_vs_z(&samples, 0.9, 0.01).unwrap();
        assert!(!chi.passes());
    }

    #[test]
    fn pmf_table_rows() {
        let rows = pmf_table(&[1, 1, 2, 5], 0.667, 3).unwrap();
        assert_eq!(rows.len(), 3);
        assert_abs_diff_eq!(rows[0].pmf_empirical, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rows[2].pmf_empirical, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn p_h12_degenerates_without_loopback() {
        let phys = PhysicalParams::reference();
        let mut rng = stream(3, 0, Purpose::Estimation);
        let est = estimate_p_h12(&mut rng, &phys, 50_000).unwrap();
        let exact = derive_p_h(derive_theta(&phys));
        assert!((est.value - exact).abs() <= 3.0 * est.std_err, "{est:?} vs {exact}");
    }

    #[test]
    fn p_h12_self_interference_only() {
        let phys = PhysicalParams::new(0.7, 1.0, 1.0, 0.2335, 1e-12, 0.5).unwrap();
        let mut rng = stream(4, 0, Purpose::Estimation);
        let est = estimate_p_h12(&mut rng, &phys, 50_000).unwrap();
        let exact = derive_p_h2(&phys);
        assert!((est.value - exact).abs() <= 3.0 * est.std_err, "{est:?} vs {exact}");
    }

    #[test]
    fn p_h12_needs_enough_samples() {
        let mut rng = stream(4, 0, Purpose::Estimation);
        assert!(estimate_p_h12(&mut rng, &PhysicalParams::reference(), 100).is_err());
    }
}
