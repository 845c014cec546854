//! Slot-level simulator for the two-node random-access network.
//!
//! One slot proceeds in a fixed order: read the start-of-slot state, toss the
//! transmission coins, resolve the collision channel, charge Type II one
//! energy unit per attempt, harvest, then update the data queues and the
//! battery. A unit harvested in slot `t` can be spent from slot `t + 1` on.
//!
//! Randomness is split into independent streams (see [`crate::rng`]). Every
//! slot consumes exactly two arrival draws, two decision draws and one
//! harvest draw, whatever the variant, so simulators sharing a seed see the
//! same arrival and coin sequences.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{PathPoint, RunMetrics};
use crate::harvest::{sample_received_power, EnergyAccumulator, TransmitSet};
use crate::params::{Duplex, PhysicalParams, SystemParams};
use crate::rng::{stream, Purpose, Rng};
use crate::stability::saturated_rates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// Physical energy accumulation with Rayleigh fading.
    ExactSO,
    /// Bernoulli energy arrivals with the equivalent probabilities.
    EquivalentSG,
    /// Bernoulli arrivals, and Type II stays silent whenever Type I has nothing to send.
    DeprivedSD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dominance {
    None,
    /// Type I transmits dummy packets when its queue is empty.
    Node1Saturated,
    /// Type II transmits dummy packets when its queue is empty (energy permitting).
    Node2DummyBacklogged,
    /// Type I sends dummies only when `lambda1 >= lambda1_tilde`.
    Node1DummyInterferenceRegion,
    /// Both nodes behave as backlogged.
    BothSaturated,
}

impl Dominance {
    fn node1_dummy(self, params: &SystemParams) -> bool {
        match self {
            Dominance::Node1Saturated | Dominance::BothSaturated => true,
            Dominance::Node1DummyInterferenceRegion => {
                let p = &params.protocol;
                let tilde = saturated_rates(p.q1, p.q2, params.harvest.p_h1).lambda1_tilde;
                p.lambda1 >= tilde
            }
            Dominance::None | Dominance::Node2DummyBacklogged => false,
        }
    }

    fn node2_dummy(self) -> bool {
        matches!(self, Dominance::Node2DummyBacklogged | Dominance::BothSaturated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemVariant {
    pub system: SystemKind,
    pub duplex: Duplex,
    pub dominance: Dominance,
}

impl SystemVariant {
    pub fn new(system: SystemKind, duplex: Duplex, dominance: Dominance) -> Self {
        Self {
            system,
            duplex,
            dominance,
        }
    }

    pub fn half(system: SystemKind) -> Self {
        Self::new(system, Duplex::Half, Dominance::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SimState {
    pub q1_len: u64,
    pub q2_len: u64,
    pub battery: u64,
    pub accumulator: EnergyAccumulator,
    pub slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SlotOutcome {
    pub tx1: bool,
    pub tx2: bool,
    pub success1: bool,
    pub success2: bool,
    pub collision: bool,
    pub harvest_arrival: u8,
    pub arrivals: (bool, bool),
}

#[derive(Debug, Clone, Default)]
struct Counters {
    sum_q1: u128,
    sum_q2: u128,
    departures1: u64,
    departures2: u64,
    successes1: u64,
    successes2: u64,
    q2_busy_slots: u64,
    harvest_arrivals: u64,
    battery_busy_slots: u64,
    attempts2: u64,
}

pub struct Simulator {
    params: SystemParams,
    variant: SystemVariant,
    physical: Option<PhysicalParams>,
    capacity: Option<u64>,
    node1_dummy: bool,
    node2_dummy: bool,
    state: SimState,
    arrivals_rng: Rng,
    decisions_rng: Rng,
    harvest_rng: Rng,
    fading_rng: Rng,
    counters: Counters,
    decimation: u64,
    paths: Vec<PathPoint>,
}

impl Simulator {
    /// `decimation = d > 0` records `(slot, q1, q2, battery)` after every `d`-th slot.
    pub fn new(
        params: &SystemParams,
        variant: SystemVariant,
        seed: u64,
        run_index: u64,
        decimation: u64,
    ) -> Result<Self> {
        if variant.duplex != params.duplex {
            return Err(Error::Domain(format!(
                "variant duplex {:?} does not match parameter duplex {:?}",
                variant.duplex, params.duplex
            )));
        }
        if variant.system == SystemKind::ExactSO && params.physical.is_none() {
            return Err(Error::Missing("physical parameters (eta, p1, gamma, pathloss_gain)"));
        }
        Ok(Self {
            params: *params,
            variant,
            physical: params.physical,
            capacity: params.protocol.battery_capacity.limit().map(u64::from),
            node1_dummy: variant.dominance.node1_dummy(params),
            node2_dummy: variant.dominance.node2_dummy(),
            state: SimState::default(),
            arrivals_rng: stream(seed, run_index, Purpose::Arrivals),
            decisions_rng: stream(seed, run_index, Purpose::Decisions),
            harvest_rng: stream(seed, run_index, Purpose::HarvestCoin),
            fading_rng: stream(seed, run_index, Purpose::Fading),
            counters: Counters::default(),
            decimation,
            paths: Vec::new(),
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn variant(&self) -> SystemVariant {
        self.variant
    }

    pub fn step(&mut self) -> SlotOutcome {
        let proto = &self.params.protocol;
        let SimState {
            q1_len: q1,
            q2_len: q2,
            battery,
            ..
        } = self.state;

        let x1 = self.arrivals_rng.random::<f64>() < proto.lambda1;
        let x2 = self.arrivals_rng.random::<f64>() < proto.lambda2;
        let coin1 = self.decisions_rng.random::<f64>();
        let coin2 = self.decisions_rng.random::<f64>();
        let harvest_coin = self.harvest_rng.random::<f64>();

        let node1_has_packet = q1 > 0 || self.node1_dummy;
        let tx1 = node1_has_packet && coin1 < proto.q1;
        let node2_allowed = battery > 0
            && (q2 > 0 || self.node2_dummy)
            && (self.variant.system != SystemKind::DeprivedSD || node1_has_packet);
        let tx2 = node2_allowed && coin2 < proto.q2;

        let collision = tx1 && tx2;
        let success1 = tx1 && !tx2;
        let success2 = tx2 && !tx1;
        let spent = u64::from(tx2);

        let harvest_arrival = match self.variant.system {
            SystemKind::EquivalentSG | SystemKind::DeprivedSD => {
                let p = match self.variant.duplex {
                    Duplex::Half if tx2 => 0.0,
                    _ => self.params.harvest.given(tx1, tx2),
                };
                u8::from(harvest_coin < p)
            }
            SystemKind::ExactSO => {
                let sources = match self.variant.duplex {
                    Duplex::Half => TransmitSet {
                        type1: tx1 && !tx2,
                        self_interference: false,
                    },
                    Duplex::Full => TransmitSet {
                        type1: tx1,
                        self_interference: tx2,
                    },
                };
                if sources.is_empty() {
                    0
                } else {
                    let phys = self.physical.as_ref().expect("checked in new");
                    let power = sample_received_power(&mut self.fading_rng, phys, sources);
                    self.state.accumulator.accumulate(power, phys.gamma)
                }
            }
        };

        let dep1 = success1 && q1 > 0;
        let dep2 = success2 && q2 > 0;
        let c = &mut self.counters;
        c.successes1 += u64::from(success1);
        c.successes2 += u64::from(success2);
        c.departures1 += u64::from(dep1);
        c.departures2 += u64::from(dep2);
        c.q2_busy_slots += u64::from(q2 > 0);
        c.battery_busy_slots += u64::from(battery > 0);
        c.attempts2 += spent;
        c.harvest_arrivals += u64::from(harvest_arrival);

        let new_q1 = q1 - u64::from(dep1) + u64::from(x1);
        let new_q2 = q2 - u64::from(dep2) + u64::from(x2);
        let mut new_battery = battery - spent + u64::from(harvest_arrival);
        if let Some(cap) = self.capacity {
            new_battery = new_battery.min(cap);
        }
        self.state.q1_len = new_q1;
        self.state.q2_len = new_q2;
        self.state.battery = new_battery;
        self.state.slot += 1;
        c.sum_q1 += u128::from(new_q1);
        c.sum_q2 += u128::from(new_q2);

        if self.decimation > 0 && self.state.slot.is_multiple_of(self.decimation) {
            self.paths.push(PathPoint {
                slot: self.state.slot,
                q1: new_q1,
                q2: new_q2,
                battery: new_battery,
            });
        }

        SlotOutcome {
            tx1,
            tx2,
            success1,
            success2,
            collision,
            harvest_arrival,
            arrivals: (x1, x2),
        }
    }

    pub fn advance(&mut self, slots: u64) {
        for _ in 0..slots {
            self.step();
        }
    }

    /// Metrics over all slots simulated so far.
    pub fn metrics(&self) -> RunMetrics {
        let c = &self.counters;
        let n = self.state.slot.max(1) as f64;
        let per_slot = |x: u64| x as f64 / n;
        RunMetrics {
            slots: self.state.slot,
            avg_q1: c.sum_q1 as f64 / n,
            avg_q2: c.sum_q2 as f64 / n,
            throughput1: per_slot(c.departures1),
            throughput2: per_slot(c.departures2),
            success_rate1: per_slot(c.successes1),
            success_rate2: per_slot(c.successes2),
            cond_service2: if c.q2_busy_slots == 0 {
                0.0
            } else {
                c.departures2 as f64 / c.q2_busy_slots as f64
            },
            harvest_rate: per_slot(c.harvest_arrivals),
            battery_occupancy: per_slot(c.battery_busy_slots),
            attempts2: c.attempts2,
            harvest_arrivals: c.harvest_arrivals,
            final_q1: self.state.q1_len,
            final_q2: self.state.q2_len,
            final_battery: self.state.battery,
            paths: (self.decimation > 0).then(|| self.paths.clone()),
        }
    }

    pub fn into_metrics(mut self) -> RunMetrics {
        let mut m = self.metrics();
        if self.decimation > 0 {
            m.paths = Some(std::mem::take(&mut self.paths));
        }
        m
    }
}

pub fn run(
    params: &SystemParams,
    variant: SystemVariant,
    horizon: u64,
    seed: u64,
    decimation: u64,
) -> Result<RunMetrics> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be >= 1".into()));
    }
    let mut sim = Simulator::new(params, variant, seed, 0, decimation)?;
    sim.advance(horizon);
    Ok(sim.into_metrics())
}

/// Runs every variant on the same arrival, decision, harvest and fading streams.
pub fn run_coupled(
    params: &SystemParams,
    variants: &[SystemVariant],
    horizon: u64,
    seed: u64,
    decimation: u64,
) -> Result<Vec<RunMetrics>> {
    if variants.len() < 2 {
        return Err(Error::Domain("run_coupled needs at least two variants".into()));
    }
    variants
        .iter()
        .map(|&v| run(params, v, horizon, seed, decimation))
        .collect()
}

/// First slot at which `upper`'s Q2 falls below `lower`'s, if any.
pub fn first_q2_dominance_violation(upper: &[PathPoint], lower: &[PathPoint]) -> Option<u64> {
    upper
        .iter()
        .zip(lower)
        .find(|(u, l)| u.q2 < l.q2)
        .map(|(u, _)| u.slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{BatteryCapacity, HarvestProbs, ProtocolParams};
    use approx::assert_abs_diff_eq;

    fn sg(q1: f64, q2: f64, l1: f64, l2: f64, p: f64) -> SystemParams {
        let proto = ProtocolParams::new(q1, q2, l1, l2, BatteryCapacity::Infinite).unwrap();
        SystemParams::half_duplex(proto, p).unwrap()
    }

    fn sim(params: &SystemParams, v: SystemVariant, seed: u64) -> Simulator {
        Simulator::new(params, v, seed, 0, 0).unwrap()
    }

    #[test]
    fn single_success_and_collision() {
        let params = sg(1.0, 1.0, 0.0, 0.0, 1.0);
        let mut s = sim(&params, SystemVariant::half(SystemKind::EquivalentSG), 1);
        s.state.q1_len = 1;
        let out = s.step();
        assert!(out.tx1 && out.success1 && !out.tx2 && !out.collision);
        assert_eq!(s.state.q1_len, 0);
        assert_eq!(out.harvest_arrival, 1);
        assert_eq!(s.state.battery, 1);

        s.state.q1_len = 2;
        s.state.q2_len = 2;
        let out = s.step();
        assert!(out.collision && !out.success1 && !out.success2);
        assert_eq!((s.state.q1_len, s.state.q2_len), (2, 2));
        assert_eq!(s.state.battery, 0);
        assert_eq!(out.harvest_arrival, 0);
    }

    #[test]
    fn harvest_only_usable_next_slot() {
        let params = sg(1.0, 1.0, 0.0, 0.0, 1.0);
        let mut s = sim(&params, SystemVariant::half(SystemKind::EquivalentSG), 3);
        s.state.q1_len = 1;
        s.state.q2_len = 1;
        let out = s.step();
        assert!(out.tx1 && !out.tx2);
        assert_eq!(s.state.battery, 1);
        let out = s.step();
        assert!(out.tx2 && out.success2);
        assert_eq!(s.state.battery, 0);
    }

    #[test]
    fn zero_rates_stay_empty() {
        let params = sg(0.4, 0.4, 0.0, 0.0, 0.6);
        let m = run(&params, SystemVariant::half(SystemKind::EquivalentSG), 10_000, 5, 100).unwrap();
        assert_eq!(m.avg_q1, 0.0);
        assert_eq!(m.avg_q2, 0.0);
        assert_eq!(m.throughput1, 0.0);
        assert_eq!(m.harvest_rate, 0.0);
        assert_eq!(m.battery_occupancy, 0.0);
        assert!(m.paths.unwrap().iter().all(|p| p.q1 == 0 && p.q2 == 0));
    }

    #[test]
    fn harvest_rate_with_type1_alone() {
        // Type I always transmits, Type II never does.
        let params = sg(1.0, 0.0, 0.0, 0.0, 0.6);
        let v = SystemVariant::new(SystemKind::EquivalentSG, Duplex::Half, Dominance::Node1Saturated);
        let m = run(&params, v, 1_000_000, 11, 0).unwrap();
        assert!((m.harvest_rate - 0.6).abs() / 0.6 < 0.005, "{}", m.harvest_rate);
    }

    #[test]
    fn determinism_and_identical_coupling() {
        let params = sg(0.4, 0.4, 0.2, 0.05, 0.6);
        let v = SystemVariant::half(SystemKind::EquivalentSG);
        let a = run(&params, v, 50_000, 42, 7).unwrap();
        let b = run(&params, v, 50_000, 42, 7).unwrap();
        assert_eq!(a, b);
        let coupled = run_coupled(&params, &[v, v], 50_000, 42, 7).unwrap();
        assert_eq!(coupled[0], coupled[1]);
        assert_eq!(coupled[0], a);
        assert!(run_coupled(&params, &[v], 10, 1, 0).is_err());
    }

    #[test]
    fn invariants_hold_along_paths() {
        let proto = ProtocolParams::new(0.5, 0.7, 0.2, 0.1, BatteryCapacity::Finite(3)).unwrap();
        let params = SystemParams::half_duplex(proto, 0.5).unwrap();
        for system in [SystemKind::EquivalentSG, SystemKind::DeprivedSD] {
            let mut s = sim(&params, SystemVariant::half(system), 9);
            let mut attempts = 0u64;
            let mut harvested = 0u64;
            for _ in 0..100_000 {
                let before = s.state;
                let out = s.step();
                assert!(!out.tx2 || before.battery > 0);
                assert!(!out.success1 || (out.tx1 && !out.tx2));
                assert!(!out.success2 || (out.tx2 && !out.tx1));
                assert_eq!(out.collision, out.tx1 && out.tx2);
                assert!(!out.tx2 || out.harvest_arrival == 0);
                if system == SystemKind::DeprivedSD && out.tx2 {
                    assert!(before.q1_len > 0);
                }
                assert!(s.state.battery <= 3);
                attempts += u64::from(out.tx2);
                harvested += u64::from(out.harvest_arrival);
                assert!(attempts <= harvested);
            }
        }
    }

    #[test]
    fn saturated_battery_and_rates() {
        let params = sg(0.4, 0.4, 0.0, 0.0, 0.6);
        let v = SystemVariant::new(SystemKind::EquivalentSG, Duplex::Half, Dominance::BothSaturated);
        let m = run(&params, v, 1_000_000, 2024, 0).unwrap();
        assert!((m.battery_occupancy - 0.48387).abs() / 0.48387 < 0.01);
        assert!((m.success_rate1 - 0.32258).abs() / 0.32258 < 0.01);
        assert!((m.success_rate2 - 0.11613).abs() / 0.11613 < 0.01);
        assert_eq!(m.throughput1, 0.0);
    }

    #[test]
    fn interference_region_dummy_switch() {
        let low = sg(0.4, 0.4, 0.3, 0.0, 0.6);
        let high = sg(0.4, 0.4, 0.33, 0.0, 0.6);
        let d = Dominance::Node1DummyInterferenceRegion;
        assert!(!d.node1_dummy(&low));
        assert!(d.node1_dummy(&high));
    }

    #[test]
    fn exact_system_requires_physics_and_matching_duplex() {
        let params = sg(0.4, 0.4, 0.1, 0.1, 0.6);
        assert!(Simulator::new(&params, SystemVariant::half(SystemKind::ExactSO), 1, 0, 0).is_err());
        let fd = SystemVariant::new(SystemKind::EquivalentSG, Duplex::Full, Dominance::None);
        assert!(Simulator::new(&params, fd, 1, 0, 0).is_err());
    }

    #[test]
    fn exact_system_interarrival_mean() {
        let phys = PhysicalParams::reference();
        let proto = ProtocolParams::new(1.0, 0.0, 0.0, 0.0, BatteryCapacity::Infinite).unwrap();
        let params = SystemParams::from_physical(proto, phys).unwrap();
        let v = SystemVariant::new(SystemKind::ExactSO, Duplex::Half, Dominance::Node1Saturated);
        let mut s = sim(&params, v, 77);
        let (mut last, mut arrivals, mut total) = (0u64, 0u64, 0u64);
        while arrivals < 100_000 {
            if s.step().harvest_arrival == 1 {
                total += s.state.slot - last;
                last = s.state.slot;
                arrivals += 1;
            }
        }
        let mean = total as f64 / arrivals as f64;
        let theta = crate::params::derive_theta(&phys);
        assert!((mean - (1.0 + theta)).abs() / (1.0 + theta) < 0.01, "{mean}");
    }

    #[test]
    fn full_duplex_self_harvest_offsets_spend() {
        // Type II alone with p_h2 = 1: every transmission is refunded.
        let proto = ProtocolParams::new(0.0, 1.0, 0.0, 0.0, BatteryCapacity::Infinite).unwrap();
        let probs = HarvestProbs::full_duplex(0.0, 1.0, 0.0).unwrap();
        let params = SystemParams::full_duplex(proto, probs);
        let v = SystemVariant::new(SystemKind::EquivalentSG, Duplex::Full, Dominance::Node2DummyBacklogged);
        let mut s = sim(&params, v, 4);
        s.state.battery = 1;
        for _ in 0..1000 {
            let out = s.step();
            assert!(out.tx2 && out.success2);
            assert_eq!(s.state.battery, 1);
        }
        assert_abs_diff_eq!(s.metrics().success_rate2, 1.0);
        assert_eq!(s.metrics().throughput2, 0.0);
    }

    #[test]
    fn exact_and_equivalent_harvest_rates_agree_saturated() {
        let phys = PhysicalParams::reference();
        let proto = ProtocolParams::new(0.4, 0.4, 0.0, 0.0, BatteryCapacity::Infinite).unwrap();
        let params = SystemParams::from_physical(proto, phys).unwrap();
        let sat = Dominance::BothSaturated;
        let so = run(&params, SystemVariant::new(SystemKind::ExactSO, Duplex::Half, sat), 1_000_000, 8, 0).unwrap();
        let sgm = run(&params, SystemVariant::new(SystemKind::EquivalentSG, Duplex::Half, sat), 1_000_000, 8, 0).unwrap();
        assert!((so.harvest_rate - sgm.harvest_rate).abs() / sgm.harvest_rate < 0.02);
    }
}
