//! Parameter bundles shared across the crate.
//!
//! Everything here is validated on construction and immutable afterwards.
//! [`ParamSet`] is the loosely-typed layer used by the config file and CLI:
//! a flat `key = value` namespace that resolves into [`SystemParams`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name,
            value,
            reason: "outside allowed range",
        })
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

/// Physical layer parameters of the harvesting link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// RF-to-DC conversion efficiency, in (0, 1].
    pub eta: f64,
    /// Type I transmit power (W).
    pub p1: f64,
    /// Type II transmit power (W). Only used for full-duplex self-interference.
    pub p2: f64,
    /// Energy quantum (J) that makes one battery unit.
    pub gamma: f64,
    /// Composite non-singular pathloss gain `(1 + l^alpha)^-1`, in (0, 1].
    pub pathloss_gain: f64,
    /// Loopback (self-interference) coefficient in [0, 1].
    pub loopback_c: f64,
}

impl PhysicalParams {
    pub fn new(
        eta: f64,
        p1: f64,
        p2: f64,
        gamma: f64,
        pathloss_gain: f64,
        loopback_c: f64,
    ) -> Result<Self> {
        check_positive("eta", eta)?;
        check_range("eta", eta, 0.0, 1.0)?;
        check_positive("p1", p1)?;
        check_positive("p2", p2)?;
        check_positive("gamma", gamma)?;
        check_positive("pathloss_gain", pathloss_gain)?;
        check_range("pathloss_gain", pathloss_gain, 0.0, 1.0)?;
        check_range("loopback_c", loopback_c, 0.0, 1.0)?;
        let phys = Self {
            eta,
            p1,
            p2,
            gamma,
            pathloss_gain,
            loopback_c,
        };
        let theta = derive_theta(&phys);
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidParam {
                name: "theta",
                value: theta,
                reason: "derived theta must be finite and > 0",
            });
        }
        Ok(phys)
    }

    /// Builds the parameters from node distance `l` and pathloss exponent `alpha`.
    pub fn from_geometry(
        eta: f64,
        p1: f64,
        p2: f64,
        gamma: f64,
        distance: f64,
        alpha: f64,
        loopback_c: f64,
    ) -> Result<Self> {
        check_range("distance", distance, 0.0, f64::MAX)?;
        check_positive("alpha", alpha)?;
        Self::new(eta, p1, p2, gamma, pathloss_gain(distance, alpha), loopback_c)
    }

    /// The numerical-validation setting: eta = 0.7, gamma = 0.2335 J, P1 = 1 W, gain 0.5.
    pub fn reference() -> Self {
        Self {
            eta: 0.7,
            p1: 1.0,
            p2: 1.0,
            gamma: 0.2335,
            pathloss_gain: 0.5,
            loopback_c: 0.0,
        }
    }
}

/// `(1 + l^alpha)^-1`.
pub fn pathloss_gain(distance: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + distance.powf(alpha))
}

/// Normalized energy quantum: mean number of extra Type I transmissions per harvested unit.
pub fn derive_theta(phys: &PhysicalParams) -> f64 {
    phys.gamma / (phys.eta * phys.p1 * phys.pathloss_gain)
}

/// Bernoulli harvesting probability whose geometric inter-arrival mean matches `1 + theta`.
pub fn derive_p_h(theta: f64) -> f64 {
    1.0 / (1.0 + theta)
}

/// Harvesting probability from self-interference alone; zero without a loopback path.
pub fn derive_p_h2(phys: &PhysicalParams) -> f64 {
    if phys.loopback_c <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + phys.gamma / (phys.eta * phys.p2 * phys.loopback_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryCapacity {
    Infinite,
    Finite(u32),
}

impl BatteryCapacity {
    pub fn limit(self) -> Option<u32> {
        match self {
            BatteryCapacity::Infinite => None,
            BatteryCapacity::Finite(m) => Some(m),
        }
    }
}

impl fmt::Display for BatteryCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatteryCapacity::Infinite => write!(f, "inf"),
            BatteryCapacity::Finite(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for BatteryCapacity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinite" | "Infinite" => Ok(BatteryCapacity::Infinite),
            other => match other.parse::<u32>() {
                Ok(m) if m >= 1 => Ok(BatteryCapacity::Finite(m)),
                _ => Err(format!(
                    "battery capacity must be `inf` or a positive integer, got `{other}`"
                )),
            },
        }
    }
}

/// MAC-level parameters: transmission probabilities, arrival rates and battery size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub q1: f64,
    pub q2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub battery_capacity: BatteryCapacity,
}

impl ProtocolParams {
    pub fn new(
        q1: f64,
        q2: f64,
        lambda1: f64,
        lambda2: f64,
        battery_capacity: BatteryCapacity,
    ) -> Result<Self> {
        check_range("q1", q1, 0.0, 1.0)?;
        check_range("q2", q2, 0.0, 1.0)?;
        check_range("lambda1", lambda1, 0.0, 1.0)?;
        check_range("lambda2", lambda2, 0.0, 1.0)?;
        if battery_capacity == BatteryCapacity::Finite(0) {
            return Err(Error::InvalidParam {
                name: "battery",
                value: 0.0,
                reason: "finite capacity must be >= 1",
            });
        }
        Ok(Self {
            q1,
            q2,
            lambda1,
            lambda2,
            battery_capacity,
        })
    }

    pub fn with_rates(self, lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(self.q1, self.q2, lambda1, lambda2, self.battery_capacity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplex {
    Half,
    Full,
}

/// Per-slot probability of harvesting one energy unit, indexed by the set of transmitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestProbs {
    /// Only Type I transmits.
    pub p_h1: f64,
    /// Only Type II transmits (self-interference).
    pub p_h2: f64,
    /// Both transmit.
    pub p_h12: f64,
}

impl HarvestProbs {
    pub fn half_duplex(p_h1: f64) -> Result<Self> {
        check_range("p_h1", p_h1, 0.0, 1.0)?;
        Ok(Self {
            p_h1,
            p_h2: 0.0,
            p_h12: 0.0,
        })
    }

    pub fn full_duplex(p_h1: f64, p_h2: f64, p_h12: f64) -> Result<Self> {
        check_range("p_h1", p_h1, 0.0, 1.0)?;
        check_range("p_h2", p_h2, 0.0, 1.0)?;
        check_range("p_h12", p_h12, 0.0, 1.0)?;
        Ok(Self { p_h1, p_h2, p_h12 })
    }

    /// Probability of harvesting given who transmits in the slot.
    pub fn given(&self, tx1: bool, tx2: bool) -> f64 {
        match (tx1, tx2) {
            (true, false) => self.p_h1,
            (false, true) => self.p_h2,
            (true, true) => self.p_h12,
            (false, false) => 0.0,
        }
    }
}

/// Everything a simulation or analysis needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub physical: Option<PhysicalParams>,
    pub protocol: ProtocolParams,
    pub harvest: HarvestProbs,
    pub duplex: Duplex,
}

impl SystemParams {
    /// Half-duplex equivalent-system parameters with an explicit `p_h`.
    pub fn half_duplex(protocol: ProtocolParams, p_h1: f64) -> Result<Self> {
        Ok(Self {
            physical: None,
            protocol,
            harvest: HarvestProbs::half_duplex(p_h1)?,
            duplex: Duplex::Half,
        })
    }

    /// Half-duplex parameters derived from the physical layer (`p_h = 1/(1+theta)`).
    pub fn from_physical(protocol: ProtocolParams, physical: PhysicalParams) -> Result<Self> {
        let p_h1 = derive_p_h(derive_theta(&physical));
        Ok(Self {
            physical: Some(physical),
            protocol,
            harvest: HarvestProbs::half_duplex(p_h1)?,
            duplex: Duplex::Half,
        })
    }

    pub fn full_duplex(protocol: ProtocolParams, harvest: HarvestProbs) -> Self {
        Self {
            physical: None,
            protocol,
            harvest,
            duplex: Duplex::Full,
        }
    }

    pub fn with_physical(mut self, physical: PhysicalParams) -> Self {
        self.physical = Some(physical);
        self
    }

    pub fn with_rates(mut self, lambda1: f64, lambda2: f64) -> Result<Self> {
        self.protocol = self.protocol.with_rates(lambda1, lambda2)?;
        Ok(self)
    }
}

/// Recognised keys of the flat config namespace.
pub const CONFIG_KEYS: &[&str] = &[
    "q1",
    "q2",
    "lambda1",
    "lambda2",
    "battery",
    "duplex",
    "eta",
    "p1",
    "p2",
    "gamma",
    "pathloss_gain",
    "distance",
    "alpha",
    "loopback_c",
    "p_h1",
    "p_h2",
    "p_h12",
];

/// Unresolved `key = value` parameters, as read from a config file and/or CLI flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParamSet {
    values: BTreeMap<String, String>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("empty value for `{key}`"),
                });
            }
            set.set(key, value)?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies `other` on top of `self`; keys present in `other` win.
    pub fn overlay(&mut self, other: &ParamSet) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn number(&self, key: &'static str) -> Result<Option<f64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|_| Error::Config {
                line: 0,
                message: format!("`{key}` expects a decimal number, got `{v}`"),
            }),
        }
    }

    fn number_or(&self, key: &'static str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    pub fn duplex(&self) -> Result<Duplex> {
        match self.values.get("duplex").map(String::as_str) {
            None | Some("half") => Ok(Duplex::Half),
            Some("full") => Ok(Duplex::Full),
            Some(other) => Err(Error::Config {
                line: 0,
                message: format!("`duplex` must be `half` or `full`, got `{other}`"),
            }),
        }
    }

    /// Physical parameters, if any physical key was supplied.
    ///
    /// Unspecified fields fall back to the reference setting. `pathloss_gain`
    /// and the (`distance`, `alpha`) pair are mutually exclusive.
    pub fn physical(&self) -> Result<Option<PhysicalParams>> {
        const PHYS: &[&str] = &[
            "eta",
            "p1",
            "p2",
            "gamma",
            "pathloss_gain",
            "distance",
            "alpha",
            "loopback_c",
        ];
        if !PHYS.iter().any(|k| self.contains(k)) {
            return Ok(None);
        }
        let r = PhysicalParams::reference();
        let eta = self.number_or("eta", r.eta)?;
        let p1 = self.number_or("p1", r.p1)?;
        let p2 = self.number_or("p2", r.p2)?;
        let gamma = self.number_or("gamma", r.gamma)?;
        let c = self.number_or("loopback_c", r.loopback_c)?;
        let geometric = self.contains("distance") || self.contains("alpha");
        if geometric && self.contains("pathloss_gain") {
            return Err(Error::Config {
                line: 0,
                message: "`pathloss_gain` conflicts with `distance`/`alpha`".into(),
            });
        }
        let phys = if geometric {
            let l = self.number("distance")?.ok_or(Error::Missing("distance"))?;
            let a = self.number("alpha")?.ok_or(Error::Missing("alpha"))?;
            PhysicalParams::from_geometry(eta, p1, p2, gamma, l, a, c)?
        } else {
            let g = self.number_or("pathloss_gain", r.pathloss_gain)?;
            PhysicalParams::new(eta, p1, p2, gamma, g, c)?
        };
        Ok(Some(phys))
    }

    /// Resolves into validated parameters.
    ///
    /// Protocol defaults: q1 = q2 = 0.4, zero arrival rates, infinite battery.
    /// `p_h1` falls back to `1/(1+theta)` and full-duplex `p_h2` to the
    /// self-interference formula when physical parameters are present.
    /// Full-duplex `p_h12` has no closed form: it must be supplied, or
    /// estimated by the caller (see [`crate::harvest::estimate_p_h12`]) and
    /// passed through `p_h12_fallback`.
    pub fn resolve(&self, p_h12_fallback: Option<f64>) -> Result<SystemParams> {
        let battery = match self.values.get("battery") {
            None => BatteryCapacity::Infinite,
            Some(v) => v.parse().map_err(|message| Error::Config { line: 0, message })?,
        };
        let protocol = ProtocolParams::new(
            self.number_or("q1", 0.4)?,
            self.number_or("q2", 0.4)?,
            self.number_or("lambda1", 0.0)?,
            self.number_or("lambda2", 0.0)?,
            battery,
        )?;
        let physical = self.physical()?;
        let duplex = self.duplex()?;
        let p_h1 = match (self.number("p_h1")?, &physical) {
            (Some(p), _) => p,
            (None, Some(phys)) => derive_p_h(derive_theta(phys)),
            (None, None) => return Err(Error::Missing("p_h1")),
        };
        let harvest = match duplex {
            Duplex::Half => {
                if self.contains("p_h2") || self.contains("p_h12") {
                    return Err(Error::Config {
                        line: 0,
                        message: "`p_h2`/`p_h12` require `duplex = full`".into(),
                    });
                }
                HarvestProbs::half_duplex(p_h1)?
            }
            Duplex::Full => {
                let p_h2 = match (self.number("p_h2")?, &physical) {
                    (Some(p), _) => p,
                    (None, Some(phys)) => derive_p_h2(phys),
                    (None, None) => return Err(Error::Missing("p_h2")),
                };
                let p_h12 = self
                    .number("p_h12")?
                    .or(p_h12_fallback)
                    .ok_or(Error::Missing("p_h12"))?;
                HarvestProbs::full_duplex(p_h1, p_h2, p_h12)?
            }
        };
        Ok(SystemParams {
            physical,
            protocol,
            harvest,
            duplex,
        })
    }
}
