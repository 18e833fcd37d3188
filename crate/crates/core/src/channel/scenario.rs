use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierBand {
    /// 2.6 GHz
    Low,
    /// 28 GHz
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    /// 0 km/h
    Static,
    /// 30 km/h
    Urban,
    /// 120 km/h
    Highway,
}

impl Environment {
    pub const ALL: [Environment; 2] = [Environment::Los, Environment::Nlos];

    pub fn key(self) -> &'static str {
        match self {
            Environment::Los => "los",
            Environment::Nlos => "nlos",
        }
    }
}

impl CarrierBand {
    pub const ALL: [CarrierBand; 2] = [CarrierBand::Low, CarrierBand::High];

    pub fn carrier_ghz(self) -> f64 {
        match self {
            CarrierBand::Low => 2.6,
            CarrierBand::High => 28.0,
        }
    }

    /// Band a carrier frequency falls into; 6 GHz splits sub-6 from mmWave.
    pub fn from_ghz(ghz: f64) -> Self {
        if ghz >= 6.0 {
            CarrierBand::High
        } else {
            CarrierBand::Low
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            CarrierBand::Low => "low",
            CarrierBand::High => "high",
        }
    }
}

impl Mobility {
    pub const ALL: [Mobility; 3] = [Mobility::Static, Mobility::Urban, Mobility::Highway];

    pub fn speed_kmh(self) -> f64 {
        match self {
            Mobility::Static => 0.0,
            Mobility::Urban => 30.0,
            Mobility::Highway => 120.0,
        }
    }

    /// Nearest class by absolute speed difference; ties go to the slower class.
    pub fn nearest(speed_kmh: f64) -> Self {
        let mut best = Mobility::Static;
        for m in Mobility::ALL {
            if (m.speed_kmh() - speed_kmh).abs() < (best.speed_kmh() - speed_kmh).abs() {
                best = m;
            }
        }
        best
    }

    pub fn key(self) -> &'static str {
        match self {
            Mobility::Static => "static",
            Mobility::Urban => "urban",
            Mobility::Highway => "highway",
        }
    }
}

/// One of the 12 propagation scenarios (environment x band x mobility).
///
/// Serializes as its stable key, e.g. `"nlos-high-urban"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ScenarioClass {
    pub environment: Environment,
    pub band: CarrierBand,
    pub mobility: Mobility,
}

impl ScenarioClass {
    pub const COUNT: usize = 12;

    pub fn new(environment: Environment, band: CarrierBand, mobility: Mobility) -> Self {
        Self {
            environment,
            band,
            mobility,
        }
    }

    /// All classes in a fixed order: environment, then band, then mobility.
    pub fn all() -> Vec<ScenarioClass> {
        let mut out = Vec::with_capacity(Self::COUNT);
        for e in Environment::ALL {
            for b in CarrierBand::ALL {
                for m in Mobility::ALL {
                    out.push(ScenarioClass::new(e, b, m));
                }
            }
        }
        out
    }

    /// Classes of one environment, in [`ScenarioClass::all`] order.
    pub fn of_environment(env: Environment) -> Vec<ScenarioClass> {
        Self::all()
            .into_iter()
            .filter(|c| c.environment == env)
            .collect()
    }

    /// Position of this class in [`ScenarioClass::all`].
    pub fn index(&self) -> usize {
        let e = self.environment as usize;
        let b = self.band as usize;
        let m = self.mobility as usize;
        (e * 2 + b) * 3 + m
    }

    pub fn key(&self) -> String {
        format!(
            "{}-{}-{}",
            self.environment.key(),
            self.band.key(),
            self.mobility.key()
        )
    }
}

impl fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scenario key `{0}`")]
pub struct ParseScenarioError(pub String);

impl FromStr for ScenarioClass {
    type Err = ParseScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseScenarioError(s.to_string());
        let mut parts = s.trim().split('-');
        let environment = match parts.next() {
            Some(p) if p.eq_ignore_ascii_case("los") => Environment::Los,
            Some(p) if p.eq_ignore_ascii_case("nlos") => Environment::Nlos,
            _ => return Err(err()),
        };
        let band = match parts.next() {
            Some(p) if p.eq_ignore_ascii_case("low") => CarrierBand::Low,
            Some(p) if p.eq_ignore_ascii_case("high") => CarrierBand::High,
            _ => return Err(err()),
        };
        let mobility = match parts.next() {
            Some(p) if p.eq_ignore_ascii_case("static") => Mobility::Static,
            Some(p) if p.eq_ignore_ascii_case("urban") => Mobility::Urban,
            Some(p) if p.eq_ignore_ascii_case("highway") => Mobility::Highway,
            _ => return Err(err()),
        };
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(ScenarioClass::new(environment, band, mobility))
    }
}

impl From<ScenarioClass> for String {
    fn from(c: ScenarioClass) -> String {
        c.key()
    }
}

impl TryFrom<String> for ScenarioClass {
    type Error = ParseScenarioError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
