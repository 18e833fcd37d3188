//! Mixture-of-experts routing: a registry of per-scenario diffusion experts
//! and the gates that pick one for a user.

pub mod client;
pub mod gate;
pub mod prompt;
pub mod registry;

pub use client::{make_client, ClientError, CompletionClient, HttpCompletionClient, LlmConfig, RuleEchoClient, ScriptedClient, ScriptedReply};
pub use gate::{llm_gate, random_gate, rule_gate, GateDecision, GateSource};
pub use prompt::{build_prompt, parse_prompt_state, parse_reply, ReplyError};
pub use registry::{ExpertDescriptor, ExpertRegistry, DEFAULT_EXPERT_IDS};

use serde::{Deserialize, Serialize};

use crate::channel::{CarrierBand, Environment, Mobility, ScenarioClass};

/// Environment as reported by the user side; may be unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateEnvironment {
    Los,
    Nlos,
    Unknown,
}

impl StateEnvironment {
    pub fn key(self) -> &'static str {
        match self {
            StateEnvironment::Los => "los",
            StateEnvironment::Nlos => "nlos",
            StateEnvironment::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "los" => Some(StateEnvironment::Los),
            "nlos" => Some(StateEnvironment::Nlos),
            "unknown" => Some(StateEnvironment::Unknown),
            _ => None,
        }
    }
}

impl From<Environment> for StateEnvironment {
    fn from(e: Environment) -> Self {
        match e {
            Environment::Los => StateEnvironment::Los,
            Environment::Nlos => StateEnvironment::Nlos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub environment: StateEnvironment,
    pub carrier_ghz: f64,
    pub speed_kmh: f64,
}

impl UserState {
    pub fn new(environment: StateEnvironment, carrier_ghz: f64, speed_kmh: f64) -> Result<Self, GateError> {
        if !(carrier_ghz > 0.0) || !carrier_ghz.is_finite() {
            return Err(GateError::InvalidState(format!("carrier must be positive, got {carrier_ghz} GHz")));
        }
        if !(speed_kmh >= 0.0) || !speed_kmh.is_finite() {
            return Err(GateError::InvalidState(format!("speed must be non-negative, got {speed_kmh} km/h")));
        }
        Ok(Self {
            environment,
            carrier_ghz,
            speed_kmh,
        })
    }

    /// The nominal state of a scenario class.
    pub fn of_class(class: ScenarioClass) -> Self {
        Self {
            environment: class.environment.into(),
            carrier_ghz: class.band.carrier_ghz(),
            speed_kmh: class.mobility.speed_kmh(),
        }
    }

    pub fn band(&self) -> CarrierBand {
        CarrierBand::from_ghz(self.carrier_ghz)
    }

    pub fn mobility(&self) -> Mobility {
        Mobility::nearest(self.speed_kmh)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("expert registry is empty")]
    EmptyRegistry,
    #[error("invalid user state: {0}")]
    InvalidState(String),
    #[error("invalid registry: {0}")]
    Registry(String),
    #[error("{path}: {message}")]
    RegistryFile { path: std::path::PathBuf, message: String },
}
