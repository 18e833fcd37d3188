use std::collections::BTreeMap;

use super::registry::ExpertRegistry;
use super::{StateEnvironment, UserState};
use crate::channel::{CarrierBand, Environment, Mobility, ScenarioClass};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplyError {
    /// A well-formed answer naming an expert that does not exist.
    #[error("unknown expert id `{0}`")]
    UnknownId(String),
    #[error("no `expert: <id>` line in reply")]
    Malformed,
}

fn env_label(e: Environment) -> &'static str {
    match e {
        Environment::Los => "LoS",
        Environment::Nlos => "NLoS",
    }
}

/// Coverage in words, grouped by environment and band. Class keys are
/// avoided on purpose so that expert ids appear once in the prompt.
fn describe_coverage(coverage: &std::collections::BTreeSet<ScenarioClass>) -> String {
    let mut groups: BTreeMap<(Environment, CarrierBand), Vec<Mobility>> = BTreeMap::new();
    for c in coverage {
        groups.entry((c.environment, c.band)).or_default().push(c.mobility);
    }
    groups
        .into_iter()
        .map(|((env, band), mobs)| {
            let speeds: Vec<String> = mobs.iter().map(|m| format!("{} km/h", m.speed_kmh())).collect();
            format!("{} at {} GHz, speeds {}", env_label(env), band.carrier_ghz(), speeds.join(" / "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Fixed routing prompt: expert list, user state, answer format.
pub fn build_prompt(state: &UserState, registry: &ExpertRegistry) -> String {
    let mut p = String::new();
    p.push_str("You route channel-estimation requests at a base station to one diffusion expert.\n");
    p.push_str("Available experts:\n");
    for e in registry.experts() {
        p.push_str(&format!("- {}: {}\n", e.id, describe_coverage(&e.coverage)));
    }
    p.push_str("User state:\n");
    p.push_str(&format!("environment: {}\n", state.environment.key()));
    p.push_str(&format!("carrier: {} GHz\n", state.carrier_ghz));
    p.push_str(&format!("speed: {} km/h\n", state.speed_kmh));
    p.push_str("Choose the expert whose coverage best matches the user state. ");
    p.push_str("The environment matters most, then the carrier band, then the speed.\n");
    p.push_str("Answer on one line exactly as `expert: <id>`.\n");
    p
}

/// Reads the user state back out of a prompt made by [`build_prompt`].
pub fn parse_prompt_state(prompt: &str) -> Option<UserState> {
    let mut env = None;
    let mut carrier = None;
    let mut speed = None;
    for line in prompt.lines() {
        if let Some(v) = line.strip_prefix("environment: ") {
            env = StateEnvironment::parse(v);
        } else if let Some(v) = line.strip_prefix("carrier: ") {
            carrier = v.strip_suffix(" GHz").and_then(|x| x.parse::<f64>().ok());
        } else if let Some(v) = line.strip_prefix("speed: ") {
            speed = v.strip_suffix(" km/h").and_then(|x| x.parse::<f64>().ok());
        }
    }
    UserState::new(env?, carrier?, speed?).ok()
}

/// Strict reply grammar. The first line of the form `expert: <id>` decides
/// (keyword case-insensitive, whitespace around the id ignored); the id must
/// be registered. Returns the id as spelled in the registry.
pub fn parse_reply(text: &str, registry: &ExpertRegistry) -> Result<String, ReplyError> {
    for line in text.lines() {
        let line = line.trim();
        let Some(head) = line.get(..7) else { continue };
        if !head.eq_ignore_ascii_case("expert:") {
            continue;
        }
        let id = line[7..].trim();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(ReplyError::Malformed);
        }
        return registry
            .find(id)
            .map(|e| e.id.clone())
            .ok_or_else(|| ReplyError::UnknownId(id.to_string()));
    }
    Err(ReplyError::Malformed)
}
