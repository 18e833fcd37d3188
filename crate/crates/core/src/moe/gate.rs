use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::client::{ClientError, CompletionClient};
use super::prompt::{build_prompt, parse_reply, ReplyError};
use super::registry::{ExpertDescriptor, ExpertRegistry};
use super::{GateError, StateEnvironment, UserState};
use crate::rng::{derived_rng, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateSource {
    Rule,
    Llm,
    Fallback,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub expert_id: String,
    pub source: GateSource,
    pub rationale: String,
    pub latency_ms: f64,
}

/// Match score of one expert, in half points: the best covered class counts.
fn score(state: &UserState, expert: &ExpertDescriptor) -> u32 {
    let band = state.band();
    let mobility = state.mobility();
    expert
        .coverage
        .iter()
        .map(|c| {
            let env = match state.environment {
                StateEnvironment::Unknown => 4,
                e if e == c.environment.into() => 8,
                _ => 0,
            };
            env + 4 * u32::from(c.band == band) + 2 * u32::from(c.mobility == mobility)
        })
        .max()
        .unwrap_or(0)
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Deterministic routing: 4 points for the environment (2 when unknown),
/// 2 for the band (6 GHz and up is high), 1 for the nearest mobility class.
/// Ties go to the lexicographically smallest id.
pub fn rule_gate(state: &UserState, registry: &ExpertRegistry) -> Result<GateDecision, GateError> {
    let start = Instant::now();
    let best = registry
        .experts()
        .iter()
        .map(|e| (score(state, e), e))
        .max_by(|(sa, a), (sb, b)| sa.cmp(sb).then_with(|| b.id.cmp(&a.id)))
        .ok_or(GateError::EmptyRegistry)?;
    Ok(GateDecision {
        expert_id: best.1.id.clone(),
        source: GateSource::Rule,
        rationale: format!(
            "score {} for {} / {} / {}",
            best.0 as f64 / 2.0,
            state.environment.key(),
            state.band().key(),
            state.mobility().key()
        ),
        latency_ms: elapsed_ms(start),
    })
}

/// Uniform choice over the registry, reproducible from `seed`.
pub fn random_gate(_state: &UserState, registry: &ExpertRegistry, seed: u64) -> Result<GateDecision, GateError> {
    let start = Instant::now();
    if registry.is_empty() {
        return Err(GateError::EmptyRegistry);
    }
    let k = derived_rng(seed, &[tag("random-gate")]).random_range(0..registry.len());
    Ok(GateDecision {
        expert_id: registry.experts()[k].id.clone(),
        source: GateSource::Random,
        rationale: "uniform random choice".into(),
        latency_ms: elapsed_ms(start),
    })
}

/// Asks the language model, falling back to [`rule_gate`] on any failure:
/// transport errors, late replies, malformed replies or unregistered ids.
/// The only error left is an empty registry.
pub fn llm_gate(
    state: &UserState,
    registry: &ExpertRegistry,
    client: &dyn CompletionClient,
    timeout_ms: u64,
) -> Result<GateDecision, GateError> {
    let start = Instant::now();
    let fallback = rule_gate(state, registry)?;
    let timeout = Duration::from_millis(timeout_ms);
    let prompt = build_prompt(state, registry);
    let reply = client.complete(&prompt, timeout);
    let late = start.elapsed() > timeout;
    let outcome = match reply {
        Err(ClientError::Timeout) => Err("timeout".to_string()),
        Ok(_) if late => Err("timeout".to_string()),
        Err(e) => Err(format!("client error: {e}")),
        Ok(text) => match parse_reply(&text, registry) {
            Ok(id) => Ok((id, text)),
            Err(ReplyError::UnknownId(id)) => Err(format!("unregistered expert `{id}` in reply: {}", text.trim())),
            Err(ReplyError::Malformed) => Err(format!("malformed reply: {}", text.trim())),
        },
    };
    Ok(match outcome {
        Ok((expert_id, text)) => GateDecision {
            expert_id,
            source: GateSource::Llm,
            rationale: text.trim().to_string(),
            latency_ms: elapsed_ms(start),
        },
        Err(reason) => {
            log::debug!("llm gate fell back to rules: {reason}");
            GateDecision {
                expert_id: fallback.expert_id,
                source: GateSource::Fallback,
                rationale: reason,
                latency_ms: elapsed_ms(start),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::channel::ScenarioClass;
    use crate::moe::client::{RuleEchoClient, ScriptedClient, ScriptedReply};

    fn reg() -> ExpertRegistry {
        ExpertRegistry::default_four(Path::new("ck"))
    }

    fn subset(ids: &[&str]) -> ExpertRegistry {
        ExpertRegistry::new(reg().experts().iter().filter(|e| ids.contains(&e.id.as_str())).cloned().collect()).unwrap()
    }

    #[test]
    fn rule_gate_hand_scored_cases() {
        // nlos-high scores 4 + 2 + 1; nlos-low 4 + 0 + 1; los-high 0 + 2 + 1.
        let s = UserState::new(StateEnvironment::Nlos, 28.0, 120.0).unwrap();
        assert_eq!(rule_gate(&s, &reg()).unwrap().expert_id, "nlos-high");
        // Both score 2 + 2 + 1; the tie goes to the smaller id.
        let s = UserState::new(StateEnvironment::Unknown, 2.6, 0.0).unwrap();
        let d = rule_gate(&s, &subset(&["nlos-low", "los-low"])).unwrap();
        assert_eq!(d.expert_id, "los-low");
        assert_eq!(d.source, GateSource::Rule);
        let single = subset(&["nlos-high"]);
        let s = UserState::new(StateEnvironment::Los, 2.6, 0.0).unwrap();
        assert_eq!(rule_gate(&s, &single).unwrap().expert_id, "nlos-high");
        assert!(matches!(
            rule_gate(&s, &ExpertRegistry::new(vec![]).unwrap()),
            Err(GateError::EmptyRegistry)
        ));
    }

    #[test]
    fn rule_gate_routes_every_class_to_its_expert() {
        let r = reg();
        for class in ScenarioClass::all() {
            let d = rule_gate(&UserState::of_class(class), &r).unwrap();
            assert!(r.get(&d.expert_id).unwrap().coverage.contains(&class), "{class}");
        }
    }

    #[test]
    fn user_state_validation() {
        assert!(UserState::new(StateEnvironment::Los, 0.0, 1.0).is_err());
        assert!(UserState::new(StateEnvironment::Los, 2.0, -1.0).is_err());
        assert!(UserState::new(StateEnvironment::Los, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn llm_gate_uses_valid_replies_and_falls_back_otherwise() {
        let r = reg();
        let s = UserState::new(StateEnvironment::Nlos, 28.0, 120.0).unwrap();
        let rule = rule_gate(&s, &r).unwrap();

        let d = llm_gate(&s, &r, &ScriptedClient::always("expert: nlos-high"), 1000).unwrap();
        assert_eq!((d.expert_id.as_str(), d.source), ("nlos-high", GateSource::Llm));

        let d = llm_gate(&s, &r, &ScriptedClient::always("expert: los-low"), 1000).unwrap();
        assert_eq!((d.expert_id.as_str(), d.source), ("los-low", GateSource::Llm));

        let d = llm_gate(&s, &r, &ScriptedClient::always("expert: atlantis-6g"), 1000).unwrap();
        assert_eq!(d.expert_id, rule.expert_id);
        assert_eq!(d.source, GateSource::Fallback);
        assert!(d.rationale.contains("atlantis-6g"));

        let d = llm_gate(&s, &r, &ScriptedClient::new(vec![ScriptedReply::Timeout]), 1000).unwrap();
        assert_eq!((d.expert_id.as_str(), d.source), (rule.expert_id.as_str(), GateSource::Fallback));
        assert_eq!(d.rationale, "timeout");

        let d = llm_gate(&s, &r, &ScriptedClient::new(vec![ScriptedReply::Fail("refused".into())]), 1000).unwrap();
        assert_eq!(d.source, GateSource::Fallback);
    }

    #[test]
    fn slow_replies_count_as_timeouts() {
        struct Slow;
        impl CompletionClient for Slow {
            fn complete(&self, _: &str, _: Duration) -> Result<String, ClientError> {
                std::thread::sleep(Duration::from_millis(30));
                Ok("expert: los-low".into())
            }
        }
        let s = UserState::new(StateEnvironment::Nlos, 28.0, 120.0).unwrap();
        let d = llm_gate(&s, &reg(), &Slow, 5).unwrap();
        assert_eq!((d.expert_id.as_str(), d.source), ("nlos-high", GateSource::Fallback));
        assert_eq!(d.rationale, "timeout");
    }

    #[test]
    fn rule_echo_mock_agrees_with_rule_gate() {
        let r = reg();
        let client = RuleEchoClient::new(r.clone());
        for class in ScenarioClass::all() {
            let s = UserState::of_class(class);
            let d = llm_gate(&s, &r, &client, 1000).unwrap();
            assert_eq!(d.source, GateSource::Llm);
            assert_eq!(d.expert_id, rule_gate(&s, &r).unwrap().expert_id);
        }
    }

    #[test]
    fn random_gate_is_seeded_and_uniform() {
        let r = reg();
        let s = UserState::of_class(ScenarioClass::all()[0]);
        let a = random_gate(&s, &r, 5).unwrap();
        assert_eq!(a.expert_id, random_gate(&s, &r, 5).unwrap().expert_id);
        assert_eq!(a.source, GateSource::Random);
        assert_eq!(random_gate(&s, &subset(&["los-high"]), 9).unwrap().expert_id, "los-high");
        let mut counts = std::collections::BTreeMap::new();
        for seed in 0..10_000u64 {
            *counts.entry(random_gate(&s, &r, seed).unwrap().expert_id).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 4);
        for (id, n) in counts {
            let f = n as f64 / 10_000.0;
            assert!((0.22..=0.28).contains(&f), "{id}: {f}");
        }
    }
}
