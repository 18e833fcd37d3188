use std::path::Path;

use gencsi_core::channel::{
    generate_channel, interpolate_pilots, make_pilot_observation, ChannelMatrix, ScenarioClass, N_SC,
};
use gencsi_core::eval::nmse;
use gencsi_core::moe::{
    llm_gate, rule_gate, ExpertRegistry, GateSource, ScriptedClient, ScriptedReply, StateEnvironment, UserState,
};
use gencsi_core::validate::{check_constraints, check_context, FlagKind, ValidatorConfig};
use num_complex::Complex32;
use proptest::prelude::*;

fn class(i: usize) -> ScenarioClass {
    let all = ScenarioClass::all();
    all[i % all.len()]
}

fn environment() -> impl Strategy<Value = StateEnvironment> {
    prop_oneof![
        Just(StateEnvironment::Los),
        Just(StateEnvironment::Nlos),
        Just(StateEnvironment::Unknown),
    ]
}

fn registry() -> ExpertRegistry {
    ExpertRegistry::default_four(Path::new("experts"))
}

fn kinds(flags: &[gencsi_core::validate::Flag]) -> Vec<FlagKind> {
    flags.iter().map(|f| f.kind).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nmse_ignores_a_common_scale(ci in 0usize..8, seed in any::<u64>(), other in any::<u64>(), scale in 0.01f32..100.0) {
        let truth = generate_channel(class(ci), seed).h;
        let est = generate_channel(class(ci), other).h;
        let base = nmse(&est, &truth).unwrap();
        let scaled = nmse(&est.scaled(scale), &truth.scaled(scale)).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((base - scaled).abs() <= 1e-4 * base.max(1e-12), "{base} vs {scaled}");
        prop_assert!(nmse(&truth, &truth).unwrap() == 0.0);
    }

    #[test]
    fn context_check_ignores_gain(ci in 0usize..8, declared in 0usize..8, seed in any::<u64>(), scale in 0.05f32..20.0, boundary in 0.2f64..3.0) {
        let h = generate_channel(class(ci), seed).h;
        let cfg = ValidatorConfig::with_thresholds(0.5, boundary);
        prop_assert_eq!(
            kinds(&check_context(&h, class(declared), &cfg)),
            kinds(&check_context(&h.scaled(scale), class(declared), &cfg))
        );
    }

    #[test]
    fn wider_bounds_never_add_constraint_flags(
        ci in 0usize..8,
        seed in any::<u64>(),
        scale in 0.1f32..5.0,
        lo in 0.0f64..0.9,
        hi in 1.1f64..6.0,
        cap in 0.5f64..12.0,
        widen in 1.0f64..3.0,
    ) {
        let h = generate_channel(class(ci), seed).h.scaled(scale);
        let mut tight = ValidatorConfig::with_thresholds(0.5, 1.0);
        tight.p_lo = lo;
        tight.p_hi = hi;
        tight.magnitude_cap = cap;
        let mut wide = tight.clone();
        wide.p_lo = lo / widen;
        wide.p_hi = hi * widen;
        wide.magnitude_cap = cap * widen;
        prop_assert!(check_constraints(&h, &wide).len() <= check_constraints(&h, &tight).len());
    }

    #[test]
    fn rule_gate_is_pure_and_registered(env in environment(), ghz in 0.1f64..100.0, kmh in 0.0f64..500.0) {
        let state = UserState::new(env, ghz, kmh).unwrap();
        let reg = registry();
        let a = rule_gate(&state, &reg).unwrap();
        let b = rule_gate(&state, &reg).unwrap();
        prop_assert!(reg.contains(&a.expert_id));
        prop_assert_eq!(a.expert_id, b.expert_id);
        prop_assert_eq!(a.source, GateSource::Rule);
    }

    #[test]
    fn llm_gate_returns_a_registered_id_for_any_reply(env in environment(), ghz in 0.1f64..100.0, kmh in 0.0f64..500.0, reply in ".{0,200}") {
        let state = UserState::new(env, ghz, kmh).unwrap();
        let reg = registry();
        let client = ScriptedClient::new(vec![ScriptedReply::Text(reply)]);
        let d = llm_gate(&state, &reg, &client, 1000).unwrap();
        prop_assert!(reg.contains(&d.expert_id));
    }

    #[test]
    fn interpolation_reproduces_the_pilots(
        spacing in prop::sample::select(vec![1usize, 2, 4, 8, 16, 32]),
        ci in 0usize..8,
        seed in any::<u64>(),
        snr in -10.0f64..30.0,
    ) {
        prop_assert_eq!(N_SC % spacing, 0);
        let h = generate_channel(class(ci), seed).h;
        let obs = make_pilot_observation(&h, spacing, snr, seed ^ 1).unwrap();
        let est: ChannelMatrix = interpolate_pilots(&obs);
        prop_assert!(est.is_finite());
        for (i, (&e, &y)) in est.as_slice().iter().zip(obs.y.as_slice()).enumerate() {
            if obs.mask.as_slice()[i] {
                let d: Complex32 = e - y;
                prop_assert!(d.norm() <= 1e-4 * (1.0 + y.norm()), "entry {i}: {e} vs {y}");
            }
        }
    }
}
