//! Read-your-writes across the control plane: every accepted event shows
//! up, clamped, in the next state snapshot, and diffs replay to the state.

use std::collections::BTreeMap;

use proptest::prelude::*;
use sonomyo_core::control::protocol::{diff, state_values, WireValue};
use sonomyo_core::control::{resolve, ControlEvent, ControlSource};
use sonomyo_core::{CalibrationProfile, Engine, EngineConfig, ObjectId};

fn event() -> impl Strategy<Value = (String, f64)> {
    let strip = (0usize..6, 0usize..4, -100.0f64..100.0).prop_map(|(o, f, v)| {
        let field = ["gain_db", "pan", "send_breath", "mute"][f];
        let v = if field == "mute" { v.signum().max(0.0) } else { v };
        (format!("/mix/strip/{}/{field}", ObjectId::ALL[o]), v)
    });
    let master = (-100.0f64..100.0).prop_map(|v| ("/mix/master/gain_db".to_owned(), v));
    prop_oneof![4 => strip, 1 => master]
}

fn expected(address: &str, v: f64) -> WireValue {
    let field = address.rsplit('/').next().unwrap();
    match field {
        "gain_db" => WireValue::Number(v.clamp(-60.0, 6.0)),
        "pan" => WireValue::Number(v.clamp(-1.0, 1.0)),
        "send_breath" => WireValue::Number(v.clamp(0.0, 1.0)),
        "mute" => WireValue::Bool(v != 0.0),
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn writes_are_visible_and_diffs_replay(events in proptest::collection::vec(event(), 1..40)) {
        let cfg = EngineConfig { seed: Some(1), ..Default::default() };
        let mut engine = Engine::new(&cfg, &CalibrationProfile::default()).unwrap();
        let reg = engine.scenes().registry();
        let mut mirror: BTreeMap<String, WireValue> = state_values(&engine.state(), &reg);
        for (address, v) in &events {
            let ev = ControlEvent::number(ControlSource::Ws, address.clone(), *v);
            let r = resolve(&ev, &reg).unwrap();
            engine.apply(&r.command);
            let now = state_values(&engine.state(), &reg);
            prop_assert_eq!(&now[address], &expected(address, *v));
            for c in diff(&mirror, &now) {
                mirror.insert(c.address, c.value);
            }
            prop_assert_eq!(&mirror, &now);
        }
    }
}
