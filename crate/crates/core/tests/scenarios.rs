use proptest::prelude::*;
use scenl::event::apply_rules;
use scenl::interp::parse_trace;
use scenl::{
    diff_traces, parse, run_simulation, samples, Event, Likelihood, RunReport, SensorScript, TraceRecord, Value,
};

fn greeting(script: &str, horizon: u64) -> RunReport {
    let script = SensorScript::parse(script).unwrap();
    run_simulation(&samples::greeting(), &samples::house(), &[], &script, horizon).unwrap()
}

fn outs(report: &RunReport) -> Vec<String> {
    report.outputs().map(ToString::to_string).collect()
}

#[test]
fn greeting_fires_all_three_entities_at_tick_three() {
    let report = greeting(samples::GREETING_SCRIPT, 5);
    assert_eq!(
        report.trace.iter().map(ToString::to_string).collect::<Vec<_>>(),
        [
            "T=3 IN env.humanHere=1@100",
            "T=3 OUT bioloid.sayHello() br=1",
            "T=3 OUT greta.sayHello() br=2",
            "T=3 OUT nabaztag.sayHello() br=3",
        ]
    );
    assert!(report.finished);
    for entity in ["bioloid", "greta", "nabaztag"] {
        assert_eq!(report.entities[entity].received.len(), 1, "{entity}");
    }
}

#[test]
fn greeting_ignores_other_sensors() {
    let report = greeting("@1 thermometer.temperature=20@100\n@2 thermometer.temperature=3@100", 5);
    assert!(outs(&report).is_empty());
    assert!(!report.finished);
    assert_eq!(report.trace.len(), 2);
}

#[test]
fn greeting_ignores_unlikely_presence() {
    let report = greeting("@1 env.humanHere=1@20\n@4 env.humanHere=1@80", 6);
    assert_eq!(outs(&report).len(), 3);
    assert!(outs(&report).iter().all(|l| l.starts_with("T=4 ")));
}

#[test]
fn greeting_macro_expands_to_the_same_run() {
    let p = parse("<env.humanHere()>(@greetAll;);").unwrap();
    let script = SensorScript::parse(samples::GREETING_SCRIPT).unwrap();
    let via_macro = run_simulation(&p, &samples::registry(), &[], &script, 5).unwrap();
    assert!(diff_traces(&via_macro.trace, &greeting(samples::GREETING_SCRIPT, 5).trace).is_empty());
}

#[test]
fn thermostat_switches_on_cold_and_off_on_hot() {
    let script = SensorScript::parse(samples::THERMOSTAT_SCRIPT).unwrap();
    let p = parse(samples::THERMOSTAT).unwrap();
    let report = run_simulation(&p, &samples::house(), &samples::rules(), &script, 5).unwrap();
    assert_eq!(outs(&report), ["T=2 OUT h.on() br=0", "T=3 OUT h.off() br=0"]);
    assert!(!report.finished);
    assert!(report.quiescent);
}

#[test]
fn thermostat_cycles() {
    let script = "@1 thermometer.temperature=10@100\n@2 thermometer.temperature=30@100\n\
                  @3 thermometer.temperature=20@100\n@4 thermometer.temperature=12@100\n\
                  @5 thermometer.temperature=29@100";
    let report = run_simulation(
        &parse(samples::THERMOSTAT).unwrap(),
        &samples::house(),
        &samples::rules(),
        &SensorScript::parse(script).unwrap(),
        6,
    )
    .unwrap();
    assert_eq!(
        outs(&report),
        ["T=1 OUT h.on() br=0", "T=2 OUT h.off() br=0", "T=4 OUT h.on() br=0", "T=5 OUT h.off() br=0"]
    );
}

#[test]
fn rule_table() {
    // reference thresholds written out independently of the rule file
    let rules = samples::rules();
    for t in -10..=40 {
        let e = Event::new("thermometer", "temperature", t, Likelihood::CERTAIN);
        let mut emitted: Vec<String> = apply_rules(&e, &rules).unwrap().into_iter().map(|d| d.name).collect();
        emitted.sort();
        let mut expected = Vec::new();
        if t < 15 {
            expected.push("cold".to_string());
        }
        if t > 27 {
            expected.push("hot".to_string());
        }
        assert_eq!(emitted, expected, "temperature {t}");
    }
}

#[test]
fn derived_events_keep_the_source_likelihood() {
    let e = Event::new("thermometer", "temperature", 3, Likelihood::new(70).unwrap());
    let d = &apply_rules(&e, &samples::rules()).unwrap()[0];
    assert_eq!((d.sensor.as_str(), d.name.as_str()), ("symbolic", "cold"));
    assert_eq!(d.likelihood, e.likelihood);
}

#[test]
fn trace_lines_round_trip() {
    let report = greeting(samples::GREETING_SCRIPT, 5);
    let text: String = report.trace.iter().map(|r| format!("{r}\n")).collect();
    assert_eq!(parse_trace(&text).unwrap(), report.trace);
    let json = serde_json::to_string(&report.trace).unwrap();
    assert_eq!(serde_json::from_str::<Vec<TraceRecord>>(&json).unwrap(), report.trace);
    assert!(json.contains(r#""kind":"IN""#));
}

#[test]
fn event_display_format() {
    let e = Event::new("thermometer", "temperature", -4, Likelihood::new(90).unwrap());
    assert_eq!(e.to_string(), "thermometer.temperature=-4@90");
    let t = Event::new("env", "name", Value::Text("bob".into()), Likelihood::CERTAIN);
    assert_eq!(t.to_string(), "env.name=bob@100");
}

fn thermo_script() -> impl Strategy<Value = SensorScript> {
    prop::collection::vec((0u64..3, -10i64..40, 0u8..=100), 0..25).prop_map(|steps| {
        let mut tick = 0;
        let mut s = SensorScript::new();
        for (dt, v, l) in steps {
            tick += dt;
            s.push(tick, Event::new("thermometer", "temperature", v, Likelihood::new(l).unwrap())).unwrap();
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_scripted_event_appears_once_in_order(script in thermo_script()) {
        let horizon = script.entries().last().map_or(0, |(t, _)| *t);
        let report = run_simulation(
            &parse(samples::THERMOSTAT).unwrap(), &samples::house(), &samples::rules(), &script, horizon,
        ).unwrap();
        let replayed = SensorScript::from_trace(&report.trace);
        prop_assert_eq!(replayed.entries(), script.entries());
    }

    #[test]
    fn runs_are_deterministic_and_replayable(script in thermo_script()) {
        let p = parse(samples::THERMOSTAT).unwrap();
        let run = |s: &SensorScript| {
            run_simulation(&p, &samples::house(), &samples::rules(), s, 90).unwrap()
        };
        let first = run(&script);
        let second = run(&script);
        prop_assert_eq!(&first, &second);
        let replay = run(&SensorScript::from_trace(&first.trace));
        prop_assert!(diff_traces(&first.trace, &replay.trace).is_empty());
    }

    #[test]
    fn heater_commands_alternate(script in thermo_script()) {
        let report = run_simulation(
            &parse(samples::THERMOSTAT).unwrap(), &samples::house(), &samples::rules(), &script, 90,
        ).unwrap();
        let fns: Vec<String> = report.outputs().map(|r| match r {
            TraceRecord::Out { function, .. } => function.clone(),
            _ => unreachable!(),
        }).collect();
        for (i, f) in fns.iter().enumerate() {
            prop_assert_eq!(f.as_str(), if i % 2 == 0 { "on" } else { "off" });
        }
    }
}
