use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpmesh_core::rules::{parse_rule_file, Consequence, DataTuple, Rule, RuleEngine, Scalar};
use rpmesh_oracles::gen::{rule_cond, rule_tuple};
use rpmesh_oracles::rules::{conflict_set, scalar, Cond};

#[test]
fn ten_thousand_cycles_match_conflict_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut fired_total = 0;
    for case in 0..10_000 {
        let n = rng.random_range(1..6);
        let spec: Vec<(Cond, i64)> = (0..n).map(|_| (rule_cond(&mut rng, 3), rng.random_range(0..4))).collect();
        let rules: Vec<Rule> = spec
            .iter()
            .enumerate()
            .map(|(i, (c, prio))| Rule::new(format!("r{i}"), &c.to_source(), Consequence::Callback(format!("c{i}")), *prio).unwrap())
            .collect();
        let fields = rule_tuple(&mut rng);
        let tuple = DataTuple {
            fields: fields.iter().map(|(k, v)| (k.clone(), scalar(v))).collect(),
        };
        let (want_set, want_fired) = conflict_set(&spec, &fields);
        let mut engine = RuleEngine::new(rules);
        let mut calls = Vec::new();
        let out = engine.evaluate_cycle(&tuple, &mut |r: &Rule, _: &DataTuple| {
            calls.push(r.name.clone());
            Ok(())
        });
        assert_eq!(out.conflict_set, want_set, "case {case}");
        assert_eq!(out.fired, want_fired, "case {case}");
        // single fire per cycle
        assert_eq!(calls.len(), want_fired.is_some() as usize);
        fired_total += calls.len();
    }
    assert!(fired_total > 2_000, "{fired_total}");
}

#[test]
fn result_threshold_rule_fires_exactly_at_ten_and_above() {
    let rules = parse_rule_file("priority: 0\nwhen: IF(RESULT >= 10)\nthen: post start-function analyze,video\n").unwrap();
    let mut engine = RuleEngine::new(rules);
    for v in -50i64..=50 {
        for t in [DataTuple::new().with("RESULT", Scalar::Int(v)), DataTuple::new().with("RESULT", Scalar::Dec(v as f64 - 0.5))] {
            let mut n = 0;
            let out = engine.evaluate_cycle(&t, &mut |_: &Rule, _: &DataTuple| {
                n += 1;
                Ok(())
            });
            let want = match t.get("RESULT").unwrap() {
                Scalar::Int(i) => *i >= 10,
                Scalar::Dec(d) => *d >= 10.0,
                _ => unreachable!(),
            };
            assert_eq!(out.fired.is_some(), want, "{t:?}");
            assert_eq!(n, want as usize);
        }
    }
}
