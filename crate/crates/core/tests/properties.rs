use std::collections::BTreeMap;

mod common;

use common::{arb_annotation, problem_with};
use proptest::prelude::*;
use tomloom::complexity::{aggregate_stats, complexity, partition, statefulness, statelessness};
use tomloom::gateway::{
    ChatBackend, ChatMessage, ChatRequest, MockBackend, MockRule, MockScript, Usage,
};
use tomloom::harness::{aggregate, PairResult};
use tomloom::ingest::parse_str;
use tomloom::memorization::{fuzzy_ratio, levenshtein};
use tomloom::prompts::{estimate_cost, Strategy as PromptStrategy};
use tomloom::types::{
    to_canonical_json, validate_annotation, validate_problem, AnnotationFile, Benchmark,
    ProblemInstance, StateEventMark,
};

const BENCHMARKS: [Benchmark; 5] = [
    Benchmark::ToMi,
    Benchmark::FANToM,
    Benchmark::MindGames,
    Benchmark::AdvCSFB,
    Benchmark::SocialIQa,
];

fn arb_problem() -> impl Strategy<Value = ProblemInstance> {
    (
        "[a-z]{1,6}-[0-9]{1,3}",
        prop::sample::select(BENCHMARKS.to_vec()),
        prop::collection::vec("[A-Z][a-z ,'\"é]{0,24}[.?!]", 1..10),
        "[A-Z][a-z ]{0,20}\\?",
        prop::option::of(prop::collection::btree_set("[a-z]{1,8}", 2..5)),
        "[a-z]{1,8}",
        prop::collection::btree_map("[a-z_]{1,6}", "[ -~]{0,10}", 0..3),
    )
        .prop_map(|(id, b, sentences, question, choices, free, metadata)| {
            let (choices, gold) = match choices {
                Some(c) => {
                    let c: Vec<String> = c.into_iter().collect();
                    let g = c[0].clone();
                    (Some(c), g)
                }
                None => (None, free),
            };
            let mut p = ProblemInstance::new(id, b, sentences, question, gold);
            p.choices = choices;
            p.metadata = metadata;
            p
        })
}

proptest! {
    #[test]
    fn problem_json_round_trip(p in arb_problem()) {
        prop_assert!(validate_problem(&p).is_empty());
        let text = to_canonical_json(&p);
        let back: ProblemInstance = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(to_canonical_json(&back), text);
    }

    #[test]
    fn annotation_json_round_trip(a in (1usize..12).prop_flat_map(arb_annotation)) {
        for file in [AnnotationFile::Single(a.clone()), AnnotationFile::Bundle { annotations: vec![a.clone(), a.clone()] }] {
            let text = to_canonical_json(&file);
            let back: AnnotationFile = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(to_canonical_json(&back), text);
            prop_assert_eq!(back, file);
        }
    }

    #[test]
    fn normalized_ingest_is_identity(ps in prop::collection::vec(arb_problem(), 1..6), b in prop::sample::select(BENCHMARKS.to_vec())) {
        let text: String = ps.iter().map(|p| to_canonical_json(p) + "\n").collect();
        prop_assert_eq!(parse_str(b, &text).unwrap(), ps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn complexity_algebra(
        (n, a) in (1usize..15).prop_flat_map(|n| (Just(n), arb_annotation(n))),
        tau in 0.0f64..=1.0,
        tau2 in 0.0f64..=1.0,
    ) {
        let p = problem_with(n);
        prop_assert!(validate_annotation(&a, &p).is_empty());
        // totality
        for o in &a.objects {
            partition(&a, &o.object_id).unwrap();
        }
        let r = complexity(&a, tau).unwrap();
        let stateless = statelessness(&a).unwrap();
        prop_assert_eq!(r.statefulness, statefulness(&a, &a.question_object_id).unwrap());
        prop_assert_eq!(r.complexity, r.statefulness as f64 + tau * stateless as f64);

        // monotone in tau, strictly iff statelessness > 0
        let (lo, hi) = if tau <= tau2 { (tau, tau2) } else { (tau2, tau) };
        let (c_lo, c_hi) = (complexity(&a, lo).unwrap().complexity, complexity(&a, hi).unwrap().complexity);
        prop_assert!(c_lo <= c_hi);
        if lo < hi {
            prop_assert_eq!(c_lo < c_hi, stateless > 0);
        }

        // additivity
        for o in &a.objects {
            let Some(free) = (1..=n).find(|s| !a.events.iter().any(|e| e.object_id == o.object_id && e.boundary_after_sentence == *s)) else {
                continue;
            };
            let mut b = a.clone();
            b.events.push(StateEventMark::new(&o.object_id, free));
            b.normalize();
            prop_assert!(validate_annotation(&b, &p).is_empty());
            let rb = complexity(&b, tau).unwrap();
            let step = if o.object_id == a.question_object_id { 1.0 } else { tau };
            prop_assert!((rb.complexity - r.complexity - step).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn stats_ignore_report_order(
        reports in prop::collection::vec((0u64..9, 0u64..40, prop::sample::select(BENCHMARKS.to_vec())), 1..40)
            .prop_flat_map(|v| { let s = v.clone(); (Just(v), Just(s).prop_shuffle()) })
    ) {
        let (original, shuffled) = reports;
        let group = |rows: &[(u64, u64, Benchmark)]| {
            let mut g: BTreeMap<Benchmark, Vec<_>> = BTreeMap::new();
            for (i, &(sf, sl, b)) in rows.iter().enumerate() {
                g.entry(b).or_default().push(tomloom::types::ComplexityReport {
                    problem_id: format!("p{i}"),
                    statefulness: sf,
                    statelessness_raw: sl,
                    tau: 0.1,
                    complexity: sf as f64 + 0.1 * sl as f64,
                });
            }
            aggregate_stats(&g).unwrap()
        };
        prop_assert_eq!(group(&original), group(&shuffled));
    }

    #[test]
    fn accuracy_ignores_row_order(
        rows in prop::collection::vec((any::<bool>(), prop::option::of(Just("boom".to_string())), 0usize..3), 1..60)
            .prop_flat_map(|v| { let s = v.clone(); (Just(v), Just(s).prop_shuffle()) })
    ) {
        let (original, shuffled) = rows;
        let build = |rows: &[(bool, Option<String>, usize)]| -> Vec<PairResult> {
            rows.iter().enumerate().map(|(i, (ok, err, s))| PairResult {
                problem_id: format!("p{i}"),
                benchmark: Benchmark::ToMi,
                strategy: PromptStrategy::Dwm,
                splits: s + 1,
                label: format!("dwm-{}", s + 1),
                answer: String::new(),
                found_tags: true,
                gold: "x".into(),
                correct: *ok && err.is_none(),
                calls: 1,
                usage: Usage::default(),
                transcript: String::new(),
                error: err.clone(),
            }).collect()
        };
        let a = aggregate(&build(&original));
        prop_assert_eq!(&a, &aggregate(&build(&shuffled)));
        for g in &a {
            let scored = original.iter().filter(|(_, e, s)| e.is_none() && s + 1 == g.splits).count();
            let correct = original.iter().filter(|(ok, e, s)| *ok && e.is_none() && s + 1 == g.splits).count();
            prop_assert_eq!(g.n, scored);
            prop_assert_eq!(g.correct, correct);
            if scored > 0 {
                prop_assert_eq!(g.accuracy, correct as f64 / scored as f64);
            }
        }
    }

    #[test]
    fn fuzzy_ratio_is_symmetric_and_bounded(a in "[a-c ]{0,30}", b in "[a-c ]{0,30}") {
        let f = fuzzy_ratio(&a, &b);
        prop_assert_eq!(f, fuzzy_ratio(&b, &a));
        prop_assert!((0.0..=100.0).contains(&f));
        prop_assert_eq!(fuzzy_ratio(&a, &a), 100.0);
    }

    #[test]
    fn dwm_with_one_split_costs_like_cot(n in 0.0f64..1e6, o in 0.0f64..1e4, m in 1u64..6) {
        prop_assert_eq!(estimate_cost(n, 1, o, m, PromptStrategy::Dwm), estimate_cost(n, 1, o, m, PromptStrategy::Cot));
    }

    #[test]
    fn mock_is_a_pure_function(text in "[a-z ]{0,40}", t in 0.0f64..1.0) {
        let script = MockScript {
            rules: vec![MockRule::pattern("a+b", "matched"), MockRule::substring("zz", "double z")],
            default_response: "default".into(),
        };
        let req = {
            let mut r = ChatRequest::new("mock", vec![ChatMessage::user(text)]);
            r.temperature = t;
            r
        };
        let first = MockBackend::new(script.clone()).unwrap().complete(&req).unwrap().text;
        let second = MockBackend::new(script).unwrap().complete(&req).unwrap().text;
        prop_assert_eq!(first, second);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn levenshtein_triangle_inequality(a in "[a-d]{0,16}", b in "[a-d]{0,16}", c in "[a-d]{0,16}") {
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
    }
}
