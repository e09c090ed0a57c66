use cok_core::parse::{parse_response, parse_response_bytes, render_chain, Answer, ReasoningChain, TaskType};
use cok_core::Triple;
use proptest::prelude::*;

const TASKS: [TaskType; 4] = [TaskType::MultiChoice, TaskType::YesNo, TaskType::Numeric, TaskType::StringConcat];

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z][a-z0-9]{0,7}"
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))
}

fn triple() -> impl Strategy<Value = Triple> {
    (phrase(), phrase(), prop::collection::vec(phrase(), 1..3))
        .prop_map(|(s, r, o)| Triple::new(&s, &r, &o.join(", ")).unwrap())
}

fn answer(task: TaskType) -> BoxedStrategy<Answer> {
    match task {
        TaskType::MultiChoice => prop::sample::select(vec!['A', 'B', 'C', 'D', 'E']).prop_map(Answer::Choice).boxed(),
        TaskType::YesNo => any::<bool>().prop_map(Answer::YesNo).boxed(),
        TaskType::Numeric => (-100_000i32..100_000).prop_map(|x| Answer::Number(f64::from(x) / 100.0)).boxed(),
        TaskType::StringConcat => "[a-z]{1,8}".prop_map(Answer::Text).boxed(),
    }
}

/// Sentences that never contain a section header or the answer marker.
fn explanation() -> impl Strategy<Value = String> {
    prop::collection::vec(phrase(), 1..4).prop_map(|s| format!("{}.", s.join(". ")))
        .prop_filter("no markers", |e| {
            let l = e.to_lowercase();
            !l.contains("answer is") && !l.contains("evidence triples:") && !l.contains("explanation hints:")
        })
}

fn chain() -> impl Strategy<Value = (TaskType, ReasoningChain)> {
    prop::sample::select(TASKS.to_vec()).prop_flat_map(|task| {
        (prop::collection::vec(triple(), 1..7), explanation(), answer(task)).prop_map(move |(t, e, a)| {
            (
                task,
                ReasoningChain {
                    evidence_triples: t,
                    explanation: e,
                    answer: Some(a),
                    warnings: Vec::new(),
                },
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256), t in 0usize..4) {
        let _ = parse_response_bytes(&bytes, TASKS[t]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn structured_noise_never_panics(
        lines in prop::collection::vec(
            prop_oneof![
                Just("Evidence triples:".to_string()),
                Just("Explanation hints:".to_string()),
                Just("So the answer is".to_string()),
                "[0-9]{1,3}\\. ?\\(?[^\\n]{0,30}\\)?",
                "[^\\n]{0,40}",
            ],
            0..12,
        ),
        t in 0usize..4,
    ) {
        let text = lines.join("\n");
        let _ = parse_response(&text, TASKS[t]);
    }

    #[test]
    fn render_then_parse_round_trips((task, c) in chain()) {
        let text = render_chain(&c);
        let back = parse_response(&text, task);
        prop_assert!(back.warnings.is_empty(), "{:?}\n{}", back.warnings, text);
        prop_assert!(back.same_content(&c), "{:?}\n{}", back, text);
        prop_assert_eq!(render_chain(&back), text);
    }
}
