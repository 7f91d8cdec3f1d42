use vot_core::backend::{MockBackend, MockEntry, MockScript, StepTag};
use vot_core::orchestrator::{run_vot, GroundingMode, GroundingSource, QaInstance, QaOption, VerdictSource, VotConfig};
use vot_core::prompts::{residue, VOT_PLACEHOLDERS};
use vot_core::query::{extract_tracklet, neighbor_scene};
use vot_core::{parse, serialize, BBox, FrameSceneGraph, ObjectNode};

const QUESTION: &str = include_str!("../assets/white_truck/question.json");
const SCRIPT: &str = include_str!("../assets/white_truck/script.json");

fn golden() -> (QaInstance, MockBackend, VotConfig) {
    let q: QaInstance = serde_json::from_str(QUESTION).unwrap();
    let backend = MockBackend::new(MockScript::from_json(SCRIPT).unwrap());
    let cfg = VotConfig {
        send_rank_prompt: true,
        ..VotConfig::default()
    };
    (q, backend, cfg)
}

#[test]
fn white_truck_session_reproduces_appendix() {
    let (q, backend, cfg) = golden();
    let (answer, trace) = run_vot(&q, &backend, &cfg).unwrap();
    assert_eq!(answer, "C");
    assert_eq!(trace.targets, vec!["the white truck", "the neighborhood"]);

    let car = r#"Frame 1: {Objects: [{"car-1": [0.0,13.4,7.0,8.1]}], Triplets: [("car-1","on the left","street")]}"#;
    for target in &trace.targets {
        let g = &trace.tracklets[target];
        assert_eq!(g.source, GroundingSource::Model);
        assert_eq!(g.expression, car);
    }
    assert!(trace.observation.contains("pour the garbage from the roadside trash cans"));

    let a = trace.scored.iter().find(|s| s.letter == "A").unwrap();
    assert_eq!(a.score, 5);
    assert!(a.rationale.contains("the rationality of the answer [A. Transportation] is 5"));
    assert_eq!(trace.rank, vec!["C", "A", "D", "B"]);

    assert_eq!(trace.verdicts.len(), 1);
    let v = &trace.verdicts[0];
    assert!(v.consistent);
    assert_eq!(v.source, VerdictSource::Heuristic);
    assert!(v.rationale.contains("Overall, the answer [C. Clean Service] is correct."));
    assert_eq!(trace.retries, 0);
    assert!(!trace.unverified);

    let tags: Vec<StepTag> = trace.steps.iter().map(|s| s.tag).collect();
    use StepTag::*;
    assert_eq!(
        tags,
        vec![Step1, Step2, Step3, Step4Score, Step4Score, Step4Score, Step4Score, Step4Rank, Step5]
    );
    let rank_prompt = &trace.steps[7].prompt;
    assert!(rank_prompt.contains("Now, we know the rationale score of the answer [A. Transportation] is 5, "));
    assert!(trace.steps[0].prompt.contains(
        "Given the question: [What is the relationship between the white truck and this neighborhood? A. Transportation  B. Buildings  C. Clean Services  D. Entertainment Facilities]"
    ));
    assert!(trace.steps[8].prompt.contains("End your output with two lines: `GROUNDING: PASS|FAIL` and `COMMONSENSE: PASS|FAIL`"));
}

#[test]
fn reruns_are_byte_identical() {
    let (q, backend, cfg) = golden();
    let a = run_vot(&q, &backend, &cfg).unwrap().1.to_json_pretty();
    let b = run_vot(&q, &backend, &cfg).unwrap().1.to_json_pretty();
    assert_eq!(a, b);
}

#[test]
fn no_placeholder_residue_in_prompts() {
    let (q, backend, cfg) = golden();
    let (_, trace) = run_vot(&q, &backend, &cfg).unwrap();
    for step in &trace.steps {
        assert!(residue(&step.prompt, VOT_PLACEHOLDERS).is_empty(), "{}: {}", step.tag, step.prompt);
    }
}

fn retry_script(step5: Vec<MockEntry>) -> MockBackend {
    let mut script = MockScript::from_json(SCRIPT).unwrap();
    script.entries.retain(|e| e.tag != StepTag::Step5);
    script.entries.extend(step5);
    MockBackend::new(script)
}

#[test]
fn failed_verification_excludes_and_reranks() {
    let (q, _, cfg) = golden();
    let backend = retry_script(vec![
        MockEntry::matching(StepTag::Step5, "answer [C. Clean Services]", "GROUNDING: PASS\nCOMMONSENSE: FAIL"),
        MockEntry::new(StepTag::Step5, "GROUNDING: PASS\nCOMMONSENSE: PASS"),
    ]);
    let (answer, trace) = run_vot(&q, &backend, &cfg).unwrap();
    assert_eq!(answer, "A");
    assert_eq!(trace.retries, 1);
    assert_eq!(trace.rounds.len(), 2);
    assert_eq!(trace.rounds[1].excluded, vec!["C"]);
    assert_eq!(trace.rank, vec!["A", "D", "B"]);
    assert!(!trace.unverified);
}

#[test]
fn exhausted_budget_marks_unverified() {
    let (q, _, cfg) = golden();
    let backend = retry_script(vec![MockEntry::new(StepTag::Step5, "GROUNDING: FAIL\nCOMMONSENSE: FAIL")]);
    let cfg0 = VotConfig { max_retries: 0, ..cfg.clone() };
    let (answer, trace) = run_vot(&q, &backend, &cfg0).unwrap();
    assert_eq!(answer, "C");
    assert!(trace.unverified);
    assert_eq!(trace.retries, 0);

    let (answer, trace) = run_vot(&q, &backend, &cfg).unwrap();
    assert_eq!(trace.retries, cfg.max_retries);
    assert_eq!(trace.rounds.len() as u32, cfg.max_retries + 1);
    assert_eq!(answer, "D");
    assert!(trace.unverified);
}

#[test]
fn errors_carry_step_and_partial_trace() {
    let (q, _, cfg) = golden();
    let mut script = MockScript::from_json(SCRIPT).unwrap();
    script.entries.retain(|e| e.tag != StepTag::Step2);
    script.entries.push(MockEntry::new(StepTag::Step2, "I cannot see any frames."));
    let err = run_vot(&q, &MockBackend::new(script), &cfg).unwrap_err();
    assert_eq!(err.step, StepTag::Step2);
    assert_eq!(err.error.code(), "GROUNDING_FAILED");
    assert_eq!(err.trace.targets.len(), 2);
    assert_eq!(err.trace.error.as_ref().unwrap().code, "GROUNDING_FAILED");
    assert_eq!(err.trace.steps.len(), 2);

    let mut script = MockScript::from_json(SCRIPT).unwrap();
    script.entries.retain(|e| e.tag != StepTag::Step5);
    let err = run_vot(&q, &MockBackend::new(script), &cfg).unwrap_err();
    assert_eq!((err.step, err.error.code()), (StepTag::Step5, "NO_SCRIPT_ENTRY"));
}

fn street_scene() -> vot_core::Stsg {
    let frames = (1..=3)
        .map(|k| {
            FrameSceneGraph::new(k)
                .with_node(ObjectNode::boxed("truck-1", BBox::new(k as f64, 2.0, 6.0, 4.0)))
                .with_node(ObjectNode::boxed("person-1", BBox::new(9.0, 1.0, 2.0, 5.0)))
                .with_node(ObjectNode::boxed("can-1", BBox::new(12.0, 4.0, 1.0, 2.0)))
                .with_node(ObjectNode::stuff("street"))
                .with_edge("truck-1", "on", "street")
                .with_edge("person-1", "next to", "truck-1")
                .with_edge("person-1", "holding", "can-1")
        })
        .collect();
    vot_core::link_coreferences(frames).unwrap()
}

#[test]
fn oracle_mode_grounds_locally() {
    let stsg = street_scene();
    let q = QaInstance {
        id: "o1".into(),
        video_id: "street.mp4".into(),
        question: "What is the man doing near the white truck?".into(),
        options: vec![QaOption::new("A", "Collecting garbage"), QaOption::new("B", "Dancing")],
        gold: Some("A".into()),
        category: None,
        stsg: Some(stsg.clone()),
    };
    let backend = MockBackend::new(MockScript::new(vec![
        MockEntry::new(StepTag::Step1, "The involved targets are [the white truck], [the moon]"),
        MockEntry::new(StepTag::Step2, r#"Frame 3: {Objects: [], Triplets: []}"#),
        MockEntry::new(StepTag::Step3, "The man loads garbage into the truck."),
        MockEntry::matching(StepTag::Step4Score, "[A. Collecting garbage]", "The score is 9."),
        MockEntry::matching(StepTag::Step4Score, "[B. Dancing]", "The score is 1."),
        MockEntry::new(StepTag::Step5, "GROUNDING: PASS\nCOMMONSENSE: PASS"),
    ]));
    let cfg = VotConfig {
        grounding_mode: GroundingMode::Oracle,
        ..VotConfig::default()
    };
    let (answer, trace) = run_vot(&q, &backend, &cfg).unwrap();
    assert_eq!(answer, "A");

    let truck = &trace.tracklets["the white truck"];
    assert_eq!(truck.source, GroundingSource::Oracle);
    assert_eq!(truck.instance_ids, vec!["truck-1"]);
    assert_eq!(truck.expression, serialize(&extract_tracklet(&stsg, "truck-1").unwrap().to_stsg()).unwrap());
    assert_eq!(trace.tracklets["the moon"].source, GroundingSource::Model);

    let step2 = trace.steps.iter().find(|s| s.tag == StepTag::Step2).unwrap();
    assert!(step2.prompt.contains("[the moon]"));
    assert!(!step2.prompt.contains("[the white truck]"));

    let step3 = &trace.steps.iter().find(|s| s.tag == StepTag::Step3).unwrap().prompt;
    assert!(step3.contains(&truck.expression));
    let scene = neighbor_scene(&stsg, "truck-1", 1, 2).unwrap();
    let scene_text = serialize(&scene.to_stsg()).unwrap();
    assert!(step3.contains(&scene_text), "{step3}");
    assert!(parse(&truck.expression).is_ok());
}

#[test]
fn open_ended_generates_candidates() {
    let q = QaInstance {
        id: "oe".into(),
        video_id: "white_truck.mp4".into(),
        question: "What is the relationship between the white truck and this neighborhood?".into(),
        options: vec![],
        gold: None,
        category: None,
        stsg: None,
    };
    let mut script = MockScript::from_json(SCRIPT).unwrap();
    script.entries.retain(|e| e.tag != StepTag::Step4Score);
    script.entries.push(MockEntry::new(
        StepTag::Step4Pre,
        "Answer A: It delivers parcels.\nAnswer B: It collects the garbage.\nAnswer C: It is parked.\nAnswer D: It sells ice cream.",
    ));
    script.entries.push(MockEntry::matching(StepTag::Step4Score, "[B. It collects", "Score: 9"));
    script.entries.push(MockEntry::new(StepTag::Step4Score, "Score: 3"));
    let cfg = VotConfig::default();
    let (answer, trace) = run_vot(&q, &MockBackend::new(script), &cfg).unwrap();
    assert_eq!(answer, "B");
    assert_eq!(trace.options.len(), 4);
    assert_eq!(trace.options[3].text, "It sells ice cream.");
    assert_eq!(trace.steps_with(StepTag::Step4Pre).count(), 1);
}
