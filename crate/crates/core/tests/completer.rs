use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use eif_core::completer::{
    build_prompt, complete, oracle_complete, parse_response, Backend, CompleterError, GroundTruth, HttpBackend,
    HttpConfig, PromptBundle, ScriptedBackend, ScriptedEntry, TaskProgress, Templates,
};
use eif_core::mapper::ObservedLandmark;
use eif_core::world::{
    generate_scene, possible_landmarks, read_scenes, Category, Cell, Condition, GridScene, ObjectInstance, RoomType,
    Subgoal, SubgoalAction, TaskSpec, TaskTargets, TaskType,
};
use proptest::prelude::*;

fn pickup_mug() -> Subgoal {
    Subgoal::new(SubgoalAction::PickupObject, Category::Mug)
}

fn kitchen_bundle(last: Option<&str>) -> PromptBundle {
    let (_, task) = generate_scene(7, RoomType::Kitchen, true);
    let progress = TaskProgress {
        completed: vec![],
        current: pickup_mug(),
        remaining: vec![Subgoal::new(SubgoalAction::PutObject, Category::CounterTop)],
    };
    let observed = [
        ObservedLandmark {
            category: Category::CounterTop,
            cell: Cell::new(3, 4),
        },
        ObservedLandmark {
            category: Category::StoveBurner,
            cell: Cell::new(3, 7),
        },
    ];
    build_prompt(
        &Templates::default(),
        RoomType::Kitchen,
        &task,
        &progress,
        &observed,
        &possible_landmarks(RoomType::Kitchen),
        last,
    )
    .unwrap()
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {name}; rerun with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "golden drift in {name}");
}

#[test]
fn kitchen_prompt_matches_golden_files() {
    let b = kitchen_bundle(None);
    check_golden("kitchen_seed7.system.txt", &b.system_message);
    check_golden("kitchen_seed7.agent.txt", &b.agent_message);
}

#[test]
fn first_prompt_has_no_last_message() {
    let b = kitchen_bundle(None);
    assert!(b.agent_message.lines().any(|l| l == "Last message: None"));
}

#[test]
fn observed_landmarks_appear_verbatim() {
    let b = kitchen_bundle(None);
    assert!(b.agent_message.contains("['CounterTop', 'StoveBurner']"));
}

#[test]
fn failure_message_is_passed_on() {
    let b = kitchen_bundle(Some("Mug not visible"));
    assert!(b.agent_message.contains("Last message: Mug not visible"));
}

#[test]
fn identical_inputs_render_identical_bytes() {
    let a = kitchen_bundle(Some("x"));
    let b = kitchen_bundle(Some("x"));
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
}

#[test]
fn agent_message_has_every_section() {
    let b = kitchen_bundle(None);
    for s in [
        "Goal statement:",
        "Step-by-step instructions:",
        "Possible landmarks in this room type:",
        "Task completion:",
        "Global observed landmarks:",
        "Last message:",
    ] {
        assert!(b.agent_message.contains(s), "{s}");
    }
}

#[test]
fn templates_load_from_directory() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("templates");
    assert_eq!(Templates::from_dir(&dir).unwrap(), Templates::default());
}

#[test]
fn template_with_unknown_placeholder_is_rejected() {
    let (_, task) = generate_scene(7, RoomType::Kitchen, true);
    let t = Templates {
        system: "{{room_type}} {{mood}}".into(),
        agent: Templates::default().agent,
    };
    let progress = TaskProgress {
        completed: vec![],
        current: pickup_mug(),
        remaining: vec![],
    };
    let err = build_prompt(&t, RoomType::Kitchen, &task, &progress, &[], &[], None).unwrap_err();
    assert_eq!(err, CompleterError::TemplateMissingPlaceholder("mood".into()));
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name),
    )
    .unwrap()
}

#[test]
fn fridge_recovery_reply_is_accepted() {
    let r = parse_response(
        &fixture("reply_fridge.txt"),
        &possible_landmarks(RoomType::Kitchen),
        &pickup_mug(),
    )
    .unwrap();
    let got: Vec<String> = r.subgoals.iter().map(|g| g.to_string()).collect();
    assert_eq!(got, ["GotoLocation Fridge", "OpenObject Fridge", "PickupObject Mug"]);
    assert!(r.reasoning.contains("fridge"));
}

#[test]
fn invented_object_is_rejected() {
    let err = parse_response(
        &fixture("reply_unicorn.txt"),
        &possible_landmarks(RoomType::Kitchen),
        &pickup_mug(),
    )
    .unwrap_err();
    assert_eq!(err, CompleterError::HallucinatedObject("Unicorn".into()));
}

#[test]
fn plan_not_ending_in_current_subgoal_is_rejected() {
    let err = parse_response(
        &fixture("reply_wrong_last.txt"),
        &possible_landmarks(RoomType::Kitchen),
        &pickup_mug(),
    )
    .unwrap_err();
    assert!(matches!(err, CompleterError::MissingTerminalSubgoal { .. }), "{err:?}");
}

#[test]
fn reply_without_plan_is_malformed() {
    let err = parse_response(
        &fixture("reply_no_plan.txt"),
        &possible_landmarks(RoomType::Kitchen),
        &pickup_mug(),
    )
    .unwrap_err();
    assert!(matches!(err, CompleterError::Malformed(_)), "{err:?}");
}

#[test]
fn scripted_backend_returns_reply_verbatim_then_runs_dry() {
    let b = kitchen_bundle(None);
    let reply = fixture("reply_fridge.txt");
    let entry = ScriptedEntry {
        prompt_hash: b.hash(),
        response: reply.clone(),
    };
    let jsonl = serde_json::to_string(&entry).unwrap() + "\n";
    let backend = Backend::Scripted(ScriptedBackend::from_jsonl(&jsonl).unwrap());
    assert_eq!(complete(&b, &backend, None).unwrap(), reply);
    assert_eq!(complete(&b, &backend, None), Err(CompleterError::FixtureExhausted));
}

#[test]
fn scripted_backend_skips_entries_for_other_prompts() {
    let a = kitchen_bundle(None);
    let b = kitchen_bundle(Some("blocked"));
    let s = ScriptedBackend::new(vec![
        ScriptedEntry {
            prompt_hash: b.hash(),
            response: "for b".into(),
        },
        ScriptedEntry {
            prompt_hash: "*".into(),
            response: "any".into(),
        },
    ]);
    assert_eq!(s.next(&a).unwrap(), "any");
    assert_eq!(s.next(&b).unwrap(), "for b");
    assert_eq!(s.remaining(), 0);
}

#[test]
fn bad_fixture_line_is_reported() {
    assert!(matches!(
        ScriptedBackend::from_jsonl("{not json}"),
        Err(CompleterError::Fixture(_))
    ));
}

/// Serves `replies` in order, one connection each, and returns the request bodies.
fn mock_server(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let h = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            out.flush().unwrap();
        }
        bodies
    });
    (url, h)
}

fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn http(endpoint: String) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        endpoint,
        backoff_ms: 5,
        timeout_secs: 5,
        ..HttpConfig::default()
    })
}

#[test]
fn http_backend_sends_two_roles_at_zero_temperature() {
    let (url, h) = mock_server(vec![(200, chat_reply("Reason: r\nPlan:\n1. PickupObject Mug"))]);
    let b = kitchen_bundle(None);
    let text = complete(&b, &Backend::Http(http(url)), None).unwrap();
    assert_eq!(text, "Reason: r\nPlan:\n1. PickupObject Mug");
    let body: serde_json::Value = serde_json::from_str(&h.join().unwrap()[0]).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], b.system_message);
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], b.agent_message);
}

#[test]
fn http_backend_retries_server_errors() {
    let (url, h) = mock_server(vec![(503, "{}".into()), (500, "{}".into()), (200, chat_reply("ok"))]);
    assert_eq!(http(url).complete(&kitchen_bundle(None)).unwrap(), "ok");
    assert_eq!(h.join().unwrap().len(), 3);
}

#[test]
fn http_backend_gives_up_after_three_retries() {
    let (url, h) = mock_server(vec![(500, "{}".into()); 4]);
    let err = http(url).complete(&kitchen_bundle(None)).unwrap_err();
    assert!(matches!(err, CompleterError::Transport(_)));
    assert_eq!(h.join().unwrap().len(), 4);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = http(format!("http://127.0.0.1:{port}/v1/chat/completions"));
    let err = complete(&kitchen_bundle(None), &Backend::Http(b), None).unwrap_err();
    assert!(matches!(err, CompleterError::Transport(_)), "{err:?}");
}

#[test]
fn oracle_backend_ignores_prompt_and_needs_truth() {
    let (scene, _) = generate_scene(7, RoomType::Kitchen, true);
    let truth = GroundTruth {
        scene: &scene,
        subgoal: pickup_mug(),
        exclude: &[],
    };
    let junk = PromptBundle {
        system_message: "a".into(),
        agent_message: "b".into(),
    };
    let a = complete(&junk, &Backend::Oracle, Some(truth)).unwrap();
    let b = complete(&kitchen_bundle(None), &Backend::Oracle, Some(truth)).unwrap();
    assert_eq!(a, b);
    assert!(complete(&junk, &Backend::Oracle, None).is_err());
}

#[test]
fn oracle_opens_fridge_before_pickup() {
    let (scene, _) = generate_scene(7, RoomType::Kitchen, true);
    let r = oracle_complete(&scene, &pickup_mug(), &[]).unwrap();
    let got: Vec<String> = r.subgoals.iter().map(|g| g.to_string()).collect();
    assert_eq!(got, ["GotoLocation Fridge", "OpenObject Fridge", "PickupObject Mug"]);
    let fridge = scene.instances(Category::Fridge).next().unwrap();
    assert_eq!(r.subgoals[1].resolved_position, fridge.cell);
    let reparsed = parse_response(&r.to_text(), &possible_landmarks(RoomType::Kitchen), &pickup_mug()).unwrap();
    assert_eq!(reparsed.subgoals.len(), 3);
}

fn json_scene(objects: Vec<ObjectInstance>, room: &str) -> GridScene {
    let rec = serde_json::json!({
        "v": 1, "seed": 0, "room_type": room, "hard": false,
        "grid": ["#########", "#.......#", "#.......#", "#########"],
        "spawn": {"cell": {"row": 1, "col": 1}, "heading": "E", "look": "level"},
        "objects": objects,
        "task": TaskSpec {
            task_type: TaskType::PickPlace,
            goal_statement: "g".into(),
            step_instructions: vec![],
            goal_conditions: vec![Condition::Holding { object: Category::Mug }],
            hard: false,
            targets: TaskTargets::default(),
        },
    });
    read_scenes(serde_json::to_string(&rec).unwrap().as_bytes())
        .unwrap()
        .remove(0)
        .0
}

#[test]
fn loose_mug_needs_no_extra_steps() {
    let scene = json_scene(
        vec![
            ObjectInstance::new(0, Category::CounterTop, Cell::new(1, 7)),
            ObjectInstance::new(1, Category::Mug, Cell::new(1, 7)),
        ],
        "kitchen",
    );
    let r = oracle_complete(&scene, &pickup_mug(), &[]).unwrap();
    assert_eq!(r.subgoals.len(), 1);
    assert!(r.subgoals[0].same_step(&pickup_mug()));
    assert_eq!(r.subgoals[0].resolved_position, Some(Cell::new(1, 7)));
}

#[test]
fn cloth_in_second_cabinet_resolves_to_that_cabinet() {
    let mut objects: Vec<ObjectInstance> = [1, 4, 7]
        .iter()
        .enumerate()
        .map(|(i, &c)| ObjectInstance::new(i, Category::Cabinet, Cell::new(2, c)))
        .collect();
    let mut cloth = ObjectInstance::new(3, Category::Cloth, Cell::new(2, 4));
    cloth.contained_in = Some(1);
    objects.push(cloth);
    let scene = json_scene(objects, "bathroom");
    let current = Subgoal::new(SubgoalAction::PickupObject, Category::Cloth);
    let r = oracle_complete(&scene, &current, &[]).unwrap();
    assert_eq!(r.subgoals.len(), 3);
    assert_eq!(r.subgoals[0].object, Category::Cabinet);
    assert_eq!(r.subgoals[0].resolved_position, Some(Cell::new(2, 4)));
    assert!(r.subgoals[1].same_step(&Subgoal::new(SubgoalAction::OpenObject, Category::Cabinet)));
    assert_eq!(r.subgoals[1].resolved_position, Some(Cell::new(2, 4)));
}

#[test]
fn oracle_reports_missing_target() {
    let scene = json_scene(
        vec![ObjectInstance::new(0, Category::CounterTop, Cell::new(1, 7))],
        "kitchen",
    );
    assert_eq!(
        oracle_complete(&scene, &pickup_mug(), &[]),
        Err(CompleterError::TargetAbsent(Category::Mug))
    );
}

#[test]
fn backend_is_shareable_across_threads() {
    let hits = Arc::new(AtomicUsize::new(0));
    let backend = Arc::new(Backend::Scripted(ScriptedBackend::new(vec![
        ScriptedEntry {
            prompt_hash: "*".into(),
            response: "r".into()
        };
        8
    ])));
    let b = kitchen_bundle(None);
    thread::scope(|s| {
        for _ in 0..8 {
            let (backend, hits, b) = (backend.clone(), hits.clone(), &b);
            s.spawn(move || {
                complete(b, &backend, None).unwrap();
                hits.fetch_add(1, Ordering::SeqCst);
            });
        }
    });
    assert_eq!(hits.load(Ordering::SeqCst), 8);
}

fn word() -> impl Strategy<Value = String> {
    let cats: Vec<String> = Category::ALL.iter().map(|c| c.name().to_string()).collect();
    let acts: Vec<String> = SubgoalAction::ALL.iter().map(|a| a.name().to_string()).collect();
    prop_oneof![
        proptest::sample::select(cats),
        proptest::sample::select(acts),
        "[A-Za-z]{1,8}",
        Just("Plan:".to_string()),
        Just("\n".to_string()),
        Just("1.".to_string()),
    ]
}

proptest! {
    #[test]
    fn parsed_objects_are_always_possible(words in proptest::collection::vec(word(), 0..30), room in 0usize..4) {
        let room = RoomType::ALL[room];
        let possible = possible_landmarks(room);
        let text = words.join(" ");
        if let Ok(r) = parse_response(&text, &possible, &pickup_mug()) {
            prop_assert!(!r.subgoals.is_empty());
            for g in &r.subgoals {
                prop_assert!(possible.contains(&g.object));
            }
            prop_assert!(r.subgoals.last().unwrap().same_step(&pickup_mug()));
        }
    }

    #[test]
    fn prompt_rendering_is_pure(seed in 0u64..40, room in 0usize..4) {
        let room = RoomType::ALL[room];
        let (_, task) = generate_scene(seed, room, seed % 2 == 0);
        let progress = TaskProgress { completed: vec![], current: pickup_mug(), remaining: vec![] };
        let possible = possible_landmarks(room);
        let a = build_prompt(&Templates::default(), room, &task, &progress, &[], &possible, None).unwrap();
        let b = build_prompt(&Templates::default(), room, &task, &progress, &[], &possible, None).unwrap();
        prop_assert_eq!(a, b);
    }
}
