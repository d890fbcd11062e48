mod common;

use common::{load_fixture, random_graph, random_split, ring_oracle, rng};
use graphbench::backend::{Responder, ScriptedBackend, ScriptedPolicy};
use graphbench::code::run_code_episode;
use graphbench::dsl::{eval_query, parse_query, random_query, Evaluator};
use graphbench::episode::{EpisodeEnv, EpisodeStatus, DEFAULT_MAX_STEPS};
use graphbench::render::DEFAULT_OBSERVATION_CAP;
use graphbench::tokens::TokenBudget;
use graphbench::tool::{execute_action, run_tool_episode, Action, ToolVariant};
use proptest::prelude::*;
use rand::Rng;

fn query(g: &graphbench::graph::TextGraph, v: &graphbench::graph::LabelView, text: &str) -> String {
    eval_query(g, v, &parse_query(text).unwrap(), DEFAULT_OBSERVATION_CAP, 0)
}

#[test]
fn dsl_hop_matches_bfs_oracle() {
    let mut r = rng(77);
    for _ in 0..50 {
        let n = r.random_range(1..=30);
        let g = random_graph(&mut r, n, 0.1, 3);
        let v = random_split(&mut r, &g, 0.5);
        for node in 0..n {
            for k in 0..=4 {
                let oracle = ring_oracle(&g, node, k);
                let body: Vec<String> = oracle.iter().map(ToString::to_string).collect();
                assert_eq!(
                    query(&g, &v, &format!("hop({node}, {k})")),
                    format!("[{}]", body.join(", ")),
                    "hop({node},{k})"
                );
            }
        }
    }
}

fn equivalent_query(action: &Action) -> String {
    match *action {
        Action::Neighbors(n) => format!("neighbors({n})"),
        Action::Features(n) => format!("features({n})"),
        Action::Label(n) => format!("label({n})"),
        Action::HopFeatures(n, k) => format!("features_of(hop({n}, {k}))"),
        Action::HopLabels(n, k) => format!("labels_of(hop({n}, {k}))"),
        Action::Answer(_) => unreachable!(),
    }
}

#[test]
fn every_tool_action_has_an_equivalent_query() {
    for name in ["five_node", "homophilic", "long_text"] {
        let (g, v) = load_fixture(name);
        for n in 0..g.num_nodes() + 2 {
            let mut actions = vec![Action::Neighbors(n), Action::Features(n), Action::Label(n)];
            for k in 1..=4 {
                actions.push(Action::HopFeatures(n, k));
                actions.push(Action::HopLabels(n, k));
            }
            for a in actions {
                let tool = execute_action(&g, &v, &a, DEFAULT_OBSERVATION_CAP);
                assert_eq!(tool, query(&g, &v, &equivalent_query(&a)), "{name}: {a}");
            }
        }
    }
}

#[test]
fn hop_labels_show_only_the_exact_ring() {
    let (g, v) = load_fixture("five_node");
    // ring 2 of node 0 is {3}; node 3 is known with class 1
    assert_eq!(
        execute_action(&g, &v, &Action::HopLabels(0, 2), DEFAULT_OBSERVATION_CAP),
        "Node 3: 1"
    );
    assert_eq!(
        execute_action(&g, &v, &Action::HopLabels(0, 1), DEFAULT_OBSERVATION_CAP),
        "Node 1: 0\nNode 2: None"
    );
}

#[test]
fn tool_script_neighbors_label_answer() {
    let (g, v) = load_fixture("homophilic");
    let budget = TokenBudget::default();
    let env = EpisodeEnv::new(&g, &v, &budget);
    // node 1: neighbors [0, 2, 3, 7]; node 0 is known, class 0
    let backend = ScriptedBackend::new(ScriptedPolicy::sequence([
        "Start with the neighborhood.\nAction 1, node 1",
        "Node 0 is first.\nAction 3, node 0",
        "Same class.\nAction 0, answer 0",
    ]));
    let ep = run_tool_episode(&backend, &env, 1, ToolVariant::Basic, DEFAULT_MAX_STEPS);
    assert_eq!(ep.status, EpisodeStatus::Answered);
    assert!(ep.is_correct(g.label(1)));
    assert_eq!(ep.turns[2].text, "[0, 2, 3, 7]");
    assert_eq!(ep.turns[4].text, "0");
}

#[test]
fn tool_loop_failure_modes() {
    let (g, v) = load_fixture("five_node");
    let budget = TokenBudget::default();
    let env = EpisodeEnv::new(&g, &v, &budget);

    let babble = ScriptedBackend::new(ScriptedPolicy::fixed("hmm"));
    let ep = run_tool_episode(&babble, &env, 0, ToolVariant::Plus, DEFAULT_MAX_STEPS);
    assert_eq!(ep.status, EpisodeStatus::ParseFailure);
    assert_eq!(ep.model_turns(), 3);

    let looping = ScriptedBackend::new(ScriptedPolicy::fixed("Action 1, node 0"));
    let ep = run_tool_episode(&looping, &env, 0, ToolVariant::Basic, 5);
    assert_eq!(ep.status, EpisodeStatus::StepLimit);
    assert_eq!(ep.model_turns(), 5);

    let basic_hop = ScriptedBackend::new(ScriptedPolicy::fixed("Action 5, node 0, hop 1"));
    let ep = run_tool_episode(&basic_hop, &env, 0, ToolVariant::Basic, 5);
    assert_eq!(ep.status, EpisodeStatus::ParseFailure);

    let tight = TokenBudget::new(50, Default::default());
    let env = EpisodeEnv::new(&g, &v, &tight);
    let ep = run_tool_episode(&looping, &env, 0, ToolVariant::Basic, 5);
    assert_eq!(ep.status, EpisodeStatus::TokenLimit);
}

#[test]
fn code_script_count_then_answer() {
    let (g, v) = load_fixture("homophilic");
    let budget = TokenBudget::default();
    let env = EpisodeEnv::new(&g, &v, &budget);
    // node 9 is class 1; its known neighbors 8 and 10 are class 1
    let backend = ScriptedBackend::new(ScriptedPolicy::sequence([
        "Count neighbor labels.\ncount_labels(neighbors(9))",
        "Class 1 dominates.\nAnswer [1]",
    ]));
    let ep = run_code_episode(&backend, &env, 9, DEFAULT_MAX_STEPS);
    assert_eq!(ep.turns[2].text, "1: 2\nNone: 2");
    assert_eq!(ep.status, EpisodeStatus::Answered);
    assert!(ep.is_correct(g.label(9)));
}

#[test]
fn code_loop_reports_query_errors_and_recovers() {
    let (g, v) = load_fixture("five_node");
    let budget = TokenBudget::default();
    let env = EpisodeEnv::new(&g, &v, &budget);
    let backend = ScriptedBackend::new(ScriptedPolicy::sequence([
        "df.loc[0]",
        "neighbors(99)",
        "Answer [2]",
    ]));
    let ep = run_code_episode(&backend, &env, 0, DEFAULT_MAX_STEPS);
    assert!(ep.turns[2].text.starts_with("Invalid query"));
    assert!(ep.turns[4].text.starts_with("Error: "));
    assert_eq!((ep.status, ep.predicted), (EpisodeStatus::Answered, Some(2)));
}

#[test]
fn modal_oracle_is_perfect_in_every_loop_mode() {
    let (g, v) = load_fixture("homophilic");
    let budget = TokenBudget::default();
    let env = EpisodeEnv::new(&g, &v, &budget);
    let backend = ScriptedBackend::new(ScriptedPolicy::responder(Responder::OneHopModalLabel));
    for &q in v.query() {
        for variant in [ToolVariant::Basic, ToolVariant::Plus] {
            let ep = run_tool_episode(&backend, &env, q, variant, DEFAULT_MAX_STEPS);
            assert!(ep.is_correct(g.label(q)), "{variant:?} node {q}: {:?}", ep.turns);
        }
        let ep = run_code_episode(&backend, &env, q, DEFAULT_MAX_STEPS);
        assert!(ep.is_correct(g.label(q)), "code node {q}: {:?}", ep.turns);
    }
}

proptest! {
    #[test]
    fn random_queries_never_panic(seed in any::<u64>()) {
        let (g, v) = load_fixture("five_node");
        let mut r = rng(seed);
        for _ in 0..20 {
            let text = random_query(&mut r, g.num_nodes(), g.num_classes());
            if let Ok(expr) = parse_query(&text) {
                let out = Evaluator::new(&g, &v).observe(&expr);
                prop_assert!(out.chars().count() <= DEFAULT_OBSERVATION_CAP + 12);
            }
        }
    }

    #[test]
    fn canonical_form_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let text = random_query(&mut r, 30, 4);
        if let Ok(expr) = parse_query(&text) {
            prop_assert_eq!(parse_query(&expr.to_string()).unwrap(), expr);
        }
    }
}
