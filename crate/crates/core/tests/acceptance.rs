//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero on any unexpected result.
//!
//! `EXPECTED_FAIL` lists criteria that cannot hold as stated; they are still
//! run and reported so a change in behavior is visible. See README.md.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use common::{
    balanced_dataset, dsl_violations, fixture, load_fixture, lp_oracle, random_graph, random_split, ring_oracle,
    rng, tool_violations,
};
use graphbench::ablation::{apply_perturbation, removed_edges, removed_labels, AxisKind};
use graphbench::backend::{Responder, ScriptedBackend, ScriptedPolicy};
use graphbench::baselines::{majority_class, propagate};
use graphbench::code::run_code_episode;
use graphbench::dsl::{eval_query, parse_query};
use graphbench::episode::{EpisodeEnv, EpisodeStatus, DEFAULT_MAX_STEPS};
use graphbench::prompt::{render_prompt, run_prompt_episode, PromptConfig};
use graphbench::render::DEFAULT_OBSERVATION_CAP;
use graphbench::runner::{mean_std, run_experiment, sample_query_nodes, ExperimentConfig, Harness, Mode, SeedSummary};
use graphbench::tokens::{CountingMode, TokenBudget};
use graphbench::tool::{execute_action, Action};
use rand::Rng;

const LP_TOLERANCE: f64 = 1e-9;
const LP_GRAPHS: usize = 100;
const LP_MAX_NODES: usize = 20;
const LP_STEPS: u32 = 10;
const LP_TIME_LIMIT_SECS: f64 = 5.0;
const RANDOM_C7_RANGE: (f64, f64) = (0.11, 0.18);
const RANDOM_C3_RANGE: (f64, f64) = (0.27, 0.40);
const RANDOM_EPISODES: usize = 1000;
const RANDOM_SEEDS: u64 = 5;
const LEAKAGE_TOOL_EPISODES: u64 = 10_000;
const LEAKAGE_DSL_QUERIES: u64 = 10_000;
const BFS_GRAPHS: usize = 50;
const BFS_MAX_NODES: usize = 30;
const BFS_MAX_K: usize = 4;
const TOKEN_LIMIT: usize = 100;
const NESTED_TRIALS: u64 = 20;

const EXPECTED_FAIL: &[&str] = &["token-limit"];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
type Statuses = [(EpisodeStatus, usize); 3];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lp_oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut isolated = 0;
    for _ in 0..LP_GRAPHS {
        let n = r.random_range(1..=LP_MAX_NODES);
        let g = random_graph(&mut r, n, 0.15, 5);
        isolated += (0..n).filter(|&v| g.degree(v) == 0).count();
        let v = random_split(&mut r, &g, 0.5);
        let ours = propagate(&g, &v, LP_STEPS as usize);
        let oracle = lp_oracle(&g, &v, LP_STEPS);
        for i in 0..n {
            for c in 0..5 {
                worst = worst.max((ours[i * 5 + c] - oracle[(i, c)]).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(isolated > 0, || "no isolated nodes sampled".into())?;
    ensure(worst <= LP_TOLERANCE, || format!("max error {worst:e}"))?;
    ensure(secs < LP_TIME_LIMIT_SECS, || format!("took {secs:.2}s"))?;
    Ok(format!("max |diff| {worst:.1e}, {isolated} isolated nodes, {secs:.2}s"))
}

fn random_accuracy(classes: usize) -> (f64, f64) {
    let (g, v) = balanced_dataset(classes, 700, 1);
    let h = Harness::new(Mode::Random, None, 0).unwrap();
    let accs: Vec<f64> = (0..RANDOM_SEEDS)
        .map(|seed| {
            let nodes = sample_query_nodes(&v, RANDOM_EPISODES, seed).unwrap();
            let eps = h.run(&g, &v, &nodes, seed).unwrap();
            SeedSummary::from_episodes(seed, &g, &eps).accuracy()
        })
        .collect();
    mean_std(&accs)
}

fn random_baseline_chance() -> Check {
    let (m7, s7) = random_accuracy(7);
    let (m3, s3) = random_accuracy(3);
    let detail = format!("C=7 {:.2}±{:.2}%, C=3 {:.2}±{:.2}%", m7 * 100.0, s7 * 100.0, m3 * 100.0, s3 * 100.0);
    ensure((RANDOM_C7_RANGE.0..=RANDOM_C7_RANGE.1).contains(&m7), || detail.clone())?;
    ensure((RANDOM_C3_RANGE.0..=RANDOM_C3_RANGE.1).contains(&m3), || detail.clone())?;
    Ok(detail)
}

fn majority_exact() -> Check {
    let mut checked = Vec::new();
    for name in ["five_node", "homophilic"] {
        let dir = tempfile::tempdir().unwrap();
        let (g, v) = load_fixture(name);
        let modal = majority_class(&v).map_err(|e| e.to_string())?;
        let hits = v.query().iter().filter(|&&q| g.label(q) == Some(modal)).count();
        let expected = hits as f64 / v.query().len() as f64;
        let cfg = config(
            dir.path(),
            serde_json::json!({
                "dataset": fixture(&format!("{name}.jsonl")),
                "splits": fixture(&format!("{name}_splits.json")),
                "mode": "majority", "seeds": [0, 1, 2], "episodes_per_seed": 1000,
                "output_dir": dir.path().join("out"),
            }),
        );
        let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
        ensure(report.mean == expected && report.stddev == 0.0, || {
            format!("{name}: got {} expected {expected}", report.mean)
        })?;
        checked.push(format!("{name} {hits}/{}", v.query().len()));
    }
    Ok(checked.join(", "))
}

fn golden_prompts() -> Check {
    let (g, v) = load_fixture("five_node");
    let cases = [
        ("prompt_node0_hops0.txt", PromptConfig::hops(0)),
        ("prompt_node0_hops1.txt", PromptConfig::hops(1)),
        ("prompt_node0_hops2.txt", PromptConfig::hops(2)),
        ("prompt_node0_hops2_cap1_seed1.txt", PromptConfig::budget(2, 1, 1)),
        ("prompt_node0_hops2_cap1_seed0.txt", PromptConfig::budget(2, 1, 0)),
    ];
    for (file, cfg) in &cases {
        let want = fs::read_to_string(fixture(&format!("golden/{file}"))).map_err(|e| e.to_string())?;
        let got = render_prompt(&g, &v, 0, cfg).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{file} differs"))?;
    }
    Ok(format!("{} files byte-exact", cases.len()))
}

fn config(dir: &Path, value: serde_json::Value) -> ExperimentConfig {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    ExperimentConfig::load(&path, &[]).unwrap()
}

fn scripted_oracle() -> Check {
    let mut cells = Vec::new();
    for mode in ["prompt", "tool", "tool-plus", "code"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            dir.path(),
            serde_json::json!({
                "dataset": fixture("homophilic.jsonl"),
                "splits": fixture("homophilic_splits.json"),
                "mode": mode, "hops": 1,
                "policy": fixture("policies/one_hop_modal.json"),
                "seeds": [0, 1, 2, 3, 4], "episodes_per_seed": 1000,
                "output_dir": dir.path().join("out"),
            }),
        );
        let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
        ensure(report.mean == 1.0, || format!("{mode}: {}", report.cell()))?;
        cells.push(format!("{mode} {}", report.cell()));
    }
    Ok(cells.join(", "))
}

fn no_leakage() -> Check {
    let tool = tool_violations(LEAKAGE_TOOL_EPISODES);
    let dsl = dsl_violations(LEAKAGE_DSL_QUERIES);
    let detail = format!(
        "{tool} violations in {LEAKAGE_TOOL_EPISODES} tool episodes, {dsl} in {LEAKAGE_DSL_QUERIES} queries"
    );
    ensure(tool == 0 && dsl == 0, || detail.clone())?;
    Ok(detail)
}

fn dsl_bfs_equivalence() -> Check {
    let mut r = rng(4);
    let mut checks = 0;
    for _ in 0..BFS_GRAPHS {
        let n = r.random_range(1..=BFS_MAX_NODES);
        let g = random_graph(&mut r, n, 0.1, 3);
        let v = random_split(&mut r, &g, 0.5);
        for node in 0..n {
            for k in 0..=BFS_MAX_K {
                let oracle: Vec<String> = ring_oracle(&g, node, k).iter().map(ToString::to_string).collect();
                let got = eval_query(&g, &v, &parse_query(&format!("hop({node}, {k})")).unwrap(), usize::MAX, 0);
                ensure(got == format!("[{}]", oracle.join(", ")), || format!("hop({node}, {k})"))?;
                checks += 1;
            }
        }
    }
    let (g, v) = load_fixture("five_node");
    let mut pairs = 0;
    for n in 0..g.num_nodes() {
        let mut cases = vec![
            (Action::Neighbors(n), format!("neighbors({n})")),
            (Action::Features(n), format!("features({n})")),
            (Action::Label(n), format!("label({n})")),
        ];
        for k in 1..=BFS_MAX_K {
            cases.push((Action::HopFeatures(n, k), format!("features_of(hop({n}, {k}))")));
            cases.push((Action::HopLabels(n, k), format!("labels_of(hop({n}, {k}))")));
        }
        for (action, q) in cases {
            let tool = execute_action(&g, &v, &action, DEFAULT_OBSERVATION_CAP);
            let dsl = eval_query(&g, &v, &parse_query(&q).unwrap(), DEFAULT_OBSERVATION_CAP, 0);
            ensure(tool == dsl, || format!("{action} vs {q}"))?;
            pairs += 1;
        }
    }
    Ok(format!("{checks} hop checks, {pairs} action/query pairs identical"))
}

/// Status of the long-text target under a given limit: (2-hop prompt,
/// budget prompt cap 1, code mode).
fn long_text_statuses(limit: usize) -> Statuses {
    let (g, v) = load_fixture("long_text");
    let budget = TokenBudget::new(limit, CountingMode::CharsDiv4);
    let env = EpisodeEnv::new(&g, &v, &budget);
    let backend = ScriptedBackend::new(ScriptedPolicy::responder(Responder::OneHopModalLabel));
    let size = |ep: &graphbench::episode::Episode| ep.request_tokens(&budget);
    let two = run_prompt_episode(&backend, &env, 0, &PromptConfig::hops(2)).unwrap();
    let capped = run_prompt_episode(&backend, &env, 0, &PromptConfig::budget(2, 1, 0)).unwrap();
    let code = run_code_episode(&backend, &env, 0, DEFAULT_MAX_STEPS);
    [
        (two.status, size(&two)),
        (capped.status, size(&capped)),
        (code.status, code.turns.first().map(|t| budget.count(&t.text)).unwrap_or(0)),
    ]
}

fn describe(s: &Statuses) -> String {
    format!(
        "2-hop {} ({} tok), budget cap 1 {} ({} tok), code {} (task {} tok)",
        s[0].0.as_str(),
        s[0].1,
        s[1].0.as_str(),
        s[1].1,
        s[2].0.as_str(),
        s[2].1
    )
}

fn pattern_holds(s: &Statuses) -> bool {
    s[0].0 == EpisodeStatus::TokenLimit && s[1].0 == EpisodeStatus::Answered && s[2].0 == EpisodeStatus::Answered
}

fn token_limit() -> Check {
    let s = long_text_statuses(TOKEN_LIMIT);
    let detail = format!("limit {TOKEN_LIMIT}: {}", describe(&s));
    ensure(pattern_holds(&s), || detail.clone())?;
    Ok(detail)
}

fn token_limit_calibrated() -> Check {
    let limit = 2000;
    let s = long_text_statuses(limit);
    let detail = format!("limit {limit}: {}", describe(&s));
    ensure(pattern_holds(&s), || detail.clone())?;
    Ok(detail)
}

fn ablation_sanity() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = config(
        dir.path(),
        serde_json::json!({
            "dataset": fixture("homophilic.jsonl"),
            "splits": fixture("homophilic_splits.json"),
            "mode": "prompt", "hops": 2,
            "policy": fixture("policies/one_hop_modal.json"),
            "seeds": [0, 1], "episodes_per_seed": 1000,
            "x_axis": "edge_deletion", "x_rates": [1.0],
            "y_axis": "label_deletion", "y_rates": [0.0],
            "output_dir": out,
        }),
    );
    graphbench::ablation::run_grid(&cfg).map_err(|e| e.to_string())?;
    let mut prompts = 0;
    for seed in [0, 1] {
        let path = out.join(format!("transcripts/grid/x1_y0_seed_{seed}.jsonl"));
        let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        for line in text.lines() {
            let turn: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            if turn["turn"] == 0 {
                prompts += 1;
                let body = turn["text"].as_str().unwrap_or("");
                ensure(!body.contains("has the following neighbors"), || format!("neighbor section in {path:?}"))?;
            }
        }
    }
    ensure(prompts == 24, || format!("{prompts} prompts"))?;

    let (g, v) = load_fixture("homophilic");
    let (cut, v2) = apply_perturbation(&g, &v, &AxisKind::EdgeDeletion.at(1.0, 0), &CountingMode::default());
    for &q in v.query() {
        let got = eval_query(&cut, &v2, &parse_query(&format!("neighbors({q})")).unwrap(), DEFAULT_OBSERVATION_CAP, 0);
        ensure(got == "[]", || format!("neighbors({q}) = {got}"))?;
    }

    let rates: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut r = rng(12);
    let mut pairs = 0;
    for trial in 0..NESTED_TRIALS {
        let g = random_graph(&mut r, 30, 0.15, 3);
        let v = random_split(&mut r, &g, 0.5);
        for (i, &r1) in rates.iter().enumerate() {
            for &r2 in &rates[i..] {
                let e1: BTreeSet<_> = removed_edges(&g, r1, trial).into_iter().collect();
                let e2: BTreeSet<_> = removed_edges(&g, r2, trial).into_iter().collect();
                let l1: BTreeSet<_> = removed_labels(&v, r1, trial).into_iter().collect();
                let l2: BTreeSet<_> = removed_labels(&v, r2, trial).into_iter().collect();
                ensure(e1.is_subset(&e2) && l1.is_subset(&l2), || format!("trial {trial}: {r1} vs {r2}"))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{prompts} prompts without neighbor sections, {} empty neighbor queries, {pairs} nested pairs", v.query().len()))
}

fn grid_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("grid.json");
    let cfg = serde_json::json!({
        "dataset": fixture("homophilic.jsonl"),
        "splits": fixture("homophilic_splits.json"),
        "mode": "tool-plus",
        "policy": {"default": {"responder": {"random_action": {"node_bound": 24}}}, "seed": 11},
        "seeds": [0, 1, 2], "episodes_per_seed": 12, "workers": 4,
        "x_axis": "edge_deletion", "x_rates": [0.0, 0.5, 1.0],
        "y_axis": "feature_truncation", "y_rates": [0.0, 0.5],
    });
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_graphbench"))
            .args(["grid", "--config"])
            .arg(&cfg_path)
            .arg("--set")
            .arg(format!("output_dir={}", out.display()))
            .env("RUST_LOG", "warn")
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("grid run {run} failed"))?;
        let heatmaps = out.join("heatmaps");
        let mut files: Vec<_> = fs::read_dir(&heatmaps).map_err(|e| e.to_string())?.flatten().map(|e| e.path()).collect();
        files.sort();
        let bytes: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        outputs.push(bytes);
    }
    ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || "heatmap CSVs differ".into())?;
    Ok(format!("{} CSV file(s), {} bytes, identical", outputs[0].len(), outputs[0].iter().map(Vec::len).sum::<usize>()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("label-propagation-oracle", lp_oracle_equivalence),
        ("random-baseline-chance", random_baseline_chance),
        ("majority-baseline-exact", majority_exact),
        ("golden-prompts", golden_prompts),
        ("scripted-oracle-end-to-end", scripted_oracle),
        ("no-leakage", no_leakage),
        ("dsl-bfs-equivalence", dsl_bfs_equivalence),
        ("token-limit", token_limit),
        ("ablation-sanity", ablation_sanity),
        ("grid-determinism", grid_determinism),
    ];
    let mut unexpected = Vec::new();
    for (name, check) in criteria {
        let expected_fail = EXPECTED_FAIL.contains(&name);
        match check() {
            Ok(detail) => {
                println!("PASS {name}: {detail}");
                if expected_fail {
                    unexpected.push(format!("{name} passed but is listed in EXPECTED_FAIL"));
                }
            }
            Err(detail) => {
                let note = if expected_fail { " (expected, unattainable as stated)" } else { "" };
                println!("FAIL {name}: {detail}{note}");
                if !expected_fail {
                    unexpected.push(name.to_string());
                }
            }
        }
    }
    match token_limit_calibrated() {
        Ok(detail) => println!("PASS token-limit-calibrated (supplementary): {detail}"),
        Err(detail) => {
            println!("FAIL token-limit-calibrated (supplementary): {detail}");
            unexpected.push("token-limit-calibrated".into());
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected results: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
