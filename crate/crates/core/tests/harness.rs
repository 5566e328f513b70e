use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use ddr_core::act::DialogueAct;
use ddr_core::ddr::Actor;
use ddr_core::env::{LogRecord, Outcome, OutcomeReason};
use ddr_core::harness::dataset::{generate_dataset, DatasetSpec};
use ddr_core::harness::eval::{evaluate_policy, EvalSettings};
use ddr_core::harness::report::{long_rows, read_long_csv, run_grid, write_grid_outputs, write_long_csv, CellKey, GridSpec, SummaryRow};
use ddr_core::harness::stats::{dead_end_stats, mean_sd};
use ddr_core::harness::trace::n_trace;
use ddr_core::harness::train::train_run;
use ddr_core::{DqnVariant, RescueMode, RunConfig};

fn small_config() -> RunConfig {
    RunConfig {
        warm_start_epochs: 10,
        epochs: 4,
        dialogues_per_epoch: 5,
        eval_every: 2,
        eval_episodes: 20,
        hidden_dim: 16,
        ..RunConfig::default()
    }
}

fn exchange(episode: u64, n: usize) -> LogRecord {
    LogRecord::Exchange {
        episode,
        turn: 1,
        system_act: DialogueAct::request("genre"),
        user_act: DialogueAct::inform("genre", "x"),
        n,
        reward: -1.0,
        emitted: vec![],
    }
}

fn end(episode: u64, success: bool) -> LogRecord {
    LogRecord::EpisodeEnd {
        episode,
        outcome: if success { Outcome::success() } else { Outcome::failure(OutcomeReason::MaxTurns) },
        turns: 1,
        total_reward: 0.0,
    }
}

#[test]
fn equal_seeds_give_identical_result_files() {
    let (table, goals) = generate_dataset(&DatasetSpec::default(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig { rescue_mode: RescueMode::Ig, ..small_config() };
    let key = CellKey { agent: RescueMode::Ig, variant: DqnVariant::Vanilla, noise: 0.0, seed: 0 };
    for name in ["a.csv", "b.csv"] {
        let run = train_run(&config, &table, &goals).unwrap();
        write_long_csv(&dir.path().join(name), &long_rows(&key, &run)).unwrap();
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evaluation_touches_nothing() {
    let (table, goals) = generate_dataset(&DatasetSpec::default(), 0).unwrap();
    let run = train_run(&small_config(), &table, &goals).unwrap();
    let net = run.checkpoint.network().unwrap();
    let before = net.clone();
    let settings = EvalSettings { episodes: 30, slot_error_rate: 0.1, max_turns: 30, seed: 4 };
    let table = Arc::new(table);
    let m1 = evaluate_policy(&net, table.clone(), &goals, &settings).unwrap();
    let m2 = evaluate_policy(&net, table, &goals, &settings).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(net, before);
}

#[test]
fn hand_built_dead_end_mixture() {
    // Seed 0: 3 failures, 2 with n = 0. Seed 1: 2 failures, 0 with n = 0, plus a success.
    let seed0 = vec![
        exchange(0, 0), end(0, false),
        exchange(1, 0), end(1, false),
        exchange(2, 5), end(2, false),
        exchange(3, 0), end(3, true),
    ];
    let seed1 = vec![exchange(0, 3), end(0, false), exchange(1, 1), end(1, false), exchange(2, 1), end(2, true)];
    let stats = dead_end_stats(&[seed0, seed1]);
    // The ratio is the mean of the per-seed ratios 2/3 and 0/2.
    let (mean, sd) = mean_sd(&[2.0 / 3.0, 0.0]);
    assert_eq!(stats.per_seed, vec![Some(2.0 / 3.0), Some(0.0)]);
    assert!((stats.ratio.unwrap() - mean).abs() < 1e-15);
    assert!((stats.stddev.unwrap() - sd).abs() < 1e-15);
}

#[test]
fn rule_trace_narrows_and_stays_positive() {
    let (table, goals) = generate_dataset(&DatasetSpec::default(), 0).unwrap();
    let table = Arc::new(table);
    for goal_id in 0..10 {
        let trace = n_trace(Actor::Rule, goal_id, table.clone(), &goals, 1, 0.0, 30).unwrap();
        assert!(trace.windows(2).all(|w| w[1].1 <= w[0].1), "goal {goal_id}: {trace:?}");
        assert!(trace.last().unwrap().1 >= 1);
        let again = n_trace(Actor::Rule, goal_id, table.clone(), &goals, 1, 0.0, 30).unwrap();
        assert_eq!(trace, again);
    }
    assert!(n_trace(Actor::Rule, goals.len(), table, &goals, 1, 0.0, 30).is_err());
}

#[test]
fn summary_matches_per_seed_files() {
    let (table, goals) = generate_dataset(&DatasetSpec::default(), 0).unwrap();
    let spec = GridSpec {
        base: small_config(),
        agents: vec![RescueMode::None, RescueMode::Se],
        variants: vec![DqnVariant::Dueling],
        noises: vec![0.1],
        seeds: vec![0, 1, 2],
    };
    let cells = run_grid(&spec, &table, &goals, 2);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(write_grid_outputs(dir.path(), &cells).unwrap(), 0);

    let mut by_group: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for c in &cells {
        for row in read_long_csv(&dir.path().join(format!("{}.csv", c.key.file_stem()))).unwrap() {
            if row.metric == "final_success_rate" {
                by_group.entry((row.agent, row.metric)).or_default().push(row.value);
            }
        }
    }
    let summary: Vec<SummaryRow> = csv::Reader::from_path(dir.path().join("summary.csv"))
        .unwrap()
        .deserialize()
        .map(Result::unwrap)
        .collect();
    for ((agent, metric), values) in by_group {
        let row = summary.iter().find(|s| s.agent == agent && s.metric == metric).unwrap();
        let (mean, sd) = mean_sd(&values);
        assert_eq!(row.seeds, 3);
        assert!((row.mean - mean).abs() < 1e-12);
        assert!((row.stddev - sd).abs() < 1e-12);
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["cells"], 6);
}

fn ddr(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ddr"))
        .args(args)
        .env("DDR_OUT_DIR", out)
        .output()
        .unwrap()
}

#[test]
fn cli_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let runs = root.path().join("runs");
    let data_s = data.to_str().unwrap();

    let o = ddr(&["gen-data", "--seed", "3"], &data);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("table.json").exists() && data.join("goals.json").exists());

    let small = [
        "--warm-start-epochs", "5", "--epochs", "2", "--dialogues-per-epoch", "4",
        "--eval-episodes", "10", "--hidden-dim", "8",
    ];
    let mut train = vec!["train", "--data", data_s, "--rescue-mode", "ig", "--log-episodes"];
    train.extend(small);
    let o = ddr(&train, &runs);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stem = "ddr-ig_vanilla_noise0_seed0";
    let checkpoint = runs.join(format!("{stem}.checkpoint.json"));
    assert!(checkpoint.exists());

    let o = ddr(&["eval", "--data", data_s, "--checkpoint", checkpoint.to_str().unwrap(), "--episodes", "12"], &runs);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["episodes"], 12);

    let log = runs.join(format!("{stem}.episodes.jsonl"));
    let o = ddr(&["stats", "dead-ends", log.to_str().unwrap()], &runs);
    assert!(o.status.success());

    let o = ddr(&["trace-n", "--data", data_s, "--goal", "0", "--goal", "1", "--agent", "rule"], &runs);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(runs.join("trace_rule.csv")).unwrap();
    assert!(trace.starts_with("turn,n,agent,goal_id"));

    let grid = root.path().join("grid");
    let mut report = vec!["report", "--data", data_s, "--agents", "none,se", "--seeds", "2", "--workers", "2"];
    report.extend(small);
    let o = ddr(&report, &grid);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(grid.join("summary.json").exists());

    let again = root.path().join("again");
    let o = ddr(&["report", "--aggregate", grid.to_str().unwrap()], &again);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(again.join("summary.csv")).unwrap(),
        std::fs::read(grid.join("summary.csv")).unwrap()
    );

    let o = ddr(&["eval", "--data", data_s, "--checkpoint", "/nonexistent.json"], &runs);
    assert!(!o.status.success());
}
