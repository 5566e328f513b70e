//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --test-threads=1` doubles as
//! a report.

use std::collections::BTreeMap;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ddr_core::act::{DialogueAct, DONT_CARE};
use ddr_core::ddr::{detect_dead_end, Actor};
use ddr_core::env::{compute_reward, LogRecord, CONFLICT};
use ddr_core::harness::dataset::{generate_dataset, DatasetSpec};
use ddr_core::harness::eval::metrics_from_logs;
use ddr_core::harness::report::{default_workers, run_grid, CellResult, GridSpec};
use ddr_core::harness::stats::{mean_sd, paired_t_test_greater};
use ddr_core::harness::trace::{n_trace, stable_turn};
use ddr_core::harness::train::RunResult;
use ddr_core::kb::{self, BestSlot, Constraints};
use ddr_core::policy::QNetwork;
use ddr_core::{DialogueEnv, DqnVariant, KbTable, Outcome, OutcomeReason, RescueMode, RunConfig, UserGoal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Budget shared by every learning criterion. All agents in a comparison
/// see the same number of dialogues and epochs.
const SEEDS: u64 = 10;
const EPOCHS: usize = 200;
const DIALOGUES_PER_EPOCH: usize = 20;
const EVAL_EPISODES: usize = 1000;
const TRACED_GOALS: usize = 10;

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("criterion {criterion:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    // Bypass the harness's output capture so the line always shows.
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

// ---------------------------------------------------------------- oracles

fn random_table(rng: &mut ChaCha8Rng) -> KbTable {
    let slots = rng.gen_range(1..=6);
    let rows = rng.gen_range(1..=64);
    let arity: Vec<usize> = (0..slots).map(|_| rng.gen_range(1..=5)).collect();
    let schema = (0..slots).map(|i| format!("s{i}")).collect();
    let rows = (0..rows)
        .map(|_| arity.iter().map(|&k| format!("v{}", rng.gen_range(0..k))).collect())
        .collect();
    KbTable::new(schema, rows).unwrap()
}

fn row_satisfies(table: &KbTable, row: &[String], constraints: &Constraints) -> bool {
    constraints.iter().all(|(slot, value)| {
        let col = table.schema().iter().position(|s| s == slot).unwrap();
        value == DONT_CARE || (value != CONFLICT && &row[col] == value)
    })
}

fn oracle_matches<'t>(table: &'t KbTable, constraints: &Constraints) -> Vec<&'t [String]> {
    table.rows().filter(|r| row_satisfies(table, r, constraints)).collect()
}

/// `H(N) - H(N | V)` with `N` uniform over the matching rows, from the
/// joint partition of rows by value.
fn oracle_ig(table: &KbTable, constraints: &Constraints, slot: &str) -> f64 {
    let col = table.schema().iter().position(|s| s == slot).unwrap();
    let rows = oracle_matches(table, constraints);
    let n = rows.len() as f64;
    let h_n = n.log2();
    let mut parts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *parts.entry(r[col].as_str()).or_default() += 1;
    }
    let h_n_given_v: f64 = parts.values().map(|&c| (c as f64 / n) * (c as f64).log2()).sum();
    h_n - h_n_given_v
}

// ------------------------------------------------------------ criterion 1

#[test]
fn c01_information_gain_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut bad_ig, mut bad_best) = (0, 0, 0);
    for _ in 0..1000 {
        let table = random_table(&mut rng);
        let mut constraints = Constraints::new();
        let base = table.row(rng.gen_range(0..table.len())).to_vec();
        for (i, slot) in table.schema().iter().enumerate() {
            match rng.gen_range(0..4) {
                0 => {
                    constraints.insert(slot.clone(), base[i].clone());
                }
                1 => {
                    constraints.insert(slot.clone(), DONT_CARE.to_string());
                }
                _ => {}
            }
        }
        let n = oracle_matches(&table, &constraints).len();
        assert_eq!(kb::match_count(&table, &constraints).unwrap(), n);
        if n < 2 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, slot) in table.schema().iter().enumerate() {
            let expected = oracle_ig(&table, &constraints, slot);
            let got = kb::information_gain(&table, &constraints, slot).unwrap();
            checked += 1;
            if (expected - got).abs() > 1e-9 {
                bad_ig += 1;
            }
            if !constraints.contains_key(slot) && best.map_or(true, |(_, b)| expected > b + 1e-12) {
                best = Some((i, expected));
            }
        }
        let expected = match best {
            Some((i, ig)) if ig > 1e-12 => BestSlot::Slot(table.schema()[i].clone()),
            _ => BestSlot::NoInformativeSlot,
        };
        if kb::best_request_slot(&table, &constraints).unwrap() != expected {
            bad_best += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = bad_ig == 0 && bad_best == 0 && secs < 10.0;
    report(
        1,
        pass,
        &format!("{checked} IG values, {bad_ig} off by >1e-9, {bad_best} argmax mismatches, {secs:.2}s"),
    );
    assert!(pass);
}

// ------------------------------------------------------------ criterion 2

#[test]
fn c02_detector_exactness() {
    let start = Instant::now();
    let (table, goals) = generate_dataset(&DatasetSpec::default(), 2).unwrap();
    let table = Arc::new(table);
    let mut env = DialogueEnv::new(table.clone(), 0.3, 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut transitions, mut positives, mut wrong) = (0, 0, 0);
    let mut episode = 0u64;
    while transitions < 10_000 {
        env.reset(&goals[episode as usize % goals.len()], episode).unwrap();
        episode += 1;
        while !env.is_terminal() && transitions < 10_000 {
            let before = env.state().constraints_so_far.clone();
            let step = env.step(rng.gen_range(0..env.catalogue().len())).unwrap();
            let after = &env.state().constraints_so_far;
            // Label from the constraint sets alone.
            let label = !oracle_matches(&table, &before).is_empty() && oracle_matches(&table, after).is_empty();
            positives += label as usize;
            if detect_dead_end(step.prev_n, step.n) != label {
                wrong += 1;
            }
            transitions += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = wrong == 0 && positives > 0 && secs < 5.0;
    report(
        2,
        pass,
        &format!("{transitions} transitions, {positives} dead ends, {wrong} misclassified, {secs:.2}s"),
    );
    assert!(pass);
}

// ------------------------------------------------------------ criterion 3

fn hash_steps(steps: &[ddr_core::env::StepResult]) -> u64 {
    let mut h = DefaultHasher::new();
    for s in steps {
        s.system_act.hash(&mut h);
        s.user_act.hash(&mut h);
        s.reward.to_bits().hash(&mut h);
        s.outcome.hash(&mut h);
        s.n.hash(&mut h);
    }
    h.finish()
}

#[test]
fn c03_rollback_determinism() {
    let (table, goals) = generate_dataset(&DatasetSpec::default(), 3).unwrap();
    let table = Arc::new(table);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for episode in 0..100u64 {
        let goal = &goals[episode as usize % goals.len()];
        let mut env = DialogueEnv::new(table.clone(), 0.1, 30).unwrap();
        let actions: Vec<usize> = (0..30).map(|_| rng.gen_range(0..env.catalogue().len())).collect();
        env.reset(goal, episode).unwrap();
        let mut straight = Vec::new();
        for &a in &actions {
            if env.is_terminal() {
                break;
            }
            straight.push(env.step(a).unwrap());
        }
        let cut = straight.len() / 2;
        env.reset(goal, episode).unwrap();
        let mut replayed = Vec::new();
        for &a in &actions[..cut] {
            replayed.push(env.step(a).unwrap());
        }
        let snap = env.snapshot();
        for _ in 0..2 {
            if !env.is_terminal() {
                env.step(rng.gen_range(0..env.catalogue().len())).unwrap();
            }
        }
        env.restore(&snap).unwrap();
        for &a in &actions[cut..] {
            if env.is_terminal() {
                break;
            }
            replayed.push(env.step(a).unwrap());
        }
        if hash_steps(&straight) != hash_steps(&replayed) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(3, pass, &format!("100 episodes, {mismatches} trajectory hash mismatches"));
    assert!(pass);
}

// ------------------------------------------------------------ criterion 4

fn loss_at(net: &QNetwork, states: &[&[f64]], actions: &[usize], targets: &[f64]) -> f64 {
    net.loss_and_grads(states, actions, targets).unwrap().0
}

#[test]
fn c04_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut dueling_gap: f64 = 0.0;
    for trial in 0..20 {
        let variant = [DqnVariant::Vanilla, DqnVariant::Double, DqnVariant::Dueling][trial % 3];
        let (input, hidden, output) = (rng.gen_range(2..7), rng.gen_range(2..9), rng.gen_range(2..6));
        let net = QNetwork::new(input, hidden, output, variant, &mut rng);
        let batch = 4;
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let states: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..output)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (_, grads) = net.loss_and_grads(&states, &actions, &targets).unwrap();
        let h = 1e-6;
        for (p, g) in grads.iter().enumerate() {
            for k in 0..g.data.len() {
                let mut plus = net.clone();
                plus.params_mut()[p].data[k] += h;
                let mut minus = net.clone();
                minus.params_mut()[p].data[k] -= h;
                let numeric = (loss_at(&plus, &states, &actions, &targets) - loss_at(&minus, &states, &actions, &targets)) / (2.0 * h);
                let analytic = g.data[k];
                let scale = analytic.abs().max(numeric.abs());
                if scale > 1e-7 {
                    worst = worst.max((analytic - numeric).abs() / scale);
                }
            }
        }
        if variant == DqnVariant::Dueling {
            // A constant added to every advantage leaves Q unchanged.
            let mut shifted = net.clone();
            for b in shifted.params_mut().last_mut().unwrap().data.iter_mut() {
                *b += 3.25;
            }
            for x in &xs {
                let q1 = net.forward(x).unwrap();
                let q2 = shifted.forward(x).unwrap();
                for (a, b) in q1.iter().zip(&q2) {
                    dueling_gap = dueling_gap.max((a - b).abs());
                }
            }
        }
    }
    let pass = worst <= 1e-4 && dueling_gap <= 1e-12;
    report(
        4,
        pass,
        &format!("max relative gradient error {worst:.2e}, dueling shift gap {dueling_gap:.1e}"),
    );
    assert!(pass);
}

// ------------------------------------------------------------ criterion 5

#[test]
fn c05_reward_and_metrics() {
    let success = compute_reward(Outcome::success(), 30);
    let failure = compute_reward(Outcome::failure(OutcomeReason::MaxTurns), 30);
    let ongoing = compute_reward(Outcome::ONGOING, 30);
    let end = |episode, ok: bool, turns, total_reward| LogRecord::EpisodeEnd {
        episode,
        outcome: if ok { Outcome::success() } else { Outcome::failure(OutcomeReason::UserByeUnmet) },
        turns,
        total_reward,
    };
    let filler = LogRecord::Exchange {
        episode: 0,
        turn: 1,
        system_act: DialogueAct::request("genre"),
        user_act: DialogueAct::inform("genre", "x"),
        n: 3,
        reward: -1.0,
        emitted: vec![],
    };
    let logs = vec![filler, end(0, false, 10, -31.0), end(1, true, 20, 29.0), end(2, true, 30, 50.0)];
    let m = metrics_from_logs(&logs).unwrap();
    let pass = success == 60.0
        && failure == -30.0
        && ongoing == -1.0
        && m.success_rate == 2.0 / 3.0
        && m.average_reward == (-31.0 + 29.0 + 50.0) / 3.0
        && m.average_turns == 20.0;
    report(
        5,
        pass,
        &format!(
            "rewards {success}/{failure}/{ongoing}, SR {:.4} AE {:.4} AT {:.1}",
            m.success_rate, m.average_reward, m.average_turns
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------ learning criteria

struct Grid {
    cells: Vec<CellResult>,
}

impl Grid {
    fn runs(&self, agent: RescueMode, variant: DqnVariant, noise: f64) -> Vec<&RunResult> {
        let mut cells: Vec<_> = self
            .cells
            .iter()
            .filter(|c| c.key.agent == agent && c.key.variant == variant && c.key.noise == noise)
            .collect();
        cells.sort_by_key(|c| c.key.seed);
        cells
            .into_iter()
            .map(|c| c.result.as_ref().unwrap_or_else(|e| panic!("{}: {e}", c.key.file_stem())))
            .collect()
    }

    fn metric(&self, agent: RescueMode, variant: DqnVariant, noise: f64, f: impl Fn(&RunResult) -> f64) -> Vec<f64> {
        self.runs(agent, variant, noise).into_iter().map(f).collect()
    }
}

fn dataset() -> &'static (KbTable, Vec<UserGoal>) {
    static DATA: OnceLock<(KbTable, Vec<UserGoal>)> = OnceLock::new();
    DATA.get_or_init(|| generate_dataset(&DatasetSpec::default(), 0).unwrap())
}

fn base_config() -> RunConfig {
    RunConfig {
        epochs: EPOCHS,
        dialogues_per_epoch: DIALOGUES_PER_EPOCH,
        eval_every: 10,
        eval_episodes: EVAL_EPISODES,
        ..RunConfig::default()
    }
}

fn run(variants: Vec<DqnVariant>, noise: f64) -> Grid {
    let (table, goals) = dataset();
    let spec = GridSpec {
        base: base_config(),
        agents: vec![RescueMode::None, RescueMode::Ig, RescueMode::Se],
        variants,
        noises: vec![noise],
        seeds: (0..SEEDS).collect(),
    };
    Grid {
        cells: run_grid(&spec, table, goals, default_workers()),
    }
}

fn vanilla_clean() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| run(vec![DqnVariant::Vanilla], 0.0))
}

fn vanilla_noisy() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| run(vec![DqnVariant::Vanilla], 0.1))
}

fn other_variants() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| run(vec![DqnVariant::Double, DqnVariant::Dueling], 0.0))
}

fn final_sr(r: &RunResult) -> f64 {
    r.final_eval.success_rate
}

fn fmt(xs: &[f64]) -> String {
    let (m, s) = mean_sd(xs);
    format!("{m:.3}±{s:.3}")
}

// ------------------------------------------------------------ criterion 6

#[test]
fn c06_ddr_beats_dqn_without_noise() {
    let g = vanilla_clean();
    let dqn = g.metric(RescueMode::None, DqnVariant::Vanilla, 0.0, final_sr);
    let mut pass = true;
    let mut detail = format!("DQN SR {}", fmt(&dqn));
    for mode in [RescueMode::Ig, RescueMode::Se] {
        let ddr = g.metric(mode, DqnVariant::Vanilla, 0.0, final_sr);
        let t = paired_t_test_greater(&ddr, &dqn).unwrap();
        pass &= t.p_value < 0.05;
        detail += &format!("; {} SR {} (p={:.4})", mode.agent_name(), fmt(&ddr), t.p_value);
    }
    report(6, pass, &detail);
    assert!(pass);
}

// ------------------------------------------------------------ criterion 7

#[test]
fn c07_dead_end_ratio_ordering() {
    let g = vanilla_clean();
    let ratio = |mode| {
        g.metric(mode, DqnVariant::Vanilla, 0.0, |r| r.dead_end.ratio().unwrap_or(f64::NAN))
    };
    let (ig, se, dqn) = (ratio(RescueMode::Ig), ratio(RescueMode::Se), ratio(RescueMode::None));
    let (mi, si) = mean_sd(&ig);
    let (ms, _) = mean_sd(&se);
    let (md, sd) = mean_sd(&dqn);
    let pass = mi < ms && ms < md && mi + si < md - sd;
    report(
        7,
        pass,
        &format!("dead-end ratio IG {} < SE {} < DQN {}", fmt(&ig), fmt(&se), fmt(&dqn)),
    );
    assert!(pass);
}

// ------------------------------------------------------------ criterion 8

#[test]
fn c08_noise_ordering() {
    let g = vanilla_noisy();
    let sr = |mode| mean_sd(&g.metric(mode, DqnVariant::Vanilla, 0.1, final_sr)).0;
    let (ig, se, dqn) = (sr(RescueMode::Ig), sr(RescueMode::Se), sr(RescueMode::None));
    let pass = se >= ig && ig > dqn && se > dqn;
    report(8, pass, &format!("10% slot errors: SE {se:.3} >= IG {ig:.3} > DQN {dqn:.3}"));
    assert!(pass);
}

// ------------------------------------------------------------ criterion 9

#[test]
fn c09_generality_over_variants() {
    let g = other_variants();
    let mut pass = true;
    let mut parts = Vec::new();
    for variant in [DqnVariant::Double, DqnVariant::Dueling] {
        let base = g.metric(RescueMode::None, variant, 0.0, RunResult::success_auc);
        for mode in [RescueMode::Ig, RescueMode::Se] {
            let ddr = g.metric(mode, variant, 0.0, RunResult::success_auc);
            let t = paired_t_test_greater(&ddr, &base).unwrap();
            pass &= t.p_value < 0.05;
            parts.push(format!(
                "{variant:?} {}: AUC {} vs {} (p={:.4})",
                mode.agent_name(),
                fmt(&ddr),
                fmt(&base),
                t.p_value
            ));
        }
    }
    report(9, pass, &parts.join("; "));
    assert!(pass);
}

// ----------------------------------------------------------- criterion 10

fn mean_stable_turn(run: &RunResult) -> f64 {
    let (table, goals) = dataset();
    let net = run.checkpoint.network().unwrap();
    let table = Arc::new(table.clone());
    let turns: Vec<f64> = (0..TRACED_GOALS)
        .map(|goal_id| {
            let trace = n_trace(Actor::Net { net: &net, epsilon: 0.0 }, goal_id, table.clone(), goals, 0, 0.0, 30).unwrap();
            stable_turn(&trace, 30) as f64
        })
        .collect();
    turns.iter().sum::<f64>() / turns.len() as f64
}

#[test]
fn c10_ddr_settles_sooner() {
    let g = vanilla_clean();
    let first = |mode| g.runs(mode, DqnVariant::Vanilla, 0.0)[0];
    let dqn = mean_stable_turn(first(RescueMode::None));
    let ig = mean_stable_turn(first(RescueMode::Ig));
    let se = mean_stable_turn(first(RescueMode::Se));
    let pass = ig < dqn && se < dqn;
    report(
        10,
        pass,
        &format!("mean stable turn over {TRACED_GOALS} goals: IG {ig:.2}, SE {se:.2}, DQN {dqn:.2}"),
    );
    assert!(pass);
}
