//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always shown.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use twinfid::formats::{
    ledger_to_bytes, load_ledger, load_mdp, load_trajectories, save_mdp, save_trajectories, LedgerRow, MetricFile,
};
use twinfid::fsio::{read_json, write_json};
use twinfid_core::bsm::{compute_dt_bsm, reward_gap_bound, scalarize, BsmConfig, ScalarMode};
use twinfid_core::envgen::{build_real_env, generate_candidates, EnvSpec, Recipe};
use twinfid_core::estimation::{sample_sweep, sample_trajectories, Behavior, SweepOptions};
use twinfid_core::harness::{
    cost_report, even_odd_split, fit_bound, real_baseline, run_experiment_with_scores, select, ExperimentConfig,
    ExperimentRun, Strategy,
};
use twinfid_core::mdp::value_iteration;
use twinfid_core::seed::rng_from_seed;
use twinfid_core::stats::{median, sign_test_p_value, spearman};
use twinfid_core::transport::{w1_exact, w1_sinkhorn, TransportProblem, SINKHORN_MAX_ITER};
use twinfid_core::FiniteMdp;

/// Outcome of one criterion: pass flag and a one-line summary.
type Verdict = (bool, String);

fn metric_correctness() -> Verdict {
    let mut diag_max: f64 = 0.0;
    let mut bound_ok = true;
    let mut worst_ratio: f64 = 0.0;
    let mut contraction_ok = true;
    for seed in 0..50 {
        let mut rng = rng_from_seed(seed);
        let ns = rng.random_range(1..=6);
        let na = rng.random_range(1..=3);
        let m = common::random_mdp(&mut rng, ns, na, 0.9);
        let other = common::random_mdp(&mut rng, ns, na, 0.9);
        let d = compute_dt_bsm(&m, &m, &BsmConfig::default()).unwrap();
        diag_max = (0..ns).map(|s| d.get(s, s)).fold(diag_max, f64::max);
        let cross = compute_dt_bsm(&m, &other, &BsmConfig::default()).unwrap();
        bound_ok &= cross.max_entry() <= reward_gap_bound(&m, &other) / (1.0 - 0.9) + 1e-12;
        // Each residual is a difference of entries carrying ~1 ulp of error,
        // so the step check allows an absolute roundoff term on top of gamma.
        let roundoff = 16.0 * f64::EPSILON * cross.max_entry();
        for w in cross.residuals.windows(2) {
            worst_ratio = worst_ratio.max(w[1] / w[0]);
            contraction_ok &= w[1] <= (0.9 + 1e-10) * w[0] + roundoff;
        }
    }
    let real = FiniteMdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
    let dt = FiniteMdp::new(1, 1, vec![1.0], vec![0.5], 0.9).unwrap();
    let closed = compute_dt_bsm(&real, &dt, &BsmConfig { tol: 1e-7, ..BsmConfig::default() }).unwrap();
    let closed_err = (closed.get(0, 0) - 5.0).abs();
    let pass = diag_max <= 1e-6 && closed_err <= 1e-6 && bound_ok && contraction_ok;
    (pass, format!("diag_max={diag_max:.2e} closed_form_err={closed_err:.2e} bound_ok={bound_ok} contraction_ok={contraction_ok} raw_max_ratio={worst_ratio:.12}"))
}

fn transport_oracle() -> Verdict {
    let perms = common::permutations(6);
    let mut exact_err: f64 = 0.0;
    let mut sink_err: f64 = 0.0;
    for seed in 0..1000 {
        let mut rng = rng_from_seed(10_000 + seed);
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=4);
        let cost: Vec<f64> = (0..m * n).map(|_| rng.random::<f64>()).collect();
        let pr = TransportProblem::new(common::random_sixths(&mut rng, m), common::random_sixths(&mut rng, n), cost)
            .unwrap();
        let brute = common::brute_w1(&pr.source, &pr.target, &pr.cost, &perms);
        let exact = w1_exact(&pr).unwrap().value;
        exact_err = exact_err.max((exact - brute).abs());
        let eps = (1e-3 * pr.max_cost()).max(1e-12);
        let approx = w1_sinkhorn(&pr, eps, SINKHORN_MAX_ITER).unwrap().value;
        sink_err = sink_err.max((approx - exact).abs());
    }
    let hand = TransportProblem::from_rows(vec![0.5, 0.5], vec![1.0, 0.0], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let hand_value = w1_exact(&hand).unwrap().value;
    let pass = exact_err <= 1e-8 && hand_value == 0.5 && sink_err <= 1e-2;
    (pass, format!("max|exact-brute|={exact_err:.2e} hand={hand_value} max|sinkhorn-exact|={sink_err:.2e}"))
}

fn planner_oracle() -> Verdict {
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = rng_from_seed(20_000 + seed);
        let ns = rng.random_range(1..=4);
        let na = rng.random_range(1..=3);
        let mdp = common::random_mdp(&mut rng, ns, na, 0.9);
        let best = common::all_deterministic_policies(&mdp)
            .iter()
            .map(|p| common::exact_policy_values(&mdp, p))
            .fold(vec![f64::NEG_INFINITY; ns], |acc, v| acc.iter().zip(&v).map(|(a, b)| a.max(*b)).collect());
        let planned = value_iteration(&mdp, 1e-10, 100_000).unwrap();
        let achieved = common::exact_policy_values(&mdp, &planned.policy);
        let gap = achieved.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(gap);
        if gap > 1e-8 {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("100 MDPs, policy mismatches={mismatches}, max value gap={worst:.2e}"))
}

/// Exact-trainer runs on the default environment for one pool seed. Metrics
/// of seed-independent recipes are reused across seeds after checking that
/// the candidate MDP is identical.
fn fig5a_runs(
    real: &FiniteMdp,
    spec: &EnvSpec,
    seed: u64,
    cache: &mut HashMap<String, (FiniteMdp, f64)>,
) -> Vec<ExperimentRun> {
    let pool = generate_candidates(real, spec, 120, seed).unwrap();
    let scores: Vec<f64> = pool
        .iter()
        .map(|c| {
            let reusable = matches!(c.recipe, Recipe::Smoothing { .. } | Recipe::Granularity { .. });
            let key = format!("{}:{}", c.recipe.family(), c.recipe.params());
            if reusable {
                if let Some((mdp, score)) = cache.get(&key) {
                    assert_eq!(mdp, &c.mdp, "seed-independent recipe changed with the seed");
                    return *score;
                }
            }
            let m = compute_dt_bsm(real, &c.mdp, &BsmConfig::default()).unwrap();
            assert!(m.converged);
            let score = scalarize(&m, ScalarMode::WorstCase, None).unwrap().scalar_max;
            if reusable {
                cache.insert(key, (c.mdp.clone(), score));
            }
            score
        })
        .collect();
    run_experiment_with_scores(real, &pool, &scores, &ExperimentConfig::default()).unwrap()
}

/// Runs in the worst deployment quartile: fewer than n/4 runs are strictly
/// worse, and the gap is above planning noise.
fn worst_quartile(runs: &[ExperimentRun], noise: f64) -> Vec<usize> {
    let n = runs.len();
    (0..n)
        .filter(|&i| {
            let d = runs[i].deploy_suboptimality;
            d > noise && runs.iter().filter(|r| r.deploy_suboptimality > d).count() < n / 4
        })
        .collect()
}

fn fig5a() -> Verdict {
    let spec = EnvSpec::default();
    let real = build_real_env(&spec).unwrap();
    assert_eq!((real.n_states(), real.n_actions()), (27, 10));
    let noise = 2.0 * twinfid_core::PLANNING_TOL / (1.0 - real.gamma());
    let mut cache = HashMap::new();
    let mut rhos = Vec::new();
    let mut decile_ok = 0;
    for seed in 1..=5 {
        let runs = fig5a_runs(&real, &spec, seed, &mut cache);
        let b: Vec<f64> = runs.iter().map(|r| r.bsm_scalar).collect();
        let d: Vec<f64> = runs.iter().map(|r| r.deploy_suboptimality).collect();
        rhos.push(spearman(&b, &d));
        let decile = select(&runs, Strategy::Evaluation, 0.1).unwrap();
        let worst = worst_quartile(&runs, noise);
        if decile.iter().all(|i| !worst.contains(i)) {
            decile_ok += 1;
        }
    }
    let strong = rhos.iter().filter(|&&r| r >= 0.5).count();
    let rho_text: Vec<String> = rhos.iter().map(|r| format!("{r:.3}")).collect();
    (
        strong >= 4 && decile_ok >= 4,
        format!("spearman=[{}] (>=0.5 in {strong}/5), lowest decile clear of worst quartile in {decile_ok}/5", rho_text.join(", ")),
    )
}

fn twinfid_bin(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_twinfid")).current_dir(dir).args(args).output().expect("binary runs")
}

/// Two CLI runs of the default experiment with seed 42.
struct SharedExperiment {
    dir: tempfile::TempDir,
    elapsed: Duration,
}

impl SharedExperiment {
    fn run() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        for out in ["run1", "run2"] {
            let o = twinfid_bin(dir.path(), &["experiment", "--seed", "42", "--out", out]);
            assert!(o.status.success(), "experiment failed: {}", String::from_utf8_lossy(&o.stderr));
        }
        SharedExperiment { dir, elapsed: start.elapsed() }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.path().join("run1").join(file)
    }

    fn runs(&self, file: &str) -> Vec<ExperimentRun> {
        load_ledger(&self.path(file)).unwrap().iter().map(LedgerRow::to_run).collect()
    }
}

fn fig5b(shared: &SharedExperiment) -> Verdict {
    let runs = shared.runs("ledger.csv");
    let real = build_real_env(&EnvSpec::default()).unwrap();
    let v_star = real_baseline(&real, None, twinfid_core::PLANNING_TOL).unwrap().value_rho;
    let all: Vec<usize> = (0..runs.len()).collect();
    let full = cost_report(&runs, &all, v_star).unwrap();
    let eval_subset = select(&runs, Strategy::Evaluation, 0.05).unwrap();
    let eval = cost_report(&runs, &eval_subset, v_star).unwrap();
    let random_costs: Vec<f64> = (0..100)
        .map(|k| cost_report(&runs, &select(&runs, Strategy::Random(k), 0.05).unwrap(), v_star).unwrap().testing_cost)
        .collect();
    let random_median = median(&random_costs);
    let value_gap = (full.best_deploy_value - eval.best_deploy_value) / full.best_deploy_value.abs();
    let pass = runs.len() == 120
        && eval_subset.len() == 6
        && value_gap <= 0.02
        && eval.training_cost_reduction == 0.95
        && eval.testing_cost_reduction >= 0.90
        && random_median > eval.testing_cost;
    (
        pass,
        format!(
            "selected {}/{}; best value {:.6} vs brute force {:.6} (gap {:.2}%); training reduction {}; testing reduction {:.4}; random median testing cost {:.4} vs evaluation {:.4}",
            eval_subset.len(),
            runs.len(),
            eval.best_deploy_value,
            full.best_deploy_value,
            100.0 * value_gap,
            eval.training_cost_reduction,
            eval.testing_cost_reduction,
            random_median,
            eval.testing_cost
        ),
    )
}

fn bound_certification(shared: &SharedExperiment) -> Verdict {
    let mut runs = shared.runs("ledger.csv");
    let q_runs = shared.runs("ledger_q_learning.csv");
    let nonzero = q_runs.iter().filter(|r| r.train_suboptimality > 1e-6).count();
    runs.extend(q_runs);
    let (fit, holdout) = even_odd_split(runs.len());
    let b = fit_bound(&runs, &fit, &holdout).unwrap();
    let stored: serde_json::Value = read_json(&shared.path("bound.json")).unwrap();
    let consistent = stored["alpha"].as_f64() == Some(b.alpha) && stored["beta"].as_f64() == Some(b.beta);
    let pass = nonzero >= 20
        && b.alpha.is_finite()
        && b.beta.is_finite()
        && b.alpha >= 0.0
        && b.beta >= 0.0
        && b.fit_violations == 0
        && b.holdout_violation_rate <= 0.10
        && consistent;
    (
        pass,
        format!(
            "alpha={:.4} beta={:.4} fit_violations={} holdout_violation_rate={:.3} nonzero_train_subopt={nonzero} matches_bound_file={consistent}",
            b.alpha, b.beta, b.fit_violations, b.holdout_violation_rate
        ),
    )
}

fn sample_complexity() -> Verdict {
    let real = build_real_env(&EnvSpec::default()).unwrap();
    let seeds: Vec<u64> = (1..=20).collect();
    let points = sample_sweep(&real, &real, &[100, 100_000], &seeds, &SweepOptions::default()).unwrap();
    let (small, large) = (&points[0], &points[1]);
    let improved = small.values.iter().zip(&large.values).filter(|(a, b)| b < a).count();
    let p = sign_test_p_value(improved, seeds.len());
    (
        large.median < small.median && p <= 0.05,
        format!(
            "median at 1e2={:.4}, at 1e5={:.4}; improved in {improved}/20 seeds, sign test p={p:.2e}",
            small.median, large.median
        ),
    )
}

fn reproducibility(shared: &SharedExperiment) -> Verdict {
    let files = ["ledger.csv", "ledger_q_learning.csv", "costs.json", "bound.json", "scatter.csv", "prefilter_bars.csv"];
    let identical = files.iter().all(|f| {
        std::fs::read(shared.dir.path().join("run1").join(f)).unwrap()
            == std::fs::read(shared.dir.path().join("run2").join(f)).unwrap()
    });
    let ledger_bytes = std::fs::read(shared.path("ledger.csv")).unwrap();
    let ledger_exact = ledger_to_bytes(&load_ledger(&shared.path("ledger.csv")).unwrap()) == ledger_bytes;

    let tmp = tempfile::tempdir().unwrap();
    let spec = EnvSpec::default();
    let real = build_real_env(&spec).unwrap();
    let cand = generate_candidates(&real, &spec, 12, 42).unwrap();
    let mut mdp_exact = true;
    for m in std::iter::once(&real).chain(cand.iter().map(|c| &c.mdp)) {
        let p = tmp.path().join("m.json");
        save_mdp(&p, m).unwrap();
        mdp_exact &= &load_mdp(&p).unwrap() == m;
    }
    let metric = compute_dt_bsm(&real, &cand[5].mdp, &BsmConfig::default()).unwrap();
    let p = tmp.path().join("metric.json");
    write_json(&p, &MetricFile::from_metric(&metric, None).unwrap()).unwrap();
    let metric_exact = read_json::<MetricFile>(&p).unwrap().to_metric().unwrap() == metric;
    let batch = sample_trajectories(&real, &Behavior::UniformRandom, 1000, 10, 42).unwrap();
    let p = tmp.path().join("t.jsonl");
    save_trajectories(&p, &batch).unwrap();
    let traj_exact = load_trajectories(&p).unwrap() == batch;
    (
        identical && ledger_exact && mdp_exact && metric_exact && traj_exact,
        format!(
            "experiment --seed 42 twice identical={identical}; round trips: ledger={ledger_exact} mdp={mdp_exact} metric={metric_exact} trajectories={traj_exact}"
        ),
    )
}

fn check(id: u32, name: &str, budget: Option<Duration>, extra: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed() + extra;
    let (pass, detail) = match result {
        Ok((pass, detail)) => (pass, detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let ok = pass && in_time;
    let budget_text = budget.map_or(String::new(), |b| format!(" budget {}s", b.as_secs()));
    println!(
        "[{}] {id}. {name}: {detail} ({:.1}s{budget_text})",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() -> ExitCode {
    // Under `cargo test` an argument filter may be passed; this target
    // always runs every criterion.
    println!("acceptance criteria");
    let mut all = true;
    let secs = Duration::from_secs;
    all &= check(1, "metric correctness", Some(secs(5)), Duration::ZERO, metric_correctness);
    all &= check(2, "transport oracle", Some(secs(30)), Duration::ZERO, transport_oracle);
    all &= check(3, "planner oracle", Some(secs(60)), Duration::ZERO, planner_oracle);
    all &= check(4, "mismatch vs deployment (pool 120, seeds 1-5)", Some(secs(600)), Duration::ZERO, fig5a);
    let shared = SharedExperiment::run();
    // The shared experiment (two CLI runs) is charged to the first consumer.
    all &= check(5, "pre-filtering at 5%", Some(secs(600)), shared.elapsed / 2, || fig5b(&shared));
    all &= check(6, "bound certification", Some(secs(120)), Duration::ZERO, || bound_certification(&shared));
    all &= check(7, "sample-complexity sweep", Some(secs(300)), Duration::ZERO, sample_complexity);
    all &= check(8, "reproducibility", None, shared.elapsed, || reproducibility(&shared));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
