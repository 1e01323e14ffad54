use proptest::prelude::*;
use tempfile::tempdir;
use twinfid::formats::{
    load_ledger, load_mdp, load_trajectories, save_ledger, save_mdp, save_trajectories, LedgerRow, MetricFile,
};
use twinfid::fsio::{read_json, write_json};
use twinfid_core::bsm::{compute_dt_bsm, BsmConfig};
use twinfid_core::estimation::{sample_trajectories, Behavior, TrajectoryBatch, TransitionSample};
use twinfid_core::{FiniteMdp, Policy};

fn any_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.1 + 0.2),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
        Just(-0.0),
    ]
}

fn mdp() -> impl Strategy<Value = FiniteMdp> {
    (1usize..5, 1usize..4).prop_flat_map(|(ns, na)| {
        (
            prop::collection::vec(prop::collection::vec(1e-6f64..1.0, ns), ns * na),
            prop::collection::vec(0.0f64..=1.0, ns * na),
            0.01f64..0.99,
        )
            .prop_map(move |(rows, r, gamma)| {
                let p = rows
                    .into_iter()
                    .flat_map(|row| {
                        let t: f64 = row.iter().sum();
                        row.into_iter().map(move |x| x / t)
                    })
                    .collect();
                FiniteMdp::new_unchecked(ns, na, p, r, gamma)
            })
            .prop_filter("valid", |m| m.validate().is_empty())
    })
}

fn ledger_row() -> impl Strategy<Value = LedgerRow> {
    (any::<usize>(), "[a-z_]{1,12}", "[a-z=;.0-9,/]{0,24}", any_float(), any_float(), any_float(), any_float(), any_float())
        .prop_map(|(id, family, params, b, ts, ds, dv, tv)| LedgerRow {
            candidate_id: id,
            family,
            params,
            bsm_scalar: b,
            train_subopt: ts,
            deploy_subopt: ds,
            deploy_value: dv,
            selected_by: "evaluation;random".into(),
            train_value: tv,
            training_effort: id % 1000,
            trainer: "exact".into(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mdp_files_are_exact(m in mdp()) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_mdp(&path, &m).unwrap();
        prop_assert_eq!(load_mdp(&path).unwrap(), m);
    }

    #[test]
    fn ledger_files_are_exact(rows in prop::collection::vec(ledger_row(), 0..20)) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        save_ledger(&path, &rows).unwrap();
        let back = load_ledger(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.bsm_scalar.to_bits(), b.bsm_scalar.to_bits());
            prop_assert_eq!(a.deploy_value.to_bits(), b.deploy_value.to_bits());
            prop_assert_eq!(a.train_value.to_bits(), b.train_value.to_bits());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn trajectory_files_are_exact(seed in any::<u64>(), rewards in prop::collection::vec(any_float(), 1..30)) {
        let samples = rewards
            .iter()
            .enumerate()
            .map(|(t, &r)| TransitionSample { t, s: t % 3, a: t % 2, r, sn: (t + 1) % 3, episode: t / 5 })
            .collect();
        let batch = TrajectoryBatch { samples, seed, behavior: "uniform-random".into() };
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        save_trajectories(&path, &batch).unwrap();
        let back = load_trajectories(&path).unwrap();
        for (a, b) in back.samples.iter().zip(&batch.samples) {
            prop_assert_eq!(a.r.to_bits(), b.r.to_bits());
        }
        prop_assert_eq!(back, batch);
    }
}

#[test]
fn metric_files_are_exact() {
    let real = FiniteMdp::new(2, 1, vec![0.3, 0.7, 0.6, 0.4], vec![0.1, 0.9], 0.9).unwrap();
    let dt = FiniteMdp::new(2, 1, vec![0.5, 0.5, 1.0, 0.0], vec![0.2, 0.7], 0.9).unwrap();
    let metric = compute_dt_bsm(&real, &dt, &BsmConfig::default()).unwrap();
    let file = MetricFile::from_metric(&metric, None).unwrap();
    let dir = tempdir().unwrap();
    let path = dir.path().join("metric.json");
    write_json(&path, &file).unwrap();
    let back: MetricFile = read_json(&path).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.to_metric().unwrap(), metric);
}

#[test]
fn policy_and_sampled_trajectories_round_trip() {
    let env = FiniteMdp::new(2, 2, vec![0.5, 0.5, 0.0, 1.0, 1.0, 0.0, 0.3, 0.7], vec![0.1, 0.9, 0.5, 0.3], 0.9).unwrap();
    let dir = tempdir().unwrap();
    for policy in [Policy::Deterministic(vec![1, 0]), Policy::Stochastic(vec![vec![0.25, 0.75], vec![1.0, 0.0]])] {
        let path = dir.path().join("p.json");
        write_json(&path, &policy).unwrap();
        assert_eq!(read_json::<Policy>(&path).unwrap(), policy);
    }
    let batch = sample_trajectories(&env, &Behavior::UniformRandom, 200, 10, u64::MAX).unwrap();
    let path = dir.path().join("t.jsonl");
    save_trajectories(&path, &batch).unwrap();
    assert_eq!(load_trajectories(&path).unwrap(), batch);
}

#[test]
fn malformed_mdp_is_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"version":1,"n_states":1,"n_actions":1,"gamma":0.9,"rewards":[[2.0]],"transitions":[[[1.0]]]}"#,
    )
    .unwrap();
    let err = load_mdp(&path).unwrap_err();
    assert_eq!(err.kind(), "invalid_mdp");
    assert!(err.to_string().contains("out of [0,1]"), "{err}");
}
