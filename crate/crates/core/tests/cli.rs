mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;
use simprune::bench::{read_csv, SweepRecord, TimingRecord};
use simprune::cli::{read_selection, OutcomeRecord, PLAN_FILE, SELECTION_FILE, SWEEP_FILE, TIMING_FILE};
use simprune::prune_plan::read_plan;
use simprune::tensor_io::{read_weights, write_weights, WeightMap};

fn simprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simprune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = simprune(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn keep_sets(outcomes: &[OutcomeRecord]) -> Vec<Vec<usize>> {
    outcomes.iter().map(OutcomeRecord::keep_set).collect()
}

/// Weight file holding only the named layer of the network fixture.
fn single_layer(dir: &Path, name: &str) -> std::path::PathBuf {
    let all = read_weights(fixture("dcase_like.nwtf")).unwrap();
    let mut one = WeightMap::new();
    one.insert(name.to_string(), all[name].clone());
    let path = dir.join(format!("{name}.nwtf"));
    write_weights(&one, &path).unwrap();
    path
}

#[test]
fn prune_auto_records_per_layer_mk_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let m = fixture("dcase_like.json");
    ok(&[
        "prune", "--weights", s(&w), "--manifest", s(&m), "--method", "similarity-nystrom",
        "--auto", "--delta-threshold", "1.0", "--out", s(dir.path()),
    ]);
    let outcomes = read_selection(dir.path().join(SELECTION_FILE)).unwrap();
    assert_eq!(outcomes.len(), 3);
    for o in &outcomes {
        assert_eq!(o.method, "similarity-nystrom");
        assert_eq!(o.mk_source.as_deref(), Some("auto"));
        assert!(o.m.is_some() && o.k.is_some());
        assert!(o.delta.unwrap() < 1.0);
        assert_eq!(o.index_base, 1);
        assert!(o.important.iter().all(|&i| i >= 1));
    }
    let plan = read_plan(dir.path().join(PLAN_FILE)).unwrap();
    assert!(plan.totals.macs_after < plan.totals.macs_before);
    assert!(plan.totals.macs_complete);
}

#[test]
fn exact_and_near_exact_auto_agree() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["prune", "--weights", s(&w), "--method", "similarity-exact", "--out", s(&a)]);
    ok(&[
        "prune", "--weights", s(&w), "--auto", "--delta-threshold", "1e-6", "--out", s(&b),
    ]);
    let exact = read_selection(a.join(SELECTION_FILE)).unwrap();
    let approx = read_selection(b.join(SELECTION_FILE)).unwrap();
    assert!(approx.iter().all(|o| o.delta.unwrap() < 1e-6));
    assert_eq!(keep_sets(&exact), keep_sets(&approx));
    assert!(exact.iter().all(|o| o.m.is_none() && o.delta.is_none()));
}

#[test]
fn l1_keep_counts_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    ok(&[
        "prune", "--weights", s(&w), "--method", "l1", "--keep-counts", "8,8,16", "--out",
        s(dir.path()),
    ]);
    let outcomes = read_selection(dir.path().join(SELECTION_FILE)).unwrap();
    let sizes: Vec<usize> = outcomes.iter().map(|o| o.important.len()).collect();
    assert_eq!(sizes, [8, 8, 16]);
    assert!(outcomes.iter().all(|o| o.pairs.is_empty()));
}

#[test]
fn gm_defaults_to_exact_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["prune", "--weights", s(&w), "--method", "similarity-exact", "--out", s(&a)]);
    ok(&["prune", "--weights", s(&w), "--method", "gm", "--gm-surrogate", "--out", s(&b)]);
    let exact = read_selection(a.join(SELECTION_FILE)).unwrap();
    let gm = read_selection(b.join(SELECTION_FILE)).unwrap();
    for (e, g) in exact.iter().zip(&gm) {
        assert_eq!(e.important.len(), g.important.len());
        assert_eq!(g.method, "gm");
    }
}

#[test]
fn sweep_modes_have_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let c1 = single_layer(dir.path(), "C1");
    ok(&["sweep", "--weights", s(&c1), "--out", s(dir.path())]);
    let rows: Vec<SweepRecord> = read_csv(dir.path().join(SWEEP_FILE)).unwrap();
    assert_eq!(rows.iter().map(|r| r.m).collect::<Vec<_>>(), (1..=16).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r.k == r.m));

    ok(&["sweep", "--weights", s(&c1), "--m", "12", "--out", s(dir.path())]);
    let rows: Vec<SweepRecord> = read_csv(dir.path().join(SWEEP_FILE)).unwrap();
    assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), (1..=12).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r.m == 12));
}

#[test]
fn sweep_auto_search_within_reference_points() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let stdout = ok(&["sweep", "--weights", s(&w), "--out", s(dir.path())]);
    let bounds = [("C1", 12, 9), ("C2", 6, 6), ("C3", 21, 13)];
    for (layer, m_max, k_max) in bounds {
        let line = stdout
            .lines()
            .find(|l| l.starts_with(&format!("{layer}:")))
            .unwrap_or_else(|| panic!("no summary for {layer}: {stdout}"));
        let field = |key: &str| -> usize {
            line.split_whitespace()
                .find_map(|t| t.strip_prefix(key))
                .unwrap()
                .parse()
                .unwrap()
        };
        assert!(field("m=") <= m_max && field("k=") <= k_max, "{line}");
    }
}

#[test]
fn bench_single_repetition_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let c2 = single_layer(dir.path(), "C2");
    let stdout = ok(&[
        "bench", "--weights", s(&c2), "--m", "6", "--k", "6", "--reps", "1", "--out",
        s(dir.path()),
    ]);
    assert!(stdout.contains("speedup"));
    let rows: Vec<TimingRecord> = read_csv(dir.path().join(TIMING_FILE)).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].method, "exact");
    assert_eq!((rows[1].m, rows[1].k), (Some(6), Some(6)));
    assert!(rows.iter().all(|r| r.repetitions == 1 && r.mean_s > 0.0));
}

#[test]
fn plan_from_previous_selection() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let m = fixture("dcase_like.json");
    let a = dir.path().join("a");
    ok(&["prune", "--weights", s(&w), "--manifest", s(&m), "--method", "similarity-exact", "--out", s(&a)]);
    let sel = a.join(SELECTION_FILE);
    let b = dir.path().join("b");
    ok(&["plan", "--weights", s(&w), "--manifest", s(&m), "--selection", s(&sel), "--out", s(&b)]);
    assert_eq!(
        std::fs::read(a.join(PLAN_FILE)).unwrap(),
        std::fs::read(b.join(PLAN_FILE)).unwrap()
    );
}

#[test]
fn missing_weights_exit_2_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.nwtf");
    let out = simprune(&["bench", "--weights", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn usage_errors_exit_2() {
    let w = fixture("dcase_like.nwtf");
    for args in [
        vec!["prune"],
        vec!["frobnicate"],
        vec!["prune", "--weights", s(&w), "--method", "random"],
        vec!["prune", "--weights", s(&w), "--m", "1,2"],
        vec!["prune", "--weights", s(&w), "--delta-threshold", "-1"],
        vec!["plan", "--weights", s(&w)],
    ] {
        let out = simprune(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn layer_errors_are_scoped() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let out = simprune(&["prune", "--weights", s(&w), "--m", "9,6,40", "--k", "9,6,13", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C3"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let w = fixture("dcase_like.nwtf");
    let m = fixture("dcase_like.json");
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        ok(&[
            "prune", "--weights", s(&w), "--manifest", s(&m), "--auto", "--random-columns",
            "--seed", "11", "--out", s(&out),
        ]);
        ok(&["sweep", "--weights", s(&w), "--out", s(&out)]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in [SELECTION_FILE, PLAN_FILE, SWEEP_FILE] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}
