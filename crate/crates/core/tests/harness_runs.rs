use anderson_core::harness::{
    evaluate, load_config, read_records, run_experiment, ExperimentConfig, FaultHook, RunManifest, RunOptions,
    RunStatus,
};
use anderson_core::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

const MINIMAL: &str = r#"
[model]
d = 1
L = [10, 20, 40, 80]
ell = 3
scheme = "rank_one"
K = 4.0

[statistic]
kind = "wegner"
E = 0.0
I = [-1.0, 1.0]

[run]
n_realizations = 300
seed = 1
batch_size = 64
"#;

fn config(text: &str, out: Option<&Path>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.run.out = out.map(Path::to_path_buf);
    cfg
}

fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> RunManifest {
    run_experiment(cfg, opts).unwrap()
}

fn records_bytes(dir: &Path) -> Vec<u8> {
    fs::read(dir.join("records.ndjson")).unwrap()
}

fn violations_of(text: &str) -> Vec<String> {
    ExperimentConfig::from_toml(text).unwrap().violations()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn minimal_file_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load_config(&write_config(tmp.path(), MINIMAL)).unwrap();
    assert_eq!(cfg.model.L, vec![10, 20, 40, 80]);
    assert_eq!(cfg.run.workers, 1);
    assert_eq!(cfg.model.alpha, 0.5);
}

#[test]
fn missing_file_names_its_path() {
    let err = load_config(Path::new("/nonexistent/missing.toml")).unwrap_err();
    assert!(err.is_validation());
    let msg = err.to_string();
    assert!(msg.contains("/nonexistent/missing.toml") && msg.contains("not found"), "{msg}");
}

#[test]
fn parse_errors_carry_context() {
    let tmp = tempfile::tempdir().unwrap();
    let err = load_config(&write_config(tmp.path(), "[model\nd = 1")).unwrap_err();
    assert!(matches!(err, Error::ConfigFile { .. }));
    assert!(err.to_string().contains("experiment.toml"));

    let err = load_config(&write_config(tmp.path(), &MINIMAL.replace("K = 4.0", "K = 4.0\ncolour = 1"))).unwrap_err();
    assert!(err.to_string().contains("colour"), "{err}");
}

#[test]
fn polymer_block_must_divide_box() {
    let text = r#"
[model]
d = 1
L = [20]
scheme = "polymer"
block = 3
K = 4.0

[statistic]
kind = "counts"
E = 0.0
I = [-1.0, 1.0]

[run]
n_realizations = 10
seed = 0
"#;
    let v = violations_of(text);
    assert!(v.iter().any(|m| m.contains("block must divide box side") && m.contains("41")), "{v:?}");
}

#[test]
fn close_energies_and_other_problems_reported_together() {
    let text = r#"
[model]
d = 1
L = [0, 16]
ell = 200
scheme = "rank_one"
K = -1.0

[statistic]
kind = "decorrelate"
E = 0.0
E_prime = 1.0
I = [-1.0, 1.0]
J = [1.0, -1.0]

[run]
n_realizations = 0
seed = 0
cap = 100
"#;
    let v = violations_of(text);
    let want = ["|E - E'|", "model.K", "model.L entries", "n_realizations", "exceeds the cap", "statistic.J"];
    for w in want {
        assert!(v.iter().any(|m| m.contains(w)), "missing {w:?} in {v:?}");
    }
    let allowed = violations_of(&text.replace("E_prime = 1.0", "E_prime = 1.0\nallow_close_energies = true"));
    assert!(!allowed.iter().any(|m| m.contains("|E - E'|")));
}

#[test]
fn alpha_outside_unit_interval_is_rejected() {
    let text = MINIMAL.replace("ell = 3\n", "alpha = 1.5\n");
    let v = violations_of(&text);
    assert!(v.iter().any(|m| m.contains("model.alpha")), "{v:?}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&config(MINIMAL, Some(a.path())), &RunOptions::default());
    let mut wide = config(MINIMAL, Some(b.path()));
    wide.run.workers = 3;
    run(&wide, &RunOptions::default());
    assert_eq!(records_bytes(a.path()), records_bytes(b.path()));

    // a second run over a finished directory starts over and writes the same bytes
    run(&config(MINIMAL, Some(a.path())), &RunOptions::default());
    assert_eq!(records_bytes(a.path()), records_bytes(b.path()));
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let clean = tempfile::tempdir().unwrap();
    let cut = tempfile::tempdir().unwrap();
    run(&config(MINIMAL, Some(clean.path())), &RunOptions::default());

    let cfg = config(MINIMAL, Some(cut.path()));
    // 4 levels × 5 batches; stop halfway
    let m = run(&cfg, &RunOptions { stop_after_batches: Some(10), fault: None });
    assert_eq!(m.status, RunStatus::Interrupted);
    assert_eq!(m.levels.iter().map(|l| l.batches_done).sum::<u64>(), 10);
    let m = run(&cfg, &RunOptions::default());
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(records_bytes(clean.path()), records_bytes(cut.path()));
}

#[test]
fn manifest_matches_records_and_tables_exist() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run(&config(MINIMAL, Some(tmp.path())), &RunOptions::default());
    assert_eq!(m.status, RunStatus::Complete);
    let on_disk: RunManifest = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    let records = read_records(&tmp.path().join("records.ndjson")).unwrap();
    assert_eq!(records.len() as u64, m.records);
    assert_eq!(records_bytes(tmp.path()).len() as u64, m.records_bytes);
    for scale in [10, 20, 40, 80] {
        let table = fs::read_to_string(tmp.path().join("tables").join(format!("wegner_{scale}.csv"))).unwrap();
        assert!(table.starts_with("name,k,value,ci,n\n"));
    }
    assert!(m.levels.iter().all(|l| l.complete && l.realizations_done == 300));
    // four scales give a power-law fit
    let fit = records.iter().find(|r| r.name == "wegner_exponent").expect("exponent record");
    assert!(fit.value < 0.0 && fit.ci > 0.0);
}

#[test]
fn in_memory_evaluation_matches_run_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(MINIMAL, Some(tmp.path()));
    run(&cfg, &RunOptions::default());
    let from_disk = read_records(&tmp.path().join("records.ndjson")).unwrap();
    let in_memory = evaluate(&cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&from_disk).unwrap(),
        serde_json::to_string(&in_memory).unwrap()
    );
}

#[test]
fn single_fault_is_retried() {
    let clean = tempfile::tempdir().unwrap();
    let faulty = tempfile::tempdir().unwrap();
    run(&config(MINIMAL, Some(clean.path())), &RunOptions::default());
    let calls = Arc::new(AtomicU32::new(0));
    let seen = calls.clone();
    let fault: FaultHook = Arc::new(move |scale, batch, attempt| {
        let hit = scale == 20 && batch == 2 && attempt == 0;
        if hit {
            seen.fetch_add(1, Ordering::SeqCst);
        }
        hit
    });
    let m = run(&config(MINIMAL, Some(faulty.path())), &RunOptions { stop_after_batches: None, fault: Some(fault) });
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(records_bytes(clean.path()), records_bytes(faulty.path()));
}

#[test]
fn repeated_fault_aborts_and_resume_recovers() {
    let clean = tempfile::tempdir().unwrap();
    let faulty = tempfile::tempdir().unwrap();
    run(&config(MINIMAL, Some(clean.path())), &RunOptions::default());
    let cfg = config(MINIMAL, Some(faulty.path()));
    let fault: FaultHook = Arc::new(|scale, batch, _| scale == 40 && batch == 3);
    let err = run_experiment(&cfg, &RunOptions { stop_after_batches: None, fault: Some(fault) }).unwrap_err();
    assert!(matches!(err, Error::RunAborted(_)), "{err}");
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(faulty.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.status, RunStatus::Incomplete);
    assert!(m.error.is_some());
    assert!(m.levels[..2].iter().all(|l| l.complete));

    let m = run(&cfg, &RunOptions::default());
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(records_bytes(clean.path()), records_bytes(faulty.path()));
}

#[test]
fn foreign_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(MINIMAL, Some(tmp.path()));
    run(&cfg, &RunOptions { stop_after_batches: Some(2), fault: None });
    let other = config(&MINIMAL.replace("seed = 1", "seed = 2"), Some(tmp.path()));
    let err = run_experiment(&other, &RunOptions::default()).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("different configuration"), "{err}");
}

#[test]
fn run_without_output_directory_is_refused() {
    let err = run_experiment(&config(MINIMAL, None), &RunOptions::default()).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn every_statistic_runs_end_to_end() {
    let cases = [
        ("minami", "E = 0.0\nI = [-4.0, 4.0]"),
        ("decorrelate", "E = -3.0\nE_prime = 3.0\nI = [-2.0, 2.0]\nJ = [-2.0, 2.0]"),
        ("independence", "E = -3.0\nE_prime = 3.0\nI = [-2.0, 2.0]\nJ = [-2.0, 2.0]"),
        ("counts", "E = 0.0\nI = [-2.0, 2.0]"),
        ("multiplicity", "window = [-1.0, 1.0]"),
    ];
    for (kind, body) in cases {
        let text = format!(
            "[model]\nd = 1\nL = [8, 16]\nscheme = \"polymer\"\nblock = 2\nK = 4.0\n\n[statistic]\nkind = \"{kind}\"\n{body}\n\n[run]\nn_realizations = 40\nseed = 3\n"
        );
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(&text, Some(tmp.path()));
        assert!(cfg.violations().is_empty(), "{kind}: {:?}", cfg.violations());
        let m = run(&cfg, &RunOptions::default());
        assert_eq!(m.status, RunStatus::Complete, "{kind}");
        assert!(tmp.path().join("tables").join(format!("{kind}_16.csv")).exists(), "{kind}");
        let records = read_records(&tmp.path().join("records.ndjson")).unwrap();
        assert!(records.iter().all(|r| r.n == 40 || r.name == "jump_pmf"), "{kind}");
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = config(MINIMAL, None);
    let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
}
