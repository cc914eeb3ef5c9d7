use std::path::PathBuf;
use std::time::Duration;

use knobctl::synthbench::harness::{count_failures, write_outputs, FAILURES_FILE, JOURNAL_FILE};
use knobctl::synthbench::{run_external, BenchHarness};
use knobctl::{Knob, KnobSetting, KnobSpace};

fn toy_space() -> KnobSpace<f64> {
    let levels: Vec<f64> = (1..=5).map(f64::from).collect();
    KnobSpace::new(vec![
        Knob::new("iter1", levels.clone(), 4).unwrap(),
        Knob::new("iter2", levels, 4).unwrap(),
    ])
    .unwrap()
}

fn toy_harness(timeout: Duration) -> BenchHarness {
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_toyprog"));
    BenchHarness {
        command: "{bindir}/toyprog {input} {knob:iter1} {knob:iter2}".into(),
        timeout,
        workers: 4,
        bindir: bin.parent().map(PathBuf::from),
        ..BenchHarness::default()
    }
}

fn ids(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn full_sweep_then_resume_launches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let space = toy_space();
    let settings: Vec<KnobSetting> = space.settings().collect();
    let h = toy_harness(Duration::from_secs(20));
    let inputs = ids(&["alpha", "beta", "gamma"]);

    let first = run_external::<f64>(&h, &space, &inputs, &settings, Some(dir.path())).unwrap();
    assert_eq!(first.dataset.len(), 75);
    assert!(first.failures.is_empty());
    assert_eq!(first.launched, 75);
    assert_eq!(first.dataset.feature_names(), ["magnitude".to_string()]);
    assert!(dir.path().join(JOURNAL_FILE).exists());

    let second = run_external::<f64>(&h, &space, &inputs, &settings, Some(dir.path())).unwrap();
    assert_eq!(second.launched, 0);
    assert_eq!(second.dataset, first.dataset);
}

#[test]
fn accurate_setting_has_smallest_distance_and_largest_cost() {
    let space = toy_space();
    let settings: Vec<KnobSetting> = space.settings().collect();
    let out = run_external::<f64>(&toy_harness(Duration::from_secs(20)), &space, &ids(&["delta"]), &settings, None)
        .unwrap();
    let acc = out.dataset.record("delta", &space.accurate_setting()).unwrap();
    for r in out.dataset.records() {
        assert!(r.distance >= acc.distance);
        assert!(r.cost <= acc.cost);
    }
}

#[test]
fn timeouts_and_garbage_become_failures() {
    let dir = tempfile::tempdir().unwrap();
    let space = toy_space();
    let settings = vec![KnobSetting(vec![0, 0])];
    let h = toy_harness(Duration::from_millis(500));
    let inputs = ids(&["alpha", "slow_one", "garbage_one"]);
    let out = run_external::<f64>(&h, &space, &inputs, &settings, Some(dir.path())).unwrap();
    assert_eq!(out.dataset.len(), 1);
    assert_eq!(out.failures.len(), 2);
    let slow = out.failures.iter().find(|f| f.input_id == "slow_one").unwrap();
    assert!(slow.reason.contains("timed out"), "{}", slow.reason);

    write_outputs(dir.path(), &out.dataset, &out.failures).unwrap();
    assert_eq!(count_failures(&dir.path().join(FAILURES_FILE)).unwrap(), 2);

    let again = run_external::<f64>(&h, &space, &inputs, &settings, Some(dir.path())).unwrap();
    assert_eq!(again.launched, 0);
    assert_eq!(again.failures.len(), 2);
}

#[test]
fn repeats_average_deterministic_output() {
    let space = toy_space();
    let settings = vec![KnobSetting(vec![2, 3])];
    let mut h = toy_harness(Duration::from_secs(20));
    let once = run_external::<f64>(&h, &space, &ids(&["beta"]), &settings, None).unwrap();
    h.repeats = 3;
    let thrice = run_external::<f64>(&h, &space, &ids(&["beta"]), &settings, None).unwrap();
    assert_eq!(thrice.launched, 3);
    let (a, b) = (
        once.dataset.records().next().unwrap(),
        thrice.dataset.records().next().unwrap(),
    );
    assert!((a.cost - b.cost).abs() < 1e-12);
    assert!((a.distance - b.distance).abs() < 1e-12);
}

#[test]
fn missing_program_is_a_failure_not_a_panic() {
    let space = toy_space();
    let h = BenchHarness {
        command: "/nonexistent/prog {input} {knob:iter1} {knob:iter2}".into(),
        ..BenchHarness::default()
    };
    let out = run_external::<f64>(&h, &space, &ids(&["alpha"]), &[KnobSetting(vec![0, 0])], None).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert!(out.dataset.is_empty());
}
