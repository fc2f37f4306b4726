use easim_core::io::{read_checkpoint, read_timeseries};
use easim_core::par::Exec;
use easim_core::runner::{run_experiment, Outcome, Report, RunConfig, CHECKPOINT_FILE, TIMESERIES_FILE};

#[test]
fn trajectory_restarts_from_its_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg =
        RunConfig::from_toml_str("[grid]\nn = 32\n[time]\nt_end = 0.5\n[diagnostics]\ncadence = 5\n").unwrap();
    cfg.output.dir = tmp.path().join("first");
    let (dir, report) = run_experiment(&cfg, Exec::Sequential).unwrap();
    assert_eq!(report.outcome(), Outcome::Completed);
    let recs = read_timeseries(&dir.join(TIMESERIES_FILE)).unwrap();
    assert!(recs.len() > 5);
    assert!((recs.last().unwrap().t - 0.5).abs() < 1e-12);
    let ck = read_checkpoint(&dir.join(CHECKPOINT_FILE)).unwrap();
    assert!((ck.state.t - 0.5).abs() < 1e-12);

    let mut resumed = cfg.clone();
    resumed.ic.kind = easim_core::runner::config::IcKind::Checkpoint;
    resumed.ic.path = Some(dir.join(CHECKPOINT_FILE));
    resumed.time.t_end = 1.0;
    resumed.output.dir = tmp.path().join("second");
    let (dir2, report2) = run_experiment(&resumed, Exec::Sequential).unwrap();
    let Report::Trajectory(t) = report2 else {
        panic!("expected a trajectory")
    };
    assert_eq!(t.outcome, Outcome::Completed);
    let recs2 = read_timeseries(&dir2.join(TIMESERIES_FILE)).unwrap();
    assert!((recs2[0].t - 0.5).abs() < 1e-12);
    assert!((recs2[0].mass - recs.last().unwrap().mass).abs() < 1e-14);
    assert!(recs2.last().unwrap().hs_sq() <= recs.last().unwrap().hs_sq());
}
