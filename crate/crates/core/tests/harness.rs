use collective_mts::harness::{
    grid, run, run_and_write, run_pipeline, sweep, to_csv, verify_file, verify_trace, Axis, CellStatus, RunConfig,
    Trace, TraceRecord,
};
use collective_mts::Error;

fn h(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

#[test]
fn uniform_phase_pipeline_passes() {
    let cfg = RunConfig::new("uniform:3", "phase:3:5", "uniform_fractional", 9);
    let out = run(&cfg).unwrap();
    let r = &out.report;
    assert!(r.passed);
    assert_eq!(r.certificates.failures(), 0);
    assert!(r.certificates.necessary_checked);
    assert_eq!(r.opt, 5.0);
    let bound = 2.0 * 2.0 * h(3) + r.diameter / r.opt;
    assert!(r.ratios.x.unwrap() <= bound, "{} > {bound}", r.ratios.x.unwrap());
    assert!((r.collective.total - r.x.total).abs() < 1e-9);
    let v = verify_trace(&Trace::parse(&out.trace, "mem").unwrap(), false).unwrap();
    assert!(v.passed, "{v}");
}

#[test]
fn empty_run_costs_nothing() {
    let cfg = RunConfig::new("uniform:3", "phase:3:0", "uniform_fractional", 9);
    let out = run(&cfg).unwrap();
    assert_eq!(out.report.steps, 0);
    assert_eq!(out.report.x.total, 0.0);
    assert_eq!(out.report.opt, 0.0);
    assert_eq!(out.report.ratios.x, None);
    assert!(out.report.passed);
    assert_eq!(out.trace.lines().count(), 2);
}

#[test]
fn config_file_with_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.txt"), "3\n0 1 2\n1 0 1\n2 1 0\n").unwrap();
    std::fs::write(dir.path().join("c.txt"), "1 0 0\n0 1 0\n0 0 1\n0.5 0.5 0\n").unwrap();
    std::fs::write(dir.path().join("y.txt"), "units 4\n1 0 0\n1/2 1/2 0\n0 1 0\n0.25 0.25 0.5\n0 0 1\n").unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        r#"
metric = "m.txt"
costs = "c.txt"
strategy = "replay:y.txt"
k = 9
tau = 0.5

[output]
trace = "out/trace.jsonl"
report = "out/report.json"
agents = "out/agents.txt"
"#,
    )
    .unwrap();
    std::fs::create_dir(dir.path().join("out")).unwrap();
    let cfg = RunConfig::read(&cfg_path).unwrap();
    let out = run_and_write(&cfg).unwrap();
    assert!(out.report.passed);
    assert_eq!(out.report.fixed_costs.tau, 0.5);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"], 4);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/agents.txt")).unwrap().lines().count(), 6);
    let v = verify_file(dir.path().join("out/trace.jsonl"), true).unwrap();
    assert!(v.passed, "{v}");
    assert!(v.class("selection").is_some());
}

#[test]
fn config_errors_are_reported() {
    assert!(matches!(RunConfig::parse("metric = 3"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse("metric = \"uniform:2\"\ncosts = \"phase:2:1\"\nstrategy = \"greedy\"\nk = 4\nbogus = 1"), Err(Error::Config(_))));
    let cfg = RunConfig::new("uniform:2", "phase:3:1", "greedy", 4);
    assert!(matches!(run(&cfg), Err(Error::Config(_))));
    let cfg = RunConfig::new("uniform:2", "phase:2:1", "nonsense", 4);
    assert!(matches!(run(&cfg), Err(Error::Config(_))));
    let cfg = RunConfig::new("random:3:1", "phase:3:1", "uniform_fractional", 9);
    assert!(matches!(run(&cfg), Err(Error::Domain(_))));
    let cfg = RunConfig::new("uniform:3", "phase:3:1", "greedy", 4);
    assert!(matches!(run(&cfg), Err(Error::Domain(_))));
}

#[test]
fn toml_round_trip() {
    let mut cfg = RunConfig::new("uniform:3", "random:3:10:4:0.5", "random:6:4", 9);
    cfg.verify_necessary = Some(false);
    cfg.tau = Some(0.2);
    let back = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = RunConfig::new("random:3:5", "cruel:greedy:25:1.5", "greedy", 9);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.report_json, b.report_json);
    assert_eq!(a.agents, b.agents);
}

#[test]
fn tampered_trace_fails_dominance() {
    let cfg = RunConfig::new("uniform:3", "phase:3:2", "uniform_fractional", 9);
    let out = run(&cfg).unwrap();
    let mut trace = Trace::parse(&out.trace, "mem").unwrap();
    assert!(verify_trace(&trace, false).unwrap().passed);
    // y(2) has no mass at point 0; put all of x(2) there
    assert_eq!(trace.steps[1].y[0], 0);
    trace.steps[1].x = vec![9, 0, 0];
    let v = verify_trace(&trace, false).unwrap();
    assert!(!v.passed);
    assert!(v.class("dominance").unwrap().failures > 0);
    assert!(v.class("plan").unwrap().failures > 0);
}

#[test]
fn malformed_trace_is_an_error() {
    assert!(matches!(Trace::parse("{\"kind\":\"step\"}\n", "bad"), Err(Error::Parse { .. })));
    assert!(matches!(Trace::parse("", "empty"), Err(Error::Parse { .. })));
    let out = run(&RunConfig::new("uniform:2", "phase:2:2", "greedy", 4)).unwrap();
    let mut lines: Vec<String> = out.trace.lines().map(String::from).collect();
    let mut rec: TraceRecord = serde_json::from_str(&lines[1]).unwrap();
    if let TraceRecord::Step(s) = &mut rec {
        s.x = vec![1, 1];
    }
    lines[1] = serde_json::to_string(&rec).unwrap();
    let trace = Trace::parse(&lines.join("\n"), "sum").unwrap();
    assert!(matches!(verify_trace(&trace, false), Err(Error::Structural(_))));
}

#[test]
fn small_k_probe_does_not_crash() {
    let mut cfg = RunConfig::new("uniform:3", "random:3:30:5", "random:6:5", 3);
    cfg.require_k_ge_n2 = false;
    let out = run(&cfg).unwrap();
    let v = verify_trace(&Trace::parse(&out.trace, "mem").unwrap(), true).unwrap();
    assert_eq!(v.steps, 30);
    assert_eq!(v.passed, out.report.passed);
}

#[test]
fn trace_lines_reconstruct_the_report_totals() {
    let cfg = RunConfig::new("random:4:2", "random:4:20:2", "random:8:2", 16);
    let a = run_pipeline(&cfg).unwrap();
    let report = a.report().unwrap();
    let trace = Trace::parse(&a.trace_text(&report).unwrap(), "mem").unwrap();
    let moves: f64 = trace.steps.iter().map(|s| s.movement).sum();
    assert!((moves - report.x.movement).abs() < 1e-9);
    let s = trace.summary.unwrap();
    assert_eq!(s.certificate_failures, 0);
    assert_eq!(s.opt, report.opt);
}

#[test]
fn axes_and_grid() {
    let k: Axis = "k=3,9".parse().unwrap();
    let seed: Axis = "seed=1..5".parse().unwrap();
    assert_eq!(seed.values, ["1", "2", "3", "4", "5"]);
    assert_eq!(grid(&[k.clone(), seed.clone()]).len(), 10);
    assert_eq!(grid(&[]).len(), 1);
    assert!("k".parse::<Axis>().is_err());
    assert!("k=5..1".parse::<Axis>().is_err());
}

#[test]
fn sweep_records_every_cell() {
    let template = "metric = \"uniform:{n}\"\ncosts = \"random:{n}:12:{seed}\"\nstrategy = \"random:6:{seed}\"\nk = {k}\n";
    let axes: Vec<Axis> = ["n=3", "k=3,9", "seed=1..2"].iter().map(|a| a.parse().unwrap()).collect();
    let rows = sweep(template, &axes);
    assert_eq!(rows.len(), 4);
    // k = 3 < n² is rejected per cell without stopping the sweep
    for row in &rows {
        let k = &row.params[1].1;
        match k.as_str() {
            "3" => assert!(matches!(row.status, CellStatus::Error(_))),
            _ => assert_eq!(row.status, CellStatus::Pass),
        }
    }
    let csv = to_csv(&axes, &rows).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("n,k,seed,status,"));

    let one: Vec<Axis> = vec!["seed=4".parse().unwrap()];
    let single = sweep("metric = \"uniform:2\"\ncosts = \"random:2:8:{seed}\"\nstrategy = \"greedy\"\nk = 4\n", &one);
    let direct = run(&RunConfig::new("uniform:2", "random:2:8:4", "greedy", 4)).unwrap();
    assert_eq!(single[0].x_total, Some(direct.report.x.total));
}

#[test]
fn small_k_sweep_reports_status_per_k() {
    let template = "metric = \"uniform:3\"\ncosts = \"phase:3:3\"\nstrategy = \"uniform_fractional\"\nk = {k}\nrequire_k_ge_n2 = false\n";
    let axes: Vec<Axis> = vec!["k=3,9".parse().unwrap()];
    let rows = sweep(template, &axes);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !matches!(r.status, CellStatus::Error(_))));
    assert_eq!(rows[1].status, CellStatus::Pass);
}
