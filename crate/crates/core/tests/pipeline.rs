//! End-to-end checks of the command drivers and the `npat` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use neumann_pat::pipeline::commands::{simulate, trace_stem};
use neumann_pat::pipeline::io::{read_field, read_trace};
use neumann_pat::pipeline::{cmd_forward, cmd_noise, cmd_phantom, cmd_reconstruct, FormulaKind, MetricsReport, RunConfig};
use neumann_pat::TraceKind;

fn config(dir: &Path, extra: &[&str]) -> RunConfig {
    let mut o = vec!["grid.n=61".to_string(), "phantom.kind=\"bump\"".to_string(), format!("output.dir=\"{}\"", dir.display())];
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::default().with_overrides(&o).unwrap()
}

fn find(files: &[PathBuf], name: &str) -> PathBuf {
    files
        .iter()
        .find(|p| p.file_name().unwrap().to_str().unwrap() == name)
        .cloned()
        .unwrap_or_else(|| panic!("{name} not written"))
}

#[test]
fn stored_traces_reload_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let files = cmd_forward(&cfg).unwrap();
    let traces = simulate(&cfg, &cfg.phantom()).unwrap();
    for kind in [TraceKind::Dirichlet, TraceKind::Neumann] {
        let (t, prov) = read_trace(&find(&files, &format!("{}.json", trace_stem(kind)))).unwrap();
        assert_eq!(t.values(), traces.get(kind).values());
        assert_eq!(t.detectors().points(), traces.get(kind).detectors().points());
        assert_eq!(prov.dx, cfg.dx());
        assert!(prov.noise.is_none());
    }
}

#[test]
fn reported_metrics_match_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let phantom = find(&cmd_phantom(&cfg).unwrap(), "phantom.json");
    let trace = find(&cmd_forward(&cfg).unwrap(), "trace_neumann.json");
    let out = cmd_reconstruct(&cfg, &trace, None, false).unwrap();
    let rec = find(&out.files, "recon_neumann_trace_neumann.json");
    assert_eq!(read_field(&rec).unwrap(), out.field);

    let again = MetricsReport::compute(&read_field(&rec).unwrap(), &read_field(&phantom).unwrap()).unwrap();
    let stored: MetricsReport =
        serde_json::from_str(&fs::read_to_string(find(&out.files, "recon_neumann_trace_neumann_metrics.json")).unwrap())
            .unwrap();
    for (a, b) in [
        (again.relative_l2, out.metrics.relative_l2),
        (again.max_abs_error, out.metrics.max_abs_error),
        (again.correlation, out.metrics.correlation),
        (again.alpha_star, out.metrics.alpha_star),
        (stored.relative_l2, out.metrics.relative_l2),
        (stored.alpha_star, out.metrics.alpha_star),
    ] {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }
    assert!(out.metrics.relative_l2 < 0.05);
}

#[test]
fn zero_phantom_gives_zero_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &["phantom.kind=\"zero\""]);
    let traces = simulate(&cfg, &cfg.phantom()).unwrap();
    for t in [&traces.dirichlet, &traces.neumann, &traces.mixed] {
        assert!(t.values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn forward_runs_are_bitwise_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &["domain.kind=\"ellipse\""]);
    let a = simulate(&cfg, &cfg.phantom()).unwrap();
    let b = simulate(&cfg, &cfg.phantom()).unwrap();
    assert_eq!(a.neumann.values(), b.neumann.values());
    assert_eq!(a.mixed.values(), b.mixed.values());
}

#[test]
fn noisy_trace_records_its_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &["noise.seed=7"]);
    let trace = find(&cmd_forward(&cfg).unwrap(), "trace_neumann.json");
    let noisy = cmd_noise(&cfg, &trace, Some(10.0), None).unwrap();
    assert!(noisy.ends_with("trace_neumann_noise10.json"));
    let (t, prov) = read_trace(&noisy).unwrap();
    let noise = prov.noise.unwrap();
    assert_eq!((noise.percent, noise.seed), (10.0, 8));
    let (clean, _) = read_trace(&trace).unwrap();
    assert_ne!(t.values(), clean.values());
}

#[test]
fn reconstruct_rejects_mismatched_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    let trace = find(&cmd_forward(&cfg).unwrap(), "trace_neumann.json");
    let other = config(dir.path(), &["grid.radius=1.2"]);
    assert!(cmd_reconstruct(&other, &trace, None, false).is_err());
    let err = cmd_reconstruct(&cfg, &trace, Some(FormulaKind::DirichletUbp), false).unwrap_err();
    assert_eq!(neumann_pat::pipeline::exit_code(&err), 2);
}

fn npat(dir: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_npat"))
        .args(["-n", "61", "-s", "phantom.kind=\"bump\"", "-o"])
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(npat(d, &["phantom"]), 0);
    assert_eq!(npat(d, &["--set", "grid.bogus=1", "phantom"]), 2);
    assert_eq!(npat(d, &["--set", "phantom.center=[0.6, 0.0]", "phantom"]), 3);
    assert_eq!(npat(d, &["forward"]), 0);
    let trace = d.join("trace_neumann.json");
    assert_eq!(npat(d, &["reconstruct", trace.to_str().unwrap()]), 0);
    assert_eq!(npat(d, &["-n", "81", "reconstruct", trace.to_str().unwrap()]), 2);
    assert_eq!(npat(d, &["reconstruct", "--formula", "bogus", trace.to_str().unwrap()]), 2);
    assert_eq!(npat(d, &["--set", "domain.kind=\"ellipse\"", "--set", "domain.semi_axes=[1.0, 0.6]", "matrix"]), 4);
}
