use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcepl::config::{parse_config, ExperimentKind, RetentionSpec, RunConfig, TopologySpec};
use mcepl::experiment::run_experiment;
use mcepl::Error;

const SMALL: &str = "\
# tiny synthetic task
classes = 4
synth_dims = 2,7,7
synth_per_class = 20
n = 4
p = 0.7
labels_per_agent = 2
lr_mask = 0.1
lr_weight = 0.01
batch_size = 8
rounds = 4
eval_interval = 2
conv_channels = 3,4
hidden = 8
";

fn mcepl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcepl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn parse_examples() {
    let cfg = parse_config("n = 20\np = 0.5").unwrap();
    assert_eq!(cfg.agents, 20);
    assert_eq!(cfg.topology, TopologySpec::ErdosRenyi { p: 0.5 });
    assert_eq!(parse_config("lambda = 0.001").unwrap().lambda, 0.001);
    let err = parse_config("n = 20\nretention = 0.4,0.4,0.3").unwrap_err();
    assert!(matches!(err, Error::ConfigLine { line: 2, .. }), "{err:?}");
}

#[test]
fn defaults_follow_reference_setup() {
    let cfg = parse_config("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.experiment, ExperimentKind::Train);
    assert_eq!(cfg.agents, 20);
    assert_eq!(cfg.lambda, 0.001);
    assert_eq!(cfg.retention, RetentionSpec::Sampled(vec![0.1, 0.2, 0.3, 0.4]));
    let r = cfg.resolve_retention();
    assert_eq!(r.len(), 20);
    assert!(r.iter().all(|x| [0.1, 0.2, 0.3, 0.4].contains(x)));
}

#[test]
fn errors_are_named_and_line_numbered() {
    for (text, line) in [
        ("n = 4\nbogus = 1", 2),
        ("# c\n\nn = four", 3),
        ("n = 4\nn = 5", 2),
        ("topology = ring\nn = 2", 1),
        ("p = 1.5", 1),
        ("algorithm = mcepl,nope", 1),
    ] {
        match parse_config(text) {
            Err(Error::ConfigLine { line: l, message }) => assert_eq!(l, line, "{text:?}: {message}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let cfg = parse_config("dataset = cifar10\ncifar_path = /nonexistent/cifar").unwrap_err();
    assert!(cfg.is_config());
}

#[test]
fn zero_rounds_logs_round_zero_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&format!("{SMALL}rounds = 0\n").replace("rounds = 4\n", "")).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    run_experiment(&cfg, true).unwrap();
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("round,agent,accuracy,loss,payload_bits,header_bits"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.starts_with("0,")));
}

#[test]
fn csv_rows_sorted_by_round_then_agent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(SMALL).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    run_experiment(&cfg, true).unwrap();
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let keys: Vec<(i64, i64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
        })
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(keys.iter().filter(|k| k.1 == -1).map(|k| k.0).collect::<Vec<_>>(), vec![0, 2, 4]);
    let sparsity = fs::read_to_string(dir.path().join("sparsity.csv")).unwrap();
    assert!(sparsity.starts_with("agent,layer,entries,ones,density\n"));
    assert_eq!(sparsity.lines().count(), 1 + 4 * 4);
}

#[test]
fn sweep_writes_one_metrics_file_per_topology() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&format!("{SMALL}experiment = sweep\nsweep_topologies = ring,0.3,0.5,0.7\n")).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.rounds = 1;
    run_experiment(&cfg, true).unwrap();
    for label in ["ring", "p0.3", "p0.5", "p0.7"] {
        assert!(dir.path().join(format!("metrics_{label}.csv")).is_file(), "{label}");
        assert!(dir.path().join(format!("graph_{label}.edges")).is_file(), "{label}");
    }
    let metrics = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("metrics_"))
        .count();
    assert_eq!(metrics, 4);
}

#[test]
fn cli_run_and_manifest_rerun_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", &format!("{SMALL}algorithm = mcepl,avr_weipru\n"));
    let first = dir.path().join("first");
    let out = mcepl(&["run", &cfg, "--seed", "5", "--out", first.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty());

    let manifest = first.join("manifest.cfg");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("seed = 5\n"));
    assert!(text.contains("# stream params 0x"));
    assert!(text.contains("# graph main nodes 4"));

    let second = dir.path().join("second");
    let out = mcepl(&["run", manifest.to_str().unwrap(), "--out", second.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["metrics_mcepl.csv", "metrics_avr_weipru.csv", "sparsity_mcepl.csv", "graph.edges"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mcepl(&["--help"]).status.code(), Some(0));
    assert_eq!(mcepl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mcepl(&["run", "/nonexistent/run.cfg"]).status.code(), Some(1));

    let bad = write_config(dir.path(), "bad.cfg", "n = 20\nretention = 0.4,0.4,0.3\n");
    let out = mcepl(&["run", &bad, "--quiet"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Valid config whose dataset directory holds no batch files.
    let empty = dir.path().join("cifar");
    fs::create_dir(&empty).unwrap();
    let runtime = write_config(
        dir.path(),
        "runtime.cfg",
        &format!("n = 4\ndataset = cifar10\ncifar_path = {}\n", empty.display()),
    );
    let out = mcepl(&["run", &runtime, "--out", dir.path().join("o").to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bound_check_and_dslth_experiments_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&format!(
        "{SMALL}experiment = bound_check\nbound_instances = 3\nbound_probes = 10\n"
    ))
    .unwrap();
    cfg.out_dir = dir.path().join("bounds");
    run_experiment(&cfg, true).unwrap();
    let bounds = fs::read_to_string(cfg.out_dir.join("bounds.csv")).unwrap();
    assert_eq!(bounds.lines().count(), 4);
    assert!(bounds.lines().skip(1).all(|l| l.split(',').nth(9) == Some("true")));

    let mut cfg = parse_config(&format!(
        "{SMALL}experiment = dslth\ndslth_steps = 6\ndslth_eval_interval = 3\ndslth_ratios = 0.5,1\n"
    ))
    .unwrap();
    cfg.out_dir = dir.path().join("dslth");
    run_experiment(&cfg, true).unwrap();
    let dslth = fs::read_to_string(cfg.out_dir.join("dslth.csv")).unwrap();
    assert!(dslth.starts_with("step,agent,arm,ratio,accuracy\n"));
    // Four agents, three evaluations, one weight arm and two mask arms.
    assert_eq!(dslth.lines().count(), 1 + 4 * 3 * 3);
}
