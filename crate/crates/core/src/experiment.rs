//! Experiment orchestration: builds data, graph and model from a
//! [`RunConfig`], runs the requested experiment and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{DatasetSpec, ExperimentKind, RunConfig, TopologySpec};
use crate::data::{assign_labels, load_cifar10, partition, synth_generate, Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::nn::ModelArch;
use crate::rng::{derive_seed, Stream};
use crate::topology::{erdos_renyi, ring, Graph};
use crate::trainer::{dslth_verify, run, BoundInstance, MetricsLog, RunData};

/// Files written by [`run_experiment`], in creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    out: Artifacts,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::Input {
            file: path.clone(),
            offset: None,
            message: format!("cannot write: {e}"),
        })?;
        self.out.files.push(path);
        Ok(())
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetSpec::Synthetic {
            classes,
            dims,
            per_class,
            noise,
        } => synth_generate(*classes, *dims, *per_class, *noise, cfg.seed),
        DatasetSpec::Cifar10 { path } => load_cifar10(path),
    }
}

pub fn build_arch(cfg: &RunConfig, input: [usize; 3]) -> Result<ModelArch> {
    ModelArch::desk(input, cfg.conv_channels, cfg.hidden, cfg.classes())
}

pub fn build_graph(cfg: &RunConfig, topology: TopologySpec) -> Result<Graph> {
    match topology {
        TopologySpec::Ring => ring(cfg.agents),
        TopologySpec::ErdosRenyi { p } => erdos_renyi(cfg.agents, p, cfg.seed, cfg.max_retries),
    }
}

fn build_plan(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<PartitionPlan> {
    let labels = assign_labels(cfg.agents, cfg.classes(), cfg.labels_per_agent, cfg.seed)?;
    partition(train, test, &labels, cfg.seed)
}

fn manifest(cfg: &RunConfig, graphs: &[(String, &Graph)]) -> String {
    let mut s = cfg.to_text();
    for (name, stream) in [
        ("params", Stream::Params),
        ("scores", Stream::Scores),
        ("topology", Stream::Topology),
        ("labels", Stream::Labels),
        ("partition", Stream::Partition),
        ("batches", Stream::Batches),
        ("retention", Stream::Retention),
        ("dataset", Stream::Dataset),
        ("probe", Stream::Probe),
    ] {
        let _ = writeln!(s, "# stream {name} {:#018x}", derive_seed(cfg.seed, stream, &[]));
    }
    for (label, g) in graphs {
        let _ = writeln!(s, "# graph {label} nodes {} edges {}", g.node_count(), g.edge_count());
        for (i, j) in g.edges() {
            let _ = writeln!(s, "# edge {label} {i} {j}");
        }
    }
    s
}

fn suffix(parts: &[&str]) -> String {
    parts.iter().filter(|p| !p.is_empty()).map(|p| format!("_{p}")).collect()
}

fn write_logs(w: &mut Writer<'_>, tag: &str, multi: bool, logs: &[MetricsLog]) -> Result<()> {
    for log in logs {
        let algo = if multi { log.algorithm.name() } else { "" };
        let sfx = suffix(&[tag, algo]);
        w.write(&format!("metrics{sfx}.csv"), &log.metrics_csv())?;
        w.write(&format!("sparsity{sfx}.csv"), &log.sparsity_csv())?;
    }
    Ok(())
}

fn progress(quiet: bool, msg: impl FnOnce() -> String) {
    if !quiet {
        eprintln!("{}", msg());
    }
}

/// Runs the configured experiment and writes its artifacts to
/// `cfg.out_dir`: `manifest.cfg` always, then per experiment kind
/// `metrics*.csv` and `sparsity*.csv` (train, sweep), `graph*.edges`,
/// `dslth.csv` or `bounds.csv`.
pub fn run_experiment(cfg: &RunConfig, quiet: bool) -> Result<Artifacts> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut w = Writer {
        dir: &cfg.out_dir,
        out: Artifacts::default(),
    };
    let multi = cfg.algorithms.len() > 1;
    match cfg.experiment {
        ExperimentKind::Train => {
            let (train, test) = load_data(cfg)?;
            let arch = build_arch(cfg, train.sample_dims())?;
            let graph = build_graph(cfg, cfg.topology)?;
            let plan = build_plan(cfg, &train, &test)?;
            w.write("manifest.cfg", &manifest(cfg, &[("main".into(), &graph)]))?;
            w.write("graph.edges", &graph.to_edge_list())?;
            let data = RunData {
                arch: &arch,
                train: &train,
                test: &test,
                plan: &plan,
            };
            let logs = cfg
                .algorithms
                .iter()
                .map(|&a| {
                    let log = run(cfg.hyper(a), &graph, data)?;
                    progress(quiet, || format!("{a}: final mean accuracy {:.4}", log.final_mean_accuracy()));
                    Ok(log)
                })
                .collect::<Result<Vec<_>>>()?;
            write_logs(&mut w, "", multi, &logs)?;
        }
        ExperimentKind::Sweep => {
            let (train, test) = load_data(cfg)?;
            let arch = build_arch(cfg, train.sample_dims())?;
            let plan = build_plan(cfg, &train, &test)?;
            let graphs = cfg
                .sweep_topologies
                .iter()
                .map(|&t| Ok((t.label(), build_graph(cfg, t)?)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<(String, &Graph)> = graphs.iter().map(|(l, g)| (l.clone(), g)).collect();
            w.write("manifest.cfg", &manifest(cfg, &refs))?;
            let data = RunData {
                arch: &arch,
                train: &train,
                test: &test,
                plan: &plan,
            };
            for (label, graph) in &graphs {
                w.write(&format!("graph_{label}.edges"), &graph.to_edge_list())?;
                let logs = cfg
                    .algorithms
                    .iter()
                    .map(|&a| {
                        let log = run(cfg.hyper(a), graph, data)?;
                        progress(quiet, || format!("{label} {a}: final mean accuracy {:.4}", log.final_mean_accuracy()));
                        Ok(log)
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_logs(&mut w, label, multi, &logs)?;
            }
        }
        ExperimentKind::Dslth => {
            let (train, test) = load_data(cfg)?;
            let arch = build_arch(cfg, train.sample_dims())?;
            let plan = build_plan(cfg, &train, &test)?;
            w.write("manifest.cfg", &manifest(cfg, &[]))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?;
            let report = pool.install(|| dslth_verify(&arch, &train, &test, &plan, &cfg.dslth()))?;
            progress(quiet, || {
                let mut s = format!("weight arm: final mean accuracy {:.4}", report.final_weight_accuracy());
                for r in &cfg.dslth_ratios {
                    let _ = write!(s, "\nmask arm r={r}: final mean accuracy {:.4}", report.final_mask_accuracy(*r).unwrap_or(0.0));
                }
                s
            });
            w.write("dslth.csv", &report.csv())?;
        }
        ExperimentKind::BoundCheck => {
            w.write("manifest.cfg", &manifest(cfg, &[]))?;
            let mut csv = String::from("instance,eps1,eps2,alpha_u,alpha_l,sup_g,inf_g,upper,lower,upper_holds,lower_holds\n");
            let mut upper_failures = 0;
            let mut lower_failures = 0;
            for i in 0..cfg.bound_instances {
                let r = BoundInstance::random(cfg.seed, i as u64, cfg.bound_probes)?.check()?;
                upper_failures += usize::from(!r.upper_holds);
                lower_failures += usize::from(!r.lower_holds);
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},{},{},{},{},{},{}",
                    r.eps1, r.eps2, r.alpha_u, r.alpha_l, r.sup_g, r.inf_g, r.upper, r.lower, r.upper_holds, r.lower_holds
                );
            }
            w.write("bounds.csv", &csv)?;
            progress(quiet, || {
                format!(
                    "{} instances: upper bound violated on {upper_failures}, lower bound violated on {lower_failures}",
                    cfg.bound_instances
                )
            });
            if upper_failures > 0 {
                return Err(Error::Simulation(format!(
                    "upper output-distance bound violated on {upper_failures} instances"
                )));
            }
        }
    }
    Ok(w.out)
}
