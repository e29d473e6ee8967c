//! Flat `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Lists are comma-separated.
//! Every key is optional; [`RunConfig::to_text`] writes the fully resolved
//! configuration back in the same format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::trainer::{Algorithm, DslthConfig, HyperConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Train,
    Dslth,
    BoundCheck,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Train => "train",
            ExperimentKind::Dslth => "dslth",
            ExperimentKind::BoundCheck => "bound_check",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            ExperimentKind::Train,
            ExperimentKind::Dslth,
            ExperimentKind::BoundCheck,
            ExperimentKind::Sweep,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown experiment {s:?} (train, dslth, bound_check, sweep)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic {
        classes: usize,
        dims: [usize; 3],
        per_class: usize,
        noise: f64,
    },
    Cifar10 {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologySpec {
    ErdosRenyi { p: f64 },
    Ring,
}

impl TopologySpec {
    /// Short name used in sweep file names: `ring` or `p0.3`.
    pub fn label(&self) -> String {
        match self {
            TopologySpec::Ring => "ring".into(),
            TopologySpec::ErdosRenyi { p } => format!("p{p}"),
        }
    }

    fn sweep_token(&self) -> String {
        match self {
            TopologySpec::Ring => "ring".into(),
            TopologySpec::ErdosRenyi { p } => p.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetentionSpec {
    /// One ratio per agent.
    Explicit(Vec<f64>),
    /// Each agent draws uniformly from these values.
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub dataset: DatasetSpec,
    pub agents: usize,
    pub topology: TopologySpec,
    pub sweep_topologies: Vec<TopologySpec>,
    /// Labels held by each agent.
    pub labels_per_agent: usize,
    pub retention: RetentionSpec,
    pub algorithms: Vec<Algorithm>,
    pub lr_mask: f64,
    pub lr_weight: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub eval_interval: usize,
    pub min_nonzero: usize,
    pub fil_linear: bool,
    pub conv_channels: [usize; 2],
    pub hidden: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub max_retries: usize,
    pub dslth_ratios: Vec<f64>,
    pub dslth_steps: usize,
    pub dslth_eval_interval: usize,
    pub dslth_lr_weight: f64,
    pub dslth_lr_mask: f64,
    pub dslth_lambda: f64,
    pub dslth_min_nonzero: usize,
    pub bound_instances: usize,
    pub bound_probes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentKind::Train,
            dataset: DatasetSpec::Synthetic {
                classes: 10,
                dims: [3, 16, 16],
                per_class: 100,
                noise: 0.3,
            },
            agents: 20,
            topology: TopologySpec::ErdosRenyi { p: 0.5 },
            sweep_topologies: vec![
                TopologySpec::Ring,
                TopologySpec::ErdosRenyi { p: 0.3 },
                TopologySpec::ErdosRenyi { p: 0.5 },
                TopologySpec::ErdosRenyi { p: 0.7 },
            ],
            labels_per_agent: 4,
            retention: RetentionSpec::Sampled(vec![0.1, 0.2, 0.3, 0.4]),
            algorithms: vec![Algorithm::Mcepl],
            lr_mask: crate::trainer::DEFAULT_MASK_LR,
            lr_weight: crate::trainer::DEFAULT_WEIGHT_LR,
            lambda: crate::trainer::DEFAULT_LAMBDA,
            batch_size: crate::trainer::DEFAULT_BATCH_SIZE,
            rounds: 100,
            eval_interval: crate::trainer::DEFAULT_EVAL_INTERVAL,
            min_nonzero: crate::masking::DEFAULT_MIN_NONZERO,
            fil_linear: true,
            conv_channels: [16, 32],
            hidden: 128,
            seed: 1,
            workers: 0,
            out_dir: PathBuf::from("out"),
            max_retries: crate::topology::DEFAULT_MAX_RETRIES,
            dslth_ratios: vec![0.1, 0.3, 0.5],
            dslth_steps: 300,
            dslth_eval_interval: 3,
            dslth_lr_weight: 0.001,
            dslth_lr_mask: 1.0,
            dslth_lambda: 0.0,
            dslth_min_nonzero: 0,
            bound_instances: 100,
            bound_probes: 200,
        }
    }
}

const KEYS: &[&str] = &[
    "experiment",
    "dataset",
    "cifar_path",
    "classes",
    "synth_dims",
    "synth_per_class",
    "synth_noise",
    "n",
    "topology",
    "p",
    "sweep_topologies",
    "labels_per_agent",
    "retention",
    "retention_choices",
    "algorithm",
    "lr_mask",
    "lr_weight",
    "lambda",
    "batch_size",
    "rounds",
    "eval_interval",
    "min_nonzero",
    "fil_linear",
    "conv_channels",
    "hidden",
    "seed",
    "workers",
    "out_dir",
    "max_retries",
    "dslth_ratios",
    "dslth_steps",
    "dslth_eval_interval",
    "dslth_lr_weight",
    "dslth_lr_mask",
    "dslth_lambda",
    "dslth_min_nonzero",
    "bound_instances",
    "bound_probes",
];

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

fn line_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigLine {
        line,
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| line_err(line, format!("expected `key = value`, got {body:?}")))?;
            let key = key.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| line_err(line, format!("unknown key `{key}`")))?;
            if let Some((prev, _)) = map.insert(*known, (line, value.trim().to_string())) {
                return Err(line_err(line, format!("duplicate key `{key}` (first set on line {prev})")));
            }
        }
        Ok(Entries { map })
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |(l, _)| *l)
    }

    fn get<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| line_err(*line, format!("`{key}`: expected {what}, got {v:?}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse()
                        .map_err(|_| line_err(*line, format!("`{key}`: expected a list of {what}, got item {item:?}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => match v.as_str() {
                "true" | "1" | "yes" => Ok(Some(true)),
                "false" | "0" | "no" => Ok(Some(false)),
                _ => Err(line_err(*line, format!("`{key}`: expected true or false, got {v:?}"))),
            },
        }
    }

    fn parsed<T>(&self, key: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => f(v).map(Some).map_err(|m| line_err(*line, format!("`{key}`: {m}"))),
        }
    }
}

fn parse_topology(s: &str) -> std::result::Result<TopologySpec, String> {
    match s {
        "ring" => Ok(TopologySpec::Ring),
        other => other
            .parse::<f64>()
            .map(|p| TopologySpec::ErdosRenyi { p })
            .map_err(|_| format!("expected `ring` or an edge probability, got {other:?}")),
    }
}

fn fixed<const N: usize>(v: Vec<usize>) -> std::result::Result<[usize; N], String> {
    let n = v.len();
    v.try_into().map_err(|_| format!("expected {N} values, got {n}"))
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let e = Entries::parse(text)?;
    let mut c = RunConfig::default();

    if let Some(k) = e.parsed("experiment", |s| s.parse::<ExperimentKind>())? {
        c.experiment = k;
    }
    let dataset = e.get::<String>("dataset", "a dataset name")?;
    let cifar = e.get::<PathBuf>("cifar_path", "a path")?;
    match dataset.as_deref() {
        None | Some("synthetic") => {
            if let Some(path) = cifar {
                if dataset.is_none() {
                    c.dataset = DatasetSpec::Cifar10 { path };
                } else {
                    return Err(line_err(e.line("cifar_path"), "`cifar_path` given with `dataset = synthetic`"));
                }
            }
        }
        Some("cifar10") => {
            let path = cifar.ok_or_else(|| line_err(e.line("dataset"), "`dataset = cifar10` requires `cifar_path`"))?;
            c.dataset = DatasetSpec::Cifar10 { path };
        }
        Some(other) => {
            return Err(line_err(
                e.line("dataset"),
                format!("`dataset`: expected synthetic or cifar10, got {other:?}"),
            ))
        }
    }
    if let DatasetSpec::Synthetic {
        classes,
        dims,
        per_class,
        noise,
    } = &mut c.dataset
    {
        if let Some(v) = e.get("classes", "an unsigned integer")? {
            *classes = v;
        }
        if let Some(v) = e.parsed("synth_dims", |s| {
            let v = s
                .split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| format!("expected integers, got {x:?}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            fixed::<3>(v)
        })? {
            *dims = v;
        }
        if let Some(v) = e.get("synth_per_class", "an unsigned integer")? {
            *per_class = v;
        }
        if let Some(v) = e.get("synth_noise", "a number")? {
            *noise = v;
        }
    } else {
        for key in ["classes", "synth_dims", "synth_per_class", "synth_noise"] {
            if e.map.contains_key(key) {
                return Err(line_err(e.line(key), format!("`{key}` only applies to the synthetic dataset")));
            }
        }
    }

    if let Some(v) = e.get("n", "an unsigned integer")? {
        c.agents = v;
    }
    match e.get::<String>("topology", "a topology name")?.as_deref() {
        None | Some("er") => {
            if let Some(p) = e.get("p", "a number")? {
                c.topology = TopologySpec::ErdosRenyi { p };
            }
        }
        Some("ring") => {
            if e.map.contains_key("p") {
                return Err(line_err(e.line("p"), "`p` given with `topology = ring`"));
            }
            c.topology = TopologySpec::Ring;
        }
        Some(other) => {
            return Err(line_err(
                e.line("topology"),
                format!("`topology`: expected er or ring, got {other:?}"),
            ))
        }
    }
    if let Some(v) = e.parsed("sweep_topologies", |s| s.split(',').map(|t| parse_topology(t.trim())).collect())? {
        c.sweep_topologies = v;
    }
    if let Some(v) = e.get("labels_per_agent", "an unsigned integer")? {
        c.labels_per_agent = v;
    }
    match (
        e.list::<f64>("retention", "numbers")?,
        e.list::<f64>("retention_choices", "numbers")?,
    ) {
        (Some(_), Some(_)) => {
            return Err(line_err(
                e.line("retention_choices"),
                "give either `retention` or `retention_choices`, not both",
            ))
        }
        (Some(v), None) => c.retention = RetentionSpec::Explicit(v),
        (None, Some(v)) => c.retention = RetentionSpec::Sampled(v),
        (None, None) => {}
    }
    if let Some(v) = e.parsed("algorithm", |s| {
        s.split(',')
            .map(|a| a.trim().parse::<Algorithm>().map_err(|err| err.to_string()))
            .collect()
    })? {
        c.algorithms = v;
    }
    macro_rules! scalar {
        ($($key:literal => $field:ident : $what:literal),* $(,)?) => {
            $(if let Some(v) = e.get($key, $what)? { c.$field = v; })*
        };
    }
    scalar! {
        "lr_mask" => lr_mask: "a number",
        "lr_weight" => lr_weight: "a number",
        "lambda" => lambda: "a number",
        "batch_size" => batch_size: "an unsigned integer",
        "rounds" => rounds: "an unsigned integer",
        "eval_interval" => eval_interval: "an unsigned integer",
        "min_nonzero" => min_nonzero: "an unsigned integer",
        "hidden" => hidden: "an unsigned integer",
        "seed" => seed: "an unsigned integer",
        "workers" => workers: "an unsigned integer",
        "out_dir" => out_dir: "a path",
        "max_retries" => max_retries: "an unsigned integer",
        "dslth_steps" => dslth_steps: "an unsigned integer",
        "dslth_eval_interval" => dslth_eval_interval: "an unsigned integer",
        "dslth_lr_weight" => dslth_lr_weight: "a number",
        "dslth_lr_mask" => dslth_lr_mask: "a number",
        "dslth_lambda" => dslth_lambda: "a number",
        "dslth_min_nonzero" => dslth_min_nonzero: "an unsigned integer",
        "bound_instances" => bound_instances: "an unsigned integer",
        "bound_probes" => bound_probes: "an unsigned integer",
    }
    if let Some(v) = e.bool("fil_linear")? {
        c.fil_linear = v;
    }
    if let Some(v) = e.parsed("conv_channels", |s| {
        let v = s
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| format!("expected integers, got {x:?}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        fixed::<2>(v)
    })? {
        c.conv_channels = v;
    }
    if let Some(v) = e.list("dslth_ratios", "numbers")? {
        c.dslth_ratios = v;
    }

    c.validate_with(|key| e.line(key))?;
    Ok(c)
}

impl RunConfig {
    /// Checks every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_| 0)
    }

    fn validate_with(&self, line: impl Fn(&str) -> usize) -> Result<()> {
        let fail = |key: &str, msg: String| -> Error {
            match line(key) {
                0 => Error::Config(format!("`{key}`: {msg}")),
                l => line_err(l, format!("`{key}`: {msg}")),
            }
        };
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(fail(key, format!("must be positive, got {v}")))
            }
        };
        let ratio = |key: &str, v: &[f64]| {
            if v.is_empty() {
                return Err(fail(key, "must not be empty".into()));
            }
            match v.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                Some(r) => Err(fail(key, format!("ratio {r} outside (0, 1]"))),
                None => Ok(()),
            }
        };
        let at_least_one = |key: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(fail(key, "must be at least 1".into()))
            }
        };

        let classes = match &self.dataset {
            DatasetSpec::Synthetic {
                classes,
                dims,
                per_class,
                noise,
            } => {
                if *classes < 2 {
                    return Err(fail("classes", format!("need at least 2 classes, got {classes}")));
                }
                if dims.iter().any(|d| *d == 0) {
                    return Err(fail("synth_dims", format!("extents must be positive, got {dims:?}")));
                }
                if *per_class < 2 {
                    return Err(fail("synth_per_class", format!("need at least 2 samples per class, got {per_class}")));
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(fail("synth_noise", format!("must be nonnegative, got {noise}")));
                }
                *classes
            }
            DatasetSpec::Cifar10 { path } => {
                if !path.is_dir() {
                    return Err(fail("cifar_path", format!("{} is not a directory", path.display())));
                }
                10
            }
        };
        if self.agents < 1 {
            return Err(fail("n", "need at least one agent".into()));
        }
        let check_topology = |key: &str, t: &TopologySpec| match t {
            TopologySpec::ErdosRenyi { p } if !(*p > 0.0 && *p <= 1.0) => Err(fail(key, format!("edge probability {p} outside (0, 1]"))),
            TopologySpec::Ring if self.agents < 3 => Err(fail(key, format!("a ring needs at least 3 agents, got {}", self.agents))),
            _ => Ok(()),
        };
        check_topology(if line("p") > 0 { "p" } else { "topology" }, &self.topology)?;
        if self.sweep_topologies.is_empty() {
            return Err(fail("sweep_topologies", "must not be empty".into()));
        }
        for t in &self.sweep_topologies {
            check_topology("sweep_topologies", t)?;
        }
        if self.labels_per_agent < 1 || self.labels_per_agent > classes {
            return Err(fail(
                "labels_per_agent",
                format!("must lie in 1..={classes}, got {}", self.labels_per_agent),
            ));
        }
        match &self.retention {
            RetentionSpec::Explicit(v) => {
                ratio("retention", v)?;
                if v.len() != self.agents {
                    return Err(fail(
                        "retention",
                        format!("{} ratios given for n = {} agents", v.len(), self.agents),
                    ));
                }
            }
            RetentionSpec::Sampled(v) => ratio("retention_choices", v)?,
        }
        if self.algorithms.is_empty() {
            return Err(fail("algorithm", "must not be empty".into()));
        }
        if let Some(a) = self.algorithms.iter().enumerate().find(|(i, a)| self.algorithms[..*i].contains(a)) {
            return Err(fail("algorithm", format!("{} listed twice", a.1)));
        }
        positive("lr_mask", self.lr_mask)?;
        positive("lr_weight", self.lr_weight)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(fail("lambda", format!("must be nonnegative, got {}", self.lambda)));
        }
        at_least_one("batch_size", self.batch_size)?;
        at_least_one("eval_interval", self.eval_interval)?;
        at_least_one("hidden", self.hidden)?;
        if self.conv_channels.contains(&0) {
            return Err(fail("conv_channels", "channels must be positive".into()));
        }
        at_least_one("max_retries", self.max_retries)?;
        ratio("dslth_ratios", &self.dslth_ratios)?;
        at_least_one("dslth_eval_interval", self.dslth_eval_interval)?;
        positive("dslth_lr_weight", self.dslth_lr_weight)?;
        positive("dslth_lr_mask", self.dslth_lr_mask)?;
        if !(self.dslth_lambda >= 0.0 && self.dslth_lambda.is_finite()) {
            return Err(fail("dslth_lambda", format!("must be nonnegative, got {}", self.dslth_lambda)));
        }
        at_least_one("bound_probes", self.bound_probes)?;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Synthetic { classes, .. } => *classes,
            DatasetSpec::Cifar10 { .. } => 10,
        }
    }

    /// Per-agent retention ratios; sampled choices are drawn from the
    /// retention stream of the root seed.
    pub fn resolve_retention(&self) -> Vec<f64> {
        match &self.retention {
            RetentionSpec::Explicit(v) => v.clone(),
            RetentionSpec::Sampled(choices) => {
                use rand::Rng;
                let mut rng = stream_rng(self.seed, Stream::Retention, &[self.agents as u64]);
                (0..self.agents).map(|_| choices[rng.gen_range(0..choices.len())]).collect()
            }
        }
    }

    /// Training hyperparameters for `algorithm`.
    pub fn hyper(&self, algorithm: Algorithm) -> HyperConfig {
        let mut h = HyperConfig::new(algorithm, self.resolve_retention());
        h.lr = if algorithm.is_mask_based() { self.lr_mask } else { self.lr_weight };
        h.lambda = self.lambda;
        h.batch_size = self.batch_size;
        h.rounds = self.rounds;
        h.seed = self.seed;
        h.min_nonzero = self.min_nonzero;
        h.fil_linear = self.fil_linear;
        h.eval_interval = self.eval_interval;
        h.workers = self.workers;
        h
    }

    pub fn dslth(&self) -> DslthConfig {
        DslthConfig {
            ratios: self.dslth_ratios.clone(),
            steps: self.dslth_steps,
            eval_interval: self.dslth_eval_interval,
            weight_lr: self.dslth_lr_weight,
            mask_lr: self.dslth_lr_mask,
            lambda: self.dslth_lambda,
            min_nonzero: self.dslth_min_nonzero,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    /// Every key with its resolved value, in the parseable format. Sampled
    /// retention ratios are written as an explicit list so the text
    /// reproduces the run.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment", self.experiment.name().into());
        match &self.dataset {
            DatasetSpec::Synthetic {
                classes,
                dims,
                per_class,
                noise,
            } => {
                kv("dataset", "synthetic".into());
                kv("classes", classes.to_string());
                kv("synth_dims", join(dims));
                kv("synth_per_class", per_class.to_string());
                kv("synth_noise", noise.to_string());
            }
            DatasetSpec::Cifar10 { path } => {
                kv("dataset", "cifar10".into());
                kv("cifar_path", path.display().to_string());
            }
        }
        kv("n", self.agents.to_string());
        match self.topology {
            TopologySpec::Ring => kv("topology", "ring".into()),
            TopologySpec::ErdosRenyi { p } => {
                kv("topology", "er".into());
                kv("p", p.to_string());
            }
        }
        kv(
            "sweep_topologies",
            self.sweep_topologies.iter().map(TopologySpec::sweep_token).collect::<Vec<_>>().join(","),
        );
        kv("labels_per_agent", self.labels_per_agent.to_string());
        kv("retention", join(&self.resolve_retention()));
        kv("algorithm", join(&self.algorithms));
        kv("lr_mask", self.lr_mask.to_string());
        kv("lr_weight", self.lr_weight.to_string());
        kv("lambda", self.lambda.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("rounds", self.rounds.to_string());
        kv("eval_interval", self.eval_interval.to_string());
        kv("min_nonzero", self.min_nonzero.to_string());
        kv("fil_linear", self.fil_linear.to_string());
        kv("conv_channels", join(&self.conv_channels));
        kv("hidden", self.hidden.to_string());
        kv("seed", self.seed.to_string());
        kv("workers", self.workers.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("max_retries", self.max_retries.to_string());
        kv("dslth_ratios", join(&self.dslth_ratios));
        kv("dslth_steps", self.dslth_steps.to_string());
        kv("dslth_eval_interval", self.dslth_eval_interval.to_string());
        kv("dslth_lr_weight", self.dslth_lr_weight.to_string());
        kv("dslth_lr_mask", self.dslth_lr_mask.to_string());
        kv("dslth_lambda", self.dslth_lambda.to_string());
        kv("dslth_min_nonzero", self.dslth_min_nonzero.to_string());
        kv("bound_instances", self.bound_instances.to_string());
        kv("bound_probes", self.bound_probes.to_string());
        s
    }
}
