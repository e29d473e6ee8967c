//! The collaborative mask-learning round, baseline algorithms, the
//! experiment loop and two verification harnesses (fixed-init mask vs
//! weight training, and the pairwise output-distance bound).

mod agent;
mod bound;
mod dslth;
mod metrics;
mod round;
mod run;

use std::fmt;
use std::str::FromStr;

pub use agent::{aggregation_tensor, neighbor_average, AgentState};
pub use bound::{bound_check, max_norm_distance, BoundInstance, BoundReport, Evaluable, Network};
pub use dslth::{dslth_verify, AgentTrace, DslthConfig, DslthReport};
pub use metrics::{EvalRecord, LayerSparsity, MetricsLog};
pub use round::{baseline_round, magnitude_prune, mcepl_round, sample_batch, RoundContext};
pub use run::{run, RunData, Simulation};

use crate::error::{Error, Result};

/// Training algorithm run by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Mask learning with neighbor mask aggregation and personalized fine-tuning.
    Mcepl,
    /// Decentralized SGD on real weights with neighbor averaging, no pruning.
    Dsgd,
    /// Local mask learning, no communication.
    IndMask,
    /// Local SGD with magnitude pruning, no communication.
    IndWeipru,
    /// SGD, magnitude pruning, full neighbor averaging of pruned weights.
    AvrWeipru,
    /// SGD, magnitude pruning, averaging restricted to locally retained entries.
    ParWeipru,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Mcepl,
        Algorithm::Dsgd,
        Algorithm::IndMask,
        Algorithm::IndWeipru,
        Algorithm::AvrWeipru,
        Algorithm::ParWeipru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mcepl => "mcepl",
            Algorithm::Dsgd => "dsgd",
            Algorithm::IndMask => "ind_mask",
            Algorithm::IndWeipru => "ind_weipru",
            Algorithm::AvrWeipru => "avr_weipru",
            Algorithm::ParWeipru => "par_weipru",
        }
    }

    /// Learns masks over the shared frozen weights.
    pub fn is_mask_based(self) -> bool {
        matches!(self, Algorithm::Mcepl | Algorithm::IndMask)
    }

    pub fn communicates(self) -> bool {
        !matches!(self, Algorithm::IndMask | Algorithm::IndWeipru)
    }

    pub fn prunes_weights(self) -> bool {
        matches!(self, Algorithm::IndWeipru | Algorithm::AvrWeipru | Algorithm::ParWeipru)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown algorithm {s:?}")))
    }
}

/// Learning rate for mask-based algorithms.
pub const DEFAULT_MASK_LR: f64 = 1.0;
/// Learning rate for weight-based baselines.
pub const DEFAULT_WEIGHT_LR: f64 = 0.001;
pub const DEFAULT_LAMBDA: f64 = 0.001;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_EVAL_INTERVAL: usize = 10;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    /// Group-sparsity weight on the score tensors.
    pub lambda: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Retention ratio per agent.
    pub retention: Vec<f64>,
    pub min_nonzero: usize,
    pub fil_linear: bool,
    pub eval_interval: usize,
    /// Worker threads; 0 uses the default pool.
    pub workers: usize,
}

impl HyperConfig {
    /// Defaults for `algorithm` with the given per-agent retention ratios.
    pub fn new(algorithm: Algorithm, retention: Vec<f64>) -> Self {
        HyperConfig {
            algorithm,
            lr: if algorithm.is_mask_based() {
                DEFAULT_MASK_LR
            } else {
                DEFAULT_WEIGHT_LR
            },
            lambda: DEFAULT_LAMBDA,
            batch_size: DEFAULT_BATCH_SIZE,
            rounds: 100,
            seed: 1,
            retention,
            min_nonzero: crate::masking::DEFAULT_MIN_NONZERO,
            fil_linear: true,
            eval_interval: DEFAULT_EVAL_INTERVAL,
            workers: 0,
        }
    }

    pub fn validate(&self, agents: usize) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be at least 1".into()));
        }
        if self.retention.len() != agents {
            return Err(Error::Config(format!(
                "{} retention ratios for {agents} agents",
                self.retention.len()
            )));
        }
        if let Some(r) = self.retention.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("retention ratio {r} outside (0, 1]")));
        }
        Ok(())
    }
}
