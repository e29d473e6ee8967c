use rayon::prelude::*;
use rayon::ThreadPool;

use super::round::{baseline_round, magnitude_prune, mcepl_round, RoundContext};
use super::{AgentState, Algorithm, EvalRecord, HyperConfig, LayerSparsity, MetricsLog};
use crate::data::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::masking::{BitMaskSet, MaskState};
use crate::nn::arch::uniform_params;
use crate::nn::{accuracy, apply_mask, forward_dense, init_params, softmax_cross_entropy, ModelArch, ParamSet};
use crate::protocol::{decode_mask, encode_mask, exchange, CommLedger};
use crate::rng::Stream;
use crate::topology::Graph;

const EVAL_CHUNK: usize = 256;

/// Model, datasets and per-agent shards of one run.
#[derive(Debug, Clone, Copy)]
pub struct RunData<'a> {
    pub arch: &'a ModelArch,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub plan: &'a PartitionPlan,
}

/// A run in progress. `step` advances one synchronous round; tests can
/// inspect agent states and the shared weights between rounds.
pub struct Simulation<'a> {
    hyper: HyperConfig,
    data: RunData<'a>,
    graph: &'a Graph,
    w: ParamSet,
    states: Vec<AgentState>,
    ledger: CommLedger,
    round: usize,
    pool: ThreadPool,
}

impl<'a> Simulation<'a> {
    /// Initializes shared weights, per-agent scores or private weights, and
    /// for the collaborative algorithm performs the bootstrap exchange of
    /// initial masks (ledger round 0).
    pub fn new(hyper: HyperConfig, graph: &'a Graph, data: RunData<'a>) -> Result<Self> {
        let n = graph.node_count();
        hyper.validate(n)?;
        if data.plan.agents() != n {
            return Err(Error::Config(format!("partition has {} agents, graph has {n}", data.plan.agents())));
        }
        data.arch.validate()?;
        if data.train.sample_dims() != data.arch.input || data.test.sample_dims() != data.arch.input {
            return Err(Error::Shape(format!(
                "dataset samples {:?} do not match model input {:?}",
                data.train.sample_dims(),
                data.arch.input
            )));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(hyper.workers)
            .build()
            .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?;
        let w = init_params(data.arch, hyper.seed)?;
        let algo = hyper.algorithm;
        let states = (0..n)
            .map(|i| {
                let r = hyper.retention[i];
                let z = if algo.is_mask_based() {
                    uniform_params(data.arch, hyper.seed, Stream::Scores, &[i as u64])
                } else {
                    w.clone()
                };
                let mask = MaskState::new(z, r, hyper.min_nonzero)?.with_fil_linear(hyper.fil_linear);
                let mut s = AgentState::new(i, graph.neighbors(i).to_vec(), mask, hyper.lr, hyper.lambda)?;
                s.train = data.plan.train[i].clone();
                s.test = data.plan.test[i].clone();
                if s.train.is_empty() {
                    return Err(Error::Config(format!("agent {i} has an empty training shard")));
                }
                if !algo.is_mask_based() {
                    if algo.prunes_weights() {
                        let (pruned, m) = magnitude_prune(&w, r)?;
                        s.weights = Some(pruned);
                        s.current = m;
                    } else {
                        s.weights = Some(w.clone());
                        s.current = BitMaskSet::ones_like(&w);
                    }
                    s.fil_cleared = vec![0; w.len()];
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sim = Simulation {
            hyper,
            data,
            graph,
            w,
            states,
            ledger: CommLedger::new(n),
            round: 0,
            pool,
        };
        if algo == Algorithm::Mcepl {
            sim.bootstrap()?;
        }
        Ok(sim)
    }

    fn bootstrap(&mut self) -> Result<()> {
        let frames = self
            .states
            .iter()
            .map(|s| encode_mask(&s.current, s.id, 0))
            .collect::<Result<Vec<_>>>()?;
        let inboxes = exchange(self.graph, &frames, 0, &mut self.ledger)?;
        let expected = self.data.arch.param_shapes();
        for (s, inbox) in self.states.iter_mut().zip(inboxes) {
            s.neighbor_masks = inbox
                .iter()
                .map(|f| Ok((f.sender(), decode_mask(f, &expected)?)))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    pub fn hyper(&self) -> &HyperConfig {
        &self.hyper
    }

    /// The shared frozen weights (the common initialization for weight baselines).
    pub fn shared_weights(&self) -> &ParamSet {
        &self.w
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    /// Completed training rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Runs the next round and returns per-agent batch losses.
    pub fn step(&mut self) -> Result<Vec<f64>> {
        let k = self.round + 1;
        let ctx = RoundContext {
            arch: self.data.arch,
            w: &self.w,
            graph: self.graph,
            train: self.data.train,
            seed: self.hyper.seed,
            batch_size: self.hyper.batch_size,
        };
        let (states, ledger) = (&mut self.states, &mut self.ledger);
        let losses = self.pool.install(|| match self.hyper.algorithm {
            Algorithm::Mcepl => mcepl_round(states, &ctx, k, ledger),
            other => baseline_round(other, states, &ctx, k, ledger),
        })?;
        self.round = k;
        Ok(losses)
    }

    /// Network an agent currently evaluates with.
    pub fn effective_params(&self, agent: usize) -> Result<ParamSet> {
        let s = &self.states[agent];
        match &s.weights {
            None => apply_mask(&self.w, &s.current),
            Some(w) if self.hyper.algorithm.prunes_weights() => apply_mask(w, &s.current),
            Some(w) => Ok(w.clone()),
        }
    }

    /// Test accuracy, training-shard loss and cumulative sent bits per agent.
    pub fn evaluate(&self) -> Result<EvalRecord> {
        let arch = self.data.arch;
        let scored: Vec<(f64, f64)> = self.pool.install(|| {
            (0..self.states.len())
                .into_par_iter()
                .map(|i| {
                    let s = &self.states[i];
                    let p = self.effective_params(i)?;
                    let acc = accuracy(arch, &p, &self.data.test.features, &self.data.test.labels, &s.test)?;
                    let loss = shard_loss(arch, &p, self.data.train, &s.train)?;
                    Ok((acc, loss))
                })
                .collect::<Result<_>>()
        })?;
        let traffic = self.ledger.cumulative(self.round as u64);
        let (accuracy, loss) = scored.into_iter().unzip();
        Ok(EvalRecord {
            round: self.round,
            accuracy,
            loss,
            payload_bits: traffic.iter().map(|t| t.sent_payload).collect(),
            header_bits: traffic.iter().map(|t| t.sent_header).collect(),
        })
    }

    /// Retained entries per agent and layer of the current masks.
    pub fn sparsity(&self) -> Vec<Vec<LayerSparsity>> {
        self.states
            .iter()
            .map(|s| {
                s.current
                    .iter()
                    .map(|(layer, m)| LayerSparsity {
                        layer,
                        entries: m.len(),
                        ones: m.count_ones(),
                    })
                    .collect()
            })
            .collect()
    }

    /// Runs the remaining rounds, evaluating at round 0, every
    /// `eval_interval` rounds and at the final round.
    pub fn run(mut self) -> Result<MetricsLog> {
        let mut evals = vec![self.evaluate()?];
        while self.round < self.hyper.rounds {
            self.step()?;
            if self.round % self.hyper.eval_interval == 0 || self.round == self.hyper.rounds {
                evals.push(self.evaluate()?);
            }
        }
        Ok(MetricsLog {
            algorithm: self.hyper.algorithm,
            evals,
            sparsity: self.sparsity(),
            ledger: self.ledger,
        })
    }
}

/// Mean cross-entropy over the given samples, in fixed-size chunks.
fn shard_loss(arch: &ModelArch, params: &ParamSet, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch(chunk);
        let (logits, _) = forward_dense(arch, params, &x)?;
        let (loss, _) = softmax_cross_entropy(&logits, &y)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Runs `hyper.rounds` rounds of `hyper.algorithm` and returns the log.
pub fn run(hyper: HyperConfig, graph: &Graph, data: RunData<'_>) -> Result<MetricsLog> {
    Simulation::new(hyper, graph, data)?.run()
}
