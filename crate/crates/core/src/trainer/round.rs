use rayon::prelude::*;

use super::{AgentState, Algorithm};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::masking::{group_lasso_grad, threshold_layer, BitMaskSet};
use crate::nn::{grad_z_set, loss_and_grad, loss_and_grad_v, ModelArch, ParamSet, Tensor};
use crate::protocol::{account_real_bits, decode_mask, encode_mask, exchange, header_bits, CommLedger};
use crate::rng::{stream_rng, Stream};
use crate::topology::Graph;

/// Read-only inputs shared by every agent in a round.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub arch: &'a ModelArch,
    /// Shared frozen weights.
    pub w: &'a ParamSet,
    pub graph: &'a Graph,
    pub train: &'a Dataset,
    pub seed: u64,
    pub batch_size: usize,
}

/// Training-shard positions drawn without replacement for `(agent, round)`.
pub fn sample_batch(seed: u64, agent: usize, round: usize, shard: &[usize], batch_size: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Batches, &[agent as u64, round as u64]);
    let take = batch_size.min(shard.len());
    rand::seq::index::sample(&mut rng, shard.len(), take)
        .into_iter()
        .map(|p| shard[p])
        .collect()
}

fn agent_batch(ctx: &RoundContext<'_>, state: &AgentState, round: usize) -> Result<(Tensor, Vec<usize>)> {
    if state.train.is_empty() {
        return Err(Error::Config(format!("agent {} has an empty training shard", state.id)));
    }
    let idx = sample_batch(ctx.seed, state.id, round, &state.train, ctx.batch_size);
    Ok(ctx.train.batch(&idx))
}

/// One synchronous round of the collaborative algorithm: every agent
/// back-propagates and emits an intermediate mask, frames are exchanged,
/// then every agent fine-tunes and aggregates. Returns the batch losses.
pub fn mcepl_round(states: &mut [AgentState], ctx: &RoundContext<'_>, round: usize, ledger: &mut CommLedger) -> Result<Vec<f64>> {
    let frame_round = u32::try_from(round).map_err(|_| Error::Argument(format!("round {round} exceeds u32")))?;
    let half: Vec<(f64, _)> = states
        .par_iter_mut()
        .map(|s| {
            let (x, y) = agent_batch(ctx, s, round)?;
            let (loss, m) = s.backprop_half_step(ctx.w, ctx.arch, &x, &y)?;
            Ok((loss, encode_mask(&m, s.id, frame_round)?))
        })
        .collect::<Result<_>>()?;
    let (losses, frames): (Vec<f64>, Vec<_>) = half.into_iter().unzip();
    let inboxes = exchange(ctx.graph, &frames, round as u64, ledger)?;
    let expected = ctx.arch.param_shapes();
    states
        .par_iter_mut()
        .zip(inboxes)
        .map(|(s, inbox)| {
            let received = inbox
                .iter()
                .map(|f| Ok((f.sender(), decode_mask(f, &expected)?)))
                .collect::<Result<Vec<_>>>()?;
            s.fine_tune_step(&received)?;
            s.aggregate_step(received)?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(losses)
}

/// Keeps the `max(1, round(r·n))` largest-magnitude weights of each layer.
pub fn magnitude_prune(params: &ParamSet, r: f64) -> Result<(ParamSet, BitMaskSet)> {
    let masks = params
        .iter()
        .map(|(l, t)| Ok((l, threshold_layer(t, r)?)))
        .collect::<Result<Vec<_>>>()?;
    let masks = BitMaskSet::new(masks)?;
    Ok((crate::nn::apply_mask(params, &masks)?, masks))
}

/// One round of a baseline algorithm. Returns the batch losses.
pub fn baseline_round(
    kind: Algorithm,
    states: &mut [AgentState],
    ctx: &RoundContext<'_>,
    round: usize,
    ledger: &mut CommLedger,
) -> Result<Vec<f64>> {
    match kind {
        Algorithm::Mcepl => Err(Error::Argument("mcepl is not a baseline; use mcepl_round".into())),
        Algorithm::IndMask => states.par_iter_mut().map(|s| ind_mask_step(s, ctx, round)).collect(),
        _ => {
            let losses: Vec<f64> = states
                .par_iter_mut()
                .map(|s| sgd_step(kind, s, ctx, round))
                .collect::<Result<_>>()?;
            if kind.communicates() {
                average_weights(kind, states, ctx.graph, round, ledger)?;
            }
            Ok(losses)
        }
    }
}

fn ind_mask_step(s: &mut AgentState, ctx: &RoundContext<'_>, round: usize) -> Result<f64> {
    let (x, y) = agent_batch(ctx, s, round)?;
    let (loss, grad_v) = loss_and_grad_v(ctx.arch, ctx.w, &s.current, &x, &y)?;
    let mut g = grad_z_set(&grad_v, ctx.w, &s.mask.z)?;
    if s.lambda > 0.0 {
        g.axpy(1.0, &group_lasso_grad(&s.mask.z, s.lambda)?)?;
    }
    s.mask.z.axpy(-s.lr, &g)?;
    let (m, cleared) = s.mask.extract_reporting(&s.mask.z)?;
    s.current = m;
    s.fil_cleared = cleared;
    s.grad_cache = Some(g);
    Ok(loss)
}

fn sgd_step(kind: Algorithm, s: &mut AgentState, ctx: &RoundContext<'_>, round: usize) -> Result<f64> {
    let (x, y) = agent_batch(ctx, s, round)?;
    let w = s
        .weights
        .as_mut()
        .ok_or_else(|| Error::Config(format!("agent {} has no private weights for {kind}", s.id)))?;
    let (loss, grad) = loss_and_grad(ctx.arch, w, &x, &y)?;
    w.axpy(-s.lr, &grad)?;
    if kind.prunes_weights() {
        let (pruned, mask) = magnitude_prune(w, s.mask.retention())?;
        *w = pruned;
        s.current = mask;
    }
    Ok(loss)
}

/// Neighbor averaging for the weight-sharing baselines. Each agent
/// transmits its full (pruned) weight tensor set to every neighbor.
fn average_weights(kind: Algorithm, states: &mut [AgentState], graph: &Graph, round: usize, ledger: &mut CommLedger) -> Result<()> {
    let snapshot: Vec<(ParamSet, BitMaskSet)> = states
        .iter()
        .map(|s| (s.weights.clone().expect("checked by sgd_step"), s.current.clone()))
        .collect();
    for s in states.iter() {
        let (w, _) = &snapshot[s.id];
        for &j in graph.neighbors(s.id) {
            ledger.record(round as u64, s.id, j, account_real_bits(w), header_bits(w.len()));
        }
    }
    states.par_iter_mut().for_each(|s| {
        let mut group: Vec<usize> = graph.neighbors(s.id).to_vec();
        group.push(s.id);
        group.sort_unstable();
        let w = s.weights.as_mut().expect("checked by sgd_step");
        for (li, t) in w.tensors_mut().iter_mut().enumerate() {
            for (c, v) in t.data_mut().iter_mut().enumerate() {
                match kind {
                    Algorithm::ParWeipru => {
                        if !snapshot[s.id].1.masks()[li].get(c) {
                            continue;
                        }
                        let (mut sum, mut count) = (0.0, 0usize);
                        for &j in &group {
                            if snapshot[j].1.masks()[li].get(c) {
                                sum += snapshot[j].0.tensors()[li].data()[c];
                                count += 1;
                            }
                        }
                        *v = sum / count as f64;
                    }
                    _ => {
                        let sum: f64 = group.iter().map(|&j| snapshot[j].0.tensors()[li].data()[c]).sum();
                        *v = sum / group.len() as f64;
                    }
                }
            }
        }
    });
    Ok(())
}
