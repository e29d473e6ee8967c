use crate::error::{Error, Result};
use crate::masking::{group_lasso_grad, BitMaskSet, MaskState};
use crate::nn::{grad_z_set, loss_and_grad_v, ModelArch, ParamSet, Tensor};

/// Everything one agent keeps between rounds.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    /// Sorted ids of the agents this one hears from.
    pub neighbors: Vec<usize>,
    pub mask: MaskState,
    /// Score gradient of the latest back-propagation step, reused by the
    /// fine-tuning step of the same round.
    pub grad_cache: Option<ParamSet>,
    /// Mask used by the next forward pass.
    pub current: BitMaskSet,
    /// Masks received during the previous exchange, ascending sender id.
    pub neighbor_masks: Vec<(usize, BitMaskSet)>,
    /// Bits the filter rule cleared per layer in the latest extraction.
    pub fil_cleared: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub lr: f64,
    pub lambda: f64,
    /// Private real-valued weights (weight-based baselines only).
    pub weights: Option<ParamSet>,
}

impl AgentState {
    /// A mask-learning agent whose initial mask is extracted from `mask.z`.
    pub fn new(id: usize, neighbors: Vec<usize>, mask: MaskState, lr: f64, lambda: f64) -> Result<Self> {
        let (current, fil_cleared) = mask.extract_reporting(&mask.z)?;
        Ok(AgentState {
            id,
            neighbors,
            mask,
            grad_cache: None,
            current,
            neighbor_masks: Vec::new(),
            fil_cleared,
            train: Vec::new(),
            test: Vec::new(),
            lr,
            lambda,
            weights: None,
        })
    }

    /// Back-propagation half-step.
    ///
    /// Computes `G = grad_v ⊙ w ⊙ sign(z) + ∇R(z)` with the current mask,
    /// moves `z ← z − ηG`, caches `G`, and returns the intermediate mask
    /// extracted from the aggregation tensor built on the masks received in
    /// the previous exchange. Also returns the batch loss.
    pub fn backprop_half_step(&mut self, w: &ParamSet, arch: &ModelArch, batch: &Tensor, labels: &[usize]) -> Result<(f64, BitMaskSet)> {
        if labels.is_empty() {
            return Err(Error::Config(format!("agent {} has an empty training batch", self.id)));
        }
        let (loss, grad_v) = loss_and_grad_v(arch, w, &self.current, batch, labels)?;
        let mut g = grad_z_set(&grad_v, w, &self.mask.z)?;
        if self.lambda > 0.0 {
            g.axpy(1.0, &group_lasso_grad(&self.mask.z, self.lambda)?)?;
        }
        self.mask.z.axpy(-self.lr, &g)?;
        self.grad_cache = Some(g);
        let avg = neighbor_average(&self.neighbor_masks, &self.mask.z)?;
        let y = aggregation_tensor(&self.mask.z, &avg)?;
        let half = self.mask.extract_from(&y)?;
        Ok((loss, half))
    }

    fn check_received(&self, received: &[(usize, BitMaskSet)]) -> Result<()> {
        let senders: Vec<usize> = received.iter().map(|(s, _)| *s).collect();
        if senders != self.neighbors {
            return Err(Error::Simulation(format!(
                "agent {} expected masks from {:?}, got {senders:?}",
                self.id, self.neighbors
            )));
        }
        Ok(())
    }

    /// Personalized fine-tuning: `z ← z − η G ⊙ avg(received)` with the
    /// cached `G`. No new gradient is computed.
    pub fn fine_tune_step(&mut self, received: &[(usize, BitMaskSet)]) -> Result<()> {
        self.check_received(received)?;
        let g = self
            .grad_cache
            .as_ref()
            .ok_or_else(|| Error::Simulation(format!("agent {} fine-tunes before back-propagation", self.id)))?;
        let avg = neighbor_average(received, &self.mask.z)?;
        let lr = self.lr;
        for ((z, g), a) in self.mask.z.tensors_mut().iter_mut().zip(g.tensors()).zip(avg.tensors()) {
            for ((zi, gi), ai) in z.data_mut().iter_mut().zip(g.data()).zip(a.data()) {
                *zi -= lr * gi * ai;
            }
        }
        Ok(())
    }

    /// Aggregation: extracts the new mask from `z + mean|z|·sign(z) ⊙
    /// avg(received)` and keeps `received` for the next round's half-step.
    pub fn aggregate_step(&mut self, received: Vec<(usize, BitMaskSet)>) -> Result<&BitMaskSet> {
        self.check_received(&received)?;
        let avg = neighbor_average(&received, &self.mask.z)?;
        let y = aggregation_tensor(&self.mask.z, &avg)?;
        let (m, cleared) = self.mask.extract_reporting(&y)?;
        self.current = m;
        self.fil_cleared = cleared;
        self.neighbor_masks = received;
        Ok(&self.current)
    }
}

/// Entry-wise mean of the given masks as 0/1 reals, shaped like
/// `template`. Summed in slice order; an empty list averages to zero.
pub fn neighbor_average(masks: &[(usize, BitMaskSet)], template: &ParamSet) -> Result<ParamSet> {
    let mut sum = template.map(|t| Tensor::zeros(t.shape()));
    if masks.is_empty() {
        return Ok(sum);
    }
    for (sender, m) in masks {
        m.ensure_matches(template).map_err(|e| Error::Simulation(format!("mask from agent {sender}: {e}")))?;
        for (acc, mask) in sum.tensors_mut().iter_mut().zip(m.masks()) {
            for (i, v) in acc.data_mut().iter_mut().enumerate() {
                if mask.get(i) {
                    *v += 1.0;
                }
            }
        }
    }
    let inv = masks.len() as f64;
    Ok(sum.map(|t| t.map(|v| v / inv)))
}

/// `y_l = z_l + mean(|z_l|) · sign(z_l) ⊙ avg_l`, per layer.
pub fn aggregation_tensor(z: &ParamSet, avg: &ParamSet) -> Result<ParamSet> {
    z.zip_map(avg, |zt, at| {
        let amp = zt.mean_abs();
        let data = zt
            .data()
            .iter()
            .zip(at.data())
            .map(|(&zi, &ai)| {
                let s = if zi > 0.0 {
                    1.0
                } else if zi < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                zi + amp * s * ai
            })
            .collect();
        Tensor::new(zt.shape().to_vec(), data)
    })
}
