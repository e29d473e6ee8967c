use rayon::prelude::*;

use super::round::sample_batch;
use crate::data::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::masking::{group_lasso_grad, MaskState};
use crate::nn::arch::uniform_params;
use crate::nn::{accuracy, apply_mask, grad_z_set, init_params, loss_and_grad, loss_and_grad_v, ModelArch, ParamSet};
use crate::rng::Stream;

/// Settings for the fixed-initialization comparison of weight training
/// against mask-only training.
#[derive(Debug, Clone, PartialEq)]
pub struct DslthConfig {
    /// Retention ratios of the mask arms.
    pub ratios: Vec<f64>,
    /// Update steps per arm.
    pub steps: usize,
    pub eval_interval: usize,
    pub weight_lr: f64,
    pub mask_lr: f64,
    pub lambda: f64,
    pub min_nonzero: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DslthConfig {
    fn default() -> Self {
        DslthConfig {
            ratios: vec![0.1, 0.3, 0.5],
            steps: 300,
            eval_interval: 3,
            weight_lr: 0.001,
            mask_lr: 1.0,
            lambda: 0.0,
            min_nonzero: 0,
            batch_size: 128,
            seed: 1,
        }
    }
}

impl DslthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 || self.batch_size == 0 {
            return Err(Error::Config("eval interval and batch size must be at least 1".into()));
        }
        for lr in [self.weight_lr, self.mask_lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("retention ratio {r} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Accuracy traces of one agent: the weight arm and one mask arm per ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrace {
    pub agent: usize,
    pub weight: Vec<f64>,
    /// `(ratio, trace)` in configured ratio order.
    pub masks: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DslthReport {
    /// Step index of every trace entry.
    pub eval_steps: Vec<usize>,
    pub agents: Vec<AgentTrace>,
}

impl DslthReport {
    /// Mean over agents of the final weight-arm accuracy.
    pub fn final_weight_accuracy(&self) -> f64 {
        mean(self.agents.iter().map(|a| *a.weight.last().unwrap_or(&0.0)))
    }

    /// Mean over agents of the final accuracy of the mask arm at `ratio`.
    pub fn final_mask_accuracy(&self, ratio: f64) -> Option<f64> {
        let finals: Option<Vec<f64>> = self
            .agents
            .iter()
            .map(|a| a.masks.iter().find(|(r, _)| *r == ratio).and_then(|(_, t)| t.last().copied()))
            .collect();
        finals.map(|f| mean(f.into_iter()))
    }

    /// `step,agent,arm,ratio,accuracy`; the weight arm has ratio 1.
    pub fn csv(&self) -> String {
        let mut out = String::from("step,agent,arm,ratio,accuracy\n");
        for a in &self.agents {
            for (i, step) in self.eval_steps.iter().enumerate() {
                out.push_str(&format!("{step},{},weight,1,{}\n", a.agent, a.weight[i]));
                for (r, t) in &a.masks {
                    out.push_str(&format!("{step},{},mask,{r},{}\n", a.agent, t[i]));
                }
            }
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

enum Arm {
    Weight,
    Mask(f64),
}

/// Trains every agent independently on its own shard, once by SGD on the
/// weights and once per ratio by mask learning over the same frozen
/// initialization. All arms see the same batch sequence.
pub fn dslth_verify(
    arch: &ModelArch,
    train: &Dataset,
    test: &Dataset,
    plan: &PartitionPlan,
    config: &DslthConfig,
) -> Result<DslthReport> {
    config.validate()?;
    arch.validate()?;
    let w = init_params(arch, config.seed)?;
    let jobs: Vec<(usize, Arm)> = (0..plan.agents())
        .flat_map(|a| std::iter::once((a, Arm::Weight)).chain(config.ratios.iter().map(move |&r| (a, Arm::Mask(r)))))
        .collect();
    let traces: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|(agent, arm)| {
            let shard = &plan.train[*agent];
            if shard.is_empty() {
                return Err(Error::Config(format!("agent {agent} has an empty training shard")));
            }
            let eval = |p: &ParamSet| accuracy(arch, p, &test.features, &test.labels, &plan.test[*agent]);
            let batch = |k: usize| train.batch(&sample_batch(config.seed, *agent, k, shard, config.batch_size));
            let mut trace = Vec::with_capacity(config.steps / config.eval_interval + 1);
            match arm {
                Arm::Weight => {
                    let mut v = w.clone();
                    trace.push(eval(&v)?);
                    for k in 1..=config.steps {
                        let (x, y) = batch(k);
                        let (_, g) = loss_and_grad(arch, &v, &x, &y)?;
                        v.axpy(-config.weight_lr, &g)?;
                        if k % config.eval_interval == 0 {
                            trace.push(eval(&v)?);
                        }
                    }
                }
                Arm::Mask(r) => {
                    let z = uniform_params(arch, config.seed, Stream::Scores, &[*agent as u64]);
                    let mut state = MaskState::new(z, *r, config.min_nonzero)?;
                    let mut m = state.extract_from(&state.z)?;
                    trace.push(eval(&apply_mask(&w, &m)?)?);
                    for k in 1..=config.steps {
                        let (x, y) = batch(k);
                        let (_, gv) = loss_and_grad_v(arch, &w, &m, &x, &y)?;
                        let mut g = grad_z_set(&gv, &w, &state.z)?;
                        if config.lambda > 0.0 {
                            g.axpy(1.0, &group_lasso_grad(&state.z, config.lambda)?)?;
                        }
                        state.z.axpy(-config.mask_lr, &g)?;
                        m = state.extract_from(&state.z)?;
                        if k % config.eval_interval == 0 {
                            trace.push(eval(&apply_mask(&w, &m)?)?);
                        }
                    }
                }
            }
            Ok(trace)
        })
        .collect::<Result<_>>()?;
    let per_agent = 1 + config.ratios.len();
    let agents = traces
        .chunks(per_agent)
        .enumerate()
        .map(|(agent, t)| AgentTrace {
            agent,
            weight: t[0].clone(),
            masks: config.ratios.iter().copied().zip(t[1..].iter().cloned()).collect(),
        })
        .collect();
    Ok(DslthReport {
        eval_steps: (0..=config.steps).step_by(config.eval_interval).collect(),
        agents,
    })
}
