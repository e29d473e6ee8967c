use rand::Rng;

use crate::error::{Error, Result};
use crate::masking::{BitMask, BitMaskSet};
use crate::nn::arch::uniform_params;
use crate::nn::{apply_mask, forward_dense, LayerSpec, ModelArch, ParamSet, Tensor};
use crate::rng::{stream_rng, Stream};

/// Anything that maps a `[B, c, h, w]` batch to `[B, k]` outputs.
pub trait Evaluable {
    fn input_dims(&self) -> [usize; 3];
    fn output_len(&self) -> usize;
    fn eval(&self, batch: &Tensor) -> Result<Tensor>;
}

/// A dense network: architecture plus effective parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: ModelArch,
    pub params: ParamSet,
}

impl Network {
    pub fn new(arch: ModelArch, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        params.ensure_matches(&arch)?;
        Ok(Network { arch, params })
    }

    /// The subnetwork `w ⊙ m`.
    pub fn masked(arch: ModelArch, w: &ParamSet, m: &BitMaskSet) -> Result<Self> {
        let params = apply_mask(w, m)?;
        Network::new(arch, params)
    }
}

impl Evaluable for Network {
    fn input_dims(&self) -> [usize; 3] {
        self.arch.input
    }

    fn output_len(&self) -> usize {
        self.arch.classes
    }

    fn eval(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(forward_dense(&self.arch, &self.params, batch)?.0)
    }
}

/// Measured quantities of the pairwise output-distance bound on a probe set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// max over probes of ‖f1 − g1‖_max.
    pub eps1: f64,
    /// max over probes of ‖f2 − g2‖_max.
    pub eps2: f64,
    /// max over probes of ‖f1 − f2‖_max.
    pub alpha_u: f64,
    /// min over probes of ‖f1 − f2‖_max.
    pub alpha_l: f64,
    /// max over probes of ‖g1 − g2‖_max.
    pub sup_g: f64,
    /// min over probes of ‖g1 − g2‖_max.
    pub inf_g: f64,
    /// `eps1 + eps2 + alpha_u`.
    pub upper: f64,
    /// `min(|eps1 + eps2 − alpha_l|, |eps1 + eps2 − alpha_u|, alpha_l)`.
    pub lower: f64,
    pub upper_holds: bool,
    pub lower_holds: bool,
}

/// Per-sample `max_k |a[b,k] − b[b,k]|` for two `[B, k]` output tensors.
pub fn max_norm_distance(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    a.ensure_same_shape(b, "output distance")?;
    if a.shape().len() != 2 {
        return Err(Error::Shape(format!("expected [B, k] outputs, got {:?}", a.shape())));
    }
    let k = a.shape()[1];
    Ok(a
        .data()
        .chunks(k)
        .zip(b.data().chunks(k))
        .map(|(x, y)| x.iter().zip(y).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs())))
        .collect())
}

fn extremes(d: &[f64]) -> (f64, f64) {
    d.iter().fold((0.0_f64, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)))
}

/// Measures the bound quantities of `g1, g2` against `f1, f2` on `probe`.
///
/// The upper inequality is a consequence of the triangle inequality and is
/// compared with a relative slack of a few ulps to absorb rounding in the
/// three-term sum.
pub fn bound_check(
    f1: &dyn Evaluable,
    f2: &dyn Evaluable,
    g1: &dyn Evaluable,
    g2: &dyn Evaluable,
    probe: &Tensor,
) -> Result<BoundReport> {
    let dims = f1.input_dims();
    let out = f1.output_len();
    for net in [f2, g1, g2] {
        if net.input_dims() != dims || net.output_len() != out {
            return Err(Error::Shape(format!(
                "networks disagree: input {:?} / {:?}, outputs {out} / {}",
                dims,
                net.input_dims(),
                net.output_len()
            )));
        }
    }
    if probe.shape().len() != 4 || probe.shape()[1..] != dims {
        return Err(Error::Shape(format!("probe shape {:?} does not match input {dims:?}", probe.shape())));
    }
    let (yf1, yf2, yg1, yg2) = (f1.eval(probe)?, f2.eval(probe)?, g1.eval(probe)?, g2.eval(probe)?);
    let (eps1, _) = extremes(&max_norm_distance(&yf1, &yg1)?);
    let (eps2, _) = extremes(&max_norm_distance(&yf2, &yg2)?);
    let (alpha_u, alpha_l) = extremes(&max_norm_distance(&yf1, &yf2)?);
    let (sup_g, inf_g) = extremes(&max_norm_distance(&yg1, &yg2)?);
    let upper = eps1 + eps2 + alpha_u;
    let s = eps1 + eps2;
    let lower = (s - alpha_l).abs().min((s - alpha_u).abs()).min(alpha_l);
    Ok(BoundReport {
        eps1,
        eps2,
        alpha_u,
        alpha_l,
        sup_g,
        inf_g,
        upper,
        lower,
        upper_holds: sup_g <= upper + 8.0 * f64::EPSILON * upper.max(1.0),
        lower_holds: inf_g >= lower,
    })
}

/// Two target networks, two masked subnetworks of one wider random network,
/// and a probe batch.
#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub f1: Network,
    pub f2: Network,
    pub g1: Network,
    pub g2: Network,
    pub probe: Tensor,
}

fn scale_l1(params: &ParamSet) -> ParamSet {
    params.map(|t| {
        let l1: f64 = t.data().iter().map(|v| v.abs()).sum();
        let s = 1.0 / l1.max(1.0);
        t.map(|v| v * s)
    })
}

fn scale_fan_in(params: &ParamSet) -> ParamSet {
    params.map(|t| {
        let fan_in: usize = t.shape()[1..].iter().product();
        let s = 1.0 / fan_in as f64;
        t.map(|v| v * s)
    })
}

impl BoundInstance {
    /// A random instance: targets are two-layer conv nets with each layer
    /// scaled to unit ℓ1 norm; the subnetworks come from a four-layer conv
    /// net under two independent Bernoulli(1/2) masks.
    pub fn random(seed: u64, instance: u64, probes: usize) -> Result<Self> {
        if probes == 0 {
            return Err(Error::Argument("probe set must be nonempty".into()));
        }
        let input = [1, 6, 6];
        let classes = 3;
        let small = ModelArch {
            layers: vec![LayerSpec::conv(1, 2, 3, 1), LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::linear(72, classes)],
            input,
            classes,
        };
        let wide = ModelArch {
            layers: vec![
                LayerSpec::conv(1, 4, 3, 1),
                LayerSpec::Relu,
                LayerSpec::conv(4, 4, 3, 1),
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::linear(144, 16),
                LayerSpec::Relu,
                LayerSpec::linear(16, classes),
            ],
            input,
            classes,
        };
        let f1 = Network::new(small.clone(), scale_l1(&uniform_params(&small, seed, Stream::Probe, &[instance, 0])))?;
        let f2_params = scale_l1(&uniform_params(&small, seed, Stream::Probe, &[instance, 1]));
        let f2 = Network::new(small, f2_params)?;
        let w = scale_fan_in(&uniform_params(&wide, seed, Stream::Probe, &[instance, 2]));
        let mask = |which: u64| -> Result<BitMaskSet> {
            let mut rng = stream_rng(seed, Stream::Probe, &[instance, 3, which]);
            let layers = w
                .iter()
                .map(|(l, t)| {
                    let bits: Vec<bool> = (0..t.len()).map(|_| rng.gen_bool(0.5)).collect();
                    Ok((l, BitMask::from_bools(t.shape(), &bits)?))
                })
                .collect::<Result<Vec<_>>>()?;
            BitMaskSet::new(layers)
        };
        let g1 = Network::masked(wide.clone(), &w, &mask(0)?)?;
        let g2 = Network::masked(wide, &w, &mask(1)?)?;
        let mut rng = stream_rng(seed, Stream::Probe, &[instance, 4]);
        let n = probes * input.iter().product::<usize>();
        let data = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let probe = Tensor::new(vec![probes, input[0], input[1], input[2]], data)?;
        Ok(BoundInstance { f1, f2, g1, g2, probe })
    }

    pub fn check(&self) -> Result<BoundReport> {
        bound_check(&self.f1, &self.f2, &self.g1, &self.g2, &self.probe)
    }
}
