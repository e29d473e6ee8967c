//! Datasets, label-skew assignment and per-agent partitioning.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{stream_rng, Stream};

/// Labelled samples with every feature in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[samples, channels, height, width]`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.shape().len() != 4 || features.shape()[0] != labels.len() {
            return Err(Error::Shape(format!(
                "features {:?} vs {} labels",
                features.shape(),
                labels.len()
            )));
        }
        if let Some(v) = features.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("feature value {v} outside [0, 1]")));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Argument(format!("label {y} outside [0, {classes})")));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[channels, height, width]` of one sample.
    pub fn sample_dims(&self) -> [usize; 3] {
        let s = self.features.shape();
        [s[1], s[2], s[3]]
    }

    /// Indices of samples with label `y`, ascending.
    pub fn indices_of(&self, y: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == y)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.features.gather(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Class-prototype data: each class has a fixed random prototype in
/// [0.25, 0.75]^dims, and samples add uniform noise on [-noise, noise]
/// clipped to [0, 1]. Each class is split 80/20 into train and test.
pub fn synth_generate(classes: usize, dims: [usize; 3], per_class: usize, noise: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if classes < 2 {
        return Err(Error::Argument(format!("need at least 2 classes, got {classes}")));
    }
    if per_class < 2 {
        return Err(Error::Argument(format!("need at least 2 samples per class, got {per_class}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::Argument(format!("noise must be finite and nonnegative, got {noise}")));
    }
    if dims.contains(&0) {
        return Err(Error::Argument(format!("empty sample dims {dims:?}")));
    }
    let dim: usize = dims.iter().product();
    let n_train = (per_class * 4 / 5).clamp(1, per_class - 1);
    let (mut train_x, mut train_y, mut test_x, mut test_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for class in 0..classes {
        let mut proto_rng = stream_rng(seed, Stream::Dataset, &[0, class as u64]);
        let proto: Vec<f64> = (0..dim).map(|_| proto_rng.gen_range(0.25..=0.75)).collect();
        let mut rng = stream_rng(seed, Stream::Dataset, &[1, class as u64]);
        for s in 0..per_class {
            let (xs, ys) = if s < n_train {
                (&mut train_x, &mut train_y)
            } else {
                (&mut test_x, &mut test_y)
            };
            for &p in &proto {
                let e = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                xs.push((p + e).clamp(0.0, 1.0));
            }
            ys.push(class);
        }
    }
    let shape = |n: usize| vec![n, dims[0], dims[1], dims[2]];
    let train = Dataset::new(Tensor::new(shape(train_y.len()), train_x)?, train_y, classes)?;
    let test = Dataset::new(Tensor::new(shape(test_y.len()), test_x)?, test_y, classes)?;
    Ok((train, test))
}

/// Draws `c` distinct labels per agent, uniformly and independently,
/// redrawing the whole assignment (up to 100 times) until every label has
/// at least one holder. Sets are returned sorted.
pub fn assign_labels(agents: usize, classes: usize, c: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if c == 0 || c > classes {
        return Err(Error::Argument(format!("labels per agent {c} outside [1, {classes}]")));
    }
    if agents * c < classes {
        return Err(Error::Argument(format!(
            "{agents} agents × {c} labels cannot cover {classes} classes"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Labels, &[]);
    for _ in 0..100 {
        let sets: Vec<Vec<usize>> = (0..agents)
            .map(|_| {
                let mut s = index::sample(&mut rng, classes, c).into_vec();
                s.sort_unstable();
                s
            })
            .collect();
        let mut covered = vec![false; classes];
        sets.iter().flatten().for_each(|&y| covered[y] = true);
        if covered.iter().all(|&b| b) {
            return Ok(sets);
        }
    }
    Err(Error::Argument(format!(
        "no label assignment covering all {classes} classes within 100 draws"
    )))
}

/// Per-agent label sets and sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub labels: Vec<Vec<usize>>,
    /// Train indices per agent, ascending.
    pub train: Vec<Vec<usize>>,
    /// Test indices per agent, ascending.
    pub test: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn agents(&self) -> usize {
        self.labels.len()
    }
}

/// Splits each label's train samples as evenly as possible among its
/// holders (the first `len % holders` holders get one extra), after a
/// seeded shuffle. Every holder gets all test samples of the label.
pub fn partition(train: &Dataset, test: &Dataset, labels: &[Vec<usize>], seed: u64) -> Result<PartitionPlan> {
    let classes = train.classes.max(test.classes);
    let mut holders = vec![Vec::new(); classes];
    for (agent, set) in labels.iter().enumerate() {
        let mut seen = vec![false; classes];
        for &y in set {
            if y >= classes {
                return Err(Error::Argument(format!("agent {agent} holds label {y} outside [0, {classes})")));
            }
            if std::mem::replace(&mut seen[y], true) {
                return Err(Error::Argument(format!("agent {agent} holds label {y} twice")));
            }
            holders[y].push(agent);
        }
    }
    let mut plan = PartitionPlan {
        labels: labels.iter().map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s
        }).collect(),
        train: vec![Vec::new(); labels.len()],
        test: vec![Vec::new(); labels.len()],
    };
    for (y, hs) in holders.iter().enumerate() {
        if hs.is_empty() {
            return Err(Error::Argument(format!("label {y} has no holder")));
        }
        let mut idx = train.indices_of(y);
        let mut rng = stream_rng(seed, Stream::Partition, &[y as u64]);
        idx.shuffle(&mut rng);
        let (base, extra) = (idx.len() / hs.len(), idx.len() % hs.len());
        let mut start = 0;
        for (k, &agent) in hs.iter().enumerate() {
            let size = base + usize::from(k < extra);
            plan.train[agent].extend_from_slice(&idx[start..start + size]);
            start += size;
        }
        let test_idx = test.indices_of(y);
        for &agent in hs {
            plan.test[agent].extend_from_slice(&test_idx);
        }
    }
    for v in plan.train.iter_mut().chain(plan.test.iter_mut()) {
        v.sort_unstable();
    }
    Ok(plan)
}

const CIFAR_RECORD: usize = 3073;
const CIFAR_PIXELS: usize = 3072;

/// Reads one CIFAR-10 binary batch: records of one label byte followed by
/// 3072 channel-major pixel bytes.
pub fn read_cifar_batch(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::Input {
        file: path.to_path_buf(),
        offset: None,
        message: e.to_string(),
    })?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(Error::Input {
            file: path.to_path_buf(),
            offset: Some(whole as u64),
            message: format!("truncated record: {} bytes is not a positive multiple of {CIFAR_RECORD}", bytes.len()),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut features = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::Input {
                file: path.to_path_buf(),
                offset: Some((r * CIFAR_RECORD) as u64),
                message: format!("label byte {} is not a CIFAR-10 class", rec[0]),
            });
        }
        labels.push(rec[0] as usize);
        features.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], features)?, labels, 10)
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut parts = Vec::new();
    for i in 1..=5 {
        parts.push(read_cifar_batch(&dir.join(format!("data_batch_{i}.bin")))?);
    }
    let test = read_cifar_batch(&dir.join("test_batch.bin"))?;
    Ok((concat(parts)?, test))
}

fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut shape = parts[0].features.shape().to_vec();
    for p in parts {
        labels.extend(p.labels);
        features.extend(p.features.into_data());
    }
    shape[0] = labels.len();
    Dataset::new(Tensor::new(shape, features)?, labels, 10)
}
