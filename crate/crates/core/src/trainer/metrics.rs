use std::fmt::Write as _;

use super::Algorithm;
use crate::protocol::CommLedger;

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub round: usize,
    /// Test accuracy per agent.
    pub accuracy: Vec<f64>,
    /// Mean cross-entropy on each agent's training shard.
    pub loss: Vec<f64>,
    /// Cumulative payload bits sent, per agent.
    pub payload_bits: Vec<u64>,
    /// Cumulative header bits sent, per agent.
    pub header_bits: Vec<u64>,
}

impl EvalRecord {
    pub fn mean_accuracy(&self) -> f64 {
        mean(&self.accuracy)
    }

    pub fn mean_loss(&self) -> f64 {
        mean(&self.loss)
    }

    pub fn total_payload_bits(&self) -> u64 {
        self.payload_bits.iter().sum()
    }

    pub fn total_header_bits(&self) -> u64 {
        self.header_bits.iter().sum()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSparsity {
    pub layer: usize,
    pub entries: usize,
    pub ones: usize,
}

impl LayerSparsity {
    /// Fraction of retained entries.
    pub fn density(&self) -> f64 {
        self.ones as f64 / self.entries as f64
    }
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub algorithm: Algorithm,
    pub evals: Vec<EvalRecord>,
    /// Final retained entries per agent and layer.
    pub sparsity: Vec<Vec<LayerSparsity>>,
    pub ledger: CommLedger,
}

impl MetricsLog {
    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }

    pub fn final_mean_accuracy(&self) -> f64 {
        self.final_eval().map_or(0.0, EvalRecord::mean_accuracy)
    }

    /// `round,agent,accuracy,loss,payload_bits,header_bits`, sorted by
    /// (round, agent). Agent `-1` is the network row: mean accuracy and
    /// loss, total bits.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("round,agent,accuracy,loss,payload_bits,header_bits\n");
        for e in &self.evals {
            let _ = writeln!(
                s,
                "{},-1,{},{},{},{}",
                e.round,
                e.mean_accuracy(),
                e.mean_loss(),
                e.total_payload_bits(),
                e.total_header_bits()
            );
            for a in 0..e.accuracy.len() {
                let _ = writeln!(
                    s,
                    "{},{a},{},{},{},{}",
                    e.round, e.accuracy[a], e.loss[a], e.payload_bits[a], e.header_bits[a]
                );
            }
        }
        s
    }

    /// `agent,layer,entries,ones,density`.
    pub fn sparsity_csv(&self) -> String {
        let mut s = String::from("agent,layer,entries,ones,density\n");
        for (a, layers) in self.sparsity.iter().enumerate() {
            for l in layers {
                let _ = writeln!(s, "{a},{},{},{},{}", l.layer, l.entries, l.ones, l.density());
            }
        }
        s
    }
}
