use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::Label;
use crate::embed::EmbeddingVector;

/// Two-class linear layer: `z = W x + b`, `W` stored row-major (row 0 =
/// negative class, row 1 = positive class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probabilities {
    pub negative: f64,
    pub positive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: [f64; 2],
}

impl LinearHead {
    pub fn zeros(dim: usize) -> Self {
        LinearHead {
            dim,
            weights: vec![0.0; 2 * dim],
            bias: [0.0; 2],
        }
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }

    /// Parameters flattened as weights followed by bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.weights.len();
        self.weights.copy_from_slice(&p[..n]);
        self.bias = [p[n], p[n + 1]];
    }

    fn logits(&self, x: &[f64]) -> [f64; 2] {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        [
            dot(self.row(0)) + self.bias[0],
            dot(self.row(1)) + self.bias[1],
        ]
    }

    fn check(&self, x: &EmbeddingVector) -> Result<(), ModelError> {
        if x.dim() != self.dim {
            return Err(ModelError::Dimension {
                expected: self.dim,
                found: x.dim(),
            });
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("input vector".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &EmbeddingVector) -> Result<Probabilities, ModelError> {
        self.check(x)?;
        let [p_neg, p_pos] = softmax(self.logits(x.as_slice()));
        Ok(Probabilities {
            negative: p_neg,
            positive: p_pos,
        })
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[(&EmbeddingVector, Label)],
    ) -> Result<LossGrad, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut loss = 0.0;
        let mut grad_weights = vec![0.0; self.weights.len()];
        let mut grad_bias = [0.0; 2];
        let scale = 1.0 / batch.len() as f64;
        for (x, label) in batch {
            self.check(x)?;
            let z = self.logits(x.as_slice());
            let p = softmax(z);
            let y = label.index();
            loss -= log_softmax(z)[y];
            for class in 0..2 {
                let delta = (p[class] - if class == y { 1.0 } else { 0.0 }) * scale;
                grad_bias[class] += delta;
                let row = &mut grad_weights[class * self.dim..(class + 1) * self.dim];
                for (g, xi) in row.iter_mut().zip(x.as_slice()) {
                    *g += delta * xi;
                }
            }
        }
        Ok(LossGrad {
            loss: loss * scale,
            grad_weights,
            grad_bias,
        })
    }
}

pub fn softmax(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn log_softmax(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    [z[0] - lse, z[1] - lse]
}
