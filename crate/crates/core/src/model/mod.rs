//! Linear softmax head over embeddings, trained with mini-batch
//! cross-entropy and Adam, with early stopping on dev loss.

mod adam;
mod artifact;
mod head;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use artifact::{load_artifact, save_artifact, ModelArtifact, ARTIFACT_FORMAT};
pub use head::{softmax, LinearHead, LossGrad, Probabilities};

use crate::corpus::{Dataset, Label, Splits};
use crate::embed::{embed_batch, EmbedError, EmbeddingVector, Encoder};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("input has dimension {found}, head expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("threshold {0} outside [0,1]")]
    Threshold(f64),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("comment {0:?} has no label")]
    Unlabeled(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("version {0} already stored with different content")]
    VersionCollision(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving dev evaluations tolerated before stopping;
    /// 0 stops at the first non-improving evaluation.
    pub patience: usize,
    pub seed: u64,
    /// Optimizer steps between dev evaluations; `None` evaluates once per epoch.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-2,
            max_epochs: 50,
            patience: 3,
            seed: 0,
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.eval_every == Some(0) {
            return Err(ModelError::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub epoch: usize,
    pub step: u64,
    pub dev_loss: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub evaluations: Vec<Evaluation>,
    pub best_dev_loss: f64,
    pub epochs_run: usize,
    pub steps: u64,
}

type Example = (EmbeddingVector, Label);

fn examples(d: &Dataset, encoder: &dyn Encoder) -> Result<Vec<Example>, ModelError> {
    let vectors = embed_batch(d.iter(), encoder)?;
    d.iter()
        .map(|c| {
            let label = c.label.ok_or_else(|| ModelError::Unlabeled(c.id.clone()))?;
            Ok((vectors[&c.id].clone(), label))
        })
        .collect()
}

fn mean_loss(head: &LinearHead, data: &[Example]) -> Result<f64, ModelError> {
    let batch: Vec<(&EmbeddingVector, Label)> = data.iter().map(|(x, y)| (x, *y)).collect();
    Ok(head.loss_and_grad(&batch)?.loss)
}

pub fn train(
    splits: &Splits,
    encoder: &dyn Encoder,
    cfg: &TrainConfig,
    created_at: DateTime<Utc>,
) -> Result<ModelArtifact, ModelError> {
    train_datasets(&splits.train, &splits.dev, encoder, cfg, created_at).map(|(a, _)| a)
}

/// Trains on `train`, early-stops on `dev` and returns the artifact holding
/// the parameters with the lowest dev loss, plus the evaluation trace.
pub fn train_datasets(
    train: &Dataset,
    dev: &Dataset,
    encoder: &dyn Encoder,
    cfg: &TrainConfig,
    created_at: DateTime<Utc>,
) -> Result<(ModelArtifact, TrainTrace), ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(ModelError::EmptySplit("dev"));
    }
    let train_set = examples(train, encoder)?;
    let dev_set = examples(dev, encoder)?;

    let mut head = LinearHead::zeros(encoder.dim());
    let mut params = head.params();
    let mut state = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = head.clone();
    let mut trace = TrainTrace {
        best_dev_loss: f64::INFINITY,
        ..TrainTrace::default()
    };
    let mut since_improvement = 0usize;

    'epochs: for epoch in 0..cfg.max_epochs {
        trace.epochs_run = epoch + 1;
        order.shuffle(&mut rng);
        let n_batches = order.len().div_ceil(cfg.batch_size);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&EmbeddingVector, Label)> = chunk
                .iter()
                .map(|&i| (&train_set[i].0, train_set[i].1))
                .collect();
            let lg = head.loss_and_grad(&batch)?;
            if !lg.loss.is_finite() {
                return Err(ModelError::NonFinite(format!(
                    "training loss at epoch {epoch}, step {}",
                    state.t
                )));
            }
            let mut grads = lg.grad_weights;
            grads.extend_from_slice(&lg.grad_bias);
            adam_step(&mut params, &grads, &mut state, cfg.learning_rate)?;
            head.set_params(&params);

            let due = match cfg.eval_every {
                Some(k) => state.t % k as u64 == 0,
                None => b + 1 == n_batches,
            };
            if !due {
                continue;
            }
            let dev_loss = mean_loss(&head, &dev_set)?;
            if !dev_loss.is_finite() {
                return Err(ModelError::NonFinite(format!(
                    "dev loss at step {}",
                    state.t
                )));
            }
            let improved = dev_loss < trace.best_dev_loss;
            trace.evaluations.push(Evaluation {
                epoch,
                step: state.t,
                dev_loss,
                improved,
            });
            if improved {
                trace.best_dev_loss = dev_loss;
                best = head.clone();
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= cfg.patience {
                    break 'epochs;
                }
            }
        }
    }
    trace.steps = state.t;

    let artifact = ModelArtifact::new(
        best,
        None,
        encoder.config().clone(),
        created_at,
        train.name.clone(),
    )?;
    Ok((artifact, trace))
}
