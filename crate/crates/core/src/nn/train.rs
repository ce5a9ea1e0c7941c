use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::ortho::OrthoConfig;

use super::{accuracy_from_logits, backward, cross_entropy, DenseMatrix, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub ortho: OrthoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-2,
            hidden: 16,
            seed: 0,
            weight_decay: 5e-4,
            ortho: OrthoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("train.hidden must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.weight_decay must be non-negative".into()));
        }
        self.ortho.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub history: Vec<EpochRecord>,
}

struct Adam {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(layers: &[DenseMatrix]) -> Self {
        let zeros = || layers.iter().map(|w| DenseMatrix::zeros(w.rows(), w.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [DenseMatrix], grads: &[DenseMatrix], lr: f64, weight_decay: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let p = p.as_mut_slice();
            let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
            for (k, &gk) in g.as_slice().iter().enumerate() {
                let gk = gk + weight_decay * p[k];
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * gk;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * gk * gk;
                p[k] -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + EPS);
            }
        }
    }
}

/// Full-batch Adam on the cross-entropy of the training nodes.
///
/// With `model.gcorn` the projection runs inside every forward pass and the
/// gradient is taken through the unrolled Björck iterations. The returned
/// weights are the raw (unprojected) parameters.
pub fn train(model: &Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    model.validate()?;
    if dataset.split.train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    if model.out_dim() != dataset.num_classes {
        return Err(Error::dim(format!(
            "model emits {} classes, dataset has {}",
            model.out_dim(),
            dataset.num_classes
        )));
    }
    let mut model = model.clone();
    model.ortho = cfg.ortho;
    let mut adam = Adam::new(&model.layers);
    let mut history = Vec::with_capacity(cfg.epochs);
    let x = &dataset.features.values;
    for epoch in 0..cfg.epochs {
        let (logits, cache) = model.forward(&dataset.graph, x)?;
        let (loss, d_logits) = cross_entropy(&logits, &dataset.labels, &dataset.split.train)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        let val_accuracy = if dataset.split.val.is_empty() {
            None
        } else {
            Some(accuracy_from_logits(&logits, &dataset.labels, &dataset.split.val)?)
        };
        history.push(EpochRecord {
            epoch,
            loss,
            val_accuracy,
        });
        let grads = backward(&model, &dataset.graph, &cache, &d_logits)?;
        adam.step(&mut model.layers, &grads.weights, cfg.learning_rate, cfg.weight_decay);
        if model.layers.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
    }
    Ok(Trained { model, history })
}
