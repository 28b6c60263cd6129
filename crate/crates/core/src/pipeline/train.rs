//! Mini-batch Adam training and evaluation.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::metrics::MetricsReport;
use crate::align::DEFAULT_TEMPERATURE;
use crate::encoders::{Vocabulary, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::model::{Ablation, BatchLoss, ItemForward, ModelDims, ModelInput, ModelParams, Objective};
use crate::numerics::{RngState, Tensor};
use crate::parallel::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub d: usize,
    pub tau: f64,
    pub lambda_c: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            tau: DEFAULT_TEMPERATURE,
            lambda_c: 1.0,
            batch: 32,
            epochs: 30,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 42,
            ablation: Ablation::None,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.batch == 0 || self.epochs == 0 || self.max_len == 0 {
            return fail(format!(
                "d, batch, epochs and max_len must be positive (d={}, batch={}, epochs={}, max_len={})",
                self.d, self.batch, self.epochs, self.max_len
            ));
        }
        for (name, v) in [("tau", self.tau), ("lr", self.lr), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lambda_c >= 0.0 && self.lambda_c.is_finite()) {
            return fail(format!("lambda_c must be non-negative, got {}", self.lambda_c));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        if self.contrastive_active() && self.batch < 2 {
            return fail("batch must be at least 2 while the contrastive loss is active".into());
        }
        Ok(())
    }

    pub fn contrastive_active(&self) -> bool {
        self.ablation.uses_interaction() && self.lambda_c > 0.0
    }

    pub fn objective(&self) -> Objective {
        Objective {
            tau: self.tau,
            lambda_c: self.lambda_c,
            ablation: self.ablation,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        Adam {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected update from each parameter's accumulated
    /// gradient.
    pub fn step(&mut self, params: &mut ModelParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in params.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad().data().to_vec();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                *x -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Item-weighted means over the epoch's batches.
    pub loss: f64,
    pub contrastive: f64,
    pub detection: f64,
}

/// Everything needed to run a trained detector on new data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub curve: Vec<EpochStats>,
}

fn nan_dump(epoch: usize, batch_index: usize, ids: &[&str], loss: Option<&BatchLoss>, cause: &str) -> Error {
    Error::NonFinite(format!(
        "epoch {epoch} batch {batch_index}: {cause}; loss terms {loss:?}; items [{}]",
        ids.join(", ")
    ))
}

/// Trains from a fresh initialization. `progress` is called after each epoch.
pub fn train(
    cfg: &TrainConfig,
    data: &Dataset,
    exec: Execution,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let vocab = Vocabulary::build(data.corpus());
    let inputs = data.model_inputs(&vocab, cfg.max_len)?;
    let dims = ModelDims {
        d: cfg.d,
        vocab: vocab.len(),
        d_raw: data.image_dim(),
    };
    let root = RngState::new(cfg.seed);
    let mut params = ModelParams::init(dims, &mut root.split(0))?;
    let mut shuffler = root.split(1);
    let mut adam = Adam::new(cfg, &params);
    let objective = cfg.objective();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        shuffler.shuffle(&mut order);
        let (mut total, mut lc, mut ld) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch: Vec<&ModelInput> = chunk.iter().map(|&i| &inputs[i]).collect();
            let ids = || chunk.iter().map(|&i| data.items[i].id.as_str()).collect::<Vec<_>>();
            let (loss, grads) = params
                .batch_gradients(&batch, &objective, exec)
                .map_err(|e| match e {
                    Error::NonFinite(m) => nan_dump(epoch, b, &ids(), None, &m),
                    other => other,
                })?;
            if !grads.tensors().iter().all(|t| t.is_finite()) {
                return Err(nan_dump(epoch, b, &ids(), Some(&loss), "non-finite gradient"));
            }
            params.reset_gradients();
            params.accumulate(&grads);
            adam.step(&mut params);
            if !params.is_finite() {
                return Err(nan_dump(epoch, b, &ids(), Some(&loss), "non-finite parameter after update"));
            }
            let w = chunk.len() as f64;
            total += loss.total * w;
            lc += loss.contrastive * w;
            ld += loss.detection * w;
        }
        let n = inputs.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: total / n,
            contrastive: lc / n,
            detection: ld / n,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (contrastive {:.5}, detection {:.5})",
            stats.loss,
            stats.contrastive,
            stats.detection
        );
        progress(&stats);
        curve.push(stats);
    }
    Ok(TrainOutcome {
        model: TrainedModel {
            config: cfg.clone(),
            vocab,
            params,
        },
        curve,
    })
}

impl TrainedModel {
    pub fn inputs(&self, data: &Dataset) -> Result<Vec<ModelInput>> {
        if data.image_dim() != self.params.dims.d_raw {
            return Err(Error::Schema(format!(
                "dataset image_vec length {} does not match model input {}",
                data.image_dim(),
                self.params.dims.d_raw
            )));
        }
        data.model_inputs(&self.vocab, self.config.max_len)
    }

    pub fn forward_all(&self, data: &Dataset, exec: Execution) -> Result<Vec<ItemForward>> {
        let inputs = self.inputs(data)?;
        self.params.predict(&inputs, self.config.ablation, exec)
    }

    pub fn evaluate(&self, data: &Dataset, exec: Execution) -> Result<MetricsReport> {
        let predicted: Vec<u8> = self
            .forward_all(data, exec)?
            .iter()
            .map(|f| f.prediction().label)
            .collect();
        Ok(MetricsReport::from_labels(&data.labels(), &predicted))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            config: TrainConfig,
            vocab: Vocabulary,
            params: serde_json::Value,
        }
        let raw: Raw = serde_json::from_str(s)?;
        let params = ModelParams::from_json(&raw.params.to_string())?;
        if params.dims.vocab != raw.vocab.len() {
            return Err(Error::Schema(format!(
                "vocabulary has {} words but embeddings have {} rows",
                raw.vocab.len(),
                params.dims.vocab
            )));
        }
        Ok(TrainedModel {
            config: raw.config,
            vocab: raw.vocab,
            params,
        })
    }
}
