use log::{debug, info};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::loss_and_grad;
use super::params::{Params, Tensors};
use super::{ModelConfig, TrainedModel};
use crate::corpus::VersionCorpus;
use crate::error::{Error, Result};
use crate::preprocess::{build_pairs, build_vocab, resample, PairDataset, PairMode, ResampleMode, Vocabulary};

/// Adam with the usual moment decay rates.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(params: &Params, lr: f64) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let lr = self.lr;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((_, mut p), (_, g)), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let p = p.as_slice_mut().expect("parameters are contiguous");
            let g = g.as_slice().expect("gradients are contiguous");
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - rate)`.
fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

/// Trains a fresh network on labelled pairs.
pub fn train(
    dataset: &PairDataset,
    names_vocab: Vocabulary,
    code_vocab: Vocabulary,
    operator_set: Vec<String>,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if operator_set.len() != config.operator_count {
        return Err(Error::validation(format!(
            "operator_count {} does not match {} operators",
            config.operator_count,
            operator_set.len()
        )));
    }
    if dataset.pairs.iter().any(|p| p.label.is_none()) {
        return Err(Error::validation("training pairs must be labelled"));
    }
    let (killed, survived) = dataset.class_counts();
    if killed == 0 || survived == 0 {
        return Err(Error::validation(format!(
            "training needs both classes, got {killed} killed and {survived} survived"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Params::init(config, names_vocab.len(), code_vocab.len(), &mut rng);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.max_epochs);
    info!(
        "training on {} pairs ({killed} killed), {} parameters",
        dataset.len(),
        params.count()
    );

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let mask = (config.dropout_rate > 0.0)
                .then(|| dropout_mask(chunk.len(), config.fusion_width(), config.dropout_rate, &mut rng));
            let (loss, mut grads) = loss_and_grad(&params, config, dataset, chunk, mask)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: bi + 1,
                    loss,
                });
            }
            if config.grad_clip > 0.0 {
                let norm = grads.norm();
                if norm > config.grad_clip {
                    grads.scale(config.grad_clip / norm);
                }
            }
            adam.update(&mut params, &grads);
            total += loss * chunk.len() as f64;
            debug!("epoch {} batch {} loss {loss:.5}", epoch + 1, bi + 1);
        }
        let mean = total / dataset.len() as f64;
        info!("epoch {} mean loss {mean:.5}", epoch + 1);
        history.push(mean);
    }

    TrainedModel::from_parts(config.clone(), names_vocab, code_vocab, operator_set, params).map(|m| m.with_history(history))
}

/// Builds vocabularies and pairs from a labelled corpus, optionally
/// rebalances, and trains.
pub fn fit(corpus: &VersionCorpus, config: &ModelConfig, mode: ResampleMode) -> Result<TrainedModel> {
    let config = config.clone().fitted_to(corpus);
    config.validate()?;
    let (names, code) = build_vocab(corpus, config.min_count)?;
    let pairs = build_pairs(corpus, &names, &code, config.max_len, config.ablation, PairMode::Training)?;
    let pairs = resample(&pairs, mode, config.seed)?;
    train(&pairs, names, code, corpus.operator_set().to_vec(), &config)
}
