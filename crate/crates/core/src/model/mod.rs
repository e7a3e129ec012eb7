//! The kill predictor: two embedding channels, bidirectional GRU encoders
//! with attention, comparison blocks, fusion and a two-class softmax head.
//! Training uses hand-written backpropagation and Adam.

mod checkpoint;
mod compare;
mod config;
mod encoder;
mod network;
mod params;
mod train;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::corpus::{KillMatrix, VersionCorpus};
use crate::error::{Error, Result};
use crate::preprocess::{build_pairs, Channel, PairDataset, PairFeatures, PairMode, Vocabulary};

pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use compare::compare;
pub use config::ModelConfig;
pub use encoder::Encoded;
pub use params::{Compare, Encoder, Gru, Linear, Params, Tensors};
pub use train::{fit, train};

/// Pairs scored per forward batch during prediction.
const PREDICT_BATCH: usize = 512;

/// A trained network with the vocabularies and configuration it was
/// trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    config: ModelConfig,
    names_vocab: Vocabulary,
    code_vocab: Vocabulary,
    operator_set: Vec<String>,
    params: Params,
    /// Mean training loss per epoch.
    history: Vec<f64>,
}

impl TrainedModel {
    /// Assembles a model from explicit parameters, checking every tensor
    /// shape against the configuration and vocabularies.
    pub fn from_parts(
        config: ModelConfig,
        names_vocab: Vocabulary,
        code_vocab: Vocabulary,
        operator_set: Vec<String>,
        params: Params,
    ) -> Result<Self> {
        config.validate()?;
        if names_vocab.channel() != Channel::Names || code_vocab.channel() != Channel::Code {
            return Err(Error::validation("vocabulary channels swapped"));
        }
        if operator_set.len() != config.operator_count {
            return Err(Error::validation("operator set size differs from operator_count"));
        }
        let expected = Params::zeros(&config, names_vocab.len(), code_vocab.len());
        let want: Vec<(String, Vec<usize>)> =
            expected.tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        let got: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if want != got {
            return Err(Error::validation("parameter shapes do not match the configuration"));
        }
        Ok(TrainedModel {
            config,
            names_vocab,
            code_vocab,
            operator_set,
            params,
            history: Vec::new(),
        })
    }

    pub(crate) fn with_history(mut self, history: Vec<f64>) -> Self {
        self.history = history;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names_vocab(&self) -> &Vocabulary {
        &self.names_vocab
    }

    pub fn code_vocab(&self) -> &Vocabulary {
        &self.code_vocab
    }

    pub fn operator_set(&self) -> &[String] {
        &self.operator_set
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    /// Encodes an index sequence with the given channel's embedding table
    /// and encoder. Empty input yields the zero vector.
    pub fn encode_sequence(&self, indices: &[u32], channel: Channel) -> Result<Encoded> {
        let (enc, emb) = match channel {
            Channel::Names => (&self.params.enc_names, &self.params.emb_names),
            Channel::Code => (&self.params.enc_code, &self.params.emb_code),
        };
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= emb.nrows()) {
            return Err(Error::validation(format!("index {bad} outside vocabulary of size {}", emb.nrows())));
        }
        Ok(encoder::encode(enc, emb, indices))
    }

    /// Comparison vector of the test/source block.
    pub fn compare_names(&self, v1: ArrayView1<f64>, v2: ArrayView1<f64>) -> Result<Array1<f64>> {
        compare(v1, v2, &self.params.cmp_ts)
    }

    /// Builds the covering pairs of `corpus` against this model's
    /// vocabularies, ablation and operator set.
    pub fn pairs_for(&self, corpus: &VersionCorpus, mode: PairMode) -> Result<PairDataset> {
        if self.config.use_before_after && !corpus.tool_mode().has_before_after() {
            return Err(Error::validation(
                "model uses before/after fragments but the corpus has none",
            ));
        }
        let mut ds = build_pairs(
            corpus,
            &self.names_vocab,
            &self.code_vocab,
            self.config.max_len,
            self.config.ablation,
            mode,
        )?;
        for (m, feats) in corpus.mutants().iter().zip(ds.mutants.iter_mut()) {
            if feats.operator.is_some() {
                let idx = self.operator_set.iter().position(|o| *o == m.operator).ok_or_else(|| {
                    Error::validation(format!("operator {} unknown to the model", m.operator))
                })?;
                feats.operator = Some(idx);
            }
        }
        ds.operator_count = self.operator_set.len();
        Ok(ds)
    }

    /// `[p_survive, p_kill]` for one pair.
    pub fn forward(&self, pair: PairFeatures<'_>) -> Result<[f64; 2]> {
        let ds = PairDataset {
            version_id: String::new(),
            tests: vec![pair.test.clone()],
            mutants: vec![pair.mutant.clone()],
            pairs: vec![crate::preprocess::LabeledPair {
                mutant: 0,
                test: 0,
                label: pair.label,
            }],
            operator_count: self.operator_set.len(),
        };
        let p = network::predict_batch(&self.params, &self.config, &ds, &[0])?;
        Ok([p[[0, 0]], p[[0, 1]]])
    }

    /// Kill probability of every pair of `ds`, in pair order.
    pub fn predict_proba(&self, ds: &PairDataset) -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..ds.len()).collect();
        let chunks: Vec<Vec<f64>> = idx
            .par_chunks(PREDICT_BATCH)
            .map(|c| {
                network::predict_batch(&self.params, &self.config, ds, c).map(|p| p.column(1).to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }

    /// Mean cross-entropy of the labelled pairs of `ds` without dropout.
    pub fn loss(&self, ds: &PairDataset) -> Result<f64> {
        let idx: Vec<usize> = (0..ds.len()).collect();
        let mut total = 0.0;
        for c in idx.chunks(PREDICT_BATCH) {
            let (l, _) = network::loss_and_grad(&self.params, &self.config, ds, c, None)?;
            total += l * c.len() as f64;
        }
        Ok(total / ds.len().max(1) as f64)
    }

    /// Mean cross-entropy over `pairs` of `ds` and its gradient with respect
    /// to every parameter, without dropout.
    pub fn loss_and_gradient(&self, ds: &PairDataset, pairs: &[usize]) -> Result<(f64, Params)> {
        network::loss_and_grad(&self.params, &self.config, ds, pairs, None)
    }

    /// The same model with replaced parameters of identical shape.
    pub fn with_params(&self, params: Params) -> Result<Self> {
        Self::from_parts(
            self.config.clone(),
            self.names_vocab.clone(),
            self.code_vocab.clone(),
            self.operator_set.clone(),
            params,
        )
        .map(|m| m.with_history(self.history.clone()))
    }
}

/// Predicts the kill matrix of `corpus`: every covering pair whose kill
/// probability reaches `threshold` is marked killed.
pub fn predict_matrix(model: &TrainedModel, corpus: &VersionCorpus, threshold: f64) -> Result<KillMatrix> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::validation(format!("threshold {threshold} outside [0, 1]")));
    }
    let ds = model.pairs_for(corpus, PairMode::Prediction)?;
    let probs = model.predict_proba(&ds)?;
    let mut km = KillMatrix::empty_for(corpus);
    for (i, &p) in probs.iter().enumerate() {
        if p >= threshold {
            let (m, t) = ds.ids(i);
            km.insert(m.clone(), t.clone());
        }
    }
    Ok(km)
}

#[cfg(test)]
pub(crate) mod testing {
    //! Hand-parameterised tiny model shared by golden and gradient tests.

    use super::*;
    use crate::preprocess::{AblationFlags, MutantFeatures, TestFeatures};
    use std::collections::BTreeMap;

    pub fn tiny_config(use_before_after: bool) -> ModelConfig {
        ModelConfig {
            embed_dim: 2,
            hidden_dim: 2,
            compare_dim: 2,
            fusion_dim: 2,
            dropout_rate: 0.0,
            operator_count: 2,
            use_before_after,
            ablation: AblationFlags::default(),
            ..ModelConfig::default()
        }
    }

    pub fn tiny_vocab(channel: Channel) -> Vocabulary {
        let counts: BTreeMap<String, usize> = ["a", "b", "c"].iter().map(|t| (t.to_string(), 1)).collect();
        Vocabulary::from_counts(channel, &counts, 1)
    }

    /// Deterministic, non-symmetric values in roughly [-0.5, 0.5].
    pub fn fill_pattern(p: &mut Params) {
        let mut k = 0usize;
        for (_, mut t) in p.tensors_mut() {
            for x in t.iter_mut() {
                k += 1;
                *x = (((k * 37) % 23) as f64 - 11.0) / 22.0;
            }
        }
    }

    pub fn tiny_model(use_before_after: bool) -> TrainedModel {
        let cfg = tiny_config(use_before_after);
        let mut p = Params::zeros(&cfg, 8, 8);
        fill_pattern(&mut p);
        TrainedModel::from_parts(
            cfg,
            tiny_vocab(Channel::Names),
            tiny_vocab(Channel::Code),
            vec!["AOR".into(), "ROR".into()],
            p,
        )
        .unwrap()
    }

    pub fn tiny_dataset(n: usize) -> PairDataset {
        let tests = (0..n)
            .map(|i| TestFeatures {
                test_id: format!("t{i}").into(),
                name: vec![5 + (i % 3) as u32, 6, 7 - (i % 2) as u32],
            })
            .collect();
        let mutants = (0..n)
            .map(|i| MutantFeatures {
                mutant_id: format!("m{i}").into(),
                source_name: vec![7, 5 + (i % 2) as u32, 2],
                line: vec![1 + (i % 4) as u32, 6, 5],
                before_after: Some((vec![6, (i % 3) as u32 + 5, 7], vec![4 + (i % 2) as u32, 7, 5])),
                operator: Some(i % 2),
            })
            .collect();
        let pairs = (0..n)
            .map(|i| crate::preprocess::LabeledPair {
                mutant: i,
                test: i,
                label: Some(i % 3 == 0),
            })
            .collect();
        PairDataset {
            version_id: "tiny".into(),
            tests,
            mutants,
            pairs,
            operator_count: 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::corpus::fixtures::small_corpus;
    use crate::preprocess::ResampleMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attention_and_softmax_sum_to_one() {
        let m = tiny_model(true);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let len = rng.random_range(1..9);
            let seq: Vec<u32> = (0..len).map(|_| rng.random_range(0..8)).collect();
            let e = m.encode_sequence(&seq, Channel::Code).unwrap();
            assert!((e.attention.sum() - 1.0).abs() < 1e-6);
        }
        let ds = tiny_dataset(12);
        for i in 0..ds.len() {
            let p = m.forward(ds.features(i)).unwrap();
            assert!(p[0] > 0.0 && p[1] > 0.0 && (p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        let m = tiny_model(true);
        assert!(m.encode_sequence(&[99], Channel::Names).is_err());
        let mut ds = tiny_dataset(2);
        ds.mutants[0].operator = Some(5);
        assert!(matches!(m.forward(ds.features(0)), Err(Error::Validation(_))));
    }

    #[test]
    fn batched_prediction_equals_single_forward() {
        let m = tiny_model(true);
        let ds = tiny_dataset(40);
        let batched = m.predict_proba(&ds).unwrap();
        for (i, &p) in batched.iter().enumerate() {
            assert_eq!(p, m.forward(ds.features(i)).unwrap()[1]);
        }
    }

    #[test]
    fn pit_mode_ignores_before_after() {
        let m = tiny_model(false);
        let mut ds = tiny_dataset(4);
        let with = m.predict_proba(&ds).unwrap();
        for mf in &mut ds.mutants {
            mf.before_after = None;
        }
        assert_eq!(with, m.predict_proba(&ds).unwrap());
        assert!(tiny_model(true).predict_proba(&ds).is_err());
    }

    fn quick_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            hidden_dim: 8,
            compare_dim: 4,
            fusion_dim: 8,
            max_epochs: 3,
            batch_size: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn training_is_seeded() {
        let c = small_corpus();
        let a = fit(&c, &quick_config(), ResampleMode::None).unwrap();
        let b = fit(&c, &quick_config(), ResampleMode::None).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        let other = fit(&c, &ModelConfig { seed: 8, ..quick_config() }, ResampleMode::None).unwrap();
        assert_ne!(a.checksum(), other.checksum());
        assert_eq!(a.history().len(), 3);
    }

    #[test]
    fn single_class_training_fails() {
        let c = small_corpus();
        let km = KillMatrix::empty_for(&c);
        let c = c.with_kill_matrix(km).unwrap();
        assert!(matches!(fit(&c, &quick_config(), ResampleMode::None), Err(Error::Validation(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let c = small_corpus();
        let cfg = ModelConfig {
            learning_rate: f64::MAX,
            grad_clip: 0.0,
            max_epochs: 5,
            ..quick_config()
        };
        match fit(&c, &cfg, ResampleMode::None) {
            Err(Error::Divergence { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn threshold_zero_predicts_all_covering_pairs() {
        let c = small_corpus();
        let m = fit(&c, &quick_config(), ResampleMode::None).unwrap();
        let km = predict_matrix(&m, &c, 0.0).unwrap();
        assert_eq!(km.len(), c.coverage().pair_count());
        km.validate_against(&c).unwrap();
        let none = predict_matrix(&m, &c, 1.0).unwrap();
        assert!(none.len() <= km.len());
        assert!(predict_matrix(&m, &c, 1.5).is_err());
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::testing::*;
    use super::*;

    fn loss_with(m: &TrainedModel, ds: &PairDataset, tensor: usize, elem: usize, delta: f64) -> f64 {
        let mut p = m.params().clone();
        let mut views = p.tensors_mut();
        let (_, t) = &mut views[tensor];
        *t.iter_mut().nth(elem).unwrap() += delta;
        drop(views);
        let idx: Vec<usize> = (0..ds.len()).collect();
        m.with_params(p).unwrap().loss_and_gradient(ds, &idx).unwrap().0
    }

    fn check(use_before_after: bool) {
        let m = tiny_model(use_before_after);
        let ds = tiny_dataset(6);
        let idx: Vec<usize> = (0..ds.len()).collect();
        let (_, grad) = m.loss_and_gradient(&ds, &idx).unwrap();
        let eps = 1e-5;
        for (ti, (name, g)) in grad.tensors().into_iter().enumerate() {
            for (ei, &a) in g.iter().enumerate() {
                let n = (loss_with(&m, &ds, ti, ei, eps) - loss_with(&m, &ds, ti, ei, -eps)) / (2.0 * eps);
                let (diff, scale) = ((a - n).abs(), a.abs().max(n.abs()));
                // Below 1e-7 the central difference is dominated by rounding noise.
                let ok = if scale >= 1e-7 { diff / scale < 1e-4 } else { diff < 1e-9 };
                assert!(ok, "{name}[{ei}]: analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check(true);
    }

    #[test]
    fn gradients_match_finite_differences_without_before_after() {
        check(false);
    }
}
