//! Interleaved multi-task training, checkpoint selection on a development
//! split, ensembles of independently seeded runs, and PK bootstrapping.

mod bootstrap;
mod examples;

pub use bootstrap::{
    apply_bootstrap, bootstrap_pk, pk_candidates, review_queue_lines, BootstrapConfig, BootstrapState, PkCandidate,
    ReviewItem,
};
pub use examples::{build_objectives, build_vocab, prepare_model, NerExample, Objectives, OutcomeExample, TrainSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annot::CodeVocabulary;
use crate::corpus::{CorpusFile, EmbeddingTable};
use crate::error::{Error, Result};
use crate::infer::{predict_corpus, InferConfig};
use crate::model::{Dropout, ModelConfig, ModelInstance};
use crate::neural::{Adam, AdamConfig, Gradients, Graph};
use crate::score::score;
use crate::tagging::SourceWeight;

/// Examples per minibatch for an objective with `n` examples.
pub fn minibatch_size(n: usize) -> usize {
    minibatch_size_for(n, 300)
}

pub fn minibatch_size_for(n: usize, target_iterations: usize) -> usize {
    n / target_iterations.max(1) + 1
}

/// Minibatches per epoch, `⌈N / N_b⌉`.
pub fn iterations_per_epoch(n: usize) -> usize {
    n.div_ceil(minibatch_size(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub target_iterations: usize,
    /// Loss weight of gold non-O tags.
    pub non_o_weight: f64,
    /// Loss multiplier for primary-corpus examples, all objectives.
    pub primary_weight: f64,
    /// Factor on encoder gradients flowing back from the outcome heads.
    pub outcome_grad_scale: f64,
    pub dev_labels: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub coordination: bool,
    pub proxies: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 30,
            target_iterations: 300,
            non_o_weight: 10.0,
            primary_weight: 3.0,
            outcome_grad_scale: 0.1,
            dev_labels: 4,
            seed: 0,
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.eps,
            coordination: false,
            proxies: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.target_iterations == 0 {
            return Err(Error::Config("epochs and target_iterations must be at least 1".into()));
        }
        for (name, v) in [
            ("non_o_weight", self.non_o_weight),
            ("primary_weight", self.primary_weight),
            ("outcome_grad_scale", self.outcome_grad_scale),
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::Config("beta1 and beta2 must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn source_weight(&self, source: SourceWeight) -> f64 {
        match source {
            SourceWeight::Primary => self.primary_weight,
            SourceWeight::Auxiliary => 1.0,
        }
    }
}

/// Development-set scores; ordered by relation F1, then entity F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevMetric {
    pub relation_f1: f64,
    pub entity_f1: f64,
}

impl DevMetric {
    pub fn better_than(&self, other: &DevMetric) -> bool {
        (self.relation_f1, self.entity_f1) > (other.relation_f1, other.entity_f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub iterations: usize,
    pub ner_loss: Option<f64>,
    pub pk_loss: Option<f64>,
    pub pd_loss: Option<f64>,
    pub dev: Option<DevMetric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub dev_labels: Vec<String>,
    pub examples: [usize; 3],
    pub epochs: Vec<EpochReport>,
    /// Epoch whose parameters were kept (1-based).
    pub selected_epoch: usize,
}

/// Order-sensitive hash of `parts`, used to derive RNG seeds.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Weighted NER loss of a batch: `Σ s_e w_i CE_i / Σ w_i` over every token,
/// with `w_i` the non-O weight on gold entity tags and `s_e` the example's
/// source weight. Each example's gradient is computed on its own graph and
/// the results are summed in batch order.
pub fn ner_batch(
    model: &ModelInstance,
    batch: &[&NerExample],
    non_o_weight: f64,
    dropout_seed: Option<u64>,
) -> Result<(f64, Gradients)> {
    let weights: Vec<Vec<f64>> =
        batch.iter().map(|ex| ex.tags.iter().map(|&t| if t == 0 { 1.0 } else { non_o_weight }).collect()).collect();
    let normalizer: f64 = weights.iter().flatten().sum();
    run_batch(batch.len(), dropout_seed, |k, drop| {
        let ex = batch[k];
        let mut g = Graph::new(&model.store);
        let w: Vec<f64> = weights[k].iter().map(|w| w * ex.source_weight).collect();
        let l = model.ner_loss(&mut g, &ex.input, &ex.tags, &w, normalizer, drop)?;
        Ok((g.value(l).data[0], g.backward(l)))
    })
}

/// Mean of `s_e · CE_e` over a batch of outcome examples.
pub fn outcome_batch(
    model: &ModelInstance,
    batch: &[&OutcomeExample],
    grad_scale: f64,
    dropout_seed: Option<u64>,
) -> Result<(f64, Gradients)> {
    let n = batch.len() as f64;
    run_batch(batch.len(), dropout_seed, |k, drop| {
        let ex = batch[k];
        let mut g = Graph::new(&model.store);
        let l = model.outcome_loss(
            &mut g,
            &ex.input,
            &ex.bound,
            ex.head,
            ex.target,
            ex.source_weight,
            n,
            grad_scale,
            drop,
        )?;
        Ok((g.value(l).data[0], g.backward(l)))
    })
}

fn run_batch(
    n: usize,
    dropout_seed: Option<u64>,
    f: impl Fn(usize, &mut Dropout) -> Result<(f64, Gradients)> + Sync,
) -> Result<(f64, Gradients)> {
    let parts: Vec<Result<(f64, Gradients)>> = (0..n)
        .into_par_iter()
        .map(|k| match dropout_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, k as u64]));
                f(k, &mut Dropout::on(&mut rng))
            }
            None => f(k, &mut Dropout::off()),
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = Gradients::new();
    for p in parts {
        let (l, g) = p?;
        if !l.is_finite() {
            return Err(Error::Training("non-finite loss".into()));
        }
        loss += l;
        grads.merge(g);
    }
    Ok((loss, grads))
}

fn shuffled_batches(n: usize, target_iterations: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(minibatch_size_for(n, target_iterations)).map(|c| c.to_vec()).collect()
}

/// Runs the training loop. After every epoch `evaluate` may return a dev
/// metric; the best-scoring epoch's parameters are restored at the end
/// (the last epoch's when nothing is evaluated).
pub fn fit(
    model: &mut ModelInstance,
    objectives: &Objectives,
    config: &TrainConfig,
    mut evaluate: impl FnMut(&ModelInstance) -> Result<Option<DevMetric>>,
) -> Result<TrainReport> {
    config.validate()?;
    let mut adam = Adam::new(config.adam());
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(DevMetric, usize, crate::neural::ParamStore)> = None;
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, epoch as u64]));
        let batches = [
            shuffled_batches(objectives.ner.len(), config.target_iterations, &mut rng),
            shuffled_batches(objectives.pk.len(), config.target_iterations, &mut rng),
            shuffled_batches(objectives.pd.len(), config.target_iterations, &mut rng),
        ];
        let iterations = batches.iter().map(Vec::len).max().unwrap_or(0);
        let mut sums = [0.0; 3];
        for it in 0..iterations {
            for (obj, list) in batches.iter().enumerate() {
                let Some(batch) = list.get(it) else { continue };
                let seed = mix(&[config.seed, epoch as u64, it as u64, obj as u64]);
                let (loss, grads) = match obj {
                    0 => {
                        let b: Vec<&NerExample> = batch.iter().map(|&i| &objectives.ner[i]).collect();
                        ner_batch(model, &b, config.non_o_weight, Some(seed))?
                    }
                    1 => {
                        let b: Vec<&OutcomeExample> = batch.iter().map(|&i| &objectives.pk[i]).collect();
                        outcome_batch(model, &b, config.outcome_grad_scale, Some(seed))?
                    }
                    _ => {
                        let b: Vec<&OutcomeExample> = batch.iter().map(|&i| &objectives.pd[i]).collect();
                        outcome_batch(model, &b, config.outcome_grad_scale, Some(seed))?
                    }
                };
                sums[obj] += loss;
                adam.step(&mut model.store, &grads);
            }
        }
        let mean = |k: usize| (!batches[k].is_empty()).then(|| sums[k] / batches[k].len() as f64);
        let dev = evaluate(model)?;
        if let Some(m) = dev {
            if best.as_ref().is_none_or(|(b, _, _)| m.better_than(b)) {
                best = Some((m, epoch, model.store.clone()));
            }
        }
        log::info!("epoch {epoch}: ner {:?} pk {:?} pd {:?} dev {:?}", mean(0), mean(1), mean(2), dev);
        epochs.push(EpochReport { epoch, iterations, ner_loss: mean(0), pk_loss: mean(1), pd_loss: mean(2), dev });
    }
    let selected_epoch = match best {
        Some((_, epoch, store)) => {
            model.store = store;
            epoch
        }
        None => config.epochs,
    };
    Ok(TrainReport {
        seed: config.seed,
        dev_labels: Vec::new(),
        examples: [objectives.ner.len(), objectives.pk.len(), objectives.pd.len()],
        epochs,
        selected_epoch,
    })
}

/// Dev-set relation and entity primary F1 of `model`.
pub fn evaluate_dev(model: &ModelInstance, dev: &CorpusFile, infer: &InferConfig) -> Result<DevMetric> {
    let pred = predict_corpus(model, dev, infer)?;
    let report = score(dev, &pred)?;
    Ok(DevMetric { relation_f1: report.relation_primary().f1, entity_f1: report.entity_primary().f1 })
}

/// Multi-task training with per-epoch dev evaluation.
pub fn train(
    model: &mut ModelInstance,
    sets: &[TrainSet],
    dev: Option<&CorpusFile>,
    config: &TrainConfig,
    infer: &InferConfig,
) -> Result<TrainReport> {
    let objectives = build_objectives(model, sets, config)?;
    if objectives.ner.is_empty() {
        return Err(Error::Training("the NER objective has no examples".into()));
    }
    let mut report = fit(model, &objectives, config, |m| match dev {
        Some(d) if d.sentence_count() > 0 => evaluate_dev(m, d, infer).map(Some),
        _ => Ok(None),
    })?;
    if let Some(d) = dev {
        report.dev_labels = d.labels.iter().map(|l| l.id.clone()).collect();
    }
    Ok(report)
}

/// Moves `n` randomly drawn labels into a development corpus.
pub fn split_dev(corpus: &CorpusFile, n: usize, seed: u64) -> Result<(CorpusFile, CorpusFile)> {
    if corpus.labels.len() <= n {
        return Err(Error::Training(format!(
            "{} labels cannot supply a development split of {n} and leave training data",
            corpus.labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0xDE5]));
    let mut picked = rand::seq::index::sample(&mut rng, corpus.labels.len(), n).into_vec();
    picked.sort_unstable();
    let mut train = corpus.clone();
    let mut dev = corpus.clone();
    train.labels = Vec::new();
    dev.labels = Vec::new();
    for (i, l) in corpus.labels.iter().enumerate() {
        if picked.binary_search(&i).is_ok() {
            dev.labels.push(l.clone());
        } else {
            train.labels.push(l.clone());
        }
    }
    Ok((train, dev))
}

/// Everything a training run needs besides the seed.
#[derive(Debug, Clone)]
pub struct RunInputs<'a> {
    pub primary: &'a CorpusFile,
    pub auxiliary: &'a [CorpusFile],
    /// Fixed development corpus; drawn from `primary` when absent.
    pub dev: Option<&'a CorpusFile>,
    pub model: &'a ModelConfig,
    pub codes: &'a CodeVocabulary,
    pub embeddings: Option<&'a EmbeddingTable>,
    pub train: &'a TrainConfig,
    pub infer: &'a InferConfig,
}

pub struct TrainedModel {
    pub model: ModelInstance,
    pub report: TrainReport,
}

/// One run: dev split, vocabulary, initialization and training, all from
/// `seed`.
pub fn run_training(inputs: &RunInputs, seed: u64) -> Result<TrainedModel> {
    let (train_part, dev) = match inputs.dev {
        Some(d) => (inputs.primary.clone(), d.clone()),
        None => split_dev(inputs.primary, inputs.train.dev_labels, seed)?,
    };
    let mut sets = vec![TrainSet { corpus: &train_part, source: SourceWeight::Primary }];
    sets.extend(inputs.auxiliary.iter().map(|c| TrainSet { corpus: c, source: SourceWeight::Auxiliary }));
    let mut model = prepare_model(&sets, inputs.model, inputs.codes, inputs.embeddings, &inputs.train.proxies, seed)?;
    let config = TrainConfig { seed, ..inputs.train.clone() };
    let report = train(&mut model, &sets, Some(&dev), &config, inputs.infer)?;
    Ok(TrainedModel { model, report })
}

/// `k` independent runs with seeds `seed + i`, each with its own dev split.
pub fn train_ensemble(k: usize, inputs: &RunInputs, seed: u64) -> Result<Vec<TrainedModel>> {
    if k == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    (0..k as u64).into_par_iter().map(|i| run_training(inputs, seed.wrapping_add(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minibatch_formula() {
        assert_eq!(minibatch_size(1), 1);
        assert_eq!(minibatch_size(299), 1);
        assert_eq!(minibatch_size(300), 2);
        assert_eq!(minibatch_size(900), 4);
        assert_eq!(minibatch_size(10_000), 34);
        assert_eq!(iterations_per_epoch(299), 299);
        assert_eq!(iterations_per_epoch(300), 150);
    }

    #[test]
    fn mix_separates_inputs() {
        assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
        assert_ne!(mix(&[0]), mix(&[0, 0]));
    }

    #[test]
    fn dev_metric_orders_relation_then_entity() {
        let a = DevMetric { relation_f1: 0.5, entity_f1: 0.1 };
        let b = DevMetric { relation_f1: 0.5, entity_f1: 0.2 };
        let c = DevMetric { relation_f1: 0.6, entity_f1: 0.0 };
        assert!(b.better_than(&a) && c.better_than(&b) && !a.better_than(&a));
    }
}
