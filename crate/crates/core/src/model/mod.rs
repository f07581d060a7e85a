//! The multi-task network: a shared context encoder feeding an NER branch
//! (second Bi-LSTM) and an outcome branch (multi-window CNN with PK and PD
//! heads).

mod checkpoint;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use vocab::{SentenceInput, Vocab, PAD, RESERVED_WORDS, UNK};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annot::CodeVocabulary;
use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::neural::{dropout, init_uniform, softmax, BiLstm, Conv1d, Dense, Graph, ParamId, ParamStore, Tensor, Var};
use crate::tagging::NUM_TAGS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_window: usize,
    /// Hidden units per LSTM direction.
    pub hidden: usize,
    pub rel_windows: Vec<usize>,
    pub rel_filters: usize,
    pub ner_classes: usize,
    pub pk_classes: usize,
    pub pd_classes: usize,
    pub dropout: f64,
    /// Feed word embeddings alongside C into the second Bi-LSTM.
    pub residual_words: bool,
    /// Longest training sentence in tokens; 0 until fitted to a corpus.
    pub max_len: usize,
    /// Longest word in characters; longer words are truncated.
    pub max_word_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 200,
            char_dim: 24,
            char_filters: 50,
            char_window: 3,
            hidden: 100,
            rel_windows: vec![3, 4, 5],
            rel_filters: 50,
            ner_classes: NUM_TAGS,
            pk_classes: 20,
            pd_classes: 2,
            dropout: 0.5,
            residual_words: true,
            max_len: 0,
            max_word_len: 0,
        }
    }
}

impl ModelConfig {
    /// The miniature configuration used for gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            word_dim: 6,
            char_dim: 4,
            char_filters: 3,
            char_window: 3,
            hidden: 3,
            rel_windows: vec![2, 3],
            rel_filters: 3,
            ..Self::default()
        }
    }

    /// A reduced configuration for fast end-to-end runs.
    pub fn small() -> Self {
        ModelConfig {
            word_dim: 32,
            char_dim: 8,
            char_filters: 12,
            char_window: 3,
            hidden: 24,
            rel_windows: vec![3, 4, 5],
            rel_filters: 16,
            ..Self::default()
        }
    }

    pub fn context_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn rel_dim(&self) -> usize {
        self.rel_windows.len() * self.rel_filters
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_filters", self.char_filters),
            ("char_window", self.char_window),
            ("hidden", self.hidden),
            ("rel_filters", self.rel_filters),
            ("pk_classes", self.pk_classes),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.rel_windows.is_empty() || self.rel_windows.contains(&0) {
            return Err(Error::Config("rel_windows must be non-empty and positive".into()));
        }
        if self.ner_classes != NUM_TAGS {
            return Err(Error::Config(format!("ner_classes must be {NUM_TAGS}")));
        }
        if self.pd_classes != 2 {
            return Err(Error::Config("pd_classes must be 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Layer handles into the parameter store.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub word_emb: ParamId,
    pub char_emb: ParamId,
    pub char_conv: Conv1d,
    pub context: BiLstm,
    pub ner: BiLstm,
    pub ner_out: Dense,
    pub rel_convs: Vec<Conv1d>,
    pub pk_out: Dense,
    pub pd_out: Dense,
}

/// Widths read back from the built parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeAudit {
    pub char_composition: usize,
    pub context_width: usize,
    pub rel_width: usize,
    pub ner_classes: usize,
    pub pk_classes: usize,
    pub pd_classes: usize,
}

/// Which outcome head a loss or prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Pk,
    Pd,
}

/// Dropout switch: active only when it holds an rng.
pub struct Dropout<'r> {
    rng: Option<&'r mut dyn RngCore>,
}

impl<'r> Dropout<'r> {
    pub fn off() -> Self {
        Dropout { rng: None }
    }

    pub fn on(rng: &'r mut dyn RngCore) -> Self {
        Dropout { rng: Some(rng) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    fn apply(&mut self, g: &mut Graph, x: Var, p: f64) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) => dropout(g, x, p, true, rng),
            None => x,
        }
    }
}

/// Encoder outputs for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    /// `len x context_dim`.
    pub c: Var,
    /// `len x word_dim`.
    pub s: Var,
    pub len: usize,
}

/// A built network with its vocabularies.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub codes: CodeVocabulary,
    pub store: ParamStore,
    pub params: ModelParams,
    pub seed: u64,
}

impl ModelInstance {
    /// Builds and initializes every parameter from `seed`. Word rows found in
    /// `embeddings` (exact, then lowercase) start from those vectors.
    pub fn new(
        config: ModelConfig,
        vocab: Vocab,
        codes: CodeVocabulary,
        embeddings: Option<&EmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if config.pk_classes != codes.len() {
            return Err(Error::Config(format!(
                "pk_classes {} differs from the code vocabulary size {}",
                config.pk_classes,
                codes.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.word_dim;
        let mut words = Tensor::zeros(vocab.word_count(), d);
        for (i, w) in vocab.words().iter().enumerate() {
            let pre = embeddings.and_then(|t| t.get(w).or_else(|| t.get(&w.to_lowercase())));
            match pre {
                Some(row) if row.len() == d => words.row_mut(i).copy_from_slice(row),
                Some(row) => {
                    return Err(Error::Shape(format!("embedding dimension {} differs from word_dim {d}", row.len())))
                }
                None => words.row_mut(i).iter_mut().for_each(|v| *v = init_uniform(&mut rng)),
            }
        }
        let word_emb = store.add("word_emb", words)?;
        let char_emb = store.add_uniform("char_emb", vocab.char_count(), config.char_dim, &mut rng)?;
        let char_conv =
            Conv1d::new(&mut store, "char_cnn", config.char_dim, config.char_window, config.char_filters, &mut rng)?;
        let context = BiLstm::new(&mut store, "context", d + config.char_filters, config.hidden, &mut rng)?;
        let ner_in = config.context_dim() + if config.residual_words { d } else { 0 };
        let ner = BiLstm::new(&mut store, "ner", ner_in, config.hidden, &mut rng)?;
        let ner_out = Dense::new(&mut store, "ner_out", 2 * config.hidden, config.ner_classes, &mut rng)?;
        let rel_in = config.context_dim() + d;
        let rel_convs = config
            .rel_windows
            .iter()
            .map(|&w| Conv1d::new(&mut store, &format!("rel_cnn{w}"), rel_in, w, config.rel_filters, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let pk_out = Dense::new(&mut store, "pk_out", config.rel_dim(), config.pk_classes, &mut rng)?;
        let pd_out = Dense::new(&mut store, "pd_out", config.rel_dim(), config.pd_classes, &mut rng)?;
        let model = ModelInstance {
            config,
            vocab,
            codes,
            store,
            params: ModelParams { word_emb, char_emb, char_conv, context, ner, ner_out, rel_convs, pk_out, pd_out },
            seed,
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Widths as realized by the parameter shapes.
    pub fn shape_audit(&self) -> ShapeAudit {
        let p = &self.params;
        let cols = |id: ParamId| self.store.get(id).cols;
        let lstm_width = |b: &BiLstm| self.store.get(b.fwd.w_hh).rows + self.store.get(b.bwd.w_hh).rows;
        ShapeAudit {
            char_composition: cols(p.char_conv.w),
            context_width: lstm_width(&p.context),
            rel_width: p.rel_convs.iter().map(|c| cols(c.w)).sum(),
            ner_classes: cols(p.ner_out.w),
            pk_classes: cols(p.pk_out.w),
            pd_classes: cols(p.pd_out.w),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let a = self.shape_audit();
        let c = &self.config;
        let expect = ShapeAudit {
            char_composition: c.char_filters,
            context_width: c.context_dim(),
            rel_width: c.rel_dim(),
            ner_classes: c.ner_classes,
            pk_classes: c.pk_classes,
            pd_classes: c.pd_classes,
        };
        if a != expect {
            return Err(Error::Shape(format!("built {a:?}, configured {expect:?}")));
        }
        let rel_in = self.store.get(self.params.pk_out.w).rows;
        if rel_in != a.rel_width {
            return Err(Error::Shape(format!("PK head reads {rel_in} but v has {}", a.rel_width)));
        }
        Ok(())
    }

    pub fn encode(&self, tokens: &[crate::tagging::Token]) -> SentenceInput {
        let cap = if self.config.max_word_len == 0 { usize::MAX } else { self.config.max_word_len };
        self.vocab.encode(tokens, cap)
    }

    /// C: Bi-LSTM over rows `[S_i ‖ charCNN(word_i)]`.
    pub fn encode_context(&self, g: &mut Graph, input: &SentenceInput, drop: &mut Dropout) -> Result<Context> {
        let len = input.len();
        if len == 0 {
            return Err(Error::Shape("empty sentence".into()));
        }
        if input.chars.len() != len {
            return Err(Error::Shape("one character list per word is required".into()));
        }
        let p = &self.params;
        let table = g.param(p.word_emb);
        let ids: Vec<Option<usize>> = input.words.iter().map(|&w| Some(w)).collect();
        let s = g.gather(table, &ids);
        let chars: Vec<Option<usize>> = input.chars.iter().flatten().map(|&c| Some(c)).collect();
        let blocks: Vec<usize> = input.chars.iter().map(|w| w.len()).collect();
        let char_table = g.param(p.char_emb);
        let ch = g.gather(char_table, &chars);
        let comp = p.char_conv.forward_pooled(g, ch, &blocks);
        let x = g.concat_cols(&[s, comp]);
        let c = p.context.forward(g, x, len);
        let c = drop.apply(g, c, self.config.dropout);
        Ok(Context { c, s, len })
    }

    /// Per-token tag logits, `len x ner_classes`.
    pub fn ner_logits(&self, g: &mut Graph, ctx: &Context, drop: &mut Dropout) -> Var {
        let x = if self.config.residual_words { g.concat_cols(&[ctx.c, ctx.s]) } else { ctx.c };
        let r = self.params.ner.forward(g, x, ctx.len);
        let r = drop.apply(g, r, self.config.dropout);
        self.params.ner_out.forward(g, r)
    }

    /// v: max-pooled convolutions over rows `[C_i ‖ S'_i]`. The encoder
    /// receives `grad_scale` times the upstream gradient.
    pub fn outcome_vector(
        &self,
        g: &mut Graph,
        ctx: &Context,
        bound_words: &[usize],
        grad_scale: f64,
        drop: &mut Dropout,
    ) -> Result<Var> {
        if bound_words.len() != ctx.len {
            return Err(Error::Shape(format!(
                "bound context has {} tokens, sentence has {}",
                bound_words.len(),
                ctx.len
            )));
        }
        let c = if grad_scale == 1.0 { ctx.c } else { g.scale_grad(ctx.c, grad_scale) };
        let table = g.param(self.params.word_emb);
        let ids: Vec<Option<usize>> = bound_words.iter().map(|&w| Some(w)).collect();
        let sp = g.gather(table, &ids);
        let x = g.concat_cols(&[c, sp]);
        let parts: Vec<Var> = self.params.rel_convs.iter().map(|conv| conv.forward_pooled(g, x, &[ctx.len])).collect();
        let v = g.concat_cols(&parts);
        Ok(drop.apply(g, v, self.config.dropout))
    }

    pub fn head_logits(&self, g: &mut Graph, v: Var, head: Head) -> Var {
        match head {
            Head::Pk => self.params.pk_out.forward(g, v),
            Head::Pd => self.params.pd_out.forward(g, v),
        }
    }

    /// `Σ_i weights_i · CE_i / normalizer` over the sentence's tags.
    pub fn ner_loss(
        &self,
        g: &mut Graph,
        input: &SentenceInput,
        tags: &[usize],
        weights: &[f64],
        normalizer: f64,
        drop: &mut Dropout,
    ) -> Result<Var> {
        if tags.len() != input.len() || weights.len() != input.len() {
            return Err(Error::Shape("one tag and weight per token is required".into()));
        }
        if let Some(&t) = tags.iter().find(|&&t| t >= self.config.ner_classes) {
            return Err(Error::Shape(format!("tag index {t} out of range")));
        }
        let ctx = self.encode_context(g, input, drop)?;
        let logits = self.ner_logits(g, &ctx, drop);
        g.softmax_cross_entropy(logits, tags, weights, normalizer)
    }

    /// `weight · CE / normalizer` for one entity-bound outcome example.
    #[allow(clippy::too_many_arguments)]
    pub fn outcome_loss(
        &self,
        g: &mut Graph,
        input: &SentenceInput,
        bound_words: &[usize],
        head: Head,
        target: usize,
        weight: f64,
        normalizer: f64,
        grad_scale: f64,
        drop: &mut Dropout,
    ) -> Result<Var> {
        let classes = match head {
            Head::Pk => self.config.pk_classes,
            Head::Pd => self.config.pd_classes,
        };
        if target >= classes {
            return Err(Error::Shape(format!("target {target} out of range for {classes} classes")));
        }
        let ctx = self.encode_context(g, input, drop)?;
        let v = self.outcome_vector(g, &ctx, bound_words, grad_scale, drop)?;
        let logits = self.head_logits(g, v, head);
        g.softmax_cross_entropy(logits, &[target], &[weight], normalizer)
    }

    /// Inference-mode encoding of one sentence, reusable across queries.
    pub fn analyze(&self, input: &SentenceInput) -> Result<Analysis<'_>> {
        let mut graph = Graph::new(&self.store);
        let ctx = self.encode_context(&mut graph, input, &mut Dropout::off())?;
        Ok(Analysis { model: self, graph, ctx })
    }
}

/// A sentence encoded by a frozen model.
pub struct Analysis<'m> {
    model: &'m ModelInstance,
    graph: Graph<'m>,
    ctx: Context,
}

impl Analysis<'_> {
    pub fn len(&self) -> usize {
        self.ctx.len
    }

    pub fn is_empty(&self) -> bool {
        self.ctx.len == 0
    }

    pub fn context_rows(&self) -> &Tensor {
        self.graph.value(self.ctx.c)
    }

    /// Per-token tag distributions.
    pub fn tag_probs(&mut self) -> Vec<Vec<f64>> {
        let logits = self.model.ner_logits(&mut self.graph, &self.ctx, &mut Dropout::off());
        let lv = self.graph.value(logits);
        (0..lv.rows).map(|r| softmax(lv.row(r))).collect()
    }

    pub fn outcome(&mut self, bound_words: &[usize]) -> Result<Vec<f64>> {
        let v = self.model.outcome_vector(&mut self.graph, &self.ctx, bound_words, 1.0, &mut Dropout::off())?;
        Ok(self.graph.value(v).data.clone())
    }

    /// Head distribution for one entity-bound context.
    pub fn head_probs(&mut self, bound_words: &[usize], head: Head) -> Result<Vec<f64>> {
        let v = self.model.outcome_vector(&mut self.graph, &self.ctx, bound_words, 1.0, &mut Dropout::off())?;
        let logits = self.model.head_logits(&mut self.graph, v, head);
        Ok(softmax(&self.graph.value(logits).data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Gradients;
    use crate::tagging::tokenize;

    fn micro_model(seed: u64) -> (ModelInstance, SentenceInput) {
        let toks = tokenize("LABELDRUG may increase warfarin levels");
        let vocab = Vocab::new(toks.iter().map(|t| t.text.clone()), toks.iter().flat_map(|t| t.text.chars()));
        let mut config = ModelConfig::micro();
        config.max_len = 5;
        config.max_word_len = 12;
        let model = ModelInstance::new(config, vocab, CodeVocabulary::placeholder(), None, seed).unwrap();
        let input = model.vocab.encode(&toks, 12);
        (model, input)
    }

    #[test]
    fn default_shapes_match_the_architecture() {
        let vocab = Vocab::new(["a".to_string()], "a".chars());
        let m = ModelInstance::new(ModelConfig::default(), vocab, CodeVocabulary::placeholder(), None, 0).unwrap();
        let a = m.shape_audit();
        assert_eq!(
            a,
            ShapeAudit {
                char_composition: 50,
                context_width: 200,
                rel_width: 150,
                ner_classes: 11,
                pk_classes: 20,
                pd_classes: 2
            }
        );
    }

    #[test]
    fn rejects_mismatched_code_vocabulary() {
        let mut config = ModelConfig::micro();
        config.pk_classes = 3;
        let vocab = Vocab::new([], []);
        assert!(ModelInstance::new(config, vocab, CodeVocabulary::placeholder(), None, 0).is_err());
    }

    #[test]
    fn inference_outputs_are_distributions() {
        let (model, input) = micro_model(1);
        let mut a = model.analyze(&input).unwrap();
        for row in a.tag_probs() {
            assert_eq!(row.len(), 11);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let bound = input.words.clone();
        let pd = a.head_probs(&bound, Head::Pd).unwrap();
        assert_eq!(pd.len(), 2);
        assert!((pd[0] + pd[1] - 1.0).abs() < 1e-12);
        assert_eq!(a.head_probs(&bound, Head::Pk).unwrap().len(), 20);
        assert_eq!(a.outcome(&bound).unwrap().len(), model.config.rel_dim());
        assert!(a.outcome(&bound[1..]).is_err());
    }

    #[test]
    fn untrained_ner_loss_is_near_uniform() {
        let (model, input) = micro_model(2);
        let mut g = Graph::new(&model.store);
        let n = input.len();
        let loss = model.ner_loss(&mut g, &input, &vec![0; n], &vec![1.0; n], n as f64, &mut Dropout::off()).unwrap();
        let v = g.value(loss).data[0];
        let expect = 11f64.ln();
        assert!((v - expect).abs() < 0.1 * expect, "{v}");
    }

    fn numeric_check(model: &mut ModelInstance, loss: impl Fn(&ModelInstance) -> (f64, Gradients)) {
        let (_, grads) = loss(model);
        let ids: Vec<ParamId> = model.store.iter().map(|(id, _, _)| id).collect();
        let eps = 1e-5;
        for id in ids {
            let n = model.store.get(id).data.len();
            let analytic = grads.get(id).cloned().unwrap_or_else(|| {
                let t = model.store.get(id);
                Tensor::zeros(t.rows, t.cols)
            });
            for k in 0..n {
                let orig = model.store.get(id).data[k];
                model.store.get_mut(id).data[k] = orig + eps;
                let up = loss(model).0;
                model.store.get_mut(id).data[k] = orig - eps;
                let down = loss(model).0;
                model.store.get_mut(id).data[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let err = (analytic.data[k] - numeric).abs() / numeric.abs().max(1.0);
                assert!(err < 1e-4, "{} [{k}]: analytic {} numeric {numeric}", model.store.name(id), analytic.data[k]);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_for_all_objectives() {
        let (mut model, input) = micro_model(3);
        let n = input.len();
        let tags: Vec<usize> = (0..n).map(|i| (i * 3) % 11).collect();
        let weights: Vec<f64> = tags.iter().map(|&t| if t == 0 { 1.0 } else { 10.0 }).collect();
        let mut bound = input.words.clone();
        bound[2] = 3;
        numeric_check(&mut model, |m| {
            let mut g = Graph::new(&m.store);
            let l = m.ner_loss(&mut g, &input, &tags, &weights, 7.0, &mut Dropout::off()).unwrap();
            (g.value(l).data[0], g.backward(l))
        });
        for (head, target) in [(Head::Pk, 13), (Head::Pd, 1)] {
            numeric_check(&mut model, |m| {
                let mut g = Graph::new(&m.store);
                let l =
                    m.outcome_loss(&mut g, &input, &bound, head, target, 3.0, 2.0, 1.0, &mut Dropout::off()).unwrap();
                (g.value(l).data[0], g.backward(l))
            });
        }
    }

    #[test]
    fn outcome_scale_reaches_only_the_encoder() {
        let (model, input) = micro_model(4);
        let grads = |scale: f64| {
            let mut g = Graph::new(&model.store);
            let l = model
                .outcome_loss(&mut g, &input, &input.words, Head::Pk, 5, 1.0, 1.0, scale, &mut Dropout::off())
                .unwrap();
            g.backward(l)
        };
        let (full, scaled) = (grads(1.0), grads(0.1));
        let encoder = [model.params.char_emb, model.params.char_conv.w, model.params.context.fwd.w_ih];
        for id in encoder {
            let (a, b) = (full.get(id).unwrap(), scaled.get(id).unwrap());
            assert!(a.data.iter().any(|&v| v != 0.0));
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((0.1 * x - y).abs() <= 1e-12 * x.abs().max(1e-300));
            }
        }
        assert_eq!(full.get(model.params.pk_out.w), scaled.get(model.params.pk_out.w));
    }
}
