//! Structured-text checkpoints: config, vocabularies, and every parameter by
//! name and shape.

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelInstance, Vocab};
use crate::annot::CodeVocabulary;
use crate::corpus::json_error;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "ddi-checkpoint/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    version: String,
    seed: u64,
    config: ModelConfig,
    codes: CodeVocabulary,
    vocab: Vocab,
    params: Vec<ParamRecord>,
}

/// Serializes the model; identical states give identical bytes.
pub fn save_checkpoint(model: &ModelInstance) -> Result<Vec<u8>> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION.to_string(),
        seed: model.seed,
        config: model.config.clone(),
        codes: model.codes.clone(),
        vocab: model.vocab.clone(),
        params: model
            .store
            .iter()
            .map(|(_, name, t)| ParamRecord {
                name: name.to_string(),
                rows: t.rows,
                cols: t.cols,
                values: t.data.clone(),
            })
            .collect(),
    };
    if file.params.iter().any(|p| p.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training("non-finite parameter value".into()));
    }
    let mut bytes = serde_json::to_vec(&file).map_err(|e| Error::Invalid(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Rebuilds the network from its config and overwrites every parameter.
pub fn load_checkpoint(bytes: &[u8]) -> Result<ModelInstance> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format { line: 1, message: e.to_string() })?;
    let probe: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
    let version = probe.get("version").and_then(|v| v.as_str()).unwrap_or("");
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version.to_string(), expected: CHECKPOINT_VERSION.to_string() });
    }
    let file: CheckpointFile =
        serde_json::from_value(probe).map_err(|e| Error::Format { line: 0, message: e.to_string() })?;
    let mut vocab = file.vocab;
    vocab.reindex();
    let codes = CodeVocabulary::new(file.codes.codes)?;
    let mut model = ModelInstance::new(file.config, vocab, codes, None, file.seed)?;
    if file.params.len() != model.store.len() {
        return Err(Error::Shape(format!(
            "checkpoint holds {} parameters, model has {}",
            file.params.len(),
            model.store.len()
        )));
    }
    for rec in file.params {
        let id = model.store.id(&rec.name).ok_or_else(|| Error::Shape(format!("unknown parameter {:?}", rec.name)))?;
        let t = model.store.get_mut(id);
        if (t.rows, t.cols) != (rec.rows, rec.cols) || rec.values.len() != rec.rows * rec.cols {
            return Err(Error::Shape(format!(
                "parameter {:?}: checkpoint {}x{} ({} values), model {}x{}",
                rec.name,
                rec.rows,
                rec.cols,
                rec.values.len(),
                t.rows,
                t.cols
            )));
        }
        t.data = rec.values;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dropout, Head};
    use crate::neural::Graph;
    use crate::tagging::tokenize;

    #[test]
    fn round_trip_is_bit_identical() {
        let toks = tokenize("Digoxin levels rose sharply .");
        let vocab = Vocab::new(toks.iter().map(|t| t.text.clone()), toks.iter().flat_map(|t| t.text.chars()));
        let mut model =
            ModelInstance::new(ModelConfig::micro(), vocab, CodeVocabulary::placeholder(), None, 9).unwrap();
        let w = model.params.ner_out.w;
        model.store.get_mut(w).data[0] = 0.1 + 0.2;
        let input = model.encode(&toks);
        let bytes = save_checkpoint(&model).unwrap();
        let loaded = load_checkpoint(&bytes).unwrap();
        assert_eq!(save_checkpoint(&loaded).unwrap(), bytes);
        let run = |m: &ModelInstance| {
            let mut a = m.analyze(&input).unwrap();
            let mut out: Vec<f64> = a.tag_probs().concat();
            out.extend(a.head_probs(&input.words, Head::Pk).unwrap());
            out
        };
        assert_eq!(run(&model), run(&loaded));
        let mut g = Graph::new(&loaded.store);
        assert!(loaded.encode_context(&mut g, &input, &mut Dropout::off()).is_ok());
    }

    #[test]
    fn rejects_wrong_version_and_tampered_shapes() {
        let vocab = Vocab::new(["x".to_string()], "x".chars());
        let model = ModelInstance::new(ModelConfig::micro(), vocab, CodeVocabulary::placeholder(), None, 0).unwrap();
        let text = String::from_utf8(save_checkpoint(&model).unwrap()).unwrap();
        let old = text.replacen(CHECKPOINT_VERSION, "ddi-checkpoint/0", 1);
        assert!(matches!(load_checkpoint(old.as_bytes()), Err(Error::Version { .. })));
        let bad = text.replacen("\"rows\":", "\"rows\":9", 1);
        assert!(load_checkpoint(bad.as_bytes()).is_err());
    }
}
