//! Single-file model checkpoints.
//!
//! Layout: the header line `regidapt-ckpt-v1`, then one JSON document with
//! the model config, vocabulary, optional lexicon augmentation, the named
//! parameter tensors with their shapes, and optional extra sections (DCCL
//! components are stored this way).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, ModelConfig};
use super::params::ParamGroup;
use super::vocab::Vocab;
use super::EncoderError;
use crate::error::{Error, Result};
use crate::lexicon::LexiconAugmentation;

pub const HEADER: &str = "regidapt-ckpt-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Extra named component stored next to the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    config: ModelConfig,
    vocab: Vocab,
    augmentation: Option<LexiconAugmentation>,
    head_input_dim: usize,
    tensors: Vec<TensorRecord>,
    #[serde(default)]
    sections: BTreeMap<String, Section>,
}

pub fn records_of<P: ParamGroup + ?Sized>(params: &P) -> Vec<TensorRecord> {
    params
        .tensors()
        .into_iter()
        .zip(params.shapes())
        .map(|((name, data), shape)| TensorRecord { name: name.to_string(), shape, data: data.to_vec() })
        .collect()
}

/// Copies `records` into `params`, matching by name and checking shapes.
pub fn restore_into<P: ParamGroup + ?Sized>(params: &mut P, records: &[TensorRecord]) -> Result<(), EncoderError> {
    let by_name: BTreeMap<&str, &TensorRecord> = records.iter().map(|r| (r.name.as_str(), r)).collect();
    let shapes = params.shapes();
    for ((name, data), shape) in params.tensors_mut().into_iter().zip(shapes) {
        let rec = by_name.get(name).ok_or_else(|| EncoderError::Checkpoint(format!("missing tensor `{name}`")))?;
        if rec.shape != shape || rec.data.len() != data.len() {
            return Err(EncoderError::Checkpoint(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                rec.shape
            )));
        }
        data.copy_from_slice(&rec.data);
    }
    Ok(())
}

pub fn to_string(model: &EncoderModel, sections: &BTreeMap<String, Section>) -> String {
    let body = Body {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        augmentation: model.augmentation.clone(),
        head_input_dim: model.head.weight.cols,
        tensors: records_of(model),
        sections: sections.clone(),
    };
    let json = serde_json::to_string(&body).expect("checkpoint serializes");
    format!("{HEADER}\n{json}\n")
}

pub fn from_str(content: &str) -> Result<(EncoderModel, BTreeMap<String, Section>), EncoderError> {
    let (header, json) = content.split_once('\n').unwrap_or((content, ""));
    if header.trim_end() != HEADER {
        return Err(EncoderError::Checkpoint(format!("unsupported header `{}`", header.trim_end())));
    }
    let body: Body = serde_json::from_str(json).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
    let mut model = EncoderModel::new(body.config, body.vocab, body.augmentation, 0);
    if model.head.weight.cols != body.head_input_dim {
        return Err(EncoderError::Checkpoint("head width does not match augmentation".into()));
    }
    restore_into(&mut model, &body.tensors)?;
    Ok((model, body.sections))
}

pub fn save(path: impl AsRef<Path>, model: &EncoderModel, sections: &BTreeMap<String, Section>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_string(model, sections)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(EncoderModel, BTreeMap<String, Section>)> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(from_str(&content)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let config = ModelConfig { embed_dim: 4, hidden_dim: 6, adapter_width: Some(3), max_vocab: None };
        let model = EncoderModel::from_corpus(&["a b c", "d e"], config, 5);
        let text = to_string(&model, &BTreeMap::new());
        assert!(text.starts_with("regidapt-ckpt-v1\n"));
        let (back, sections) = from_str(&text).unwrap();
        assert_eq!(back, model);
        assert!(sections.is_empty());
    }

    #[test]
    fn rejects_bad_header_and_shapes() {
        assert!(matches!(from_str("nope\n{}"), Err(EncoderError::Checkpoint(_))));
        let config = ModelConfig { embed_dim: 2, hidden_dim: 3, adapter_width: None, max_vocab: None };
        let model = EncoderModel::from_corpus(&["x"], config, 1);
        let text = to_string(&model, &BTreeMap::new()).replace("\"shape\":[3,2]", "\"shape\":[2,3]");
        assert!(matches!(from_str(&text), Err(EncoderError::Checkpoint(_))));
    }
}
