use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Dataset, Domain, Label};
use crate::encoder::Backbone;
use crate::par::{self, Execution};

/// One exported embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub domain: Domain,
    pub label: Option<Label>,
    pub embedding: Vec<f64>,
}

/// Embeds every post and writes one JSON line per post.
pub fn export_embeddings(
    model: &dyn Backbone,
    dataset: &Dataset,
    path: impl AsRef<Path>,
    exec: Execution,
) -> crate::Result<Vec<EmbeddingRecord>> {
    let records = par::map(exec, dataset.posts(), |p| EmbeddingRecord {
        id: p.id.clone(),
        domain: p.domain,
        label: p.label,
        embedding: model.embed(&p.text),
    });
    write_embeddings(path, &records)?;
    Ok(records)
}

pub fn write_embeddings(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> crate::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| crate::Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> crate::Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Malformed { line: i + 1, message: e.to_string() }.into())
        })
        .collect()
}
