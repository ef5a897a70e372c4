//! JSON-lines and CSV ingestion.
//!
//! JSONL is the canonical on-disk form, one post per line:
//! `{"id", "author", "text", "domain", "label", "annotator_labels", "confusing"}`.
//! CSV import accepts either the same column names (domain defaults to `EN`)
//! or the therapist Q&A export layout (`Id_Number`, `Patient Question`,
//! `Dominant Distortion`).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{CorpusError, Dataset, Domain, Label, Post};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::config("format", format!("unknown format `{other}`"))),
        }
    }
}

pub fn load_posts(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(load_posts_from_str(&content, format)?)
}

pub fn load_posts_from_str(content: &str, format: Format) -> Result<Dataset, CorpusError> {
    let posts = match format {
        Format::Jsonl => parse_jsonl(content)?,
        Format::Csv => parse_csv(content)?,
    };
    Dataset::new(posts)
}

fn parse_jsonl(content: &str) -> Result<Vec<Post>, CorpusError> {
    let mut posts = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| CorpusError::MalformedRecord { line: line_no, message: e.to_string() })?;
        let Value::Object(obj) = value else {
            return Err(CorpusError::MalformedRecord { line: line_no, message: "expected a JSON object".into() });
        };
        posts.push(post_from_object(&obj, line_no)?);
    }
    Ok(posts)
}

fn malformed(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord { line, message: message.into() }
}

fn string_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<Option<String>, CorpusError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) if name == "id" => Ok(Some(n.to_string())),
        Some(_) => Err(malformed(line, format!("field `{name}` must be a string"))),
    }
}

fn label_value(v: &Value, line: usize) -> Result<Label, CorpusError> {
    v.as_u64()
        .and_then(|n| Label::from_index(n as usize))
        .ok_or_else(|| malformed(line, format!("label must be 0 or 1, got {v}")))
}

fn post_from_object(obj: &Map<String, Value>, line: usize) -> Result<Post, CorpusError> {
    let id = string_field(obj, "id", line)?.ok_or_else(|| CorpusError::MissingField("id".into()))?;
    let text = string_field(obj, "text", line)?.ok_or_else(|| CorpusError::MissingField("text".into()))?;
    let domain = string_field(obj, "domain", line)?.ok_or_else(|| CorpusError::MissingField("domain".into()))?;
    let domain = Domain::from_str(&domain)?;
    let author = string_field(obj, "author", line)?.unwrap_or_default();
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => Some(label_value(v, line)?),
    };
    let annotator_labels = match obj.get("annotator_labels") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(items.iter().map(|v| label_value(v, line)).collect::<Result<_, _>>()?),
        Some(_) => return Err(malformed(line, "annotator_labels must be an array")),
    };
    let confusing = match obj.get("confusing") {
        None | Some(Value::Null) => None,
        Some(Value::Bool(b)) => Some(*b),
        Some(_) => return Err(malformed(line, "confusing must be a boolean")),
    };
    Ok(Post { id, author, text, domain, label, annotator_labels, confusing })
}

fn parse_csv(content: &str) -> Result<Vec<Post>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(content.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);

    let qa_layout = col("Patient Question").is_some();
    let id_col = if qa_layout { col("Id_Number") } else { col("id") };
    let text_col = if qa_layout { col("Patient Question") } else { col("text") };
    let label_col = if qa_layout { col("Dominant Distortion") } else { col("label") };
    let domain_col = col("domain");
    let author_col = col("author");
    let confusing_col = col("confusing");

    let text_col = text_col.ok_or_else(|| CorpusError::MissingField("text".into()))?;
    let id_col = id_col.ok_or_else(|| CorpusError::MissingField("id".into()))?;

    let mut posts = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| malformed(line, e.to_string()))?;
        let get = |c: Option<usize>| c.and_then(|c| record.get(c)).map(str::trim);
        let id = get(Some(id_col)).filter(|s| !s.is_empty()).ok_or_else(|| CorpusError::MissingField("id".into()))?;
        let text = record.get(text_col).ok_or_else(|| CorpusError::MissingField("text".into()))?;
        let domain = match get(domain_col) {
            Some(d) if !d.is_empty() => Domain::from_str(d)?,
            _ => Domain::EN,
        };
        let label = match get(label_col) {
            None | Some("") => None,
            Some(raw) if qa_layout => {
                Some(if raw.eq_ignore_ascii_case("No Distortion") { Label::NotDistorted } else { Label::Distorted })
            }
            Some("0") => Some(Label::NotDistorted),
            Some("1") => Some(Label::Distorted),
            Some(other) => return Err(malformed(line, format!("label must be 0 or 1, got `{other}`"))),
        };
        let confusing = match get(confusing_col) {
            None | Some("") => None,
            Some("true") => Some(true),
            Some("false") => Some(false),
            Some(other) => return Err(malformed(line, format!("confusing must be true/false, got `{other}`"))),
        };
        posts.push(Post {
            id: id.to_string(),
            author: get(author_col).unwrap_or_default().to_string(),
            text: text.to_string(),
            domain,
            label,
            annotator_labels: None,
            confusing,
        });
    }
    Ok(posts)
}

pub fn to_jsonl(dataset: &Dataset) -> String {
    let mut out = String::new();
    for post in dataset {
        out.push_str(&serde_json::to_string(post).expect("post serializes"));
        out.push('\n');
    }
    out
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(dataset)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_empty_dataset() {
        assert!(load_posts_from_str("", Format::Jsonl).unwrap().is_empty());
        assert!(load_posts_from_str("\n\n", Format::Jsonl).unwrap().is_empty());
    }

    #[test]
    fn missing_text_is_reported() {
        let err = load_posts_from_str(r#"{"id":"1","domain":"EN","label":1}"#, Format::Jsonl).unwrap_err();
        assert_eq!(err, CorpusError::MissingField("text".into()));
    }

    #[test]
    fn malformed_and_unknown_domain() {
        let src = "{\"id\":\"1\",\"text\":\"a\",\"domain\":\"EN\"}\n{not json";
        assert!(matches!(
            load_posts_from_str(src, Format::Jsonl).unwrap_err(),
            CorpusError::MalformedRecord { line: 2, .. }
        ));
        let err = load_posts_from_str(r#"{"id":"1","text":"a","domain":"FR"}"#, Format::Jsonl).unwrap_err();
        assert_eq!(err, CorpusError::UnknownDomainTag("FR".into()));
        let err = load_posts_from_str(r#"{"id":"1","text":"a","domain":"EN","label":3}"#, Format::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn unknown_fields_ignored_and_order_kept() {
        let src = "{\"id\":\"b\",\"text\":\"x\",\"domain\":\"KT\",\"extra\":5,\"label\":0}\n{\"id\":\"a\",\"text\":\"y\",\"domain\":\"EN\",\"label\":null,\"annotator_labels\":[1,0],\"confusing\":true}";
        let ds = load_posts_from_str(src, Format::Jsonl).unwrap();
        assert_eq!(ds.posts()[0].id, "b");
        assert_eq!(ds.posts()[0].label, Some(Label::NotDistorted));
        assert_eq!(ds.posts()[1].annotator_labels, Some(vec![Label::Distorted, Label::NotDistorted]));
        assert_eq!(ds.posts()[1].confusing, Some(true));
    }

    #[test]
    fn roundtrip_through_jsonl() {
        let src = "{\"id\":\"a\",\"author\":\"user12345678\",\"text\":\"é \\\"q\\\"\",\"domain\":\"R\",\"label\":1,\"annotator_labels\":[1,1],\"confusing\":false}";
        let ds = load_posts_from_str(src, Format::Jsonl).unwrap();
        let again = load_posts_from_str(&to_jsonl(&ds), Format::Jsonl).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn csv_generic_and_qa_layouts() {
        let generic = "id,text,label\n1,\"I always fail, always\",1\n2,fine day,0\n";
        let ds = load_posts_from_str(generic, Format::Csv).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.posts()[0].text, "I always fail, always");
        assert_eq!(ds.posts()[0].domain, Domain::EN);

        let qa = "Id_Number,Patient Question,Distorted part,Dominant Distortion,Secondary Distortion (Optional)\n\
                  4500,Everyone hates me,Everyone hates me,Mind Reading,\n\
                  4501,I went shopping,,No Distortion,\n";
        let ds = load_posts_from_str(qa, Format::Csv).unwrap();
        assert_eq!(ds.labels().unwrap(), vec![Label::Distorted, Label::NotDistorted]);

        let no_text = "id,label\n1,1\n";
        assert_eq!(load_posts_from_str(no_text, Format::Csv).unwrap_err(), CorpusError::MissingField("text".into()));
    }
}
