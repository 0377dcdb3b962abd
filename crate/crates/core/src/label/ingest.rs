//! Import of externally collected annotations.
//!
//! The native format is line-delimited JSON with keys `clip_id`, `verb`,
//! `worker` and `response` ([`crate::io::load_jsonl`] reads it directly).
//! Tabular exports are mapped into that schema by [`import_table`]: each
//! row is one response, and [`IngestConfig`] names the columns holding the
//! four fields. Verb names may use spaces, underscores or hyphens;
//! responses may be yes/no/unsure, y/n, true/false or 1/0/-1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotationResponse, Response, Verb};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub clip_column: String,
    pub verb_column: String,
    pub worker_column: String,
    pub response_column: String,
    /// Single-byte field delimiter.
    pub delimiter: char,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            clip_column: "clip_id".into(),
            verb_column: "verb".into(),
            worker_column: "worker".into(),
            response_column: "response".into(),
            delimiter: ',',
        }
    }
}

/// Reads a delimited table with a header row.
pub fn import_table(path: &Path, cfg: &IngestConfig) -> Result<Vec<AnnotationResponse>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    import_reader(file, cfg)
}

pub fn import_reader<R: std::io::Read>(reader: R, cfg: &IngestConfig) -> Result<Vec<AnnotationResponse>> {
    if !cfg.delimiter.is_ascii() {
        return Err(Error::Config(format!(
            "delimiter {:?} is not a single byte",
            cfg.delimiter
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            record: 0,
            field: "<header>".into(),
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in header")))
    };
    let (ci, vi, wi, ri) = (
        column(&cfg.clip_column)?,
        column(&cfg.verb_column)?,
        column(&cfg.worker_column)?,
        column(&cfg.response_column)?,
    );
    let mut out = Vec::new();
    for (record, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            record,
            field: "<row>".into(),
            message: e.to_string(),
        })?;
        let get = |i: usize, field: &str| {
            row.get(i).ok_or_else(|| Error::Parse {
                record,
                field: field.into(),
                message: "missing column".into(),
            })
        };
        let bad = |field: &str, e: Error| Error::Parse {
            record,
            field: field.into(),
            message: e.to_string(),
        };
        let verb: Verb = get(vi, "verb")?.parse().map_err(|e| bad("verb", e))?;
        let response: Response = get(ri, "response")?.parse().map_err(|e| bad("response", e))?;
        out.push(AnnotationResponse {
            clip_id: get(ci, "clip_id")?.to_string(),
            verb,
            worker: get(wi, "worker")?.to_string(),
            response,
        });
    }
    Ok(out)
}
