//! JSON checkpoints: schema version, config echo, normalization and every
//! parameter tensor by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{Classifier, Encoder};
use super::nn::{Dense, ParamSet};
use super::Standardizer;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::label::NUM_VERBS;

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Activation applied after the layer this tensor belongs to.
    pub activation: String,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// `encoder` for a pretrained encoder, otherwise the approach name.
    pub kind: String,
    pub config: serde_json::Value,
    pub standardizer: Standardizer,
    pub tensors: Vec<TensorRecord>,
    #[serde(default)]
    pub log: serde_json::Value,
}

fn shapes(enc: Option<&Encoder>, head: Option<&Dense>) -> Vec<(Vec<usize>, &'static str)> {
    let mut v = Vec::new();
    if let Some(e) = enc {
        let (d, h) = (e.embed_width(), e.hidden());
        v.extend([
            (vec![d, e.embed.inputs()], "identity"),
            (vec![d], "identity"),
            (vec![4 * h, d], "lstm"),
            (vec![4 * h, h], "lstm"),
            (vec![4 * h], "lstm"),
            (vec![e.project.outputs(), h], "identity"),
            (vec![e.project.outputs()], "identity"),
        ]);
    }
    if let Some(hd) = head {
        v.extend([
            (vec![hd.outputs(), hd.inputs()], "sigmoid"),
            (vec![hd.outputs()], "sigmoid"),
        ]);
    }
    v
}

fn records<P: ParamSet>(p: &P, shapes: Vec<(Vec<usize>, &'static str)>) -> Vec<TensorRecord> {
    p.tensor_names()
        .into_iter()
        .zip(p.tensors())
        .zip(shapes)
        .map(|((name, data), (shape, act))| TensorRecord {
            name,
            shape,
            activation: act.into(),
            data: data.to_vec(),
        })
        .collect()
}

impl Checkpoint {
    pub fn from_encoder<C: Serialize, L: Serialize>(
        config: &C,
        std: &Standardizer,
        enc: &Encoder,
        log: &L,
    ) -> Result<Checkpoint> {
        Ok(Checkpoint {
            schema_version: CHECKPOINT_SCHEMA,
            kind: "encoder".into(),
            config: serde_json::to_value(config)?,
            standardizer: std.clone(),
            tensors: records(enc, shapes(Some(enc), None)),
            log: serde_json::to_value(log)?,
        })
    }

    pub fn from_classifier<C: Serialize, L: Serialize>(
        kind: &str,
        config: &C,
        std: &Standardizer,
        clf: &Classifier,
        log: &L,
    ) -> Result<Checkpoint> {
        Ok(Checkpoint {
            schema_version: CHECKPOINT_SCHEMA,
            kind: kind.into(),
            config: serde_json::to_value(config)?,
            standardizer: std.clone(),
            tensors: records(clf, shapes(clf.encoder.as_ref(), Some(&clf.head))),
            log: serde_json::to_value(log)?,
        })
    }

    fn find(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn fill<P: ParamSet>(&self, p: &mut P) -> Result<()> {
        let names = p.tensor_names();
        for (name, dst) in names.iter().zip(p.tensors_mut()) {
            let rec = self
                .find(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor {name}")))?;
            if rec.data.len() != dst.len() || rec.shape.iter().product::<usize>() != dst.len() {
                return Err(Error::invalid(format!(
                    "tensor {name}: shape {:?} with {} values does not fit {} parameters",
                    rec.shape,
                    rec.data.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(&rec.data);
        }
        if !p.is_finite() {
            return Err(Error::invalid("checkpoint holds non-finite parameters"));
        }
        Ok(())
    }

    fn encoder_shell(&self, prefix: &str) -> Result<Option<Encoder>> {
        let (Some(embed), Some(wh)) = (
            self.find(&format!("{prefix}embed.w")),
            self.find(&format!("{prefix}lstm.wh")),
        ) else {
            return Ok(None);
        };
        if embed.shape.len() != 2 || wh.shape.len() != 2 {
            return Err(Error::invalid("encoder tensors must be matrices"));
        }
        Ok(Some(Encoder::zeros(embed.shape[0], wh.shape[1])))
    }

    pub fn encoder(&self) -> Result<Encoder> {
        self.check_version()?;
        let mut enc = self
            .encoder_shell("")?
            .ok_or_else(|| Error::invalid(format!("checkpoint of kind {:?} has no encoder", self.kind)))?;
        self.fill(&mut enc)?;
        Ok(enc)
    }

    pub fn classifier(&self) -> Result<Classifier> {
        self.check_version()?;
        let head = self
            .find("head.w")
            .ok_or_else(|| Error::invalid(format!("checkpoint of kind {:?} has no head", self.kind)))?;
        if head.shape.len() != 2 || head.shape[0] != NUM_VERBS {
            return Err(Error::invalid("head must be a 24-row matrix"));
        }
        let mut clf = Classifier {
            encoder: self.encoder_shell("")?,
            head: Dense::zeros(NUM_VERBS, head.shape[1]),
        };
        self.fill(&mut clf)?;
        Ok(clf)
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != CHECKPOINT_SCHEMA {
            return Err(Error::invalid(format!(
                "checkpoint schema {} is not supported (expected {CHECKPOINT_SCHEMA})",
                self.schema_version
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(ck)?;
    write_atomic(path, &text)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.check_version()?;
    Ok(ck)
}
