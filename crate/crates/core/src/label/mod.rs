//! Verb inventory, label vectors and annotation records.

pub mod annotators;
pub mod ingest;
pub mod oracle;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use annotators::{
    aggregate_majority, agreement, cooccurrence, cooccurrence_majority, majority_labels, simulate_annotators,
    CooccurrenceMatrix,
};
pub use ingest::{import_reader, import_table, IngestConfig};
pub use oracle::{heuristic_filter, oracle_label, OracleConfig, Provenance};
pub use stats::{label_stats, LabelStats, VerbStats};

pub const NUM_VERBS: usize = 24;

/// The 24 queried verbs; `code()` is the position in [`Verb::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verb {
    Fall,
    Carry,
    FallOff,
    FallOver,
    Bounce,
    Drop,
    PickUp,
    Push,
    Topple,
    Bump,
    Tumble,
    Roll,
    PutDown,
    Hit,
    Throw,
    Flip,
    Toss,
    Tip,
    Stop,
    Spin,
    Slap,
    Slide,
    Start,
    Turn,
}

const NAMES: [&str; NUM_VERBS] = [
    "fall",
    "carry",
    "fall off",
    "fall over",
    "bounce",
    "drop",
    "pick up",
    "push",
    "topple",
    "bump",
    "tumble",
    "roll",
    "put down",
    "hit",
    "throw",
    "flip",
    "toss",
    "tip",
    "stop",
    "spin",
    "slap",
    "slide",
    "start",
    "turn",
];

impl Verb {
    pub const ALL: [Verb; NUM_VERBS] = [
        Verb::Fall,
        Verb::Carry,
        Verb::FallOff,
        Verb::FallOver,
        Verb::Bounce,
        Verb::Drop,
        Verb::PickUp,
        Verb::Push,
        Verb::Topple,
        Verb::Bump,
        Verb::Tumble,
        Verb::Roll,
        Verb::PutDown,
        Verb::Hit,
        Verb::Throw,
        Verb::Flip,
        Verb::Toss,
        Verb::Tip,
        Verb::Stop,
        Verb::Spin,
        Verb::Slap,
        Verb::Slide,
        Verb::Start,
        Verb::Turn,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Verb> {
        Verb::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        NAMES[self.code()]
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verb {
    type Err = Error;

    /// Accepts the verb name with spaces, underscores or hyphens.
    fn from_str(s: &str) -> Result<Verb> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        NAMES
            .iter()
            .position(|n| *n == norm)
            .map(|i| Verb::ALL[i])
            .ok_or_else(|| Error::invalid(format!("unknown verb {s:?}")))
    }
}

impl Serialize for Verb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Verb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Verb, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Yes,
    No,
    /// Not asked; excluded from every loss and metric.
    Masked,
}

impl Label {
    pub fn from_bool(b: bool) -> Label {
        if b {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn is_masked(self) -> bool {
        self == Label::Masked
    }

    /// 1.0 for yes, 0.0 otherwise.
    pub fn target(self) -> f64 {
        if self == Label::Yes {
            1.0
        } else {
            0.0
        }
    }
}

/// One label per verb, indexed by verb code. Serialized as an array of
/// `true`, `false` or `null` (masked).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VerbLabels(pub [Label; NUM_VERBS]);

impl VerbLabels {
    pub fn all_masked() -> VerbLabels {
        VerbLabels([Label::Masked; NUM_VERBS])
    }

    pub fn get(&self, v: Verb) -> Label {
        self.0[v.code()]
    }

    pub fn set(&mut self, v: Verb, l: Label) {
        self.0[v.code()] = l;
    }

    pub fn mask(&self) -> [bool; NUM_VERBS] {
        self.0.map(|l| !l.is_masked())
    }
}

impl Serialize for VerbLabels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Option<bool>> = self
            .0
            .iter()
            .map(|l| match l {
                Label::Yes => Some(true),
                Label::No => Some(false),
                Label::Masked => None,
            })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for VerbLabels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<VerbLabels, D::Error> {
        let v: Vec<Option<bool>> = Vec::deserialize(d)?;
        if v.len() != NUM_VERBS {
            return Err(serde::de::Error::custom(format!(
                "expected {NUM_VERBS} labels, got {}",
                v.len()
            )));
        }
        let mut out = VerbLabels::all_masked();
        for (i, l) in v.into_iter().enumerate() {
            out.0[i] = match l {
                Some(true) => Label::Yes,
                Some(false) => Label::No,
                None => Label::Masked,
            };
        }
        Ok(out)
    }
}

/// Labels of one clip as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub clip_id: String,
    pub labels: VerbLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Yes,
    No,
    Unsure,
}

impl FromStr for Response {
    type Err = Error;

    fn from_str(s: &str) -> Result<Response> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" | "1" => Ok(Response::Yes),
            "no" | "n" | "false" | "0" => Ok(Response::No),
            "unsure" | "not sure" | "?" | "-1" => Ok(Response::Unsure),
            other => Err(Error::invalid(format!("unknown response {other:?}"))),
        }
    }
}

/// One worker's answer to "does this clip show <verb>?".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub clip_id: String,
    pub verb: Verb,
    pub worker: String,
    pub response: Response,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_inventory_order() {
        for (i, v) in Verb::ALL.iter().enumerate() {
            assert_eq!(v.code(), i);
            assert_eq!(Verb::from_code(i), Some(*v));
            assert_eq!(v.name().parse::<Verb>().unwrap(), *v);
        }
        assert_eq!(Verb::ALL[0].name(), "fall");
        assert_eq!(Verb::ALL[23].name(), "turn");
        assert_eq!("pick_up".parse::<Verb>().unwrap(), Verb::PickUp);
    }

    #[test]
    fn labels_round_trip_through_json() {
        let mut l = VerbLabels::all_masked();
        l.set(Verb::Roll, Label::Yes);
        l.set(Verb::Slide, Label::No);
        let text = serde_json::to_string(&l).unwrap();
        assert!(text.starts_with("[null"));
        assert_eq!(serde_json::from_str::<VerbLabels>(&text).unwrap(), l);
    }
}
