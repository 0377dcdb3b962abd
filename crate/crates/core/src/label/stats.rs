//! Summary statistics of a labeled corpus.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::annotators::{agreement, cooccurrence};
use super::{AnnotationResponse, Label, Verb, VerbLabels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbStats {
    pub verb: String,
    pub yes: usize,
    pub no: usize,
    pub masked: usize,
    /// yes / (yes + no); `None` when every clip is masked.
    pub base_rate: Option<f64>,
    /// Mean share of workers agreeing with the majority, when responses
    /// are available.
    pub agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub clips: usize,
    pub verbs: Vec<VerbStats>,
    /// Raw-response co-occurrence, `[given][other]`, when responses are
    /// available.
    pub cooccurrence: Option<Vec<Vec<Option<f64>>>>,
}

pub fn label_stats(labels: &[VerbLabels], responses: Option<&[AnnotationResponse]>) -> LabelStats {
    let agree = responses.map(agreement);
    let verbs = Verb::ALL
        .iter()
        .map(|&v| {
            let c = v.code();
            let count = |want: Label| labels.iter().filter(|l| l.0[c] == want).count();
            let (yes, no, masked) = (count(Label::Yes), count(Label::No), count(Label::Masked));
            VerbStats {
                verb: v.name().to_string(),
                yes,
                no,
                masked,
                base_rate: (yes + no > 0).then(|| yes as f64 / (yes + no) as f64),
                agreement: agree.and_then(|a| a[c]),
            }
        })
        .collect();
    let cooccurrence = responses.map(|r| cooccurrence(r).0.iter().map(|row| row.to_vec()).collect());
    LabelStats {
        clips: labels.len(),
        verbs,
        cooccurrence,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

impl LabelStats {
    /// Aligned plain-text table, one verb per line.
    pub fn to_table(&self) -> String {
        let mut s = format!("{} clips\n", self.clips);
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>6} {:>6} {:>9} {:>9}",
            "verb", "yes", "no", "masked", "base_rate", "agreement"
        );
        for v in &self.verbs {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>6} {:>6} {:>9} {:>9}",
                v.verb,
                v.yes,
                v.no,
                v.masked,
                fmt_opt(v.base_rate),
                fmt_opt(v.agreement)
            );
        }
        s
    }

    /// `p(other | given)` from the co-occurrence matrix.
    pub fn cooccur(&self, given: Verb, other: Verb) -> Option<f64> {
        self.cooccurrence
            .as_ref()?
            .get(given.code())?
            .get(other.code())
            .copied()
            .flatten()
    }
}
