//! Average precision, baselines and the approach comparison.

pub mod ap;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ap::{average_precision, expected_random_ap, mean_average_precision, mean_defined, verb_ap};

use crate::error::{Error, Result};
use crate::label::{Label, Verb, VerbLabels, NUM_VERBS};
use crate::model::train::{predict_all, represent_all};
use crate::model::{train_end_to_end, train_linear_head, Classifier, Encoder, HeadConfig, LabeledSet, TrainLog};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    RandomStratified,
    Perceptron,
    Supervised,
    Probe,
    Finetune,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::RandomStratified,
        Approach::Perceptron,
        Approach::Supervised,
        Approach::Probe,
        Approach::Finetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::RandomStratified => "random_stratified",
            Approach::Perceptron => "perceptron",
            Approach::Supervised => "supervised",
            Approach::Probe => "probe",
            Approach::Finetune => "finetune",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Approach> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown approach {s:?}")))
    }
}

/// Session ids of each split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// Shuffles sessions with `seed` and cuts them 70/15/15. Every split
    /// gets at least one session when there are three or more.
    pub fn by_session(session_ids: &[String], seed: u64) -> Split {
        let mut ids: Vec<String> = session_ids.to_vec();
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let mut n_test = (n as f64 * 0.15).round() as usize;
        let mut n_val = (n as f64 * 0.15).round() as usize;
        if n >= 3 {
            n_test = n_test.max(1);
            n_val = n_val.max(1);
        }
        let n_train = n.saturating_sub(n_val + n_test);
        Split {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        }
    }

    /// Fails if any session appears in two splits.
    pub fn check_leakage(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, &'static str> = BTreeMap::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for id in ids {
                if let Some(first) = seen.insert(id, name) {
                    if first != name {
                        return Err(Error::SplitLeakage {
                            session_id: id.clone(),
                            first,
                            second: name,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn part_of(&self, session_id: &str) -> Option<&'static str> {
        if self.train.iter().any(|s| s == session_id) {
            Some("train")
        } else if self.val.iter().any(|s| s == session_id) {
            Some("val")
        } else if self.test.iter().any(|s| s == session_id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Per-verb fraction of unmasked labels that are yes; `None` for verbs
/// never asked.
pub fn positive_rates(labels: &[VerbLabels]) -> [Option<f64>; NUM_VERBS] {
    std::array::from_fn(|v| {
        let asked: Vec<bool> = labels
            .iter()
            .filter(|l| !l.0[v].is_masked())
            .map(|l| l.0[v] == Label::Yes)
            .collect();
        (!asked.is_empty()).then(|| asked.iter().filter(|&&y| y).count() as f64 / asked.len() as f64)
    })
}

/// Random stratified predictions: every clip-verb is predicted positive
/// with the training positive rate, ties are broken uniformly at random,
/// and AP is averaged over `trials`.
pub fn random_stratified<R: Rng + ?Sized>(
    train_rates: &[Option<f64>; NUM_VERBS],
    test_labels: &[VerbLabels],
    rng: &mut R,
    trials: usize,
) -> Result<([Option<f64>; NUM_VERBS], Option<f64>)> {
    if trials == 0 {
        return Err(Error::invalid("random stratified baseline needs at least one trial"));
    }
    let mut sums = [0.0; NUM_VERBS];
    let mut defined = [false; NUM_VERBS];
    for _ in 0..trials {
        let scores: Vec<[f64; NUM_VERBS]> = test_labels
            .iter()
            .map(|_| {
                std::array::from_fn(|v| {
                    let p = train_rates[v].unwrap_or(0.0);
                    let hit = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                    hit + 0.5 * rng.random::<f64>()
                })
            })
            .collect();
        let (per, _) = mean_average_precision(&scores, test_labels);
        for v in 0..NUM_VERBS {
            if let Some(a) = per[v] {
                sums[v] += a;
                defined[v] = true;
            }
        }
    }
    let per: [Option<f64>; NUM_VERBS] = std::array::from_fn(|v| defined[v].then(|| sums[v] / trials as f64));
    Ok((per, mean_defined(&per)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    /// Raw-feature perceptron within 3 AP points of the best approach.
    Trivial,
    /// Pretrained probe at least 5 AP points above the perceptron.
    Tractable,
    Hard,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Trivial => "trivial",
            Category::Tractable => "tractable",
            Category::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResult {
    pub approach: Approach,
    /// Indexed by verb code; `None` where the test split has no positives.
    pub per_verb: Vec<Option<f64>>,
    pub map: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_sessions: usize,
    pub val_sessions: usize,
    pub test_sessions: usize,
    pub train_clips: usize,
    pub val_clips: usize,
    pub test_clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub verbs: Vec<String>,
    pub split: SplitSizes,
    pub results: Vec<ApproachResult>,
    pub categories: Vec<Option<Category>>,
    /// Test-split positive rate per verb.
    pub test_positive_rate: Vec<Option<f64>>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn result(&self, a: Approach) -> Option<&ApproachResult> {
        self.results.iter().find(|r| r.approach == a)
    }

    pub fn map(&self, a: Approach) -> Option<f64> {
        self.result(a).and_then(|r| r.map)
    }

    pub fn ap(&self, a: Approach, v: Verb) -> Option<f64> {
        self.result(a).and_then(|r| r.per_verb[v.code()])
    }

    /// AP minus the fully supervised AP for the same verb.
    pub fn delta_vs_supervised(&self, a: Approach, v: Verb) -> Option<f64> {
        Some(self.ap(a, v)? - self.ap(Approach::Supervised, v)?)
    }

    /// Rows `verb, approach, AP, delta_vs_supervised, category`, with a
    /// `mAP` pseudo-verb per approach.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["verb", "approach", "AP", "delta_vs_supervised", "category"])
            .map_err(csv_err)?;
        for v in Verb::ALL {
            for r in &self.results {
                let cat = self.categories[v.code()].map(|c| c.name()).unwrap_or("");
                w.write_record([
                    v.name(),
                    r.approach.name(),
                    &fmt(r.per_verb[v.code()]),
                    &fmt(self.delta_vs_supervised(r.approach, v)),
                    cat,
                ])
                .map_err(csv_err)?;
            }
        }
        let sup = self.map(Approach::Supervised);
        for r in &self.results {
            let delta = r.map.zip(sup).map(|(a, b)| a - b);
            w.write_record(["mAP", r.approach.name(), &fmt(r.map), &fmt(delta), ""])
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Difficulty category of each verb from the per-approach APs.
pub fn categorize(results: &[ApproachResult]) -> Vec<Option<Category>> {
    let get = |a: Approach, v: usize| results.iter().find(|r| r.approach == a).and_then(|r| r.per_verb[v]);
    (0..NUM_VERBS)
        .map(|v| {
            let perceptron = get(Approach::Perceptron, v)?;
            let best = [
                Approach::Perceptron,
                Approach::Supervised,
                Approach::Probe,
                Approach::Finetune,
            ]
            .into_iter()
            .filter_map(|a| get(a, v))
            .fold(f64::NEG_INFINITY, f64::max);
            let probe = get(Approach::Probe, v);
            Some(if perceptron >= best - 0.03 {
                Category::Trivial
            } else if probe.is_some_and(|p| p >= perceptron + 0.05) {
                Category::Tractable
            } else {
                Category::Hard
            })
        })
        .collect()
}

/// Trained models of one comparison.
#[derive(Debug, Clone)]
pub struct Trained {
    pub perceptron: (Classifier, TrainLog),
    pub supervised: (Classifier, TrainLog),
    pub probe: (Classifier, TrainLog),
    pub finetune: (Classifier, TrainLog),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub perceptron: HeadConfig,
    pub probe: HeadConfig,
    pub supervised: HeadConfig,
    pub finetune: HeadConfig,
    pub baseline_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        // Both linear heads get the same settings so that the probe's gain
        // over the perceptron comes from the features alone.
        let linear = HeadConfig {
            learning_rate: 3e-3,
            l2: 1e-5,
            ..HeadConfig::default()
        };
        EvalConfig {
            perceptron: linear.clone(),
            probe: linear,
            supervised: HeadConfig {
                epochs: 40,
                batch_size: 32,
                patience: 8,
                ..HeadConfig::default()
            },
            finetune: HeadConfig {
                learning_rate: 1e-4,
                epochs: 20,
                batch_size: 32,
                patience: 5,
                ..HeadConfig::default()
            },
            baseline_trials: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for h in [&self.perceptron, &self.probe, &self.supervised, &self.finetune] {
            h.validate()?;
        }
        if self.baseline_trials == 0 {
            return Err(Error::Config("eval: baseline_trials must be positive".into()));
        }
        Ok(())
    }

    /// Copies of the head configs with seeds derived from `seed`.
    pub fn seeded(&self, seed: u64) -> EvalConfig {
        let mut c = self.clone();
        c.perceptron.seed = seed ^ 0x11;
        c.probe.seed = seed ^ 0x22;
        c.supervised.seed = seed ^ 0x33;
        c.finetune.seed = seed ^ 0x44;
        c
    }
}

pub fn perceptron(train: &LabeledSet, val: &LabeledSet, cfg: &HeadConfig) -> Result<(Classifier, TrainLog)> {
    let (head, log) = train_linear_head(&train.flat(), &train.labels, &val.flat(), &val.labels, cfg)?;
    Ok((Classifier { encoder: None, head }, log))
}

/// Linear head on frozen encoder representations.
pub fn probe(enc: &Encoder, train: &LabeledSet, val: &LabeledSet, cfg: &HeadConfig) -> Result<(Classifier, TrainLog)> {
    let (head, log) = train_linear_head(
        &represent_all(enc, train)?,
        &train.labels,
        &represent_all(enc, val)?,
        &val.labels,
        cfg,
    )?;
    Ok((
        Classifier {
            encoder: Some(enc.clone()),
            head,
        },
        log,
    ))
}

/// Encoder and head trained from scratch on the labels.
pub fn supervised(
    train: &LabeledSet,
    val: &LabeledSet,
    embed_width: usize,
    hidden: usize,
    cfg: &HeadConfig,
) -> Result<(Classifier, TrainLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = train.clips.first().map_or(0, |c| c.nrows());
    let init = Classifier {
        encoder: Some(Encoder::init(embed_width, hidden, &mut rng)),
        head: crate::model::Dense::init(NUM_VERBS, n * hidden, &mut rng),
    };
    train_end_to_end(init, train, val, cfg)
}

/// Probe model with gradients allowed through the encoder.
pub fn finetune(
    probe: &Classifier,
    train: &LabeledSet,
    val: &LabeledSet,
    cfg: &HeadConfig,
) -> Result<(Classifier, TrainLog)> {
    train_end_to_end(probe.clone(), train, val, cfg)
}

fn evaluate(a: Approach, model: &Classifier, test: &LabeledSet) -> Result<ApproachResult> {
    let scores = predict_all(model, test)?;
    let (per, map) = mean_average_precision(&scores, &test.labels);
    Ok(ApproachResult {
        approach: a,
        per_verb: per.to_vec(),
        map,
    })
}

/// Trains the four approaches on identical splits, scores them and the
/// random baseline on the test split.
pub fn compare_approaches(
    train: &LabeledSet,
    val: &LabeledSet,
    test: &LabeledSet,
    encoder: &Encoder,
    split: &Split,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(EvalReport, Trained)> {
    split.check_leakage()?;
    cfg.validate()?;
    let cfg = cfg.seeded(seed);
    log::info!("training perceptron");
    let perc = perceptron(train, val, &cfg.perceptron)?;
    log::info!("training probe");
    let prb = probe(encoder, train, val, &cfg.probe)?;
    log::info!("training supervised model");
    let sup = supervised(train, val, encoder.embed_width(), encoder.hidden(), &cfg.supervised)?;
    log::info!("finetuning");
    let fin = finetune(&prb.0, train, val, &cfg.finetune)?;
    let trained = Trained {
        perceptron: perc,
        supervised: sup,
        probe: prb,
        finetune: fin,
    };
    let report = assemble_report(train, val, [test; 4], split, &trained, cfg.baseline_trials, seed)?;
    Ok((report, trained))
}

/// Scores already-trained models and the baseline into a report.
/// `tests` holds the test split as each model expects it (perceptron,
/// supervised, probe, finetune): the same clips in the same order, each
/// standardized with the statistics that model was trained with.
pub fn assemble_report(
    train: &LabeledSet,
    val: &LabeledSet,
    tests: [&LabeledSet; 4],
    split: &Split,
    trained: &Trained,
    baseline_trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    let test = tests[0];
    if tests.iter().any(|t| t.ids != test.ids) {
        return Err(Error::invalid("test sets of the approaches hold different clips"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba5e);
    let (base, base_map) = random_stratified(&positive_rates(&train.labels), &test.labels, &mut rng, baseline_trials)?;
    let mut results = vec![ApproachResult {
        approach: Approach::RandomStratified,
        per_verb: base.to_vec(),
        map: base_map,
    }];
    results.push(evaluate(Approach::Perceptron, &trained.perceptron.0, tests[0])?);
    results.push(evaluate(Approach::Supervised, &trained.supervised.0, tests[1])?);
    results.push(evaluate(Approach::Probe, &trained.probe.0, tests[2])?);
    results.push(evaluate(Approach::Finetune, &trained.finetune.0, tests[3])?);
    let mut notes = Vec::new();
    for v in Verb::ALL {
        if results[1].per_verb[v.code()].is_none() {
            notes.push(format!("{}: no positive test clips, excluded from mAP", v.name()));
        }
    }
    for &v in &trained.perceptron.1.untrained_verbs {
        notes.push(format!("{}: no training labels, unit untrained", Verb::ALL[v].name()));
    }
    let categories = categorize(&results);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA,
        verbs: Verb::ALL.iter().map(|v| v.name().to_string()).collect(),
        split: SplitSizes {
            train_sessions: split.train.len(),
            val_sessions: split.val.len(),
            test_sessions: split.test.len(),
            train_clips: train.len(),
            val_clips: val.len(),
            test_clips: test.len(),
        },
        results,
        categories,
        test_positive_rate: positive_rates(&test.labels).to_vec(),
        notes,
    })
}
