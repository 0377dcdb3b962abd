//! Staged experiment runner with a digest manifest.
//!
//! Every stage reads and writes fixed file names inside the output
//! directory. After a stage finishes, the manifest records the SHA-256 of
//! its inputs and outputs and a digest of the config sections it depends
//! on. A stage is skipped when all three still match, and refuses to run
//! when an input no longer hashes to what its producing stage recorded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{self, assemble_report, EvalConfig, EvalReport, Split, Trained};
use crate::io::{load_clips, load_jsonl, read_sessions, save_clips, save_jsonl, write_atomic, SessionWriter};
use crate::label::{
    majority_labels, oracle_label, simulate_annotators, AnnotationResponse, LabelRecord, OracleConfig, Provenance,
    VerbLabels, NUM_VERBS,
};
use crate::model::{
    load_checkpoint, pretrain, sample_windows, save_checkpoint, Checkpoint, Classifier, LabeledSet, Standardizer,
    TrainConfig, TrainLog, WindowSet,
};
use crate::segment::{segment_session, SegmentConfig};
use crate::sim::agent::splitmix64;
use crate::sim::{for_each_session, SceneConfig};
use crate::trajectory::{Clip, CLIP_FRAMES};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const CLIPS_FILE: &str = "clips.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const ENCODER_FILE: &str = "encoder.json";
pub const PERCEPTRON_FILE: &str = "perceptron.json";
pub const PROBE_FILE: &str = "probe.json";
pub const SUPERVISED_FILE: &str = "supervised.json";
pub const FINETUNE_FILE: &str = "finetune.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    /// Sessions that are segmented and labeled.
    pub labeled_sessions: usize,
    /// Further, unlabeled sessions used only for pretraining.
    pub pretrain_sessions: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            labeled_sessions: 100,
            pretrain_sessions: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotatorConfig {
    /// Simulated workers per clip; 0 uses the oracle labels directly.
    pub workers: usize,
    /// Per-verb probability that a worker flips the oracle label.
    pub flip_rate: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            workers: 0,
            flip_rate: 0.1,
        }
    }
}

/// Complete experiment configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Global seed; every stage derives its randomness from it.
    pub seed: u64,
    /// Worker threads for generation and segmentation.
    pub workers: usize,
    /// Output directory.
    pub out: PathBuf,
    pub generation: GenerationConfig,
    pub scene: SceneConfig,
    pub segmentation: SegmentConfig,
    pub oracle: OracleConfig,
    pub annotators: AnnotatorConfig,
    pub training: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 1,
            out: PathBuf::from("run"),
            generation: GenerationConfig::default(),
            scene: SceneConfig::default(),
            segmentation: SegmentConfig::default(),
            oracle: OracleConfig::default(),
            annotators: AnnotatorConfig::default(),
            training: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML; unknown keys are rejected with their name.
    pub fn from_toml_str(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.segmentation.validate()?;
        self.oracle.validate()?;
        self.training.validate()?;
        self.eval.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.annotators.flip_rate) {
            return Err(Error::Config("annotators.flip_rate must be in [0, 0.5)".into()));
        }
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stage_seed(&self, salt: u64) -> u64 {
        splitmix64(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    /// Training config with its seed mixed with the global seed.
    pub fn effective_training(&self) -> TrainConfig {
        TrainConfig {
            seed: self.training.seed ^ self.stage_seed(4),
            ..self.training.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Gen,
    Segment,
    Label,
    Pretrain,
    Probe,
    Supervised,
    Finetune,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Gen,
        Stage::Segment,
        Stage::Label,
        Stage::Pretrain,
        Stage::Probe,
        Stage::Supervised,
        Stage::Finetune,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Segment => "segment",
            Stage::Label => "label",
            Stage::Pretrain => "pretrain",
            Stage::Probe => "probe",
            Stage::Supervised => "supervised",
            Stage::Finetune => "finetune",
            Stage::Eval => "eval",
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Gen | Stage::Pretrain => &[],
            Stage::Segment => &[SESSIONS_FILE],
            Stage::Label => &[SESSIONS_FILE, CLIPS_FILE],
            Stage::Probe => &[CLIPS_FILE, LABELS_FILE, SPLIT_FILE, ENCODER_FILE],
            Stage::Supervised => &[CLIPS_FILE, LABELS_FILE, SPLIT_FILE],
            Stage::Finetune => &[CLIPS_FILE, LABELS_FILE, SPLIT_FILE, PROBE_FILE],
            Stage::Eval => &[
                CLIPS_FILE,
                LABELS_FILE,
                SPLIT_FILE,
                PERCEPTRON_FILE,
                PROBE_FILE,
                SUPERVISED_FILE,
                FINETUNE_FILE,
            ],
        }
    }

    pub fn outputs(self, cfg: &PipelineConfig) -> Vec<&'static str> {
        match self {
            Stage::Gen => vec![SESSIONS_FILE],
            Stage::Segment => vec![CLIPS_FILE],
            Stage::Label if cfg.annotators.workers > 0 => vec![LABELS_FILE, RESPONSES_FILE, SPLIT_FILE],
            Stage::Label => vec![LABELS_FILE, SPLIT_FILE],
            Stage::Pretrain => vec![ENCODER_FILE],
            Stage::Probe => vec![PERCEPTRON_FILE, PROBE_FILE],
            Stage::Supervised => vec![SUPERVISED_FILE],
            Stage::Finetune => vec![FINETUNE_FILE],
            Stage::Eval => vec![REPORT_FILE, REPORT_CSV_FILE],
        }
    }

    /// The stage whose outputs include `file`.
    pub fn producer(file: &str) -> Option<Stage> {
        let cfg = PipelineConfig {
            annotators: AnnotatorConfig {
                workers: 1,
                ..AnnotatorConfig::default()
            },
            ..PipelineConfig::default()
        };
        Stage::ALL.into_iter().find(|s| s.outputs(&cfg).contains(&file))
    }

    /// Digest of the config sections this stage's outputs depend on.
    fn params_digest(self, cfg: &PipelineConfig) -> Result<String> {
        use serde_json::json;
        let v = match self {
            Stage::Gen => json!([cfg.seed, cfg.scene, cfg.generation.labeled_sessions]),
            Stage::Segment => json!([cfg.seed, cfg.segmentation]),
            Stage::Label => json!([cfg.seed, cfg.scene, cfg.oracle, cfg.annotators]),
            Stage::Pretrain => json!([cfg.seed, cfg.scene, cfg.generation, cfg.training]),
            Stage::Probe => json!([cfg.seed, cfg.eval.perceptron, cfg.eval.probe]),
            Stage::Supervised => json!([
                cfg.seed,
                cfg.eval.supervised,
                cfg.training.hidden,
                cfg.training.embed_width
            ]),
            Stage::Finetune => json!([cfg.seed, cfg.eval.finetune]),
            Stage::Eval => json!([cfg.seed, cfg.eval.baseline_trials]),
        };
        Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub params_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaVersions {
    pub manifest: u32,
    pub checkpoint: u32,
    pub report: u32,
}

impl Default for SchemaVersions {
    fn default() -> Self {
        SchemaVersions {
            manifest: MANIFEST_SCHEMA,
            checkpoint: crate::model::checkpoint::CHECKPOINT_SCHEMA,
            report: eval::REPORT_SCHEMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: SchemaVersions,
    pub config: PipelineConfig,
    pub stages: BTreeMap<Stage, StageRecord>,
    /// Stages skipped as up to date in the latest invocation.
    #[serde(default)]
    pub skipped: Vec<Stage>,
}

impl RunManifest {
    pub fn new(cfg: &PipelineConfig) -> RunManifest {
        RunManifest {
            schema: SchemaVersions::default(),
            config: cfg.clone(),
            stages: BTreeMap::new(),
            skipped: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads the manifest in `dir` if there is one.
    pub fn load_or_new(cfg: &PipelineConfig) -> Result<RunManifest> {
        let path = cfg.path(MANIFEST_FILE);
        if path.exists() {
            let mut m = Self::load(&path)?;
            m.config = cfg.clone();
            m.skipped.clear();
            Ok(m)
        } else {
            Ok(RunManifest::new(cfg))
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(self)?)
    }

    /// Checks that `file` still hashes to what its producer recorded, and
    /// returns its current digest.
    fn verified_digest(&self, cfg: &PipelineConfig, stage: Stage, file: &str) -> Result<String> {
        let path = cfg.path(file);
        if !path.exists() {
            return Err(Error::MissingInput {
                stage: stage.name().into(),
                path,
            });
        }
        let actual = file_digest(&path)?;
        if let Some(p) = Stage::producer(file) {
            if let Some(expected) = self.stages.get(&p).and_then(|r| r.outputs.get(file)) {
                if *expected != actual {
                    return Err(Error::DigestMismatch {
                        path,
                        producer: p.name().into(),
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
        }
        Ok(actual)
    }

    fn up_to_date(&self, cfg: &PipelineConfig, stage: Stage, params: &str, inputs: &BTreeMap<String, String>) -> bool {
        let Some(rec) = self.stages.get(&stage) else {
            return false;
        };
        rec.params_digest == params
            && rec.inputs == *inputs
            && stage.outputs(cfg).iter().all(|f| {
                rec.outputs
                    .get(*f)
                    .is_some_and(|d| file_digest(&cfg.path(f)).is_ok_and(|a| a == *d))
            })
    }
}

/// Runs the requested stages (and only those) in dependency order.
pub fn run_pipeline(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut manifest = RunManifest::load_or_new(cfg)?;
    let wanted: BTreeSet<Stage> = stages.iter().copied().collect();
    for stage in wanted {
        let mut inputs = BTreeMap::new();
        for f in stage.inputs() {
            inputs.insert(f.to_string(), manifest.verified_digest(cfg, stage, f)?);
        }
        let params = stage.params_digest(cfg)?;
        if manifest.up_to_date(cfg, stage, &params, &inputs) {
            log::info!("{stage}: up to date, skipped");
            manifest.skipped.push(stage);
            continue;
        }
        log::info!("{stage}: running");
        let t0 = Instant::now();
        run_stage(cfg, stage)?;
        let mut outputs = BTreeMap::new();
        for f in stage.outputs(cfg) {
            outputs.insert(f.to_string(), file_digest(&cfg.path(f))?);
        }
        let wall_seconds = t0.elapsed().as_secs_f64();
        log::info!("{stage}: done in {wall_seconds:.1} s");
        manifest.stages.insert(
            stage,
            StageRecord {
                params_digest: params,
                inputs,
                outputs,
                wall_seconds,
            },
        );
        manifest.save(&cfg.out)?;
    }
    manifest.save(&cfg.out)?;
    Ok(manifest)
}

fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<()> {
    match stage {
        Stage::Gen => stage_gen(cfg),
        Stage::Segment => stage_segment(cfg),
        Stage::Label => stage_label(cfg),
        Stage::Pretrain => stage_pretrain(cfg),
        Stage::Probe => stage_probe(cfg),
        Stage::Supervised => stage_supervised(cfg),
        Stage::Finetune => stage_finetune(cfg),
        Stage::Eval => stage_eval(cfg).map(|_| ()),
    }
}

fn stage_gen(cfg: &PipelineConfig) -> Result<()> {
    let mut w = SessionWriter::create(&cfg.path(SESSIONS_FILE))?;
    for_each_session(
        cfg.seed,
        0,
        cfg.generation.labeled_sessions,
        &cfg.scene,
        cfg.workers,
        cfg.workers * 4,
        |s| w.write(&s),
    )?;
    w.finish()
}

fn stage_segment(cfg: &PipelineConfig) -> Result<()> {
    let seed = cfg.stage_seed(2);
    let mut clips = Vec::new();
    for s in read_sessions(&cfg.path(SESSIONS_FILE))? {
        let s = s?;
        clips.extend(segment_session(&s, &cfg.segmentation, seed)?.clips);
    }
    log::info!("segment: {} clips", clips.len());
    save_clips(&cfg.path(CLIPS_FILE), &clips)
}

fn stage_label(cfg: &PipelineConfig) -> Result<()> {
    let clips = load_clips(&cfg.path(CLIPS_FILE))?;
    let mut by_session: BTreeMap<String, Vec<&Clip>> = BTreeMap::new();
    for c in &clips {
        by_session.entry(c.session_id().to_string()).or_default().push(c);
    }
    let mut records = Vec::new();
    let mut session_ids = Vec::new();
    for s in read_sessions(&cfg.path(SESSIONS_FILE))? {
        let s = s?;
        session_ids.push(s.id.clone());
        let prov = Provenance {
            params: &s.params,
            events: &s.events,
        };
        for c in by_session.remove(&s.id).unwrap_or_default() {
            records.push(LabelRecord {
                clip_id: c.id(),
                labels: oracle_label(c, Some(&prov), &cfg.scene, &cfg.oracle)?,
            });
        }
    }
    if let Some((id, _)) = by_session.into_iter().next() {
        return Err(Error::MissingInput {
            stage: "label".into(),
            path: cfg.path(SESSIONS_FILE).join(id),
        });
    }
    if cfg.annotators.workers > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed(3));
        let rates = [cfg.annotators.flip_rate; NUM_VERBS];
        let mut responses: Vec<AnnotationResponse> = Vec::new();
        for r in &records {
            responses.extend(simulate_annotators(
                &r.clip_id,
                &r.labels,
                &rates,
                cfg.annotators.workers,
                &mut rng,
            )?);
        }
        let majority = majority_labels(&responses);
        for r in &mut records {
            r.labels = majority.get(&r.clip_id).copied().unwrap_or_else(VerbLabels::all_masked);
        }
        save_jsonl(&cfg.path(RESPONSES_FILE), &responses)?;
    }
    save_jsonl(&cfg.path(LABELS_FILE), &records)?;
    let split = Split::by_session(&session_ids, cfg.stage_seed(5));
    write_atomic(&cfg.path(SPLIT_FILE), &serde_json::to_string_pretty(&split)?)
}

/// Raw windows for pretraining, regenerated from the config.
pub fn pretraining_windows(cfg: &PipelineConfig) -> Result<(WindowSet, WindowSet)> {
    let tc = cfg.effective_training();
    let len = CLIP_FRAMES + tc.horizon;
    let mut train = WindowSet::new(len);
    let mut holdout = WindowSet::new(len);
    let mut i = 0usize;
    for_each_session(
        cfg.seed,
        cfg.generation.labeled_sessions as u64,
        cfg.generation.pretrain_sessions,
        &cfg.scene,
        cfg.workers,
        cfg.workers * 4,
        |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(s.seed ^ tc.seed));
            let w = sample_windows(&s, tc.windows_per_session, len, &mut rng)?;
            // every tenth session is held out for the validation loss
            if i % 10 == 9 {
                holdout.extend(w);
            } else {
                train.extend(w);
            }
            i += 1;
            Ok(())
        },
    )?;
    Ok((train, holdout))
}

fn stage_pretrain(cfg: &PipelineConfig) -> Result<()> {
    let tc = cfg.effective_training();
    let (train, holdout) = pretraining_windows(cfg)?;
    log::info!("pretrain: {} windows, {} held out", train.count(), holdout.count());
    let rows: Vec<_> = train.rows().collect();
    let std = Standardizer::fit(&rows)?;
    drop(rows);
    let (enc, log) = pretrain(&train, &holdout, &std, &tc)?;
    save_checkpoint(
        &cfg.path(ENCODER_FILE),
        &Checkpoint::from_encoder(&tc, &std, &enc, &log)?,
    )
}

/// Clips and labels of each split, sorted by clip id.
pub struct SplitData {
    pub split: Split,
    pub train: Vec<(Clip, VerbLabels)>,
    pub val: Vec<(Clip, VerbLabels)>,
    pub test: Vec<(Clip, VerbLabels)>,
}

impl SplitData {
    pub fn load(dir: &Path) -> Result<SplitData> {
        let clips = load_clips(&dir.join(CLIPS_FILE))?;
        let labels: Vec<LabelRecord> = load_jsonl(&dir.join(LABELS_FILE))?;
        let split_path = dir.join(SPLIT_FILE);
        let text = std::fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
        let split: Split = serde_json::from_str(&text)?;
        split.check_leakage()?;
        let by_id: BTreeMap<&str, VerbLabels> = labels.iter().map(|r| (r.clip_id.as_str(), r.labels)).collect();
        let mut out = SplitData {
            split,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for c in clips {
            let id = c.id();
            let l = *by_id.get(id.as_str()).ok_or_else(|| Error::Parse {
                record: 0,
                field: "clip_id".into(),
                message: format!("clip {id} has no label record"),
            })?;
            match out.split.part_of(c.session_id()) {
                Some("train") => out.train.push((c, l)),
                Some("val") => out.val.push((c, l)),
                Some("test") => out.test.push((c, l)),
                _ => {
                    return Err(Error::invalid(format!(
                        "clip {id} belongs to session {} which is in no split",
                        c.session_id()
                    )))
                }
            }
        }
        for part in [&mut out.train, &mut out.val, &mut out.test] {
            part.sort_by_key(|(c, _)| c.id());
        }
        Ok(out)
    }

    /// Standardizer fitted on the training clips.
    pub fn train_standardizer(&self) -> Result<Standardizer> {
        let rows: Vec<_> = self
            .train
            .iter()
            .flat_map(|(c, _)| c.frames().iter().map(|f| f.features()))
            .collect();
        Standardizer::fit(&rows)
    }

    pub fn sets(&self, std: &Standardizer) -> (LabeledSet, LabeledSet, LabeledSet) {
        let mk = |v: &Vec<(Clip, VerbLabels)>| {
            let refs: Vec<(&Clip, VerbLabels)> = v.iter().map(|(c, l)| (c, *l)).collect();
            LabeledSet::from_clips(&refs, std)
        };
        (mk(&self.train), mk(&self.val), mk(&self.test))
    }
}

fn save_model(
    path: &Path,
    kind: eval::Approach,
    cfg: &impl Serialize,
    std: &Standardizer,
    m: &(Classifier, TrainLog),
) -> Result<()> {
    save_checkpoint(path, &Checkpoint::from_classifier(kind.name(), cfg, std, &m.0, &m.1)?)
}

fn load_model(path: &Path) -> Result<(Classifier, TrainLog, Standardizer)> {
    let ck = load_checkpoint(path)?;
    let log: TrainLog = serde_json::from_value(ck.log.clone()).unwrap_or_default();
    Ok((ck.classifier()?, log, ck.standardizer.clone()))
}

fn stage_probe(cfg: &PipelineConfig) -> Result<()> {
    let data = SplitData::load(&cfg.out)?;
    let ecfg = cfg.eval.seeded(cfg.stage_seed(6));
    let std = data.train_standardizer()?;
    let (tr, va, _) = data.sets(&std);
    let perceptron = eval::perceptron(&tr, &va, &ecfg.perceptron)?;
    save_model(
        &cfg.path(PERCEPTRON_FILE),
        eval::Approach::Perceptron,
        &ecfg.perceptron,
        &std,
        &perceptron,
    )?;

    let ck = load_checkpoint(&cfg.path(ENCODER_FILE))?;
    let enc = ck.encoder()?;
    let (tr, va, _) = data.sets(&ck.standardizer);
    let probe = eval::probe(&enc, &tr, &va, &ecfg.probe)?;
    save_model(
        &cfg.path(PROBE_FILE),
        eval::Approach::Probe,
        &ecfg.probe,
        &ck.standardizer,
        &probe,
    )
}

fn stage_supervised(cfg: &PipelineConfig) -> Result<()> {
    let data = SplitData::load(&cfg.out)?;
    let ecfg = cfg.eval.seeded(cfg.stage_seed(6));
    let std = data.train_standardizer()?;
    let (tr, va, _) = data.sets(&std);
    let m = eval::supervised(
        &tr,
        &va,
        cfg.training.embed_width,
        cfg.training.hidden,
        &ecfg.supervised,
    )?;
    save_model(
        &cfg.path(SUPERVISED_FILE),
        eval::Approach::Supervised,
        &ecfg.supervised,
        &std,
        &m,
    )
}

fn stage_finetune(cfg: &PipelineConfig) -> Result<()> {
    let data = SplitData::load(&cfg.out)?;
    let ecfg = cfg.eval.seeded(cfg.stage_seed(6));
    let (probe, _, std) = load_model(&cfg.path(PROBE_FILE))?;
    let (tr, va, _) = data.sets(&std);
    let m = eval::finetune(&probe, &tr, &va, &ecfg.finetune)?;
    save_model(
        &cfg.path(FINETUNE_FILE),
        eval::Approach::Finetune,
        &ecfg.finetune,
        &std,
        &m,
    )
}

/// Scores every trained model on the test split and writes the report
/// files. Each model sees the clips standardized with its own statistics.
pub fn stage_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let data = SplitData::load(&cfg.out)?;
    let load = |f: &str| -> Result<((Classifier, TrainLog), [LabeledSet; 3])> {
        let (m, log, std) = load_model(&cfg.path(f))?;
        let (tr, va, te) = data.sets(&std);
        Ok(((m, log), [tr, va, te]))
    };
    let (perceptron, [train, val, p_test]) = load(PERCEPTRON_FILE)?;
    let (supervised, [_, _, s_test]) = load(SUPERVISED_FILE)?;
    let (probe, [_, _, r_test]) = load(PROBE_FILE)?;
    let (finetune, [_, _, f_test]) = load(FINETUNE_FILE)?;
    let trained = Trained {
        perceptron,
        supervised,
        probe,
        finetune,
    };
    let report = assemble_report(
        &train,
        &val,
        [&p_test, &s_test, &r_test, &f_test],
        &data.split,
        &trained,
        cfg.eval.baseline_trials,
        cfg.stage_seed(7),
    )?;
    write_atomic(&cfg.path(REPORT_FILE), &serde_json::to_string_pretty(&report)?)?;
    write_atomic(&cfg.path(REPORT_CSV_FILE), &report.to_csv()?)?;
    Ok(report)
}
