use std::path::Path;

use trajverb::eval::{Approach, EvalReport};
use trajverb::pipeline::*;
use trajverb::Error;

fn tiny(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_toml_str(
        r#"
seed = 4
[generation]
labeled_sessions = 10
pretrain_sessions = 10
[training]
epochs = 1
hidden = 4
embed_width = 4
[eval.perceptron]
epochs = 2
[eval.probe]
epochs = 2
[eval.supervised]
epochs = 1
[eval.finetune]
epochs = 1
"#,
    )
    .unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn unknown_config_key_is_named() {
    let err = PipelineConfig::from_toml_str("[training]\nepoch = 3\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.to_string().contains("epoch"), "{err}");
    let err = PipelineConfig::from_toml_str("sead = 1\n").unwrap_err();
    assert!(err.to_string().contains("sead"), "{err}");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = tiny(Path::new("/tmp/x"));
    let back = PipelineConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn full_run_then_skip_then_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let m = run_pipeline(&cfg, &Stage::ALL).unwrap();
    assert!(m.skipped.is_empty());
    assert_eq!(m.stages.len(), Stage::ALL.len());
    for f in [
        SESSIONS_FILE,
        CLIPS_FILE,
        LABELS_FILE,
        SPLIT_FILE,
        ENCODER_FILE,
        REPORT_FILE,
        REPORT_CSV_FILE,
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.results.len(), Approach::ALL.len());
    assert!(report.map(Approach::RandomStratified).is_some());
    let manifest = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(
        manifest.stages[&Stage::Eval].outputs[REPORT_FILE],
        file_digest(&dir.path().join(REPORT_FILE)).unwrap()
    );

    // same config, nothing to do
    let again = run_pipeline(&cfg, &Stage::ALL).unwrap();
    assert_eq!(again.skipped, Stage::ALL.to_vec());

    // changing an eval parameter reruns only eval
    let mut changed = cfg.clone();
    changed.eval.baseline_trials = 7;
    let m = run_pipeline(&changed, &Stage::ALL).unwrap();
    assert_eq!(m.skipped.len(), Stage::ALL.len() - 1);
    assert!(!m.skipped.contains(&Stage::Eval));

    // an edited intermediate file is caught before anything consumes it
    let clips = dir.path().join(CLIPS_FILE);
    let mut text = std::fs::read_to_string(&clips).unwrap();
    text.push('\n');
    std::fs::write(&clips, text).unwrap();
    let err = run_pipeline(&changed, &[Stage::Label]).unwrap_err();
    assert!(
        matches!(err, Error::DigestMismatch { ref producer, .. } if producer == "segment"),
        "{err}"
    );
}

#[test]
fn missing_input_names_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let err = run_pipeline(&cfg, &[Stage::Segment]).unwrap_err();
    match &err {
        Error::MissingInput { stage, path } => {
            assert_eq!(stage, "segment");
            assert!(path.ends_with(SESSIONS_FILE));
        }
        other => panic!("expected a missing input, got {other}"),
    }
    assert!(err.to_string().contains("run the stage that produces it"), "{err}");
}

#[test]
fn stage_names_parse() {
    for s in Stage::ALL {
        assert_eq!(s.name().parse::<Stage>().unwrap(), s);
    }
    assert!("train".parse::<Stage>().is_err());
    assert_eq!(Stage::producer(CLIPS_FILE), Some(Stage::Segment));
}
