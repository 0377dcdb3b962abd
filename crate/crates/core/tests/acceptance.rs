//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p trajverb --test acceptance -- --nocapture`.
//!
//! The desk-scale experiment (criteria 1 and 2) runs the full pipeline with
//! the default configuration into `$CARGO_TARGET_TMPDIR/acceptance-desk`,
//! or `TRAJVERB_ACCEPTANCE_DIR` if set; its manifest lets later runs reuse
//! finished stages. Criterion 8's released-annotation half reads the table
//! named by `TRAJVERB_RELEASED_ANNOTATIONS` and is skipped without it.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajverb::eval::{average_precision, expected_random_ap, random_stratified, Approach, EvalReport};
use trajverb::io::session_to_json;
use trajverb::label::*;
use trajverb::model::discounted_mse;
use trajverb::pipeline::{run_pipeline, PipelineConfig, RunManifest, Stage, CLIPS_FILE, MANIFEST_FILE, REPORT_FILE};
use trajverb::segment::{extract_segments, filter_and_crop, segment_session, SegmentConfig};
use trajverb::sim::*;
use trajverb::trajectory::CLIP_FRAMES;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn desk_report() -> Result<(EvalReport, usize, f64), String> {
    let dir = std::env::var_os("TRAJVERB_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk"));
    let cfg = PipelineConfig {
        out: dir.clone(),
        ..PipelineConfig::default()
    };
    run_pipeline(&cfg, &Stage::ALL).map_err(|e| e.to_string())?;
    // wall time of the runs that produced each stage, so a reused directory reports the real cost
    let manifest = RunManifest::load(&dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let secs: f64 = manifest.stages.values().map(|s| s.wall_seconds).sum();
    let text = std::fs::read_to_string(dir.join(REPORT_FILE)).map_err(|e| e.to_string())?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let clips = std::fs::read_to_string(dir.join(CLIPS_FILE))
        .map_err(|e| e.to_string())?
        .lines()
        .count();
    ensure(
        cfg.generation.pretrain_sessions >= 1000,
        "fewer than 1000 pretraining sessions",
    )?;
    ensure(clips >= 1500, format!("only {clips} labeled clips"))?;
    Ok((report, clips, secs))
}

fn criterion_1(desk: &Result<(EvalReport, usize, f64), String>) -> Check {
    let (r, clips, secs) = desk.as_ref().map_err(Clone::clone)?;
    let m = |a| r.map(a).ok_or_else(|| format!("no mAP for {a}"));
    let (base, perc, probe, fine) = (
        m(Approach::RandomStratified)?,
        m(Approach::Perceptron)?,
        m(Approach::Probe)?,
        m(Approach::Finetune)?,
    );
    let line = format!(
        "random {base:.3} < perceptron {perc:.3} < probe {probe:.3}, finetune {fine:.3}; {clips} clips, {secs:.0} s"
    );
    ensure(base < perc && perc < probe, format!("ordering fails: {line}"))?;
    ensure(probe >= perc + 0.02, format!("probe gain below 2 points: {line}"))?;
    ensure(
        fine >= probe - 0.01,
        format!("finetune more than 1 point below probe: {line}"),
    )?;
    ensure(*secs < 7200.0, format!("over two hours: {line}"))?;
    Ok(line)
}

fn criterion_2(desk: &Result<(EvalReport, usize, f64), String>) -> Check {
    let (r, _, _) = desk.as_ref().map_err(Clone::clone)?;
    let ap = |a, v: Verb| r.ap(a, v).ok_or_else(|| format!("{} undefined for {a}", v.name()));
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for v in [Verb::Fall, Verb::PickUp] {
        let p = ap(Approach::Perceptron, v)?;
        parts.push(format!("{} perceptron {p:.3}", v.name()));
        if p < 0.8 {
            failures.push(format!("{} perceptron {p:.3} < 0.8", v.name()));
        }
    }
    for v in [Verb::Roll, Verb::Slide] {
        let p = ap(Approach::Perceptron, v)?;
        let q = ap(Approach::Probe, v)?;
        parts.push(format!("{} {p:.3} -> probe {q:.3}", v.name()));
        if q < p + 0.05 {
            failures.push(format!("{} gains {:.1} points", v.name(), 100.0 * (q - p)));
        }
    }
    let line = parts.join(", ");
    ensure(failures.is_empty(), format!("{}: {line}", failures.join("; ")))?;
    Ok(line)
}

fn criterion_3() -> Check {
    let t0 = Instant::now();
    let report = common::gradient_check_report();
    let secs = t0.elapsed().as_secs_f64();
    let worst = report.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let bad: Vec<&String> = report.iter().filter(|(_, e)| !(*e < 1e-4)).map(|(n, _)| n).collect();
    ensure(bad.is_empty(), format!("tensors failing: {bad:?}"))?;
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} tensors, worst relative error {worst:.1e}, {secs:.1} s",
        report.len()
    ))
}

fn criterion_4() -> Check {
    let pred = Array2::zeros((2, 10));
    let mut target = Array2::from_elem((2, 10), 2.0);
    for f in 0..10 {
        target[[1, f]] = if f < 5 { 4.0 } else { 0.0 };
    }
    let fixture = discounted_mse(&pred, &target, 0.5).map_err(|e| e.to_string())?;
    ensure(fixture == 8.0, format!("fixture gives {fixture}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = rng.random_range(1..10);
        let p: Array2<f64> = Array2::from_shape_simple_fn((k, 10), || rng.random_range(-3.0..3.0));
        let t: Array2<f64> = Array2::from_shape_simple_fn((k, 10), || rng.random_range(-3.0..3.0));
        let plain: f64 = (0..k)
            .map(|i| (0..10).map(|f| (p[[i, f]] - t[[i, f]]).powi(2)).sum::<f64>() / 10.0)
            .sum();
        worst = worst.max((discounted_mse(&p, &t, 1.0).map_err(|e| e.to_string())? - plain).abs());
    }
    ensure(worst <= 1e-12, format!("gamma 1 differs from summed MSE by {worst:e}"))?;
    Ok(format!(
        "fixture = 8 exactly; gamma 1 vs summed MSE max diff {worst:.0e}"
    ))
}

fn criterion_5() -> Check {
    let mut ratios = Vec::new();
    for e in [0.2, 0.5, 0.9] {
        let ratio = common::first_rebound_height(e, 1.0) / (e * e);
        ensure(
            (ratio - 1.0).abs() <= 0.05,
            format!("e = {e}: height / e² = {ratio:.3}"),
        )?;
        ratios.push(format!("{ratio:.3}"));
    }
    let scene = SceneConfig::default();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (s, trace) = generate_session_traced(session_seed(11, i), &scene).map_err(|e| e.to_string())?;
        let b = Body::from(&s.params);
        for w in trace.windows(2) {
            if w[1].touched || w[0].state.contact == Contact::Held || w[1].state.contact == Contact::Held {
                continue;
            }
            let gain = mechanical_energy(&w[1].state, &b, &scene) - mechanical_energy(&w[0].state, &b, &scene);
            worst = worst.max(gain);
        }
    }
    ensure(worst <= 1e-3, format!("energy grew by {worst:e} J in one frame"))?;
    let text = |workers| -> Result<Vec<String>, String> {
        generate_sessions(5, 0, 4, &scene, workers)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|s| session_to_json(s).map_err(|e| e.to_string()))
            .collect()
    };
    let (a, b, c) = (text(1)?, text(1)?, text(3)?);
    ensure(a == b && a == c, "sessions differ across runs or worker counts")?;
    Ok(format!(
        "rebound / e² = {}; max energy gain {worst:.1e} J; byte-identical over 1 and 3 workers",
        ratios.join(", ")
    ))
}

fn criterion_6() -> Check {
    let scene = SceneConfig::default();
    let cfg = SegmentConfig::default();
    let mut total = 0;
    let mut bad = 0;
    for_each_session(8, 0, 200, &scene, 1, 50, |s| {
        for c in segment_session(&s, &cfg, 0)?.clips {
            total += 1;
            if c.frames().len() != CLIP_FRAMES {
                bad += 1;
            }
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    ensure(bad == 0, format!("{bad} of {total} clips are not {CLIP_FRAMES} frames"))?;
    let still = segment_session(&common::static_session(), &cfg, 0).map_err(|e| e.to_string())?;
    ensure(still.clips.is_empty(), "static session produced clips")?;
    let ramp = common::ramp_session();
    for len in [71, 97] {
        let segs = extract_segments(&common::bump(1000, len), 0.5);
        let kept = filter_and_crop(&segs, &ramp).map_err(|e| e.to_string())?;
        ensure(kept.is_empty(), format!("length {len} kept"))?;
    }
    Ok(format!(
        "{total} clips from 200 sessions, all 90 frames; static session empty; 71 and 97 excluded"
    ))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = 0;
    for _ in 0..4 {
        let scores: Vec<f64> = (0..8).map(|_| rng.random()).collect();
        for pattern in 0u32..256 {
            let labels: Vec<bool> = (0..8).map(|b| pattern >> b & 1 == 1).collect();
            ensure(
                average_precision(&scores, &labels) == common::oracle_ap(&scores, &labels),
                format!("pattern {pattern:08b} disagrees"),
            )?;
            cases += 1;
        }
    }
    let n = 1000;
    let mut worst = 0.0f64;
    for (verb, p) in [(Verb::Fall, 0.1f64), (Verb::Roll, 0.3), (Verb::Slide, 0.5)] {
        let labels: Vec<VerbLabels> = (0..n)
            .map(|_| {
                let mut l = VerbLabels::all_masked();
                l.set(verb, Label::from_bool(rng.random_bool(p)));
                l
            })
            .collect();
        let positives = labels.iter().filter(|l| l.get(verb) == Label::Yes).count();
        let mut rates = [None; NUM_VERBS];
        rates[verb.code()] = Some(p);
        let (per, _) = random_stratified(&rates, &labels, &mut rng, 100).map_err(|e| e.to_string())?;
        let diff = (per[verb.code()].unwrap() - expected_random_ap(n, positives).unwrap()).abs();
        worst = worst.max(diff);
    }
    ensure(worst <= 0.02, format!("random stratified off by {worst:.4}"))?;
    Ok(format!(
        "{cases} exhaustive cases exact; random stratified within {worst:.4} of analytic"
    ))
}

fn criterion_8() -> (Check, Option<Check>) {
    let fixture = || {
        let r = |clip: &str, verb, worker: &str, yes: bool| AnnotationResponse {
            clip_id: clip.into(),
            verb,
            worker: worker.into(),
            response: if yes { Response::Yes } else { Response::No },
        };
        let mut v = Vec::new();
        for (w, throw, toss) in [("w0", true, true), ("w1", true, false), ("w2", false, false)] {
            v.push(r("a", Verb::Throw, w, throw));
            v.push(r("a", Verb::Toss, w, toss));
        }
        for w in ["w0", "w1", "w2"] {
            v.push(r("b", Verb::Throw, w, false));
            v.push(r("b", Verb::Toss, w, true));
        }
        v
    };
    let fixtures = (|| {
        let resp = fixture();
        let a = agreement(&resp);
        // 5/6 is not a binary fraction, so the mean of 2/3 and 1 may round differently
        let ok = a[Verb::Throw.code()].is_some_and(|x| (x - 5.0 / 6.0).abs() < 1e-12);
        ensure(ok, format!("agreement {:?}", a[Verb::Throw.code()]))?;
        let c = cooccurrence(&resp);
        ensure(c.get(Verb::Throw, Verb::Toss) == Some(0.25), "p(toss|throw) on fixture")?;
        ensure(
            c.get(Verb::Toss, Verb::Throw) == Some(0.125),
            "p(throw|toss) on fixture",
        )?;
        Ok("agreement 5/6 and co-occurrence 1/4, 1/8 on fixtures".to_string())
    })();
    let released = std::env::var_os("TRAJVERB_RELEASED_ANNOTATIONS").map(|path| {
        let resp = import_table(&PathBuf::from(&path), &IngestConfig::default()).map_err(|e| e.to_string())?;
        let c = cooccurrence(&resp);
        let (tt, ht) = (c.get(Verb::Throw, Verb::Toss), c.get(Verb::Toss, Verb::Throw));
        let (Some(tt), Some(ht)) = (tt, ht) else {
            return Err("no throw or toss responses".to_string());
        };
        let line = format!("released: p(toss|throw) {tt:.2}, p(throw|toss) {ht:.2}");
        ensure(
            tt < ht && (tt - 0.67).abs() <= 0.05 && (ht - 0.75).abs() <= 0.05,
            line.clone(),
        )?;
        Ok(line)
    });
    (fixtures, released)
}

fn criterion_9() -> Check {
    catch_unwind(common::masking_paired_run).map_err(|_| "paired runs differ".to_string())?;
    Ok("perceptron and end-to-end runs bitwise identical under flipped masked labels".into())
}

fn outcome(c: Check) -> Outcome {
    match c {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

#[test]
fn acceptance() {
    let desk = guarded(desk_report);
    let (fixtures, released) = criterion_8();
    let c8 = match (fixtures, released) {
        (Err(e), _) => Outcome::Fail(e),
        (Ok(f), None) => Outcome::Skip(format!("{f}; released annotations not provided")),
        (Ok(f), Some(Ok(r))) => Outcome::Pass(format!("{f}; {r}")),
        (Ok(_), Some(Err(e))) => Outcome::Fail(e),
    };
    let results = [
        ("1 desk-scale ordering", outcome(criterion_1(&desk))),
        ("2 per-verb echo", outcome(criterion_2(&desk))),
        ("3 gradient check", outcome(guarded(criterion_3))),
        ("4 discounted MSE", outcome(guarded(criterion_4))),
        ("5 physics", outcome(guarded(criterion_5))),
        ("6 segmentation", outcome(guarded(criterion_6))),
        ("7 average precision", outcome(guarded(criterion_7))),
        ("8 labeling math", c8),
        ("9 masking", outcome(guarded(criterion_9))),
    ];
    let mut failed = Vec::new();
    for (name, o) in &results {
        match o {
            Outcome::Pass(m) => println!("PASS {name}: {m}"),
            Outcome::Skip(m) => println!("SKIP {name}: {m}"),
            Outcome::Fail(m) => {
                println!("FAIL {name}: {m}");
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
