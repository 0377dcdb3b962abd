use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajverb::label::*;
use trajverb::segment::{segment_session, SegmentConfig};
use trajverb::sim::{generate_session, session_seed, SceneConfig};
use trajverb::trajectory::Primitive;
use trajverb::Error;

fn resp(clip: &str, verb: Verb, worker: &str, yes: bool) -> AnnotationResponse {
    AnnotationResponse {
        clip_id: clip.into(),
        verb,
        worker: worker.into(),
        response: if yes { Response::Yes } else { Response::No },
    }
}

/// Two clips, three workers, two verbs.
///   clip a: throw y y n, toss y n n
///   clip b: throw n n n, toss y y y
fn fixture() -> Vec<AnnotationResponse> {
    let mut r = Vec::new();
    for (w, throw, toss) in [("w0", true, true), ("w1", true, false), ("w2", false, false)] {
        r.push(resp("a", Verb::Throw, w, throw));
        r.push(resp("a", Verb::Toss, w, toss));
    }
    for w in ["w0", "w1", "w2"] {
        r.push(resp("b", Verb::Throw, w, false));
        r.push(resp("b", Verb::Toss, w, true));
    }
    r
}

#[test]
fn majority_and_agreement_on_fixture() {
    let r = fixture();
    let m = majority_labels(&r);
    assert_eq!(m["a"].get(Verb::Throw), Label::Yes);
    assert_eq!(m["a"].get(Verb::Toss), Label::No);
    assert_eq!(m["b"].get(Verb::Toss), Label::Yes);
    assert_eq!(m["a"].get(Verb::Fall), Label::Masked);
    let a = agreement(&r);
    // throw: 2/3 on a, 3/3 on b; toss: 2/3 on a, 3/3 on b
    assert!((a[Verb::Throw.code()].unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert!((a[Verb::Toss.code()].unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(a[Verb::Fall.code()], None);
}

#[test]
fn cooccurrence_on_fixture() {
    let c = cooccurrence(&fixture());
    // clip a: w0 and w1 said throw; the other workers' toss answers are
    // (w1 n, w2 n) and (w0 y, w2 n), so 1 of 4. Nobody said throw on b.
    assert!((c.get(Verb::Throw, Verb::Toss).unwrap() - 0.25).abs() < 1e-12);
    // toss yes: w0 on a (others' throw: y, n), each of w0..w2 on b (others: n, n)
    assert!((c.get(Verb::Toss, Verb::Throw).unwrap() - 1.0 / 8.0).abs() < 1e-12);
    assert_eq!(c.get(Verb::Fall, Verb::Toss), None);

    let stats = label_stats(
        &majority_labels(&fixture()).into_values().collect::<Vec<_>>(),
        Some(&fixture()),
    );
    assert_eq!(stats.cooccur(Verb::Throw, Verb::Toss), c.get(Verb::Throw, Verb::Toss));
    let throw = &stats.verbs[Verb::Throw.code()];
    assert_eq!((throw.yes, throw.no, throw.masked), (1, 1, 0));
    assert_eq!(throw.base_rate, Some(0.5));
    assert_eq!(stats.to_table().lines().count(), 2 + NUM_VERBS);
}

#[test]
fn noiseless_annotators_reproduce_the_labels() {
    let mut truth = VerbLabels::all_masked();
    truth.set(Verb::Roll, Label::Yes);
    truth.set(Verb::Slide, Label::No);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = simulate_annotators("c", &truth, &[0.0; NUM_VERBS], 5, &mut rng).unwrap();
    assert_eq!(r.len(), 10);
    assert_eq!(aggregate_majority(&r), truth);
    assert_eq!(agreement(&r)[Verb::Roll.code()], Some(1.0));
    assert!(simulate_annotators("c", &truth, &[0.5; NUM_VERBS], 5, &mut rng).is_err());
}

#[test]
fn noisy_majority_beats_a_single_worker() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut truth = VerbLabels::all_masked();
    for v in Verb::ALL {
        truth.set(v, Label::from_bool(v.code() % 3 == 0));
    }
    let (mut single, mut majority, trials) = (0usize, 0usize, 400);
    for i in 0..trials {
        let r = simulate_annotators(&format!("c{i}"), &truth, &[0.2; NUM_VERBS], 5, &mut rng).unwrap();
        let m = aggregate_majority(&r);
        majority += Verb::ALL.iter().filter(|&&v| m.get(v) != truth.get(v)).count();
        single += r
            .iter()
            .filter(|x| x.worker == "w0" && (x.response == Response::Yes) != (truth.get(x.verb) == Label::Yes))
            .count();
    }
    // five votes at 20% noise: error 0.058 against 0.2 for one worker
    let n = (trials * NUM_VERBS) as f64;
    assert!((single as f64 / n - 0.2).abs() < 0.02);
    assert!((majority as f64 / n - 0.058).abs() < 0.015);
}

#[test]
fn ingest_maps_columns_and_spellings() {
    let table = "\
item;question;annotator;answer;extra
c1;pick_up;alice;Y;x
c1;fall-over;bob;no;x
c2;put down;alice;1;x
c2;tip;bob;unsure;x
";
    let cfg = IngestConfig {
        clip_column: "item".into(),
        verb_column: "question".into(),
        worker_column: "annotator".into(),
        response_column: "answer".into(),
        delimiter: ';',
    };
    let r = import_reader(table.as_bytes(), &cfg).unwrap();
    assert_eq!(r.len(), 4);
    assert_eq!((r[0].verb, r[0].response), (Verb::PickUp, Response::Yes));
    assert_eq!((r[1].verb, r[1].response), (Verb::FallOver, Response::No));
    assert_eq!(r[2].verb, Verb::PutDown);
    assert_eq!(r[3].response, Response::Unsure);
    assert_eq!(r[1].worker, "bob");

    let err = import_reader("item;question;annotator;answer\nc1;juggle;a;y\n".as_bytes(), &cfg).unwrap_err();
    assert!(
        matches!(err, Error::Parse { record: 0, ref field, .. } if field == "verb"),
        "{err}"
    );
    let err = import_reader("clip_id,verb\nc1,fall\n".as_bytes(), &IngestConfig::default()).unwrap_err();
    assert!(err.to_string().contains("worker"), "{err}");
}

#[test]
fn oracle_agrees_with_the_event_log() {
    let scene = SceneConfig::default();
    let cfg = OracleConfig::default();
    let mut clips = 0;
    for i in 0..15 {
        let s = generate_session(session_seed(9, i), &scene).unwrap();
        let prov = Provenance {
            params: &s.params,
            events: &s.events,
        };
        for c in segment_session(&s, &SegmentConfig::default(), 0).unwrap().clips {
            clips += 1;
            let l = oracle_label(&c, Some(&prov), &scene, &cfg).unwrap();
            assert_eq!(l, oracle_label(&c, Some(&prov), &scene, &cfg).unwrap());
            let keyed = |p: Primitive| {
                s.events
                    .iter()
                    .any(|e| e.primitive == p && e.contact_frame >= c.start() && e.contact_frame < c.end())
            };
            for (verb, prim) in [
                (Verb::PickUp, Primitive::PickUp),
                (Verb::PutDown, Primitive::PutDown),
                (Verb::Push, Primitive::Push),
                (Verb::Hit, Primitive::Hit),
            ] {
                if !l.get(verb).is_masked() {
                    assert_eq!(l.get(verb) == Label::Yes, keyed(prim), "{} {}", c.id(), verb.name());
                }
            }
            // a bump is any strike, and a slap is a fast one
            if l.get(Verb::Slap) == Label::Yes {
                assert_eq!(l.get(Verb::Bump), Label::Yes);
            }
            // without a throw in the clip there is nothing to throw or toss
            if !keyed(Primitive::Throw) {
                assert_ne!(l.get(Verb::Throw), Label::Yes);
                assert_ne!(l.get(Verb::Toss), Label::Yes);
            }
            for v in Verb::ALL {
                if !heuristic_filter(&c, v, &s.events) {
                    assert!(l.get(v).is_masked(), "{} {} passed the filter's mask", c.id(), v.name());
                }
            }
        }
    }
    assert!(clips > 50);
}

#[test]
fn label_records_round_trip() {
    let mut l = VerbLabels::all_masked();
    l.set(Verb::Spin, Label::Yes);
    l.set(Verb::Turn, Label::No);
    let rec = LabelRecord {
        clip_id: "s:1".into(),
        labels: l,
    };
    let text = serde_json::to_string(&rec).unwrap();
    assert!(text.contains("null") && text.contains("true") && text.contains("false"));
    assert_eq!(serde_json::from_str::<LabelRecord>(&text).unwrap(), rec);
    assert!(serde_json::from_str::<LabelRecord>(r#"{"clip_id":"x","labels":[true]}"#).is_err());
}
