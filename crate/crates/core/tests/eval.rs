use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::oracle_ap;
use trajverb::eval::*;
use trajverb::label::{Label, Verb, VerbLabels, NUM_VERBS};
use trajverb::model::{masked_bce, Classifier, Dense, Encoder};

#[test]
fn flipping_masked_labels_changes_nothing() {
    common::masking_paired_run();
}

#[test]
fn average_precision_matches_oracle_on_every_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..4 {
        // coarse scores in the later trials force ties
        let scores: Vec<f64> = (0..8)
            .map(|_| {
                if trial < 2 {
                    rng.random()
                } else {
                    rng.random_range(0..3) as f64
                }
            })
            .collect();
        for pattern in 0u32..256 {
            let labels: Vec<bool> = (0..8).map(|b| pattern >> b & 1 == 1).collect();
            assert_eq!(
                average_precision(&scores, &labels),
                oracle_ap(&scores, &labels),
                "scores {scores:?} pattern {pattern:08b}"
            );
        }
    }
}

#[test]
fn perfect_ranking_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let labels: Vec<VerbLabels> = (0..50)
        .map(|_| {
            let mut l = VerbLabels::all_masked();
            for v in Verb::ALL {
                l.set(v, Label::from_bool(rng.random_bool(0.3)));
            }
            l
        })
        .collect();
    let scores: Vec<[f64; NUM_VERBS]> = labels
        .iter()
        .map(|l| std::array::from_fn(|v| if l.0[v] == Label::Yes { 1.0 } else { 0.0 }))
        .collect();
    let (per, map) = mean_average_precision(&scores, &labels);
    assert!(per.iter().flatten().all(|&a| a == 1.0));
    assert_eq!(map, Some(1.0));
}

#[test]
fn random_stratified_matches_expected_random_ap() {
    let n = 1000;
    for (verb, p) in [(Verb::Fall, 0.05f64), (Verb::Roll, 0.2), (Verb::Slide, 0.5)] {
        let mut rng = ChaCha8Rng::seed_from_u64(p.to_bits());
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
        let (per, _) = random_stratified(&rates, &labels, &mut rng, 100).unwrap();
        let got = per[verb.code()].unwrap();
        let want = expected_random_ap(n, positives).unwrap();
        assert!((got - want).abs() <= 0.02, "{}: {got:.4} vs {want:.4}", verb.name());
    }
}

#[test]
fn masked_entries_carry_no_loss_or_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<VerbLabels> = (0..16)
        .map(|_| {
            let mut l = VerbLabels::all_masked();
            for v in Verb::ALL {
                if rng.random_bool(0.6) {
                    l.set(v, Label::from_bool(rng.random_bool(0.5)));
                }
            }
            l
        })
        .collect();
    let logits = Array2::from_shape_fn((16, NUM_VERBS), |_| rng.random_range(-3.0..3.0));
    let mut moved = logits.clone();
    for (b, l) in labels.iter().enumerate() {
        for v in 0..NUM_VERBS {
            if l.0[v].is_masked() {
                moved[[b, v]] += rng.random_range(-50.0..50.0);
            }
        }
    }
    let (la, ga) = masked_bce(&logits, &labels).unwrap();
    let (lb, gb) = masked_bce(&moved, &labels).unwrap();
    assert_eq!(la.to_bits(), lb.to_bits());
    assert_eq!(ga, gb);
    for (b, l) in labels.iter().enumerate() {
        for v in 0..NUM_VERBS {
            if l.0[v].is_masked() {
                assert_eq!(ga[[b, v]], 0.0);
            }
        }
    }
}

fn result(a: Approach, per: Vec<Option<f64>>) -> ApproachResult {
    ApproachResult {
        approach: a,
        map: mean_defined(&per),
        per_verb: per,
    }
}

#[test]
fn categories_follow_the_thresholds() {
    let one = |x: f64| {
        let mut v = vec![None; NUM_VERBS];
        v[0] = Some(x);
        v
    };
    let cat = |perc: f64, sup: f64, probe: f64, fine: f64| {
        categorize(&[
            result(Approach::Perceptron, one(perc)),
            result(Approach::Supervised, one(sup)),
            result(Approach::Probe, one(probe)),
            result(Approach::Finetune, one(fine)),
        ])[0]
    };
    assert_eq!(cat(0.80, 0.82, 0.83, 0.81), Some(Category::Trivial));
    assert_eq!(cat(0.70, 0.80, 0.75, 0.74), Some(Category::Tractable));
    assert_eq!(cat(0.70, 0.80, 0.74, 0.74), Some(Category::Hard));
    assert_eq!(
        categorize(&[result(Approach::Perceptron, vec![None; NUM_VERBS])])[1],
        None
    );
}

#[test]
fn report_has_every_approach_and_verb() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let labels = |rng: &mut ChaCha8Rng, n: usize| -> Vec<VerbLabels> {
        (0..n)
            .map(|_| {
                let mut l = VerbLabels::all_masked();
                for v in &Verb::ALL[..6] {
                    l.set(*v, Label::from_bool(rng.random_bool(0.3)));
                }
                l
            })
            .collect()
    };
    let (lt, lv, ls) = (labels(&mut rng, 30), labels(&mut rng, 10), labels(&mut rng, 20));
    let train = common::random_set(&mut rng, 30, lt);
    let val = common::random_set(&mut rng, 10, lv);
    let test = common::random_set(&mut rng, 20, ls);
    let raw = Classifier {
        encoder: None,
        head: Dense::init(NUM_VERBS, 900, &mut rng),
    };
    let enc = Encoder::init(4, 3, &mut rng);
    let encoded = Classifier {
        encoder: Some(enc),
        head: Dense::init(NUM_VERBS, 270, &mut rng),
    };
    let log = trajverb::model::TrainLog::default();
    let trained = Trained {
        perceptron: (raw, log.clone()),
        supervised: (encoded.clone(), log.clone()),
        probe: (encoded.clone(), log.clone()),
        finetune: (encoded, log),
    };
    let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
    let split = Split::by_session(&ids, 0);
    let report = assemble_report(&train, &val, [&test; 4], &split, &trained, 10, 1).unwrap();

    assert_eq!(report.verbs.len(), NUM_VERBS);
    let approaches: Vec<Approach> = report.results.iter().map(|r| r.approach).collect();
    assert_eq!(approaches, Approach::ALL);
    for r in &report.results {
        assert_eq!(r.per_verb.len(), NUM_VERBS);
        // verbs without test labels are undefined, never zero
        assert!(r.per_verb[6..].iter().all(Option::is_none));
    }
    assert_eq!(report.split.test_clips, 20);
    for v in Verb::ALL {
        if let Some(d) = report.delta_vs_supervised(Approach::Supervised, v) {
            assert_eq!(d, 0.0);
        }
    }
    let csv = report.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("verb,approach,AP,delta_vs_supervised,category"));
    assert_eq!(lines.count(), NUM_VERBS * 5 + 5);

    let mut other = test.clone();
    other.ids[0] = "elsewhere".into();
    assert!(assemble_report(&train, &val, [&test, &test, &other, &test], &split, &trained, 10, 1).is_err());
}

proptest! {
    #[test]
    fn ap_ignores_monotone_transforms(
        items in proptest::collection::vec((-10.0f64..10.0, any::<bool>()), 1..40),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = items.into_iter().unzip();
        let moved: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
        // strictly increasing maps can merge near-ties through rounding; only
        // compare when the order is unchanged
        let order = |s: &[f64]| {
            let mut o: Vec<usize> = (0..s.len()).collect();
            o.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            o
        };
        prop_assume!(order(&scores) == order(&moved));
        prop_assert_eq!(average_precision(&scores, &labels), average_precision(&moved, &labels));
        if let Some(ap) = average_precision(&scores, &labels) {
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }
    }
}
