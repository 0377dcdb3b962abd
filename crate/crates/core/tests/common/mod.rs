//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajverb::geometry::{Quat, Vec3};
use trajverb::label::{Label, Verb, VerbLabels, NUM_VERBS};
use trajverb::model::{discounted_mse_batch, masked_bce, Classifier, Dense, Encoder, HeadConfig, LabeledSet, ParamSet};
use trajverb::sim::physics::{step_body, support_depth};
use trajverb::sim::{sample_session_params, Body, Contact, Mesh, PhysicsState, SceneConfig};
use trajverb::trajectory::{Frame, Session, FRAME_DT, SESSION_FRAMES};

/// Central finite differences of `loss` w.r.t. every parameter, compared
/// per tensor against `analytic`. Returns `(name, relative error)` with
/// relative error `‖a − n‖ / (‖a‖ + ‖n‖)`.
pub fn finite_difference_check<P, F>(params: &P, analytic: &P, h: f64, loss: F) -> Vec<(String, f64)>
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let names = params.tensor_names();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (ti, name) in names.into_iter().enumerate() {
        let a = analytic.tensors()[ti].to_vec();
        let mut num = vec![0.0; sizes[ti]];
        for i in 0..sizes[ti] {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= h;
            num[i] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        let diff: f64 = a.iter().zip(&num).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + num.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push((name, if scale > 0.0 { diff / scale } else { 0.0 }));
    }
    out
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

/// Gradient checks on a width-8 model with n = 6 input steps and k = 4
/// forecast steps: autoregressive and teacher-forced forecasting, and
/// end-to-end masked classification.
pub fn gradient_check_report() -> Vec<(String, f64)> {
    let (width, n, k, batch) = (8, 6, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let enc = Encoder::init(width, width, &mut rng);
    let inputs: Vec<Array2<f64>> = (0..n).map(|_| randn(&mut rng, batch, 10)).collect();
    let targets: Vec<Array2<f64>> = (0..k).map(|_| randn(&mut rng, batch, 10)).collect();
    let gamma = 0.85;
    let mut report = Vec::new();

    for teacher in [false, true] {
        let tf = teacher.then_some(targets.as_slice());
        let loss = |e: &Encoder| {
            let ft = e.forecast_forward(&inputs, k, tf).unwrap();
            discounted_mse_batch(&ft.preds, &targets, gamma).unwrap().0
        };
        let ft = enc.forecast_forward(&inputs, k, tf).unwrap();
        let (_, dpreds) = discounted_mse_batch(&ft.preds, &targets, gamma).unwrap();
        let mut grad = enc.zeros_like();
        enc.forecast_backward(&ft, &dpreds, &mut grad);
        let tag = if teacher { "teacher" } else { "forecast" };
        for (name, err) in finite_difference_check(&enc, &grad, 1e-5, loss) {
            report.push((format!("{tag}/{name}"), err));
        }
    }

    let clf = Classifier {
        encoder: Some(Encoder::init(width, width, &mut rng)),
        head: Dense::init(NUM_VERBS, n * width, &mut rng),
    };
    let labels: Vec<VerbLabels> = (0..batch)
        .map(|_| {
            VerbLabels(std::array::from_fn(|_| match rng.random_range(0..3) {
                0 => Label::Yes,
                1 => Label::No,
                _ => Label::Masked,
            }))
        })
        .collect();
    let loss = |c: &Classifier| masked_bce(&c.forward(&inputs).unwrap().logits, &labels).unwrap().0;
    let ct = clf.forward(&inputs).unwrap();
    let (_, dlogits) = masked_bce(&ct.logits, &labels).unwrap();
    let mut grad = clf.zeros_like();
    clf.backward(&ct, &dlogits, &mut grad, true);
    for (name, err) in finite_difference_check(&clf, &grad, 1e-5, loss) {
        // the forecast projection is not part of the classifier's graph
        if !name.starts_with("project.") {
            report.push((format!("classify/{name}"), err));
        }
    }
    report
}

/// Independent rank-walk: the rank of item i counts items scored strictly
/// higher plus tied items listed before it. Precisions are summed in rank
/// order so the floating-point result is reproducible exactly.
pub fn oracle_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n = scores.len();
    let rank = |i: usize| {
        (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
            + 1
    };
    let mut pos: Vec<(usize, usize)> = (0..n).filter(|&i| labels[i]).map(|i| (rank(i), i)).collect();
    if pos.is_empty() {
        return None;
    }
    pos.sort();
    let mut sum = 0.0;
    for (k, &(r, _)) in pos.iter().enumerate() {
        sum += (k + 1) as f64 / r as f64;
    }
    Some(sum / pos.len() as f64)
}

/// Hidden yes/no values with a mask on top; masked slots reach training as
/// `Label::Masked` whatever value sits underneath.
pub fn masked_labels(values: &[[bool; NUM_VERBS]], mask: &[[bool; NUM_VERBS]]) -> Vec<VerbLabels> {
    values
        .iter()
        .zip(mask)
        .map(|(val, m)| {
            let mut l = VerbLabels::all_masked();
            for v in Verb::ALL {
                if !m[v.code()] {
                    l.set(v, Label::from_bool(val[v.code()]));
                }
            }
            l
        })
        .collect()
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, labels: Vec<VerbLabels>) -> LabeledSet {
    LabeledSet {
        ids: (0..n).map(|i| format!("c{i:03}")).collect(),
        clips: (0..n)
            .map(|_| Array2::from_shape_fn((90, 10), |_| rng.random_range(-1.0..1.0)))
            .collect(),
        labels,
    }
}

pub fn small_head(epochs: usize) -> HeadConfig {
    HeadConfig {
        learning_rate: 1e-2,
        epochs,
        batch_size: 8,
        patience: epochs,
        seed: 3,
        ..HeadConfig::default()
    }
}

/// Trains twice on labels that differ only under the mask and checks the
/// models and their predictions are bitwise equal. Panics on failure.
pub fn masking_paired_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 40;
    let values: Vec<[bool; NUM_VERBS]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_bool(0.4))).collect();
    let mask: Vec<[bool; NUM_VERBS]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_bool(0.3))).collect();
    let flipped: Vec<[bool; NUM_VERBS]> = values
        .iter()
        .zip(&mask)
        .map(|(v, m)| std::array::from_fn(|i| v[i] ^ m[i]))
        .collect();
    let clip_rng = rng.clone();
    let set_a = random_set(&mut clip_rng.clone(), n, masked_labels(&values, &mask));
    let set_b = random_set(&mut clip_rng.clone(), n, masked_labels(&flipped, &mask));
    assert_eq!(set_a.clips, set_b.clips);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let val = random_set(&mut rng, 12, masked_labels(&values[..12], &mask[..12]));

    let (pa, _) = trajverb::eval::perceptron(&set_a, &val, &small_head(5)).unwrap();
    let (pb, _) = trajverb::eval::perceptron(&set_b, &val, &small_head(5)).unwrap();
    assert_eq!(pa, pb);
    let sa = trajverb::model::train::predict_all(&pa, &val).unwrap();
    let sb = trajverb::model::train::predict_all(&pb, &val).unwrap();
    assert!(sa
        .iter()
        .flatten()
        .zip(sb.iter().flatten())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    let (ea, _) = trajverb::eval::supervised(&set_a, &val, 4, 3, &small_head(2)).unwrap();
    let (eb, _) = trajverb::eval::supervised(&set_b, &val, 4, 3, &small_head(2)).unwrap();
    assert_eq!(ea, eb);

    // the comparison is sensitive: flipping one unmasked label does change the head
    let (row, verb) = (0..n)
        .flat_map(|r| (0..NUM_VERBS).map(move |v| (r, v)))
        .find(|&(r, v)| !mask[r][v])
        .unwrap();
    let mut touched = values.clone();
    touched[row][verb] ^= true;
    let set_c = random_set(&mut clip_rng.clone(), n, masked_labels(&touched, &mask));
    let (pc, _) = trajverb::eval::perceptron(&set_c, &val, &small_head(5)).unwrap();
    assert_ne!(pa.head, pc.head);
}

pub fn body(mesh: Mesh, e: f64) -> Body {
    Body {
        mesh,
        mass: 1.0,
        drag: 0.0,
        angular_drag: 0.1,
        dynamic_friction: 0.5,
        static_friction: 0.5,
        bounciness: e,
    }
}

/// Height of the lowest point of a sphere dropped from rest with its lowest
/// point `h` above the floor, at the top of its first rebound.
pub fn first_rebound_height(e: f64, h: f64) -> f64 {
    let scene = SceneConfig::default();
    let b = body(Mesh::Sphere, e);
    let r = support_depth(Mesh::Sphere, Quat::IDENTITY);
    let mut s = PhysicsState::at_rest(Vec3::new(0.0, h + r, -1.0), Quat::IDENTITY, Contact::Air);
    let mut bounced = false;
    let mut peak = 0.0f64;
    for f in 0..2000 {
        let n = step_body(&s, &b, &scene, FRAME_DT, f).unwrap();
        if !bounced && s.vel.y < 0.0 && n.vel.y > 0.0 {
            bounced = true;
        }
        if bounced {
            peak = peak.max(n.pos.y - r);
            if n.vel.y <= 0.0 {
                break;
            }
        }
        s = n;
    }
    assert!(bounced, "no bounce for e = {e}");
    peak
}

pub fn static_session() -> Session {
    let scene = SceneConfig::default();
    let params = sample_session_params(&mut ChaCha8Rng::seed_from_u64(1), &scene);
    let frames = (0..SESSION_FRAMES)
        .map(|index| Frame {
            index,
            object_pos: Vec3::new(0.2, 1.0, 2.0),
            object_rot: Quat::IDENTITY,
            hand_pos: Vec3::new(-2.0, 1.0, -2.0),
        })
        .collect();
    let s = Session {
        id: "static".into(),
        seed: 1,
        params,
        events: Vec::new(),
        frames,
    };
    s.validate().unwrap();
    s
}

/// A session whose frames are numbered so each clip reveals where it came
/// from: object x equals the frame index.
pub fn ramp_session() -> Session {
    let mut s = static_session();
    for f in &mut s.frames {
        f.object_pos.x = f.index as f64;
    }
    s
}

/// Curve with one run of `len` frames above the threshold.
pub fn bump(start: usize, len: usize) -> Vec<f64> {
    let mut c = vec![0.0; SESSION_FRAMES];
    for v in &mut c[start..start + len] {
        *v = 1.0;
    }
    c
}
