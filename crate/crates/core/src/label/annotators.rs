//! Simulated annotators, majority aggregation, agreement and verb
//! co-occurrence.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::{AnnotationResponse, Label, Response, Verb, VerbLabels, NUM_VERBS};
use crate::error::{Error, Result};

/// `n` independent workers (`w0`, `w1`, …) who each report the true label
/// of every unmasked verb, flipped with that verb's probability. Masked
/// verbs receive no responses.
pub fn simulate_annotators<R: Rng + ?Sized>(
    clip_id: &str,
    labels: &VerbLabels,
    flip_rate: &[f64; NUM_VERBS],
    n: usize,
    rng: &mut R,
) -> Result<Vec<AnnotationResponse>> {
    if let Some(r) = flip_rate.iter().find(|r| !(0.0..0.5).contains(*r)) {
        return Err(Error::invalid(format!("flip rate must be in [0, 0.5), got {r}")));
    }
    let mut out = Vec::new();
    for w in 0..n {
        for v in Verb::ALL {
            let truth = match labels.get(v) {
                Label::Masked => continue,
                l => l == Label::Yes,
            };
            let flip = rng.random::<f64>() < flip_rate[v.code()];
            out.push(AnnotationResponse {
                clip_id: clip_id.to_string(),
                verb: v,
                worker: format!("w{w}"),
                response: if truth != flip { Response::Yes } else { Response::No },
            });
        }
    }
    Ok(out)
}

/// Majority label of one clip: yes when more than half of the responses
/// to a verb are yes, no otherwise (ties and unsure go to no); verbs with no
/// responses are masked.
pub fn aggregate_majority(responses: &[AnnotationResponse]) -> VerbLabels {
    let mut yes = [0usize; NUM_VERBS];
    let mut total = [0usize; NUM_VERBS];
    for r in responses {
        let c = r.verb.code();
        total[c] += 1;
        if r.response == Response::Yes {
            yes[c] += 1;
        }
    }
    let mut out = VerbLabels::all_masked();
    for v in Verb::ALL {
        let c = v.code();
        if total[c] > 0 {
            out.set(v, Label::from_bool(2 * yes[c] > total[c]));
        }
    }
    out
}

/// Responses grouped by clip id, in clip-id order.
pub fn group_by_clip(responses: &[AnnotationResponse]) -> BTreeMap<&str, Vec<&AnnotationResponse>> {
    let mut m: BTreeMap<&str, Vec<&AnnotationResponse>> = BTreeMap::new();
    for r in responses {
        m.entry(r.clip_id.as_str()).or_default().push(r);
    }
    m
}

/// Majority labels of every clip.
pub fn majority_labels(responses: &[AnnotationResponse]) -> BTreeMap<String, VerbLabels> {
    group_by_clip(responses)
        .into_iter()
        .map(|(clip, rs)| {
            let owned: Vec<AnnotationResponse> = rs.into_iter().cloned().collect();
            (clip.to_string(), aggregate_majority(&owned))
        })
        .collect()
}

/// Per verb, the mean over clips of the fraction of responses that match
/// the clip's majority label; `None` for verbs nobody was asked about.
pub fn agreement(responses: &[AnnotationResponse]) -> [Option<f64>; NUM_VERBS] {
    let mut sum = [0.0; NUM_VERBS];
    let mut clips = [0usize; NUM_VERBS];
    for (_, rs) in group_by_clip(responses) {
        let mut yes = [0usize; NUM_VERBS];
        let mut total = [0usize; NUM_VERBS];
        for r in &rs {
            total[r.verb.code()] += 1;
            if r.response == Response::Yes {
                yes[r.verb.code()] += 1;
            }
        }
        for c in 0..NUM_VERBS {
            if total[c] == 0 {
                continue;
            }
            let majority_yes = 2 * yes[c] > total[c];
            let matching = if majority_yes {
                yes[c]
            } else {
                rs.iter()
                    .filter(|r| r.verb.code() == c && r.response == Response::No)
                    .count()
            };
            sum[c] += matching as f64 / total[c] as f64;
            clips[c] += 1;
        }
    }
    std::array::from_fn(|c| (clips[c] > 0).then(|| sum[c] / clips[c] as f64))
}

/// 24 × 24 conditional frequencies; `None` where the conditioning set is
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix(pub [[Option<f64>; NUM_VERBS]; NUM_VERBS]);

impl CooccurrenceMatrix {
    pub fn get(&self, given: Verb, other: Verb) -> Option<f64> {
        self.0[given.code()][other.code()]
    }
}

/// Raw-response co-occurrence. For every clip and every worker who said
/// yes to `v1`, each *other* worker's response to `v2` is counted;
/// `M[v1][v2]` is the fraction of those responses that are yes.
pub fn cooccurrence(responses: &[AnnotationResponse]) -> CooccurrenceMatrix {
    let mut yes = [[0usize; NUM_VERBS]; NUM_VERBS];
    let mut total = [[0usize; NUM_VERBS]; NUM_VERBS];
    for (_, rs) in group_by_clip(responses) {
        // worker -> (verb code -> response)
        let mut by_worker: BTreeMap<&str, BTreeMap<usize, Response>> = BTreeMap::new();
        for r in &rs {
            by_worker
                .entry(r.worker.as_str())
                .or_default()
                .insert(r.verb.code(), r.response);
        }
        let workers: BTreeSet<&str> = by_worker.keys().copied().collect();
        for (&w, answers) in &by_worker {
            for (&v1, &resp) in answers {
                if resp != Response::Yes {
                    continue;
                }
                for &other in workers.iter().filter(|&&o| o != w) {
                    for (&v2, &r2) in &by_worker[other] {
                        total[v1][v2] += 1;
                        if r2 == Response::Yes {
                            yes[v1][v2] += 1;
                        }
                    }
                }
            }
        }
    }
    CooccurrenceMatrix(std::array::from_fn(|a| {
        std::array::from_fn(|b| (total[a][b] > 0).then(|| yes[a][b] as f64 / total[a][b] as f64))
    }))
}

/// Majority-label co-occurrence: `M[v1][v2]` is the fraction of clips with
/// majority yes on `v1` that also have majority yes on `v2`, over clips
/// where both verbs were asked.
pub fn cooccurrence_majority(responses: &[AnnotationResponse]) -> CooccurrenceMatrix {
    let mut yes = [[0usize; NUM_VERBS]; NUM_VERBS];
    let mut total = [[0usize; NUM_VERBS]; NUM_VERBS];
    for labels in majority_labels(responses).values() {
        for a in 0..NUM_VERBS {
            if labels.0[a] != Label::Yes {
                continue;
            }
            for b in 0..NUM_VERBS {
                match labels.0[b] {
                    Label::Masked => {}
                    l => {
                        total[a][b] += 1;
                        if l == Label::Yes {
                            yes[a][b] += 1;
                        }
                    }
                }
            }
        }
    }
    CooccurrenceMatrix(std::array::from_fn(|a| {
        std::array::from_fn(|b| (total[a][b] > 0).then(|| yes[a][b] as f64 / total[a][b] as f64))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(clip: &str, verb: Verb, worker: &str, r: Response) -> AnnotationResponse {
        AnnotationResponse {
            clip_id: clip.into(),
            verb,
            worker: worker.into(),
            response: r,
        }
    }

    fn votes(pattern: &[Response]) -> Vec<AnnotationResponse> {
        pattern
            .iter()
            .enumerate()
            .map(|(i, r)| resp("c", Verb::Roll, &format!("w{i}"), *r))
            .collect()
    }

    #[test]
    fn majority_and_tie_break() {
        use Response::*;
        assert_eq!(
            aggregate_majority(&votes(&[Yes, Yes, Yes, No, No])).get(Verb::Roll),
            Label::Yes
        );
        assert_eq!(
            aggregate_majority(&votes(&[No, No, No, No, Yes])).get(Verb::Roll),
            Label::No
        );
        assert_eq!(
            aggregate_majority(&votes(&[Yes, Yes, No, No])).get(Verb::Roll),
            Label::No
        );
        assert_eq!(
            aggregate_majority(&votes(&[Yes, Yes, No, No])).get(Verb::Fall),
            Label::Masked
        );
    }

    #[test]
    fn three_two_split_agreement_is_point_six() {
        use Response::*;
        let a = agreement(&votes(&[Yes, Yes, Yes, No, No]));
        assert!((a[Verb::Roll.code()].unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(a[Verb::Fall.code()], None);
    }

    #[test]
    fn lone_worker_row_is_missing() {
        let m = cooccurrence(&[resp("c", Verb::Fall, "w0", Response::Yes)]);
        assert_eq!(m.get(Verb::Fall, Verb::Fall), None);
    }

    #[test]
    fn zero_flip_rate_reproduces_labels() {
        use rand::SeedableRng;
        let mut labels = VerbLabels::all_masked();
        labels.set(Verb::Fall, Label::Yes);
        labels.set(Verb::Roll, Label::No);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let rs = simulate_annotators("c", &labels, &[0.0; NUM_VERBS], 5, &mut rng).unwrap();
        assert_eq!(rs.len(), 10);
        assert_eq!(aggregate_majority(&rs), labels);
    }
}
