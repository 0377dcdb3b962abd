//! Average precision.

use crate::label::{Label, Verb, VerbLabels, NUM_VERBS};

/// Precision averaged over the ranks of the positives, ranking by
/// descending score. Ties keep input order, so callers should pass items in
/// clip-id order. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// AP of one verb over clips, skipping masked entries.
pub fn verb_ap(scores: &[[f64; NUM_VERBS]], labels: &[VerbLabels], verb: Verb) -> Option<f64> {
    let c = verb.code();
    let (s, l): (Vec<f64>, Vec<bool>) = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.0[c] != Label::Masked)
        .map(|(s, l)| (s[c], l.0[c] == Label::Yes))
        .unzip();
    average_precision(&s, &l)
}

/// Per-verb AP and their unweighted mean over verbs where AP is defined.
pub fn mean_average_precision(
    scores: &[[f64; NUM_VERBS]],
    labels: &[VerbLabels],
) -> ([Option<f64>; NUM_VERBS], Option<f64>) {
    let per: [Option<f64>; NUM_VERBS] = std::array::from_fn(|c| verb_ap(scores, labels, Verb::ALL[c]));
    (per, mean_defined(&per))
}

pub fn mean_defined(per: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Expected AP of a uniformly random ranking of `n` items with `p`
/// positives: the positive at position k among positives is preceded on
/// average by (k−1) positives and a share of negatives.
pub fn expected_random_ap(n: usize, p: usize) -> Option<f64> {
    if p == 0 || n == 0 {
        return None;
    }
    if n == 1 {
        return Some(1.0);
    }
    let base = (p as f64 - 1.0) / (n as f64 - 1.0);
    let s: f64 = (1..=n)
        .map(|k| 1.0 / k as f64 + (k as f64 - 1.0) / k as f64 * base)
        .sum();
    Some(s / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_five_sixths() {
        let ap = average_precision(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_and_no_positives() {
        assert_eq!(average_precision(&[3.0, 2.0, 1.0], &[true, true, false]), Some(1.0));
        assert_eq!(average_precision(&[3.0, 2.0], &[false, false]), None);
    }

    #[test]
    fn ties_keep_input_order() {
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]), Some(1.0));
    }

    #[test]
    fn expected_ap_all_positive_is_one() {
        assert!((expected_random_ap(10, 10).unwrap() - 1.0).abs() < 1e-12);
    }
}
