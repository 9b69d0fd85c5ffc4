use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {l} is not binary")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            split: "evaluated".into(),
        });
    }
    Ok((n_pos, n_neg))
}

/// Groups of tied scores in ascending score order, as (score, positives, negatives).
fn tie_groups(scores: &[f64], labels: &[u8]) -> Vec<(f64, u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in idx {
        let (s, l) = (scores[i], labels[i]);
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if l == 1 {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, u64::from(l == 1), u64::from(l == 0))),
        }
    }
    groups
}

/// Mann–Whitney AUC: `(concordant + ½·tied) / (n_pos·n_neg)` over all
/// positive/negative pairs.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    // Twice the statistic, kept in integers so ties add exactly.
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    for (_, p, n) in tie_groups(scores, labels) {
        twice += 2 * p * neg_below + p * n;
        neg_below += n;
    }
    Ok(twice as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean of sensitivity and specificity with `score >= threshold` ⇒ positive.
pub fn balanced_accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    Ok(0.5 * (tp as f64 / n_pos as f64 + tn as f64 / n_neg as f64))
}

/// Threshold (one of the observed scores) maximizing balanced accuracy; ties
/// go to the lowest threshold. Returns `(bacc, threshold)`.
pub fn best_bacc_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let groups = tie_groups(scores, labels);
    // Thresholding at a group's score keeps that group and everything above.
    let (mut tp, mut tn) = (n_pos as u64, 0u64);
    let mut best = (f64::NEG_INFINITY, groups[0].0);
    for (s, p, n) in groups {
        let bacc = 0.5 * (tp as f64 / n_pos as f64 + tn as f64 / n_neg as f64);
        if bacc > best.0 {
            best = (bacc, s);
        }
        tp -= p;
        tn += n;
    }
    Ok(best)
}

/// Specificity at the largest observed-score threshold whose sensitivity is at
/// least `target_sens`, on the empirical ROC. Returns `(specificity, threshold)`.
pub fn spec_at_sens(scores: &[f64], labels: &[u8], target_sens: f64) -> Result<(f64, f64)> {
    if !(target_sens > 0.0 && target_sens <= 1.0) {
        return Err(Error::invalid(format!("target sensitivity {target_sens} outside (0, 1]")));
    }
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let (mut tp, mut fp) = (0u64, 0u64);
    for (s, p, n) in tie_groups(scores, labels).into_iter().rev() {
        tp += p;
        fp += n;
        if tp as f64 / n_pos as f64 >= target_sens {
            return Ok(((n_neg as u64 - fp) as f64 / n_neg as f64, s));
        }
    }
    unreachable!("the lowest threshold reaches sensitivity 1")
}

/// Classification metrics on a held-out split. The bACC threshold is chosen
/// on a separate (validation) split and applied unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub bacc: f64,
    pub bacc_threshold: f64,
    pub spec_at_sens90: f64,
    pub operating_threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl EvalReport {
    pub fn compute(val_scores: &[f64], val_labels: &[u8], test_scores: &[f64], test_labels: &[u8]) -> Result<Self> {
        let (_, bacc_threshold) = best_bacc_threshold(val_scores, val_labels)?;
        let (n_pos, n_neg) = class_counts(test_scores, test_labels)?;
        let (spec_at_sens90, operating_threshold) = spec_at_sens(test_scores, test_labels, 0.9)?;
        Ok(EvalReport {
            auc: auc(test_scores, test_labels)?,
            bacc: balanced_accuracy(test_scores, test_labels, bacc_threshold)?,
            bacc_threshold,
            spec_at_sens90,
            operating_threshold,
            n_pos,
            n_neg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n²) pair count.
    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.1], &[0, 1]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass { .. })));
        assert!(auc(&[0.1], &[0, 1]).is_err());
    }

    #[test]
    fn auc_matches_pair_count() {
        let scores = [0.3, 0.1, 0.7, 0.7, 0.2, 0.9, 0.3, 0.5];
        let labels = [1, 0, 1, 0, 0, 1, 0, 1];
        assert_eq!(auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
    }

    #[test]
    fn bacc_basics() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let l = [0, 0, 1, 1];
        assert_eq!(balanced_accuracy(&s, &l, 0.5).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&s, &l, 0.0).unwrap(), 0.5);
        assert_eq!(best_bacc_threshold(&s, &l).unwrap(), (1.0, 0.8));
    }

    #[test]
    fn bacc_matches_confusion_matrix() {
        let s = [0.05, 0.4, 0.35, 0.8, 0.1, 0.65, 0.5, 0.2, 0.9];
        let l = [0, 1, 0, 1, 0, 0, 1, 1, 1];
        let t = 0.4;
        // Positives at or above 0.4: 0.4, 0.8, 0.5, 0.9 (TP 4 of 5);
        // negatives below: 0.05, 0.35, 0.1 (TN 3 of 4).
        let expect = 0.5 * (4.0 / 5.0 + 3.0 / 4.0);
        assert!((balanced_accuracy(&s, &l, t).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn spec_at_sens_basics() {
        let (spec, t) = spec_at_sens(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 0.9).unwrap();
        assert_eq!((spec, t), (1.0, 0.8));
        let (spec, _) = spec_at_sens(&[0.5; 4], &[0, 1, 0, 1], 0.9).unwrap();
        assert_eq!(spec, 0.0);
        assert!(spec_at_sens(&[0.5; 2], &[0, 1], 0.0).is_err());
    }

    #[test]
    fn report_uses_validation_threshold() {
        let r = EvalReport::compute(&[0.2, 0.6], &[0, 1], &[0.1, 0.5, 0.7, 0.3], &[0, 1, 1, 0]).unwrap();
        assert_eq!(r.bacc_threshold, 0.6);
        assert_eq!(r.bacc, 0.75);
        assert_eq!(r.auc, 1.0);
        assert_eq!((r.n_pos, r.n_neg), (2, 2));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }
}
