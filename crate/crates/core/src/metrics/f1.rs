use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Binary evaluation summary. `confusion[gold][pred]`, indices are label values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub per_class: [ClassMetrics; 2],
    pub macro_f1: f64,
    pub confusion: [[usize; 2]; 2],
}

impl EvalOutcome {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        (self.confusion[0][0] + self.confusion[1][1]) as f64 / self.total() as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted mean of the two per-class F1 scores. Undefined precision, recall or F1
/// (zero denominators) count as 0, so a class absent from both `gold` and `pred`
/// contributes an F1 of 0.
pub fn macro_f1(gold: &[Label], pred: &[Label]) -> Result<EvalOutcome, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut confusion = [[0usize; 2]; 2];
    for (g, p) in gold.iter().zip(pred) {
        confusion[g.index()][p.index()] += 1;
    }
    let class = |c: usize| {
        let tp = confusion[c][c];
        let predicted = confusion[0][c] + confusion[1][c];
        let support = confusion[c][0] + confusion[c][1];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        ClassMetrics { precision, recall, f1, support }
    };
    let per_class = [class(0), class(1)];
    Ok(EvalOutcome { macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0, per_class, confusion })
}

/// `a.macro_f1 − b.macro_f1`.
pub fn delta_f1(a: &EvalOutcome, b: &EvalOutcome) -> f64 {
    a.macro_f1 - b.macro_f1
}

/// On-disk metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub n: usize,
    pub macro_f1: f64,
    pub per_class: [ClassMetrics; 2],
    pub confusion: [[usize; 2]; 2],
}

impl MetricsReport {
    pub fn new(dataset: &str, outcome: &EvalOutcome) -> Self {
        Self {
            dataset: dataset.to_string(),
            n: outcome.total(),
            macro_f1: outcome.macro_f1,
            per_class: outcome.per_class,
            confusion: outcome.confusion,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Hateful as H, NonHateful as N};

    fn labels(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&x| Label::from_u8(x).unwrap()).collect()
    }

    #[test]
    fn worked_example() {
        let out = macro_f1(&labels(&[1, 1, 0, 0]), &labels(&[1, 0, 0, 0])).unwrap();
        // class 1: tp 1, fp 0, fn 1 -> p 1, r 1/2 -> 2/3; class 0: tp 2, fp 1, fn 0 -> p 2/3, r 1 -> 0.8
        assert!((out.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((out.per_class[0].f1 - 0.8).abs() < 1e-15);
        assert!((out.macro_f1 - 0.7333333333333334).abs() < 1e-15);
        assert_eq!(out.confusion, [[2, 0], [1, 1]]);
    }

    #[test]
    fn perfect_and_inverted() {
        assert_eq!(macro_f1(&[H, N, H], &[H, N, H]).unwrap().macro_f1, 1.0);
        assert_eq!(macro_f1(&[H, N], &[N, H]).unwrap().macro_f1, 0.0);
        // class 1 absent everywhere contributes zero
        assert_eq!(macro_f1(&[N, N], &[N, N]).unwrap().macro_f1, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(macro_f1(&[H], &[]), Err(MetricsError::LengthMismatch(1, 0))));
        assert!(matches!(macro_f1(&[], &[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn delta_sign_convention() {
        let mk = |m: f64| EvalOutcome { per_class: [ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0 }; 2], macro_f1: m, confusion: [[0; 2]; 2] };
        assert!((delta_f1(&mk(0.75), &mk(0.57)) - 0.18).abs() < 1e-12);
        assert_eq!(delta_f1(&mk(0.6), &mk(0.6)), 0.0);
        assert!((delta_f1(&mk(0.4), &mk(0.6)) + 0.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..30), rot in 0usize..30) {
            let gold: Vec<Label> = pairs.iter().map(|p| Label::from_u8(p.0).unwrap()).collect();
            let pred: Vec<Label> = pairs.iter().map(|p| Label::from_u8(p.1).unwrap()).collect();
            let base = macro_f1(&gold, &pred).unwrap();
            let k = rot % gold.len();
            let mut g2 = gold.clone();
            let mut p2 = pred.clone();
            g2.rotate_left(k);
            p2.rotate_left(k);
            g2.reverse();
            p2.reverse();
            prop_assert_eq!(macro_f1(&g2, &p2).unwrap(), base);
        }
    }
}
