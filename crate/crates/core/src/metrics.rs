//! Confusion matrix, per-class and macro precision/recall/F1, ROC and AUC.
//! The positive class is REAL (`1`).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn new(true_pos: u64, false_pos: u64, false_neg: u64, true_neg: u64) -> Self {
        Self {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

fn check_classes(y: &[u8]) -> Result<()> {
    match y.iter().find(|&&c| c > 1) {
        Some(c) => Err(Error::Domain(format!(
            "class labels must be 0 or 1, got {c}"
        ))),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Domain(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Domain("no examples to evaluate".into()));
    }
    check_classes(y_true)?;
    check_classes(y_pred)?;
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => m.true_pos += 1,
            (0, 1) => m.false_pos += 1,
            (1, 0) => m.false_neg += 1,
            _ => m.true_neg += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub real: ClassMetrics,
    pub fake: ClassMetrics,
    pub macro_avg: ClassMetrics,
    /// Set when a 0/0 ratio was replaced by 0.
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64, what: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        warnings.push(format!("{what} undefined (0/0), reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(
    tp: u64,
    fp: u64,
    fn_: u64,
    class: &str,
    warnings: &mut Vec<String>,
) -> ClassMetrics {
    let precision = ratio(tp, tp + fp, &format!("precision_{class}"), warnings);
    let recall = ratio(tp, tp + fn_, &format!("recall_{class}"), warnings);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        warnings.push(format!("f1_{class} undefined (0/0), reported as 0"));
        0.0
    };
    ClassMetrics {
        precision,
        recall,
        f1,
    }
}

pub fn summarize(m: &ConfusionMatrix) -> Result<Summary> {
    if m.total() == 0 {
        return Err(Error::Domain("confusion matrix is empty".into()));
    }
    let mut warnings = Vec::new();
    let accuracy = (m.true_pos + m.true_neg) as f64 / m.total() as f64;
    let real = class_metrics(m.true_pos, m.false_pos, m.false_neg, "real", &mut warnings);
    // The fake class sees the matrix mirrored.
    let fake = class_metrics(m.true_neg, m.false_neg, m.false_pos, "fake", &mut warnings);
    let macro_avg = ClassMetrics {
        precision: 0.5 * (real.precision + fake.precision),
        recall: 0.5 * (real.recall + fake.recall),
        f1: 0.5 * (real.f1 + fake.f1),
    };
    Ok(Summary {
        accuracy,
        real,
        fake,
        macro_avg,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive. The first point uses `+∞`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores in descending order; tied
/// scores flip together. AUC is the trapezoidal area under the points, which
/// equals the Mann–Whitney statistic with ties counted as one half.
pub fn roc(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::Domain(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    check_classes(y_true)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores contain NaN".into()));
    }
    let pos = y_true.iter().filter(|&&c| c == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain("ROC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        let (prev_tp, prev_fp) = (tp, fp);
        while k < order.len() && scores[order[k]] == threshold {
            if y_true[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        // trapezoid in count units, normalised at the end
        auc += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc / (pos as f64 * neg as f64),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub matrix: ConfusionMatrix,
    pub summary: Summary,
    pub roc: RocCurve,
}

impl EvaluationReport {
    pub fn auc(&self) -> f64 {
        self.roc.auc
    }

    pub fn accuracy(&self) -> f64 {
        self.summary.accuracy
    }

    /// Flat JSON document with the fixed metric key names.
    pub fn to_json(&self, model: Option<&str>) -> Result<String> {
        let s = &self.summary;
        let doc = MetricsJson {
            model: model.map(str::to_string),
            n: self.matrix.total(),
            accuracy: s.accuracy,
            precision_real: s.real.precision,
            recall_real: s.real.recall,
            f1_real: s.real.f1,
            precision_fake: s.fake.precision,
            recall_fake: s.fake.recall,
            f1_fake: s.fake.f1,
            macro_precision: s.macro_avg.precision,
            macro_recall: s.macro_avg.recall,
            macro_f1: s.macro_avg.f1,
            auc: self.roc.auc,
            confusion: self.matrix,
            warnings: s.warnings.clone(),
        };
        let mut out = serde_json::to_string_pretty(&doc)?;
        out.push('\n');
        Ok(out)
    }

    /// 2×2 block: rows are the true class, columns the predicted class, real first.
    pub fn write_confusion_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        let m = &self.matrix;
        writeln!(w, "\tpred_real\tpred_fake")?;
        writeln!(w, "true_real\t{}\t{}", m.true_pos, m.false_neg)?;
        writeln!(w, "true_fake\t{}\t{}", m.false_pos, m.true_neg)
    }

    /// `fpr\ttpr\tthreshold` rows with a header line.
    pub fn write_roc_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "fpr\ttpr\tthreshold")?;
        for p in &self.roc.points {
            writeln!(w, "{}\t{}\t{}", p.fpr, p.tpr, p.threshold)?;
        }
        Ok(())
    }
}

/// On-disk metrics document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<String>,
    pub n: u64,
    pub accuracy: f64,
    pub precision_real: f64,
    pub recall_real: f64,
    pub f1_real: f64,
    pub precision_fake: f64,
    pub recall_fake: f64,
    pub f1_fake: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

/// Confusion matrix, summary and ROC in one call.
pub fn evaluate(y_true: &[u8], y_pred: &[u8], scores: &[f64]) -> Result<EvaluationReport> {
    let matrix = confusion(y_true, y_pred)?;
    let summary = summarize(&matrix)?;
    let roc = roc(y_true, scores)?;
    Ok(EvaluationReport {
        matrix,
        summary,
        roc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mann_whitney(y: &[u8], s: &[f64]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for (i, &yi) in y.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn confusion_cases() {
        assert_eq!(
            confusion(&[1, 0, 1], &[1, 0, 1]).unwrap(),
            ConfusionMatrix::new(2, 0, 0, 1)
        );
        assert_eq!(
            confusion(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(),
            ConfusionMatrix::new(0, 2, 2, 0)
        );
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn summary_hand_arithmetic() {
        let s = summarize(&ConfusionMatrix::new(50, 10, 5, 35)).unwrap();
        assert_abs_diff_eq!(s.real.precision, 50.0 / 60.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.real.recall, 50.0 / 55.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.real.f1, 0.8696, epsilon = 5e-5);
        assert_abs_diff_eq!(s.accuracy, 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(s.fake.precision, 35.0 / 40.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.fake.recall, 35.0 / 45.0, epsilon = 1e-15);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn summary_perfect_and_degenerate() {
        let s = summarize(&ConfusionMatrix::new(10, 0, 0, 7)).unwrap();
        for v in [
            s.accuracy,
            s.real.precision,
            s.real.recall,
            s.real.f1,
            s.macro_avg.f1,
        ] {
            assert_eq!(v, 1.0);
        }
        let s = summarize(&ConfusionMatrix::new(0, 0, 4, 6)).unwrap();
        assert_eq!(s.real.precision, 0.0);
        assert!(s.warnings.iter().any(|w| w.starts_with("precision_real")));
        assert!(summarize(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn published_bert_matrix_accuracy() {
        let m = ConfusionMatrix::new(4689, 7, 19, 4265);
        let s = summarize(&m).unwrap();
        assert_eq!(m.total(), 8980);
        assert_abs_diff_eq!(s.accuracy, 0.99710, epsilon = 5e-6);
    }

    #[test]
    fn roc_cases() {
        let r = roc(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.3]).unwrap();
        assert_eq!(r.auc, 0.75);
        let r = roc(&[1, 1, 0, 0], &[3.0, 2.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc(&[1, 0, 1, 0, 0], &[0.5; 5]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert!(roc(&[1, 1], &[0.1, 0.2]).is_err());
        assert!(roc(&[1, 0], &[0.1, f64::NAN]).is_err());
    }

    #[test]
    fn roc_points_are_monotone_with_fixed_ends() {
        let r = roc(&[1, 0, 0, 1, 1, 0], &[0.3, 0.3, 0.9, 0.1, 0.7, -2.0]).unwrap();
        let first = r.points.first().unwrap();
        let last = r.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(r
            .points
            .windows(2)
            .all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
    }

    #[test]
    fn json_keys_are_fixed() {
        let rep = evaluate(&[1, 0, 1, 0], &[1, 0, 0, 0], &[0.9, 0.1, -0.2, -0.5]).unwrap();
        let json = rep.to_json(None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "accuracy",
            "precision_real",
            "recall_real",
            "f1_real",
            "precision_fake",
            "recall_fake",
            "f1_fake",
            "macro_precision",
            "macro_recall",
            "macro_f1",
            "auc",
        ] {
            assert!(v[key].is_f64(), "missing {key}");
        }
        assert_eq!(v["confusion"]["fn"], 1);
        assert!(v.get("model").is_none());
        let mut tsv = Vec::new();
        rep.write_roc_tsv(&mut tsv).unwrap();
        let tsv = String::from_utf8(tsv).unwrap();
        assert!(tsv.starts_with("fpr\ttpr\tthreshold\n0\t0\tinf\n"));
        let mut block = Vec::new();
        rep.write_confusion_tsv(&mut block).unwrap();
        assert_eq!(
            String::from_utf8(block).unwrap(),
            "\tpred_real\tpred_fake\ntrue_real\t1\t1\ntrue_fake\t0\t2\n"
        );
    }

    fn labelled_scores() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (2usize..=50).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..=1, n),
                prop::collection::vec((-5i32..=5).prop_map(|v| v as f64 * 0.5), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_equals_mann_whitney((y, s) in labelled_scores()) {
            prop_assume!(y.contains(&0) && y.contains(&1));
            let r = roc(&y, &s).unwrap();
            prop_assert!((r.auc - mann_whitney(&y, &s)).abs() <= 1e-12);
        }

        #[test]
        fn auc_flips_under_negated_scores(y in prop::collection::vec(0u8..=1, 2..40), seed in 0u64..1000) {
            prop_assume!(y.contains(&0) && y.contains(&1));
            // distinct scores
            let mut rng = crate::rng::SeededRng::new(seed);
            let perm = rng.permutation(y.len());
            let s: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let a = roc(&y, &s).unwrap().auc + roc(&y, &neg).unwrap().auc;
            prop_assert!((a - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metrics_permutation_invariant(y in prop::collection::vec(0u8..=1, 2..40), p in prop::collection::vec(0u8..=1, 40), seed in 0u64..100) {
            prop_assume!(y.contains(&0) && y.contains(&1));
            let p = &p[..y.len()];
            let s: Vec<f64> = p.iter().zip(&y).map(|(a, b)| (*a as f64) + 0.3 * (*b as f64)).collect();
            let base = evaluate(&y, p, &s).unwrap();
            let perm = crate::rng::SeededRng::new(seed).permutation(y.len());
            let yy: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
            let pp: Vec<u8> = perm.iter().map(|&i| p[i]).collect();
            let ss: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            let other = evaluate(&yy, &pp, &ss).unwrap();
            prop_assert_eq!(base.matrix, other.matrix);
            prop_assert_eq!(base.summary, other.summary);
            prop_assert_eq!(base.roc.auc, other.roc.auc);
        }

        #[test]
        fn balanced_accuracy_equals_macro_recall(k in 1usize..20, p in prop::collection::vec(0u8..=1, 40)) {
            let y: Vec<u8> = (0..2 * k).map(|i| (i % 2) as u8).collect();
            let s = summarize(&confusion(&y, &p[..2 * k]).unwrap()).unwrap();
            prop_assert!((s.accuracy - s.macro_avg.recall).abs() < 1e-12);
        }
    }
}
