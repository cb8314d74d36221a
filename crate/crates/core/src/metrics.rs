//! Precision-recall and ROC curves over verification scores.
//!
//! A unit is predicted positive iff its score is at or above the threshold.
//! The ROC area is accumulated on integer TP/FP counts, so it equals the
//! pairwise concordance statistic (ties counted 0.5) without rounding drift.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Tracklet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// A track or detection with its score and ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub unit_id: String,
    pub score: f64,
    pub label: Label,
}

impl LabeledScore {
    pub fn new(unit_id: impl Into<String>, score: f64, label: impl Into<Label>) -> Self {
        LabeledScore {
            unit_id: unit_id.into(),
            score,
            label: label.into(),
        }
    }
}

/// Cumulative (threshold, TP, FP) at each distinct score, highest first.
fn sweep(items: &[LabeledScore]) -> Result<Vec<(f64, u64, u64)>> {
    if let Some(i) = items.iter().find(|i| !i.score.is_finite()) {
        return Err(Error::invalid(format!("score of {} is not finite", i.unit_id)));
    }
    let mut sorted: Vec<&LabeledScore> = items.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out: Vec<(f64, u64, u64)> = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (k, item) in sorted.iter().enumerate() {
        if item.label.is_positive() {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(k + 1).is_none_or(|next| next.score != item.score) {
            out.push((item.score, tp, fp));
        }
    }
    Ok(out)
}

fn class_counts(items: &[LabeledScore]) -> (u64, u64) {
    let p = items.iter().filter(|i| i.label.is_positive()).count() as u64;
    (p, items.len() as u64 - p)
}

/// Majority label of a tracklet's labelled real detections, ties positive.
/// `None` when no detection of the tracklet is labelled.
pub fn track_label(t: &Tracklet, detection_labels: &BTreeMap<String, bool>) -> Option<Label> {
    let (mut pos, mut neg) = (0usize, 0usize);
    for id in t.detection_ids() {
        match detection_labels.get(id) {
            Some(true) => pos += 1,
            Some(false) => neg += 1,
            None => {}
        }
    }
    (pos + neg > 0).then(|| Label::from(pos >= neg))
}

/// Pairs scored units with their labels. Unscored or unlabelled units are
/// left out.
pub fn labeled_scores<'a>(
    units: impl IntoIterator<Item = &'a Tracklet>,
    scores: &BTreeMap<String, Option<f64>>,
    detection_labels: &BTreeMap<String, bool>,
) -> Vec<LabeledScore> {
    units
        .into_iter()
        .filter_map(|t| {
            let score = (*scores.get(&t.track_id)?)?;
            let label = track_label(t, detection_labels)?;
            Some(LabeledScore::new(t.track_id.clone(), score, label))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, thresholds descending.
pub fn pr_curve(items: &[LabeledScore]) -> Result<Vec<PrPoint>> {
    let (p, _) = class_counts(items);
    if p == 0 {
        return Err(Error::invalid("precision-recall needs at least one positive"));
    }
    Ok(sweep(items)?
        .into_iter()
        .map(|(threshold, tp, fp)| PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / p as f64,
        })
        .collect())
}

/// Precision and recall at a single threshold. Precision is `None` when
/// nothing is predicted positive.
pub fn precision_recall_at(items: &[LabeledScore], threshold: f64) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in items {
        match (i.score >= threshold, i.label.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    (precision, recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `None` for the origin, which sits above every score.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
    pub tp: u64,
    pub fp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: u64,
    pub negatives: u64,
}

/// ROC curve from (0,0) to (1,1), one point per distinct score.
pub fn roc_curve(items: &[LabeledScore]) -> Result<RocCurve> {
    let (p, n) = class_counts(items);
    if p == 0 || n == 0 {
        return Err(Error::invalid("ROC needs both positive and negative items"));
    }
    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
        tp: 0,
        fp: 0,
    }];
    points.extend(sweep(items)?.into_iter().map(|(t, tp, fp)| RocPoint {
        threshold: Some(t),
        fpr: fp as f64 / n as f64,
        tpr: tp as f64 / p as f64,
        tp,
        fp,
    }));
    Ok(RocCurve {
        points,
        positives: p,
        negatives: n,
    })
}

/// Trapezoidal area under the ROC curve.
pub fn auc(curve: &RocCurve) -> f64 {
    // twice the area, in units of 1/(P*N)
    let twice: u128 = curve
        .points
        .windows(2)
        .map(|w| u128::from(w[1].fp - w[0].fp) * u128::from(w[1].tp + w[0].tp))
        .sum();
    twice as f64 / (2 * u128::from(curve.positives) * u128::from(curve.negatives)) as f64
}

pub fn auc_of(items: &[LabeledScore]) -> Result<f64> {
    Ok(auc(&roc_curve(items)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub items: usize,
    pub positives: u64,
    pub negatives: u64,
    pub auc: Option<f64>,
    pub pr: Vec<PrPoint>,
    pub roc: Option<RocCurve>,
}

pub fn evaluate(items: &[LabeledScore]) -> Result<MetricsReport> {
    let (p, n) = class_counts(items);
    let pr = pr_curve(items)?;
    let roc = (n > 0).then(|| roc_curve(items)).transpose()?;
    Ok(MetricsReport {
        items: items.len(),
        positives: p,
        negatives: n,
        auc: roc.as_ref().map(auc),
        pr,
        roc,
    })
}

/// Plain polyline plot in the unit square.
pub fn curve_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let sx = |x: f64| PAD + x * SIZE;
    let sy = |y: f64| PAD + (1.0 - y) * SIZE;
    let mut svg = String::new();
    let full = SIZE + 2.0 * PAD;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let poly: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        poly.join(" ")
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        PAD + SIZE / 2.0,
        full - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0,
        escape(y_label)
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
