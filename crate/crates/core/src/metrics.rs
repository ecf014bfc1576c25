//! Frame-level ROC-AUC, average precision and per-class AUC.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_inputs<T: Real>(scores: &[T], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::dim("metric", (scores.len(), 1), (labels.len(), 1)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Usage(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Usage("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve in its Mann–Whitney form; tied pairs count one half.
pub fn roc_auc<T: Real>(scores: &[T], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks (1-based) of tied groups, summed over positives.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        let group_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid * group_pos as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Step-interpolated average precision, `Σ_k (R_k − R_{k−1})·P_k`.
///
/// Items are ranked by descending score; equal scores keep their input order.
pub fn average_precision<T: Real>(scores: &[T], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs a positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(ap / pos as f64)
}

/// ROC operating points `(fpr, tpr)` at every distinct threshold, starting at `(0, 0)`.
pub fn roc_curve<T: Real>(scores: &[T], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC curve needs both classes".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let boundary = order
            .get(i + 1)
            .is_none_or(|&next| scores[next] != scores[k]);
        if boundary {
            points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        }
    }
    Ok(points)
}

/// Frame scores and labels of one evaluated video.
#[derive(Clone, Debug)]
pub struct VideoFrames {
    pub id: String,
    pub label: u8,
    pub class: Option<String>,
    pub scores: Vec<f64>,
    pub frame_labels: Vec<u8>,
}

/// For each anomaly class: AUC over that class's abnormal videos plus every normal video.
///
/// Classes for which the AUC is undefined are left out and listed in the second value.
pub fn per_class_auc(videos: &[VideoFrames]) -> Result<(BTreeMap<String, f64>, Vec<String>)> {
    let mut classes: Vec<&str> = videos
        .iter()
        .filter(|v| v.label == 1)
        .filter_map(|v| v.class.as_deref())
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = BTreeMap::new();
    let mut skipped = Vec::new();
    for class in classes {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for v in videos
            .iter()
            .filter(|v| v.label == 0 || v.class.as_deref() == Some(class))
        {
            scores.extend_from_slice(&v.scores);
            labels.extend_from_slice(&v.frame_labels);
        }
        match roc_auc(&scores, &labels) {
            Ok(auc) => {
                out.insert(class.to_string(), auc);
            }
            Err(Error::UndefinedMetric(_)) => skipped.push(class.to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Pooled evaluation over a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub auc: f64,
    pub ap: Option<f64>,
    pub per_class_auc: BTreeMap<String, f64>,
    pub positive_frames: usize,
    pub negative_frames: usize,
}

pub fn evaluate(videos: &[VideoFrames], with_ap: bool) -> Result<(EvalResult, Vec<String>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for v in videos {
        if v.scores.len() != v.frame_labels.len() {
            return Err(Error::dim(
                "evaluate",
                (v.scores.len(), 1),
                (v.frame_labels.len(), 1),
            ));
        }
        scores.extend_from_slice(&v.scores);
        labels.extend_from_slice(&v.frame_labels);
    }
    let auc = roc_auc(&scores, &labels)?;
    let ap = with_ap
        .then(|| average_precision(&scores, &labels))
        .transpose()?;
    let (per_class_auc, skipped) = per_class_auc(videos)?;
    let positive_frames = labels.iter().filter(|&&y| y == 1).count();
    Ok((
        EvalResult {
            auc,
            ap,
            per_class_auc,
            positive_frames,
            negative_frames: labels.len() - positive_frames,
        },
        skipped,
    ))
}
