//! Bagged inference: consecutive segments are grouped into bags of `l`, each
//! bag is scored on its own, and bag scores are spread over their frames.

use std::io::Write;
use std::path::Path;

use crate::data::{fuse_audio, FeatureTensor};
use crate::error::{Error, Result};
use crate::model::{score_video, Hyperparams, Mode, ModelParams};
use crate::ndcore::Matrix;
use crate::scalar::Real;
use crate::FRAMES_PER_SEGMENT;

/// Bag-level scores of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSeries<T> {
    pub bag_scores: Vec<T>,
    pub bag_sizes: Vec<usize>,
}

impl<T: Real> ScoreSeries<T> {
    pub fn len(&self) -> usize {
        self.bag_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bag_scores.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.bag_sizes.iter().sum()
    }

    /// Score of every segment, in order.
    pub fn segment_scores(&self) -> Vec<T> {
        self.bag_scores
            .iter()
            .zip(&self.bag_sizes)
            .flat_map(|(&s, &n)| std::iter::repeat_n(s, n))
            .collect()
    }
}

/// Splits `N × D` features into runs of `l` rows; a shorter final bag keeps the remainder.
pub fn split_bags<T: Real>(features: &Matrix<T>, split: usize) -> Result<Vec<Matrix<T>>> {
    let n = features.rows();
    if n == 0 || split == 0 {
        return Err(Error::Usage(format!(
            "cannot split {n} segments into bags of {split}"
        )));
    }
    Ok((0..n)
        .step_by(split)
        .map(|start| features.row_range(start, split.min(n - start)))
        .collect())
}

/// Scores each `l' × D` bag in evaluation mode.
pub fn score_bags<T: Real>(
    bags: &[Matrix<T>],
    params: &ModelParams<T>,
    hp: &Hyperparams,
) -> Result<ScoreSeries<T>> {
    let bag_scores = bags
        .iter()
        .map(|b| score_video(&b.transpose(), params, hp, Mode::Eval))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSeries {
        bag_scores,
        bag_sizes: bags.iter().map(Matrix::rows).collect(),
    })
}

/// Bagged scores of a whole video, averaged over crops.
pub fn score_tensor<T: Real>(
    tensor: &FeatureTensor,
    audio: Option<&FeatureTensor>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    split: usize,
) -> Result<ScoreSeries<T>> {
    let mut total: Option<ScoreSeries<T>> = None;
    for c in 0..tensor.crops() {
        let mut clips = tensor.crop::<T>(c);
        if let Some(a) = audio {
            clips = fuse_audio(&clips, &a.crop::<T>(0))?;
        }
        let series = score_bags(&split_bags(&clips, split)?, params, hp)?;
        total = Some(match total {
            None => series,
            Some(mut acc) => {
                for (a, s) in acc.bag_scores.iter_mut().zip(series.bag_scores) {
                    *a += s;
                }
                acc
            }
        });
    }
    let mut series = total.expect("tensor has at least one crop");
    let crops = T::from_count(tensor.crops());
    series.bag_scores.iter_mut().for_each(|s| *s /= crops);
    Ok(series)
}

/// Per-frame scores: each segment's frames take its bag's score, frames past the
/// last full segment take the final bag's score, and the result has exactly
/// `total_frames` entries.
pub fn expand_to_frames<T: Real>(
    series: &ScoreSeries<T>,
    frames_per_segment: usize,
    total_frames: usize,
) -> Result<Vec<T>> {
    if total_frames == 0 || frames_per_segment == 0 {
        return Err(Error::Usage(
            "frame expansion needs non-zero frame counts".into(),
        ));
    }
    let last = *series
        .bag_scores
        .last()
        .ok_or_else(|| Error::Usage("empty score series".into()))?;
    let mut frames = Vec::with_capacity(total_frames);
    for s in series.segment_scores() {
        frames.extend(std::iter::repeat_n(s, frames_per_segment));
    }
    frames.resize(total_frames, last);
    Ok(frames)
}

/// Default 16-frame segments.
pub fn expand_segments_to_frames<T: Real>(
    series: &ScoreSeries<T>,
    total_frames: usize,
) -> Result<Vec<T>> {
    expand_to_frames(series, FRAMES_PER_SEGMENT, total_frames)
}

/// Writes `frame_index,score` rows with a header line.
pub fn write_frame_scores<T: Real>(path: &Path, scores: &[T]) -> Result<()> {
    let mut out = String::from("frame_index,score\n");
    for (i, s) in scores.iter().enumerate() {
        out.push_str(&format!("{i},{s}\n"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
