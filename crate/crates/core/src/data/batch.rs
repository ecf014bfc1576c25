use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::feature::FeatureTensor;
use super::manifest::DatasetManifest;
use super::segments::{aggregate_segments, fuse_audio, permutation};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::scalar::Real;

/// Videos drawn from each class per mini-batch.
pub const PER_CLASS: usize = 32;

/// One (video, crop) pair reduced to `D × T` model input.
#[derive(Clone, Debug)]
pub struct TrainSample<T> {
    pub video: usize,
    pub crop: usize,
    pub label: u8,
    pub features: Matrix<T>,
}

/// Every training crop, pre-aggregated, indexed by class.
#[derive(Clone, Debug)]
pub struct TrainingSet<T> {
    samples: Vec<TrainSample<T>>,
    normal: Vec<usize>,
    abnormal: Vec<usize>,
    dim: usize,
}

/// A drawn mini-batch: indices into the training set plus per-sample dropout seeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Minibatch {
    pub samples: Vec<usize>,
    pub dropout_seeds: Vec<u64>,
}

fn fused_clips<T: Real>(
    tensor: &FeatureTensor,
    crop: usize,
    audio: Option<&FeatureTensor>,
) -> Result<Matrix<T>> {
    let clips = tensor.crop::<T>(crop);
    match audio {
        Some(a) => fuse_audio(&clips, &a.crop::<T>(0)),
        None => Ok(clips),
    }
}

/// Model input for one crop: optional audio fusion, aggregation to `T` rows, transpose to `D × T`.
pub fn prepare_crop<T: Real>(
    tensor: &FeatureTensor,
    crop: usize,
    audio: Option<&FeatureTensor>,
    segments: usize,
) -> Result<Matrix<T>> {
    Ok(aggregate_segments(&fused_clips(tensor, crop, audio)?, segments)?.transpose())
}

/// One crop at full length, `D × N`, with optional audio fusion.
pub fn crop_segments<T: Real>(
    tensor: &FeatureTensor,
    crop: usize,
    audio: Option<&FeatureTensor>,
) -> Result<Matrix<T>> {
    Ok(fused_clips(tensor, crop, audio)?.transpose())
}

impl<T: Real> TrainingSet<T> {
    /// `videos` holds `(label, features, optional audio)`.
    pub fn from_videos(
        videos: &[(u8, FeatureTensor, Option<FeatureTensor>)],
        segments: usize,
    ) -> Result<Self> {
        let mut samples = Vec::new();
        for (vi, (label, tensor, audio)) in videos.iter().enumerate() {
            for c in 0..tensor.crops() {
                samples.push(TrainSample {
                    video: vi,
                    crop: c,
                    label: *label,
                    features: prepare_crop(tensor, c, audio.as_ref(), segments)?,
                });
            }
        }
        Self::from_samples(samples)
    }

    pub fn from_manifest(
        manifest: &DatasetManifest,
        segments: usize,
        use_audio: bool,
    ) -> Result<Self> {
        let mut videos = Vec::with_capacity(manifest.videos.len());
        for v in &manifest.videos {
            let tensor = manifest.load_features(v)?;
            let audio = if use_audio {
                let a = manifest.load_audio(v)?;
                if a.is_none() {
                    return Err(Error::Config(format!(
                        "video {:?} has no audio features",
                        v.id
                    )));
                }
                a
            } else {
                None
            };
            videos.push((v.label, tensor, audio));
        }
        Self::from_videos(&videos, segments)
    }

    pub fn from_samples(samples: Vec<TrainSample<T>>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.features.rows());
        if let Some(bad) = samples.iter().find(|s| s.features.rows() != dim) {
            return Err(Error::Config(format!(
                "inconsistent feature dimension: {} vs {dim}",
                bad.features.rows()
            )));
        }
        let normal: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].label == 0)
            .collect();
        let abnormal: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].label == 1)
            .collect();
        if normal.is_empty() || abnormal.is_empty() {
            return Err(Error::Config(format!(
                "training set needs both classes, has {} normal and {} abnormal samples",
                normal.len(),
                abnormal.len()
            )));
        }
        Ok(Self {
            samples,
            normal,
            abnormal,
            dim,
        })
    }

    pub fn samples(&self) -> &[TrainSample<T>] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Copy with every sample's segment columns permuted once, seeded per sample.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut out = self.clone();
        for (i, s) in out.samples.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let perm = permutation(s.features.cols(), rng.next_u64());
            s.features = s.features.select_columns(&perm);
        }
        out
    }

    /// Balanced batch: `PER_CLASS` normal then `PER_CLASS` abnormal samples,
    /// uniform with replacement; stream `iteration` of the seed's generator.
    pub fn build_minibatch(&self, seed: u64, iteration: u64) -> Minibatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(iteration);
        let mut samples = Vec::with_capacity(2 * PER_CLASS);
        for pool in [&self.normal, &self.abnormal] {
            for _ in 0..PER_CLASS {
                samples.push(pool[rng.random_range(0..pool.len())]);
            }
        }
        let dropout_seeds = (0..samples.len()).map(|_| rng.next_u64()).collect();
        Minibatch {
            samples,
            dropout_seeds,
        }
    }
}
