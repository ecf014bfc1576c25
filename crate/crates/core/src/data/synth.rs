//! Synthetic weakly-labelled videos.
//!
//! Normal segment features are isotropic Gaussian noise with per-coordinate
//! standard deviation `1/√D`, so a noise vector has unit expected squared
//! norm. Each abnormal video carries one contiguous window of segments shifted
//! by `gap` along the unit direction of its anomaly class. Class directions
//! are drawn once per dataset.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::feature::FeatureTensor;
use super::manifest::{write_ground_truth, DatasetManifest, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::FRAMES_PER_SEGMENT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_normal: usize,
    pub n_abnormal: usize,
    pub n_test_normal: usize,
    pub n_test_abnormal: usize,
    pub dim: usize,
    /// Inclusive range of segment counts per video.
    pub clip_range: (usize, usize),
    pub anomaly_fraction: f64,
    pub gap: f64,
    pub classes: usize,
    pub crops: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_normal: 50,
            n_abnormal: 50,
            n_test_normal: 50,
            n_test_abnormal: 50,
            dim: 32,
            clip_range: (128, 256),
            anomaly_fraction: 0.3,
            gap: 4.0,
            classes: 3,
            crops: 1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_normal == 0 || self.n_abnormal == 0 {
            return Err(Error::Usage(
                "need at least one normal and one abnormal training video".into(),
            ));
        }
        if self.dim == 0 || self.classes == 0 || self.crops == 0 {
            return Err(Error::Usage(
                "dim, classes and crops must be at least 1".into(),
            ));
        }
        let (lo, hi) = self.clip_range;
        if lo == 0 || lo > hi {
            return Err(Error::Usage(format!("invalid clip range {lo}..={hi}")));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 1.0) {
            return Err(Error::Usage(format!(
                "anomaly fraction {} outside (0, 1)",
                self.anomaly_fraction
            )));
        }
        if !(self.gap >= 0.0 && self.gap.is_finite()) {
            return Err(Error::Usage(format!(
                "gap {} must be finite and non-negative",
                self.gap
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub id: String,
    pub label: u8,
    pub class: Option<String>,
    pub features: FeatureTensor,
    pub frames: usize,
    pub frame_labels: Vec<u8>,
    /// `(first segment, length)` of the shifted window.
    pub window: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub train: Vec<SynthVideo>,
    pub test: Vec<SynthVideo>,
    pub directions: Vec<Vec<f64>>,
}

pub fn class_name(k: usize) -> String {
    format!("anomaly{k}")
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn make_video(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    directions: &[Vec<f64>],
    id: String,
    abnormal_class: Option<usize>,
) -> SynthVideo {
    let d = cfg.dim;
    let sigma = 1.0 / (d as f64).sqrt();
    let n = rng.random_range(cfg.clip_range.0..=cfg.clip_range.1);
    let tail = rng.random_range(0..FRAMES_PER_SEGMENT);
    let frames = n * FRAMES_PER_SEGMENT + tail;
    let window = abnormal_class.map(|_| {
        let len = ((cfg.anomaly_fraction * n as f64).round() as usize).clamp(1, n);
        (rng.random_range(0..=n - len), len)
    });
    let mut base = vec![0.0f64; n * d];
    for (i, v) in base.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        *v = z * sigma;
        if let (Some((start, len)), Some(k)) = (window, abnormal_class) {
            let seg = i / d;
            if seg >= start && seg < start + len {
                *v += cfg.gap * directions[k][i % d];
            }
        }
    }
    let mut values = Vec::with_capacity(cfg.crops * n * d);
    for c in 0..cfg.crops {
        for &b in &base {
            let jitter = if c == 0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(rng);
                0.25 * sigma * z
            };
            values.push((b + jitter) as f32);
        }
    }
    let in_window = |seg: usize| window.is_some_and(|(s, l)| seg >= s && seg < s + l);
    let frame_labels = (0..frames)
        .map(|f| in_window((f / FRAMES_PER_SEGMENT).min(n - 1)) as u8)
        .collect();
    SynthVideo {
        id,
        label: abnormal_class.is_some() as u8,
        class: abnormal_class.map(class_name),
        features: FeatureTensor::new(cfg.crops, n, d, values).expect("finite synthetic features"),
        frames,
        frame_labels,
        window,
    }
}

/// Generates the full dataset in memory; deterministic per `cfg.seed`.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let directions: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| unit_vector(&mut rng, cfg.dim))
        .collect();
    let mut split = |prefix: &str, normal: usize, abnormal: usize| {
        let mut out = Vec::with_capacity(normal + abnormal);
        for i in 0..normal {
            out.push(make_video(
                cfg,
                &mut rng,
                &directions,
                format!("{prefix}_n{i:04}"),
                None,
            ));
        }
        for i in 0..abnormal {
            let k = i % cfg.classes;
            out.push(make_video(
                cfg,
                &mut rng,
                &directions,
                format!("{prefix}_a{i:04}"),
                Some(k),
            ));
        }
        out
    };
    let train = split("train", cfg.n_normal, cfg.n_abnormal);
    let test = split("test", cfg.n_test_normal, cfg.n_test_abnormal);
    Ok(SynthDataset {
        train,
        test,
        directions,
    })
}

/// Paths of the manifests written by [`write_synth_dataset`].
#[derive(Clone, Debug)]
pub struct SynthPaths {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Writes features, test ground truth and both manifests under `out`.
pub fn write_synth_dataset(data: &SynthDataset, out: &Path) -> Result<SynthPaths> {
    let features = out.join("features");
    let gt = out.join("gt");
    for dir in [out, &features, &gt] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let write_split = |videos: &[SynthVideo], split: Split, name: &str| -> Result<PathBuf> {
        let mut records = Vec::with_capacity(videos.len());
        for v in videos {
            let feature_path = PathBuf::from("features").join(format!("{}.svf", v.id));
            v.features.write(out.join(&feature_path))?;
            let gt_path = if split == Split::Test {
                let p = PathBuf::from("gt").join(format!("{}.gt", v.id));
                write_ground_truth(out.join(&p), &v.frame_labels)?;
                Some(p)
            } else {
                None
            };
            records.push(VideoRecord {
                id: v.id.clone(),
                feature_path,
                label: v.label,
                class: Some(v.class.clone().unwrap_or_else(|| "Normal".into())),
                frames: v.frames,
                gt_path,
                audio_path: None,
            });
        }
        let manifest = DatasetManifest::new(records, split, out)?;
        let path = out.join(name);
        manifest.write(&path)?;
        Ok(path)
    };
    let train_manifest = write_split(&data.train, Split::Train, "train.jsonl")?;
    let test_manifest = write_split(&data.test, Split::Test, "test.jsonl")?;
    Ok(SynthPaths {
        train_manifest,
        test_manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_normal: 6,
            n_abnormal: 5,
            n_test_normal: 2,
            n_test_abnormal: 3,
            dim: 8,
            clip_range: (10, 20),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_and_labels() {
        let cfg = SynthConfig {
            n_normal: 50,
            n_abnormal: 50,
            clip_range: (8, 12),
            ..SynthConfig::default()
        };
        let d = synth_dataset(&cfg).unwrap();
        assert_eq!(d.train.len(), 100);
        assert_eq!(d.train.iter().filter(|v| v.label == 1).count(), 50);
    }

    #[test]
    fn deterministic() {
        let a = synth_dataset(&small()).unwrap();
        let b = synth_dataset(&small()).unwrap();
        for (x, y) in a
            .train
            .iter()
            .chain(&a.test)
            .zip(b.train.iter().chain(&b.test))
        {
            assert_eq!(x.features, y.features);
            assert_eq!(x.frame_labels, y.frame_labels);
        }
    }

    #[test]
    fn ground_truth_marks_window() {
        let d = synth_dataset(&small()).unwrap();
        for v in &d.test {
            assert_eq!(v.frame_labels.len(), v.frames);
            match v.window {
                None => assert!(v.frame_labels.iter().all(|&y| y == 0)),
                Some((s, l)) => {
                    let pos = v.frame_labels.iter().filter(|&&y| y == 1).count();
                    let tail = v.frames - v.features.segments() * FRAMES_PER_SEGMENT;
                    let ends_in_window = s + l == v.features.segments();
                    assert_eq!(
                        pos,
                        l * FRAMES_PER_SEGMENT + if ends_in_window { tail } else { 0 }
                    );
                    assert_eq!(v.frame_labels[s * FRAMES_PER_SEGMENT], 1);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_fraction() {
        let mut cfg = small();
        cfg.anomaly_fraction = 1.0;
        assert!(matches!(synth_dataset(&cfg), Err(Error::Usage(_))));
        cfg.anomaly_fraction = 0.0;
        assert!(synth_dataset(&cfg).is_err());
    }

    #[test]
    fn writes_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_dataset(&small()).unwrap();
        let paths = write_synth_dataset(&d, dir.path()).unwrap();
        let train = DatasetManifest::read(&paths.train_manifest, Split::Train).unwrap();
        let test = DatasetManifest::read(&paths.test_manifest, Split::Test).unwrap();
        assert_eq!(train.videos.len(), 11);
        let v = &test.videos[3];
        assert_eq!(test.load_features(v).unwrap(), d.test[3].features);
        assert_eq!(
            test.load_ground_truth(v).unwrap().unwrap(),
            d.test[3].frame_labels
        );
    }
}
