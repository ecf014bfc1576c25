//! Training, evaluation and scoring shared by the subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use attnscore::checkpoint::Checkpoint;
use attnscore::data::{
    permutation, prepare_crop, DatasetManifest, FeatureTensor, Split, TrainingSet, VideoRecord,
};
use attnscore::infer::{expand_to_frames, score_tensor, ScoreSeries};
use attnscore::metrics::{evaluate, roc_auc, EvalResult, VideoFrames};
use attnscore::model::{count_params, score_video, Hyperparams, Mode, ModelParams};
use attnscore::optim::{train_epoch_with, RAdamState};
use attnscore::{Checkpoint64, ModelParams64, FRAMES_PER_SEGMENT};

use crate::args::TrainOptions;

/// A manifest entry with its features loaded.
pub struct LoadedVideo {
    pub record: VideoRecord,
    pub features: FeatureTensor,
    pub audio: Option<FeatureTensor>,
}

impl LoadedVideo {
    /// Width of the model input after optional audio fusion.
    pub fn input_dim(&self) -> usize {
        self.features.dim() + self.audio.as_ref().map_or(0, FeatureTensor::dim)
    }
}

pub fn load_videos(manifest: &DatasetManifest, use_audio: bool) -> Result<Vec<LoadedVideo>> {
    let mut out = Vec::with_capacity(manifest.videos.len());
    for v in &manifest.videos {
        let features = manifest
            .load_features(v)
            .with_context(|| format!("loading features of {:?}", v.id))?;
        let audio = if use_audio {
            let a = manifest.load_audio(v)?;
            if a.is_none() {
                bail!("--audio given but video {:?} has no audio_path", v.id);
            }
            a
        } else {
            None
        };
        out.push(LoadedVideo {
            record: v.clone(),
            features,
            audio,
        });
    }
    Ok(out)
}

/// Common input width of all videos.
pub fn input_dim(videos: &[LoadedVideo]) -> Result<usize> {
    let first = videos.first().context("manifest lists no videos")?;
    let dim = first.input_dim();
    if let Some(v) = videos.iter().find(|v| v.input_dim() != dim) {
        bail!(
            "video {:?} has feature width {}, expected {dim}",
            v.record.id,
            v.input_dim()
        );
    }
    Ok(dim)
}

/// Indices of training and held-out videos; `fraction` of each class is held out.
pub fn holdout_split(labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for class in [0u8, 1] {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n_held = (fraction * members.len() as f64).floor() as usize;
        let n_held = n_held.min(members.len().saturating_sub(1));
        let order = permutation(members.len(), seed.wrapping_add(class as u64));
        for (rank, &k) in order.iter().enumerate() {
            if rank < n_held {
                held.push(members[k]);
            } else {
                train.push(members[k]);
            }
        }
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Held-out videos reduced to `D × T` crops for video-level model selection.
struct Validation {
    crops: Vec<Vec<attnscore::Matrix64>>,
    labels: Vec<u8>,
}

impl Validation {
    fn auc(&self, params: &ModelParams64, hp: &Hyperparams) -> attnscore::Result<f64> {
        let mut scores = Vec::with_capacity(self.crops.len());
        for crops in &self.crops {
            let mut total = 0.0;
            for c in crops {
                total += score_video(c, params, hp, Mode::Eval)?;
            }
            scores.push(total / crops.len() as f64);
        }
        roc_auc(&scores, &self.labels)
    }
}

pub struct TrainOutcome {
    pub best: Checkpoint64,
    pub last: Checkpoint64,
    pub losses: Vec<f64>,
    /// `(iteration, held-out video AUC)` at each validation point.
    pub validation: Vec<(u64, f64)>,
    pub param_count: usize,
    pub held_out: usize,
}

/// Trains on `videos`; with `shuffle_seed`, every training sample's segments are reordered once.
pub fn train_model(
    videos: &[LoadedVideo],
    opts: &TrainOptions,
    shuffle_seed: Option<u64>,
) -> Result<TrainOutcome> {
    opts.validate()?;
    let hp = opts.model.hyperparams(input_dim(videos)?)?;
    let labels: Vec<u8> = videos.iter().map(|v| v.record.label).collect();
    let (train_idx, held_idx) = holdout_split(&labels, opts.val_fraction, opts.seed);
    let train_videos: Vec<_> = train_idx
        .iter()
        .map(|&i| {
            let v = &videos[i];
            (v.record.label, v.features.clone(), v.audio.clone())
        })
        .collect();
    let mut set = TrainingSet::<f64>::from_videos(&train_videos, hp.segments)?;
    if let Some(seed) = shuffle_seed {
        set = set.shuffled(seed);
    }
    let validation = {
        let mut crops = Vec::with_capacity(held_idx.len());
        for &i in &held_idx {
            let v = &videos[i];
            crops.push(
                (0..v.features.crops())
                    .map(|c| prepare_crop(&v.features, c, v.audio.as_ref(), hp.segments))
                    .collect::<attnscore::Result<Vec<_>>>()?,
            );
        }
        let labels: Vec<u8> = held_idx.iter().map(|&i| labels[i]).collect();
        let both = labels.contains(&0) && labels.contains(&1);
        both.then_some(Validation { crops, labels })
    };

    let mut params = ModelParams::<f64>::init(&hp, opts.seed);
    let mut state = RAdamState::new(opts.optimizer(), params.tensors().iter().map(|t| t.shape()));
    let mut best: Option<(f64, u64, ModelParams64)> = None;
    let mut history = Vec::new();
    let iters = opts.iters;
    let losses = train_epoch_with(
        &set,
        &mut params,
        &mut state,
        &hp,
        opts.seed,
        iters,
        |step, p, _| {
            if let Some(val) = &validation {
                if step % opts.eval_every == 0 || step == iters {
                    let auc = val.auc(p, &hp)?;
                    history.push((step, auc));
                    if best.as_ref().is_none_or(|(b, _, _)| auc > *b) {
                        best = Some((auc, step, p.clone()));
                    }
                }
            }
            Ok(())
        },
    )?;
    let last = Checkpoint {
        hyperparams: hp.clone(),
        params: params.clone(),
        iteration: state.step,
        optimizer: Some(state),
    };
    let best = match best {
        Some((_, step, p)) => Checkpoint {
            hyperparams: hp.clone(),
            params: p,
            iteration: step,
            optimizer: None,
        },
        None => Checkpoint {
            optimizer: None,
            ..last.clone()
        },
    };
    Ok(TrainOutcome {
        best,
        last,
        losses,
        validation: history,
        param_count: count_params(&hp),
        held_out: held_idx.len(),
    })
}

pub fn write_train_outputs(out: &Path, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    outcome.best.write(out.join("best.ckpt"))?;
    outcome.last.write(out.join("final.ckpt"))?;
    let mut loss = String::from("iteration,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        loss.push_str(&format!("{},{l}\n", i + 1));
    }
    write(&out.join("loss.csv"), &loss)?;
    let mut val = String::from("iteration,val_auc\n");
    for (i, a) in &outcome.validation {
        val.push_str(&format!("{i},{a}\n"));
    }
    write(&out.join("validation.csv"), &val)
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Bagged frame scores of one loaded video.
pub fn score_video_frames(
    ckpt: &Checkpoint64,
    video: &LoadedVideo,
    split: usize,
) -> Result<(ScoreSeries<f64>, Vec<f64>)> {
    check_width(&ckpt.hyperparams, video.input_dim(), &video.record.id)?;
    let series = score_tensor(
        &video.features,
        video.audio.as_ref(),
        &ckpt.params,
        &ckpt.hyperparams,
        split,
    )?;
    let frames = expand_to_frames(&series, FRAMES_PER_SEGMENT, video.record.frames)?;
    Ok((series, frames))
}

pub fn check_width(hp: &Hyperparams, width: usize, what: &str) -> Result<()> {
    if hp.dim != width {
        bail!(
            "{what:?} has feature width {width} but the checkpoint expects {}",
            hp.dim
        );
    }
    Ok(())
}

pub struct Evaluation {
    pub result: EvalResult,
    pub skipped_classes: Vec<String>,
    pub videos: Vec<VideoFrames>,
    pub roc: Vec<(f64, f64)>,
}

/// Frame-level evaluation of a checkpoint on loaded test videos.
pub fn evaluate_videos(
    ckpt: &Checkpoint64,
    manifest: &DatasetManifest,
    videos: &[LoadedVideo],
    split: usize,
    with_ap: bool,
) -> Result<Evaluation> {
    if split == 0 {
        bail!("--l must be at least 1");
    }
    let missing: Vec<&str> = videos
        .iter()
        .filter(|v| v.record.gt_path.is_none())
        .map(|v| v.record.id.as_str())
        .collect();
    if !missing.is_empty() {
        bail!("videos without frame ground truth: {}", missing.join(", "));
    }
    let mut frames = Vec::with_capacity(videos.len());
    for v in videos {
        let gt = manifest
            .load_ground_truth(&v.record)?
            .expect("checked above");
        let (_, scores) = score_video_frames(ckpt, v, split)?;
        frames.push(VideoFrames {
            id: v.record.id.clone(),
            label: v.record.label,
            class: v.record.class.clone(),
            scores,
            frame_labels: gt,
        });
    }
    let (result, skipped_classes) = evaluate(&frames, with_ap)?;
    let (scores, labels): (Vec<f64>, Vec<u8>) = frames
        .iter()
        .flat_map(|v| v.scores.iter().copied().zip(v.frame_labels.iter().copied()))
        .unzip();
    let roc = attnscore::metrics::roc_curve(&scores, &labels)?;
    Ok(Evaluation {
        result,
        skipped_classes,
        videos: frames,
        roc,
    })
}

pub fn read_manifest(path: &Path, split: Split) -> Result<DatasetManifest> {
    DatasetManifest::read(path, split)
        .with_context(|| format!("reading manifest {}", path.display()))
}

/// Plain-text table and `key=value` lines for an evaluation.
pub fn render_report(ev: &Evaluation, split: usize) -> (String, String) {
    let r = &ev.result;
    let mut text = String::new();
    let mut kv = String::new();
    let mut row = |key: &str, shown: String, exact: String| {
        text.push_str(&format!("{key:<24} {shown}\n"));
        kv.push_str(&format!("{}={exact}\n", key.replace(' ', "_")));
    };
    let count = |n: usize| (n.to_string(), n.to_string());
    let real = |v: f64| (format!("{v:.6}"), v.to_string());
    let rows = [
        ("videos".to_string(), count(ev.videos.len())),
        ("split_size".to_string(), count(split)),
        ("positive_frames".to_string(), count(r.positive_frames)),
        ("negative_frames".to_string(), count(r.negative_frames)),
        ("auc".to_string(), real(r.auc)),
    ]
    .into_iter()
    .chain(r.ap.map(|ap| ("ap".to_string(), real(ap))))
    .chain(
        r.per_class_auc
            .iter()
            .map(|(c, &a)| (format!("class_auc {c}"), real(a))),
    );
    for (key, (shown, exact)) in rows {
        row(&key, shown, exact);
    }
    (text, kv)
}

pub fn render_roc(points: &[(f64, f64)]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (f, t) in points {
        s.push_str(&format!("{f},{t}\n"));
    }
    s
}
