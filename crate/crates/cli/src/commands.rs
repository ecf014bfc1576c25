use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use attnscore::data::{
    crop_segments, permutation, synth_dataset, write_synth_dataset, FeatureTensor, Split,
    SynthPaths,
};
use attnscore::infer::write_frame_scores;
use attnscore::model::{attention_map, bilstm_forward, count_params, AttentionMap, Mode};
use attnscore::{AttentionMap64, Checkpoint64};

use crate::args::{
    CountArgs, EvalArgs, GenArgs, InspectArgs, PredictArgs, ShuffleArgs, SweepArgs, TrainArgs,
    TrainOptions,
};
use crate::workflow::{
    check_width, evaluate_videos, load_videos, read_manifest, render_report, render_roc,
    score_video_frames, train_model, write, write_train_outputs, Evaluation, LoadedVideo,
};

pub fn gen_synthetic(args: &GenArgs) -> Result<SynthPaths> {
    let cfg = args.config()?;
    let data = synth_dataset(&cfg)?;
    let paths = write_synth_dataset(&data, &args.out)?;
    println!("train manifest: {}", paths.train_manifest.display());
    println!("test manifest:  {}", paths.test_manifest.display());
    Ok(paths)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    args.train.validate()?;
    let manifest = read_manifest(&args.manifest, Split::Train)?;
    let videos = load_videos(&manifest, args.train.audio)?;
    let outcome = train_model(&videos, &args.train, None)?;
    println!("parameters: {}", outcome.param_count);
    write_train_outputs(&args.out, &outcome)?;
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} iterations, final loss {last:.6}, best checkpoint from iteration {} ({} held-out videos)",
        outcome.losses.len(),
        outcome.best.iteration,
        outcome.held_out
    );
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint64> {
    Checkpoint64::read(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn write_evaluation(out: &Path, ev: &Evaluation, split: usize) -> Result<()> {
    let (text, kv) = render_report(ev, split);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("report.txt"), &text)?;
    write(&out.join("report.kv"), &kv)?;
    write(&out.join("roc.csv"), &render_roc(&ev.roc))
}

pub fn evaluate(args: &EvalArgs) -> Result<Evaluation> {
    if args.split == 0 {
        bail!("--l must be at least 1");
    }
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let manifest = read_manifest(&args.manifest, Split::Test)?;
    let videos = load_videos(&manifest, args.audio)?;
    let ev = evaluate_videos(&ckpt, &manifest, &videos, args.split, args.ap)?;
    for class in &ev.skipped_classes {
        eprintln!("warning: class {class:?} has no anomalous frames; left out of per-class AUC");
    }
    let (text, _) = render_report(&ev, args.split);
    print!("{text}");
    if let Some(out) = &args.out {
        write_evaluation(out, &ev, args.split)?;
    }
    Ok(ev)
}

fn load_single(
    features: &Path,
    audio: Option<&Path>,
    frames: Option<usize>,
) -> Result<LoadedVideo> {
    let tensor = FeatureTensor::read(features)?;
    let audio = audio.map(FeatureTensor::read).transpose()?;
    let frames = frames.unwrap_or(tensor.segments() * attnscore::FRAMES_PER_SEGMENT);
    Ok(LoadedVideo {
        record: attnscore::data::VideoRecord {
            id: features.display().to_string(),
            feature_path: features.to_path_buf(),
            label: 0,
            class: None,
            frames,
            gt_path: None,
            audio_path: None,
        },
        features: tensor,
        audio,
    })
}

pub fn predict(args: &PredictArgs) -> Result<Vec<f64>> {
    if args.split == 0 {
        bail!("--l must be at least 1");
    }
    if args.frames == Some(0) {
        bail!("--frames must be at least 1");
    }
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let video = load_single(&args.features, args.audio_features.as_deref(), args.frames)?;
    let (series, frames) = score_video_frames(&ckpt, &video, args.split)?;
    write_frame_scores(&args.out, &frames)?;
    println!(
        "{} bags, {} frames, max score {:.6}",
        series.len(),
        frames.len(),
        frames.iter().copied().fold(f64::MIN, f64::max)
    );
    Ok(frames)
}

/// Attention of one crop over all of its segments.
pub fn video_attention(
    ckpt: &Checkpoint64,
    video: &LoadedVideo,
    crop: usize,
) -> Result<AttentionMap64> {
    if crop >= video.features.crops() {
        bail!(
            "crop {crop} out of range; the file has {}",
            video.features.crops()
        );
    }
    check_width(&ckpt.hyperparams, video.input_dim(), &video.record.id)?;
    let x = crop_segments(&video.features, crop, video.audio.as_ref())?;
    let x = if ckpt.hyperparams.use_bilstm {
        bilstm_forward(&x, &ckpt.params, &ckpt.hyperparams)?
    } else {
        x
    };
    Ok(attention_map(
        &x,
        &ckpt.params,
        &ckpt.hyperparams,
        Mode::Eval,
    )?)
}

pub fn attention_csv(map: &AttentionMap<f64>) -> String {
    let mut s = String::new();
    for k in 0..map.rows() {
        let row: Vec<String> = map.values.row(k).iter().map(f64::to_string).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Binary greyscale heatmap, `cell × cell` pixels per entry, brightest at the map's maximum.
pub fn attention_pgm(map: &AttentionMap<f64>, cell: usize) -> Vec<u8> {
    let (r, t) = map.values.shape();
    let top = map.values.as_slice().iter().copied().fold(0.0, f64::max);
    let (w, h) = (t * cell, r * cell);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            let v = map.values.get(y / cell, x / cell);
            let level = if top > 0.0 { v / top * 255.0 } else { 0.0 };
            out.push(level.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn inspect_attention(args: &InspectArgs) -> Result<AttentionMap64> {
    if args.cell == 0 {
        bail!("--cell must be at least 1");
    }
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let video = load_single(&args.features, args.audio_features.as_deref(), None)?;
    let map = video_attention(&ckpt, &video, args.crop)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write(&args.out.join("attention.csv"), &attention_csv(&map))?;
    let pgm = args.out.join("attention.pgm");
    fs::write(&pgm, attention_pgm(&map, args.cell))
        .with_context(|| format!("writing {}", pgm.display()))?;
    println!(
        "attention {}x{}, concentration {:.6}",
        map.rows(),
        map.segments(),
        map.concentration()
    );
    Ok(map)
}

/// AUCs of the shuffle experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ShuffleReport {
    pub seed: u64,
    pub plain_auc: f64,
    pub shuffled_auc: f64,
    /// Plain model with segments reordered inside every test bag.
    pub eval_shuffled_auc: f64,
}

impl ShuffleReport {
    pub fn render(&self) -> String {
        format!(
            "config,seed,auc\nplain,{s},{}\ntrain_shuffled,{s},{}\neval_shuffled,{s},{}\n\
             delta_train,{s},{}\ndelta_eval,{s},{}\n",
            self.plain_auc,
            self.shuffled_auc,
            self.eval_shuffled_auc,
            self.shuffled_auc - self.plain_auc,
            self.eval_shuffled_auc - self.plain_auc,
            s = self.seed,
        )
    }
}

/// Reorders segments inside each run of `split` segments, leaving bag membership intact.
fn shuffle_within_bags(tensor: &FeatureTensor, split: usize, seed: u64) -> Result<FeatureTensor> {
    let (n, d) = (tensor.segments(), tensor.dim());
    let mut order = Vec::with_capacity(n);
    for (b, start) in (0..n).step_by(split).enumerate() {
        let len = split.min(n - start);
        order.extend(
            permutation(len, seed.wrapping_add(b as u64))
                .into_iter()
                .map(|k| start + k),
        );
    }
    let stride = n * d;
    let mut values = Vec::with_capacity(tensor.values().len());
    for c in 0..tensor.crops() {
        let crop = &tensor.values()[c * stride..(c + 1) * stride];
        for &src in &order {
            values.extend_from_slice(&crop[src * d..(src + 1) * d]);
        }
    }
    Ok(FeatureTensor::new(tensor.crops(), n, d, values)?)
}

pub fn shuffle_experiment(args: &ShuffleArgs) -> Result<ShuffleReport> {
    args.train.validate()?;
    if args.split == 0 {
        bail!("--l must be at least 1");
    }
    let train_manifest = read_manifest(&args.manifest, Split::Train)?;
    let test_manifest = read_manifest(&args.test_manifest, Split::Test)?;
    let train_videos = load_videos(&train_manifest, args.train.audio)?;
    let test_videos = load_videos(&test_manifest, args.train.audio)?;
    let seed = args.train.seed;

    let plain = train_model(&train_videos, &args.train, None)?;
    let shuffled = train_model(&train_videos, &args.train, Some(seed))?;
    let auc = |ckpt: &Checkpoint64, videos: &[LoadedVideo]| -> Result<f64> {
        Ok(
            evaluate_videos(ckpt, &test_manifest, videos, args.split, false)?
                .result
                .auc,
        )
    };
    let reordered: Vec<LoadedVideo> = test_videos
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Ok(LoadedVideo {
                record: v.record.clone(),
                features: shuffle_within_bags(&v.features, args.split, seed ^ i as u64)?,
                audio: v.audio.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let report = ShuffleReport {
        seed,
        plain_auc: auc(&plain.best, &test_videos)?,
        shuffled_auc: auc(&shuffled.best, &test_videos)?,
        eval_shuffled_auc: auc(&plain.best, &reordered)?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_train_outputs(&args.out.join("plain"), &plain)?;
    write_train_outputs(&args.out.join("shuffled"), &shuffled)?;
    let text = report.render();
    write(&args.out.join("shuffle.csv"), &text)?;
    print!("{text}");
    Ok(report)
}

/// One evaluated grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub attn_hidden: usize,
    pub attn_rows: usize,
    pub split: usize,
    pub params: usize,
    pub auc: f64,
}

pub fn sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    args.train.validate()?;
    let axis = |name: &str, default: usize| -> Vec<usize> {
        args.axes
            .iter()
            .rev()
            .find(|a| a.name == name)
            .map_or(vec![default], |a| a.values.clone())
    };
    let das = axis("da", args.train.model.attn_hidden);
    let rs = axis("r", args.train.model.attn_rows);
    let ls = axis("l", args.split);
    let train_manifest = read_manifest(&args.manifest, Split::Train)?;
    let test_manifest = read_manifest(&args.test_manifest, Split::Test)?;
    let train_videos = load_videos(&train_manifest, args.train.audio)?;
    let test_videos = load_videos(&test_manifest, args.train.audio)?;

    let mut rows = Vec::new();
    for &da in &das {
        for &r in &rs {
            let mut opts: TrainOptions = args.train.clone();
            opts.model.attn_hidden = da;
            opts.model.attn_rows = r;
            let outcome = train_model(&train_videos, &opts, None)?;
            for &l in &ls {
                let ev = evaluate_videos(&outcome.best, &test_manifest, &test_videos, l, false)?;
                rows.push(SweepRow {
                    attn_hidden: da,
                    attn_rows: r,
                    split: l,
                    params: outcome.param_count,
                    auc: ev.result.auc,
                });
            }
        }
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut csv = String::from("da,r,l,params,auc\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.attn_hidden, row.attn_rows, row.split, row.params, row.auc
        ));
    }
    write(&args.out.join("grid.csv"), &csv)?;
    print!("{csv}");
    Ok(rows)
}

pub fn count(args: &CountArgs) -> Result<usize> {
    let hp = args.model.hyperparams(args.dim)?;
    let n = count_params(&hp);
    println!("{n}");
    Ok(n)
}
