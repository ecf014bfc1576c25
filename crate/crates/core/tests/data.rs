use attnscore::data::{
    aggregate_segments, fuse_audio, shuffle_segments, synth_dataset, write_synth_dataset,
    DatasetManifest, FeatureTensor, Split, SynthConfig, TrainingSet,
};
use attnscore::metrics::roc_auc;
use attnscore::ndcore::Matrix;
use attnscore::FRAMES_PER_SEGMENT;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_file_round_trip(
        crops in 1usize..4,
        n in 1usize..20,
        d in 1usize..12,
        seed in any::<u32>(),
    ) {
        let values: Vec<f32> = (0..crops * n * d)
            .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / 1e6 - 2000.0)
            .collect();
        let t = FeatureTensor::new(crops, n, d, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.svf");
        t.write(&path).unwrap();
        prop_assert_eq!(FeatureTensor::read(&path).unwrap(), t);
    }

    #[test]
    fn aggregation_preserves_mean_when_divisible(k in 1usize..6, t in 1usize..10, d in 1usize..5) {
        let n = k * t;
        let clips = Matrix::from_fn(n, d, |i, j| (i * 31 + j * 7) as f64 % 13.0);
        let out = aggregate_segments(&clips, t).unwrap();
        prop_assert_eq!(out.shape(), (t, d));
        for j in 0..d {
            let a: f64 = clips.column(j).iter().sum::<f64>() / n as f64;
            let b: f64 = out.column(j).iter().sum::<f64>() / t as f64;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shuffle_is_a_column_permutation(cols in 1usize..30, seed: u64) {
        let f = Matrix::from_fn(3, cols, |i, j| (i * 100 + j) as f64);
        let s = shuffle_segments(&f, seed);
        let mut seen: Vec<f64> = (0..cols).map(|j| s.get(0, j)).collect();
        seen.sort_by(f64::total_cmp);
        prop_assert_eq!(seen, f.row(0).to_vec());
        for j in 0..cols {
            let src = s.get(0, j) as usize;
            prop_assert_eq!(s.column(j), f.column(src));
        }
    }
}

#[test]
fn audio_fusion_pairs_nearest_rows() {
    let rgb = Matrix::from_fn(4, 2, |i, _| i as f64);
    let audio = Matrix::from_fn(2, 1, |i, _| 10.0 + i as f64);
    let fused = fuse_audio(&rgb, &audio).unwrap();
    assert_eq!(fused.shape(), (4, 3));
    assert_eq!(fused.column(2), vec![10.0, 10.0, 11.0, 11.0]);
}

#[test]
fn synthetic_layout() {
    let cfg = SynthConfig {
        n_normal: 4,
        n_abnormal: 6,
        n_test_normal: 3,
        n_test_abnormal: 5,
        crops: 2,
        ..SynthConfig::default()
    };
    let data = synth_dataset(&cfg).unwrap();
    assert_eq!(data.train.len(), 10);
    assert_eq!(data.test.len(), 8);
    for v in data.train.iter().chain(&data.test) {
        let n = v.features.segments();
        assert!((128..=256).contains(&n));
        assert_eq!(v.features.crops(), 2);
        assert!(v.frames >= n * FRAMES_PER_SEGMENT && v.frames < (n + 1) * FRAMES_PER_SEGMENT);
        assert_eq!(v.frame_labels.len(), v.frames);
        match v.window {
            Some((start, len)) => {
                assert_eq!(v.label, 1);
                assert_eq!(len, (0.3 * n as f64).round() as usize);
                assert!(start + len <= n);
                let positives = v.frame_labels.iter().filter(|&&y| y == 1).count();
                let tail = v.frames - n * FRAMES_PER_SEGMENT;
                let extra = if start + len == n { tail } else { 0 };
                assert_eq!(positives, len * FRAMES_PER_SEGMENT + extra);
            }
            None => {
                assert_eq!(v.label, 0);
                assert!(v.frame_labels.iter().all(|&y| y == 0));
            }
        }
    }
    let again = synth_dataset(&cfg).unwrap();
    assert_eq!(again.train[3].features, data.train[3].features);
}

#[test]
fn distance_from_origin_separates_gap_four() {
    let data = synth_dataset(&SynthConfig::default()).unwrap();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for v in &data.test {
        let f: Matrix<f64> = v.features.crop(0);
        let seg: Vec<f64> = (0..f.rows())
            .map(|i| f.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        for (k, &y) in v.frame_labels.iter().enumerate() {
            scores.push(seg[(k / FRAMES_PER_SEGMENT).min(seg.len() - 1)]);
            labels.push(y);
        }
    }
    let auc = roc_auc(&scores, &labels).unwrap();
    assert!(auc > 0.99, "distance oracle AUC {auc}");
}

#[test]
fn written_dataset_loads_back() {
    let cfg = SynthConfig {
        n_normal: 3,
        n_abnormal: 3,
        n_test_normal: 2,
        n_test_abnormal: 2,
        clip_range: (20, 30),
        ..SynthConfig::default()
    };
    let data = synth_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_synth_dataset(&data, dir.path()).unwrap();
    let train = DatasetManifest::read(&paths.train_manifest, Split::Train).unwrap();
    assert_eq!(train.class_counts(), (3, 3));
    let set = TrainingSet::<f64>::from_manifest(&train, 8, false).unwrap();
    assert_eq!(set.samples()[0].features.shape(), (32, 8));
    let test = DatasetManifest::read(&paths.test_manifest, Split::Test).unwrap();
    for (rec, v) in test.videos.iter().zip(&data.test) {
        assert_eq!(
            test.load_ground_truth(rec).unwrap().unwrap(),
            v.frame_labels
        );
        assert_eq!(test.load_features(rec).unwrap(), v.features);
    }
}
