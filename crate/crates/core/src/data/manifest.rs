//! Dataset manifests and frame ground truth.
//!
//! A manifest is a JSON-lines file; each line is one [`VideoRecord`]:
//!
//! ```text
//! {"id":"v001","feature_path":"features/v001.svf","label":1,"class":"Burglary","frames":1600,"gt_path":"gt/v001.gt","audio_path":null}
//! ```
//!
//! Relative paths resolve against the manifest's directory. `class`,
//! `gt_path` and `audio_path` may be omitted or `null`. Ground-truth files
//! hold one byte per frame, `0` or `1`.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::feature::FeatureTensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub feature_path: PathBuf,
    pub label: u8,
    #[serde(default)]
    pub class: Option<String>,
    pub frames: usize,
    #[serde(default)]
    pub gt_path: Option<PathBuf>,
    #[serde(default)]
    pub audio_path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub videos: Vec<VideoRecord>,
    pub split: Split,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(videos: Vec<VideoRecord>, split: Split, root: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            videos,
            split,
            root: root.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut videos = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            if !line.trim().is_empty() {
                let rec: VideoRecord = serde_json::from_str(line.trim())
                    .map_err(|e| Error::format(path, offset, e.to_string()))?;
                videos.push(rec);
            }
            offset += line.len() as u64;
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(videos, split, root)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for v in &self.videos {
            serde_json::to_writer(&mut out, v).expect("record serializes");
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.id.as_str()) {
                return Err(Error::Config(format!("duplicate video id {:?}", v.id)));
            }
            if v.label > 1 {
                return Err(Error::Config(format!(
                    "video {:?} has label {}",
                    v.id, v.label
                )));
            }
        }
        if self.split == Split::Train {
            let (normal, abnormal) = self.class_counts();
            if normal == 0 || abnormal == 0 {
                return Err(Error::Config(format!(
                    "training manifest needs both classes, has {normal} normal and {abnormal} abnormal"
                )));
            }
        }
        Ok(())
    }

    /// `(normal, abnormal)` video counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let abnormal = self.videos.iter().filter(|v| v.label == 1).count();
        (self.videos.len() - abnormal, abnormal)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_features(&self, v: &VideoRecord) -> Result<FeatureTensor> {
        FeatureTensor::read(self.resolve(&v.feature_path))
    }

    pub fn load_audio(&self, v: &VideoRecord) -> Result<Option<FeatureTensor>> {
        v.audio_path
            .as_ref()
            .map(|p| FeatureTensor::read(self.resolve(p)))
            .transpose()
    }

    /// Frame labels for a video; the file must hold exactly `frames` bytes of 0/1.
    pub fn load_ground_truth(&self, v: &VideoRecord) -> Result<Option<Vec<u8>>> {
        let Some(p) = &v.gt_path else { return Ok(None) };
        let gt = read_ground_truth(self.resolve(p))?;
        if gt.len() != v.frames {
            return Err(Error::Config(format!(
                "ground truth for {:?} has {} frames, manifest says {}",
                v.id,
                gt.len(),
                v.frames
            )));
        }
        Ok(Some(gt))
    }
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Some(i) = bytes.iter().position(|&b| b > 1) {
        return Err(Error::format(
            path,
            i as u64,
            format!("frame label {} is not 0/1", bytes[i]),
        ));
    }
    Ok(bytes)
}

pub fn write_ground_truth(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labels).map_err(|e| Error::io(path, e))
}
