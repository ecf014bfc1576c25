//! Segment feature files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! | offset | size            | field                       |
//! |--------|-----------------|-----------------------------|
//! | 0      | 4               | magic `SVF1`                |
//! | 4      | 4               | `crops` (u32)               |
//! | 8      | 4               | `segments` (u32)            |
//! | 12     | 4               | `dim` (u32)                 |
//! | 16     | 4·crops·N·D     | f32 payload, crop-major, then segment-major |
//!
//! Files that do not start with the magic and carry a `.csv` extension are
//! parsed as text: one segment per line, comma-separated, a single crop.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::scalar::Real;

pub const FEATURE_MAGIC: &[u8; 4] = b"SVF1";
const HEADER_LEN: usize = 16;

/// `crops × segments × dim` features of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    crops: usize,
    segments: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(crops: usize, segments: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if crops == 0 || segments == 0 || dim == 0 {
            return Err(Error::Usage(format!(
                "feature tensor needs non-zero extents, got {crops}x{segments}x{dim}"
            )));
        }
        if values.len() != crops * segments * dim {
            return Err(Error::dim(
                "FeatureTensor::new",
                (crops * segments, dim),
                (values.len(), 1),
            ));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            crops,
            segments,
            dim,
            values,
        })
    }

    /// Builds a tensor from per-crop `segments × dim` matrices.
    pub fn from_crops<T: Real>(crops: &[Matrix<T>]) -> Result<Self> {
        let first = crops
            .first()
            .ok_or_else(|| Error::Usage("no crops given".into()))?;
        let (n, d) = first.shape();
        let mut values = Vec::with_capacity(crops.len() * n * d);
        for c in crops {
            if c.shape() != (n, d) {
                return Err(Error::dim("FeatureTensor::from_crops", (n, d), c.shape()));
            }
            values.extend(c.as_slice().iter().map(|&v| v.as_f64() as f32));
        }
        Self::new(crops.len(), n, d, values)
    }

    pub fn crops(&self) -> usize {
        self.crops
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// One crop as a `segments × dim` matrix.
    pub fn crop<T: Real>(&self, c: usize) -> Matrix<T> {
        let stride = self.segments * self.dim;
        let data = self.values[c * stride..(c + 1) * stride]
            .iter()
            .map(|&v| T::lit(v as f64))
            .collect();
        Matrix::new(self.segments, self.dim, data).expect("validated on construction")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(FEATURE_MAGIC) {
            return Self::decode(path, &bytes);
        }
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            return Self::decode_csv(path, &bytes);
        }
        Err(Error::format(path, 0, "bad magic, expected SVF1"))
    }

    fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, bytes.len() as u64, "truncated header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (crops, segments, dim) = (word(4), word(8), word(12));
        if crops == 0 || segments == 0 || dim == 0 {
            return Err(Error::format(path, 4, "zero extent in header"));
        }
        let count = crops
            .checked_mul(segments)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::format(path, 4, "header extents overflow"))?;
        let expected = HEADER_LEN + 4 * count;
        if bytes.len() < expected {
            return Err(Error::format(
                path,
                bytes.len() as u64,
                format!(
                    "truncated payload: need {expected} bytes, have {}",
                    bytes.len()
                ),
            ));
        }
        if bytes.len() > expected {
            return Err(Error::format(
                path,
                expected as u64,
                "trailing bytes after payload",
            ));
        }
        let mut values = Vec::with_capacity(count);
        for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    (HEADER_LEN + 4 * k) as u64,
                    "non-finite feature value",
                ));
            }
            values.push(v);
        }
        Ok(Self {
            crops,
            segments,
            dim,
            values,
        })
    }

    fn decode_csv(path: &Path, bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            Error::format(path, e.valid_up_to() as u64, "csv features are not UTF-8")
        })?;
        let mut values = Vec::new();
        let mut dim = None;
        let mut segments = 0;
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let row = line.trim();
            if !row.is_empty() {
                let parsed = row
                    .split(',')
                    .map(|f| f.trim().parse::<f32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::format(path, offset, format!("bad number: {e}")))?;
                if parsed.iter().any(|v| !v.is_finite()) {
                    return Err(Error::format(path, offset, "non-finite feature value"));
                }
                match dim {
                    None => dim = Some(parsed.len()),
                    Some(d) if d != parsed.len() => {
                        return Err(Error::format(
                            path,
                            offset,
                            format!("row has {} values, expected {d}", parsed.len()),
                        ))
                    }
                    _ => {}
                }
                values.extend(parsed);
                segments += 1;
            }
            offset += line.len() as u64;
        }
        let dim = dim.ok_or_else(|| Error::format(path, 0, "empty csv feature file"))?;
        Self::new(1, segments, dim, values)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(FEATURE_MAGIC);
        for n in [self.crops, self.segments, self.dim] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.encode())
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTensor {
        FeatureTensor::new(1, 2, 3, vec![0.5, -1.0, 2.0, 3.25, 0.0, -7.5]).unwrap()
    }

    #[test]
    fn header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.svf");
        sample().write(&path).unwrap();
        let back = FeatureTensor::read(&path).unwrap();
        assert_eq!((back.crops(), back.segments(), back.dim()), (1, 2, 3));
        assert_eq!(back, sample());
        let m: Matrix<f64> = back.crop(0);
        assert_eq!(m.row(1), &[3.25, 0.0, -7.5]);
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.svf");
        let mut bytes = sample().encode();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        let err = FeatureTensor::read(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn bad_magic_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.svf");
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            FeatureTensor::read(&path),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bytes = sample().encode();
        bytes[16 + 8..16 + 12].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            FeatureTensor::read(&path),
            Err(Error::Format { offset: 24, .. })
        ));
    }

    #[test]
    fn csv_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "0.5,-1,2\n3.25, 0, -7.5\n").unwrap();
        assert_eq!(FeatureTensor::read(&path).unwrap(), sample());
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(
            FeatureTensor::read(&path),
            Err(Error::Format { offset: 4, .. })
        ));
    }
}
