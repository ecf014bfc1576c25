use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::scalar::Real;

/// Width of the first fully connected layer.
pub const FC1_UNITS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Feature dimension `D` of the raw segment features.
    pub dim: usize,
    /// Number of segment columns per training sample (`T`).
    pub segments: usize,
    /// Hidden width of the first attention layer (`d_a`).
    pub attn_hidden: usize,
    /// Number of attention rows (`r`).
    pub attn_rows: usize,
    pub dropout: f64,
    pub use_bilstm: bool,
    pub lstm_hidden: usize,
}

impl Hyperparams {
    pub fn new(dim: usize, attn_hidden: usize, attn_rows: usize) -> Self {
        Self {
            dim,
            segments: 32,
            attn_hidden,
            attn_rows,
            dropout: 0.3,
            use_bilstm: false,
            lstm_hidden: 256,
        }
    }

    pub fn with_bilstm(mut self, hidden: usize) -> Self {
        self.use_bilstm = true;
        self.lstm_hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("segments", self.segments),
            ("attn_hidden", self.attn_hidden),
            ("attn_rows", self.attn_rows),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.use_bilstm && self.lstm_hidden == 0 {
            return Err(Error::Config("lstm_hidden must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Row count of the features entering the attention block.
    pub fn input_width(&self) -> usize {
        if self.use_bilstm {
            2 * self.lstm_hidden
        } else {
            self.dim
        }
    }

    /// Shapes of every trainable tensor, in checkpoint order.
    pub fn manifest(&self) -> Vec<TensorSpec> {
        let d_in = self.input_width();
        let (da, r) = (self.attn_hidden, self.attn_rows);
        let mut specs = vec![
            TensorSpec::new("attn1_weight", da, d_in),
            TensorSpec::new("attn1_bias", da, 1),
            TensorSpec::new("attn2_weight", r, da),
            TensorSpec::new("attn2_bias", r, 1),
            TensorSpec::new("fc1_weight", FC1_UNITS, d_in * r),
            TensorSpec::new("fc1_bias", FC1_UNITS, 1),
            TensorSpec::new("fc2_weight", 1, FC1_UNITS),
            TensorSpec::new("fc2_bias", 1, 1),
        ];
        if self.use_bilstm {
            let h = self.lstm_hidden;
            for dir in ["fwd", "bwd"] {
                specs.push(TensorSpec::new(format!("lstm_{dir}_w_ih"), 4 * h, self.dim));
                specs.push(TensorSpec::new(format!("lstm_{dir}_w_hh"), 4 * h, h));
                specs.push(TensorSpec::new(format!("lstm_{dir}_bias"), 4 * h, 1));
            }
        }
        specs
    }
}

/// Trainable parameter count.
///
/// Without the recurrent front-end this is
/// `d_a(D+1) + r(d_a+1) + 32(D·r+1) + 33`; with it, each direction adds
/// `4H(D + H + 1)` and the attention input width becomes `2H`.
pub fn count_params(hp: &Hyperparams) -> usize {
    let d_in = hp.input_width();
    let (da, r) = (hp.attn_hidden, hp.attn_rows);
    let mut n = da * (d_in + 1) + r * (da + 1) + FC1_UNITS * (d_in * r + 1) + (FC1_UNITS + 1);
    if hp.use_bilstm {
        let h = hp.lstm_hidden;
        n += 2 * 4 * h * (hp.dim + h + 1);
    }
    n
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_bias(&self) -> bool {
        self.name.ends_with("bias")
    }
}

/// Gate weights of one LSTM direction; gate blocks are stacked input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection<T> {
    pub w_ih: Matrix<T>,
    pub w_hh: Matrix<T>,
    pub bias: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams<T> {
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub attn1_weight: Matrix<T>,
    pub attn1_bias: Matrix<T>,
    pub attn2_weight: Matrix<T>,
    pub attn2_bias: Matrix<T>,
    pub fc1_weight: Matrix<T>,
    pub fc1_bias: Matrix<T>,
    pub fc2_weight: Matrix<T>,
    pub fc2_bias: Matrix<T>,
    pub lstm: Option<BiLstmParams<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Builds parameters from tensors given in manifest order.
    pub fn from_tensors(hp: &Hyperparams, tensors: Vec<Matrix<T>>) -> Result<Self> {
        let specs = hp.manifest();
        if specs.len() != tensors.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if t.shape() != (spec.rows, spec.cols) {
                return Err(Error::dim(
                    "ModelParams::from_tensors",
                    (spec.rows, spec.cols),
                    t.shape(),
                ));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let mut params = Self {
            attn1_weight: next(),
            attn1_bias: next(),
            attn2_weight: next(),
            attn2_bias: next(),
            fc1_weight: next(),
            fc1_bias: next(),
            fc2_weight: next(),
            fc2_bias: next(),
            lstm: None,
        };
        if hp.use_bilstm {
            let mut dir = || LstmDirection {
                w_ih: next(),
                w_hh: next(),
                bias: next(),
            };
            let forward = dir();
            let backward = dir();
            params.lstm = Some(BiLstmParams { forward, backward });
        }
        Ok(params)
    }

    pub fn zeros(hp: &Hyperparams) -> Self {
        let tensors = hp
            .manifest()
            .iter()
            .map(|s| Matrix::zeros(s.rows, s.cols))
            .collect();
        Self::from_tensors(hp, tensors).expect("manifest shapes")
    }

    /// Glorot-uniform weights, zero biases, drawn in manifest order.
    pub fn init(hp: &Hyperparams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = hp
            .manifest()
            .iter()
            .map(|s| {
                if s.is_bias() {
                    return Matrix::zeros(s.rows, s.cols);
                }
                let bound = glorot_bound(s.cols, s.rows);
                Matrix::from_fn(s.rows, s.cols, |_, _| {
                    T::lit(rng.random_range(-bound..=bound))
                })
            })
            .collect();
        Self::from_tensors(hp, tensors).expect("manifest shapes")
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut v = vec![
            &self.attn1_weight,
            &self.attn1_bias,
            &self.attn2_weight,
            &self.attn2_bias,
            &self.fc1_weight,
            &self.fc1_bias,
            &self.fc2_weight,
            &self.fc2_bias,
        ];
        if let Some(l) = &self.lstm {
            for d in [&l.forward, &l.backward] {
                v.extend([&d.w_ih, &d.w_hh, &d.bias]);
            }
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = vec![
            &mut self.attn1_weight,
            &mut self.attn1_bias,
            &mut self.attn2_weight,
            &mut self.attn2_bias,
            &mut self.fc1_weight,
            &mut self.fc1_bias,
            &mut self.fc2_weight,
            &mut self.fc2_bias,
        ];
        if let Some(l) = &mut self.lstm {
            let BiLstmParams { forward, backward } = l;
            for d in [forward, backward] {
                v.extend([&mut d.w_ih, &mut d.w_hh, &mut d.bias]);
            }
        }
        v
    }

    /// Total number of scalars actually allocated.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    pub fn from_flat(hp: &Hyperparams, flat: &[T]) -> Result<Self> {
        let specs = hp.manifest();
        let total: usize = specs.iter().map(TensorSpec::len).sum();
        if flat.len() != total {
            return Err(Error::dim(
                "ModelParams::from_flat",
                (total, 1),
                (flat.len(), 1),
            ));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(specs.len());
        for s in &specs {
            tensors.push(Matrix::new(
                s.rows,
                s.cols,
                flat[offset..offset + s.len()].to_vec(),
            )?);
            offset += s.len();
        }
        Self::from_tensors(hp, tensors)
    }

    /// Checks that every tensor matches the shapes implied by `hp`.
    pub fn check_shapes(&self, hp: &Hyperparams) -> Result<()> {
        let specs = hp.manifest();
        let tensors = self.tensors();
        if specs.len() != tensors.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, hyperparameters imply {}",
                tensors.len(),
                specs.len()
            )));
        }
        for (s, t) in specs.iter().zip(tensors) {
            if t.shape() != (s.rows, s.cols) {
                return Err(Error::dim("check_shapes", (s.rows, s.cols), t.shape()));
            }
        }
        Ok(())
    }
}

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
