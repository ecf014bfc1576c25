use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Hyperparams, ModelParams};
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Tape, Var};
use crate::scalar::Real;

/// Whether dropout is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout with a mask drawn from the given seed.
    Train {
        seed: u64,
    },
}

/// The `r × T'` softmax attention matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap<T> {
    pub values: Matrix<T>,
}

impl<T: Real> AttentionMap<T> {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn segments(&self) -> usize {
        self.values.cols()
    }

    pub fn column_sums(&self) -> Vec<T> {
        self.values.column_sums()
    }

    /// Share of attention each segment receives, averaged over attention rows.
    ///
    /// Each row is first rescaled to sum to one across segments, so the result
    /// is a distribution over segments regardless of the softmax axis. Under a
    /// row-normalised map it is the column mass divided by `r`.
    pub fn segment_mass(&self) -> Vec<T> {
        let (r, t) = self.values.shape();
        let mut mass = vec![T::zero(); t];
        for k in 0..r {
            let row = self.values.row(k);
            let total = row.iter().fold(T::zero(), |a, &v| a + v);
            if total <= T::zero() {
                continue;
            }
            for (m, &v) in mass.iter_mut().zip(row) {
                *m += v / total;
            }
        }
        let r = T::from_count(r);
        mass.iter_mut().for_each(|m| *m /= r);
        mass
    }

    /// Largest segment mass relative to the uniform share `1/T'`.
    pub fn concentration(&self) -> T {
        let t = T::from_count(self.segments());
        self.segment_mass().into_iter().fold(T::zero(), T::max) * t
    }
}

/// Intermediate values of one scoring pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub a1: Matrix<T>,
    pub attention: AttentionMap<T>,
    pub pooled_matrix: Matrix<T>,
    pub pooled: Vec<T>,
    pub fc1: Vec<T>,
    pub logit: T,
    pub score: T,
}

/// Inverted dropout mask: entries are `0` or `1/(1 − rate)`, drawn column by column.
pub fn dropout_mask<T: Real>(rate: f64, rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::lit(1.0 / (1.0 - rate));
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            if rng.random::<f64>() >= rate {
                m.set(i, j, keep);
            }
        }
    }
    m
}

/// Parameter tensors registered on a tape, in manifest order.
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    /// Registers every tensor as a trainable leaf (`trainable`) or as a constant.
    pub fn register<T: Real>(tape: &mut Tape<T>, params: &ModelParams<T>, trainable: bool) -> Self {
        let vars = params
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Self { vars }
    }

    pub fn as_slice(&self) -> &[Var] {
        &self.vars
    }

    fn lstm(&self, dir: usize) -> Option<(Var, Var, Var)> {
        let base = 8 + 3 * dir;
        (self.vars.len() >= base + 3)
            .then(|| (self.vars[base], self.vars[base + 1], self.vars[base + 2]))
    }
}

/// Tape handles for one video's forward pass.
pub struct VideoVars {
    pub input: Var,
    pub a1: Var,
    pub a2: Var,
    pub a2_dropped: Var,
    pub pooled_matrix: Var,
    pub pooled: Var,
    pub fc1: Var,
    pub logit: Var,
    pub score: Var,
}

fn lstm_direction<T: Real>(
    tape: &mut Tape<T>,
    (w_ih, w_hh, bias): (Var, Var, Var),
    x: Var,
    hidden: usize,
    reverse: bool,
) -> Result<Var> {
    let steps = tape.value(x).cols();
    let projected = tape.matmul(w_ih, x)?;
    let projected = tape.add_bias(projected, bias)?;
    let mut h = tape.constant(Matrix::zeros(hidden, 1));
    let mut c = tape.constant(Matrix::zeros(hidden, 1));
    let mut outputs = Vec::with_capacity(steps);
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let xt = tape.column(projected, t)?;
        let rec = tape.matmul(w_hh, h)?;
        let z = tape.add(xt, rec)?;
        let zi = tape.row_range(z, 0, hidden)?;
        let zf = tape.row_range(z, hidden, hidden)?;
        let zg = tape.row_range(z, 2 * hidden, hidden)?;
        let zo = tape.row_range(z, 3 * hidden, hidden)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let g = tape.tanh(zg)?;
        let o = tape.sigmoid(zo)?;
        let keep = tape.hadamard(f, c)?;
        let write = tape.hadamard(i, g)?;
        c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        h = tape.hadamard(o, tc)?;
        outputs.push(h);
    }
    if reverse {
        outputs.reverse();
    }
    tape.hstack(&outputs)
}

/// Bidirectional LSTM over the columns of `x`; returns `2H × T'`.
pub fn bilstm_on_tape<T: Real>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    hp: &Hyperparams,
    x: Var,
) -> Result<Var> {
    if !hp.use_bilstm {
        return Err(Error::Usage(
            "recurrent front-end is disabled in these hyperparameters".into(),
        ));
    }
    let (fwd, bwd) = match (pv.lstm(0), pv.lstm(1)) {
        (Some(f), Some(b)) => (f, b),
        _ => return Err(Error::Usage("parameters carry no recurrent weights".into())),
    };
    let rows = tape.value(x).rows();
    if rows != hp.dim {
        return Err(Error::dim(
            "bilstm_forward",
            (hp.dim, 0),
            tape.value(x).shape(),
        ));
    }
    let hf = lstm_direction(tape, fwd, x, hp.lstm_hidden, false)?;
    let hb = lstm_direction(tape, bwd, x, hp.lstm_hidden, true)?;
    tape.vstack(&[hf, hb])
}

/// Full scoring graph for one `D × T'` feature matrix.
pub fn video_on_tape<T: Real>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    hp: &Hyperparams,
    features: Var,
    mask: Option<Matrix<T>>,
) -> Result<VideoVars> {
    let v = pv.as_slice();
    let input = if hp.use_bilstm {
        bilstm_on_tape(tape, pv, hp, features)?
    } else {
        features
    };
    let (rows, cols) = tape.value(input).shape();
    if rows != hp.input_width() {
        return Err(Error::dim(
            "attention_map",
            (hp.input_width(), cols),
            (rows, cols),
        ));
    }
    if cols == 0 {
        return Err(Error::Usage(
            "cannot score an empty segment sequence".into(),
        ));
    }
    let z1 = tape.matmul(v[0], input)?;
    let z1 = tape.add_bias(z1, v[1])?;
    let a1 = tape.tanh(z1)?;
    let z2 = tape.matmul(v[2], a1)?;
    let z2 = tape.add_bias(z2, v[3])?;
    let a2 = tape.softmax_columns(z2)?;
    let a2_dropped = match mask {
        Some(m) => tape.mul_const(a2, m)?,
        None => a2,
    };
    let pooled_matrix = tape.pool(input, a2_dropped)?;
    let pooled = tape.vec_column_major(pooled_matrix)?;
    let fc1 = tape.matmul(v[4], pooled)?;
    let fc1 = tape.add_bias(fc1, v[5])?;
    let logit = tape.matmul(v[6], fc1)?;
    let logit = tape.add_bias(logit, v[7])?;
    let score = tape.sigmoid(logit)?;
    Ok(VideoVars {
        input,
        a1,
        a2,
        a2_dropped,
        pooled_matrix,
        pooled,
        fc1,
        logit,
        score,
    })
}

fn mask_for<T: Real>(hp: &Hyperparams, mode: Mode, cols: usize) -> Option<Matrix<T>> {
    match mode {
        Mode::Train { seed } if hp.dropout > 0.0 => {
            Some(dropout_mask(hp.dropout, hp.attn_rows, cols, seed))
        }
        _ => None,
    }
}

/// Runs the full model on `features` (`D × T'`) and returns every intermediate.
pub fn forward_trace<T: Real>(
    features: &Matrix<T>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    mode: Mode,
) -> Result<ForwardTrace<T>> {
    let mask = mask_for(hp, mode, features.cols());
    forward_trace_with_mask(features, params, hp, mask)
}

/// As [`forward_trace`] with an explicit dropout mask (`None` disables dropout).
pub fn forward_trace_with_mask<T: Real>(
    features: &Matrix<T>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    mask: Option<Matrix<T>>,
) -> Result<ForwardTrace<T>> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let f = tape.constant(features.clone());
    let vv = video_on_tape(&mut tape, &pv, hp, f, mask)?;
    Ok(ForwardTrace {
        a1: tape.value(vv.a1).clone(),
        attention: AttentionMap {
            values: tape.value(vv.a2_dropped).clone(),
        },
        pooled_matrix: tape.value(vv.pooled_matrix).clone(),
        pooled: tape.value(vv.pooled).as_slice().to_vec(),
        fc1: tape.value(vv.fc1).as_slice().to_vec(),
        logit: tape.value(vv.logit).get(0, 0),
        score: tape.value(vv.score).get(0, 0),
    })
}

/// Attention map of `x` (`D_in × T'`, i.e. after any recurrent front-end).
pub fn attention_map<T: Real>(
    x: &Matrix<T>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    mode: Mode,
) -> Result<AttentionMap<T>> {
    if x.rows() != params.attn1_weight.cols() {
        return Err(Error::dim(
            "attention_map",
            params.attn1_weight.shape(),
            x.shape(),
        ));
    }
    let a1 = params
        .attn1_weight
        .matmul(x)?
        .add_column_broadcast(&params.attn1_bias)?
        .elementwise(crate::ndcore::Activation::Tanh);
    let a2 = params
        .attn2_weight
        .matmul(&a1)?
        .add_column_broadcast(&params.attn2_bias)?
        .softmax_columns();
    let values = match mask_for::<T>(hp, mode, x.cols()) {
        Some(m) => a2.hadamard(&m)?,
        None => a2,
    };
    Ok(AttentionMap { values })
}

/// Pools `x` (`D_in × T'`) with a given attention map and applies the head.
pub fn pool_and_score<T: Real>(
    x: &Matrix<T>,
    attention: &AttentionMap<T>,
    params: &ModelParams<T>,
) -> Result<ForwardTrace<T>> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let v = pv.as_slice();
    let f = tape.constant(x.clone());
    let a = tape.constant(attention.values.clone());
    let pooled_matrix = tape.pool(f, a)?;
    let pooled = tape.vec_column_major(pooled_matrix)?;
    let fc1 = tape.matmul(v[4], pooled)?;
    let fc1 = tape.add_bias(fc1, v[5])?;
    let logit = tape.matmul(v[6], fc1)?;
    let logit = tape.add_bias(logit, v[7])?;
    let score = tape.sigmoid(logit)?;
    Ok(ForwardTrace {
        a1: Matrix::zeros(0, x.cols()),
        attention: attention.clone(),
        pooled_matrix: tape.value(pooled_matrix).clone(),
        pooled: tape.value(pooled).as_slice().to_vec(),
        fc1: tape.value(fc1).as_slice().to_vec(),
        logit: tape.value(logit).get(0, 0),
        score: tape.value(score).get(0, 0),
    })
}

/// Recurrent front-end output `H` (`2H × T'`) for raw features `D × T'`.
pub fn bilstm_forward<T: Real>(
    features: &Matrix<T>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let f = tape.constant(features.clone());
    let h = bilstm_on_tape(&mut tape, &pv, hp, f)?;
    Ok(tape.value(h).clone())
}

/// Anomaly score in `(0, 1)` for one `D × T'` feature matrix.
pub fn score_video<T: Real>(
    features: &Matrix<T>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    mode: Mode,
) -> Result<T> {
    forward_trace(features, params, hp, mode).map(|t| t.score)
}

/// Mean BCE over a batch of scores with 0/1 labels.
pub fn bce_loss<T: Real>(scores: &[T], labels: &[u8]) -> Result<T> {
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Usage(format!("label {bad} is not 0 or 1")));
    }
    let labels: Vec<T> = labels.iter().map(|&y| T::lit(y as f64)).collect();
    crate::ndcore::bce_value(scores, &labels)
}

/// One training sample: a `D × T` feature matrix and its weak label.
pub struct Sample<'a, T> {
    pub features: &'a Matrix<T>,
    pub label: u8,
    /// Dropout seed; ignored when the dropout rate is zero.
    pub dropout_seed: u64,
}

/// Mean BCE over a batch and its gradient for every tensor in manifest order.
pub fn batch_loss_and_grad<T: Real>(
    params: &ModelParams<T>,
    hp: &Hyperparams,
    batch: &[Sample<'_, T>],
    train: bool,
) -> Result<(T, Vec<Matrix<T>>)> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, true);
    let mut scores = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for s in batch {
        let f = tape.constant(s.features.clone());
        let mode = if train {
            Mode::Train {
                seed: s.dropout_seed,
            }
        } else {
            Mode::Eval
        };
        let mask = mask_for(hp, mode, s.features.cols());
        let vv = video_on_tape(&mut tape, &pv, hp, f, mask)?;
        scores.push(vv.score);
        labels.push(T::lit(s.label as f64));
    }
    let stacked = tape.vstack(&scores)?;
    let loss = tape.bce(stacked, &labels)?;
    let value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss)?;
    Ok((value, grads.into_vec()))
}
