use super::radam::RAdamState;
use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::model::{batch_loss_and_grad, Hyperparams, ModelParams, Sample};
use crate::scalar::Real;

/// Runs `iterations` balanced mini-batch RAdam steps and returns the loss of each.
///
/// Iteration numbers continue from `state.step`, so a resumed run draws the
/// same batches an uninterrupted one would.
pub fn train_epoch<T: Real>(
    set: &TrainingSet<T>,
    params: &mut ModelParams<T>,
    state: &mut RAdamState<T>,
    hp: &Hyperparams,
    seed: u64,
    iterations: u64,
) -> Result<Vec<T>> {
    train_epoch_with(set, params, state, hp, seed, iterations, |_, _, _| Ok(()))
}

/// [`train_epoch`] with a callback after every step, given the 1-based step
/// number, the updated parameters and the step's loss.
pub fn train_epoch_with<T: Real>(
    set: &TrainingSet<T>,
    params: &mut ModelParams<T>,
    state: &mut RAdamState<T>,
    hp: &Hyperparams,
    seed: u64,
    iterations: u64,
    mut after_step: impl FnMut(u64, &ModelParams<T>, T) -> Result<()>,
) -> Result<Vec<T>> {
    hp.validate()?;
    params.check_shapes(hp)?;
    if set.dim() != hp.dim {
        return Err(Error::Config(format!(
            "training features have dimension {}, model expects {}",
            set.dim(),
            hp.dim
        )));
    }
    let train_mode = hp.dropout > 0.0;
    let mut history = Vec::with_capacity(iterations as usize);
    for _ in 0..iterations {
        let iteration = state.step;
        let batch = set.build_minibatch(seed, iteration);
        let samples: Vec<Sample<'_, T>> = batch
            .samples
            .iter()
            .zip(&batch.dropout_seeds)
            .map(|(&i, &dropout_seed)| {
                let s = &set.samples()[i];
                Sample {
                    features: &s.features,
                    label: s.label,
                    dropout_seed,
                }
            })
            .collect();
        let (loss, grads) = batch_loss_and_grad(params, hp, &samples, train_mode)?;
        state.step(&mut params.tensors_mut(), &grads)?;
        history.push(loss);
        after_step(state.step, params, loss)?;
    }
    Ok(history)
}
