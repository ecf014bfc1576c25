//! Rectified Adam and the mini-batch training loop.

mod radam;
mod train;

pub use radam::{RAdamConfig, RAdamState};
pub use train::{train_epoch, train_epoch_with};
