//! Dense matrices, the differentiation tape and gradient verification.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::finite_diff_check;
pub use matrix::{Activation, Matrix};
pub use tape::{bce_value, pool_product, Gradients, Tape, Var, BCE_CLAMP};
