use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compares an analytic gradient with central differences.
///
/// `f` returns the objective value and its analytic gradient at the given
/// point. The result is `max_i |g_i − fd_i| / max(1, |g_i|)` where
/// `fd_i = (f(x + εe_i) − f(x − εe_i)) / 2ε`.
pub fn finite_diff_check<T: Real>(
    mut f: impl FnMut(&[T]) -> Result<(T, Vec<T>)>,
    params: &[T],
    epsilon: T,
) -> Result<T> {
    if epsilon.is_nan() || epsilon <= T::zero() {
        return Err(Error::Usage(
            "finite-difference epsilon must be positive".into(),
        ));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::Evaluation(
            "objective is not finite at the base point".into(),
        ));
    }
    if analytic.len() != params.len() {
        return Err(Error::dim(
            "finite_diff_check",
            (params.len(), 1),
            (analytic.len(), 1),
        ));
    }
    let mut point = params.to_vec();
    let mut worst = T::zero();
    for i in 0..params.len() {
        point[i] = params[i] + epsilon;
        let (plus, _) = f(&point)?;
        point[i] = params[i] - epsilon;
        let (minus, _) = f(&point)?;
        point[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!(
                "objective is not finite when perturbing coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (epsilon + epsilon);
        let err = (analytic[i] - numeric).abs() / T::one().max(analytic[i].abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
