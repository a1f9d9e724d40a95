use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `1/(2n) Σ (pred − truth)²`.
pub fn half_mse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} ratings",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("loss over an empty set".into()));
    }
    let sq: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / (2.0 * predictions.len() as f64))
}

/// Records the same objective on a tape; `predictions` is a `1 × n` row.
pub fn half_mse_on_tape<T: Scalar>(tape: &mut Tape<'_, T>, predictions: Var, truths: &[T]) -> Result<Var> {
    if truths.is_empty() {
        return Err(Error::Contract("loss over an empty set".into()));
    }
    let target = tape.constant(Tensor::row(truths));
    let diff = tape.sub(predictions, target)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, T::one() / T::from_count(2 * truths.len())))
}
