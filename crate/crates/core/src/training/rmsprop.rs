use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

/// Running averages of squared gradients, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub squares: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn for_shapes<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        Self {
            squares: params.into_iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect(),
        }
    }
}

/// One RMSprop update over aligned parameter / gradient / state lists:
///
/// `s ← ρ·s + (1−ρ)·g²`, `θ ← θ − lr·g / (√s + ε)`.
///
/// A missing gradient counts as zero: the parameter stays put and only the
/// accumulator decays.
pub fn rmsprop_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Option<Tensor<T>>],
    state: &mut OptimizerState<T>,
    cfg: RmsPropConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.squares.len() {
        return Err(Error::Contract(format!(
            "rmsprop: {} parameters, {} gradients, {} accumulators",
            params.len(),
            grads.len(),
            state.squares.len()
        )));
    }
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let rho = T::from_f64_lossy(cfg.decay);
    let one_minus_rho = T::one() - rho;
    let eps = T::from_f64_lossy(cfg.epsilon);
    for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut state.squares) {
        if s.shape() != p.shape() {
            return Err(Error::Dimension {
                op: "rmsprop accumulator",
                lhs: p.shape(),
                rhs: s.shape(),
            });
        }
        match g {
            None => {
                for v in s.as_mut_slice() {
                    *v = *v * rho;
                }
            }
            Some(g) => {
                if g.shape() != p.shape() {
                    return Err(Error::Dimension {
                        op: "rmsprop gradient",
                        lhs: p.shape(),
                        rhs: g.shape(),
                    });
                }
                for ((theta, &gv), sv) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(s.as_mut_slice()) {
                    *sv = rho * *sv + one_minus_rho * gv * gv;
                    *theta = *theta - lr * gv / (sv.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}
