//! Dense matrices and a reverse-mode tape with exactly the operations the
//! recommender needs: products, affine offsets, ReLU, concatenation, column
//! gathers, dropout, and segmented softmax / weighted sums.

mod tape;
mod tensor;

pub use tape::{Gradients, Segments, Tape, Var};
pub use tensor::Tensor;
