use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Standard deviation of the Gaussian used for every weight and embedding.
pub const INIT_STD: f64 = 0.1;

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_users: usize,
    pub n_items: usize,
    pub r_max: u8,
    pub embed_dim: usize,
    /// Linear layers in each of the fusion, combination and prediction MLPs.
    pub mlp_layers: usize,
}

impl ModelShape {
    pub fn new(n_users: usize, n_items: usize, r_max: u8, embed_dim: usize) -> Self {
        Self {
            n_users,
            n_items,
            r_max,
            embed_dim,
            mlp_layers: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.mlp_layers == 0 || self.r_max == 0 {
            return Err(Error::Config(format!(
                "embed_dim, mlp_layers and r_max must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Embedding tables, one column per entity: `p` for users, `q` for items and
/// `e` for opinion levels (column `r - 1` holds level `r`).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTables<T> {
    pub users: Tensor<T>,
    pub items: Tensor<T>,
    pub opinions: Tensor<T>,
}

impl<T: Scalar> EmbeddingTables<T> {
    pub fn dim(&self) -> usize {
        self.users.rows()
    }

    pub fn user(&self, u: u32) -> Tensor<T> {
        self.users.col_tensor(u as usize)
    }

    pub fn item(&self, i: u32) -> Tensor<T> {
        self.items.col_tensor(i as usize)
    }

    pub fn opinion(&self, r: u8) -> Tensor<T> {
        self.opinions.col_tensor(r as usize - 1)
    }
}

/// Affine map `x ↦ W·x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    fn init<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        Self {
            weight: gaussian(out, inp, rng),
            bias: Tensor::zeros(out, 1),
        }
    }
}

/// Stack of ReLU layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `depth` layers: the first maps `input → width`, the rest `width → width`.
    fn init<R: Rng + ?Sized>(input: usize, width: usize, depth: usize, rng: &mut R) -> Self {
        let layers = (0..depth)
            .map(|k| Dense::init(width, if k == 0 { input } else { width }, rng))
            .collect();
        Self { layers }
    }
}

/// Two-layer scorer `w2ᵀ·σ(W1·[context ⊕ target] + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionNet<T> {
    /// `hidden × 2d`; the first `d` columns act on the context.
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    /// `1 × hidden`.
    pub w2: Tensor<T>,
    /// `1 × 1`.
    pub b2: Tensor<T>,
}

impl<T: Scalar> AttentionNet<T> {
    fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Self {
            w1: gaussian(d, 2 * d, rng),
            b1: Tensor::zeros(d, 1),
            w2: gaussian(1, d, rng),
            b2: Tensor::zeros(1, 1),
        }
    }
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphRecParams<T> {
    pub shape: ModelShape,
    pub embeddings: EmbeddingTables<T>,
    /// `g_v`: fuses an item embedding with an opinion embedding.
    pub fusion_item: Mlp<T>,
    /// `g_u`: fuses a user embedding with an opinion embedding.
    pub fusion_user: Mlp<T>,
    pub attn_item: AttentionNet<T>,
    pub attn_social: AttentionNet<T>,
    pub attn_user: AttentionNet<T>,
    pub agg_item: Dense<T>,
    pub agg_social: Dense<T>,
    pub agg_user: Dense<T>,
    pub combine: Mlp<T>,
    pub predict: Mlp<T>,
    /// Final linear read-out `w` (`1 × d`), no activation.
    pub predict_out: Tensor<T>,
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let data = (0..rows * cols).map(|_| T::from_f64_lossy(normal.sample(rng))).collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

fn push_mlp<'a, T>(prefix: &str, m: &'a Mlp<T>, out: &mut Vec<(String, &'a Tensor<T>)>) {
    for (k, layer) in m.layers.iter().enumerate() {
        out.push((format!("{prefix}.{k}.weight"), &layer.weight));
        out.push((format!("{prefix}.{k}.bias"), &layer.bias));
    }
}

impl<T: Scalar> GraphRecParams<T> {
    /// Weights and embeddings drawn from `N(0, 0.1²)`, biases zero.
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let d = shape.embed_dim;
        let l = shape.mlp_layers;
        let embeddings = EmbeddingTables {
            users: gaussian(d, shape.n_users, rng),
            items: gaussian(d, shape.n_items, rng),
            opinions: gaussian(d, shape.r_max as usize, rng),
        };
        Ok(Self {
            shape,
            embeddings,
            fusion_item: Mlp::init(2 * d, d, l, rng),
            fusion_user: Mlp::init(2 * d, d, l, rng),
            attn_item: AttentionNet::init(d, rng),
            attn_social: AttentionNet::init(d, rng),
            attn_user: AttentionNet::init(d, rng),
            agg_item: Dense::init(d, d, rng),
            agg_social: Dense::init(d, d, rng),
            agg_user: Dense::init(d, d, rng),
            combine: Mlp::init(2 * d, d, l, rng),
            predict: Mlp::init(2 * d, d, l, rng),
            predict_out: gaussian(1, d, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.embed_dim
    }

    /// All tensors in canonical order, with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("embeddings.users".into(), &self.embeddings.users),
            ("embeddings.items".into(), &self.embeddings.items),
            ("embeddings.opinions".into(), &self.embeddings.opinions),
        ];
        push_mlp("fusion_item", &self.fusion_item, &mut out);
        push_mlp("fusion_user", &self.fusion_user, &mut out);
        for (name, a) in [
            ("attn_item", &self.attn_item),
            ("attn_social", &self.attn_social),
            ("attn_user", &self.attn_user),
        ] {
            out.push((format!("{name}.w1"), &a.w1));
            out.push((format!("{name}.b1"), &a.b1));
            out.push((format!("{name}.w2"), &a.w2));
            out.push((format!("{name}.b2"), &a.b2));
        }
        for (name, a) in [
            ("agg_item", &self.agg_item),
            ("agg_social", &self.agg_social),
            ("agg_user", &self.agg_user),
        ] {
            out.push((format!("{name}.weight"), &a.weight));
            out.push((format!("{name}.bias"), &a.bias));
        }
        push_mlp("combine", &self.combine, &mut out);
        push_mlp("predict", &self.predict, &mut out);
        out.push(("predict_out".into(), &self.predict_out));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = vec![
            &mut self.embeddings.users,
            &mut self.embeddings.items,
            &mut self.embeddings.opinions,
        ];
        for layer in self.fusion_item.layers.iter_mut().chain(self.fusion_user.layers.iter_mut()) {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        for a in [&mut self.attn_item, &mut self.attn_social, &mut self.attn_user] {
            out.push(&mut a.w1);
            out.push(&mut a.b1);
            out.push(&mut a.w2);
            out.push(&mut a.b2);
        }
        for a in [&mut self.agg_item, &mut self.agg_social, &mut self.agg_user] {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        for layer in self.combine.layers.iter_mut().chain(self.predict.layers.iter_mut()) {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.predict_out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Same parameters in another float type.
    pub fn cast<U: Scalar>(&self) -> GraphRecParams<U> {
        let mut out = GraphRecParams::<U>::zeros_like_shape(self.shape);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
                *d = U::from_f64_lossy(s.to_f64_lossy());
            }
        }
        out
    }

    /// All-zero parameters with the shapes implied by `shape`.
    pub fn zeros_like_shape(shape: ModelShape) -> Self {
        let d = shape.embed_dim;
        let dense = |o, i| Dense {
            weight: Tensor::zeros(o, i),
            bias: Tensor::zeros(o, 1),
        };
        let mlp = |input| Mlp {
            layers: (0..shape.mlp_layers)
                .map(|k| dense(d, if k == 0 { input } else { d }))
                .collect(),
        };
        let attn = || AttentionNet {
            w1: Tensor::zeros(d, 2 * d),
            b1: Tensor::zeros(d, 1),
            w2: Tensor::zeros(1, d),
            b2: Tensor::zeros(1, 1),
        };
        Self {
            shape,
            embeddings: EmbeddingTables {
                users: Tensor::zeros(d, shape.n_users),
                items: Tensor::zeros(d, shape.n_items),
                opinions: Tensor::zeros(d, shape.r_max as usize),
            },
            fusion_item: mlp(2 * d),
            fusion_user: mlp(2 * d),
            attn_item: attn(),
            attn_social: attn(),
            attn_user: attn(),
            agg_item: dense(d, d),
            agg_social: dense(d, d),
            agg_user: dense(d, d),
            combine: mlp(2 * d),
            predict: mlp(2 * d),
            predict_out: Tensor::zeros(1, d),
        }
    }

    /// Parameter-group label for a canonical tensor name, e.g. `attn_social`.
    pub fn group_of(name: &str) -> &str {
        match name.split('.').next() {
            Some("embeddings") => name.rsplit('.').next().unwrap_or(name),
            Some(g) => g,
            None => name,
        }
    }
}
