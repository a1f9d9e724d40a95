//! Shared fixtures and a straight-line reference implementation of the
//! forward pass, written with plain `Vec<f64>` loops and no tape.

#![allow(dead_code)]

use graphrec::graphdata::{NeighborView, RatingGraph, RatingTriple, SocialGraph};
use graphrec::model::{AblationConfig, AttentionNet, GraphRecParams, Mlp, ModelShape};
use graphrec::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Vector = Vec<f64>;

fn affine(w: &Tensor<f64>, b: &Tensor<f64>, x: &[f64]) -> Vector {
    assert_eq!(w.cols(), x.len());
    (0..w.rows())
        .map(|r| {
            let mut acc = b.get(r, 0);
            for (c, xv) in x.iter().enumerate() {
                acc += w.get(r, c) * xv;
            }
            acc
        })
        .collect()
}

fn relu(v: Vector) -> Vector {
    v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vector {
    a.iter().chain(b).copied().collect()
}

fn mlp(m: &Mlp<f64>, x: &[f64]) -> Vector {
    let mut h = x.to_vec();
    for layer in &m.layers {
        h = relu(affine(&layer.weight, &layer.bias, &h));
    }
    h
}

fn column(t: &Tensor<f64>, c: usize) -> Vector {
    (0..t.rows()).map(|r| t.get(r, c)).collect()
}

/// Softmax of the two-layer scores, or uniform weights when disabled.
pub fn oracle_attention(net: &AttentionNet<f64>, contexts: &[Vector], target: &[f64], enabled: bool) -> Vector {
    let n = contexts.len();
    assert!(n > 0);
    if !enabled {
        return vec![1.0 / n as f64; n];
    }
    let scores: Vec<f64> = contexts
        .iter()
        .map(|c| {
            let hidden = relu(affine(&net.w1, &net.b1, &cat(c, target)));
            let mut s = net.b2.get(0, 0);
            for (k, h) in hidden.iter().enumerate() {
                s += net.w2.get(0, k) * h;
            }
            s
        })
        .collect();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Reference implementation over the full (untruncated) graphs.
pub struct Oracle<'a> {
    pub p: &'a GraphRecParams<f64>,
    pub graph: &'a RatingGraph,
    pub social: &'a SocialGraph,
    pub ablation: AblationConfig,
}

impl Oracle<'_> {
    fn d(&self) -> usize {
        self.p.shape.embed_dim
    }

    fn opinion(&self, r: u8) -> Vector {
        if self.ablation.use_opinion {
            column(&self.p.embeddings.opinions, r as usize - 1)
        } else {
            vec![0.0; self.d()]
        }
    }

    pub fn x(&self, item: u32, r: u8) -> Vector {
        mlp(&self.p.fusion_item, &cat(&column(&self.p.embeddings.items, item as usize), &self.opinion(r)))
    }

    pub fn f(&self, user: u32, r: u8) -> Vector {
        mlp(&self.p.fusion_user, &cat(&column(&self.p.embeddings.users, user as usize), &self.opinion(r)))
    }

    fn aggregate(&self, dense: &graphrec::model::Dense<f64>, net: &AttentionNet<f64>, on: bool, ctx: &[Vector], target: &[f64]) -> Vector {
        let mut agg = vec![0.0; self.d()];
        if !ctx.is_empty() {
            let w = oracle_attention(net, ctx, target, on);
            for (wk, c) in w.iter().zip(ctx) {
                for (a, v) in agg.iter_mut().zip(c) {
                    *a += wk * v;
                }
            }
        }
        relu(affine(&dense.weight, &dense.bias, &agg))
    }

    pub fn h_item_space(&self, user: u32, exclude_item: Option<u32>) -> Vector {
        let ctx: Vec<Vector> = self
            .graph
            .items_of(user)
            .iter()
            .filter(|&&(j, _)| Some(j) != exclude_item)
            .map(|&(j, r)| self.x(j, r))
            .collect();
        let p = column(&self.p.embeddings.users, user as usize);
        self.aggregate(&self.p.agg_item, &self.p.attn_item, self.ablation.attn_item, &ctx, &p)
    }

    pub fn h_social_space(&self, user: u32) -> Vector {
        let ctx: Vec<Vector> = self
            .social
            .neighbors_n(user)
            .unwrap()
            .iter()
            .map(|&o| self.h_item_space(o, None))
            .collect();
        let p = column(&self.p.embeddings.users, user as usize);
        self.aggregate(&self.p.agg_social, &self.p.attn_social, self.ablation.attn_social, &ctx, &p)
    }

    pub fn h(&self, user: u32, exclude_item: Option<u32>) -> Vector {
        let hi = self.h_item_space(user, exclude_item);
        let hs = if self.ablation.use_social {
            self.h_social_space(user)
        } else {
            vec![0.0; self.d()]
        };
        mlp(&self.p.combine, &cat(&hi, &hs))
    }

    pub fn z(&self, item: u32, exclude_user: Option<u32>) -> Vector {
        let ctx: Vec<Vector> = self
            .graph
            .raters_of(item)
            .iter()
            .filter(|&&(u, _)| Some(u) != exclude_user)
            .map(|&(u, r)| self.f(u, r))
            .collect();
        let q = column(&self.p.embeddings.items, item as usize);
        self.aggregate(&self.p.agg_user, &self.p.attn_user, self.ablation.attn_user, &ctx, &q)
    }

    pub fn predict(&self, user: u32, item: u32) -> f64 {
        let g = mlp(&self.p.predict, &cat(&self.h(user, Some(item)), &self.z(item, Some(user))));
        g.iter().enumerate().map(|(k, v)| self.p.predict_out.get(0, k) * v).sum()
    }

    /// `1/(2n) Σ (pred − r)²` over the given triples.
    pub fn loss(&self, triples: &[RatingTriple]) -> f64 {
        let sq: f64 = triples
            .iter()
            .map(|t| {
                let e = self.predict(t.user, t.item) - t.rating as f64;
                e * e
            })
            .sum();
        sq / (2.0 * triples.len() as f64)
    }
}

pub struct Fixture {
    pub graph: RatingGraph,
    pub social: SocialGraph,
}

impl Fixture {
    pub fn view(&self) -> NeighborView<'_> {
        NeighborView::full(&self.graph, &self.social)
    }

    pub fn shape(&self, d: usize) -> ModelShape {
        ModelShape::new(self.graph.n_users(), self.graph.n_items(), self.graph.r_max(), d)
    }

    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.graph.triples().iter().map(|t| (t.user, t.item)).collect()
    }
}

pub fn t(u: u32, i: u32, r: u8) -> RatingTriple {
    RatingTriple::new(u, i, r)
}

/// 4 users, 4 items, 6 ratings, 3 undirected trust edges.
pub fn small_fixture() -> Fixture {
    let triples = vec![t(0, 0, 5), t(0, 1, 3), t(1, 1, 4), t(2, 2, 2), t(3, 0, 1), t(3, 3, 4)];
    let graph = RatingGraph::from_triples(4, 4, 5, triples).unwrap();
    let (social, _) = SocialGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)], true).unwrap();
    Fixture { graph, social }
}

/// Random graph with at most 5 users and 5 items, including cold users,
/// cold items and socially isolated users with some probability.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = rng.gen_range(1..=5usize);
    let ni = rng.gen_range(1..=5usize);
    let mut triples = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if rng.gen_bool(0.45) {
                triples.push(t(u as u32, i as u32, rng.gen_range(1..=5)));
            }
        }
    }
    let graph = RatingGraph::from_triples(nu, ni, 5, triples).unwrap();
    let mut edges = Vec::new();
    for a in 0..nu {
        for b in 0..nu {
            if a != b && rng.gen_bool(0.3) {
                edges.push((a as u32, b as u32));
            }
        }
    }
    let (social, _) = SocialGraph::from_edges(nu, edges, false).unwrap();
    Fixture { graph, social }
}

/// Seeded parameters with every bias drawn from `N(0, 0.1²)` as well, so
/// empty aggregates and ReLU kinks are not degenerate.
pub fn params_with_biases(shape: ModelShape, seed: u64) -> GraphRecParams<f64> {
    scaled_params(shape, seed, 0.1)
}

/// As [`params_with_biases`], with weights and embeddings drawn at `weight_std`.
pub fn scaled_params(shape: ModelShape, seed: u64, weight_std: f64) -> GraphRecParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = GraphRecParams::<f64>::init(shape, &mut rng).unwrap();
    let normal = Normal::new(0.0, 0.1).unwrap();
    let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, tensor) in names.iter().zip(p.tensors_mut()) {
        if name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2") {
            for v in tensor.as_mut_slice() {
                *v = normal.sample(&mut rng);
            }
        } else {
            for v in tensor.as_mut_slice() {
                *v *= weight_std / graphrec::model::INIT_STD;
            }
        }
    }
    p
}

/// Eval-mode half-MSE of the batched forward over every observed rating.
pub fn batched_loss(p: &GraphRecParams<f64>, fx: &Fixture, ablation: AblationConfig) -> f64 {
    let view = fx.view();
    let mut fwd = graphrec::model::forward_batch(p, &view, &fx.pairs(), ablation, graphrec::model::Mode::Eval).unwrap();
    let truths: Vec<f64> = fx.graph.triples().iter().map(|t| t.rating as f64).collect();
    let pv = fwd.prediction_var();
    let loss = graphrec::training::half_mse_on_tape(fwd.tape_mut(), pv, &truths).unwrap();
    fwd.tape().value(loss).get(0, 0)
}

pub struct GradCheck {
    pub name: String,
    pub group: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, 0 when both vanish.
    pub rel_err: f64,
    pub norm: f64,
}

/// Compares tape gradients with central differences of step `h`, tensor by tensor.
pub fn gradient_check(p: &GraphRecParams<f64>, fx: &Fixture, ablation: AblationConfig, h: f64) -> Vec<GradCheck> {
    let view = fx.view();
    let analytic = {
        let mut fwd =
            graphrec::model::forward_batch(p, &view, &fx.pairs(), ablation, graphrec::model::Mode::Eval).unwrap();
        let truths: Vec<f64> = fx.graph.triples().iter().map(|t| t.rating as f64).collect();
        let pv = fwd.prediction_var();
        let loss = graphrec::training::half_mse_on_tape(fwd.tape_mut(), pv, &truths).unwrap();
        fwd.gradients(loss).unwrap()
    };
    let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = p.tensors()[k].len();
        let mut numeric = vec![0.0; len];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = p.clone();
            plus.tensors_mut()[k].as_mut_slice()[e] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[k].as_mut_slice()[e] -= h;
            *slot = (batched_loss(&plus, fx, ablation) - batched_loss(&minus, fx, ablation)) / (2.0 * h);
        }
        let a: Vec<f64> = match &analytic[k] {
            Some(g) => g.as_slice().to_vec(),
            None => vec![0.0; len],
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = norm(&a).max(norm(&numeric));
        let rel_err = if scale < 1e-12 { 0.0 } else { norm(&diff) / scale };
        out.push(GradCheck {
            name: name.clone(),
            group: GraphRecParams::<f64>::group_of(name).to_string(),
            rel_err,
            norm: norm(&a),
        });
    }
    out
}
