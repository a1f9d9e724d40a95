//! Batched forward pass.
//!
//! A minibatch is lowered onto one tape. Interaction representations depend
//! only on `(entity, opinion)`, so each distinct pair is fused once per batch
//! and then gathered into as many neighbor lists as reference it. Item-space
//! factors for the scored users and for their social neighbors share a single
//! aggregation call.

use std::borrow::Cow;
use std::collections::HashMap;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::ablation::AblationConfig;
use super::params::{AttentionNet, GraphRecParams};
use crate::diffmath::{Segments, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graphdata::NeighborView;
use crate::scalar::Scalar;

/// Whether dropout is active.
pub enum Mode<'r> {
    Eval,
    Train { dropout: f64, rng: &'r mut ChaCha8Rng },
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

#[derive(Clone, Copy)]
struct DenseVars {
    w: Var,
    b: Var,
}

#[derive(Clone, Copy)]
struct AttnVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

/// Tape handles for every parameter tensor.
struct ParamVars {
    all: Vec<Var>,
    users: Var,
    items: Var,
    opinions: Var,
    fusion_item: Vec<DenseVars>,
    fusion_user: Vec<DenseVars>,
    attn_item: AttnVars,
    attn_social: AttnVars,
    attn_user: AttnVars,
    agg_item: DenseVars,
    agg_social: DenseVars,
    agg_user: DenseVars,
    combine: Vec<DenseVars>,
    predict: Vec<DenseVars>,
    predict_out: Var,
}

impl ParamVars {
    /// Registers the tensors in canonical order and unpacks them in that same order.
    fn bind<'p, T: Scalar>(tape: &mut Tape<'p, T>, params: &'p GraphRecParams<T>) -> Self {
        let all: Vec<Var> = params.tensors().into_iter().map(|t| tape.param(t)).collect();
        let layers = params.shape.mlp_layers;
        let mut it = all.iter().copied();
        let mut next = || it.next().expect("canonical parameter order");
        let users = next();
        let items = next();
        let opinions = next();
        let dense = |next: &mut dyn FnMut() -> Var| DenseVars { w: next(), b: next() };
        let fusion_item = (0..layers).map(|_| dense(&mut next)).collect();
        let fusion_user = (0..layers).map(|_| dense(&mut next)).collect();
        let mut attn = || AttnVars {
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        };
        let attn_item = attn();
        let attn_social = attn();
        let attn_user = attn();
        let agg_item = dense(&mut next);
        let agg_social = dense(&mut next);
        let agg_user = dense(&mut next);
        let combine = (0..layers).map(|_| dense(&mut next)).collect();
        let predict = (0..layers).map(|_| dense(&mut next)).collect();
        let predict_out = next();
        Self {
            all,
            users,
            items,
            opinions,
            fusion_item,
            fusion_user,
            attn_item,
            attn_social,
            attn_user,
            agg_item,
            agg_social,
            agg_user,
            combine,
            predict,
            predict_out,
        }
    }
}

fn bind_attention<'p, T: Scalar>(tape: &mut Tape<'p, T>, net: &'p AttentionNet<T>) -> AttnVars {
    AttnVars {
        w1: tape.param(&net.w1),
        b1: tape.param(&net.b1),
        w2: tape.param(&net.w2),
        b2: tape.param(&net.b2),
    }
}

/// Attention weights (`1 × N`) over the gathered contexts of every segment.
///
/// `W1·[c ⊕ t]` is evaluated as `W1[:, :d]·c + W1[:, d:]·t` so the products
/// run over distinct contexts and distinct targets only.
fn attention<T: Scalar>(
    tape: &mut Tape<'_, T>,
    net: AttnVars,
    enabled: bool,
    contexts: Var,
    ctx_idx: &[usize],
    targets: Var,
    segs: &Rc<Segments>,
) -> Result<Var> {
    if !enabled {
        let mut w = Vec::with_capacity(segs.total());
        for s in 0..segs.count() {
            let n = segs.len_of(s);
            w.extend(std::iter::repeat(T::one() / T::from_count(n)).take(n));
        }
        return Ok(tape.constant(Tensor::row(&w)));
    }
    let d = tape.value(contexts).rows();
    let w1_ctx = tape.slice_cols(net.w1, 0, d)?;
    let w1_tgt = tape.slice_cols(net.w1, d, d)?;
    let ctx_proj = tape.matmul(w1_ctx, contexts)?;
    let tgt_proj = tape.matmul(w1_tgt, targets)?;
    let per_edge_ctx = tape.gather_cols(ctx_proj, ctx_idx.to_vec())?;
    let seg_of_edge = (0..segs.count())
        .flat_map(|s| std::iter::repeat(s).take(segs.len_of(s)))
        .collect();
    let per_edge_tgt = tape.gather_cols(tgt_proj, seg_of_edge)?;
    let pre = tape.add(per_edge_ctx, per_edge_tgt)?;
    let pre = tape.add_column(pre, net.b1)?;
    let hidden = tape.relu(pre);
    let scores = tape.matmul(net.w2, hidden)?;
    let scores = tape.add_column(scores, net.b2)?;
    tape.segment_softmax(scores, segs.clone())
}

#[derive(Clone, Copy)]
enum Side {
    Item,
    User,
}

/// Interaction keys deduplicated into column indices.
struct KeyTable {
    keys: Vec<(u32, u8)>,
    index: HashMap<(u32, u8), usize>,
    ctx_idx: Vec<usize>,
    lengths: Vec<usize>,
}

impl KeyTable {
    fn new() -> Self {
        Self {
            keys: Vec::new(),
            index: HashMap::new(),
            ctx_idx: Vec::new(),
            lengths: Vec::new(),
        }
    }

    fn push_segment(&mut self, edges: &[(u32, u8)], use_opinion: bool) {
        for &(id, r) in edges {
            let key = (id, if use_opinion { r } else { 0 });
            let col = *self.index.entry(key).or_insert_with(|| {
                self.keys.push(key);
                self.keys.len() - 1
            });
            self.ctx_idx.push(col);
        }
        self.lengths.push(edges.len());
    }
}

struct Builder<'p, 'v, 'r, T: Scalar> {
    tape: Tape<'p, T>,
    vars: ParamVars,
    d: usize,
    view: Option<&'v NeighborView<'v>>,
    ablation: AblationConfig,
    mode: Mode<'r>,
}

impl<'p, 'v, 'r, T: Scalar> Builder<'p, 'v, 'r, T> {
    fn new(
        params: &'p GraphRecParams<T>,
        view: Option<&'v NeighborView<'v>>,
        ablation: AblationConfig,
        mode: Mode<'r>,
    ) -> Self {
        let mut tape = Tape::new();
        let vars = ParamVars::bind(&mut tape, params);
        Self {
            tape,
            vars,
            d: params.dim(),
            view,
            ablation,
            mode,
        }
    }

    fn view(&self) -> &'v NeighborView<'v> {
        self.view.expect("graph-dependent step needs a neighbor view")
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        match &mut self.mode {
            Mode::Eval => Ok(x),
            Mode::Train { dropout, rng } => self.tape.dropout(x, *dropout, true, &mut **rng),
        }
    }

    /// ReLU stack. Dropout follows every hidden activation, and also the last
    /// one when `last_is_hidden`.
    fn mlp(&mut self, layers: &[DenseVars], x: Var, last_is_hidden: bool) -> Result<Var> {
        let mut h = x;
        for (k, layer) in layers.iter().enumerate() {
            let z = self.tape.matmul(layer.w, h)?;
            let z = self.tape.add_column(z, layer.b)?;
            h = self.tape.relu(z);
            if k + 1 < layers.len() || last_is_hidden {
                h = self.dropout(h)?;
            }
        }
        Ok(h)
    }

    /// Opinion-aware interaction representations, one column per key.
    fn fuse(&mut self, side: Side, keys: &[(u32, u8)]) -> Result<Var> {
        let (table, layers) = match side {
            Side::Item => (self.vars.items, self.vars.fusion_item.clone()),
            Side::User => (self.vars.users, self.vars.fusion_user.clone()),
        };
        let emb = self.tape.gather_cols(table, keys.iter().map(|&(id, _)| id as usize).collect())?;
        let opinion = if self.ablation.use_opinion {
            let cols = keys.iter().map(|&(_, r)| r as usize - 1).collect();
            self.tape.gather_cols(self.vars.opinions, cols)?
        } else {
            self.tape.constant(Tensor::zeros(self.d, keys.len()))
        };
        let x = self.tape.concat(emb, opinion)?;
        self.mlp(&layers, x, false)
    }

    fn aggregate(
        &mut self,
        dense: DenseVars,
        weights: Var,
        contexts: Var,
        ctx_idx: Vec<usize>,
        segs: &Rc<Segments>,
    ) -> Result<Var> {
        let vectors = self.tape.gather_cols(contexts, ctx_idx)?;
        let agg = self.tape.segment_weighted_sum(weights, vectors, segs.clone())?;
        let z = self.tape.matmul(dense.w, agg)?;
        let z = self.tape.add_column(z, dense.b)?;
        Ok(self.tape.relu(z))
    }

    /// `h^I` for each `(user, C(user))` segment.
    fn item_space(&mut self, segments: &[(u32, Cow<'_, [(u32, u8)]>)]) -> Result<Var> {
        let mut table = KeyTable::new();
        for (_, edges) in segments {
            table.push_segment(edges, self.ablation.use_opinion);
        }
        let segs = Rc::new(Segments::from_lengths(table.lengths.iter().copied()));
        let x = self.fuse(Side::Item, &table.keys)?;
        let owners = segments.iter().map(|(u, _)| *u as usize).collect();
        let targets = self.tape.gather_cols(self.vars.users, owners)?;
        let alpha = attention(
            &mut self.tape,
            self.vars.attn_item,
            self.ablation.attn_item,
            x,
            &table.ctx_idx,
            targets,
            &segs,
        )?;
        self.aggregate(self.vars.agg_item, alpha, x, table.ctx_idx, &segs)
    }

    /// `h^S` for each target user, given the columns of `hi_all` that hold
    /// its neighbors' item-space factors.
    fn social_space(&mut self, users: &[u32], hi_all: Var, col_of: &HashMap<u32, usize>) -> Result<Var> {
        let view = self.view();
        let mut idx = Vec::new();
        let mut lengths = Vec::with_capacity(users.len());
        for &u in users {
            let friends = view.friends_of(u);
            idx.extend(friends.iter().map(|o| col_of[o]));
            lengths.push(friends.len());
        }
        let segs = Rc::new(Segments::from_lengths(lengths));
        let targets = self.tape.gather_cols(self.vars.users, users.iter().map(|&u| u as usize).collect())?;
        let beta = attention(
            &mut self.tape,
            self.vars.attn_social,
            self.ablation.attn_social,
            hi_all,
            &idx,
            targets,
            &segs,
        )?;
        self.aggregate(self.vars.agg_social, beta, hi_all, idx, &segs)
    }

    /// Item-space factors of the targets (first `targets.len()` columns) and
    /// of all their social neighbors, plus the neighbor column lookup.
    fn item_space_with_neighbors(&mut self, targets: &[(u32, Option<u32>)]) -> Result<(Var, HashMap<u32, usize>)> {
        let view = self.view();
        let mut segments: Vec<(u32, Cow<'_, [(u32, u8)]>)> = targets
            .iter()
            .map(|&(u, excl)| {
                let items = match excl {
                    Some(j) => view.items_excluding(u, j),
                    None => Cow::Borrowed(view.items_of(u)),
                };
                (u, items)
            })
            .collect();
        let mut col_of = HashMap::new();
        if self.ablation.use_social {
            for &(u, _) in targets {
                for &o in view.friends_of(u) {
                    col_of.entry(o).or_insert_with(|| {
                        segments.push((o, Cow::Borrowed(view.items_of(o))));
                        segments.len() - 1
                    });
                }
            }
        }
        Ok((self.item_space(&segments)?, col_of))
    }

    fn social_for(&mut self, users: &[u32], hi_all: Var, col_of: &HashMap<u32, usize>) -> Result<Var> {
        if self.ablation.use_social {
            self.social_space(users, hi_all, col_of)
        } else {
            Ok(self.tape.constant(Tensor::zeros(self.d, users.len())))
        }
    }

    /// `h_i` per target: combine MLP over `[h^I ⊕ h^S]`.
    fn user_factor(&mut self, targets: &[(u32, Option<u32>)]) -> Result<Var> {
        let (hi_all, col_of) = self.item_space_with_neighbors(targets)?;
        let b = targets.len();
        let hi = self.tape.slice_cols(hi_all, 0, b)?;
        let users: Vec<u32> = targets.iter().map(|&(u, _)| u).collect();
        let hs = self.social_for(&users, hi_all, &col_of)?;
        let c = self.tape.concat(hi, hs)?;
        let layers = self.vars.combine.clone();
        self.mlp(&layers, c, false)
    }

    /// `z_j` per target item.
    fn item_factor(&mut self, targets: &[(u32, Option<u32>)]) -> Result<Var> {
        let view = self.view();
        let mut table = KeyTable::new();
        for &(j, excl) in targets {
            let raters = match excl {
                Some(u) => view.raters_excluding(j, u),
                None => Cow::Borrowed(view.raters_of(j)),
            };
            table.push_segment(&raters, self.ablation.use_opinion);
        }
        let segs = Rc::new(Segments::from_lengths(table.lengths.iter().copied()));
        let f = self.fuse(Side::User, &table.keys)?;
        let q = self
            .tape
            .gather_cols(self.vars.items, targets.iter().map(|&(j, _)| j as usize).collect())?;
        let mu = attention(
            &mut self.tape,
            self.vars.attn_user,
            self.ablation.attn_user,
            f,
            &table.ctx_idx,
            q,
            &segs,
        )?;
        self.aggregate(self.vars.agg_user, mu, f, table.ctx_idx, &segs)
    }

    /// Predicted ratings, `1 × B`, with each scored edge hidden from its own neighborhoods.
    fn predict(&mut self, pairs: &[(u32, u32)]) -> Result<Var> {
        let users: Vec<_> = pairs.iter().map(|&(u, j)| (u, Some(j))).collect();
        let items: Vec<_> = pairs.iter().map(|&(u, j)| (j, Some(u))).collect();
        let h = self.user_factor(&users)?;
        let z = self.item_factor(&items)?;
        let g = self.tape.concat(h, z)?;
        let layers = self.vars.predict.clone();
        let g = self.mlp(&layers, g, true)?;
        self.tape.matmul(self.vars.predict_out, g)
    }

    fn output(&self, v: Var) -> Tensor<T> {
        self.tape.value(v).clone()
    }
}

fn check_user<T>(params: &GraphRecParams<T>, u: u32) -> Result<()> {
    if u as usize >= params.shape.n_users {
        return Err(Error::Index {
            kind: "user",
            id: u as usize,
            count: params.shape.n_users,
        });
    }
    Ok(())
}

fn check_item<T>(params: &GraphRecParams<T>, i: u32) -> Result<()> {
    if i as usize >= params.shape.n_items {
        return Err(Error::Index {
            kind: "item",
            id: i as usize,
            count: params.shape.n_items,
        });
    }
    Ok(())
}

fn check_rating<T>(params: &GraphRecParams<T>, r: u8) -> Result<()> {
    if r == 0 || r > params.shape.r_max {
        return Err(Error::Domain {
            rating: r as i64,
            r_max: params.shape.r_max,
        });
    }
    Ok(())
}

fn check_view<T>(params: &GraphRecParams<T>, view: &NeighborView<'_>) -> Result<()> {
    let g = view.ratings();
    if g.n_users() != params.shape.n_users || g.n_items() != params.shape.n_items {
        return Err(Error::Incompatible(format!(
            "model sized for {} users / {} items, graph has {} / {}",
            params.shape.n_users,
            params.shape.n_items,
            g.n_users(),
            g.n_items()
        )));
    }
    Ok(())
}

/// Result of a batched forward pass, holding the tape for a later backward.
pub struct BatchForward<'p, T: Scalar> {
    tape: Tape<'p, T>,
    vars: ParamVars,
    predictions: Var,
}

impl<'p, T: Scalar> BatchForward<'p, T> {
    pub fn predictions(&self) -> &[T] {
        self.tape.value(self.predictions).as_slice()
    }

    pub fn prediction_var(&self) -> Var {
        self.predictions
    }

    pub fn tape(&self) -> &Tape<'p, T> {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape<'p, T> {
        &mut self.tape
    }

    /// Gradient of `loss` for every parameter tensor, in canonical order.
    /// Tensors that did not influence the loss get `None`.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor<T>>>> {
        let mut g = self.tape.backward(loss)?;
        Ok(self.vars.all.iter().map(|&v| g.take(v)).collect())
    }
}

/// Predicts every `(user, item)` pair on one tape.
pub fn forward_batch<'p, T: Scalar>(
    params: &'p GraphRecParams<T>,
    view: &NeighborView<'_>,
    pairs: &[(u32, u32)],
    ablation: AblationConfig,
    mode: Mode<'_>,
) -> Result<BatchForward<'p, T>> {
    if pairs.is_empty() {
        return Err(Error::Contract("forward_batch needs at least one pair".into()));
    }
    check_view(params, view)?;
    for &(u, j) in pairs {
        check_user(params, u)?;
        check_item(params, j)?;
    }
    let mut b = Builder::new(params, Some(view), ablation, mode);
    let predictions = b.predict(pairs)?;
    Ok(BatchForward {
        tape: b.tape,
        vars: b.vars,
        predictions,
    })
}

/// Eval-mode prediction for one pair.
pub fn predict_rating<T: Scalar>(
    params: &GraphRecParams<T>,
    view: &NeighborView<'_>,
    user: u32,
    item: u32,
    ablation: AblationConfig,
) -> Result<T> {
    let out = forward_batch(params, view, &[(user, item)], ablation, Mode::Eval)?;
    Ok(out.predictions()[0])
}

/// `x_ia = g_v([q_a ⊕ e_r])`.
pub fn opinion_aware_item_repr<T: Scalar>(
    params: &GraphRecParams<T>,
    item: u32,
    rating: u8,
    ablation: AblationConfig,
) -> Result<Tensor<T>> {
    check_item(params, item)?;
    check_rating(params, rating)?;
    let mut b = Builder::new(params, None, ablation, Mode::Eval);
    let x = b.fuse(Side::Item, &[(item, rating)])?;
    Ok(b.output(x))
}

/// `f_jt = g_u([p_t ⊕ e_r])`.
pub fn opinion_aware_user_repr<T: Scalar>(
    params: &GraphRecParams<T>,
    user: u32,
    rating: u8,
    ablation: AblationConfig,
) -> Result<Tensor<T>> {
    check_user(params, user)?;
    check_rating(params, rating)?;
    let mut b = Builder::new(params, None, ablation, Mode::Eval);
    let x = b.fuse(Side::User, &[(user, rating)])?;
    Ok(b.output(x))
}

/// Softmax-normalized attention over `contexts` for one target, or the
/// uniform `1/n` weights when `enabled` is false.
pub fn attention_weights<T: Scalar>(
    contexts: &[Tensor<T>],
    target: &Tensor<T>,
    net: &AttentionNet<T>,
    enabled: bool,
) -> Result<Tensor<T>> {
    if contexts.is_empty() {
        return Err(Error::Empty("attention_weights"));
    }
    let d = target.rows();
    if net.w1.shape() != (net.b1.rows(), 2 * d) || net.w2.shape() != (1, net.b1.rows()) {
        return Err(Error::Shape {
            op: "attention_weights",
            msg: format!("attention net {:?} does not accept {d}-vectors", net.w1.shape()),
        });
    }
    let mut tape = Tape::new();
    let vars = bind_attention(&mut tape, net);
    let parts: Vec<Var> = contexts.iter().map(|c| tape.constant(c.clone())).collect();
    let ctx = tape.stack_columns(&parts)?;
    let tgt = tape.constant(target.clone());
    let segs = Rc::new(Segments::single(contexts.len()));
    let idx: Vec<usize> = (0..contexts.len()).collect();
    let w = attention(&mut tape, vars, enabled, ctx, &idx, tgt, &segs)?;
    Ok(Tensor::column(tape.value(w).as_slice()))
}

/// `h^I_i`. `exclude_item` hides the pair being scored.
pub fn item_space_user_factor<T: Scalar>(
    params: &GraphRecParams<T>,
    view: &NeighborView<'_>,
    user: u32,
    exclude_item: Option<u32>,
    ablation: AblationConfig,
) -> Result<Tensor<T>> {
    check_view(params, view)?;
    check_user(params, user)?;
    let mut b = Builder::new(params, Some(view), ablation, Mode::Eval);
    let items = match exclude_item {
        Some(j) => view.items_excluding(user, j),
        None => Cow::Borrowed(view.items_of(user)),
    };
    let h = b.item_space(&[(user, items)])?;
    Ok(b.output(h))
}

/// `h^S_i`, aggregated from the neighbors' full item-space factors.
pub fn social_space_user_factor<T: Scalar>(
    params: &GraphRecParams<T>,
    view: &NeighborView<'_>,
    user: u32,
    ablation: AblationConfig,
) -> Result<Tensor<T>> {
    check_view(params, view)?;
    check_user(params, user)?;
    let mut b = Builder::new(params, Some(view), ablation, Mode::Eval);
    let friends = view.friends_of(user);
    let segments: Vec<_> = friends.iter().map(|&o| (o, Cow::Borrowed(view.items_of(o)))).collect();
    let col_of: HashMap<u32, usize> = friends.iter().enumerate().map(|(k, &o)| (o, k)).collect();
    let hi = b.item_space(&segments)?;
    let hs = b.social_space(&[user], hi, &col_of)?;
    Ok(b.output(hs))
}

/// `h_i`, the combined user latent factor.
pub fn user_latent_factor<T: Scalar>(
    params: &GraphRecParams<T>,
    view: &NeighborView<'_>,
    user: u32,
    exclude_item: Option<u32>,
    ablation: AblationConfig,
) -> Result<Tensor<T>> {
    check_view(params, view)?;
    check_user(params, user)?;
    let mut b = Builder::new(params, Some(view), ablation, Mode::Eval);
    let h = b.user_factor(&[(user, exclude_item)])?;
    Ok(b.output(h))
}

/// `z_j`, the item latent factor.
pub fn item_latent_factor<T: Scalar>(
    params: &GraphRecParams<T>,
    view: &NeighborView<'_>,
    item: u32,
    exclude_user: Option<u32>,
    ablation: AblationConfig,
) -> Result<Tensor<T>> {
    check_view(params, view)?;
    check_item(params, item)?;
    let mut b = Builder::new(params, Some(view), ablation, Mode::Eval);
    let z = b.item_factor(&[(item, exclude_user)])?;
    Ok(b.output(z))
}
