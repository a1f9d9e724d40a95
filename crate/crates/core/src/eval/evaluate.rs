use crate::error::{Error, Result};
use crate::graphdata::{NeighborView, RatingGraph, RatingTriple, SocialGraph};
use crate::model::{forward_batch, AblationConfig, GraphRecParams, Mode};
use crate::scalar::Scalar;
use crate::seeds::{rng_for, Purpose};
use crate::training::TrainConfig;

use super::metrics::MetricsReport;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub split_name: String,
    pub clamp: bool,
    pub ablation: AblationConfig,
    /// Neighbor cap; the subsample is drawn from the `EvalSampling` stream of
    /// `seed`, so repeated evaluations see the same neighborhoods.
    pub neighbor_cap: Option<usize>,
    pub seed: u64,
    pub batch_size: usize,
    pub config_fingerprint: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self::for_training(&TrainConfig::default(), AblationConfig::FULL)
    }
}

impl EvalOptions {
    /// The options `train` uses for its validation pass.
    pub fn for_training(config: &TrainConfig, ablation: AblationConfig) -> Self {
        Self {
            split_name: "validation".into(),
            clamp: false,
            ablation,
            neighbor_cap: config.neighbor_cap,
            seed: config.seed,
            batch_size: config.eval_batch_size,
            config_fingerprint: config.fingerprint(),
        }
    }

    pub fn view<'g>(&self, graph: &'g RatingGraph, social: &'g SocialGraph) -> NeighborView<'g> {
        let mut rng = rng_for(self.seed, Purpose::EvalSampling);
        NeighborView::sampled(graph, social, self.neighbor_cap, &mut rng)
    }
}

/// Raw eval-mode predictions for each pair, in input order.
pub fn predict_pairs<T: Scalar>(
    params: &GraphRecParams<T>,
    view: &NeighborView<'_>,
    pairs: &[(u32, u32)],
    ablation: AblationConfig,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(batch_size.max(1)) {
        let fwd = forward_batch(params, view, chunk, ablation, Mode::Eval)?;
        out.extend(fwd.predictions().iter().map(|p| p.to_f64_lossy()));
    }
    Ok(out)
}

/// Scores every triple against the neighborhoods of `graph` (normally the
/// training graph) with dropout off and the scored pair excluded.
pub fn evaluate<T: Scalar>(
    params: &GraphRecParams<T>,
    graph: &RatingGraph,
    social: &SocialGraph,
    triples: &[RatingTriple],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if triples.is_empty() {
        return Err(Error::Contract(format!("split {} has no ratings to evaluate", opts.split_name)));
    }
    let view = opts.view(graph, social);
    let pairs: Vec<(u32, u32)> = triples.iter().map(|t| (t.user, t.item)).collect();
    let mut preds = predict_pairs(params, &view, &pairs, opts.ablation, opts.batch_size)?;
    let r_max = graph.r_max() as f64;
    let out_of_range = preds.iter().filter(|&&p| !(1.0..=r_max).contains(&p)).count();
    if opts.clamp {
        for p in &mut preds {
            *p = p.clamp(1.0, r_max);
        }
    }
    let truths: Vec<f64> = triples.iter().map(|t| t.rating as f64).collect();
    let mut report = MetricsReport::from_predictions(&opts.split_name, &preds, &truths)?;
    report.clamped = opts.clamp;
    report.out_of_range = out_of_range;
    report.cold_users = pairs.iter().filter(|&&(u, j)| view.items_excluding(u, j).is_empty()).count();
    report.cold_items = pairs.iter().filter(|&&(u, j)| view.raters_excluding(j, u).is_empty()).count();
    report.config_fingerprint = opts.config_fingerprint.clone();
    Ok(report)
}
