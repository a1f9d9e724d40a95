use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graphdata::{RatingGraph, RatingTriple, SocialGraph};
use crate::seeds::{rng_for, Purpose};

/// Knobs of the latent-factor generator. `synth_generate` fills the
/// secondary ones with defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub d_true: usize,
    /// Probability that a trust edge goes to one of the user's most similar
    /// peers instead of a uniformly random user.
    pub homophily: f64,
    /// Std of the Gaussian noise added before quantizing.
    pub noise: f64,
    pub seed: u64,
    /// Inclusive range of ratings drawn per user.
    pub ratings_per_user: (usize, usize),
    pub edges_per_user: usize,
    /// Size of the similar-peer pool homophilous edges draw from.
    pub peer_pool: usize,
    /// Multiplier on the normalized interaction term `u·v / √d`.
    pub signal_scale: f64,
    /// Per-user offset, proportional to the first latent coordinate so that
    /// similar users also share a rating bias.
    pub user_bias: f64,
    /// Std of an independent per-item offset.
    pub item_bias: f64,
}

impl SynthConfig {
    pub fn new(n_users: usize, n_items: usize, d_true: usize, homophily: f64, noise: f64, seed: u64) -> Self {
        Self {
            n_users,
            n_items,
            d_true,
            homophily,
            noise,
            seed,
            ratings_per_user: (4, 12),
            edges_per_user: 5,
            peer_pool: 8,
            signal_scale: 0.8,
            user_bias: 0.8,
            item_bias: 0.6,
        }
    }
}

/// Generated graphs plus the latent vectors behind them. The stored vectors
/// are augmented with bias coordinates, so a rating is
/// `clamp(round(3 + ũ·ṽ + noise), 1, 5)`.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub graph: RatingGraph,
    pub social: SocialGraph,
    pub user_latent: Vec<Vec<f64>>,
    pub item_latent: Vec<Vec<f64>>,
}

impl SyntheticData {
    /// `ũ·ṽ`, the noise-free score behind a rating.
    pub fn latent_product(&self, user: u32, item: u32) -> f64 {
        let u = &self.user_latent[user as usize];
        let v = &self.item_latent[item as usize];
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

pub fn synth_generate(
    n_users: usize,
    n_items: usize,
    d_true: usize,
    homophily: f64,
    noise: f64,
    seed: u64,
) -> Result<SyntheticData> {
    synth_generate_with(&SynthConfig::new(n_users, n_items, d_true, homophily, noise, seed))
}

fn gaussian_rows<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(f64::MIN_POSITIVE)
}

pub fn synth_generate_with(cfg: &SynthConfig) -> Result<SyntheticData> {
    if cfg.n_users < 2 || cfg.n_items == 0 || cfg.d_true == 0 {
        return Err(Error::Config("synthetic data needs ≥ 2 users, ≥ 1 item, d_true ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.homophily) || !(cfg.noise >= 0.0) {
        return Err(Error::Config(format!(
            "homophily {} must lie in [0, 1] and noise {} must be ≥ 0",
            cfg.homophily, cfg.noise
        )));
    }
    let (lo, hi) = cfg.ratings_per_user;
    if lo == 0 || lo > hi || hi > cfg.n_items {
        return Err(Error::Config(format!("ratings_per_user {lo}..={hi} invalid for {} items", cfg.n_items)));
    }
    let mut rng = rng_for(cfg.seed, Purpose::Synthetic);
    let users = gaussian_rows(&mut rng, cfg.n_users, cfg.d_true);
    let items = gaussian_rows(&mut rng, cfg.n_items, cfg.d_true);
    let scale = cfg.signal_scale / (cfg.d_true as f64).sqrt();
    let user_aug: Vec<Vec<f64>> = users
        .iter()
        .map(|u| {
            let mut a: Vec<f64> = u.iter().map(|x| scale * x).collect();
            a.extend([cfg.user_bias * u[0], 1.0]);
            a
        })
        .collect();
    let item_aug: Vec<Vec<f64>> = items
        .iter()
        .map(|v| {
            let mut a = v.clone();
            let b: f64 = StandardNormal.sample(&mut rng);
            a.extend([1.0, cfg.item_bias * b]);
            a
        })
        .collect();

    let mut triples = Vec::new();
    for (u, lu) in user_aug.iter().enumerate() {
        let k = rng.gen_range(lo..=hi);
        let mut picks = index::sample(&mut rng, cfg.n_items, k).into_vec();
        picks.sort_unstable();
        for j in picks {
            let s: f64 = lu.iter().zip(&item_aug[j]).map(|(a, b)| a * b).sum();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let r = (3.0 + s + cfg.noise * eps).round().clamp(1.0, 5.0);
            triples.push(RatingTriple::new(u as u32, j as u32, r as u8));
        }
    }
    let graph = RatingGraph::from_triples(cfg.n_users, cfg.n_items, 5, triples)?;

    let pool = cfg.peer_pool.min(cfg.n_users - 1).max(1);
    let peers: Vec<Vec<u32>> = if cfg.homophily > 0.0 {
        (0..cfg.n_users)
            .map(|a| {
                let mut sims: Vec<(f64, u32)> = (0..cfg.n_users)
                    .filter(|&b| b != a)
                    .map(|b| (cosine(&users[a], &users[b]), b as u32))
                    .collect();
                sims.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                sims.into_iter().take(pool).map(|s| s.1).collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut edges = Vec::with_capacity(cfg.n_users * cfg.edges_per_user);
    for a in 0..cfg.n_users {
        for _ in 0..cfg.edges_per_user {
            let b = if rng.gen_bool(cfg.homophily) {
                peers[a][rng.gen_range(0..peers[a].len())]
            } else {
                let b = rng.gen_range(0..cfg.n_users - 1);
                (if b >= a { b + 1 } else { b }) as u32
            };
            edges.push((a as u32, b));
        }
    }
    let (social, _) = SocialGraph::from_edges(cfg.n_users, edges, true)?;
    Ok(SyntheticData {
        graph,
        social,
        user_latent: user_aug,
        item_latent: item_aug,
    })
}
