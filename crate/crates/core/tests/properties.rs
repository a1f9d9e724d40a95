mod common;

use std::collections::HashSet;
use std::io::Cursor;
use std::path::Path;

use common::{params_with_biases, random_fixture, t, Fixture};
use graphrec::graphdata::{parse_ratings, split, LoadOptions, NeighborView, RatingGraph, RatingTriple, SocialGraph};
use graphrec::model::{attention_weights, forward_batch, AblationConfig, AttentionNet, Mode};
use graphrec::training::half_mse;
use graphrec::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eval_predictions(p: &graphrec::Params64, fx: &Fixture, abl: AblationConfig) -> Vec<f64> {
    let view = fx.view();
    forward_batch(p, &view, &fx.pairs(), abl, Mode::Eval).unwrap().predictions().to_vec()
}

fn random_net(d: usize, rng: &mut ChaCha8Rng, scale: f64) -> AttentionNet<f64> {
    let mut g = |r, c| {
        let data = (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor::from_vec(r, c, data).unwrap()
    };
    AttentionNet { w1: g(d, 2 * d), b1: g(d, 1), w2: g(1, d), b2: g(1, 1) }
}

fn random_vec(d: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::column(&(0..d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>())
}

fn nonempty_fixture() -> impl Strategy<Value = u64> {
    (0u64..10_000).prop_filter("needs a rating", |s| !random_fixture(*s).graph.is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_weights_are_a_distribution(seed in any::<u64>(), n in 1usize..=64, d in 1usize..=6, scale in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(d, &mut rng, scale);
        let ctx: Vec<_> = (0..n).map(|_| random_vec(d, &mut rng)).collect();
        let target = random_vec(d, &mut rng);
        let w = attention_weights(&ctx, &target, &net, true).unwrap();
        prop_assert_eq!(w.len(), n);
        prop_assert!(w.as_slice().iter().all(|&v| v > 0.0));
        prop_assert!((w.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_score_weights_give_the_mean(seed in any::<u64>(), n in 1usize..=64, d in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = random_net(d, &mut rng, 1.0);
        net.w2 = Tensor::zeros(1, d);
        let ctx: Vec<_> = (0..n).map(|_| random_vec(d, &mut rng)).collect();
        let target = random_vec(d, &mut rng);
        let w = attention_weights(&ctx, &target, &net, true).unwrap();
        for &v in w.as_slice() {
            prop_assert!((v - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_a_constant_shift(scores in prop::collection::vec(-30.0f64..30.0, 1..40), c in -100.0f64..100.0) {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::row(&scores));
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let b = tape.input(Tensor::row(&shifted));
        let sa = tape.softmax(a).unwrap();
        let sb = tape.softmax(b).unwrap();
        let (va, vb) = (tape.value(sa), tape.value(sb));
        prop_assert!((va.sum() - 1.0).abs() < 1e-9);
        prop_assert!(va.as_slice().iter().all(|&v| v > 0.0));
        prop_assert!(va.max_abs_diff(vb) < 1e-9);
    }

    #[test]
    fn eval_dropout_is_the_identity(values in prop::collection::vec(-1e6f64..1e6, 1..50), rate in 0.0f64..0.99, seed in any::<u64>()) {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::column(&values));
        let y = tape.dropout(x, rate, false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let out: Vec<u64> = tape.value(y).as_slice().iter().map(|v| v.to_bits()).collect();
        let inp: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(out, inp);
    }

    #[test]
    fn zeroed_score_vectors_match_mean_aggregation(seed in nonempty_fixture(), pseed in any::<u64>()) {
        let fx = random_fixture(seed);
        let mut p = params_with_biases(fx.shape(3), pseed);
        for net in [&mut p.attn_item, &mut p.attn_social, &mut p.attn_user] {
            net.w2 = Tensor::zeros(1, 3);
        }
        let no_attention = AblationConfig { attn_item: false, attn_social: false, attn_user: false, ..AblationConfig::FULL };
        let a = eval_predictions(&p, &fx, AblationConfig::FULL);
        let b = eval_predictions(&p, &fx, no_attention);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn opinion_off_ignores_rating_permutations(seed in nonempty_fixture(), pseed in any::<u64>(), perm in Just([1u8, 2, 3, 4, 5]).prop_shuffle()) {
        let fx = random_fixture(seed);
        let relabelled: Vec<RatingTriple> = fx.graph.triples().iter().map(|x| t(x.user, x.item, perm[x.rating as usize - 1])).collect();
        let other = Fixture {
            graph: RatingGraph::from_triples(fx.graph.n_users(), fx.graph.n_items(), 5, relabelled).unwrap(),
            social: fx.social.clone(),
        };
        let p = params_with_biases(fx.shape(3), pseed);
        let abl = AblationConfig::variant("opinion").unwrap();
        prop_assert_eq!(eval_predictions(&p, &fx, abl), eval_predictions(&p, &other, abl));
    }

    #[test]
    fn social_off_ignores_trust_edits(seed in nonempty_fixture(), pseed in any::<u64>(), eseed in any::<u64>()) {
        let fx = random_fixture(seed);
        let n = fx.graph.n_users();
        let mut rng = ChaCha8Rng::seed_from_u64(eseed);
        let edges: Vec<(u32, u32)> = (0..rng.gen_range(0..12)).map(|_| (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32))).collect();
        let (social, _) = SocialGraph::from_edges(n, edges, rng.gen()).unwrap();
        let other = Fixture { graph: fx.graph.clone(), social };
        let p = params_with_biases(fx.shape(3), pseed);
        let abl = AblationConfig::variant("sn").unwrap();
        prop_assert_eq!(eval_predictions(&p, &fx, abl), eval_predictions(&p, &other, abl));
    }

    #[test]
    fn split_is_a_partition(n in 3usize..400, x in 0.05f64..0.95, seed in any::<u64>()) {
        let triples: Vec<RatingTriple> = (0..n).map(|k| t((k % 17) as u32, (k / 17) as u32, (k % 5 + 1) as u8)).collect();
        let graph = RatingGraph::from_triples(17, n / 17 + 1, 5, triples.clone()).unwrap();
        let s = split(&graph, x, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n);
        prop_assert!(!s.train.is_empty() && !s.validation.is_empty() && !s.test.is_empty());
        let keys = |v: &[RatingTriple]| v.iter().map(|t| (t.user, t.item)).collect::<HashSet<_>>();
        let (a, b, c) = (keys(&s.train), keys(&s.validation), keys(&s.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        let all: HashSet<_> = a.union(&b).chain(c.iter()).copied().collect();
        prop_assert_eq!(all, keys(&triples));
        let target = ((1.0 - x) / 2.0 * n as f64).round();
        prop_assert!((s.test.len() as f64 - target).abs() <= 1.0 || s.test.len() == 1 || s.test.len() == (n - 1) / 2);
        prop_assert_eq!(s.validation.len(), s.test.len());
        prop_assert_eq!(&s, &split(&graph, x, seed).unwrap());
    }

    #[test]
    fn load_export_round_trip(rows in prop::collection::vec((0u8..12, 0u8..9, 1u8..=5), 1..80)) {
        let text: String = rows.iter().map(|(u, i, r)| format!("u{u} i{i} {r}\n")).collect();
        let data = parse_ratings(Cursor::new(text), Path::new("mem"), LoadOptions::default()).unwrap();
        let mut expected = std::collections::HashMap::new();
        for (u, i, r) in &rows {
            expected.insert((format!("u{u}"), format!("i{i}")), *r);
        }
        let mut out = Vec::new();
        data.export(&mut out).unwrap();
        let again = parse_ratings(Cursor::new(out), Path::new("mem"), LoadOptions::default()).unwrap();
        let collect = |d: &graphrec::graphdata::RatingsData| {
            d.graph.triples().iter().map(|x| ((d.users.raw(x.user).unwrap().to_string(), d.items.raw(x.item).unwrap().to_string()), x.rating)).collect::<std::collections::HashMap<_, _>>()
        };
        prop_assert_eq!(collect(&data), expected.clone());
        prop_assert_eq!(collect(&again), expected);
        prop_assert_eq!(data.report.duplicates, rows.len() - data.graph.len());
    }

    #[test]
    fn neighbor_lists_cover_every_rating(seed in any::<u64>()) {
        let fx = random_fixture(seed);
        let view = NeighborView::full(&fx.graph, &fx.social);
        let by_user: usize = (0..fx.graph.n_users() as u32).map(|u| view.items_of(u).len()).sum();
        let by_item: usize = (0..fx.graph.n_items() as u32).map(|i| view.raters_of(i).len()).sum();
        prop_assert_eq!(by_user, fx.graph.len());
        prop_assert_eq!(by_item, fx.graph.len());
    }

    #[test]
    fn id_map_is_a_bijection(ids in prop::collection::vec("[a-z0-9]{1,6}", 1..60)) {
        let mut m = graphrec::graphdata::IdMap::new();
        for id in &ids {
            m.intern(id);
        }
        let distinct: HashSet<&String> = ids.iter().collect();
        prop_assert_eq!(m.len(), distinct.len());
        for k in 0..m.len() as u32 {
            prop_assert_eq!(m.get(m.raw(k).unwrap()), Some(k));
        }
    }

    #[test]
    fn half_mse_is_nonnegative_and_zero_only_on_equality(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50)) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let l = half_mse(&p, &y).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, p == y);
        prop_assert_eq!(half_mse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_batches_agree_with_the_whole_batch(seed in nonempty_fixture(), pseed in any::<u64>()) {
        let fx = random_fixture(seed);
        let p = params_with_biases(fx.shape(3), pseed);
        let all = eval_predictions(&p, &fx, AblationConfig::FULL);
        let view = fx.view();
        for (k, &(u, i)) in fx.pairs().iter().enumerate() {
            let one = graphrec::model::predict_rating(&p, &view, u, i, AblationConfig::FULL).unwrap();
            prop_assert!((one - all[k]).abs() < 1e-12);
        }
    }
}
