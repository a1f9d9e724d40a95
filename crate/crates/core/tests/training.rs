mod common;

use common::{small_fixture, t};
use graphrec::eval::{evaluate, synth_generate, EvalOptions};
use graphrec::graphdata::{split, RatingGraph, RatingTriple, SocialGraph};
use graphrec::model::{forward_batch, AblationConfig, ModelShape, Mode};
use graphrec::training::{
    half_mse_on_tape, init_params, rmsprop_step, train, write_history_csv, OptimizerState, RmsPropConfig,
    TrainConfig, Trainer,
};
use graphrec::Error;

/// 5×5 grid without its diagonal and a trust chain 0-1-2-3-4.
fn memorization_fixture() -> (RatingGraph, SocialGraph, Vec<RatingTriple>) {
    let levels = [5u8, 3, 1, 4, 2, 2, 5, 3, 1, 4, 4, 1, 2, 5, 3, 3, 4, 5, 1, 2];
    let mut triples = Vec::new();
    for u in 0..5u32 {
        for i in (0..5u32).filter(|&i| i != u) {
            triples.push(t(u, i, levels[triples.len()]));
        }
    }
    let graph = RatingGraph::from_triples(5, 5, 5, triples.clone()).unwrap();
    let (social, _) = SocialGraph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], true).unwrap();
    (graph, social, triples)
}

fn memorization_config(seed: u64) -> TrainConfig {
    TrainConfig {
        embed_dim: 32,
        batch_size: 2,
        learning_rate: 5e-4,
        dropout: 0.0,
        max_epochs: 500,
        patience: 500,
        seed,
        ..TrainConfig::default()
    }
}

fn small_synthetic_config(seed: u64) -> TrainConfig {
    TrainConfig {
        embed_dim: 8,
        batch_size: 64,
        learning_rate: 0.002,
        max_epochs: 4,
        patience: 2,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn init_statistics_match_the_gaussian() {
    let p = init_params::<f64>(ModelShape::new(1200, 900, 5, 48), 11).unwrap();
    let mut weights = Vec::new();
    for (name, tensor) in p.named_tensors() {
        if name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2") {
            assert!(tensor.as_slice().iter().all(|&v| v == 0.0), "{name} not zero");
        } else {
            weights.extend_from_slice(tensor.as_slice());
        }
    }
    assert!(weights.len() >= 100_000);
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let std = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 0.003, "mean {mean}");
    assert!((std - 0.1).abs() < 0.005, "std {std}");
    assert_eq!(p, init_params::<f64>(ModelShape::new(1200, 900, 5, 48), 11).unwrap());
    assert_ne!(p, init_params::<f64>(ModelShape::new(1200, 900, 5, 48), 12).unwrap());
}

#[test]
fn memorizes_twenty_ratings() {
    let (graph, social, triples) = memorization_fixture();
    let mut trainer = Trainer::<f64>::new(graph, &social, memorization_config(0), AblationConfig::FULL).unwrap();
    for _ in 0..500 {
        trainer.run_epoch().unwrap();
    }
    let report = evaluate(trainer.params(), trainer.train_graph(), &social, &triples, &trainer.eval_options()).unwrap();
    let loss = report.rmse * report.rmse / 2.0;
    assert!(loss < 0.01, "final loss {loss}");
    assert_eq!(report.n, 20);
}

#[test]
fn evaluate_on_a_learned_fixture_is_nearly_exact() {
    let mut triples = Vec::new();
    for u in 0..6u32 {
        for i in (0..5u32).filter(|&i| i != u % 5) {
            triples.push(t(u, i, i as u8 + 1));
        }
    }
    let graph = RatingGraph::from_triples(6, 5, 5, triples.clone()).unwrap();
    let social = SocialGraph::empty(6);
    let cfg = TrainConfig { embed_dim: 16, learning_rate: 2e-4, ..memorization_config(0) };
    let mut trainer = Trainer::<f64>::new(graph, &social, cfg, AblationConfig::FULL).unwrap();
    for _ in 0..350 {
        trainer.run_epoch().unwrap();
    }
    let report = evaluate(trainer.params(), trainer.train_graph(), &social, &triples, &trainer.eval_options()).unwrap();
    assert!(report.mae < 0.05, "mae {}", report.mae);
    assert!(report.mae <= report.rmse);
}

#[test]
fn fixed_seed_reproduces_the_run() {
    let data = synth_generate(80, 50, 3, 0.8, 0.3, 4).unwrap();
    let sp = split(&data.graph, 0.8, 4).unwrap();
    let cfg = small_synthetic_config(9);
    let a = train::<f64>(&data.graph, &data.social, &sp, &cfg, AblationConfig::FULL).unwrap();
    let b = train::<f64>(&data.graph, &data.social, &sp, &cfg, AblationConfig::FULL).unwrap();
    assert_eq!(a.params, b.params);
    let strip = |h: &[graphrec::training::HistoryRow]| {
        h.iter().map(|r| (r.epoch, r.train_loss.to_bits(), r.val_rmse.to_bits(), r.is_best)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.history), strip(&b.history));
    let c = train::<f64>(&data.graph, &data.social, &sp, &small_synthetic_config(10), AblationConfig::FULL).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn returned_parameters_are_the_best_epoch() {
    let data = synth_generate(80, 50, 3, 0.8, 0.3, 5).unwrap();
    let sp = split(&data.graph, 0.8, 5).unwrap();
    let cfg = TrainConfig { max_epochs: 12, learning_rate: 0.01, ..small_synthetic_config(1) };
    let out = train::<f64>(&data.graph, &data.social, &sp, &cfg, AblationConfig::FULL).unwrap();
    let min = out.history.iter().map(|h| h.val_rmse).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_rmse, min);
    let best_rows: Vec<_> = out.history.iter().filter(|h| h.is_best).map(|h| h.epoch).collect();
    assert_eq!(best_rows.last(), Some(&out.best_epoch));
    let train_graph = data.graph.restricted_to(&sp.train).unwrap();
    let opts = EvalOptions::for_training(&cfg, AblationConfig::FULL);
    let replay = evaluate(&out.params, &train_graph, &data.social, &sp.validation, &opts).unwrap();
    assert_eq!(replay.rmse, out.best_val_rmse);
    for row in &out.history[..out.best_epoch] {
        assert!(replay.rmse <= row.val_rmse);
    }
    if out.stopped_early {
        assert_eq!(out.history.len(), out.best_epoch + cfg.patience);
    }
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let data = synth_generate(60, 40, 3, 0.8, 0.3, 2).unwrap();
    let sp = split(&data.graph, 0.8, 2).unwrap();
    let out = train::<f32>(&data.graph, &data.social, &sp, &small_synthetic_config(3), AblationConfig::FULL).unwrap();
    let mut buf = Vec::new();
    write_history_csv(&mut buf, &out.history).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_rmse,val_mae,wall_seconds,is_best");
    assert_eq!(lines.len(), out.history.len() + 1);
    assert!(out.history.iter().all(|h| h.val_mae <= h.val_rmse && h.train_loss >= 0.0));
}

#[test]
fn huge_learning_rate_diverges_with_location() {
    let data = synth_generate(60, 40, 3, 0.8, 0.3, 2).unwrap();
    let sp = split(&data.graph, 0.8, 2).unwrap();
    let cfg = TrainConfig { learning_rate: 1e30, dropout: 0.0, ..small_synthetic_config(0) };
    match train::<f32>(&data.graph, &data.social, &sp, &cfg, AblationConfig::FULL) {
        Err(Error::Divergence { epoch, batch, .. }) => {
            assert!(epoch >= 1 && batch >= 1);
            let msg = Error::Divergence { epoch, batch, loss: f64::NAN }.to_string();
            assert!(msg.contains(&epoch.to_string()) && msg.contains(&batch.to_string()), "{msg}");
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
    }
}

#[test]
fn rejects_empty_validation() {
    let (graph, social, triples) = memorization_fixture();
    let sp = graphrec::graphdata::DatasetSplit {
        train: triples,
        validation: vec![],
        test: vec![],
        train_fraction: 0.8,
        seed: 0,
    };
    assert!(train::<f64>(&graph, &social, &sp, &TrainConfig::default(), AblationConfig::FULL).is_err());
}

#[test]
fn one_step_moves_every_parameter_with_a_gradient() {
    let fx = small_fixture();
    let mut p = common::params_with_biases(fx.shape(4), 3);
    let before = p.clone();
    let view = fx.view();
    let grads = {
        let mut fwd = forward_batch(&before, &view, &fx.pairs(), AblationConfig::FULL, Mode::Eval).unwrap();
        let truths: Vec<f64> = fx.graph.triples().iter().map(|t| t.rating as f64).collect();
        let pv = fwd.prediction_var();
        let loss = half_mse_on_tape(fwd.tape_mut(), pv, &truths).unwrap();
        fwd.gradients(loss).unwrap()
    };
    let mut state = OptimizerState::for_shapes(before.tensors());
    let cfg = RmsPropConfig { learning_rate: 1e-3, decay: 0.9, epsilon: 1e-8 };
    rmsprop_step(&mut p.tensors_mut(), &grads, &mut state, cfg).unwrap();
    let mut touched = 0;
    for ((old, new), g) in before.tensors().iter().zip(p.tensors()).zip(&grads) {
        let g = g.as_ref().map(|g| g.as_slice().to_vec()).unwrap_or_else(|| vec![0.0; old.len()]);
        for ((a, b), gv) in old.as_slice().iter().zip(new.as_slice()).zip(&g) {
            if *gv == 0.0 {
                assert_eq!(a, b);
            } else if gv.abs() > 1e-12 {
                assert_ne!(a, b, "gradient {gv}");
                touched += 1;
            }
        }
    }
    assert!(touched > 0);
    assert!(state.squares.iter().all(|s| s.as_slice().iter().all(|&v| v >= 0.0)));
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { dropout: 1.0, ..TrainConfig::default() },
        TrainConfig { patience: 0, ..TrainConfig::default() },
        TrainConfig { embed_dim: 0, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
