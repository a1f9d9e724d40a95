use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use graphrec::eval::{
    ablation_report, embedding_sweep, evaluate, predict_pairs, EvalOptions, ExperimentTable, MetricsReport,
};
use graphrec::graphdata::{
    content_hash, load_ratings, load_trust, read_dense_edges, read_dense_triples, split, write_dense_edges,
    write_dense_triples, DatasetSplit, IdMap, LoadOptions, RatingGraph, RatingsLoadReport, SocialGraph,
    TrustLoadReport,
};
use graphrec::model::{self, AblationConfig, Checkpoint};
use graphrec::seeds::{derive_seed, Purpose};
use graphrec::training::{train, write_history_csv, TrainConfig};
use graphrec::Scalar;

use crate::config::{RunConfig, ScalarKind};
use crate::error::{CliError, CliResult};

const TRAIN_CONFIG_KEY: &str = "train_config";

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path))
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> CliResult<String> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    Ok(model::content_hash(&bytes))
}

/// Standard output locations under the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split")
    }
    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.train().join("checkpoint.json")
    }
}

#[derive(Serialize, Deserialize)]
struct IngestReport {
    n_users: usize,
    n_items: usize,
    r_max: u8,
    ratings: RatingsLoadReport,
    trust: TrustLoadReport,
}

/// Everything a downstream command reads back from `data/` and `split/`.
pub struct Dataset {
    pub full: RatingGraph,
    pub social: SocialGraph,
    pub users: IdMap,
    pub items: IdMap,
    pub split: Option<DatasetSplit>,
    pub hashes: Value,
}

fn seeds(cfg: &RunConfig) -> Value {
    let root = cfg.train.seed;
    json!({
        "root": root,
        "split": cfg.split_seed,
        "init": derive_seed(root, Purpose::Init),
        "shuffle": derive_seed(root, Purpose::Shuffle),
        "dropout": derive_seed(root, Purpose::Dropout),
        "sampling": derive_seed(root, Purpose::Sampling),
        "eval_sampling": derive_seed(root, Purpose::EvalSampling),
    })
}

fn manifest(command: &str, cfg: &RunConfig, data: Value, outputs: Value) -> Value {
    json!({
        "tool": "graphrec",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg.to_map(),
        "seeds": seeds(cfg),
        "data": data,
        "outputs": outputs,
    })
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, data: Value, outputs: Value) -> CliResult<()> {
    let m = manifest(command, cfg, data, outputs);
    write(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m).expect("json"))?;
    write(&dir.join("config.kv"), &cfg.to_kv())
}

pub fn ingest(cfg: &RunConfig, layout: &Layout) -> CliResult<Value> {
    let ratings_path = cfg
        .ratings
        .clone()
        .ok_or_else(|| CliError::Invalid("ingest needs `ratings` (flag --ratings or config key)".into()))?;
    require(&ratings_path)?;
    if let Some(t) = &cfg.trust {
        require(t)?;
    }
    let opts = LoadOptions {
        r_max: cfg.r_max,
        round_fractional: cfg.round_fractional,
    };
    let data = load_ratings(&ratings_path, opts)?;
    let (social, trust_report) = match &cfg.trust {
        Some(t) => load_trust(t, &data.users, cfg.symmetrize)?,
        None => (SocialGraph::empty(data.graph.n_users()), TrustLoadReport::default()),
    };
    let dir = layout.data();
    fs::create_dir_all(&dir)?;
    write_dense_triples(&dir.join("ratings.tsv"), data.graph.triples())?;
    write_dense_edges(&dir.join("trust.tsv"), &social)?;
    data.users.write_to(&dir.join("users.map"))?;
    data.items.write_to(&dir.join("items.map"))?;
    let report = IngestReport {
        n_users: data.graph.n_users(),
        n_items: data.graph.n_items(),
        r_max: data.graph.r_max(),
        ratings: data.report.clone(),
        trust: trust_report,
    };
    write(&dir.join("ingest_report.json"), &serde_json::to_string_pretty(&report).expect("json"))?;
    let hashes = json!({
        "ratings_input": file_hash(&ratings_path)?,
        "trust_input": match &cfg.trust { Some(t) => Value::from(file_hash(t)?), None => Value::Null },
        "ratings": content_hash(data.graph.triples()),
        "trust": file_hash(&dir.join("trust.tsv"))?,
    });
    write_manifest(&dir, "ingest", cfg, hashes.clone(), json!({ "dir": dir }))?;
    Ok(json!({
        "command": "ingest",
        "users": report.n_users,
        "items": report.n_items,
        "ratings": data.graph.len(),
        "trust_edges": social.edge_count(),
        "report": report,
        "data": hashes,
        "out_dir": dir,
    }))
}

pub fn load_dataset(layout: &Layout, with_split: bool) -> CliResult<Dataset> {
    let dir = layout.data();
    let report: IngestReport = serde_json::from_str(&read(&dir.join("ingest_report.json"))?)
        .map_err(|e| CliError::Invalid(format!("ingest_report.json: {e}")))?;
    for f in ["ratings.tsv", "trust.tsv", "users.map", "items.map"] {
        require(&dir.join(f))?;
    }
    let triples = read_dense_triples(&dir.join("ratings.tsv"))?;
    let full = RatingGraph::from_triples(report.n_users, report.n_items, report.r_max, triples)?;
    let social = read_dense_edges(&dir.join("trust.tsv"), report.n_users)?;
    let users = IdMap::read_from(&dir.join("users.map"))?;
    let items = IdMap::read_from(&dir.join("items.map"))?;
    let mut hashes = json!({
        "ratings": content_hash(full.triples()),
        "trust": file_hash(&dir.join("trust.tsv"))?,
    });
    let split = if with_split {
        let sdir = layout.split();
        let part = |name: &str| -> CliResult<Vec<_>> {
            let p = sdir.join(format!("{name}.tsv"));
            require(&p)?;
            Ok(read_dense_triples(&p)?)
        };
        let meta: Value = serde_json::from_str(&read(&sdir.join("split.json"))?)
            .map_err(|e| CliError::Invalid(format!("split.json: {e}")))?;
        let s = DatasetSplit {
            train: part("train")?,
            validation: part("validation")?,
            test: part("test")?,
            train_fraction: meta["train_fraction"].as_f64().unwrap_or(f64::NAN),
            seed: meta["seed"].as_u64().unwrap_or(0),
        };
        hashes["train"] = content_hash(&s.train).into();
        hashes["validation"] = content_hash(&s.validation).into();
        hashes["test"] = content_hash(&s.test).into();
        Some(s)
    } else {
        None
    };
    Ok(Dataset {
        full,
        social,
        users,
        items,
        split,
        hashes,
    })
}

pub fn split_cmd(cfg: &RunConfig, layout: &Layout) -> CliResult<Value> {
    let ds = load_dataset(layout, false)?;
    let s = split(&ds.full, cfg.train_fraction, cfg.split_seed)?;
    let dir = layout.split();
    fs::create_dir_all(&dir)?;
    write_dense_triples(&dir.join("train.tsv"), &s.train)?;
    write_dense_triples(&dir.join("validation.tsv"), &s.validation)?;
    write_dense_triples(&dir.join("test.tsv"), &s.test)?;
    let m = s.manifest(content_hash(ds.full.triples()));
    write(&dir.join("split.json"), &serde_json::to_string_pretty(&m).expect("json"))?;
    let mut hashes = ds.hashes.clone();
    hashes["train"] = content_hash(&s.train).into();
    hashes["validation"] = content_hash(&s.validation).into();
    hashes["test"] = content_hash(&s.test).into();
    write_manifest(&dir, "split", cfg, hashes.clone(), json!({ "dir": dir }))?;
    Ok(json!({ "command": "split", "split": m, "data": hashes, "out_dir": dir }))
}

fn with_split(ds: &Dataset) -> &DatasetSplit {
    ds.split.as_ref().expect("dataset loaded with split")
}

fn run_train<T: Scalar>(cfg: &RunConfig, layout: &Layout, ds: &Dataset) -> CliResult<Value> {
    let sp = with_split(ds);
    let outcome = train::<T>(&ds.full, &ds.social, sp, &cfg.train, cfg.ablation)?;
    let dir = layout.train();
    fs::create_dir_all(&dir)?;
    let mut ck = Checkpoint::from_params(&outcome.params, cfg.ablation, cfg.train.seed);
    ck.meta.insert(TRAIN_CONFIG_KEY.into(), serde_json::to_string(&cfg.train).expect("json"));
    ck.meta.insert("config_fingerprint".into(), cfg.train.fingerprint());
    ck.meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
    ck.meta.insert("best_val_rmse".into(), format!("{:?}", outcome.best_val_rmse));
    let ck_path = layout.checkpoint();
    let hash = ck.save(&ck_path)?;
    let mut csv = Vec::new();
    write_history_csv(&mut csv, &outcome.history)?;
    write(&dir.join("history.csv"), &String::from_utf8(csv).expect("utf8"))?;
    let outputs = json!({
        "checkpoint": ck_path,
        "checkpoint_hash": hash,
        "history": dir.join("history.csv"),
        "best_epoch": outcome.best_epoch,
        "best_val_rmse": outcome.best_val_rmse,
    });
    write_manifest(&dir, "train", cfg, ds.hashes.clone(), outputs.clone())?;
    Ok(json!({
        "command": "train",
        "epochs": outcome.history.len(),
        "stopped_early": outcome.stopped_early,
        "best_epoch": outcome.best_epoch,
        "best_val_rmse": outcome.best_val_rmse,
        "config_fingerprint": cfg.train.fingerprint(),
        "checkpoint": ck_path,
        "checkpoint_hash": hash,
        "data": ds.hashes,
    }))
}

pub fn train_cmd(cfg: &RunConfig, layout: &Layout) -> CliResult<Value> {
    let ds = load_dataset(layout, true)?;
    match cfg.scalar {
        ScalarKind::F32 => run_train::<f32>(cfg, layout, &ds),
        ScalarKind::F64 => run_train::<f64>(cfg, layout, &ds),
    }
}

/// Checkpoint plus the training config it was produced with.
struct Loaded {
    ck: Checkpoint,
    hash: String,
    train: TrainConfig,
}

fn load_checkpoint(path: &Path) -> CliResult<Loaded> {
    require(path)?;
    let (ck, hash) = Checkpoint::load(path).map_err(|e| match e {
        graphrec::Error::Json(j) => CliError::Incompatible(format!("{}: {j}", path.display())),
        other => other.into(),
    })?;
    let train = match ck.meta.get(TRAIN_CONFIG_KEY) {
        Some(s) => serde_json::from_str(s)
            .map_err(|e| CliError::Incompatible(format!("{}: bad train_config: {e}", path.display())))?,
        None => TrainConfig {
            embed_dim: ck.shape.embed_dim,
            mlp_layers: ck.shape.mlp_layers,
            seed: ck.seed,
            ..TrainConfig::default()
        },
    };
    Ok(Loaded { ck, hash, train })
}

fn check_compatible(ck: &Checkpoint, graph: &RatingGraph) -> CliResult<()> {
    let s = ck.shape;
    if (s.n_users, s.n_items, s.r_max) != (graph.n_users(), graph.n_items(), graph.r_max()) {
        return Err(CliError::Incompatible(format!(
            "checkpoint expects {} users / {} items / r_max {}, data has {} / {} / {}",
            s.n_users,
            s.n_items,
            s.r_max,
            graph.n_users(),
            graph.n_items(),
            graph.r_max()
        )));
    }
    Ok(())
}

fn eval_with<T: Scalar>(
    l: &Loaded,
    train_graph: &RatingGraph,
    social: &SocialGraph,
    triples: &[graphrec::graphdata::RatingTriple],
    opts: &EvalOptions,
) -> CliResult<MetricsReport> {
    let params = l.ck.to_params::<T>()?;
    Ok(evaluate(&params, train_graph, social, triples, opts)?)
}

pub fn evaluate_cmd(cfg: &RunConfig, layout: &Layout, checkpoint: &Path, split_name: &str) -> CliResult<Value> {
    let l = load_checkpoint(checkpoint)?;
    let ds = load_dataset(layout, true)?;
    check_compatible(&l.ck, &ds.full)?;
    let sp = with_split(&ds);
    let triples = match split_name {
        "train" => &sp.train,
        "validation" => &sp.validation,
        "test" => &sp.test,
        other => return Err(CliError::Invalid(format!("unknown split {other:?}; use train, validation or test"))),
    };
    let train_graph = ds.full.restricted_to(&sp.train)?;
    let opts = EvalOptions {
        split_name: split_name.to_string(),
        clamp: cfg.clamp,
        ..EvalOptions::for_training(&l.train, l.ck.ablation)
    };
    let mut report = match l.ck.scalar.as_str() {
        "f32" => eval_with::<f32>(&l, &train_graph, &ds.social, triples, &opts)?,
        _ => eval_with::<f64>(&l, &train_graph, &ds.social, triples, &opts)?,
    };
    report.checkpoint_hash = Some(l.hash.clone());
    let dir = layout.root.join("evaluate");
    write(&dir.join(format!("{split_name}.json")), &report.to_json())?;
    write(&dir.join(format!("{split_name}.txt")), &report.to_table())?;
    let mut run_cfg = cfg.clone();
    run_cfg.train = l.train.clone();
    run_cfg.ablation = l.ck.ablation;
    write_manifest(
        &dir,
        "evaluate",
        &run_cfg,
        ds.hashes.clone(),
        json!({ "checkpoint": checkpoint, "checkpoint_hash": l.hash, "report": dir.join(format!("{split_name}.json")) }),
    )?;
    Ok(serde_json::to_value(&report).expect("json"))
}

fn table_output(cfg: &RunConfig, layout: &Layout, ds: &Dataset, name: &str, table: &ExperimentTable) -> CliResult<Value> {
    let dir = layout.root.join(name);
    write(&dir.join("table.json"), &table.to_json())?;
    write(&dir.join("table.csv"), &table.to_csv())?;
    write(&dir.join("table.txt"), &table.to_text())?;
    write_manifest(&dir, name, cfg, ds.hashes.clone(), json!({ "table": dir.join("table.json") }))?;
    Ok(json!({ "command": name, "rows": table.rows, "data": ds.hashes, "out_dir": dir }))
}

pub fn ablate_cmd(cfg: &RunConfig, layout: &Layout, variants: &[String]) -> CliResult<Value> {
    let list = variants
        .iter()
        .map(|v| v.parse::<AblationConfig>().map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    let ds = load_dataset(layout, true)?;
    let sp = with_split(&ds);
    let table = match cfg.scalar {
        ScalarKind::F32 => ablation_report::<f32>(&ds.full, &ds.social, sp, &cfg.train, &list)?,
        ScalarKind::F64 => ablation_report::<f64>(&ds.full, &ds.social, sp, &cfg.train, &list)?,
    };
    table_output(cfg, layout, &ds, "ablate", &table)
}

pub fn sweep_cmd(cfg: &RunConfig, layout: &Layout, sizes: &[usize]) -> CliResult<Value> {
    let ds = load_dataset(layout, true)?;
    let sp = with_split(&ds);
    let table = match cfg.scalar {
        ScalarKind::F32 => embedding_sweep::<f32>(&ds.full, &ds.social, sp, &cfg.train, cfg.ablation, sizes)?,
        ScalarKind::F64 => embedding_sweep::<f64>(&ds.full, &ds.social, sp, &cfg.train, cfg.ablation, sizes)?,
    };
    table_output(cfg, layout, &ds, "sweep", &table)
}

pub fn predict_cmd(cfg: &RunConfig, layout: &Layout, checkpoint: &Path, user: &str, item: &str) -> CliResult<Value> {
    let l = load_checkpoint(checkpoint)?;
    let ds = load_dataset(layout, true)?;
    check_compatible(&l.ck, &ds.full)?;
    let u = ds
        .users
        .get(user)
        .ok_or_else(|| CliError::Invalid(format!("unknown user {user:?}")))?;
    let j = ds
        .items
        .get(item)
        .ok_or_else(|| CliError::Invalid(format!("unknown item {item:?}")))?;
    let train_graph = ds.full.restricted_to(&with_split(&ds).train)?;
    let opts = EvalOptions::for_training(&l.train, l.ck.ablation);
    let view = opts.view(&train_graph, &ds.social);
    let raw = match l.ck.scalar.as_str() {
        "f32" => predict_pairs(&l.ck.to_params::<f32>()?, &view, &[(u, j)], l.ck.ablation, 1)?,
        _ => predict_pairs(&l.ck.to_params::<f64>()?, &view, &[(u, j)], l.ck.ablation, 1)?,
    }[0];
    let value = if cfg.clamp {
        raw.clamp(1.0, ds.full.r_max() as f64)
    } else {
        raw
    };
    Ok(json!({
        "command": "predict",
        "user": user,
        "item": item,
        "prediction": value,
        "raw_prediction": raw,
        "clamped": cfg.clamp,
        "observed": ds.full.rating(u, j),
        "checkpoint_hash": l.hash,
    }))
}
