mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::Layout;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "graphrec", version, about = "Social recommendation with attentive graph aggregation")]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "GRAPHREC_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One flag per config key. Values are parsed by the same code as the file.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    ratings: Option<String>,
    #[arg(long, global = true)]
    trust: Option<String>,
    #[arg(long, global = true)]
    r_max: Option<String>,
    #[arg(long, global = true)]
    round_fractional: Option<String>,
    #[arg(long, global = true)]
    symmetrize: Option<String>,
    #[arg(long, global = true)]
    train_fraction: Option<String>,
    #[arg(long, global = true)]
    split_seed: Option<String>,
    #[arg(long, global = true)]
    embed_dim: Option<String>,
    #[arg(long, global = true)]
    mlp_layers: Option<String>,
    #[arg(long, global = true)]
    learning_rate: Option<String>,
    #[arg(long, global = true)]
    batch_size: Option<String>,
    #[arg(long, global = true)]
    dropout: Option<String>,
    #[arg(long, global = true)]
    rmsprop_decay: Option<String>,
    #[arg(long, global = true)]
    rmsprop_epsilon: Option<String>,
    #[arg(long, global = true)]
    max_epochs: Option<String>,
    #[arg(long, global = true)]
    patience: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    neighbor_cap: Option<String>,
    #[arg(long, global = true)]
    eval_batch_size: Option<String>,
    #[arg(long, global = true)]
    variant: Option<String>,
    #[arg(long, global = true)]
    use_social: Option<String>,
    #[arg(long, global = true)]
    use_opinion: Option<String>,
    #[arg(long, global = true)]
    attn_item: Option<String>,
    #[arg(long, global = true)]
    attn_social: Option<String>,
    #[arg(long, global = true)]
    attn_user: Option<String>,
    #[arg(long, global = true)]
    scalar: Option<String>,
    #[arg(long, global = true)]
    clamp: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("ratings", &self.ratings),
            ("trust", &self.trust),
            ("r_max", &self.r_max),
            ("round_fractional", &self.round_fractional),
            ("symmetrize", &self.symmetrize),
            ("train_fraction", &self.train_fraction),
            ("split_seed", &self.split_seed),
            ("embed_dim", &self.embed_dim),
            ("mlp_layers", &self.mlp_layers),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("dropout", &self.dropout),
            ("rmsprop_decay", &self.rmsprop_decay),
            ("rmsprop_epsilon", &self.rmsprop_epsilon),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("seed", &self.seed),
            ("neighbor_cap", &self.neighbor_cap),
            ("eval_batch_size", &self.eval_batch_size),
            // `variant` first so individual switches can refine it.
            ("variant", &self.variant),
            ("use_social", &self.use_social),
            ("use_opinion", &self.use_opinion),
            ("attn_item", &self.attn_item),
            ("attn_social", &self.attn_social),
            ("attn_user", &self.attn_user),
            ("scalar", &self.scalar),
            ("clamp", &self.clamp),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load ratings and trust files, index ids, write the dataset.
    Ingest,
    /// Partition the ingested ratings into train, validation and test.
    Split,
    /// Train on the split and keep the best-validation checkpoint.
    Train,
    /// Score a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and test several ablation variants.
    Ablate {
        #[arg(long, value_delimiter = ',', default_values_t = graphrec::model::AblationConfig::VARIANT_NAMES.map(String::from))]
        variants: Vec<String>,
    },
    /// Train and test one model per embedding size.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = graphrec::eval::DEFAULT_SWEEP_SIZES)]
        sizes: Vec<usize>,
    },
    /// Predict one rating from raw user and item ids.
    Predict {
        user: String,
        item: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        if !path.exists() {
            return Err(CliError::missing(path));
        }
        let text = std::fs::read_to_string(path)?;
        cfg.apply_file(path, &text)?;
    }
    for (k, v) in cli.overrides.pairs() {
        cfg.set(k, v).map_err(|m| CliError::Invalid(format!("--{}: {m}", k.replace('_', "-"))))?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<Value> {
    let cfg = resolve(&cli)?;
    let layout = Layout {
        root: cfg.out_dir.clone(),
    };
    match &cli.command {
        Command::Ingest => commands::ingest(&cfg, &layout),
        Command::Split => commands::split_cmd(&cfg, &layout),
        Command::Train => commands::train_cmd(&cfg, &layout),
        Command::Evaluate { checkpoint, split } => {
            let ck = checkpoint.clone().unwrap_or_else(|| layout.checkpoint());
            commands::evaluate_cmd(&cfg, &layout, &ck, split)
        }
        Command::Ablate { variants } => commands::ablate_cmd(&cfg, &layout, variants),
        Command::Sweep { sizes } => commands::sweep_cmd(&cfg, &layout, sizes),
        Command::Predict { user, item, checkpoint } => {
            let ck = checkpoint.clone().unwrap_or_else(|| layout.checkpoint());
            commands::predict_cmd(&cfg, &layout, &ck, user, item)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
