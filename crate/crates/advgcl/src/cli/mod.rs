//! Command-line driver: `train`, `eval`, `attack-study` and `gen-sbm`
//! subcommands wiring config files, dataset files, checkpoints and output
//! artifacts together. Every command is deterministic under (config, seed)
//! and writes its outputs atomically.

pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::cli::config::{load_config, RawConfig};
use crate::error::{Error, Result};
use crate::eval::{embed, embed_graphs, evaluate, vulnerability_study};
use crate::graph::io::{load_graph, load_graph_dataset, save_graph, write_atomic};
use crate::graph::synthetic::generate_sbm;
use crate::graph::AugmentSpec;
use crate::training::{train_graph_level, train_node_level, TrainConfig};

#[derive(Parser)]
#[command(
    name = "advgcl",
    about = "Adversarial graph contrastive learning: train encoders, probe embeddings, study degradation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a node- or graph-level encoder and write checkpoint + loss log.
    Train(CommonArgs),
    /// Probe a checkpoint's embeddings with repeated random splits.
    Eval(CommonArgs),
    /// Track embedding drift under cumulative random edge/feature removal.
    AttackStudy(CommonArgs),
    /// Generate a stochastic block model dataset file.
    GenSbm(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (key = value lines with [sections]).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments, runs one command, and maps failures to exit codes:
/// 0 success, 2 config or input error, 3 runtime numeric failure.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::AttackStudy(args) => cmd_attack_study(&args),
        Command::GenSbm(args) => cmd_gen_sbm(&args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct RunContext {
    cfg: RawConfig,
    seed: u64,
    out_dir: PathBuf,
}

fn context(args: &CommonArgs) -> Result<RunContext> {
    let mut cfg = load_config(&args.config)?;
    let seed = match args.seed {
        Some(s) => {
            cfg.take("seed");
            s
        }
        None => cfg.take_u64("seed", 0)?,
    };
    let out_dir = match &args.out {
        Some(dir) => {
            cfg.take("out");
            dir.clone()
        }
        None => PathBuf::from(cfg.take_str("out", ".")),
    };
    std::fs::create_dir_all(&out_dir)?;
    Ok(RunContext { cfg, seed, out_dir })
}

fn build_train_config(cfg: &mut RawConfig, mode: &str, seed: u64) -> Result<TrainConfig> {
    let mut tc = match mode {
        "node" => TrainConfig::node_defaults(),
        "graph" => TrainConfig::graph_defaults(),
        other => return Err(Error::Config(format!("mode must be node or graph, got `{other}`"))),
    };
    tc.seed = seed;
    tc.epochs = cfg.take_usize("train.epochs", tc.epochs)?;
    tc.learning_rate = cfg.take_f64("train.learning_rate", tc.learning_rate)?;
    tc.tau = cfg.take_f64("train.tau", tc.tau)?;
    tc.eps1 = cfg.take_f64("train.eps1", tc.eps1)?;
    tc.eps2 = cfg.take_f64("train.eps2", tc.eps2)?;
    tc.gamma = cfg.take_f64("train.gamma", tc.gamma)?;
    tc.period_t = cfg.take_usize("train.period_t", tc.period_t)?;
    tc.subgraph_size = cfg.take_usize("train.subgraph_size", tc.subgraph_size)?;
    tc.batch_size = cfg.take_usize("train.batch_size", tc.batch_size)?;
    tc.hidden_dim = cfg.take_usize("train.hidden_dim", tc.hidden_dim)?;
    tc.embed_dim = cfg.take_usize("train.embed_dim", tc.embed_dim)?;
    tc.augment1 = AugmentSpec::new(
        cfg.take_f64("train.edge_drop1", 0.2)?,
        cfg.take_f64("train.feature_mask1", 0.2)?,
    )?;
    tc.augment2 = AugmentSpec::new(
        cfg.take_f64("train.edge_drop2", 0.2)?,
        cfg.take_f64("train.feature_mask2", 0.2)?,
    )?;
    tc.attack.steps = cfg.take_usize("attack.steps", tc.attack.steps)?;
    tc.attack.alpha = cfg.take_f64("attack.alpha", tc.attack.alpha)?;
    tc.attack.beta = cfg.take_f64("attack.beta", tc.attack.beta)?;
    tc.attack.delta_a_ratio = cfg.take_f64("attack.delta_a_ratio", tc.attack.delta_a_ratio)?;
    tc.attack.delta_x = cfg.take_f64("attack.delta_x", tc.attack.delta_x)?;
    tc.validate()?;
    Ok(tc)
}

fn cmd_train(args: &CommonArgs) -> Result<()> {
    let mut ctx = context(args)?;
    let mode = ctx.cfg.require("mode")?;
    let dataset = PathBuf::from(ctx.cfg.require("dataset")?);
    let tc = build_train_config(&mut ctx.cfg, &mode, ctx.seed)?;
    std::mem::take(&mut ctx.cfg).finish()?;

    let (checkpoint, log, final_eps1) = match mode.as_str() {
        "node" => {
            let g = load_graph(&dataset)?;
            let out = train_node_level(&g, &tc)?;
            (Checkpoint::Node { gcn: out.gcn, head: out.head }, out.log, out.final_eps1)
        }
        _ => {
            let graphs = load_graph_dataset(&dataset)?;
            let out = train_graph_level(&graphs, &tc)?;
            (Checkpoint::Graph { gin: out.gin, head: out.head }, out.log, out.final_eps1)
        }
    };

    let ckpt_path = ctx.out_dir.join("checkpoint.txt");
    let log_path = ctx.out_dir.join("train_log.csv");
    checkpoint.save(&ckpt_path)?;
    write_atomic(&log_path, &log.to_csv())?;

    let last = log.records.last().expect("training produced iterations");
    println!(
        "trained {} model over {} iterations: loss {:.6} (contrastive {:.6}, adversarial {:.6}, regularizer {:.6}), final adversarial weight {:.4}",
        mode,
        log.len(),
        last.breakdown.total,
        last.breakdown.l_con,
        last.breakdown.l_adv,
        last.breakdown.l_ir,
        final_eps1
    );
    println!("wrote {} and {}", ckpt_path.display(), log_path.display());
    Ok(())
}

fn dataset_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

fn cmd_eval(args: &CommonArgs) -> Result<()> {
    let mut ctx = context(args)?;
    let ckpt_path = PathBuf::from(ctx.cfg.require("checkpoint")?);
    let dataset = PathBuf::from(ctx.cfg.require("dataset")?);
    let repetitions = ctx.cfg.take_usize("eval.repetitions", 20)?;
    let name = ctx.cfg.take_str("eval.name", &dataset_stem(&dataset));
    std::mem::take(&mut ctx.cfg).finish()?;

    let checkpoint = Checkpoint::load(&ckpt_path)?;
    let (h, labels, num_classes) = match &checkpoint {
        Checkpoint::Node { gcn, .. } => {
            let g = load_graph(&dataset)?;
            let labels = g
                .node_labels()
                .ok_or_else(|| Error::Validation("dataset has no node labels to probe".into()))?
                .to_vec();
            let num_classes = g
                .num_classes()
                .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            (embed(&g, gcn)?, labels, num_classes)
        }
        Checkpoint::Graph { gin, .. } => {
            let graphs = load_graph_dataset(&dataset)?;
            let labels = graphs
                .iter()
                .map(|g| {
                    g.graph_label().ok_or_else(|| {
                        Error::Validation("dataset has no graph labels to probe".into())
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            let num_classes = labels.iter().max().map_or(0, |m| m + 1);
            (embed_graphs(&graphs, gin)?, labels, num_classes)
        }
    };

    let report = evaluate(&h, &labels, num_classes, &name, ctx.seed, repetitions)?;
    let report_path = ctx.out_dir.join("eval_report.json");
    write_atomic(&report_path, &report.to_json())?;
    println!(
        "probe accuracy {:.4} +- {:.4} over {} splits",
        report.accuracy_mean, report.accuracy_std, report.repetitions
    );
    println!("wrote {}", report_path.display());
    Ok(())
}

fn cmd_attack_study(args: &CommonArgs) -> Result<()> {
    let mut ctx = context(args)?;
    let ckpt_path = PathBuf::from(ctx.cfg.require("checkpoint")?);
    let dataset = PathBuf::from(ctx.cfg.require("dataset")?);
    let p = ctx.cfg.take_f64("study.p", 0.03)?;
    let steps = ctx.cfg.take_usize("study.steps", 60)?;
    std::mem::take(&mut ctx.cfg).finish()?;

    let checkpoint = Checkpoint::load(&ckpt_path)?;
    let gcn = match checkpoint {
        Checkpoint::Node { gcn, .. } => gcn,
        Checkpoint::Graph { .. } => {
            return Err(Error::Config(
                "the degradation study tracks node embeddings and needs a node-level checkpoint"
                    .into(),
            ))
        }
    };
    let g = load_graph(&dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let curve = vulnerability_study(&g, |g| embed(g, &gcn), p, steps, &mut rng)?;

    let curve_path = ctx.out_dir.join("vulnerability.csv");
    write_atomic(&curve_path, &curve.to_csv())?;
    let last = curve.rows.last().expect("curve never empty");
    println!(
        "step {}: mean similarity {:.4}, expected edge retention {:.2}%",
        last.step,
        last.mean,
        100.0 * last.edge_retention
    );
    println!("wrote {}", curve_path.display());
    Ok(())
}

fn cmd_gen_sbm(args: &CommonArgs) -> Result<()> {
    let mut ctx = context(args)?;
    let blocks = ctx
        .cfg
        .take_usize_list("sbm.blocks")?
        .ok_or_else(|| Error::Config("missing required key `sbm.blocks`".into()))?;
    let p_in = ctx.cfg.take_f64("sbm.p_in", 0.1)?;
    let p_out = ctx.cfg.take_f64("sbm.p_out", 0.01)?;
    let feature_dim = ctx.cfg.take_usize("sbm.feature_dim", 16)?;
    let feature_noise = ctx.cfg.take_f64("sbm.feature_noise", 0.0)?;
    std::mem::take(&mut ctx.cfg).finish()?;

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let g = generate_sbm(&blocks, p_in, p_out, feature_dim, feature_noise, &mut rng)?;
    let path = ctx.out_dir.join("sbm.graph");
    save_graph(&path, &g)?;
    println!(
        "wrote {} ({} nodes, {} edges, {} classes)",
        path.display(),
        g.n(),
        g.edge_count(),
        blocks.len()
    );
    Ok(())
}
