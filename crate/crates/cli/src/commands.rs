//! One function per subcommand. Each resolves its settings (flags over
//! config file over defaults), prints the resolved line, runs the
//! library call, and prints a short machine-greppable summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;

use gecc::codes::{
    load_codes, memory_report, mib, ratio_2dp, round_2dp, save_codes, CodeMatrix, DecoderVariant,
    MemoryReport, MemorySpec, ThresholdMode,
};
use gecc::decoder::{save_checkpoint, DecoderConfig, DecoderParams};
use gecc::encoder::{collision_experiment, encode, random_codes, EncoderConfig};
use gecc::gnn::{load_labels, load_splits, GraphStore, NodeTrainConfig, SageConfig, Splits};
use gecc::seeds::derive;
use gecc::sparse::{load_edge_pairs, CsrMatrix, DenseFileSource, DenseMatrix, RowSource};
use gecc::synth::{gen_cluster_embeddings, gen_sbm, ClusterEmbConfig, SbmConfig};
use gecc::tensor_nn::AdamWConfig;
use gecc::{Error, Result};

use crate::config::{
    parse_threshold, parse_variant, require, require_path, resolve, resolve_path, threshold_name,
    variant_name, FileConfig, Resolved,
};

/// Signature-matrix input shared by `encode` and `collisions`: either an
/// edge list (rows = adjacency vectors) or a GEF32 matrix (rows =
/// embedding vectors), optionally streamed from disk.
#[derive(Args)]
pub struct InputArgs {
    /// Edge-list file: two node ids per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// GEF32 dense matrix file.
    #[arg(long)]
    dense: Option<PathBuf>,
    /// Node count override for --edges (default: max id + 1).
    #[arg(long)]
    nodes: Option<usize>,
    /// Re-read --dense from disk per pass instead of loading it.
    #[arg(long)]
    stream: bool,
}

fn resolve_input(
    args: InputArgs,
    fc: &mut FileConfig,
    res: &mut Resolved,
) -> Result<Box<dyn RowSource>> {
    let edges = resolve_path(args.edges, fc, "edges")?;
    let dense = resolve_path(args.dense, fc, "dense")?;
    let nodes = args.nodes.or(fc.take("nodes")?);
    let stream = args.stream || fc.take::<bool>("stream")?.unwrap_or(false);
    match (edges, dense) {
        (Some(_), Some(_)) => Err(Error::Config("pass either --edges or --dense, not both".into())),
        (None, None) => Err(Error::Config("an input is required: --edges or --dense".into())),
        (Some(path), None) => {
            if stream {
                return Err(Error::Config("--stream applies only to --dense input".into()));
            }
            let pairs = load_edge_pairs(&path)?;
            let n = nodes.unwrap_or_else(|| {
                pairs.iter().map(|&(u, v)| u.max(v) as usize + 1).max().unwrap_or(0)
            });
            res.put_path("edges", &path);
            res.put("nodes", n);
            Ok(Box::new(CsrMatrix::from_undirected_pairs(n, &pairs)?))
        }
        (None, Some(path)) => {
            if nodes.is_some() {
                return Err(Error::Config("--nodes applies only to --edges input".into()));
            }
            res.put_path("dense", &path);
            res.put("stream", stream);
            if stream {
                Ok(Box::new(DenseFileSource::open(&path)?))
            } else {
                Ok(Box::new(DenseMatrix::load(&path)?))
            }
        }
    }
}

#[derive(Args)]
pub struct EncodeArgs {
    /// Config file, `key = value` per line; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    /// Code cardinality; power of two.
    #[arg(long)]
    c: Option<u32>,
    /// Code length.
    #[arg(long)]
    m: Option<u32>,
    /// zero | median | random.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output GECC code file.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let mut res = Resolved::new("encode");
    let src = resolve_input(args.input, &mut fc, &mut res)?;
    let c = require::<u32>(args.c, &mut fc, "c")?;
    let m = require::<u32>(args.m, &mut fc, "m")?;
    let threshold = parse_threshold(&resolve(args.threshold, &mut fc, "threshold", "median".into())?)?;
    let seed = resolve(args.seed, &mut fc, "seed", 42)?;
    let out = require_path(args.out, &mut fc, "out")?;
    fc.finish()?;
    res.put("c", c);
    res.put("m", m);
    res.put("threshold", threshold_name(threshold));
    res.put("seed", seed);
    res.put_path("out", &out);
    res.print();

    let cfg = EncoderConfig { c, m, threshold, seed };
    let start = Instant::now();
    let codes = match threshold {
        ThresholdMode::RandomBaseline => random_codes(src.n_rows(), &cfg)?,
        _ => encode(src.as_ref(), &cfg)?,
    };
    save_codes(&out, &codes, seed, threshold)?;
    println!(
        "encoded n={} bits_per_code={} code_bytes={} elapsed_ms={}",
        codes.n,
        codes.n_bits(),
        codes.n * codes.row_bytes(),
        start.elapsed().as_millis()
    );
    Ok(())
}

#[derive(Args)]
pub struct CollisionsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    /// Bits per code (codes are binary, so m = bits).
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV: trial,median_collisions,zero_collisions.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_collisions(args: CollisionsArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let mut res = Resolved::new("collisions");
    let src = resolve_input(args.input, &mut fc, &mut res)?;
    let bits = resolve(args.bits, &mut fc, "bits", 16)?;
    let trials = resolve(args.trials, &mut fc, "trials", 100)?;
    let seed = resolve(args.seed, &mut fc, "seed", 42)?;
    let out = require_path(args.out, &mut fc, "out")?;
    fc.finish()?;
    res.put("bits", bits);
    res.put("trials", trials);
    res.put("seed", seed);
    res.put_path("out", &out);
    res.print();

    let rows = collision_experiment(src.as_ref(), bits, trials, seed)?;
    let mut w = BufWriter::new(File::create(&out)?);
    writeln!(w, "trial,median_collisions,zero_collisions")?;
    for r in &rows {
        writeln!(w, "{},{},{}", r.trial, r.median_collisions, r.zero_collisions)?;
    }
    w.flush()?;
    let mean = |f: fn(&gecc::encoder::CollisionTrial) -> usize| {
        rows.iter().map(|r| f(r) as f64).sum::<f64>() / rows.len() as f64
    };
    println!(
        "collisions trials={} mean_median={:.2} mean_zero={:.2}",
        rows.len(),
        mean(|r| r.median_collisions),
        mean(|r| r.zero_collisions)
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainReconArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// GECC code file to decode from.
    #[arg(long)]
    codes: Option<PathBuf>,
    /// GEF32 target embeddings; row count must match the codes.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// light | full.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    d_c: Option<usize>,
    #[arg(long)]
    d_m: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint manifest path (data lands next to it as <out>.bin).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch CSV loss log.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

pub fn cmd_train_recon(args: TrainReconArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let codes_path = require_path(args.codes, &mut fc, "codes")?;
    let targets_path = require_path(args.targets, &mut fc, "targets")?;
    let variant = parse_variant(&resolve(args.variant, &mut fc, "variant", "full".into())?)?;
    let d_c = resolve(args.d_c, &mut fc, "d_c", 512)?;
    let d_m = resolve(args.d_m, &mut fc, "d_m", 512)?;
    let layers = resolve(args.layers, &mut fc, "layers", 3)?;
    let epochs = resolve(args.epochs, &mut fc, "epochs", 1024)?;
    let batch_size = resolve(args.batch_size, &mut fc, "batch_size", 512)?;
    let lr = resolve(args.lr, &mut fc, "lr", 1e-3)?;
    let beta1 = resolve(args.beta1, &mut fc, "beta1", 0.9)?;
    let beta2 = resolve(args.beta2, &mut fc, "beta2", 0.999)?;
    let weight_decay = resolve(args.weight_decay, &mut fc, "weight_decay", 0.01)?;
    let seed = resolve(args.seed, &mut fc, "seed", 42)?;
    let out = require_path(args.out, &mut fc, "out")?;
    let loss_log = require_path(args.loss_log, &mut fc, "loss_log")?;
    fc.finish()?;

    let (codes, _, _) = load_codes(&codes_path)?;
    let targets = DenseMatrix::load(&targets_path)?;
    if codes.n != targets.rows {
        return Err(Error::Config(format!(
            "{} codes but {} target rows",
            codes.n, targets.rows
        )));
    }

    let mut res = Resolved::new("train-recon");
    res.put_path("codes", &codes_path);
    res.put_path("targets", &targets_path);
    res.put("variant", variant_name(variant));
    res.put("c", codes.c);
    res.put("m", codes.m);
    res.put("d_c", d_c);
    res.put("d_m", d_m);
    res.put("d_e", targets.cols);
    res.put("layers", layers);
    res.put("epochs", epochs);
    res.put("batch_size", batch_size);
    res.put("lr", lr);
    res.put("beta1", beta1);
    res.put("beta2", beta2);
    res.put("weight_decay", weight_decay);
    res.put("seed", seed);
    res.put_path("out", &out);
    res.put_path("loss_log", &loss_log);
    res.print();

    let dcfg = DecoderConfig {
        variant,
        c: codes.c,
        m: codes.m,
        d_c,
        d_m,
        d_e: targets.cols,
        layers,
        seed,
    };
    let tcfg = gecc::decoder::ReconTrainConfig {
        epochs,
        batch_size,
        optimizer: AdamWConfig { lr, beta1, beta2, weight_decay, ..AdamWConfig::default() },
    };
    let (params, losses) = gecc::decoder::train_reconstruction(&codes, &targets, &dcfg, &tcfg)?;

    let mut w = BufWriter::new(File::create(&loss_log)?);
    writeln!(w, "epoch,mse")?;
    for (i, loss) in losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, loss)?;
    }
    w.flush()?;
    save_checkpoint(&params, &out)?;

    let cosine = mean_cosine(&params, &codes, &targets)?;
    println!(
        "trained epochs={} final_mse={:.6e} mean_cosine={:.6}",
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        cosine
    );
    Ok(())
}

/// Mean cosine similarity between decoded rows and their targets; rows
/// whose decoded or target norm is zero contribute zero.
fn mean_cosine(params: &DecoderParams<f32>, codes: &CodeMatrix, targets: &DenseMatrix) -> Result<f64> {
    let d_e = targets.cols;
    let mut sum = 0.0;
    let all: Vec<u32> = (0..codes.n as u32).collect();
    for chunk in all.chunks(1024) {
        let vals = params.decode_values(codes, chunk)?;
        for (bi, &r) in chunk.iter().enumerate() {
            let a = &vals[bi * d_e..(bi + 1) * d_e];
            let b = targets.row(r as usize);
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            for (&x, &y) in a.iter().zip(b) {
                dot += x as f64 * y as f64;
                na += (x as f64).powi(2);
                nb += (y as f64).powi(2);
            }
            if na > 0.0 && nb > 0.0 {
                sum += dot / (na.sqrt() * nb.sqrt());
            }
        }
    }
    Ok(sum / codes.n as f64)
}

#[derive(Args)]
pub struct TrainNodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    codes: Option<PathBuf>,
    /// Labels file: `node_id label_id` per line, every node covered.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Splits file: `node_id train|valid|test` per line.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// light | full.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    d_c: Option<usize>,
    #[arg(long)]
    d_m: Option<usize>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Neighbors sampled per hop.
    #[arg(long)]
    k: Option<usize>,
    /// Class count (default: max label + 1).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated hit@k thresholds. Defaults to 5,10,20 with
    /// values above the class count dropped; explicit values are not
    /// clamped and must fit.
    #[arg(long)]
    hit_ks: Option<String>,
}

pub fn cmd_train_node(args: TrainNodeArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let edges_path = require_path(args.edges, &mut fc, "edges")?;
    let codes_path = require_path(args.codes, &mut fc, "codes")?;
    let labels_path = require_path(args.labels, &mut fc, "labels")?;
    let splits_path = require_path(args.splits, &mut fc, "splits")?;
    let variant = parse_variant(&resolve(args.variant, &mut fc, "variant", "full".into())?)?;
    let d_c = resolve(args.d_c, &mut fc, "d_c", 512)?;
    let d_m = resolve(args.d_m, &mut fc, "d_m", 512)?;
    let d_e = resolve(args.d_e, &mut fc, "d_e", 64)?;
    let layers = resolve(args.layers, &mut fc, "layers", 3)?;
    let hidden = resolve(args.hidden, &mut fc, "hidden", 128)?;
    let k = resolve(args.k, &mut fc, "k", 15)?;
    let classes_flag = args.classes.or(fc.take("classes")?);
    let epochs = resolve(args.epochs, &mut fc, "epochs", 10)?;
    let batch_size = resolve(args.batch_size, &mut fc, "batch_size", 256)?;
    let lr = resolve(args.lr, &mut fc, "lr", 0.01)?;
    let beta1 = resolve(args.beta1, &mut fc, "beta1", 0.9)?;
    let beta2 = resolve(args.beta2, &mut fc, "beta2", 0.999)?;
    let weight_decay = resolve(args.weight_decay, &mut fc, "weight_decay", 0.0)?;
    let seed = resolve(args.seed, &mut fc, "seed", 42)?;
    let hit_ks_flag = args.hit_ks.or(fc.take("hit_ks")?);
    fc.finish()?;

    let (codes, _, _) = load_codes(&codes_path)?;
    let n = codes.n;
    let pairs = load_edge_pairs(&edges_path)?;
    let store = GraphStore::from_edges(n, &pairs)?;
    let labels = load_labels(&labels_path, n)?;
    let splits = load_splits(&splits_path, n)?;

    let min_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let classes = classes_flag.unwrap_or(min_classes).max(2);
    let hit_ks = match hit_ks_flag {
        Some(s) => parse_hit_ks(&s)?,
        None => [5, 10, 20].into_iter().filter(|&k| k <= classes).collect(),
    };

    let mut res = Resolved::new("train-node");
    res.put_path("edges", &edges_path);
    res.put_path("codes", &codes_path);
    res.put_path("labels", &labels_path);
    res.put_path("splits", &splits_path);
    res.put("variant", variant_name(variant));
    res.put("c", codes.c);
    res.put("m", codes.m);
    res.put("d_c", d_c);
    res.put("d_m", d_m);
    res.put("d_e", d_e);
    res.put("layers", layers);
    res.put("hidden", hidden);
    res.put("k", k);
    res.put("classes", classes);
    res.put("epochs", epochs);
    res.put("batch_size", batch_size);
    res.put("lr", lr);
    res.put("beta1", beta1);
    res.put("beta2", beta2);
    res.put("weight_decay", weight_decay);
    res.put("seed", seed);
    res.put("hit_ks", hit_ks.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    res.print();

    let dcfg = DecoderConfig {
        variant,
        c: codes.c,
        m: codes.m,
        d_c,
        d_m,
        d_e,
        layers,
        seed: derive(seed, 0),
    };
    let scfg = SageConfig { hidden, classes, k, seed: derive(seed, 1) };
    let tcfg = NodeTrainConfig {
        epochs,
        batch_size,
        optimizer: AdamWConfig { lr, beta1, beta2, weight_decay, ..AdamWConfig::default() },
        eval_seed: derive(seed, 2),
        hit_ks,
    };
    let out = gecc::gnn::train_node_classification(&store, &codes, &labels, &splits, &dcfg, &scfg, &tcfg)?;

    for (i, e) in out.report.epochs.iter().enumerate() {
        println!("epoch={} train_loss={:.6} val_acc={:.4}", i + 1, e.train_loss, e.val.accuracy);
    }
    let best = &out.report.test_at_best;
    let mut line = format!(
        "best_epoch={} test_accuracy={:.4}",
        out.report.best_epoch + 1,
        best.accuracy
    );
    for &(k, rate) in &best.hits {
        line.push_str(&format!(" hit@{k}={rate:.4}"));
    }
    println!("{line}");
    Ok(())
}

fn parse_hit_ks(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad hit_ks entry {t:?}: {e}")))
        })
        .collect()
}

#[derive(Args)]
pub struct MemReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Entity count.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    d_e: Option<u32>,
    #[arg(long)]
    float_bits: Option<u32>,
    #[arg(long)]
    c: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    d_c: Option<u32>,
    #[arg(long)]
    d_m: Option<u32>,
    #[arg(long)]
    layers: Option<u32>,
    /// Count MLP biases as parameters.
    #[arg(long)]
    include_biases: bool,
}

pub fn cmd_mem_report(args: MemReportArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let n = require::<u64>(args.n, &mut fc, "n")?;
    let d_e = require::<u32>(args.d_e, &mut fc, "d_e")?;
    let float_bits = resolve(args.float_bits, &mut fc, "float_bits", 32)?;
    let c = require::<u32>(args.c, &mut fc, "c")?;
    let m = require::<u32>(args.m, &mut fc, "m")?;
    let d_c = resolve(args.d_c, &mut fc, "d_c", 512)?;
    let d_m = resolve(args.d_m, &mut fc, "d_m", 512)?;
    let layers = resolve(args.layers, &mut fc, "layers", 3)?;
    let include_biases =
        args.include_biases || fc.take::<bool>("include_biases")?.unwrap_or(false);
    fc.finish()?;

    let mut res = Resolved::new("mem-report");
    res.put("n", n);
    res.put("d_e", d_e);
    res.put("float_bits", float_bits);
    res.put("c", c);
    res.put("m", m);
    res.put("d_c", d_c);
    res.put("d_m", d_m);
    res.put("layers", layers);
    res.put("include_biases", include_biases);
    res.print();

    let spec = |variant| MemorySpec {
        n,
        d_e,
        float_bits,
        c,
        m,
        d_c,
        d_m,
        layers,
        variant,
        include_biases,
    };
    let light = memory_report(&spec(DecoderVariant::Light))?;
    let full = memory_report(&spec(DecoderVariant::Full))?;

    let fmt_size = |bytes: u64| format!("{:.2}", round_2dp(mib(bytes)));
    let fmt_ratio = |r: f64| format!("{:.2}", ratio_2dp(r));
    let row = |name: &str, r: &MemoryReport| {
        println!(
            "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
            name,
            fmt_size(r.code_bytes),
            fmt_size(r.cpu_bytes - r.code_bytes),
            fmt_size(r.cpu_bytes),
            fmt_size(r.gpu_bytes),
            fmt_ratio(r.gpu_ratio),
            fmt_size(r.cpu_bytes + r.gpu_bytes),
            fmt_ratio(r.total_ratio),
        );
    };
    println!(
        "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "method", "cpu_codes", "cpu_frozen", "cpu_total", "gpu", "gpu_ratio", "total", "total_ratio"
    );
    println!(
        "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "raw",
        "0.00",
        "0.00",
        "0.00",
        fmt_size(light.raw_embedding_bytes),
        "1.00",
        fmt_size(light.raw_embedding_bytes),
        "1.00"
    );
    row("light", &light);
    row("full", &full);
    Ok(())
}

#[derive(Args)]
pub struct SynthSbmArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    communities: Option<usize>,
    #[arg(long)]
    nodes_per_community: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    edges_out: Option<PathBuf>,
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Also write a train/valid/test assignment.
    #[arg(long)]
    splits_out: Option<PathBuf>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    valid_frac: Option<f64>,
}

pub fn cmd_synth_sbm(args: SynthSbmArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let communities = require(args.communities, &mut fc, "communities")?;
    let nodes_per_community = require(args.nodes_per_community, &mut fc, "nodes_per_community")?;
    let p_in = require(args.p_in, &mut fc, "p_in")?;
    let p_out = require(args.p_out, &mut fc, "p_out")?;
    let seed = resolve(args.seed, &mut fc, "seed", 42)?;
    let edges_out = require_path(args.edges_out, &mut fc, "edges_out")?;
    let labels_out = require_path(args.labels_out, &mut fc, "labels_out")?;
    let splits_out = resolve_path(args.splits_out, &mut fc, "splits_out")?;
    let train_frac = resolve(args.train_frac, &mut fc, "train_frac", 0.7)?;
    let valid_frac = resolve(args.valid_frac, &mut fc, "valid_frac", 0.1)?;
    fc.finish()?;

    let mut res = Resolved::new("synth-sbm");
    res.put("communities", communities);
    res.put("nodes_per_community", nodes_per_community);
    res.put("p_in", p_in);
    res.put("p_out", p_out);
    res.put("seed", seed);
    res.put_path("edges_out", &edges_out);
    res.put_path("labels_out", &labels_out);
    if let Some(p) = &splits_out {
        res.put_path("splits_out", p);
        res.put("train_frac", train_frac);
        res.put("valid_frac", valid_frac);
    }
    res.print();

    let cfg = SbmConfig { communities, nodes_per_community, p_in, p_out, seed };
    let (edges, labels) = gen_sbm(&cfg)?;

    let mut w = BufWriter::new(File::create(&edges_out)?);
    for (u, v) in &edges {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(&labels_out)?);
    for (v, l) in labels.iter().enumerate() {
        writeln!(w, "{v} {l}")?;
    }
    w.flush()?;

    if let Some(path) = &splits_out {
        let splits = Splits::random(labels.len(), train_frac, valid_frac, derive(seed, 1))?;
        write_splits(path, &splits)?;
    }

    println!("generated n={} edges={}", labels.len(), edges.len());
    Ok(())
}

fn write_splits(path: &Path, splits: &Splits) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (name, ids) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        for id in sorted {
            writeln!(w, "{id} {name}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Args)]
pub struct SynthEmbArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    points_per_cluster: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    center_scale: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output GEF32 matrix.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_synth_emb(args: SynthEmbArgs) -> Result<()> {
    let mut fc = FileConfig::load(args.config.as_deref())?;
    let clusters = require(args.clusters, &mut fc, "clusters")?;
    let points_per_cluster = require(args.points_per_cluster, &mut fc, "points_per_cluster")?;
    let dim = require(args.dim, &mut fc, "dim")?;
    let center_scale = resolve(args.center_scale, &mut fc, "center_scale", 1.0)?;
    let noise_scale = resolve(args.noise_scale, &mut fc, "noise_scale", 0.1)?;
    let seed = resolve(args.seed, &mut fc, "seed", 42)?;
    let out = require_path(args.out, &mut fc, "out")?;
    fc.finish()?;

    let mut res = Resolved::new("synth-emb");
    res.put("clusters", clusters);
    res.put("points_per_cluster", points_per_cluster);
    res.put("dim", dim);
    res.put("center_scale", center_scale);
    res.put("noise_scale", noise_scale);
    res.put("seed", seed);
    res.put_path("out", &out);
    res.print();

    let cfg = ClusterEmbConfig {
        clusters,
        points_per_cluster,
        dim,
        center_scale,
        noise_scale,
        seed,
    };
    let x = gen_cluster_embeddings(&cfg)?;
    x.save(&out)?;
    println!("generated rows={} cols={}", x.rows, x.cols);
    Ok(())
}
