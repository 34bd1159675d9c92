//! Minibatch GraphSAGE over decoded code embeddings.
//!
//! Node features never exist as a stored matrix: every batch decodes its
//! codes on the fly and gradients flow back through the decoder (and into
//! the codebooks under the full variant). Two hops, mean aggregation,
//! `k` neighbors sampled with replacement per hop, linear output layer.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codes::CodeMatrix;
use crate::decoder::{apply_grads, decode_batch, init_decoder, DecoderConfig, DecoderNodes, DecoderParams};
use crate::error::{Error, Result};
use crate::seeds::derive;
use crate::tensor_nn::{AdamWConfig, AdamWState, Graph, NodeId, Scalar};

// Sub-seed streams under `SageConfig::seed`.
const SAGE_INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

/// Undirected adjacency lists: sorted, deduplicated, symmetric, and with
/// self-loops dropped (a node re-enters its own representation through
/// the concatenated self features, not its neighbor sample).
pub struct GraphStore {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl GraphStore {
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Range(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }
}

/// For each node, `k` uniform draws with replacement from its adjacency
/// list; an isolated node draws itself `k` times. Node ids must be in
/// range.
pub fn sample_neighbors(g: &GraphStore, nodes: &[u32], k: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut out = Vec::with_capacity(nodes.len() * k);
    for &v in nodes {
        let adj = g.neighbors(v);
        if adj.is_empty() {
            out.extend(std::iter::repeat(v).take(k));
        } else {
            out.extend((0..k).map(|_| adj[rng.random_range(0..adj.len())]));
        }
    }
    out
}

/// Two-layer GraphSAGE hyperparameters. Depth is fixed at two hops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SageConfig {
    pub hidden: usize,
    pub classes: usize,
    /// Neighbors sampled per hop.
    pub k: usize,
    pub seed: u64,
}

impl SageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.k == 0 {
            return Err(Error::Domain("hidden width and k must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Domain(format!(
                "classification needs >= 2 classes, got {}",
                self.classes
            )));
        }
        Ok(())
    }
}

/// Layer weights act on `[aggregated ‖ self]`, so layer 1 reads `2*d_e`
/// columns and layer 2 reads `2*hidden`; the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct SageParams<T> {
    pub cfg: SageConfig,
    pub d_e: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub w_out: Vec<T>,
    pub b_out: Vec<T>,
}

pub struct SageNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub w_out: NodeId,
    pub b_out: NodeId,
}

pub fn init_sage<T: Scalar>(cfg: &SageConfig, d_e: usize) -> Result<SageParams<T>> {
    cfg.validate()?;
    if d_e == 0 {
        return Err(Error::Domain("feature width d_e must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, SAGE_INIT_STREAM));
    let mut xavier = |input: usize, output: usize| -> Vec<T> {
        let limit = (6.0 / (input + output) as f64).sqrt();
        (0..input * output)
            .map(|_| T::from_f64(rng.random::<f64>() * 2.0 * limit - limit))
            .collect()
    };
    Ok(SageParams {
        cfg: *cfg,
        d_e,
        w1: xavier(2 * d_e, cfg.hidden),
        b1: vec![T::zero(); cfg.hidden],
        w2: xavier(2 * cfg.hidden, cfg.hidden),
        b2: vec![T::zero(); cfg.hidden],
        w_out: xavier(cfg.hidden, cfg.classes),
        b_out: vec![T::zero(); cfg.classes],
    })
}

impl<T: Scalar> SageParams<T> {
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }

    pub fn trainable_sizes(&self) -> Vec<usize> {
        vec![
            self.w1.len(),
            self.b1.len(),
            self.w2.len(),
            self.b2.len(),
            self.w_out.len(),
            self.b_out.len(),
        ]
    }

    pub fn insert(&self, g: &mut Graph<T>) -> Result<SageNodes> {
        let (h, kls) = (self.cfg.hidden, self.cfg.classes);
        Ok(SageNodes {
            w1: g.tensor_new([2 * self.d_e, h], self.w1.clone(), true)?,
            b1: g.tensor_new([1, h], self.b1.clone(), true)?,
            w2: g.tensor_new([2 * h, h], self.w2.clone(), true)?,
            b2: g.tensor_new([1, h], self.b2.clone(), true)?,
            w_out: g.tensor_new([h, kls], self.w_out.clone(), true)?,
            b_out: g.tensor_new([1, kls], self.b_out.clone(), true)?,
        })
    }
}

impl SageNodes {
    /// Leaf ids in the same order as [`SageParams::trainable_mut`].
    pub fn trainable_ids(&self) -> Vec<NodeId> {
        vec![self.w1, self.b1, self.w2, self.b2, self.w_out, self.b_out]
    }
}

/// One minibatch worth of node ids: the batch itself, `k` first
/// neighbors per batch node, and `k` second neighbors per first
/// neighbor.
pub struct SageBatch {
    pub nodes: Vec<u32>,
    pub first: Vec<u32>,
    pub second: Vec<u32>,
    pub k: usize,
}

impl SageBatch {
    pub fn sample(g: &GraphStore, nodes: &[u32], k: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if nodes.is_empty() || k == 0 {
            return Err(Error::Domain("batch needs nodes and k >= 1".into()));
        }
        for &v in nodes {
            if v as usize >= g.n_nodes() {
                return Err(Error::Range(format!(
                    "node {v} out of range for {} nodes",
                    g.n_nodes()
                )));
            }
        }
        let first = sample_neighbors(g, nodes, k, rng);
        let second = sample_neighbors(g, &first, k, rng);
        Ok(Self { nodes: nodes.to_vec(), first, second, k })
    }
}

/// `ReLU(W · [aggregated ‖ self] + b)`.
pub fn sage_layer<T: Scalar>(
    g: &mut Graph<T>,
    w: NodeId,
    b: NodeId,
    h_agg: NodeId,
    h_self: NodeId,
) -> Result<NodeId> {
    let cat = g.concat_cols(h_agg, h_self)?;
    let a = g.affine(cat, w, b)?;
    g.relu(a)
}

/// Decode the batch's three node lists and run both hops; returns
/// `[batch, classes]` logits, differentiable end to end.
pub fn forward_batch<T: Scalar>(
    g: &mut Graph<T>,
    batch: &SageBatch,
    codes: &CodeMatrix,
    dec: &DecoderNodes,
    sage: &SageNodes,
) -> Result<NodeId> {
    if batch.first.len() != batch.nodes.len() * batch.k
        || batch.second.len() != batch.first.len() * batch.k
    {
        return Err(Error::Shape(format!(
            "batch of {} nodes with k={} carries {} first / {} second neighbors",
            batch.nodes.len(),
            batch.k,
            batch.first.len(),
            batch.second.len()
        )));
    }
    let x_nodes = decode_batch(g, dec, codes, &batch.nodes)?;
    let x_first = decode_batch(g, dec, codes, &batch.first)?;
    let x_second = decode_batch(g, dec, codes, &batch.second)?;

    let agg_second = g.group_mean(x_second, batch.k)?;
    let h1_first = sage_layer(g, sage.w1, sage.b1, agg_second, x_first)?;
    let agg_first = g.group_mean(x_first, batch.k)?;
    let h1_nodes = sage_layer(g, sage.w1, sage.b1, agg_first, x_nodes)?;

    let agg_h1 = g.group_mean(h1_first, batch.k)?;
    let h2 = sage_layer(g, sage.w2, sage.b2, agg_h1, h1_nodes)?;
    g.affine(h2, sage.w_out, sage.b_out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// `(k, hit@k)` pairs in the order requested.
    pub hits: Vec<(usize, f64)>,
}

/// Accuracy and hit@k under a shared tie rule: ties rank by lowest class
/// id, so a class beats the label only with a strictly higher logit or
/// an equal logit and smaller id. hit@1 is accuracy by construction.
pub fn evaluate(logits: &[f64], labels: &[u32], classes: usize, ks: &[usize]) -> Result<Metrics> {
    if classes == 0 || labels.is_empty() {
        return Err(Error::Domain("evaluation needs rows and classes".into()));
    }
    if logits.len() != labels.len() * classes {
        return Err(Error::Shape(format!(
            "{} logits for {} rows of {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    for &k in ks {
        if k == 0 || k > classes {
            return Err(Error::Domain(format!("hit@{k} undefined for {classes} classes")));
        }
    }
    let mut correct = 0usize;
    let mut hit_counts = vec![0usize; ks.len()];
    for (r, &label) in labels.iter().enumerate() {
        let label = label as usize;
        if label >= classes {
            return Err(Error::Range(format!("label {label} out of range for {classes} classes")));
        }
        let row = &logits[r * classes..(r + 1) * classes];
        let lv = row[label];
        let beats = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| j != label && (v > lv || (v == lv && j < label)))
            .count();
        if beats == 0 {
            correct += 1;
        }
        for (slot, &k) in hit_counts.iter_mut().zip(ks) {
            if beats < k {
                *slot += 1;
            }
        }
    }
    let n = labels.len();
    Ok(Metrics {
        n,
        accuracy: correct as f64 / n as f64,
        hits: ks.iter().zip(hit_counts).map(|(&k, c)| (k, c as f64 / n as f64)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: Vec<u32>,
}

impl Splits {
    /// Seeded shuffle of `0..n` cut into train/valid/test blocks; the
    /// test block takes whatever the two fractions leave over.
    pub fn random(n: usize, train_frac: f64, valid_frac: f64, seed: u64) -> Result<Self> {
        if !(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0) {
            return Err(Error::Domain(format!(
                "fractions train={train_frac}, valid={valid_frac} must be positive and sum below 1"
            )));
        }
        if n < 3 || n > u32::MAX as usize {
            return Err(Error::Domain(format!("cannot split {n} nodes three ways")));
        }
        let mut ids: Vec<u32> = (0..n as u32).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64 * train_frac) as usize).max(1);
        let n_valid = ((n as f64 * valid_frac) as usize).max(1);
        if n_train + n_valid >= n {
            return Err(Error::Domain(format!(
                "fractions leave no test nodes out of {n}"
            )));
        }
        let test = ids.split_off(n_train + n_valid);
        let valid = ids.split_off(n_train);
        Ok(Splits { train: ids, valid, test })
    }

    /// Every split non-empty, ids in range, no node in two splits.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, ids) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            if ids.is_empty() {
                return Err(Error::Config(format!("{name} split is empty")));
            }
            for &id in ids {
                if id as usize >= n {
                    return Err(Error::Range(format!("{name} split mentions node {id}, graph has {n}")));
                }
                if !seen.insert(id) {
                    return Err(Error::Config(format!("node {id} appears in two splits")));
                }
            }
        }
        Ok(())
    }
}

/// Labels file: `node_id label_id` per line, `#` comments. Every node in
/// `0..n` must be covered exactly once.
pub fn load_labels(path: &Path, n: usize) -> Result<Vec<u32>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels: Vec<Option<u32>> = vec![None; n];
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(Error::parse(lineno, format!("expected \"node label\", got {line:?}"))),
        };
        let node: usize = a.parse().map_err(|e| Error::parse(lineno, format!("bad node id: {e}")))?;
        let label: u32 = b.parse().map_err(|e| Error::parse(lineno, format!("bad label: {e}")))?;
        if node >= n {
            return Err(Error::parse(lineno, format!("node {node} out of range for {n} nodes")));
        }
        if labels[node].replace(label).is_some() {
            return Err(Error::parse(lineno, format!("node {node} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| Error::Config(format!("node {v} has no label"))))
        .collect()
}

/// Splits file: `node_id train|valid|test` per line, `#` comments. Nodes
/// may be left out (they are simply never evaluated).
pub fn load_splits(path: &Path, n: usize) -> Result<Splits> {
    let text = std::fs::read_to_string(path)?;
    let mut splits = Splits { train: Vec::new(), valid: Vec::new(), test: Vec::new() };
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(Error::parse(lineno, format!("expected \"node split\", got {line:?}"))),
        };
        let node: u32 = a.parse().map_err(|e| Error::parse(lineno, format!("bad node id: {e}")))?;
        if node as usize >= n {
            return Err(Error::parse(lineno, format!("node {node} out of range for {n} nodes")));
        }
        if !seen.insert(node) {
            return Err(Error::parse(lineno, format!("node {node} assigned twice")));
        }
        match b {
            "train" => splits.train.push(node),
            "valid" => splits.valid.push(node),
            "test" => splits.test.push(node),
            other => return Err(Error::parse(lineno, format!("unknown split {other:?}"))),
        }
    }
    Ok(splits)
}

#[derive(Clone, Debug)]
pub struct NodeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Evaluation re-samples neighborhoods from this seed every time, so
    /// metrics are reproducible and comparable across epochs.
    pub eval_seed: u64,
    pub hit_ks: Vec<usize>,
}

impl Default for NodeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 256,
            optimizer: AdamWConfig { lr: 0.01, weight_decay: 0.0, ..AdamWConfig::default() },
            eval_seed: 0,
            hit_ks: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpochStat {
    pub train_loss: f64,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochStat>,
    pub best_epoch: usize,
    /// Test metrics at the epoch with the highest validation accuracy
    /// (earliest epoch wins ties).
    pub test_at_best: Metrics,
}

pub struct NodeTrainOutcome {
    pub decoder: DecoderParams<f32>,
    pub sage: SageParams<f32>,
    pub report: TrainReport,
}

/// End-to-end node classification: decoder and GraphSAGE train jointly
/// under cross-entropy with AdamW.
pub fn train_node_classification(
    store: &GraphStore,
    codes: &CodeMatrix,
    labels: &[u32],
    splits: &Splits,
    dcfg: &DecoderConfig,
    scfg: &SageConfig,
    tcfg: &NodeTrainConfig,
) -> Result<NodeTrainOutcome> {
    let n = store.n_nodes();
    if codes.n != n || labels.len() != n {
        return Err(Error::Shape(format!(
            "graph has {n} nodes, {} codes, {} labels",
            codes.n,
            labels.len()
        )));
    }
    scfg.validate()?;
    splits.validate(n)?;
    if labels.iter().any(|&l| l as usize >= scfg.classes) {
        return Err(Error::Range(format!("labels exceed {} classes", scfg.classes)));
    }
    if tcfg.epochs == 0 || tcfg.batch_size == 0 {
        return Err(Error::Domain("epochs and batch size must be positive".into()));
    }

    let mut dec: DecoderParams<f32> = init_decoder(dcfg)?;
    let mut sage: SageParams<f32> = init_sage(scfg, dcfg.d_e)?;
    let sizes: Vec<usize> = dec.trainable_sizes().into_iter().chain(sage.trainable_sizes()).collect();
    let mut state = AdamWState::new(&sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(derive(scfg.seed, TRAIN_STREAM));
    let mut order = splits.train.clone();
    let mut epochs = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let batch = SageBatch::sample(store, chunk, scfg.k, &mut rng)?;
            let mut g: Graph<f32> = Graph::new();
            let dn = dec.insert(&mut g)?;
            let sn = sage.insert(&mut g)?;
            let logits = forward_batch(&mut g, &batch, codes, &dn, &sn)?;
            let batch_labels: Vec<u32> = chunk.iter().map(|&v| labels[v as usize]).collect();
            let loss = g.cross_entropy(logits, &batch_labels)?;
            epoch_loss += g.value(loss)[0] as f64 * chunk.len() as f64;
            g.backward(loss)?;

            let ids: Vec<NodeId> = dn.trainable_ids().into_iter().chain(sn.trainable_ids()).collect();
            let mut params = dec.trainable_mut();
            params.extend(sage.trainable_mut());
            apply_grads(&mut g, &ids, &mut params, &mut state, &tcfg.optimizer)?;
        }
        let train_loss = epoch_loss / splits.train.len() as f64;
        let val = eval_nodes(store, codes, &dec, &sage, &splits.valid, labels, tcfg)?;
        let test = eval_nodes(store, codes, &dec, &sage, &splits.test, labels, tcfg)?;
        if best.map_or(true, |(_, b)| val.accuracy > b) {
            best = Some((epoch, val.accuracy));
        }
        epochs.push(EpochStat { train_loss, val, test });
    }

    let best_epoch = best.expect("epochs >= 1").0;
    let test_at_best = epochs[best_epoch].test.clone();
    Ok(NodeTrainOutcome {
        decoder: dec,
        sage,
        report: TrainReport { epochs, best_epoch, test_at_best },
    })
}

/// Metrics for one node list, resampling neighborhoods from
/// `tcfg.eval_seed` so repeated calls agree.
pub fn eval_nodes(
    store: &GraphStore,
    codes: &CodeMatrix,
    dec: &DecoderParams<f32>,
    sage: &SageParams<f32>,
    ids: &[u32],
    labels: &[u32],
    tcfg: &NodeTrainConfig,
) -> Result<Metrics> {
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.eval_seed);
    let mut logits = Vec::with_capacity(ids.len() * sage.cfg.classes);
    for chunk in ids.chunks(tcfg.batch_size) {
        let batch = SageBatch::sample(store, chunk, sage.cfg.k, &mut rng)?;
        let mut g: Graph<f32> = Graph::new();
        let dn = dec.insert(&mut g)?;
        let sn = sage.insert(&mut g)?;
        let out = forward_batch(&mut g, &batch, codes, &dn, &sn)?;
        logits.extend(g.value(out).iter().map(|&x| x as f64));
    }
    let split_labels: Vec<u32> = ids.iter().map(|&v| labels[v as usize]).collect();
    evaluate(&logits, &split_labels, sage.cfg.classes, &tcfg.hit_ks)
}
