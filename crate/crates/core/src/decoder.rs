//! Code-to-embedding decoders.
//!
//! A code selects one row from each of `m` codebooks (`c x d_c` each);
//! the rows are summed and refined through an `layers`-deep MLP
//! (`d_c -> d_m -> ... -> d_m -> d_e`, ReLU between layers). Two variants:
//!
//! * `Light` — codebooks are frozen at their seeded Gaussian init and an
//!   elementwise rescale `w0` (length `d_c`, initialized to ones) in
//!   front of the MLP is trained instead. Frozen codebooks never need to
//!   ship: they regenerate exactly from the config seed.
//! * `Full` — codebooks are trained end to end; no rescale.
//!
//! Training runs in `f32` against mean-squared reconstruction error with
//! AdamW; the same code instantiates at `f64` for gradient checks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::codes::{code_bits, CodeMatrix, DecoderVariant};
use crate::error::{Error, Result};
use crate::seeds::derive;
use crate::sparse::DenseMatrix;
use crate::tensor_nn::{adamw_step, AdamWConfig, AdamWState, Graph, NodeId, Scalar};

// Sub-seed streams under `DecoderConfig::seed`.
const CODEBOOK_STREAM: u64 = 0;
const MLP_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderConfig {
    pub variant: DecoderVariant,
    pub c: u32,
    pub m: u32,
    pub d_c: usize,
    pub d_m: usize,
    pub d_e: usize,
    /// MLP depth; at least 2 (input and output layers).
    pub layers: usize,
    pub seed: u64,
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        code_bits(self.c, self.m)?;
        if self.layers < 2 {
            return Err(Error::Domain(format!(
                "decoder needs at least 2 MLP layers, got {}",
                self.layers
            )));
        }
        if self.d_c == 0 || self.d_m == 0 || self.d_e == 0 {
            return Err(Error::Domain("decoder widths must be positive".into()));
        }
        Ok(())
    }

    /// `(input, output)` width of MLP layer `i`.
    fn layer_dims(&self, i: usize) -> (usize, usize) {
        let input = if i == 0 { self.d_c } else { self.d_m };
        let output = if i + 1 == self.layers { self.d_e } else { self.d_m };
        (input, output)
    }
}

/// Long-lived parameter storage; graphs borrow copies per step.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams<T> {
    pub cfg: DecoderConfig,
    /// `m` codebooks, each `c * d_c` row-major.
    pub codebooks: Vec<Vec<T>>,
    /// Light variant only: elementwise rescale ahead of the MLP.
    pub w0: Option<Vec<T>>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

/// Graph-resident decoder: leaf ids for one training step.
pub struct DecoderNodes {
    pub cfg: DecoderConfig,
    pub codebooks: Vec<NodeId>,
    pub w0: Option<NodeId>,
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

/// Seeded init. Codebook entries are `N(0, 1) / sqrt(d_c)`; MLP weights
/// are uniform in `±sqrt(6 / (in + out))`; biases zero; `w0` ones.
pub fn init_decoder<T: Scalar>(cfg: &DecoderConfig) -> Result<DecoderParams<T>> {
    cfg.validate()?;
    let mut book_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, CODEBOOK_STREAM));
    let scale = 1.0 / (cfg.d_c as f64).sqrt();
    let codebooks: Vec<Vec<T>> = (0..cfg.m)
        .map(|_| {
            (0..cfg.c as usize * cfg.d_c)
                .map(|_| T::from_f64(book_rng.sample::<f64, _>(StandardNormal) * scale))
                .collect()
        })
        .collect();

    let mut mlp_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, MLP_STREAM));
    let mut weights = Vec::with_capacity(cfg.layers);
    let mut biases = Vec::with_capacity(cfg.layers);
    for i in 0..cfg.layers {
        let (input, output) = cfg.layer_dims(i);
        let limit = (6.0 / (input + output) as f64).sqrt();
        weights.push(
            (0..input * output)
                .map(|_| T::from_f64(mlp_rng.random::<f64>() * 2.0 * limit - limit))
                .collect(),
        );
        biases.push(vec![T::zero(); output]);
    }

    let w0 = match cfg.variant {
        DecoderVariant::Light => Some(vec![T::one(); cfg.d_c]),
        DecoderVariant::Full => None,
    };
    Ok(DecoderParams { cfg: *cfg, codebooks, w0, weights, biases })
}

impl<T: Scalar> DecoderParams<T> {
    /// Trainable tensors in canonical order: codebooks (full variant),
    /// then `w0` (light), then weight/bias per layer.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        if matches!(self.cfg.variant, DecoderVariant::Full) {
            out.extend(self.codebooks.iter_mut().map(|b| b.as_mut_slice()));
        }
        if let Some(w0) = self.w0.as_mut() {
            out.push(w0.as_mut_slice());
        }
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn trainable_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if matches!(self.cfg.variant, DecoderVariant::Full) {
            out.extend(self.codebooks.iter().map(Vec::len));
        }
        if let Some(w0) = &self.w0 {
            out.push(w0.len());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.len());
            out.push(b.len());
        }
        out
    }

    /// Actual stored scalar counts `(trainable, non-trainable)`. Biases
    /// are trained but only counted when `include_biases` is set, mirroring
    /// the memory accountant.
    pub fn count_scalars(&self, include_biases: bool) -> (u64, u64) {
        let books: u64 = self.codebooks.iter().map(|b| b.len() as u64).sum();
        let mats: u64 = self.weights.iter().map(|w| w.len() as u64).sum();
        let bias: u64 = if include_biases {
            self.biases.iter().map(|b| b.len() as u64).sum()
        } else {
            0
        };
        let w0: u64 = self.w0.as_ref().map_or(0, |v| v.len() as u64);
        match self.cfg.variant {
            DecoderVariant::Light => (w0 + mats + bias, books),
            DecoderVariant::Full => (books + mats + bias, 0),
        }
    }

    /// Register every parameter as a graph leaf. Codebooks require
    /// gradients only in the full variant.
    pub fn insert(&self, g: &mut Graph<T>) -> Result<DecoderNodes> {
        let train_books = matches!(self.cfg.variant, DecoderVariant::Full);
        let c = self.cfg.c as usize;
        let codebooks = self
            .codebooks
            .iter()
            .map(|b| g.tensor_new([c, self.cfg.d_c], b.clone(), train_books))
            .collect::<Result<Vec<_>>>()?;
        let w0 = self
            .w0
            .as_ref()
            .map(|v| g.tensor_new([1, self.cfg.d_c], v.clone(), true))
            .transpose()?;
        let mut weights = Vec::with_capacity(self.cfg.layers);
        let mut biases = Vec::with_capacity(self.cfg.layers);
        for i in 0..self.cfg.layers {
            let (input, output) = self.cfg.layer_dims(i);
            weights.push(g.tensor_new([input, output], self.weights[i].clone(), true)?);
            biases.push(g.tensor_new([1, output], self.biases[i].clone(), true)?);
        }
        Ok(DecoderNodes { cfg: self.cfg, codebooks, w0, weights, biases })
    }

    /// Decode without keeping a graph around.
    pub fn decode_values(&self, codes: &CodeMatrix, rows: &[u32]) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let nodes = self.insert(&mut g)?;
        let out = decode_batch(&mut g, &nodes, codes, rows)?;
        Ok(g.value(out).to_vec())
    }
}

impl DecoderNodes {
    /// Leaf ids in the same order as [`DecoderParams::trainable_mut`].
    pub fn trainable_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        if matches!(self.cfg.variant, DecoderVariant::Full) {
            out.extend(self.codebooks.iter().copied());
        }
        if let Some(w0) = self.w0 {
            out.push(w0);
        }
        for (&w, &b) in self.weights.iter().zip(&self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Differentiable decode of `rows` from `codes`: gather one row per
/// codebook, sum, rescale (light), then the MLP. Output `[rows, d_e]`.
pub fn decode_batch<T: Scalar>(
    g: &mut Graph<T>,
    dec: &DecoderNodes,
    codes: &CodeMatrix,
    rows: &[u32],
) -> Result<NodeId> {
    if codes.c != dec.cfg.c || codes.m != dec.cfg.m {
        return Err(Error::Domain(format!(
            "codes are (c={}, m={}) but the decoder expects (c={}, m={})",
            codes.c, codes.m, dec.cfg.c, dec.cfg.m
        )));
    }
    if rows.is_empty() {
        return Err(Error::Shape("cannot decode an empty batch".into()));
    }
    let m = codes.m as usize;
    let mut idx = Vec::with_capacity(rows.len() * m);
    for &r in rows {
        if r as usize >= codes.n {
            return Err(Error::Range(format!("row {r} out of range for {} codes", codes.n)));
        }
        idx.extend(codes.code(r as usize));
    }
    let mut h = g.codebook_sum(&dec.codebooks, &idx)?;
    if let Some(w0) = dec.w0 {
        h = g.row_scale(h, w0)?;
    }
    for i in 0..dec.cfg.layers {
        h = g.affine(h, dec.weights[i], dec.biases[i])?;
        if i + 1 < dec.cfg.layers {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug)]
pub struct ReconTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
}

impl Default for ReconTrainConfig {
    fn default() -> Self {
        Self { epochs: 1024, batch_size: 512, optimizer: AdamWConfig::default() }
    }
}

/// Fit a decoder to reproduce `targets` from `codes` under MSE.
/// Returns the trained parameters and the per-epoch mean loss.
pub fn train_reconstruction(
    codes: &CodeMatrix,
    targets: &DenseMatrix,
    dcfg: &DecoderConfig,
    tcfg: &ReconTrainConfig,
) -> Result<(DecoderParams<f32>, Vec<f64>)> {
    if codes.n != targets.rows {
        return Err(Error::Shape(format!(
            "{} codes for {} target rows",
            codes.n, targets.rows
        )));
    }
    if dcfg.d_e != targets.cols {
        return Err(Error::Shape(format!(
            "decoder emits d_e={} but targets have {} columns",
            dcfg.d_e, targets.cols
        )));
    }
    if tcfg.epochs == 0 || tcfg.batch_size == 0 {
        return Err(Error::Domain("epochs and batch size must be positive".into()));
    }

    let mut params: DecoderParams<f32> = init_decoder(dcfg)?;
    let mut state = AdamWState::new(&params.trainable_sizes());
    let mut rng = ChaCha8Rng::seed_from_u64(derive(dcfg.seed, SHUFFLE_STREAM));
    let mut order: Vec<u32> = (0..codes.n as u32).collect();
    let mut losses = Vec::with_capacity(tcfg.epochs);

    for _ in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let mut g = Graph::new();
            let nodes = params.insert(&mut g)?;
            let out = decode_batch(&mut g, &nodes, codes, chunk)?;
            let mut tdata = Vec::with_capacity(chunk.len() * targets.cols);
            for &r in chunk {
                tdata.extend(targets.row(r as usize).iter().copied());
            }
            let tgt = g.constant([chunk.len(), targets.cols], tdata)?;
            let loss = g.mse_loss(out, tgt)?;
            epoch_loss += g.value(loss)[0] as f64 * chunk.len() as f64;
            g.backward(loss)?;
            apply_grads(&mut g, &nodes.trainable_ids(), &mut params.trainable_mut(), &mut state, &tcfg.optimizer)?;
        }
        losses.push(epoch_loss / codes.n as f64);
    }
    Ok((params, losses))
}

/// Pull gradients for `ids` out of `g` (zeros where unreachable) and take
/// one optimizer step on `params`.
pub(crate) fn apply_grads<T: Scalar>(
    g: &mut Graph<T>,
    ids: &[NodeId],
    params: &mut [&mut [T]],
    state: &mut AdamWState<T>,
    cfg: &AdamWConfig,
) -> Result<()> {
    let grads: Vec<Vec<T>> = ids
        .iter()
        .zip(params.iter())
        .map(|(&id, p)| g.grad(id).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); p.len()]))
        .collect();
    let grad_refs: Vec<&[T]> = grads.iter().map(Vec::as_slice).collect();
    adamw_step(params, &grad_refs, state, cfg)
}

/// Write `params` as a text manifest at `path` plus a sibling
/// `<path>.bin` holding one GEF32 record per tensor.
pub fn save_checkpoint(params: &DecoderParams<f32>, path: &Path) -> Result<()> {
    let data_path = checkpoint_data_path(path);
    let data_name = data_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("checkpoint path {path:?} has no file name")))?
        .to_owned();

    let mut data = BufWriter::new(File::create(&data_path)?);
    let mut offset = 0u64;
    let mut lines = Vec::new();
    let mut put = |name: String, rows: usize, cols: usize, body: &[f32], data: &mut BufWriter<File>, offset: &mut u64| -> Result<()> {
        let m = DenseMatrix::from_vec(rows, cols, body.to_vec())?;
        lines.push(format!("tensor {name} {rows} {cols} {offset}"));
        m.write_gef32(data)?;
        *offset += 17 + 4 * body.len() as u64;
        Ok(())
    };

    let cfg = &params.cfg;
    for (j, book) in params.codebooks.iter().enumerate() {
        put(format!("codebook.{j}"), cfg.c as usize, cfg.d_c, book, &mut data, &mut offset)?;
    }
    if let Some(w0) = &params.w0 {
        put("w0".into(), 1, cfg.d_c, w0, &mut data, &mut offset)?;
    }
    for i in 0..cfg.layers {
        let (input, output) = cfg.layer_dims(i);
        put(format!("mlp.w.{i}"), input, output, &params.weights[i], &mut data, &mut offset)?;
        put(format!("mlp.b.{i}"), 1, output, &params.biases[i], &mut data, &mut offset)?;
    }
    data.flush()?;

    let mut manifest = BufWriter::new(File::create(path)?);
    writeln!(manifest, "gecc-decoder 1")?;
    let variant = match cfg.variant {
        DecoderVariant::Light => "light",
        DecoderVariant::Full => "full",
    };
    writeln!(manifest, "variant {variant}")?;
    writeln!(manifest, "c {}", cfg.c)?;
    writeln!(manifest, "m {}", cfg.m)?;
    writeln!(manifest, "d_c {}", cfg.d_c)?;
    writeln!(manifest, "d_m {}", cfg.d_m)?;
    writeln!(manifest, "d_e {}", cfg.d_e)?;
    writeln!(manifest, "layers {}", cfg.layers)?;
    writeln!(manifest, "seed {}", cfg.seed)?;
    writeln!(manifest, "data {data_name}")?;
    for line in lines {
        writeln!(manifest, "{line}")?;
    }
    manifest.flush()?;
    Ok(())
}

fn checkpoint_data_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".bin");
    path.with_file_name(name)
}

pub fn load_checkpoint(path: &Path) -> Result<DecoderParams<f32>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty checkpoint manifest"))?;
    if header != "gecc-decoder 1" {
        return Err(Error::parse(1, format!("unrecognized header {header:?}")));
    }

    let mut fields = std::collections::BTreeMap::new();
    let mut tensors: Vec<(usize, String, usize, usize, u64)> = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["tensor", name, rows, cols, offset] => {
                let parse = |s: &str, what: &str| -> Result<u64> {
                    s.parse::<u64>()
                        .map_err(|e| Error::parse(lineno, format!("bad {what}: {e}")))
                };
                tensors.push((
                    lineno,
                    (*name).to_owned(),
                    parse(rows, "row count")? as usize,
                    parse(cols, "column count")? as usize,
                    parse(offset, "offset")?,
                ));
            }
            [key, value] => {
                if fields.insert((*key).to_owned(), ((*value).to_owned(), lineno)).is_some() {
                    return Err(Error::parse(lineno, format!("duplicate field {key:?}")));
                }
            }
            _ => return Err(Error::parse(lineno, format!("unrecognized line {line:?}"))),
        }
    }

    let mut field = |key: &str| -> Result<(String, usize)> {
        fields
            .remove(key)
            .ok_or_else(|| Error::parse(1, format!("manifest is missing field {key:?}")))
    };
    let (variant_s, vline) = field("variant")?;
    let variant = match variant_s.as_str() {
        "light" => DecoderVariant::Light,
        "full" => DecoderVariant::Full,
        other => return Err(Error::parse(vline, format!("unknown variant {other:?}"))),
    };
    let mut num = |key: &str| -> Result<u64> {
        let (v, lineno) = field(key)?;
        v.parse::<u64>()
            .map_err(|e| Error::parse(lineno, format!("bad {key}: {e}")))
    };
    let cfg = DecoderConfig {
        variant,
        c: num("c")? as u32,
        m: num("m")? as u32,
        d_c: num("d_c")? as usize,
        d_m: num("d_m")? as usize,
        d_e: num("d_e")? as usize,
        layers: num("layers")? as usize,
        seed: num("seed")?,
    };
    cfg.validate()?;
    let (data_name, dline) = field("data")?;
    if let Some((key, (_, lineno))) = fields.into_iter().next() {
        return Err(Error::parse(lineno, format!("unknown field {key:?}")));
    }

    let data_path = path.parent().unwrap_or(Path::new(".")).join(&data_name);
    let mut data = BufReader::new(File::open(&data_path).map_err(|e| {
        Error::parse(dline, format!("cannot open data file {data_name:?}: {e}"))
    })?);

    let mut read_tensor = |name: &str, rows: usize, cols: usize| -> Result<Vec<f32>> {
        let found = tensors
            .iter()
            .find(|t| t.1 == name)
            .ok_or_else(|| Error::parse(1, format!("manifest is missing tensor {name:?}")))?;
        if found.2 != rows || found.3 != cols {
            return Err(Error::parse(
                found.0,
                format!("tensor {name:?} is {}x{}, expected {rows}x{cols}", found.2, found.3),
            ));
        }
        data.seek(SeekFrom::Start(found.4))?;
        let m = DenseMatrix::read_gef32(&mut data).map_err(|e| match e {
            Error::Format { offset, msg } => Error::format(found.4 + offset, msg),
            other => other,
        })?;
        if m.rows != rows || m.cols != cols {
            return Err(Error::format(
                found.4,
                format!("tensor {name:?} record is {}x{}, expected {rows}x{cols}", m.rows, m.cols),
            ));
        }
        Ok(m.data)
    };

    let mut codebooks = Vec::with_capacity(cfg.m as usize);
    for j in 0..cfg.m {
        codebooks.push(read_tensor(&format!("codebook.{j}"), cfg.c as usize, cfg.d_c)?);
    }
    let w0 = match variant {
        DecoderVariant::Light => Some(read_tensor("w0", 1, cfg.d_c)?),
        DecoderVariant::Full => None,
    };
    let mut weights = Vec::with_capacity(cfg.layers);
    let mut biases = Vec::with_capacity(cfg.layers);
    for i in 0..cfg.layers {
        let (input, output) = cfg.layer_dims(i);
        weights.push(read_tensor(&format!("mlp.w.{i}"), input, output)?);
        biases.push(read_tensor(&format!("mlp.b.{i}"), 1, output)?);
    }
    let expected = codebooks.len() + w0.iter().len() + weights.len() + biases.len();
    if tensors.len() != expected {
        return Err(Error::parse(
            tensors.last().map(|t| t.0).unwrap_or(1),
            format!("manifest lists {} tensors, expected {expected}", tensors.len()),
        ));
    }

    Ok(DecoderParams { cfg, codebooks, w0, weights, biases })
}
