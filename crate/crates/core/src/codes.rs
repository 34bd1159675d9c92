//! Bit-packed compositional codes, their on-disk format, and the memory
//! accounting used to size deployments.
//!
//! A code is a length-`m` vector of integers in `[0, c)`. With `c` a power
//! of two, element `j` occupies `log2(c)` bits, laid out MSB-first, so a
//! code packs into `ceil(m * log2(c) / 8)` bytes. Example with `c = 4`:
//! the code `[2, 0, 3, 1, 0, 1]` becomes the bit string `10 00 11 01 00 01`
//! and the bytes `0x8D 0x10` (the final four bits pad with zeros).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// How the bits of a stored code were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Projection compared against zero.
    Zero,
    /// Projection compared against its own median.
    Median,
    /// Uniform random codes; no projection involved.
    RandomBaseline,
}

impl ThresholdMode {
    pub fn to_byte(self) -> u8 {
        match self {
            ThresholdMode::Zero => 0,
            ThresholdMode::Median => 1,
            ThresholdMode::RandomBaseline => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ThresholdMode::Zero),
            1 => Some(ThresholdMode::Median),
            2 => Some(ThresholdMode::RandomBaseline),
            _ => None,
        }
    }
}

/// Bits per code: `m * log2(c)`. `c` must be a power of two ≥ 2 and
/// `m` ≥ 1.
pub fn code_bits(c: u32, m: u32) -> Result<u32> {
    if c < 2 || !c.is_power_of_two() {
        return Err(Error::Domain(format!(
            "cardinality must be a power of two >= 2, got {c}"
        )));
    }
    if m == 0 {
        return Err(Error::Domain("code length m must be >= 1".into()));
    }
    m.checked_mul(c.trailing_zeros())
        .ok_or_else(|| Error::Domain(format!("code width m={m}, c={c} overflows")))
}

fn bytes_for_bits(bits: u32) -> usize {
    (bits as usize + 7) / 8
}

/// Pack one integer code MSB-first into bytes; trailing bits are zero.
pub fn pack_code(code: &[u32], c: u32) -> Result<Vec<u8>> {
    let bits = code_bits(c, code.len() as u32)?;
    let b = c.trailing_zeros();
    let mut out = vec![0u8; bytes_for_bits(bits)];
    let mut pos = 0usize;
    for &e in code {
        if e >= c {
            return Err(Error::Range(format!("code element {e} out of range for c={c}")));
        }
        for shift in (0..b).rev() {
            if (e >> shift) & 1 == 1 {
                out[pos / 8] |= 0x80 >> (pos % 8);
            }
            pos += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`pack_code`] for a known `(c, m)`.
pub fn unpack_code(bytes: &[u8], c: u32, m: u32) -> Result<Vec<u32>> {
    let bits = code_bits(c, m)?;
    if bytes.len() != bytes_for_bits(bits) {
        return Err(Error::Shape(format!(
            "packed code needs {} bytes for c={c}, m={m}, got {}",
            bytes_for_bits(bits),
            bytes.len()
        )));
    }
    let b = c.trailing_zeros();
    let mut out = Vec::with_capacity(m as usize);
    let mut pos = 0usize;
    for _ in 0..m {
        let mut e = 0u32;
        for _ in 0..b {
            e = (e << 1) | ((bytes[pos / 8] >> (7 - pos % 8)) & 1) as u32;
            pos += 1;
        }
        out.push(e);
    }
    Ok(out)
}

/// `n` packed codes, one per row.
///
/// Invariants: `c` is a power of two ≥ 2, each row holds
/// `ceil(m * log2(c) / 8)` bytes, and pad bits past `m * log2(c)` are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeMatrix {
    pub n: usize,
    pub c: u32,
    pub m: u32,
    bits: Vec<u8>,
}

impl CodeMatrix {
    pub fn new_zeroed(n: usize, c: u32, m: u32) -> Result<Self> {
        let bits = code_bits(c, m)?;
        let row_bytes = bytes_for_bits(bits);
        let total = n
            .checked_mul(row_bytes)
            .ok_or_else(|| Error::Domain(format!("{n} rows of {row_bytes} bytes overflow")))?;
        Ok(Self { n, c, m, bits: vec![0u8; total] })
    }

    pub fn n_bits(&self) -> u32 {
        self.m * self.c.trailing_zeros()
    }

    pub fn row_bytes(&self) -> usize {
        bytes_for_bits(self.n_bits())
    }

    pub fn row(&self, j: usize) -> &[u8] {
        let w = self.row_bytes();
        &self.bits[j * w..(j + 1) * w]
    }

    pub fn bit(&self, j: usize, i: usize) -> bool {
        debug_assert!(i < self.n_bits() as usize);
        let w = self.row_bytes();
        (self.bits[j * w + i / 8] >> (7 - i % 8)) & 1 == 1
    }

    pub fn set_bit(&mut self, j: usize, i: usize) -> Result<()> {
        if j >= self.n || i >= self.n_bits() as usize {
            return Err(Error::Range(format!(
                "bit ({j}, {i}) out of range for {}x{}",
                self.n,
                self.n_bits()
            )));
        }
        let w = self.row_bytes();
        self.bits[j * w + i / 8] |= 0x80 >> (i % 8);
        Ok(())
    }

    /// Integer code of row `j`.
    pub fn code(&self, j: usize) -> Vec<u32> {
        unpack_code(self.row(j), self.c, self.m).expect("stored row is well-formed")
    }

    pub fn set_code(&mut self, j: usize, code: &[u32]) -> Result<()> {
        if code.len() != self.m as usize {
            return Err(Error::Shape(format!(
                "code has {} elements, matrix stores m={}",
                code.len(),
                self.m
            )));
        }
        let packed = pack_code(code, self.c)?;
        let w = self.row_bytes();
        self.bits[j * w..(j + 1) * w].copy_from_slice(&packed);
        Ok(())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }
}

const CODE_MAGIC: &[u8; 4] = b"GECC";
const CODE_VERSION: u32 = 1;
const CODE_HEADER_LEN: u64 = 40;

/// Write a code file: magic `GECC`, version `u32`, `n u64`, `c u32`,
/// `m u32`, `seed u64`, threshold-mode byte, 7 reserved zero bytes, then
/// the packed rows. All integers little-endian.
pub fn write_codes<W: Write>(
    w: &mut W,
    codes: &CodeMatrix,
    seed: u64,
    mode: ThresholdMode,
) -> Result<()> {
    w.write_all(CODE_MAGIC)?;
    w.write_all(&CODE_VERSION.to_le_bytes())?;
    w.write_all(&(codes.n as u64).to_le_bytes())?;
    w.write_all(&codes.c.to_le_bytes())?;
    w.write_all(&codes.m.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&[mode.to_byte()])?;
    w.write_all(&[0u8; 7])?;
    w.write_all(&codes.bits)?;
    Ok(())
}

pub fn read_codes<R: Read>(r: &mut R) -> Result<(CodeMatrix, u64, ThresholdMode)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(0, "file too short for GECC magic"))?;
    if &magic != CODE_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"GECC\"")));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(|_| Error::format(4, "truncated version"))?;
    let version = u32::from_le_bytes(b4);
    if version != CODE_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    r.read_exact(&mut b8).map_err(|_| Error::format(8, "truncated row count"))?;
    let n = u64::from_le_bytes(b8);
    r.read_exact(&mut b4).map_err(|_| Error::format(16, "truncated cardinality"))?;
    let c = u32::from_le_bytes(b4);
    r.read_exact(&mut b4).map_err(|_| Error::format(20, "truncated code length"))?;
    let m = u32::from_le_bytes(b4);
    r.read_exact(&mut b8).map_err(|_| Error::format(24, "truncated seed"))?;
    let seed = u64::from_le_bytes(b8);
    let mut mode_byte = [0u8; 1];
    r.read_exact(&mut mode_byte).map_err(|_| Error::format(32, "truncated mode byte"))?;
    let mode = ThresholdMode::from_byte(mode_byte[0])
        .ok_or_else(|| Error::format(32, format!("unknown threshold mode {}", mode_byte[0])))?;
    let mut reserved = [0u8; 7];
    r.read_exact(&mut reserved).map_err(|_| Error::format(33, "truncated header"))?;
    if reserved != [0u8; 7] {
        return Err(Error::format(33, "reserved bytes must be zero"));
    }

    let n = usize::try_from(n).map_err(|_| Error::format(8, "row count exceeds address space"))?;
    let mut codes = CodeMatrix::new_zeroed(n, c, m)?;
    let row_bytes = codes.row_bytes();
    r.read_exact(&mut codes.bits).map_err(|_| {
        Error::format(CODE_HEADER_LEN, format!("payload shorter than {n} rows of {row_bytes} bytes"))
    })?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::format(
            CODE_HEADER_LEN + (n * row_bytes) as u64,
            "trailing bytes after payload",
        ));
    }

    // Pad bits must be zero: they are unused and masking bugs hide there.
    let n_bits = codes.n_bits() as usize;
    if row_bytes * 8 > n_bits {
        for j in 0..n {
            for i in n_bits..row_bytes * 8 {
                if (codes.row(j)[i / 8] >> (7 - i % 8)) & 1 == 1 {
                    return Err(Error::format(
                        CODE_HEADER_LEN + (j * row_bytes) as u64,
                        format!("row {j} has nonzero pad bits"),
                    ));
                }
            }
        }
    }
    Ok((codes, seed, mode))
}

pub fn save_codes(path: &Path, codes: &CodeMatrix, seed: u64, mode: ThresholdMode) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_codes(&mut w, codes, seed, mode)
}

pub fn load_codes(path: &Path) -> Result<(CodeMatrix, u64, ThresholdMode)> {
    read_codes(&mut BufReader::new(File::open(path)?))
}

/// Decoder layout; shared by the accountant here and [`crate::decoder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderVariant {
    /// Frozen codebooks plus an elementwise rescale in front of the MLP.
    Light,
    /// Trainable codebooks, no rescale.
    Full,
}

/// Everything the memory accountant needs to price one deployment.
#[derive(Clone, Copy, Debug)]
pub struct MemorySpec {
    pub n: u64,
    pub d_e: u32,
    /// Storage width of one real in bits.
    pub float_bits: u32,
    pub c: u32,
    pub m: u32,
    pub d_c: u32,
    pub d_m: u32,
    pub layers: u32,
    pub variant: DecoderVariant,
    /// Count MLP biases as parameters. Off by default: biases are a
    /// rounding error next to the matrices and keeping them out makes the
    /// closed-form counts exact.
    pub include_biases: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryReport {
    pub raw_embedding_bytes: u64,
    pub code_bytes: u64,
    pub decoder_trainable_params: u64,
    pub decoder_nontrainable_params: u64,
    /// All decoder parameters at `float_bits` wide.
    pub decoder_bytes: u64,
    /// GPU-resident bytes: the trainable decoder (or the raw table when
    /// nothing is compressed).
    pub gpu_bytes: u64,
    /// Host-resident bytes: codes plus frozen codebooks.
    pub cpu_bytes: u64,
    pub gpu_ratio: f64,
    pub total_ratio: f64,
}

/// Closed-form sizing: raw table, packed codes, and decoder parameter
/// counts for either variant.
///
/// Trainable parameters, biases excluded:
///   light: `d_c + d_c*d_m + (layers-2)*d_m^2 + d_m*d_e`
///   full:  `m*c*d_c + d_c*d_m + (layers-2)*d_m^2 + d_m*d_e`
/// The light variant additionally stores `m*c*d_c` frozen codebook
/// entries, which the full variant trains instead.
pub fn memory_report(spec: &MemorySpec) -> Result<MemoryReport> {
    if spec.float_bits == 0 || spec.float_bits % 8 != 0 {
        return Err(Error::Domain(format!(
            "float width must be a positive multiple of 8 bits, got {}",
            spec.float_bits
        )));
    }
    if spec.layers < 2 {
        return Err(Error::Domain(format!(
            "decoder needs at least 2 layers, got {}",
            spec.layers
        )));
    }
    let bits = code_bits(spec.c, spec.m)?;
    let float_bytes = (spec.float_bits / 8) as u64;

    let raw_embedding_bytes = spec.n * spec.d_e as u64 * float_bytes;
    let code_bytes = spec.n * bytes_for_bits(bits) as u64;

    let (c, m) = (spec.c as u64, spec.m as u64);
    let (d_c, d_m, d_e, l) = (spec.d_c as u64, spec.d_m as u64, spec.d_e as u64, spec.layers as u64);
    let mlp = d_c * d_m + (l - 2) * d_m * d_m + d_m * d_e;
    let bias = if spec.include_biases { (l - 1) * d_m + d_e } else { 0 };
    let (trainable, nontrainable) = match spec.variant {
        DecoderVariant::Light => (d_c + mlp + bias, m * c * d_c),
        DecoderVariant::Full => (m * c * d_c + mlp + bias, 0),
    };

    let decoder_bytes = (trainable + nontrainable) * float_bytes;
    let gpu_bytes = trainable * float_bytes;
    let cpu_bytes = code_bytes + nontrainable * float_bytes;
    Ok(MemoryReport {
        raw_embedding_bytes,
        code_bytes,
        decoder_trainable_params: trainable,
        decoder_nontrainable_params: nontrainable,
        decoder_bytes,
        gpu_bytes,
        cpu_bytes,
        gpu_ratio: raw_embedding_bytes as f64 / gpu_bytes as f64,
        total_ratio: raw_embedding_bytes as f64 / (code_bytes + decoder_bytes) as f64,
    })
}

/// Bytes to MiB (1024 * 1024 bytes).
pub fn mib(bytes: u64) -> f64 {
    bytes as f64 / (1024.0 * 1024.0)
}

/// Sizes are reported rounded to two decimals.
pub fn round_2dp(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Ratios are reported truncated to two decimals. Truncation, not
/// rounding: published size tables print ratios computed from unrounded
/// byte counts, and truncating the quotient of the *printed* sizes is the
/// convention that reproduces those tables exactly.
pub fn ratio_2dp(x: f64) -> f64 {
    (x * 100.0).trunc() / 100.0
}

/// Raw-over-compressed size, both in the same unit.
pub fn compression_ratio(raw: f64, compressed: f64) -> Result<f64> {
    if !(compressed > 0.0) || !compressed.is_finite() || !raw.is_finite() || raw < 0.0 {
        return Err(Error::Domain(format!(
            "compression ratio needs finite sizes and compressed > 0, got {raw} / {compressed}"
        )));
    }
    Ok(raw / compressed)
}
