//! Random-projection hashing of matrix rows into compositional codes.
//!
//! One code bit is one random hyperplane. For bit `i` the encoder draws a
//! Gaussian direction `v` from a per-bit seed, projects every row of the
//! input onto it in a single streaming pass, and sets the bit wherever the
//! projection strictly exceeds a threshold. Two thresholds are supported:
//!
//! * `Zero` — the classic similarity-preserving split; the probability two
//!   rows agree on a bit grows with the cosine of their angle.
//! * `Median` — the median of the projections themselves, which forces an
//!   exactly balanced split per bit and, on clustered inputs, markedly
//!   fewer identical codes. [`collision_experiment`] measures that effect.
//!
//! Rows with projection equal to the threshold map to `false`, so a
//! constant input yields all-zero codes. Peak working memory beyond the
//! output is one direction (`d` reals) plus one projection column
//! (`n` reals) regardless of input size.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codes::{code_bits, CodeMatrix, ThresholdMode};
use crate::error::{Error, Result};
use crate::seeds::derive;
use crate::sparse::{row_dot, RowSource};

#[derive(Clone, Copy, Debug)]
pub struct EncoderConfig {
    /// Codebook cardinality; power of two ≥ 2.
    pub c: u32,
    /// Code length in codebook indices.
    pub m: u32,
    pub threshold: ThresholdMode,
    /// Master seed; bit `i` projects along `random_vector(d, derive(seed, i))`.
    pub seed: u64,
}

/// `dim` i.i.d. standard normal samples from a dedicated generator.
pub fn random_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Threshold for one projection column. `Median` selects the element at
/// sorted index `(n - 1) / 2` (the lower middle) in expected linear time;
/// the input is not modified.
pub fn select_threshold(u: &[f64], mode: ThresholdMode) -> Result<f64> {
    match mode {
        ThresholdMode::Zero => Ok(0.0),
        ThresholdMode::Median => {
            if u.is_empty() {
                return Err(Error::Domain("median of an empty projection".into()));
            }
            let mut buf = u.to_vec();
            let k = (buf.len() - 1) / 2;
            let (_, kth, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
            Ok(*kth)
        }
        ThresholdMode::RandomBaseline => Err(Error::Domain(
            "random-baseline codes come from random_codes, not thresholding".into(),
        )),
    }
}

/// Hash every row of `src` into an `m * log2(c)`-bit code.
pub fn encode(src: &dyn RowSource, cfg: &EncoderConfig) -> Result<CodeMatrix> {
    if matches!(cfg.threshold, ThresholdMode::RandomBaseline) {
        return Err(Error::Domain(
            "encode requires a Zero or Median threshold; use random_codes for the baseline".into(),
        ));
    }
    let n = src.n_rows();
    let d = src.n_cols();
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("cannot encode a {n}x{d} input")));
    }
    let n_bit = code_bits(cfg.c, cfg.m)?;
    let mut codes = CodeMatrix::new_zeroed(n, cfg.c, cfg.m)?;
    let mut u = vec![0.0f64; n];
    for i in 0..n_bit {
        let v = random_vector(d, derive(cfg.seed, i as u64));
        let mut next = 0usize;
        src.scan(&mut |j, row| {
            if j != next {
                return Err(Error::Contract(format!(
                    "row source visited row {j}, expected {next}"
                )));
            }
            u[j] = row_dot(row, &v)?;
            next += 1;
            Ok(())
        })?;
        if next != n {
            return Err(Error::Contract(format!(
                "row source stopped after {next} of {n} rows"
            )));
        }
        let t = select_threshold(&u, cfg.threshold)?;
        for (j, &uj) in u.iter().enumerate() {
            if uj > t {
                codes.set_bit(j, i as usize)?;
            }
        }
    }
    Ok(codes)
}

/// Baseline codes: every element uniform in `[0, c)`, no input involved.
pub fn random_codes(n: usize, cfg: &EncoderConfig) -> Result<CodeMatrix> {
    if n == 0 {
        return Err(Error::Domain("cannot generate zero codes".into()));
    }
    let mut codes = CodeMatrix::new_zeroed(n, cfg.c, cfg.m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut code = vec![0u32; cfg.m as usize];
    for j in 0..n {
        for e in code.iter_mut() {
            *e = rng.random_range(0..cfg.c);
        }
        codes.set_code(j, &code)?;
    }
    Ok(codes)
}

/// Number of rows sharing a code with an earlier row: `n` minus the number
/// of distinct codes.
pub fn count_collisions(codes: &CodeMatrix) -> usize {
    let mut seen: HashSet<&[u8]> = HashSet::with_capacity(codes.n);
    for j in 0..codes.n {
        seen.insert(codes.row(j));
    }
    codes.n - seen.len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollisionTrial {
    pub trial: u32,
    pub median_collisions: usize,
    pub zero_collisions: usize,
}

/// Paired collision counts under both thresholds.
///
/// Each trial derives its own sub-seed, so the median and zero encodings
/// of a trial share the exact same projection directions and differ only
/// in the threshold. Trials run in parallel; results are ordered by trial
/// index and independent of thread count.
pub fn collision_experiment(
    src: &dyn RowSource,
    n_bit: u32,
    trials: u32,
    seed: u64,
) -> Result<Vec<CollisionTrial>> {
    if n_bit == 0 {
        return Err(Error::Domain("need at least one bit per code".into()));
    }
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let sub = derive(seed, trial as u64);
            let base = EncoderConfig { c: 2, m: n_bit, threshold: ThresholdMode::Median, seed: sub };
            let median = count_collisions(&encode(src, &base)?);
            let zero = count_collisions(&encode(
                src,
                &EncoderConfig { threshold: ThresholdMode::Zero, ..base },
            )?);
            Ok(CollisionTrial { trial, median_collisions: median, zero_collisions: zero })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{CsrMatrix, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_csr(rng: &mut ChaCha8Rng, n: usize, d: usize) -> CsrMatrix {
        let mut entries = Vec::new();
        for r in 0..n as u32 {
            for c in 0..d as u32 {
                if rng.random::<f64>() < 0.5 {
                    entries.push((r, c, rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        CsrMatrix::from_entries(n, d, &entries).unwrap()
    }

    /// Dense re-encoding: full matrix product with the same per-bit
    /// directions, a sort-based median, and a strict comparison.
    fn oracle_bits(dense: &[Vec<f64>], cfg: &EncoderConfig, n_bit: u32) -> Vec<Vec<bool>> {
        let n = dense.len();
        let d = dense[0].len();
        let mut bits = vec![vec![false; n_bit as usize]; n];
        for i in 0..n_bit {
            let v = random_vector(d, derive(cfg.seed, i as u64));
            let u: Vec<f64> = dense
                .iter()
                .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
            let t = match cfg.threshold {
                ThresholdMode::Zero => 0.0,
                ThresholdMode::Median => {
                    let mut s = u.clone();
                    s.sort_by(f64::total_cmp);
                    s[(n - 1) / 2]
                }
                ThresholdMode::RandomBaseline => unreachable!(),
            };
            for j in 0..n {
                bits[j][i as usize] = u[j] > t;
            }
        }
        bits
    }

    fn densify(m: &CsrMatrix) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; m.n_cols]; m.n_rows()];
        for i in 0..m.n_rows() {
            let row = m.row(i);
            for (&c, &v) in row.cols.iter().zip(row.vals) {
                d[i][c as usize] = v;
            }
        }
        d
    }

    #[test]
    fn projection_vectors_are_seeded_standard_normals() {
        let a = random_vector(1000, 99);
        let b = random_vector(1000, 99);
        assert_eq!(a, b);
        assert_ne!(a, random_vector(1000, 100));

        let big = random_vector(100_000, 5);
        let mean = big.iter().sum::<f64>() / big.len() as f64;
        let var = big.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / big.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn median_matches_sort_oracle_and_leaves_input_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for len in [1usize, 2, 3, 4, 5, 10, 101, 256] {
            let u: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let before = u.clone();
            let t = select_threshold(&u, ThresholdMode::Median).unwrap();
            assert_eq!(u, before, "input modified");
            let mut s = u.clone();
            s.sort_by(f64::total_cmp);
            assert_eq!(t, s[(len - 1) / 2], "len {len}");
        }
        assert_eq!(select_threshold(&[3.0], ThresholdMode::Zero).unwrap(), 0.0);
        assert!(select_threshold(&[], ThresholdMode::Median).is_err());
        assert!(select_threshold(&[1.0], ThresholdMode::RandomBaseline).is_err());
    }

    #[test]
    fn median_split_is_balanced_on_distinct_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in [2usize, 3, 16, 17, 101, 1000] {
            // distinct by construction: a shuffled strictly increasing set
            let mut u: Vec<f64> = (0..n).map(|i| i as f64 + rng.random::<f64>() * 0.4).collect();
            for i in (1..u.len()).rev() {
                u.swap(i, rng.random_range(0..=i));
            }
            let t = select_threshold(&u, ThresholdMode::Median).unwrap();
            let above = u.iter().filter(|&&x| x > t).count();
            assert!(
                above == n / 2 || above == n.div_ceil(2),
                "n={n}: {above} above threshold"
            );
        }
    }

    #[test]
    fn encode_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..20 {
            let n = rng.random_range(2..24usize);
            let d = rng.random_range(1..10usize);
            let csr = random_csr(&mut rng, n, d);
            let dense = densify(&csr);
            for threshold in [ThresholdMode::Median, ThresholdMode::Zero] {
                let cfg = EncoderConfig { c: 4, m: 5, threshold, seed: 1000 + trial };
                let codes = encode(&csr, &cfg).unwrap();
                let want = oracle_bits(&dense, &cfg, 10);
                for j in 0..n {
                    for i in 0..10 {
                        assert_eq!(codes.bit(j, i), want[j][i], "trial {trial} bit ({j},{i})");
                    }
                }
            }
        }
    }

    #[test]
    fn encode_is_deterministic_across_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let n = 12;
        let d = 6;
        let data: Vec<f32> = (0..n * d).map(|_| rng.random::<f32>() - 0.5).collect();
        let dense = DenseMatrix::from_vec(n, d, data.clone()).unwrap();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..d {
                entries.push((r as u32, c as u32, data[r * d + c] as f64));
            }
        }
        let csr = CsrMatrix::from_entries(n, d, &entries).unwrap();

        let cfg = EncoderConfig { c: 16, m: 4, threshold: ThresholdMode::Median, seed: 7 };
        let a = encode(&dense, &cfg).unwrap();
        let b = encode(&dense, &cfg).unwrap();
        let c = encode(&csr, &cfg).unwrap();
        assert_eq!(a, b, "same source, same seed");
        assert_eq!(a, c, "CSR vs dense source");
    }

    #[test]
    fn constant_rows_map_ties_to_false() {
        // one identical row everywhere: u is constant, median == u[j],
        // strict comparison leaves every bit unset
        let dense = DenseMatrix::from_vec(5, 3, vec![0.5; 15]).unwrap();
        let cfg = EncoderConfig { c: 4, m: 3, threshold: ThresholdMode::Median, seed: 3 };
        let codes = encode(&dense, &cfg).unwrap();
        for j in 0..5 {
            assert_eq!(codes.code(j), vec![0, 0, 0]);
        }
        assert_eq!(count_collisions(&codes), 4);
    }

    #[test]
    fn encode_rejects_degenerate_inputs() {
        let dense = DenseMatrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        let bad = EncoderConfig { c: 4, m: 2, threshold: ThresholdMode::RandomBaseline, seed: 0 };
        assert!(matches!(encode(&dense, &bad), Err(Error::Domain(_))));
        let empty = DenseMatrix::zeros(0, 4);
        let cfg = EncoderConfig { c: 4, m: 2, threshold: ThresholdMode::Zero, seed: 0 };
        assert!(matches!(encode(&empty, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn closer_rows_get_closer_codes() {
        // x and y at a small angle, x and z nearly orthogonal; with zero
        // thresholds each bit flips independently with probability
        // angle/pi, so Hamming(x,y) stays well under Hamming(x,z).
        let d = 16;
        let x: Vec<f32> = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let mut y = x.clone();
        y[1] = 0.3; // ~17 degrees from x
        let mut z = vec![0.0f32; d];
        z[0] = 0.2;
        z[1] = 1.0; // ~79 degrees from x
        let mut data = Vec::new();
        data.extend_from_slice(&x);
        data.extend_from_slice(&y);
        data.extend_from_slice(&z);
        let m = DenseMatrix::from_vec(3, d, data).unwrap();
        let cfg = EncoderConfig { c: 2, m: 1024, threshold: ThresholdMode::Zero, seed: 2024 };
        let codes = encode(&m, &cfg).unwrap();
        let ham = |a: usize, b: usize| {
            (0..1024).filter(|&i| codes.bit(a, i) != codes.bit(b, i)).count()
        };
        let xy = ham(0, 1);
        let xz = ham(0, 2);
        assert!(
            xy < xz,
            "expected closer pair to share more bits: hamming(x,y)={xy}, hamming(x,z)={xz}"
        );
    }

    #[test]
    fn collision_count_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(1..120usize);
            let cfg = EncoderConfig { c: 4, m: 2, threshold: ThresholdMode::Zero, seed: rng.random() };
            let codes = random_codes(n, &cfg).unwrap();
            let mut distinct: Vec<Vec<u8>> = Vec::new();
            for j in 0..n {
                let row = codes.row(j).to_vec();
                if !distinct.contains(&row) {
                    distinct.push(row);
                }
            }
            assert_eq!(count_collisions(&codes), n - distinct.len());
        }
    }

    #[test]
    fn random_codes_are_uniform_and_reproducible() {
        let cfg = EncoderConfig { c: 2, m: 4, threshold: ThresholdMode::RandomBaseline, seed: 88 };
        let codes = random_codes(100_000, &cfg).unwrap();
        assert_eq!(codes, random_codes(100_000, &cfg).unwrap());
        for i in 0..4 {
            let ones = (0..codes.n).filter(|&j| codes.bit(j, i)).count();
            let frac = ones as f64 / codes.n as f64;
            assert!((frac - 0.5).abs() < 0.01, "bit {i}: ones fraction {frac}");
        }
    }

    #[test]
    fn paired_trials_share_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data: Vec<f32> = (0..60 * 4).map(|_| rng.random::<f32>() - 0.5).collect();
        let m = DenseMatrix::from_vec(60, 4, data).unwrap();
        let trials = collision_experiment(&m, 8, 5, 424).unwrap();
        assert_eq!(trials.len(), 5);
        assert_eq!(trials, collision_experiment(&m, 8, 5, 424).unwrap());
        for (k, t) in trials.iter().enumerate() {
            assert_eq!(t.trial, k as u32);
            // the paired encodings really do use the trial's sub-seed
            let sub = derive(424, k as u64);
            let med = encode(
                &m,
                &EncoderConfig { c: 2, m: 8, threshold: ThresholdMode::Median, seed: sub },
            )
            .unwrap();
            assert_eq!(t.median_collisions, count_collisions(&med));
        }
        assert!(collision_experiment(&m, 0, 5, 1).is_err());
        assert!(collision_experiment(&m, 8, 0, 1).is_err());
    }
}
