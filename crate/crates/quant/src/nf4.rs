//! 4-bit NormalFloat block quantization with double-quantized constants.
//!
//! The 16 levels are standard-normal quantiles at evenly spaced
//! probabilities: 8 on the negative side from `linspace(offset, 0.5, 9)`
//! (endpoint 0.5 excluded, negated), 7 on the positive side from
//! `linspace(offset, 0.5, 8)` (endpoint excluded), plus an exact zero,
//! with `offset = 1 - (1/32 + 1/30)/2`. The set is normalized by the
//! extreme magnitude so the end levels are exactly ±1.
//!
//! Weights are quantized in 64-element blocks (row-major) against the
//! block absmax. The absmax constants are themselves quantized: groups of
//! 256 blocks share a full-precision group constant c1 (the group's
//! largest absmax), and each block stores absmax/c1 as an E4M3 byte.

use crate::fp8::{e4m3_decode, e4m3_encode};
use crate::probit::probit;
use ndarray::Array2;
use std::sync::OnceLock;
use thiserror::Error;

pub const BLOCK_SIZE: usize = 64;
pub const GROUP_SIZE: usize = 256;

/// The 16 NF4 levels, strictly increasing, containing -1, 0, and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Nf4Codebook {
    pub levels: [f64; 16],
}

impl Nf4Codebook {
    fn construct() -> Self {
        let offset = 1.0 - (1.0 / 32.0 + 1.0 / 30.0) / 2.0;
        let mut levels = Vec::with_capacity(16);
        // negative side: 8 quantiles
        for i in 0..8 {
            let p = offset + (0.5 - offset) * i as f64 / 8.0;
            levels.push(-probit(p));
        }
        levels.push(0.0);
        // positive side: 7 quantiles
        for i in (0..7).rev() {
            let p = offset + (0.5 - offset) * i as f64 / 7.0;
            levels.push(probit(p));
        }
        let scale = probit(offset);
        let mut out = [0.0; 16];
        for (slot, level) in out.iter_mut().zip(&levels) {
            *slot = level / scale;
        }
        Nf4Codebook { levels: out }
    }

    pub fn zero_index(&self) -> usize {
        self.levels.iter().position(|&l| l == 0.0).expect("codebook has a zero level")
    }

    /// Index of the nearest level to `x`; ties go to the smaller index.
    pub fn nearest(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &level) in self.levels.iter().enumerate() {
            let dist = (x - level).abs();
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best
    }

    /// Largest gap between adjacent levels (the worst-case quantization
    /// step for normalized values inside [-1, 1]).
    pub fn max_gap(&self) -> f64 {
        self.levels.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Shared codebook instance.
pub fn nf4_codebook() -> &'static Nf4Codebook {
    static CODEBOOK: OnceLock<Nf4Codebook> = OnceLock::new();
    CODEBOOK.get_or_init(Nf4Codebook::construct)
}

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("input contains a non-finite value at ({0}, {1})")]
    NonFiniteInput(usize, usize),
}

/// NF4-coded matrix with double-quantized block constants.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub rows: usize,
    pub cols: usize,
    /// One 4-bit level index per element, row-major, blocked by 64.
    pub codes: Vec<u8>,
    /// One E4M3 byte per 64-block: absmax / c1 of its group.
    pub c2_codes: Vec<u8>,
    /// One single-precision constant per group of 256 blocks.
    pub c1: Vec<f32>,
}

impl QuantizedTensor {
    pub fn block_count(&self) -> usize {
        self.codes.len().div_ceil(BLOCK_SIZE)
    }

    /// Storage cost in bits: 4 per code, 8 per block constant, 32 per
    /// group constant.
    pub fn storage_bits(&self) -> (u64, u64, u64) {
        (4 * self.codes.len() as u64, 8 * self.c2_codes.len() as u64, 32 * self.c1.len() as u64)
    }

    /// Dequantized absmax of block `b`.
    pub fn block_scale(&self, b: usize) -> f64 {
        e4m3_decode(self.c2_codes[b]) * self.c1[b / GROUP_SIZE] as f64
    }
}

/// Quantize a finite matrix to NF4 codes with double-quantized constants.
pub fn quantize_nf4(weights: &Array2<f64>) -> Result<QuantizedTensor, QuantError> {
    quantize_nf4_with(nf4_codebook(), weights)
}

/// Like [`quantize_nf4`] but against an explicit codebook.
pub fn quantize_nf4_with(
    codebook: &Nf4Codebook,
    weights: &Array2<f64>,
) -> Result<QuantizedTensor, QuantError> {
    for ((r, c), &w) in weights.indexed_iter() {
        if !w.is_finite() {
            return Err(QuantError::NonFiniteInput(r, c));
        }
    }
    let zero = codebook.zero_index() as u8;
    let flat: Vec<f64> = weights.iter().copied().collect();
    let n_blocks = flat.len().div_ceil(BLOCK_SIZE);

    let absmax: Vec<f64> = (0..n_blocks)
        .map(|b| {
            flat[b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(flat.len())]
                .iter()
                .fold(0.0f64, |acc, w| acc.max(w.abs()))
        })
        .collect();

    let c1: Vec<f32> = absmax
        .chunks(GROUP_SIZE)
        .map(|group| group.iter().fold(0.0f64, |acc, &a| acc.max(a)) as f32)
        .collect();

    let c2_codes: Vec<u8> = absmax
        .iter()
        .enumerate()
        .map(|(b, &a)| {
            let scale = c1[b / GROUP_SIZE] as f64;
            if a == 0.0 || scale == 0.0 {
                0
            } else {
                e4m3_encode(a / scale)
            }
        })
        .collect();

    let codes: Vec<u8> = flat
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let a = absmax[i / BLOCK_SIZE];
            if a == 0.0 {
                zero
            } else {
                codebook.nearest(w / a) as u8
            }
        })
        .collect();

    Ok(QuantizedTensor { rows: weights.nrows(), cols: weights.ncols(), codes, c2_codes, c1 })
}

/// Reconstruct the matrix: level · decode(c2) · c1 per element.
pub fn double_dequant(qt: &QuantizedTensor) -> Array2<f64> {
    double_dequant_with(nf4_codebook(), qt)
}

/// Like [`double_dequant`] but against an explicit codebook.
pub fn double_dequant_with(codebook: &Nf4Codebook, qt: &QuantizedTensor) -> Array2<f64> {
    let values: Vec<f64> = qt
        .codes
        .iter()
        .enumerate()
        .map(|(i, &code)| codebook.levels[code as usize] * qt.block_scale(i / BLOCK_SIZE))
        .collect();
    Array2::from_shape_vec((qt.rows, qt.cols), values).expect("code count matches shape")
}

// ── Binary serialization ───────────────────────────────────────────────
//
// Little-endian layout: magic "NFQ1"; rows, cols, code count, c2 count,
// c1 count as u64; then codes packed two per byte (low nibble first),
// c2 bytes, and c1 values as f32 bits.

const MAGIC: &[u8; 4] = b"NFQ1";

#[derive(Debug, Error)]
pub enum SerdeError {
    #[error("bad magic; not a quantized tensor file")]
    BadMagic,
    #[error("file truncated")]
    Truncated,
    #[error("inconsistent counts in header")]
    BadCounts,
}

impl QuantizedTensor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for count in [
            self.rows as u64,
            self.cols as u64,
            self.codes.len() as u64,
            self.c2_codes.len() as u64,
            self.c1.len() as u64,
        ] {
            out.extend_from_slice(&count.to_le_bytes());
        }
        for pair in self.codes.chunks(2) {
            let lo = pair[0] & 0x0F;
            let hi = pair.get(1).copied().unwrap_or(0) & 0x0F;
            out.push(lo | (hi << 4));
        }
        out.extend_from_slice(&self.c2_codes);
        for &v in &self.c1 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SerdeError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], SerdeError> {
            let slice = bytes.get(*pos..*pos + n).ok_or(SerdeError::Truncated)?;
            *pos += n;
            Ok(slice)
        };
        if take(&mut pos, 4)? != MAGIC {
            return Err(SerdeError::BadMagic);
        }
        let mut counts = [0u64; 5];
        for slot in &mut counts {
            *slot = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        }
        let [rows, cols, n_codes, n_c2, n_c1] = counts.map(|c| c as usize);
        if n_codes != rows * cols
            || n_c2 != n_codes.div_ceil(BLOCK_SIZE)
            || n_c1 != n_c2.div_ceil(GROUP_SIZE)
        {
            return Err(SerdeError::BadCounts);
        }
        let packed = take(&mut pos, n_codes.div_ceil(2))?;
        let mut codes = Vec::with_capacity(n_codes);
        for (i, &byte) in packed.iter().enumerate() {
            codes.push(byte & 0x0F);
            if 2 * i + 1 < n_codes {
                codes.push(byte >> 4);
            }
        }
        let c2_codes = take(&mut pos, n_c2)?.to_vec();
        let mut c1 = Vec::with_capacity(n_c1);
        for _ in 0..n_c1 {
            c1.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
        }
        Ok(QuantizedTensor { rows, cols, codes, c2_codes, c1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn codebook_endpoints_and_zero() {
        let cb = nf4_codebook();
        assert_eq!(cb.levels[0], -1.0);
        assert_eq!(cb.levels[15], 1.0);
        assert_eq!(cb.levels.iter().filter(|&&l| l == 0.0).count(), 1);
    }

    #[test]
    fn codebook_strictly_increasing() {
        let cb = nf4_codebook();
        for w in cb.levels.windows(2) {
            assert!(w[0] < w[1], "{:?}", cb.levels);
        }
    }

    #[test]
    fn zero_matrix_round_trips_exactly() {
        let w = Array2::zeros((7, 13));
        let qt = quantize_nf4(&w).unwrap();
        assert!(qt.codes.iter().all(|&c| c as usize == nf4_codebook().zero_index()));
        assert!(qt.c2_codes.iter().all(|&c| c == 0));
        assert_eq!(double_dequant(&qt), w);
    }

    #[test]
    fn codebook_fixed_points_round_trip() {
        // one 64-block holding a·levels[i] with a = 1: exact reconstruction
        let cb = nf4_codebook();
        let mut data = vec![0.0; 64];
        for (i, slot) in data.iter_mut().take(16).enumerate() {
            *slot = cb.levels[i];
        }
        data[16] = 1.0; // absmax 1, E4M3-exact
        let w = Array2::from_shape_vec((8, 8), data).unwrap();
        let qt = quantize_nf4(&w).unwrap();
        let restored = double_dequant(&qt);
        for (a, b) in w.iter().zip(restored.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut w = Array2::zeros((2, 3));
        w[[1, 2]] = f64::NAN;
        assert!(matches!(quantize_nf4(&w), Err(QuantError::NonFiniteInput(1, 2))));
    }

    #[test]
    fn dequant_quantize_is_a_fixed_point() {
        let data: Vec<f64> = (0..256).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let w = Array2::from_shape_vec((16, 16), data).unwrap();
        let qt = quantize_nf4(&w).unwrap();
        let w_hat = double_dequant(&qt);
        let qt2 = quantize_nf4(&w_hat).unwrap();
        let w_hat2 = double_dequant(&qt2);
        for (a, b) in w_hat.iter().zip(w_hat2.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn serialization_round_trip() {
        let data: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
        let w = Array2::from_shape_vec((15, 20), data).unwrap();
        let qt = quantize_nf4(&w).unwrap();
        let restored = QuantizedTensor::from_bytes(&qt.to_bytes()).unwrap();
        assert_eq!(qt, restored);
    }

    #[test]
    fn serialization_rejects_garbage() {
        assert!(matches!(QuantizedTensor::from_bytes(b"XXXX"), Err(SerdeError::BadMagic)));
        assert!(matches!(QuantizedTensor::from_bytes(b"NFQ1\x01\x02"), Err(SerdeError::Truncated)));
        let mut bad_counts = Vec::from(*b"NFQ1");
        for count in [2u64, 2, 999, 1, 1] {
            bad_counts.extend_from_slice(&count.to_le_bytes());
        }
        assert!(matches!(QuantizedTensor::from_bytes(&bad_counts), Err(SerdeError::BadCounts)));
    }

    #[test]
    fn count_invariants() {
        let w = Array2::from_elem((100, 100), 0.5);
        let qt = quantize_nf4(&w).unwrap();
        assert_eq!(qt.codes.len(), 10_000);
        assert_eq!(qt.c2_codes.len(), 10_000usize.div_ceil(64));
        assert_eq!(qt.c1.len(), qt.c2_codes.len().div_ceil(256));
    }
}
