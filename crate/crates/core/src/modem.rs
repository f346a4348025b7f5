//! Gray-mapped square QAM.
//!
//! A point's index in [`Constellation::points`] is its bit label read as an
//! unsigned integer, most significant bit first. The first half of the label
//! drives the real axis, the second half the imaginary axis. QPSK maps bit 0
//! to the positive level on each axis; 16- and 64-QAM Gray-code each axis
//! with code 0 on the lowest level.

use num_complex::Complex64;

/// LLR saturation magnitude.
pub const LLR_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ModemError {
    #[error("unsupported modulation order {0} (expected 4, 16 or 64)")]
    UnsupportedOrder(u32),
    #[error("bit count {len} is not a multiple of {bits_per_symbol}")]
    LengthMismatch { len: usize, bits_per_symbol: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: u32,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    /// Amplitude of each axis code, indexed by the per-axis label.
    axis_levels: Vec<f64>,
}

impl Constellation {
    pub fn new(order: u32) -> Result<Self, ModemError> {
        build_constellation(order)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn size(&self) -> usize {
        self.order as usize
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Bit `k` (0 = most significant) of `label`.
    #[inline]
    pub fn label_bit(&self, label: usize, k: usize) -> u8 {
        ((label >> (self.bits_per_symbol - 1 - k)) & 1) as u8
    }

    pub fn label_bits(&self, label: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits_per_symbol).map(move |k| self.label_bit(label, k))
    }

    pub fn label_string(&self, label: usize) -> String {
        self.label_bits(label).map(|b| char::from(b'0' + b)).collect()
    }

    pub fn label_from_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

pub fn build_constellation(order: u32) -> Result<Constellation, ModemError> {
    let bits_per_symbol = match order {
        4 => 2,
        16 => 4,
        64 => 6,
        other => return Err(ModemError::UnsupportedOrder(other)),
    };
    let half = bits_per_symbol / 2;
    let levels = 1usize << half;
    // E_raw of square M-QAM on odd integers is 2(M-1)/3.
    let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();

    let mut axis_levels = vec![0.0; levels];
    if order == 4 {
        axis_levels[0] = scale;
        axis_levels[1] = -scale;
    } else {
        for i in 0..levels {
            axis_levels[gray(i)] = (2.0 * i as f64 - (levels as f64 - 1.0)) * scale;
        }
    }

    let points = (0..order as usize)
        .map(|label| {
            let re = label >> half;
            let im = label & (levels - 1);
            Complex64::new(axis_levels[re], axis_levels[im])
        })
        .collect();

    Ok(Constellation {
        order,
        bits_per_symbol,
        points,
        axis_levels,
    })
}

/// Maps a bit string (one bit per byte, values 0/1) to symbols.
pub fn modulate(bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>, ModemError> {
    let b = c.bits_per_symbol;
    if !bits.len().is_multiple_of(b) {
        return Err(ModemError::LengthMismatch {
            len: bits.len(),
            bits_per_symbol: b,
        });
    }
    Ok(bits
        .chunks_exact(b)
        .map(|chunk| c.points[c.label_from_bits(chunk)])
        .collect())
}

/// Label of the nearest point; ties go to the smallest label.
pub fn slice_label(y: Complex64, c: &Constellation) -> usize {
    let half = c.bits_per_symbol / 2;
    (nearest_axis(y.re, &c.axis_levels) << half) | nearest_axis(y.im, &c.axis_levels)
}

fn nearest_axis(v: f64, levels: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (label, &l) in levels.iter().enumerate() {
        let d = (v - l) * (v - l);
        if d < best_d {
            best_d = d;
            best = label;
        }
    }
    best
}

/// Nearest constellation point and its bit label.
pub fn hard_slice(y: Complex64, c: &Constellation) -> (Complex64, Vec<u8>) {
    let label = slice_label(y, c);
    (c.points[label], c.label_bits(label).collect())
}

/// Max-log bit LLRs for a scalar observation `y = s + n`, `n ~ CN(0, n0)`.
/// Positive values favour bit 0.
pub fn scalar_maxlog_llr(y: Complex64, c: &Constellation, n0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.bits_per_symbol);
    scalar_maxlog_llr_into(y, c, n0, &mut out);
    out
}

pub fn scalar_maxlog_llr_into(y: Complex64, c: &Constellation, n0: f64, out: &mut Vec<f64>) {
    let b = c.bits_per_symbol;
    let mut best = [[f64::INFINITY; 2]; 6];
    for (label, s) in c.points.iter().enumerate() {
        let d = (y - s).norm_sqr();
        for (k, slot) in best.iter_mut().enumerate().take(b) {
            let bit = c.label_bit(label, k) as usize;
            if d < slot[bit] {
                slot[bit] = d;
            }
        }
    }
    out.extend(
        best[..b]
            .iter()
            .map(|[d0, d1]| ((d1 - d0) / n0).clamp(-LLR_CLAMP, LLR_CLAMP)),
    );
}
