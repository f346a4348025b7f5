//! MIMO detectors.
//!
//! Every detector takes the physical channel `H` (rows = receive antennas,
//! columns = streams) and a received vector `y = H·x/√N_t + n`, where `x`
//! holds unit-energy constellation points. Internally each works on the
//! power-normalized channel `H/√N_t`, so equalized outputs and metrics are on
//! the constellation's own scale.
//!
//! | kind       | method                                                        |
//! |------------|---------------------------------------------------------------|
//! | `ZF`       | least squares, ridge fallback when rank deficient              |
//! | `MMSE`     | regularized linear filter                                      |
//! | `SIC`      | MMSE-SINR ordered successive cancellation                      |
//! | `ML_BRUTE` | exhaustive search over all `M^N_t` candidates (oracle)         |
//! | `SPHERE`   | depth-first Schnorr–Euchner tree search, exact ML              |
//!
//! When there are more streams than antennas (or `H` is rank deficient) the
//! joint detectors switch to the regularized metric
//! `‖y − H·x/√N_t‖² + σ²‖x‖²`, which is what the sphere decoder minimizes on
//! the extended system `[H; √(σ²N_t)·I]`.

mod linear;
mod ml;
mod sic;
mod sphere;

pub use linear::{detect_mmse, detect_zf, LinearEstimate};
pub use ml::detect_ml_brute;
pub use sic::detect_sic;
pub use sphere::{detect_soft, detect_sphere};

use crate::modem::{Constellation, LLR_CLAMP};
use crate::numerics::ComplexMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest candidate count the exhaustive search accepts.
pub const ML_GUARD: u64 = 1 << 20;
/// Lower bound on the noise variance used as a regularizer.
pub const REG_FLOOR: f64 = 1e-6;
/// Ridge constant for the degenerate zero-forcing fallback.
pub const ZF_RIDGE: f64 = 1e-6;
/// Default candidate list for soft-output sphere decoding.
pub const DEFAULT_LIST_SIZE: usize = 16;

/// Soft-output list length used by sweeps and sessions: four candidates per
/// constellation point.
pub fn default_list_size(order: u32) -> usize {
    4 * order as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "ZF")]
    Zf,
    #[serde(rename = "MMSE")]
    Mmse,
    #[serde(rename = "SIC")]
    Sic,
    #[serde(rename = "ML_BRUTE")]
    MlBrute,
    #[serde(rename = "SPHERE")]
    Sphere,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Zf,
        DetectorKind::Mmse,
        DetectorKind::Sic,
        DetectorKind::MlBrute,
        DetectorKind::Sphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Zf => "ZF",
            DetectorKind::Mmse => "MMSE",
            DetectorKind::Sic => "SIC",
            DetectorKind::MlBrute => "ML_BRUTE",
            DetectorKind::Sphere => "SPHERE",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, DetectorKind::Zf | DetectorKind::Mmse)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "ML" && *k == DetectorKind::MlBrute))
            .ok_or_else(|| format!("unknown detector `{s}` (expected zf, mmse, sic, ml_brute or sphere)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("exhaustive search over {candidates} candidates exceeds the 2^20 guard")]
    TooLarge { candidates: u64 },
    #[error("received vector has {got} entries, channel has {expected} rows")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Decided label per stream.
    pub labels: Vec<usize>,
    pub hard_symbols: Vec<Complex64>,
    pub hard_bits: Vec<u8>,
    /// Per-bit LLRs, stream-major, positive favouring 0.
    pub llrs: Option<Vec<f64>>,
    /// Tree nodes expanded (sphere), candidates scored (brute force), or
    /// streams sliced (linear and SIC).
    pub nodes_visited: u64,
    /// `‖y − H·x̂/√N_t‖²`, plus `σ²‖x̂‖²` when `regularized`.
    pub metric: f64,
    pub regularized: bool,
    /// Linear detection outside its validity region (rank-deficient channel).
    pub degenerate: bool,
    /// Per-stream equalizer outputs, for linear and SIC detection.
    pub equalized: Option<Vec<Complex64>>,
}

impl DetectionResult {
    pub(crate) fn from_labels(labels: Vec<usize>, c: &Constellation, h_eff: &ComplexMatrix, y: &[Complex64], reg: Option<f64>) -> Self {
        let hard_symbols: Vec<Complex64> = labels.iter().map(|&l| c.point(l)).collect();
        let hard_bits = labels.iter().flat_map(|&l| c.label_bits(l)).collect();
        let metric = joint_metric(h_eff, y, &hard_symbols, reg.unwrap_or(0.0));
        Self {
            labels,
            hard_symbols,
            hard_bits,
            llrs: None,
            nodes_visited: 0,
            metric,
            regularized: reg.is_some(),
            degenerate: false,
            equalized: None,
        }
    }
}

/// Options for [`detect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    /// Produce per-bit LLRs.
    pub soft: bool,
    /// Candidate list size for soft sphere decoding.
    pub list_size: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            soft: false,
            list_size: DEFAULT_LIST_SIZE,
        }
    }
}

/// Runs the detector named by `kind`. With `opts.soft`, linear and SIC
/// detectors attach scalar max-log LLRs computed from their post-filter
/// noise-plus-interference variance; the joint detectors attach list
/// max-log LLRs (exhaustive for `ML_BRUTE`).
pub fn detect(kind: DetectorKind, h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64, opts: DetectOptions) -> Result<DetectionResult, DetectError> {
    if y.len() != h.rows() {
        return Err(DetectError::DimensionMismatch {
            expected: h.rows(),
            got: y.len(),
        });
    }
    Ok(match kind {
        DetectorKind::Zf => linear::zf_estimate(h, y, n0).into_result(c, h, y, opts.soft),
        DetectorKind::Mmse => linear::mmse_estimate(h, y, n0).into_result(c, h, y, opts.soft),
        DetectorKind::Sic => sic::sic(h, y, c, n0, opts.soft),
        DetectorKind::MlBrute => {
            let regularized = needs_regularization(h);
            if opts.soft {
                ml::ml_brute_soft(h, y, c, n0, regularized)?
            } else {
                detect_ml_brute(h, y, c, n0, regularized)?
            }
        }
        DetectorKind::Sphere => {
            if opts.soft {
                detect_soft(h, y, c, n0, opts.list_size.max(1))
            } else {
                detect_sphere(h, y, c, n0)
            }
        }
    })
}

/// Whether the joint detectors must use the regularized metric for `h`.
pub fn needs_regularization(h: &ComplexMatrix) -> bool {
    h.cols() > h.rows() || crate::numerics::qr_decompose(h).is_err()
}

/// Regularizer applied for a given noise variance.
pub fn regularizer(n0: f64) -> f64 {
    n0.max(REG_FLOOR)
}

pub(crate) fn power_normalized(h: &ComplexMatrix) -> ComplexMatrix {
    h.scale(Complex64::new(1.0 / (h.cols() as f64).sqrt(), 0.0))
}

pub(crate) fn joint_metric(h_eff: &ComplexMatrix, y: &[Complex64], x: &[Complex64], reg: f64) -> f64 {
    let hx = h_eff.mul_vec(x);
    let resid: f64 = y.iter().zip(&hx).map(|(a, b)| (a - b).norm_sqr()).sum();
    resid + reg * x.iter().map(|v| v.norm_sqr()).sum::<f64>()
}

/// Max-log LLRs from a set of scored candidates. `best0[s][k]`/`best1[s][k]`
/// hold the smallest metric with bit `k` of stream `s` equal to 0/1;
/// missing hypotheses get `best + 2·n0·LLR_CLAMP`.
pub(crate) fn llrs_from_bit_minima(best0: &[f64], best1: &[f64], best: f64, n0: f64) -> Vec<f64> {
    let fallback = best + 2.0 * n0 * LLR_CLAMP;
    best0
        .iter()
        .zip(best1)
        .map(|(&m0, &m1)| {
            let m0 = if m0.is_finite() { m0 } else { fallback };
            let m1 = if m1.is_finite() { m1 } else { fallback };
            ((m1 - m0) / n0).clamp(-LLR_CLAMP, LLR_CLAMP)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(k.name().to_lowercase().parse::<DetectorKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("bogus".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn dimension_check() {
        let c = crate::modem::build_constellation(4).unwrap();
        let h = ComplexMatrix::identity(2);
        let err = detect(DetectorKind::Zf, &h, &[Complex64::new(0.0, 0.0)], &c, 1.0, DetectOptions::default());
        assert_eq!(err.unwrap_err(), DetectError::DimensionMismatch { expected: 2, got: 1 });
    }

    #[test]
    fn fallback_llr_saturates() {
        let l = llrs_from_bit_minima(&[0.0, f64::INFINITY], &[f64::INFINITY, 0.0], 0.0, 0.1);
        assert_eq!(l, vec![LLR_CLAMP, -LLR_CLAMP]);
    }
}
