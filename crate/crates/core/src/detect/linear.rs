//! Zero-forcing and MMSE detection.

use super::{power_normalized, DetectionResult, ZF_RIDGE};
use crate::modem::{scalar_maxlog_llr_into, slice_label, Constellation};
use crate::numerics::{back_substitute, hermitian_inverse, qr_decompose, ComplexMatrix};
use num_complex::Complex64;

/// Output of a linear front end: unbiased per-stream symbol estimates and
/// the noise-plus-interference variance each one carries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimate {
    pub estimates: Vec<Complex64>,
    pub noise_var: Vec<f64>,
    pub degenerate: bool,
}

impl LinearEstimate {
    pub(crate) fn into_result(self, c: &Constellation, h: &ComplexMatrix, y: &[Complex64], soft: bool) -> DetectionResult {
        let labels: Vec<usize> = self.estimates.iter().map(|&z| slice_label(z, c)).collect();
        let h_eff = power_normalized(h);
        let mut out = DetectionResult::from_labels(labels, c, &h_eff, y, None);
        out.nodes_visited = self.estimates.len() as u64;
        out.degenerate = self.degenerate;
        if soft {
            let mut llrs = Vec::with_capacity(out.hard_bits.len());
            for (&z, &v) in self.estimates.iter().zip(&self.noise_var) {
                scalar_maxlog_llr_into(z, c, v, &mut llrs);
            }
            out.llrs = Some(llrs);
        }
        out.equalized = Some(self.estimates);
        out
    }
}

/// Applies the filter `W` (streams × antennas) acting on the power-normalized
/// channel, removing its bias and tracking residual interference.
pub(crate) fn filtered_estimate(w: &ComplexMatrix, h_eff: &ComplexMatrix, y: &[Complex64], n0: f64, degenerate: bool) -> LinearEstimate {
    let g = w.mul(h_eff);
    let raw = w.mul_vec(y);
    let nt = h_eff.cols();
    let mut estimates = Vec::with_capacity(nt);
    let mut noise_var = Vec::with_capacity(nt);
    for k in 0..nt {
        let gain = g[(k, k)];
        let w_norm: f64 = (0..w.cols()).map(|j| w[(k, j)].norm_sqr()).sum();
        let interference: f64 = (0..nt).filter(|&j| j != k).map(|j| g[(k, j)].norm_sqr()).sum();
        let g2 = gain.norm_sqr();
        if g2 > 1e-300 {
            estimates.push(raw[k] / gain);
            noise_var.push(((interference + n0 * w_norm) / g2).max(1e-300));
        } else {
            estimates.push(Complex64::new(0.0, 0.0));
            noise_var.push(f64::MAX);
        }
    }
    LinearEstimate {
        estimates,
        noise_var,
        degenerate,
    }
}

/// `(Aᴴ·A + δ·I)⁻¹·Aᴴ`, retrying with a floored `δ` if the Gram matrix is
/// numerically singular.
pub(crate) fn regularized_filter(a: &ComplexMatrix, delta: f64) -> ComplexMatrix {
    let gram = a.gram();
    let try_delta = |d: f64| {
        let mut m = gram.clone();
        for i in 0..m.rows() {
            m[(i, i)] += d;
        }
        hermitian_inverse(&m)
    };
    let inv = try_delta(delta)
        .or_else(|_| try_delta(delta.max(super::REG_FLOOR)))
        .expect("Gram matrix plus a positive floor is positive definite");
    inv.mul(&a.adjoint())
}

pub(crate) fn zf_estimate(h: &ComplexMatrix, y: &[Complex64], n0: f64) -> LinearEstimate {
    let h_eff = power_normalized(h);
    if h.cols() <= h.rows() {
        if let Ok((q, r)) = qr_decompose(&h_eff) {
            let x = back_substitute(&r, &q.adjoint_mul_vec(y));
            // Row k of R⁻¹ gives diag((HᴴH)⁻¹)_k.
            let nt = r.cols();
            let mut r_inv_rows = vec![0.0; nt];
            for col in 0..nt {
                let mut e = vec![Complex64::new(0.0, 0.0); nt];
                e[col] = Complex64::new(1.0, 0.0);
                for (k, v) in back_substitute(&r, &e).iter().enumerate() {
                    r_inv_rows[k] += v.norm_sqr();
                }
            }
            return LinearEstimate {
                estimates: x,
                noise_var: r_inv_rows.iter().map(|v| (n0 * v).max(1e-300)).collect(),
                degenerate: false,
            };
        }
    }
    // Ridge solution on the physical channel, rescaled by √N_t.
    let w = regularized_filter(h, ZF_RIDGE).scale(Complex64::new((h.cols() as f64).sqrt(), 0.0));
    filtered_estimate(&w, &h_eff, y, n0, true)
}

pub(crate) fn mmse_estimate(h: &ComplexMatrix, y: &[Complex64], n0: f64) -> LinearEstimate {
    let h_eff = power_normalized(h);
    let w = regularized_filter(&h_eff, n0);
    filtered_estimate(&w, &h_eff, y, n0, false)
}

/// Zero-forcing: least-squares equalization then per-stream slicing. A
/// rank-deficient or overloaded channel falls back to a ridge solve and
/// sets `degenerate`.
pub fn detect_zf(h: &ComplexMatrix, y: &[Complex64], c: &Constellation) -> DetectionResult {
    // n0 only feeds the LLR variance, which is unused here.
    zf_estimate(h, y, 1.0).into_result(c, h, y, false)
}

/// Linear MMSE: `(HᴴH + n0·N_t·I)⁻¹Hᴴy`, rescaled by √N_t, bias removed,
/// then sliced per stream.
pub fn detect_mmse(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64) -> DetectionResult {
    mmse_estimate(h, y, n0).into_result(c, h, y, false)
}
