//! Ordered successive interference cancellation.

use super::linear::{filtered_estimate, regularized_filter};
use super::{power_normalized, DetectionResult};
use crate::modem::{scalar_maxlog_llr_into, slice_label, Constellation};
use crate::numerics::ComplexMatrix;
use num_complex::Complex64;

/// MMSE-SIC: at each stage the remaining stream with the highest post-MMSE
/// SINR (lowest index on ties) is sliced and its contribution cancelled.
pub fn detect_sic(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64) -> DetectionResult {
    sic(h, y, c, n0, false)
}

pub(crate) fn sic(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64, soft: bool) -> DetectionResult {
    let h_eff = power_normalized(h);
    let nt = h.cols();
    let b = c.bits_per_symbol();
    let mut remaining: Vec<usize> = (0..nt).collect();
    let mut resid = y.to_vec();
    let mut labels = vec![0usize; nt];
    let mut equalized = vec![Complex64::new(0.0, 0.0); nt];
    let mut llrs = vec![0.0; nt * b];
    let mut scratch = Vec::with_capacity(b);

    while !remaining.is_empty() {
        let sub = h_eff.select_columns(&remaining);
        let w = regularized_filter(&sub, n0);
        let est = filtered_estimate(&w, &sub, &resid, n0, false);
        // Post-filter SINR is monotone decreasing in the residual variance.
        let mut pick = 0;
        for (i, v) in est.noise_var.iter().enumerate() {
            if *v < est.noise_var[pick] {
                pick = i;
            }
        }
        let stream = remaining[pick];
        let z = est.estimates[pick];
        let label = slice_label(z, c);
        labels[stream] = label;
        equalized[stream] = z;
        if soft {
            scratch.clear();
            scalar_maxlog_llr_into(z, c, est.noise_var[pick], &mut scratch);
            llrs[stream * b..(stream + 1) * b].copy_from_slice(&scratch);
        }
        let s = c.point(label);
        for (i, r) in resid.iter_mut().enumerate() {
            *r -= h_eff[(i, stream)] * s;
        }
        remaining.remove(pick);
    }

    let mut out = DetectionResult::from_labels(labels, c, &h_eff, y, None);
    out.nodes_visited = nt as u64;
    out.equalized = Some(equalized);
    if soft {
        out.llrs = Some(llrs);
    }
    out
}
