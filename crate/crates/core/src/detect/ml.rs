//! Exhaustive maximum-likelihood search.

use super::{llrs_from_bit_minima, power_normalized, regularizer, DetectError, DetectionResult, ML_GUARD};
use crate::modem::Constellation;
use crate::numerics::ComplexMatrix;
use num_complex::Complex64;

fn candidate_count(c: &Constellation, nt: usize) -> Result<u64, DetectError> {
    let count = (c.size() as u64).checked_pow(nt as u32).unwrap_or(u64::MAX);
    if count > ML_GUARD {
        return Err(DetectError::TooLarge { candidates: count });
    }
    Ok(count)
}

/// Visits every candidate in lexicographic label order, reusing partial
/// residuals across the shared prefix.
fn enumerate(h_eff: &ComplexMatrix, y: &[Complex64], c: &Constellation, reg: f64, mut visit: impl FnMut(&[usize], f64)) {
    let nt = h_eff.cols();
    let nr = h_eff.rows();
    let m = c.size();
    let cols: Vec<Vec<Complex64>> = (0..nt).map(|j| h_eff.column(j)).collect();
    let energy: Vec<f64> = c.points().iter().map(|p| p.norm_sqr()).collect();
    // residual[l] = y − Σ_{k<l} h_k x_k ; prior[l] likewise.
    let mut residual = vec![vec![Complex64::new(0.0, 0.0); nr]; nt + 1];
    residual[0].copy_from_slice(y);
    let mut prior = vec![0.0; nt + 1];
    let mut labels = vec![0usize; nt];
    let mut level = 0;
    labels[0] = 0;
    loop {
        // Descend, filling residuals for the current prefix.
        while level < nt {
            let s = c.point(labels[level]);
            let (head, tail) = residual.split_at_mut(level + 1);
            for ((dst, src), h) in tail[0].iter_mut().zip(&head[level]).zip(&cols[level]) {
                *dst = src - h * s;
            }
            prior[level + 1] = prior[level] + energy[labels[level]];
            level += 1;
        }
        let metric = residual[nt].iter().map(|z| z.norm_sqr()).sum::<f64>() + reg * prior[nt];
        visit(&labels, metric);
        // Odometer step on the deepest stream first.
        loop {
            if level == 0 {
                return;
            }
            level -= 1;
            labels[level] += 1;
            if labels[level] < m {
                break;
            }
            labels[level] = 0;
        }
    }
}

/// Minimizes `‖y − H·x/√N_t‖²` (plus `σ²‖x‖²` when `regularized`) over all
/// `M^N_t` candidates. Ties go to the lexicographically smallest label.
pub fn detect_ml_brute(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64, regularized: bool) -> Result<DetectionResult, DetectError> {
    let count = candidate_count(c, h.cols())?;
    let h_eff = power_normalized(h);
    let reg = regularized.then(|| regularizer(n0));
    let mut best = f64::INFINITY;
    let mut best_labels = vec![0usize; h.cols()];
    enumerate(&h_eff, y, c, reg.unwrap_or(0.0), |labels, metric| {
        if metric < best {
            best = metric;
            best_labels.copy_from_slice(labels);
        }
    });
    let mut out = DetectionResult::from_labels(best_labels, c, &h_eff, y, reg);
    out.nodes_visited = count;
    Ok(out)
}

/// Exhaustive max-log soft output.
pub(crate) fn ml_brute_soft(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64, regularized: bool) -> Result<DetectionResult, DetectError> {
    let count = candidate_count(c, h.cols())?;
    let h_eff = power_normalized(h);
    let reg = regularized.then(|| regularizer(n0));
    let b = c.bits_per_symbol();
    let nbits = h.cols() * b;
    let mut best0 = vec![f64::INFINITY; nbits];
    let mut best1 = vec![f64::INFINITY; nbits];
    let mut best = f64::INFINITY;
    let mut best_labels = vec![0usize; h.cols()];
    enumerate(&h_eff, y, c, reg.unwrap_or(0.0), |labels, metric| {
        if metric < best {
            best = metric;
            best_labels.copy_from_slice(labels);
        }
        for (s, &l) in labels.iter().enumerate() {
            for k in 0..b {
                let slot = if c.label_bit(l, k) == 0 { &mut best0 } else { &mut best1 };
                let idx = s * b + k;
                if metric < slot[idx] {
                    slot[idx] = metric;
                }
            }
        }
    });
    let mut out = DetectionResult::from_labels(best_labels, c, &h_eff, y, reg);
    out.nodes_visited = count;
    out.llrs = Some(llrs_from_bit_minima(&best0, &best1, best, n0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{build_constellation, hard_slice};

    #[test]
    fn guard() {
        let c = build_constellation(64).unwrap();
        let h = ComplexMatrix::identity(4);
        let y = vec![Complex64::new(0.0, 0.0); 4];
        assert_eq!(
            detect_ml_brute(&h, &y, &c, 1.0, false).unwrap_err(),
            DetectError::TooLarge { candidates: 1 << 24 }
        );
        let h3 = ComplexMatrix::identity(3);
        assert!(detect_ml_brute(&h3, &y[..3], &c, 1.0, false).is_ok());
    }

    #[test]
    fn single_stream_is_slicing() {
        let c = build_constellation(16).unwrap();
        let h = ComplexMatrix::identity(1);
        for (re, im) in [(0.1, 0.2), (-0.9, 0.33), (1.5, -1.5), (0.0, 0.0)] {
            let y = Complex64::new(re, im);
            let r = detect_ml_brute(&h, &[y], &c, 0.1, false).unwrap();
            assert_eq!(r.hard_bits, hard_slice(y, &c).1);
            assert_eq!(r.nodes_visited, 16);
        }
    }

    #[test]
    fn enumeration_order_is_lexicographic() {
        let c = build_constellation(4).unwrap();
        let h = ComplexMatrix::identity(2);
        let mut seen = Vec::new();
        enumerate(&h, &[Complex64::new(0.0, 0.0); 2], &c, 0.0, |l, _| seen.push((l[0], l[1])));
        let expected: Vec<_> = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).collect();
        assert_eq!(seen, expected);
    }
}
