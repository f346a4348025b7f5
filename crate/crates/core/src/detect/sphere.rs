//! Depth-first sphere decoding with Schnorr–Euchner child ordering.
//!
//! The search runs on `z = Qᴴy`, `R` from the thin QR of the (possibly
//! extended) power-normalized channel. Level `k` fixes stream `k`, starting
//! from the last stream. Children of a node are visited in order of
//! increasing partial metric, so the first child outside the radius ends the
//! node. A list of the `L` best leaves is kept; the radius is the worst list
//! metric once the list is full (`L = 1` gives plain ML decoding).

use super::{llrs_from_bit_minima, power_normalized, regularizer, DetectionResult};
use crate::modem::Constellation;
use crate::numerics::{qr_decompose, ComplexMatrix};
use num_complex::Complex64;

struct Leaf {
    metric: f64,
    labels: Vec<usize>,
}

fn leaf_less(metric: f64, labels: &[usize], other: &Leaf) -> bool {
    metric < other.metric || (metric == other.metric && labels < other.labels.as_slice())
}

struct Search<'a> {
    r: &'a ComplexMatrix,
    z: &'a [Complex64],
    c: &'a Constellation,
    list_size: usize,
    labels: Vec<usize>,
    list: Vec<Leaf>,
    /// Index of the worst entry of a full list.
    worst: usize,
    nodes: u64,
    dist: Vec<Vec<f64>>,
}

impl Search<'_> {
    fn radius(&self) -> f64 {
        if self.list.len() < self.list_size {
            f64::INFINITY
        } else {
            self.list[self.worst].metric
        }
    }

    fn descend(&mut self, level: usize, partial: f64) {
        let nt = self.labels.len();
        let rkk = self.r[(level, level)].re;
        let mut acc = self.z[level];
        for j in level + 1..nt {
            acc -= self.r[(level, j)] * self.c.point(self.labels[j]);
        }
        let center = acc / rkk;
        let rkk2 = rkk * rkk;
        let m = self.c.size();
        let mut dist = std::mem::take(&mut self.dist[level]);
        dist.clear();
        dist.extend(self.c.points().iter().map(|s| rkk2 * (center - s).norm_sqr()));

        let mut used = 0u64;
        for _ in 0..m {
            // Lazy Schnorr–Euchner selection; ties resolve to the lower label.
            let mut pick = usize::MAX;
            let mut pick_d = f64::INFINITY;
            for (i, &d) in dist.iter().enumerate() {
                if used & (1 << i) == 0 && (pick == usize::MAX || d < pick_d) {
                    pick = i;
                    pick_d = d;
                }
            }
            let metric = partial + pick_d;
            if metric > self.radius() {
                break;
            }
            used |= 1 << pick;
            self.nodes += 1;
            self.labels[level] = pick;
            if level == 0 {
                self.leaf(metric);
            } else {
                self.descend(level - 1, metric);
            }
        }
        self.dist[level] = dist;
    }

    fn leaf(&mut self, metric: f64) {
        if self.list.len() < self.list_size {
            self.list.push(Leaf {
                metric,
                labels: self.labels.clone(),
            });
            if self.list.len() == self.list_size {
                self.refresh_worst();
            }
        } else if leaf_less(metric, &self.labels, &self.list[self.worst]) {
            let slot = &mut self.list[self.worst];
            slot.metric = metric;
            slot.labels.copy_from_slice(&self.labels);
            self.refresh_worst();
        }
    }

    fn refresh_worst(&mut self) {
        let mut w = 0;
        for i in 1..self.list.len() {
            if leaf_less(self.list[w].metric, &self.list[w].labels, &self.list[i]) {
                w = i;
            }
        }
        self.worst = w;
    }
}

struct Outcome {
    list: Vec<Leaf>,
    nodes: u64,
    reg: Option<f64>,
    h_eff: ComplexMatrix,
}

fn run(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64, list_size: usize) -> Outcome {
    let nt = h.cols();
    let h_eff = power_normalized(h);
    let plain = if nt <= h.rows() { qr_decompose(&h_eff).ok() } else { None };
    let (reg, q, r, y_ext) = match plain {
        Some((q, r)) => (None, q, r, y.to_vec()),
        None => {
            let reg = regularizer(n0);
            let ext = h_eff.vstack(&ComplexMatrix::identity(nt).scale(Complex64::new(reg.sqrt(), 0.0)));
            let (q, r) = qr_decompose(&ext).expect("extended channel has full column rank");
            let mut y_ext = y.to_vec();
            y_ext.resize(y.len() + nt, Complex64::new(0.0, 0.0));
            (Some(reg), q, r, y_ext)
        }
    };
    let z = q.adjoint_mul_vec(&y_ext);
    let mut search = Search {
        r: &r,
        z: &z,
        c,
        list_size,
        labels: vec![0; nt],
        list: Vec::with_capacity(list_size.min(1 << 12)),
        worst: 0,
        nodes: 0,
        dist: vec![Vec::with_capacity(c.size()); nt],
    };
    if nt > 0 {
        search.descend(nt - 1, 0.0);
    }
    let Search { list, nodes, .. } = search;
    Outcome {
        list,
        nodes,
        reg,
        h_eff,
    }
}

fn best_index(list: &[Leaf]) -> usize {
    let mut b = 0;
    for i in 1..list.len() {
        if leaf_less(list[i].metric, &list[i].labels, &list[b]) {
            b = i;
        }
    }
    b
}

/// Exact ML detection by sphere decoding. Overloaded or rank-deficient
/// channels use the MMSE-extended system, giving the exact minimizer of the
/// regularized metric.
pub fn detect_sphere(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64) -> DetectionResult {
    let out = run(h, y, c, n0, 1);
    let labels = out.list[best_index(&out.list)].labels.clone();
    let mut res = DetectionResult::from_labels(labels, c, &out.h_eff, y, out.reg);
    res.nodes_visited = out.nodes;
    res
}

/// List sphere decoding with max-log LLRs over the `list_size` best leaves.
pub fn detect_soft(h: &ComplexMatrix, y: &[Complex64], c: &Constellation, n0: f64, list_size: usize) -> DetectionResult {
    let list_size = list_size.max(1);
    let out = run(h, y, c, n0, list_size);
    let b = c.bits_per_symbol();
    let nbits = h.cols() * b;
    let bi = best_index(&out.list);
    let best = out.list[bi].metric;
    let mut best0 = vec![f64::INFINITY; nbits];
    let mut best1 = vec![f64::INFINITY; nbits];
    for leaf in &out.list {
        for (s, &l) in leaf.labels.iter().enumerate() {
            for k in 0..b {
                let slot = if c.label_bit(l, k) == 0 { &mut best0 } else { &mut best1 };
                let idx = s * b + k;
                if leaf.metric < slot[idx] {
                    slot[idx] = leaf.metric;
                }
            }
        }
    }
    let labels = out.list[bi].labels.clone();
    let mut res = DetectionResult::from_labels(labels, c, &out.h_eff, y, out.reg);
    res.nodes_visited = out.nodes;
    res.llrs = Some(llrs_from_bit_minima(&best0, &best1, best, n0));
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::build_constellation;

    #[test]
    fn noiseless_identity() {
        let c = build_constellation(16).unwrap();
        let h = ComplexMatrix::identity(3);
        let x = [c.point(3), c.point(9), c.point(15)];
        let y: Vec<_> = x.iter().map(|v| v / 3f64.sqrt()).collect();
        let r = detect_sphere(&h, &y, &c, 1e-3);
        assert_eq!(r.labels, vec![3, 9, 15]);
        assert!(r.nodes_visited >= 3);
        assert!(!r.regularized);
        assert!(r.metric < 1e-20);
    }

    #[test]
    fn overloaded_uses_regularized_metric() {
        let c = build_constellation(4).unwrap();
        let h = ComplexMatrix::from_row_major(1, 2, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let r = detect_sphere(&h, &[Complex64::new(0.3, 0.1)], &c, 0.1);
        assert!(r.regularized);
        assert_eq!(r.labels.len(), 2);
    }

    #[test]
    fn list_keeps_best_leaves() {
        let c = build_constellation(4).unwrap();
        let h = ComplexMatrix::identity(1);
        let out = run(&h, &[Complex64::new(0.2, 0.1)], &c, 1.0, 4);
        assert_eq!(out.list.len(), 4);
        let mut labels: Vec<_> = out.list.iter().map(|l| l.labels[0]).collect();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }
}
