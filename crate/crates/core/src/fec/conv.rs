//! Terminated K=7 rate-1/2 convolutional code.
//!
//! The shift register holds `(u_t, u_{t-1}, …, u_{t-6})` with the newest bit
//! in position 6, matching the usual reading of the octal generators (the
//! leading `1` of 133 and 171 taps the current input). Each input bit emits
//! the 133 parity bit followed by the 171 parity bit.

use super::FecError;

pub const CONSTRAINT_LENGTH: usize = 7;
pub const GENERATORS: [u32; 2] = [0o133, 0o171];
pub const TAIL_BITS: usize = CONSTRAINT_LENGTH - 1;
const STATES: usize = 1 << TAIL_BITS;

#[inline]
fn parity(v: u32) -> u8 {
    (v.count_ones() & 1) as u8
}

#[inline]
fn branch_output(reg: u32) -> [u8; 2] {
    [parity(reg & GENERATORS[0]), parity(reg & GENERATORS[1])]
}

/// Coded length for `k` information bits.
pub fn coded_len(k: usize) -> usize {
    2 * (k + TAIL_BITS)
}

/// Encodes `bits` (values 0/1) and appends six zero tail bits.
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(coded_len(bits.len()));
    let mut state = 0u32;
    for &u in bits.iter().chain(std::iter::repeat_n(&0u8, TAIL_BITS)) {
        let reg = ((u as u32 & 1) << TAIL_BITS) | state;
        out.extend_from_slice(&branch_output(reg));
        state = reg >> 1;
    }
    out
}

/// Soft-input Viterbi decoding of a terminated block.
///
/// `llrs` are per code bit, positive favouring 0. The branch metric is
/// `Σ ±llr/2` (plus when the branch emits 0) and the surviving path is the
/// one with the largest metric; on equal metrics the predecessor whose
/// oldest register bit is 0 wins.
pub fn viterbi_decode(llrs: &[f64], k: usize) -> Result<Vec<u8>, FecError> {
    let expected = coded_len(k);
    if llrs.len() != expected {
        return Err(FecError::LengthMismatch {
            expected,
            got: llrs.len(),
        });
    }
    let steps = k + TAIL_BITS;
    // Branch outputs indexed by the full 7-bit register.
    let outputs: Vec<[u8; 2]> = (0..(1u32 << CONSTRAINT_LENGTH)).map(branch_output).collect();

    let mut metric = [f64::NEG_INFINITY; STATES];
    metric[0] = 0.0;
    let mut next = [0.0f64; STATES];
    let mut decisions = vec![0u64; steps];

    for (t, pair) in llrs.chunks_exact(2).enumerate() {
        let half = [pair[0] * 0.5, pair[1] * 0.5];
        // Correlation for each of the four output pairs.
        let bm = |o: [u8; 2]| -> f64 {
            (if o[0] == 0 { half[0] } else { -half[0] }) + (if o[1] == 0 { half[1] } else { -half[1] })
        };
        let mut dec = 0u64;
        for (ns, slot) in next.iter_mut().enumerate() {
            let u = (ns >> 5) as u32;
            let base = ((ns & 0x1F) << 1) as u32;
            let reg0 = (u << TAIL_BITS) | base;
            let reg1 = reg0 | 1;
            let m0 = metric[base as usize] + bm(outputs[reg0 as usize]);
            let m1 = metric[(base | 1) as usize] + bm(outputs[reg1 as usize]);
            if m1 > m0 {
                *slot = m1;
                dec |= 1 << ns;
            } else {
                *slot = m0;
            }
        }
        decisions[t] = dec;
        metric = next;
    }

    let mut bits = vec![0u8; steps];
    let mut state = 0usize;
    for t in (0..steps).rev() {
        bits[t] = (state >> 5) as u8;
        let d = ((decisions[t] >> state) & 1) as usize;
        state = ((state & 0x1F) << 1) | d;
    }
    bits.truncate(k);
    Ok(bits)
}
