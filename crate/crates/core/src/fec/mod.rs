//! Channel coding for the packet pipeline: a terminated K=7, rate-1/2
//! convolutional code (generators 133/171 octal) decoded by a soft-input
//! Viterbi decoder, and CRC-32 framing.

mod conv;
mod crc;

pub use conv::{conv_encode, coded_len, viterbi_decode, CONSTRAINT_LENGTH, GENERATORS, TAIL_BITS};
pub use crc::{crc32, crc_attach, crc_check, CRC_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FecError {
    #[error("expected {expected} soft values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Unpacks bytes into bits, most significant bit first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Packs bits (MSB first) into bytes; a trailing partial byte is zero padded.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}
