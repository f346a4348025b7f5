//! Multi-user MIMO uplink detection and link-level simulation.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: complex QR, Cholesky and least squares.
//! * [`modem`]: Gray-mapped square QAM, slicing and scalar LLRs.
//! * [`channel`]: Rayleigh channels over an 8-port array and AWGN.
//! * [`detect`]: ZF, MMSE, SIC, exhaustive ML and sphere decoding.
//! * [`fec`]: K=7 convolutional code, soft Viterbi, CRC-32.
//! * [`linksim`]: Monte-Carlo sweeps and the tick-driven live session.
//!
//! With the default `parallel` feature, sweeps spread independent trials
//! over a rayon pool; without it they run on the calling thread. Results are
//! bit-identical either way.

pub mod channel;
pub mod detect;
pub mod fec;
pub mod linksim;
pub mod modem;
pub mod numerics;
pub mod rng;

pub use num_complex::Complex64;
