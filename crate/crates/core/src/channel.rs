//! Rayleigh MU-MIMO channel and AWGN.
//!
//! A channel draw is defined over the full 8-port array: ports are drawn in
//! ascending order, four transmitter columns each, and the active ports are
//! then picked out by the antenna mask. Only ports up to the highest active
//! one are drawn, which leaves the values of lower ports unchanged when a
//! higher port is toggled. Transmitter columns beyond `n_tx` are drawn and
//! discarded, so changing the stream count does not reshuffle the others.

use crate::numerics::ComplexMatrix;
use crate::rng::{Purpose, SimRng};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MAX_RX_PORTS: usize = 8;
pub const MAX_STREAMS: usize = 4;
/// Coherence length used for block fading.
pub const DEFAULT_COHERENCE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("antenna mask {mask:#010b} does not select {n_rx} receive antennas")]
    BadMask { mask: u8, n_rx: usize },
    #[error("stream count {0} outside 1..=4")]
    BadStreams(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// H held for a coherence interval of channel uses.
    Block,
    /// Independent H every channel use.
    #[default]
    PerSymbol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
    pub fading: FadingMode,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn n_rx(&self) -> usize {
        self.h.rows()
    }

    pub fn n_tx(&self) -> usize {
        self.h.cols()
    }
}

/// Noise level for a given SNR. Total transmit energy per channel use is 1,
/// split equally across streams; `n0` is the noise variance per receive
/// antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSpec {
    pub snr_db: f64,
}

impl SnrSpec {
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db }
    }

    pub fn n0(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }
}

fn check_mask(n_rx: usize, n_tx: usize, mask: u8) -> Result<(), ChannelError> {
    if n_rx == 0 || mask.count_ones() as usize != n_rx {
        return Err(ChannelError::BadMask { mask, n_rx });
    }
    if !(1..=MAX_STREAMS).contains(&n_tx) {
        return Err(ChannelError::BadStreams(n_tx));
    }
    Ok(())
}

/// Draws one channel matrix from `rng` (see module docs for the layout).
pub fn draw_channel_with(rng: &mut SimRng, n_tx: usize, mask: u8) -> ComplexMatrix {
    let top = 8 - mask.leading_zeros() as usize;
    let n_rx = mask.count_ones() as usize;
    let mut data = Vec::with_capacity(n_rx * n_tx);
    for port in 0..top {
        let active = mask & (1 << port) != 0;
        for col in 0..MAX_STREAMS {
            let z = rng.complex_gaussian();
            if active && col < n_tx {
                data.push(z);
            }
        }
    }
    ComplexMatrix::from_row_major(n_rx, n_tx, data)
}

/// Reproducible channel for `seed`; rows follow the set mask bits in
/// ascending port order.
pub fn draw_channel(n_rx: usize, n_tx: usize, antenna_mask: u8, seed: u64) -> Result<ChannelRealization, ChannelError> {
    check_mask(n_rx, n_tx, antenna_mask)?;
    let mut rng = SimRng::from_seed(seed, Purpose::Channel, 0);
    Ok(ChannelRealization {
        h: draw_channel_with(&mut rng, n_tx, antenna_mask),
        fading: FadingMode::Block,
        seed,
    })
}

/// `y = H·x/√N_t + n` with noise drawn from `rng`.
pub fn apply_awgn_with(h: &ComplexMatrix, x: &[Complex64], n0: f64, rng: &mut SimRng, out: &mut Vec<Complex64>) -> Result<(), ChannelError> {
    if x.len() != h.cols() {
        return Err(ChannelError::DimensionMismatch {
            expected: h.cols(),
            got: x.len(),
        });
    }
    let scale = 1.0 / (h.cols() as f64).sqrt();
    let sigma = n0.sqrt();
    out.clear();
    for i in 0..h.rows() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, xj) in x.iter().enumerate() {
            acc += h[(i, j)] * xj;
        }
        out.push(acc * scale + rng.complex_gaussian() * sigma);
    }
    Ok(())
}

pub fn apply_awgn(channel: &ChannelRealization, x: &[Complex64], snr: SnrSpec, seed: u64) -> Result<Vec<Complex64>, ChannelError> {
    let mut rng = SimRng::from_seed(seed, Purpose::Noise, 0);
    let mut y = Vec::with_capacity(channel.n_rx());
    apply_awgn_with(&channel.h, x, snr.n0(), &mut rng, &mut y)?;
    Ok(y)
}

/// Sequence of channel matrices over consecutive channel uses.
#[derive(Debug, Clone)]
pub struct ChannelTrack {
    rng: SimRng,
    n_tx: usize,
    mask: u8,
    fading: FadingMode,
    coherence: usize,
    used: usize,
    current: Option<ComplexMatrix>,
}

impl ChannelTrack {
    pub fn new(rng: SimRng, n_tx: usize, mask: u8, fading: FadingMode, coherence: usize) -> Self {
        Self {
            rng,
            n_tx,
            mask,
            fading,
            coherence: coherence.max(1),
            used: 0,
            current: None,
        }
    }

    /// Channel matrix for the next channel use.
    pub fn next_channel(&mut self) -> &ComplexMatrix {
        let fresh = match self.fading {
            FadingMode::PerSymbol => true,
            FadingMode::Block => self.used.is_multiple_of(self.coherence),
        };
        if fresh || self.current.is_none() {
            self.current = Some(draw_channel_with(&mut self.rng, self.n_tx, self.mask));
        }
        self.used += 1;
        self.current.as_ref().expect("channel drawn above")
    }
}
