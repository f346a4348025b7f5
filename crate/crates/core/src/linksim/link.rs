//! One packet per stream through channel, detector and decoder.

use super::image::TILE_BYTES;
use crate::channel::{apply_awgn_with, ChannelTrack};
use crate::detect::{detect, DetectError, DetectOptions, DetectorKind};
use crate::fec::{bits_to_bytes, bytes_to_bits, coded_len, conv_encode, crc_attach, viterbi_decode};
use crate::modem::Constellation;
use crate::rng::SimRng;
use num_complex::Complex64;

/// Header: stream id (1 byte) and tile index (2 bytes, little-endian).
pub const HEADER_BYTES: usize = 3;
/// Header, tile and CRC-32.
pub const PACKET_BYTES: usize = HEADER_BYTES + TILE_BYTES + crate::fec::CRC_LEN;
pub const PACKET_BITS: usize = PACKET_BYTES * 8;

/// Builds the framed packet carrying one 8×8 tile.
pub fn build_packet(stream: u8, tile_index: u16, tile: &[u8]) -> Vec<u8> {
    assert_eq!(tile.len(), TILE_BYTES);
    let mut body = Vec::with_capacity(HEADER_BYTES + TILE_BYTES);
    body.push(stream);
    body.extend_from_slice(&tile_index.to_le_bytes());
    body.extend_from_slice(tile);
    crc_attach(&body)
}

/// Tile bytes of a received packet.
pub fn packet_tile(packet: &[u8]) -> &[u8] {
    &packet[HEADER_BYTES..HEADER_BYTES + TILE_BYTES]
}

/// Bits on the air per packet, before padding to whole symbols.
pub fn air_bits(coding: bool) -> usize {
    if coding {
        coded_len(PACKET_BITS)
    } else {
        PACKET_BITS
    }
}

/// Channel uses needed to carry one packet per stream.
pub fn uses_per_packet(coding: bool, bits_per_symbol: usize) -> usize {
    air_bits(coding).div_ceil(bits_per_symbol)
}

#[derive(Debug, Clone, Copy)]
pub struct LinkParams<'a> {
    pub detector: DetectorKind,
    pub constellation: &'a Constellation,
    pub n0: f64,
    pub coding: bool,
    pub list_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkOutcome {
    pub rx_frames: Vec<Vec<u8>>,
    /// Info-bit errors per stream.
    pub bit_errors: Vec<u64>,
    pub symbol_errors: u64,
    pub symbols: u64,
    pub nodes: u64,
    pub uses: u64,
    pub degenerate: bool,
    /// Order-sensitive hash of every channel matrix used.
    pub channel_checksum: u64,
}

/// Hook for display samples: equalized outputs or antenna-0 observations.
pub trait SampleSink {
    fn wants_more(&self) -> bool;
    fn push(&mut self, z: Complex64);
}

impl SampleSink for Vec<Complex64> {
    fn wants_more(&self) -> bool {
        self.len() < 256
    }

    fn push(&mut self, z: Complex64) {
        Vec::push(self, z);
    }
}

fn mix(h: u64, v: u64) -> u64 {
    (h ^ v).wrapping_mul(0x0100_0000_01B3).rotate_left(17)
}

/// Sends `frames[s]` on stream `s` over consecutive channel uses drawn from
/// `track`, detects every use, and decodes each stream.
pub fn transmit_frames(
    params: &LinkParams<'_>,
    frames: &[Vec<u8>],
    track: &mut ChannelTrack,
    noise: &mut SimRng,
    mut samples: Option<&mut dyn SampleSink>,
) -> Result<LinkOutcome, DetectError> {
    let c = params.constellation;
    let bps = c.bits_per_symbol();
    let nt = frames.len();
    let info_bits: Vec<Vec<u8>> = frames.iter().map(|f| bytes_to_bits(f)).collect();
    let k = info_bits[0].len();
    let air: Vec<Vec<u8>> = info_bits
        .iter()
        .map(|b| {
            let mut a = if params.coding { conv_encode(b) } else { b.clone() };
            let padded = a.len().div_ceil(bps) * bps;
            a.resize(padded, 0);
            a
        })
        .collect();
    let air_len = if params.coding { coded_len(k) } else { k };
    let uses = air[0].len() / bps;

    let opts = DetectOptions {
        soft: params.coding,
        list_size: params.list_size,
    };
    let mut rx_soft: Vec<Vec<f64>> = vec![Vec::with_capacity(uses * bps); nt];
    let mut rx_hard: Vec<Vec<u8>> = vec![Vec::with_capacity(uses * bps); nt];
    let mut out = LinkOutcome {
        symbols: (uses * nt) as u64,
        uses: uses as u64,
        ..Default::default()
    };
    let mut tx_labels = vec![0usize; nt];
    let mut x = vec![Complex64::new(0.0, 0.0); nt];
    let mut y = Vec::new();
    let mut checksum = 0xCBF2_9CE4_8422_2325u64;

    for u in 0..uses {
        for s in 0..nt {
            tx_labels[s] = c.label_from_bits(&air[s][u * bps..(u + 1) * bps]);
            x[s] = c.point(tx_labels[s]);
        }
        let h = track.next_channel();
        for z in h.as_slice() {
            checksum = mix(mix(checksum, z.re.to_bits()), z.im.to_bits());
        }
        apply_awgn_with(h, &x, params.n0, noise, &mut y).expect("frame count matches channel columns");
        let det = detect(params.detector, h, &y, c, params.n0, opts)?;
        out.nodes += det.nodes_visited;
        out.degenerate |= det.degenerate;
        out.symbol_errors += det.labels.iter().zip(&tx_labels).filter(|(a, b)| a != b).count() as u64;
        if let Some(sink) = samples.as_deref_mut() {
            if sink.wants_more() {
                match &det.equalized {
                    Some(eq) => {
                        for &z in eq {
                            if sink.wants_more() {
                                sink.push(z);
                            }
                        }
                    }
                    None => sink.push(y[0]),
                }
            }
        }
        for s in 0..nt {
            if let Some(llrs) = &det.llrs {
                rx_soft[s].extend_from_slice(&llrs[s * bps..(s + 1) * bps]);
            }
            rx_hard[s].extend_from_slice(&det.hard_bits[s * bps..(s + 1) * bps]);
        }
    }
    out.channel_checksum = checksum;

    for s in 0..nt {
        let bits = if params.coding {
            viterbi_decode(&rx_soft[s][..air_len], k).expect("soft length matches code")
        } else {
            rx_hard[s][..k].to_vec()
        };
        let errors = bits.iter().zip(&info_bits[s]).filter(|(a, b)| a != b).count() as u64;
        out.bit_errors.push(errors);
        out.rx_frames.push(bits_to_bytes(&bits));
    }
    Ok(out)
}
