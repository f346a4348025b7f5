//! Tick-driven live session.
//!
//! Each stream continuously sends the tiles of its source image in raster
//! order. A tick transmits as many whole packets per stream as fit in
//! `symbols_per_tick` channel uses (at least one). Tiles that pass the CRC
//! are written into the stream's reconstructed frame; failed tiles are
//! written as the inverted source tile so corruption is visible. Tick `n`
//! draws its channel and noise from substreams `(Channel, n)` and
//! `(Noise, n)` of the configured seed.

use super::config::SessionConfig;
use super::image::{psnr_region, GrayImage, TILE_COUNT};
use super::link::{build_packet, packet_tile, transmit_frames, uses_per_packet, LinkParams};
use crate::channel::{ChannelTrack, SnrSpec, DEFAULT_COHERENCE};
use crate::detect::default_list_size;
use crate::fec::crc_check;
use crate::modem::{build_constellation, Constellation};
use crate::rng::{Purpose, SeedSchedule};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const SNAPSHOT_SCHEMA: u32 = 1;
/// Rolling metric window, in ticks.
pub const WINDOW_TICKS: usize = 50;
pub const MAX_CONSTELLATION_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMetrics {
    pub stream: usize,
    pub ber: f64,
    pub per: f64,
    pub tiles_delivered_ratio: f64,
    /// Absent until the first tile has been written.
    pub psnr_db: Option<f64>,
    pub goodput_bits: u64,
    pub tiles_attempted: u64,
    pub tiles_delivered: u64,
    pub tiles_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub ser: f64,
    pub mean_nodes_visited: f64,
}

/// Metrics emitted after every tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSnapshot {
    pub schema: u32,
    pub tick_index: u64,
    pub config_revision: u64,
    pub config: SessionConfig,
    pub streams: Vec<StreamMetrics>,
    pub aggregate: AggregateMetrics,
    /// `[re, im]` pairs: equalizer outputs for linear/SIC detection,
    /// antenna-0 observations for joint detection.
    pub constellation_samples: Vec<[f64; 2]>,
    pub degenerate_flag: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct TickCounts {
    bits: u64,
    bit_errors: u64,
    packets: u64,
    packet_errors: u64,
}

#[derive(Debug, Clone)]
struct StreamState {
    source: GrayImage,
    reconstructed: GrayImage,
    written: Vec<bool>,
    cursor: usize,
    window: VecDeque<TickCounts>,
}

impl StreamState {
    fn new(source: GrayImage) -> Self {
        Self {
            source,
            reconstructed: GrayImage::filled(0),
            written: vec![false; TILE_COUNT],
            cursor: 0,
            window: VecDeque::with_capacity(WINDOW_TICKS),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct AggregateCounts {
    symbols: u64,
    symbol_errors: u64,
    uses: u64,
    nodes: u64,
}

/// Single-writer simulation state behind a live session.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    revision: u64,
    tick: u64,
    constellation: Constellation,
    schedule: SeedSchedule,
    sources: Vec<GrayImage>,
    streams: Vec<StreamState>,
    aggregate: VecDeque<AggregateCounts>,
}

impl Session {
    /// Starts a session; stream `s` transmits `sources[s % len]`, or the
    /// built-in test pattern `s` when `sources` is empty.
    pub fn new(config: SessionConfig, sources: Vec<GrayImage>) -> Result<Self, super::ConfigError> {
        config.validate()?;
        let constellation = build_constellation(config.modulation).expect("validated modulation");
        let mut s = Self {
            schedule: SeedSchedule::new(config.seed),
            config,
            revision: 0,
            tick: 0,
            constellation,
            sources,
            streams: Vec::new(),
            aggregate: VecDeque::with_capacity(WINDOW_TICKS),
        };
        s.resize_streams();
        Ok(s)
    }

    fn source_for(&self, stream: usize) -> GrayImage {
        if self.sources.is_empty() {
            GrayImage::test_pattern(stream)
        } else {
            self.sources[stream % self.sources.len()].clone()
        }
    }

    fn resize_streams(&mut self) {
        let n = self.config.n_streams;
        self.streams.truncate(n);
        while self.streams.len() < n {
            let src = self.source_for(self.streams.len());
            self.streams.push(StreamState::new(src));
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Index of the next tick to run.
    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn source(&self, stream: usize) -> Option<&GrayImage> {
        self.streams.get(stream).map(|s| &s.source)
    }

    pub fn frame(&self, stream: usize) -> Option<&GrayImage> {
        self.streams.get(stream).map(|s| &s.reconstructed)
    }

    /// Replaces the configuration; call only between ticks. Rolling windows
    /// restart so metrics reflect the new setting.
    pub fn apply_config(&mut self, config: SessionConfig, revision: u64) -> Result<(), super::ConfigError> {
        config.validate()?;
        if config.modulation != self.config.modulation {
            self.constellation = build_constellation(config.modulation).expect("validated modulation");
        }
        if config.seed != self.config.seed {
            self.schedule = SeedSchedule::new(config.seed);
        }
        self.config = config;
        self.revision = revision;
        self.resize_streams();
        for s in &mut self.streams {
            s.window.clear();
        }
        self.aggregate.clear();
        Ok(())
    }

    /// Packets per stream in one tick.
    pub fn packets_per_tick(&self) -> usize {
        let per_packet = uses_per_packet(self.config.coding, self.constellation.bits_per_symbol());
        (self.config.symbols_per_tick as usize / per_packet).max(1)
    }

    /// Advances one tick and reports its metrics.
    pub fn step(&mut self) -> TickSnapshot {
        let cfg = self.config.clone();
        let nt = cfg.n_streams;
        let params = LinkParams {
            detector: cfg.detector,
            constellation: &self.constellation,
            n0: SnrSpec::new(cfg.snr_db).n0(),
            coding: cfg.coding,
            list_size: default_list_size(cfg.modulation),
        };
        let mut track = ChannelTrack::new(
            self.schedule.stream(Purpose::Channel, self.tick),
            nt,
            cfg.antenna_mask,
            cfg.fading,
            DEFAULT_COHERENCE,
        );
        let mut noise = self.schedule.stream(Purpose::Noise, self.tick);
        let mut samples = Vec::with_capacity(MAX_CONSTELLATION_SAMPLES);
        let mut tick_counts = vec![TickCounts::default(); nt];
        let mut delivered = vec![0u64; nt];
        let mut agg = AggregateCounts::default();
        let mut degenerate = false;

        for _ in 0..self.packets_per_tick() {
            let frames: Vec<Vec<u8>> = self
                .streams
                .iter()
                .enumerate()
                .map(|(s, st)| build_packet(s as u8, st.cursor as u16, &st.source.tile(st.cursor)))
                .collect();
            let out = transmit_frames(&params, &frames, &mut track, &mut noise, Some(&mut samples))
                .expect("validated configuration stays within the search guard");
            agg.symbols += out.symbols;
            agg.symbol_errors += out.symbol_errors;
            agg.uses += out.uses;
            agg.nodes += out.nodes;
            degenerate |= out.degenerate;
            for (s, st) in self.streams.iter_mut().enumerate() {
                let rx = &out.rx_frames[s];
                let tile = st.cursor;
                let ok = crc_check(rx);
                if ok {
                    st.reconstructed.set_tile(tile, packet_tile(rx));
                    delivered[s] += 1;
                } else {
                    let inverted: Vec<u8> = st.source.tile(tile).iter().map(|p| 255 - p).collect();
                    st.reconstructed.set_tile(tile, &inverted);
                }
                st.written[tile] = true;
                st.cursor = (tile + 1) % TILE_COUNT;
                let tc = &mut tick_counts[s];
                tc.bits += (rx.len() * 8) as u64;
                tc.bit_errors += out.bit_errors[s];
                tc.packets += 1;
                tc.packet_errors += u64::from(!ok);
            }
        }

        push_window(&mut self.aggregate, agg);
        let streams = self
            .streams
            .iter_mut()
            .enumerate()
            .map(|(s, st)| {
                push_window(&mut st.window, tick_counts[s]);
                let w = st.window.iter().fold(TickCounts::default(), |a, b| TickCounts {
                    bits: a.bits + b.bits,
                    bit_errors: a.bit_errors + b.bit_errors,
                    packets: a.packets + b.packets,
                    packet_errors: a.packet_errors + b.packet_errors,
                });
                let attempted = tick_counts[s].packets;
                StreamMetrics {
                    stream: s,
                    ber: ratio(w.bit_errors, w.bits),
                    per: ratio(w.packet_errors, w.packets),
                    tiles_delivered_ratio: ratio(w.packets - w.packet_errors, w.packets),
                    psnr_db: psnr_region(&st.source, &st.reconstructed, &st.written),
                    goodput_bits: delivered[s] * (super::image::TILE_BYTES as u64) * 8,
                    tiles_attempted: attempted,
                    tiles_delivered: delivered[s],
                    tiles_failed: attempted - delivered[s],
                }
            })
            .collect();
        let a = self.aggregate.iter().fold(AggregateCounts::default(), |a, b| AggregateCounts {
            symbols: a.symbols + b.symbols,
            symbol_errors: a.symbol_errors + b.symbol_errors,
            uses: a.uses + b.uses,
            nodes: a.nodes + b.nodes,
        });

        let snapshot = TickSnapshot {
            schema: SNAPSHOT_SCHEMA,
            tick_index: self.tick,
            config_revision: self.revision,
            config: cfg,
            streams,
            aggregate: AggregateMetrics {
                ser: ratio(a.symbol_errors, a.symbols),
                mean_nodes_visited: if a.uses == 0 { 0.0 } else { a.nodes as f64 / a.uses as f64 },
            },
            constellation_samples: samples.iter().take(MAX_CONSTELLATION_SAMPLES).map(|z| [z.re, z.im]).collect(),
            degenerate_flag: degenerate,
        };
        self.tick += 1;
        snapshot
    }
}

fn push_window<T>(w: &mut VecDeque<T>, v: T) {
    if w.len() == WINDOW_TICKS {
        w.pop_front();
    }
    w.push_back(v);
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Free-function form of [`Session::step`].
pub fn session_step(session: &mut Session) -> TickSnapshot {
    session.step()
}
