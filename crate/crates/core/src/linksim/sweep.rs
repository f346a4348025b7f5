//! Monte-Carlo sweeps over detectors and SNR points.
//!
//! A trial sends one packet on every stream. Trial `t` draws its channel,
//! noise and payload from substreams `(Channel, t)`, `(Noise, t)` and
//! `(Payload, t)` of the sweep seed, so every (detector, SNR) cell sees the
//! same channel matrices and the same unit-variance noise samples (scaled by
//! the cell's noise level). Counts are integers, which keeps parallel
//! reduction exact.

use super::link::{build_packet, transmit_frames, LinkParams};
use super::stats::wilson_interval;
use crate::channel::{ChannelTrack, FadingMode, SnrSpec, DEFAULT_COHERENCE};
use crate::detect::{default_list_size, DetectError, DetectorKind, ML_GUARD};
use crate::fec::crc_check;
use crate::modem::{build_constellation, Constellation, ModemError};
use crate::rng::{Purpose, SeedSchedule};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const CSV_HEADER: &str = "detector,snr_db,ser,ser_lo,ser_hi,ber,per,per_lo,per_hi,mean_nodes";

/// Execution strategy. `Parallel` degrades to sequential when the crate is
/// built without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub detectors: Vec<DetectorKind>,
    pub snrs_db: Vec<f64>,
    pub n_streams: usize,
    pub antenna_mask: u8,
    pub modulation: u32,
    pub coding: bool,
    pub fading: FadingMode,
    pub trials: u64,
    pub seed: u64,
    /// Soft sphere list length; `None` uses [`default_list_size`].
    pub list_size: Option<usize>,
    pub parallelism: Parallelism,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            detectors: vec![DetectorKind::Zf, DetectorKind::Sphere],
            snrs_db: vec![10.0],
            n_streams: 4,
            antenna_mask: 0b1111,
            modulation: 4,
            coding: false,
            fading: FadingMode::PerSymbol,
            trials: 100,
            seed: 1,
            list_size: None,
            parallelism: Parallelism::Parallel,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("antenna mask must select at least one port")]
    NoAntennas,
    #[error("stream count {0} outside 1..=4")]
    BadStreams(usize),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error("{detector} at {snr_db} dB: {source}")]
    Detect {
        detector: DetectorKind,
        snr_db: f64,
        source: DetectError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw counts for one (detector, SNR) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub symbols: u64,
    pub symbol_errors: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub packets: u64,
    pub packet_errors: u64,
    pub nodes: u64,
    pub uses: u64,
    pub channel_checksum: u64,
}

impl CellCounts {
    fn merge(mut self, o: CellCounts) -> CellCounts {
        self.symbols += o.symbols;
        self.symbol_errors += o.symbol_errors;
        self.bits += o.bits;
        self.bit_errors += o.bit_errors;
        self.packets += o.packets;
        self.packet_errors += o.packet_errors;
        self.nodes += o.nodes;
        self.uses += o.uses;
        // Commutative so the reduction order does not matter.
        self.channel_checksum = self.channel_checksum.wrapping_add(o.channel_checksum);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub ser: f64,
    pub ser_lo: f64,
    pub ser_hi: f64,
    pub ber: f64,
    pub per: f64,
    pub per_lo: f64,
    pub per_hi: f64,
    pub mean_nodes: f64,
    #[serde(skip)]
    pub counts: CellCounts,
}

impl SweepRow {
    fn from_counts(detector: DetectorKind, snr_db: f64, c: CellCounts) -> Self {
        let (ser_lo, ser_hi) = wilson_interval(c.symbol_errors, c.symbols);
        let (per_lo, per_hi) = wilson_interval(c.packet_errors, c.packets);
        Self {
            detector,
            snr_db,
            ser: c.symbol_errors as f64 / c.symbols as f64,
            ser_lo,
            ser_hi,
            ber: c.bit_errors as f64 / c.bits as f64,
            per: c.packet_errors as f64 / c.packets as f64,
            per_lo,
            per_hi,
            mean_nodes: c.nodes as f64 / c.uses as f64,
            counts: c,
        }
    }

    /// SER half-width of the 95 % Wilson interval.
    pub fn ser_half_width(&self) -> f64 {
        (self.ser_hi - self.ser_lo) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, detector: DetectorKind, snr_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.detector == detector && r.snr_db == snr_db)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.detector, r.snr_db, r.ser, r.ser_lo, r.ser_hi, r.ber, r.per, r.per_lo, r.per_hi, r.mean_nodes
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize")
    }
}

fn run_trial(spec: &SweepSpec, params: &LinkParams<'_>, schedule: &SeedSchedule, trial: u64) -> Result<CellCounts, DetectError> {
    let mut payload = schedule.stream(Purpose::Payload, trial);
    let frames: Vec<Vec<u8>> = (0..spec.n_streams)
        .map(|s| {
            let mut tile = [0u8; super::image::TILE_BYTES];
            payload.fill_bytes(&mut tile);
            build_packet(s as u8, (trial % 65536) as u16, &tile)
        })
        .collect();
    let mut track = ChannelTrack::new(
        schedule.stream(Purpose::Channel, trial),
        spec.n_streams,
        spec.antenna_mask,
        spec.fading,
        DEFAULT_COHERENCE,
    );
    let mut noise = schedule.stream(Purpose::Noise, trial);
    let out = transmit_frames(params, &frames, &mut track, &mut noise, None)?;
    let packet_errors = out
        .rx_frames
        .iter()
        .zip(&frames)
        .filter(|(rx, tx)| rx != tx || !crc_check(rx))
        .count() as u64;
    Ok(CellCounts {
        symbols: out.symbols,
        symbol_errors: out.symbol_errors,
        bits: (frames[0].len() * 8 * spec.n_streams) as u64,
        bit_errors: out.bit_errors.iter().sum(),
        packets: spec.n_streams as u64,
        packet_errors,
        nodes: out.nodes,
        uses: out.uses,
        channel_checksum: out.channel_checksum,
    })
}

fn run_cell(spec: &SweepSpec, c: &Constellation, schedule: &SeedSchedule, detector: DetectorKind, snr_db: f64) -> Result<CellCounts, DetectError> {
    let params = LinkParams {
        detector,
        constellation: c,
        n0: SnrSpec::new(snr_db).n0(),
        coding: spec.coding,
        list_size: spec.list_size.unwrap_or_else(|| default_list_size(spec.modulation)),
    };
    let trial = |t: u64| run_trial(spec, &params, schedule, t);
    match spec.parallelism {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
            use rayon::prelude::*;
            (0..spec.trials)
                .into_par_iter()
                .map(trial)
                .try_reduce(CellCounts::default, |a, b| Ok(a.merge(b)))
        }
        _ => (0..spec.trials).map(trial).try_fold(CellCounts::default(), |acc, r| Ok(acc.merge(r?))),
    }
}

/// Runs every (detector, SNR) cell and returns rows sorted by detector then
/// SNR.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable, SweepError> {
    if spec.trials == 0 {
        return Err(SweepError::NoTrials);
    }
    if spec.antenna_mask == 0 {
        return Err(SweepError::NoAntennas);
    }
    if !(1..=crate::channel::MAX_STREAMS).contains(&spec.n_streams) {
        return Err(SweepError::BadStreams(spec.n_streams));
    }
    let c = build_constellation(spec.modulation)?;
    let schedule = SeedSchedule::new(spec.seed);

    let mut cells: Vec<(DetectorKind, f64)> = spec
        .detectors
        .iter()
        .flat_map(|&d| spec.snrs_db.iter().map(move |&s| (d, s)))
        .collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cells.dedup();

    // Fail fast on the exhaustive-search guard before any work is done.
    let candidates = (c.size() as u64).saturating_pow(spec.n_streams as u32);
    if let Some(&(detector, snr_db)) = cells.iter().find(|(d, _)| *d == DetectorKind::MlBrute) {
        if candidates > ML_GUARD {
            return Err(SweepError::Detect {
                detector,
                snr_db,
                source: DetectError::TooLarge { candidates },
            });
        }
    }

    let mut rows = Vec::with_capacity(cells.len());
    for (detector, snr_db) in cells {
        let counts = run_cell(spec, &c, &schedule, detector, snr_db).map_err(|source| SweepError::Detect {
            detector,
            snr_db,
            source,
        })?;
        rows.push(SweepRow::from_counts(detector, snr_db, counts));
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(detectors: Vec<DetectorKind>, snrs: Vec<f64>) -> SweepSpec {
        SweepSpec {
            detectors,
            snrs_db: snrs,
            n_streams: 2,
            antenna_mask: 0b11,
            trials: 4,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_cells_are_error_free() {
        let t = run_sweep(&small(DetectorKind::ALL.to_vec(), vec![300.0])).unwrap();
        assert_eq!(t.rows.len(), 5);
        for r in &t.rows {
            assert_eq!(r.ser, 0.0, "{}", r.detector);
            assert_eq!(r.per, 0.0);
        }
    }

    #[test]
    fn rows_sorted_and_paired() {
        let t = run_sweep(&small(vec![DetectorKind::Sphere, DetectorKind::Zf], vec![8.0, 2.0])).unwrap();
        let order: Vec<_> = t.rows.iter().map(|r| (r.detector, r.snr_db)).collect();
        assert_eq!(
            order,
            vec![
                (DetectorKind::Zf, 2.0),
                (DetectorKind::Zf, 8.0),
                (DetectorKind::Sphere, 2.0),
                (DetectorKind::Sphere, 8.0)
            ]
        );
        let sums: Vec<u64> = t.rows.iter().map(|r| r.counts.channel_checksum).collect();
        assert!(sums.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sequential_matches_parallel() {
        let mut spec = small(vec![DetectorKind::Mmse, DetectorKind::Sphere], vec![4.0, 10.0]);
        spec.coding = true;
        let a = run_sweep(&spec).unwrap();
        spec.parallelism = Parallelism::Sequential;
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn guard_and_argument_errors() {
        let mut spec = small(vec![DetectorKind::MlBrute], vec![10.0]);
        spec.modulation = 64;
        spec.n_streams = 4;
        spec.antenna_mask = 0b1111;
        assert!(matches!(
            run_sweep(&spec),
            Err(SweepError::Detect {
                source: DetectError::TooLarge { .. },
                ..
            })
        ));
        let mut spec = small(vec![DetectorKind::Zf], vec![0.0]);
        spec.trials = 0;
        assert!(matches!(run_sweep(&spec), Err(SweepError::NoTrials)));
    }

    #[test]
    fn csv_layout() {
        let t = run_sweep(&small(vec![DetectorKind::Zf], vec![300.0])).unwrap();
        let csv = t.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let fields: Vec<_> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "ZF");
        assert_eq!(fields[1], "300");
        let json: serde_json::Value = serde_json::from_str(&t.to_json_string()).unwrap();
        assert_eq!(json[0]["detector"], "ZF");
        assert_eq!(json[0].as_object().unwrap().len(), 10);
    }
}
