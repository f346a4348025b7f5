//! Session configuration, its JSON wire form, and partial updates.

use crate::channel::{FadingMode, MAX_STREAMS};
use crate::detect::{DetectorKind, ML_GUARD};
use serde::{Deserialize, Serialize};

pub const MIN_SNR_DB: f64 = -30.0;
pub const MAX_SNR_DB: f64 = 400.0;
pub const MAX_TICK_HZ: f64 = 1000.0;
pub const MAX_SYMBOLS_PER_TICK: u32 = 100_000;
/// Streams per active antenna (400 % overload).
pub const MAX_OVERLOAD: usize = 4;

/// Rejected configuration, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Full steering state of a live session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub detector: DetectorKind,
    pub n_streams: usize,
    pub antenna_mask: u8,
    pub modulation: u32,
    pub snr_db: f64,
    pub coding: bool,
    pub fading: FadingMode,
    pub tick_hz: f64,
    pub symbols_per_tick: u32,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::Sphere,
            n_streams: 4,
            antenna_mask: 0b0000_1111,
            modulation: 4,
            snr_db: 20.0,
            coding: true,
            fading: FadingMode::PerSymbol,
            tick_hz: 10.0,
            symbols_per_tick: 2000,
            seed: 1,
        }
    }
}

impl SessionConfig {
    pub fn n_rx(&self) -> usize {
        self.antenna_mask.count_ones() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=MAX_STREAMS).contains(&self.n_streams) {
            return Err(ConfigError::new("n_streams", "must be between 1 and 4"));
        }
        if self.antenna_mask == 0 {
            return Err(ConfigError::new("antenna_mask", "at least one antenna must be active"));
        }
        if self.n_streams > MAX_OVERLOAD * self.n_rx() {
            return Err(ConfigError::new(
                "n_streams",
                format!("{} streams on {} antennas exceeds 400% overload", self.n_streams, self.n_rx()),
            ));
        }
        if ![4, 16, 64].contains(&self.modulation) {
            return Err(ConfigError::new("modulation", "must be 4, 16 or 64"));
        }
        if !(self.snr_db.is_finite() && (MIN_SNR_DB..=MAX_SNR_DB).contains(&self.snr_db)) {
            return Err(ConfigError::new("snr_db", format!("must be within {MIN_SNR_DB}..={MAX_SNR_DB} dB")));
        }
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0 && self.tick_hz <= MAX_TICK_HZ) {
            return Err(ConfigError::new("tick_hz", format!("must be in (0, {MAX_TICK_HZ}]")));
        }
        if !(1..=MAX_SYMBOLS_PER_TICK).contains(&self.symbols_per_tick) {
            return Err(ConfigError::new(
                "symbols_per_tick",
                format!("must be between 1 and {MAX_SYMBOLS_PER_TICK}"),
            ));
        }
        if self.detector == DetectorKind::MlBrute {
            let candidates = (self.modulation as u64).pow(self.n_streams as u32);
            if candidates > ML_GUARD {
                return Err(ConfigError::new(
                    "detector",
                    format!("ML_BRUTE over {candidates} candidates exceeds the 2^20 guard"),
                ));
            }
        }
        Ok(())
    }

    /// Applies `delta` and validates the merged result.
    pub fn merged(&self, delta: &ConfigDelta) -> Result<SessionConfig, ConfigError> {
        let mut next = self.clone();
        if let Some(d) = &delta.detector {
            next.detector = d
                .parse()
                .map_err(|e: String| ConfigError::new("detector", e))?;
        }
        if let Some(n) = delta.n_streams {
            next.n_streams = usize::try_from(n).map_err(|_| ConfigError::new("n_streams", "out of range"))?;
        }
        if let Some(m) = delta.antenna_mask {
            next.antenna_mask = u8::try_from(m).map_err(|_| ConfigError::new("antenna_mask", "must fit in 8 ports (0..=255)"))?;
        }
        if let Some(m) = delta.modulation {
            next.modulation = u32::try_from(m).map_err(|_| ConfigError::new("modulation", "must be 4, 16 or 64"))?;
        }
        if let Some(s) = delta.snr_db {
            next.snr_db = s;
        }
        if let Some(c) = delta.coding {
            next.coding = c;
        }
        if let Some(f) = delta.fading {
            next.fading = f;
        }
        if let Some(t) = delta.tick_hz {
            next.tick_hz = t;
        }
        if let Some(s) = delta.symbols_per_tick {
            next.symbols_per_tick =
                u32::try_from(s).map_err(|_| ConfigError::new("symbols_per_tick", "out of range"))?;
        }
        if let Some(s) = delta.seed {
            next.seed = s;
        }
        next.validate()?;
        Ok(next)
    }

    /// Parses a complete config from JSON text, reporting line and column on
    /// syntax errors and the field name on semantic ones.
    pub fn from_json_str(text: &str) -> Result<SessionConfig, ConfigError> {
        let cfg: SessionConfig = serde_json::from_str(text).map_err(|e| {
            let field = unknown_or_missing_field(&e.to_string())
                .or_else(|| field_at_column(text.as_bytes(), e.line(), e.column()))
                .unwrap_or_else(|| "<file>".to_string());
            ConfigError::new(&field, format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn unknown_or_missing_field(msg: &str) -> Option<String> {
    for marker in ["unknown field `", "missing field `"] {
        if let Some(pos) = msg.find(marker) {
            let rest = &msg[pos + marker.len()..];
            return rest.split('`').next().map(str::to_string);
        }
    }
    None
}

/// Partial configuration update. Numeric fields are wide so that
/// out-of-range values reach validation and get a field-specific error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDelta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_streams: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna_mask: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coding: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading: Option<FadingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols_per_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConfigDelta {
    /// Parses a delta, naming the offending key when it is unknown or
    /// mistyped.
    pub fn from_json_slice(body: &[u8]) -> Result<ConfigDelta, ConfigError> {
        serde_json::from_slice(body).map_err(|e| {
            let msg = e.to_string();
            let field = unknown_or_missing_field(&msg)
                .or_else(|| field_at_column(body, e.line(), e.column()))
                .unwrap_or_else(|| "<body>".to_string());
            ConfigError::new(&field, msg)
        })
    }
}

/// Key whose value ends at the given error position, for type errors.
fn field_at_column(body: &[u8], line: usize, column: usize) -> Option<String> {
    let text = std::str::from_utf8(body).ok()?;
    let l = text.lines().nth(line.checked_sub(1)?)?;
    let prefix = l.get(..column.min(l.len()))?;
    let colon = prefix.rfind(':')?;
    let key = prefix[..colon].trim_end().strip_suffix('"')?;
    let start = key.rfind('"')?;
    Some(key[start + 1..].to_string())
}
