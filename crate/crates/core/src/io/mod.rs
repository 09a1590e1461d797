//! Text formats: numeric emission, the key-value run configuration, run
//! metadata sidecars and the `date,roe,rate` time-series ingestion.

mod config;
mod timeseries;

pub use config::{ConfigError, KvConfig};
pub use timeseries::{load_timeseries, parse_timeseries, write_timeseries, IngestError};

use std::path::Path;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Writes `value` as pretty JSON to `path`.
pub fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}
