use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pvec::Result;
use serde_json::json;

use crate::config::RunConfig;

/// Writes `run_meta.json` describing a finished command: what ran, with
/// which effective settings, and how long it took.
pub fn write_run_meta(
    out: &Path,
    command: &str,
    run: &RunConfig,
    extra: serde_json::Value,
    started: Instant,
) -> Result<()> {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": run.values(),
        "out_dir": out.display().to_string(),
        "wall_ms": started.elapsed().as_millis() as u64,
        "finished_at_unix": unix,
        "extra": extra,
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| {
        pvec::Error::Data(format!("failed to encode run metadata: {e}"))
    })?;
    fs::write(out.join("run_meta.json"), text)?;
    Ok(())
}
