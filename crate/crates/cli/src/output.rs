use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

pub type BoxResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Output directory. Data files depend only on the inputs and the seed;
/// run-specific facts go to `metadata.json`.
pub struct Output {
    dir: PathBuf,
    started: Instant,
    started_unix: u64,
}

impl Output {
    pub fn create(dir: &Path) -> BoxResult<Self> {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> BoxResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> BoxResult<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata(&self, command: &str, seed: u64, workers: usize, exit_code: u8) -> BoxResult<()> {
        self.json(
            "metadata.json",
            &json!({
                "command": command,
                "seed": seed,
                "workers": workers,
                "version": env!("CARGO_PKG_VERSION"),
                "started_unix": self.started_unix,
                "elapsed_secs": self.started.elapsed().as_secs_f64(),
                "exit_code": exit_code,
                "args": std::env::args().collect::<Vec<_>>(),
            }),
        )
    }
}
