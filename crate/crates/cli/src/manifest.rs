//! Per-run manifest: seed, config hash, artifact paths, timings.

use std::path::Path;
use std::time::Duration;

use gpr_recon_core::Result;

/// FNV-1a over the canonical config string.
fn fnv1a64(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &str) -> Self {
        Manifest {
            lines: vec![
                format!("tool gpr-recon {}", env!("CARGO_PKG_VERSION")),
                format!("command {command}"),
                format!("seed {seed}"),
                format!("config_hash {:016x}", fnv1a64(config)),
            ],
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.lines.push(format!("input {}", path.display()));
    }

    pub fn output(&mut self, path: &Path) {
        self.lines.push(format!("output {}", path.display()));
    }

    pub fn timing(&mut self, stage: &str, elapsed: Duration) {
        self.lines
            .push(format!("timing_ms {stage} {}", elapsed.as_millis()));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.lines.join("\n") + "\n")?;
        Ok(())
    }
}
