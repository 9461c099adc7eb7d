//! Run manifests: enough provenance to reproduce every output file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

/// Written alongside every output directory. Replaying the same tool
/// version with the recorded flags and seed reproduces all CSV bytes;
/// only `started_at` varies between reruns.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_path: String,
    pub scenario_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub flags: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        scenario_path: &Path,
        scenario_hash: String,
        master_seed: u64,
        flags: BTreeMap<String, String>,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            scenario_path: scenario_path.display().to_string(),
            scenario_hash,
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            flags,
        }
    }
}
