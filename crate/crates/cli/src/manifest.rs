use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use snowball_ns::SnowballConfig;

pub const FILE: &str = "manifest.json";

const VOLUME_ESTIMATOR: &str =
    "deterministic: ln X_t = t ln((K-1)/K); final live points share X_T equally";
const ADAPTATION: &str =
    "proposal scale and acceptance history carry over between outer iterations";

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub output_dir: String,
    pub started_unix: u64,
    /// Unix times at which the run was resumed.
    #[serde(default)]
    pub resumed_unix: Vec<u64>,
    pub config: SnowballConfig,
    pub timing: bool,
    pub volume_estimator: String,
    pub adaptation: String,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(config: SnowballConfig, out: &Path, timing: bool) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            output_dir: out.display().to_string(),
            started_unix: now_unix(),
            resumed_unix: Vec::new(),
            config,
            timing,
            volume_estimator: VOLUME_ESTIMATOR.to_string(),
            adaptation: ADAPTATION.to_string(),
        }
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(FILE);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
