//! Run directories, artifacts, manifests and the error-to-exit-code map.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use netdiff_core::coeff::CoeffError;
use netdiff_core::gaussian::GaussianError;
use netdiff_core::graph::GraphError;
use netdiff_core::hc::HcError;
use netdiff_core::mrf::MrfError;
use netdiff_core::sde::SdeError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Numerical(_) | Self::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<GraphError> for RunError {
    fn from(e: GraphError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<CoeffError> for RunError {
    fn from(e: CoeffError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<GaussianError> for RunError {
    fn from(e: GaussianError) -> Self {
        match e {
            GaussianError::Singular(_) => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<HcError> for RunError {
    fn from(e: HcError) -> Self {
        match e {
            HcError::ZeroNormalizer => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<SdeError> for RunError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::Hc(inner) => inner.into(),
            SdeError::NonFinite { .. } | SdeError::Eval(_) | SdeError::Io(_) => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<MrfError> for RunError {
    fn from(e: MrfError) -> Self {
        match e {
            MrfError::Gaussian(inner) => inner.into(),
            _ => Self::Config(e.to_string()),
        }
    }
}

/// A file produced by a command, relative to the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), bytes: text.into().into_bytes() }
    }

    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
        text.push('\n');
        Self::text(name, text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// What a command hands back to the runner.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    /// Lines printed to stdout.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn add(&mut self, artifact: Artifact) {
        self.artifacts.push(artifact);
    }

    pub fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    artifacts: Vec<ManifestEntry>,
    checks: &'a [Check],
    passed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").expect("writing to a string");
    }
    s
}

/// Hash of the command name and the canonical config document. Keys of
/// `serde_json::Value` objects are sorted, so the hash ignores key order.
pub fn config_hash(command: &str, canonical: &serde_json::Value) -> String {
    sha256_hex(format!("{command}\n{canonical}").as_bytes())
}

pub struct RunRecord {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

/// Writes the outcome under `out/<command>-<hash prefix>`: the canonical
/// config, every artifact, `manifest.json` with checksums and a `run.log`
/// sidecar holding the only time-dependent data.
pub fn write_run(
    out: &Path,
    command: &str,
    canonical: &serde_json::Value,
    outcome: Outcome,
    started: Instant,
) -> Result<RunRecord, RunError> {
    let hash = config_hash(command, canonical);
    let dir = out.join(format!("{command}-{}", &hash[..16]));
    std::fs::create_dir_all(&dir)?;
    let mut files = vec![Artifact::json("config.json", canonical)];
    files.extend(outcome.artifacts.iter().cloned());
    let mut entries = Vec::with_capacity(files.len());
    for a in &files {
        if a.name == "manifest.json" || a.name == "run.log" || a.name.contains(['/', '\\']) {
            return Err(RunError::Config(format!("artifact name `{}` is reserved or nested", a.name)));
        }
        std::fs::write(dir.join(&a.name), &a.bytes)?;
        entries.push(ManifestEntry { path: a.name.clone(), bytes: a.bytes.len(), sha256: sha256_hex(&a.bytes) });
    }
    let manifest =
        Manifest { command, config_hash: &hash, artifacts: entries, checks: &outcome.checks, passed: outcome.passed() };
    let m = Artifact::json("manifest.json", &manifest);
    std::fs::write(dir.join(&m.name), &m.bytes)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let log = format!(
        "finished_unix={stamp}\nelapsed_ms={}\ncommand={command}\nconfig_hash={hash}\npassed={}\n",
        started.elapsed().as_millis(),
        outcome.passed()
    );
    std::fs::write(dir.join("run.log"), log)?;
    Ok(RunRecord { dir, outcome })
}
