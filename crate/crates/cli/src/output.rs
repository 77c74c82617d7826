//! Artifact writers: CSV traces, grid snapshots and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cpcgate::gridio::save_grid2d;
use cpcgate::propagator::Snapshot;
use cpcgate::RunRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TRACE_HEADER: &str = "z,F,n_si,n_a,front";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One output file with its content hash.
#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub sha256: String,
}

/// Collects artifacts written below one directory.
pub struct ArtifactWriter {
    root: PathBuf,
    prefix: String,
    pub artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            prefix: String::new(),
            artifacts: Vec::new(),
        })
    }

    /// Writer for a sub-directory whose artifact paths stay relative to
    /// this writer's root.
    pub fn subdir(&self, name: &str) -> Result<Self> {
        let root = self.root.join(name);
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root,
            prefix: format!("{}{name}/", self.prefix),
            artifacts: Vec::new(),
        })
    }

    fn record(&mut self, name: &str, kind: &'static str, z: Option<f64>, label: Option<String>) -> Result<()> {
        let path = self.root.join(name);
        let bytes = fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
        self.artifacts.push(Artifact {
            path: format!("{}{name}", self.prefix),
            kind,
            z,
            label,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn text(&mut self, name: &str, kind: &'static str, body: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, kind, None, None)
    }

    pub fn snapshot(&mut self, name: &str, snap: &Snapshot, label: String) -> Result<()> {
        let path = self.root.join(name);
        save_grid2d(&path, &snap.psi_si).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, "snapshot", Some(snap.z), Some(label))
    }

    pub fn absorb(&mut self, other: ArtifactWriter) {
        self.artifacts.extend(other.artifacts);
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// `z,F,n_si,n_a,front`, one row per step including the input row.
pub fn trace_csv(rec: &RunRecord) -> String {
    let mut s = String::with_capacity(64 * rec.z_trace.len());
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for n in 0..rec.z_trace.len() {
        writeln!(
            s,
            "{},{},{},{},{}",
            num(rec.z_trace[n]),
            num(rec.fidelity_trace[n]),
            num(rec.norm_si_trace[n]),
            num(rec.norm_a_trace[n]),
            num(rec.front_trace[n])
        )
        .expect("string write");
    }
    s
}

/// `z` then `re,im` columns for every probe.
pub fn probes_csv(rec: &RunRecord, probes: &[(f64, f64)]) -> String {
    let mut s = String::from("z");
    for (eta, nu) in probes {
        write!(s, ",re({eta};{nu}),im({eta};{nu})").expect("string write");
    }
    s.push('\n');
    for (n, z) in rec.z_trace.iter().enumerate() {
        write!(s, "{}", num(*z)).expect("string write");
        for tr in &rec.probe_traces {
            write!(s, ",{},{}", num(tr[n].re), num(tr[n].im)).expect("string write");
        }
        s.push('\n');
    }
    s
}

/// CSV field, quoted when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Serialize)]
pub struct Software {
    pub name: &'static str,
    pub version: &'static str,
}

pub const SOFTWARE: Software = Software {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
};

/// Summary written next to every run's artifacts.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub software: Software,
    /// SHA-256 of the canonical resolved configuration.
    pub config_digest: String,
    pub config: serde_json::Value,
    pub input: String,
    pub steps: usize,
    pub wall_clock_seconds: f64,
    pub final_fidelity: f64,
    pub final_n_a: f64,
    pub max_conservation_drift: f64,
    pub zero_norm_flag: bool,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
