//! Deterministic file output: CSV with 17 significant digits and LF line
//! ends, pretty JSON, and a manifest hashing every emitted file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bvp::Profile;
use crate::model::{blow_down, ChartState};
use crate::{Error, Result};

/// `v` in scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// CSV text with a header row. Cells are taken verbatim.
pub fn csv_string<I>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for (k, row) in rows.into_iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Io(format!("row {k} has {} cells, header has {}", row.len(), header.len())));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Numeric CSV.
pub fn numeric_csv(header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    csv_string(header, rows.iter().map(|r| r.iter().map(|&v| fmt_f64(v)).collect()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub const PROFILE_COLUMNS: [&str; 7] = ["xi", "theta", "p", "q", "m1", "m2", "m3"];

/// Rows `(ξ, θ, p, q, m₁, m₂, m₃)`; the azimuth is the trapezoidal integral
/// of `q` from `φ(ξ₀) = 0`.
pub fn chart_rows(xs: &[f64], states: &[ChartState]) -> Vec<Vec<f64>> {
    let mut phi = 0.0;
    let mut rows = Vec::with_capacity(xs.len());
    for (k, (x, st)) in xs.iter().zip(states).enumerate() {
        if k > 0 {
            phi += 0.5 * (x - xs[k - 1]) * (st.q + states[k - 1].q);
        }
        let m = blow_down(st, phi).m;
        rows.push(vec![*x, st.theta, st.p, st.q, m[0], m[1], m[2]]);
    }
    rows
}

pub fn profile_rows(profile: &Profile) -> Vec<Vec<f64>> {
    chart_rows(&profile.mesh, &profile.states)
}

/// Reads a profile and checks its shape.
pub fn read_profile(path: &Path) -> Result<Profile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let p: Profile = serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if p.mesh.len() < 2 || p.mesh.len() != p.states.len() {
        return Err(Error::InvalidParameter("profile mesh and states must have equal length >= 2".into()));
    }
    if p.mesh.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("profile mesh must be strictly increasing".into()));
    }
    p.mp.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory of one command. Every file goes through [`add`](Self::add)
/// so the manifest written by [`finish`](Self::finish) is complete.
#[derive(Debug)]
pub struct ResultBundle {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    files: Vec<FileEntry>,
    started: Instant,
}

impl ResultBundle {
    pub fn create(dir: &Path, command: &str, config: serde_json::Value) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), command: command.into(), config, files: Vec::new(), started: Instant::now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        if name == MANIFEST_NAME || self.files.iter().any(|f| f.name == name) {
            return Err(Error::Io(format!("duplicate output file {name}")));
        }
        fs::write(self.dir.join(name), contents)?;
        self.files.push(FileEntry { name: name.into(), sha256: sha256_hex(contents), bytes: contents.len() as u64 });
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, to_json(value)?.as_bytes())
    }

    pub fn add_numeric_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        self.add(name, numeric_csv(header, rows)?.as_bytes())
    }

    pub fn finish(self) -> Result<Manifest> {
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        let manifest = Manifest {
            command: self.command,
            config: self.config,
            versions,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files,
        };
        fs::write(self.dir.join(MANIFEST_NAME), to_json(&manifest)?)?;
        Ok(manifest)
    }
}
