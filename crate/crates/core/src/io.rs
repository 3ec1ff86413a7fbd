//! File formats: spectral fields as JSON, trajectories as a manifest plus one
//! field file per node, CSV emission and content digests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{CVec3, FieldFlags, SpectralField, TimeGrid, Trajectory};
use crate::lattice::{LatticeSpec, WaveVector};

/// Tolerance for conjugate symmetry when a file claims a real field.
const READ_SYM_TOL: f64 = 1e-12;

type ModeRow = (i32, i32, i32, f64, f64, f64, f64, f64, f64);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFile {
    #[serde(rename = "N")]
    n: u32,
    flags: FieldFlags,
    modes: Vec<ModeRow>,
}

fn to_file(field: &SpectralField) -> FieldFile {
    let modes = field
        .modes()
        .map(|(k, v)| {
            let [a, b, c] = k.0;
            (
                a, b, c, v[0].re, v[0].im, v[1].re, v[1].im, v[2].re, v[2].im,
            )
        })
        .collect();
    FieldFile {
        n: field.spec().n(),
        flags: field.flags(),
        modes,
    }
}

fn from_file(f: FieldFile) -> Result<SpectralField> {
    let spec = LatticeSpec::new(f.n)?;
    let mut field = SpectralField::zeros(spec, f.flags);
    for (a, b, c, r1, i1, r2, i2, r3, i3) in f.modes {
        let k = WaveVector::new(a, b, c);
        if k.is_zero() || !spec.contains(k) {
            return Err(Error::OutsideLattice(k.0));
        }
        let vals = [r1, i1, r2, i2, r3, i3];
        if !vals.iter().all(|x| x.is_finite()) {
            return Err(Error::Format(format!("non-finite coefficient at {k}")));
        }
        field.set(
            k,
            CVec3::new(
                Complex64::new(r1, i1),
                Complex64::new(r2, i2),
                Complex64::new(r3, i3),
            ),
        )?;
    }
    field.check_invariants(READ_SYM_TOL)?;
    Ok(field)
}

pub fn field_to_json(field: &SpectralField) -> Result<String> {
    Ok(serde_json::to_string(&to_file(field))?)
}

pub fn field_from_json(s: &str) -> Result<SpectralField> {
    from_file(serde_json::from_str(s)?)
}

pub fn write_field(path: &Path, field: &SpectralField) -> Result<()> {
    let mut s = field_to_json(field)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<SpectralField> {
    let s = fs::read_to_string(path).map_err(|e| with_path(e, path))?;
    field_from_json(&s)
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Trajectory manifest; node files are resolved relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryManifest {
    #[serde(rename = "N")]
    pub n: u32,
    pub times: Vec<f64>,
    pub nodes: Vec<String>,
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>/node_XXXX.json`; returns every
/// path written, manifest first.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    let node_dir = dir.join(stem);
    fs::create_dir_all(&node_dir)?;
    let mut written = Vec::with_capacity(traj.len() + 1);
    let mut nodes = Vec::with_capacity(traj.len());
    for (i, f) in traj.fields().iter().enumerate() {
        let rel = format!("{stem}/node_{i:04}.json");
        let path = dir.join(&rel);
        write_field(&path, f)?;
        written.push(path);
        nodes.push(rel);
    }
    let manifest = TrajectoryManifest {
        n: traj.spec().n(),
        times: traj.times().to_vec(),
        nodes,
    };
    let mpath = dir.join(format!("{stem}.json"));
    fs::write(&mpath, to_json_pretty(&manifest)?)?;
    written.insert(0, mpath);
    Ok(written)
}

pub fn read_trajectory(manifest: &Path) -> Result<Trajectory> {
    let s = fs::read_to_string(manifest).map_err(|e| with_path(e, manifest))?;
    let m: TrajectoryManifest = serde_json::from_str(&s)?;
    if m.nodes.len() != m.times.len() {
        return Err(Error::Format(format!(
            "{} node files for {} times",
            m.nodes.len(),
            m.times.len()
        )));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    let fields = m
        .nodes
        .iter()
        .map(|rel| {
            let f = read_field(&base.join(rel))?;
            if f.spec().n() != m.n {
                return Err(Error::SpecMismatch(m.n, f.spec().n()));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(TimeGrid::new(m.times)?, fields)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Shortest round-trip decimal; `NaN`, `inf`, `-inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        serde_json::Number::from_f64(x).expect("finite").to_string()
    }
}

/// Comma-separated table with a header row and LF line endings.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut c = Csv {
            buf: String::new(),
            columns: header.len(),
        };
        c.push_raw(header.iter().map(|s| s.to_string()));
        c
    }

    fn push_raw(&mut self, cells: impl Iterator<Item = String>) {
        let mut n = 0;
        for (i, cell) in cells.enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{cell}");
            n += 1;
        }
        debug_assert_eq!(n, self.columns, "row width");
        self.buf.push('\n');
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns, "row width");
        self.push_raw(cells.into_iter());
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| with_path(e, path))?))
}
