//! Output directories: CSV/JSON tables, trajectory files and the run
//! manifest.
//!
//! Every CSV starts with one `#` comment line naming the manifest and the
//! config hash, followed by an RFC 4180 header row whose column names carry
//! their unit suffix.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cavity::EnergyBreakdown;
use crate::config::Format;
use crate::dynamics::Trajectory;
use crate::ensemble::RNG_ALGORITHM;
use crate::error::{Error, Result};
use crate::units::{au_to_fs, bohr_to_angstrom, fs_to_au, hartree_to_ev, UnitTable, BOHR_TO_ANGSTROM, HARTREE_TO_EV};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(v) if v.is_finite() => serde_json::json!(v),
            Cell::Num(_) | Cell::Empty => serde_json::Value::Null,
            Cell::Int(v) => serde_json::json!(v),
            Cell::Text(s) => serde_json::json!(s),
            Cell::Bool(b) => serde_json::json!(b),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    serde_json::Value::Object(
                        self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect(),
                    )
                })
                .collect(),
        )
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub rng_algorithm: String,
    pub seed: u64,
    pub units: UnitTable,
    /// Config with all defaults filled in.
    pub config: serde_json::Value,
    /// Values derived at run time (resolved λ, calibrated constants, …).
    pub resolved: serde_json::Value,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_clock_s: f64,
    pub files: Vec<String>,
}

/// A directory receiving the outputs of one command.
pub struct OutputDir {
    pub path: PathBuf,
    config_sha256: String,
    formats: Vec<Format>,
    manifest: RunManifest,
    files: Vec<String>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path, e)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        source: e,
    }
}

impl OutputDir {
    pub fn create(
        path: impl Into<PathBuf>,
        command: &str,
        config_text: &str,
        config: &impl Serialize,
        seed: u64,
        formats: &[Format],
    ) -> Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        let config_sha256 = sha256_hex(config_text);
        let started = unix_seconds();
        Ok(OutputDir {
            manifest: RunManifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                config_sha256: config_sha256.clone(),
                rng_algorithm: RNG_ALGORITHM.to_string(),
                seed,
                units: UnitTable::default(),
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                resolved: serde_json::Value::Object(Default::default()),
                started_unix_s: started,
                finished_unix_s: started,
                wall_clock_s: 0.0,
                files: Vec::new(),
            },
            path,
            config_sha256,
            formats: formats.to_vec(),
            files: Vec::new(),
        })
    }

    /// Record a derived value in the manifest.
    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        if let serde_json::Value::Object(m) = &mut self.manifest.resolved {
            m.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        }
    }

    fn header_comment(&self) -> String {
        format!("# manifest={MANIFEST_FILE} config_sha256={}\n", self.config_sha256)
    }

    fn record(&mut self, name: String) {
        if !self.files.contains(&name) {
            self.files.push(name);
        }
    }

    /// Write `name.csv` and/or `name.json` according to the formats.
    pub fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let rel = format!("{name}.csv");
            write_csv(&self.path.join(&rel), &self.header_comment(), table)?;
            self.record(rel);
        }
        if self.formats.contains(&Format::Json) {
            let rel = format!("{name}.json");
            self.write_json_file(&rel, &table.to_json())?;
        }
        Ok(())
    }

    /// Always CSV; used for trajectory files, which the analyze step reads.
    pub fn csv(&mut self, rel: &str, table: &Table) -> Result<()> {
        let path = self.path.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        write_csv(&path, &self.header_comment(), table)?;
        self.record(rel.to_string());
        Ok(())
    }

    /// JSON summary, written regardless of the table formats.
    pub fn json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        self.write_json_file(rel, value)
    }

    fn write_json_file(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let path = self.path.join(rel);
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::arg(format!("cannot serialize {rel}: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        self.record(rel.to_string());
        Ok(())
    }

    /// Write the manifest; call last.
    pub fn finish(mut self) -> Result<PathBuf> {
        let finished = unix_seconds();
        self.manifest.finished_unix_s = finished;
        self.manifest.wall_clock_s = finished - self.manifest.started_unix_s;
        self.manifest.files = self.files.clone();
        let path = self.path.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::arg(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(self.path)
    }
}

fn write_csv(path: &Path, comment: &str, table: &Table) -> Result<()> {
    let mut buf = comment.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns).map_err(|e| csv_err(path, e))?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Trajectory in laboratory units: fs, Å, Å/fs, eV/Å, eV; photon and dipole
/// in atomic units.
pub fn trajectory_table(trajectory: &Trajectory, labels: &[String]) -> Table {
    let mut cols = vec!["time_fs".to_string()];
    for (prefix, unit) in [("", "angstrom"), ("v", "angstrom_per_fs"), ("f", "ev_per_angstrom")] {
        for l in labels {
            for a in ["x", "y", "z"] {
                cols.push(format!("{prefix}{a}_{l}_{unit}"));
            }
        }
    }
    cols.extend(
        [
            "q_au",
            "p_au",
            "e_potential_ev",
            "e_kinetic_ev",
            "e_cavity_ev",
            "e_total_ev",
            "mu_x_au",
            "mu_y_au",
            "mu_z_au",
        ]
        .map(String::from),
    );
    let mut table = Table::new(cols);
    let vel = BOHR_TO_ANGSTROM * fs_to_au(1.0);
    let force = HARTREE_TO_EV / BOHR_TO_ANGSTROM;
    for k in 0..trajectory.len() {
        let mut row: Vec<Cell> = vec![au_to_fs(trajectory.times[k]).into()];
        row.extend(trajectory.positions[k].iter().map(|x| Cell::Num(bohr_to_angstrom(*x))));
        row.extend(trajectory.velocities[k].iter().map(|v| Cell::Num(v * vel)));
        match trajectory.forces.get(k) {
            Some(f) => row.extend(f.iter().map(|f| Cell::Num(f * force))),
            None => row.extend((0..3 * labels.len()).map(|_| Cell::Empty)),
        }
        let e = trajectory.energies.get(k).copied().unwrap_or_default();
        let mu = trajectory.dipole.get(k).copied().unwrap_or([0.0; 3]);
        row.extend(
            [
                trajectory.photon_q.get(k).copied().unwrap_or(0.0),
                trajectory.photon_p.get(k).copied().unwrap_or(0.0),
                hartree_to_ev(e.potential),
                hartree_to_ev(e.kinetic),
                hartree_to_ev(e.cavity),
                hartree_to_ev(e.total),
                mu[0],
                mu[1],
                mu[2],
            ]
            .map(Cell::Num),
        );
        table.push(row);
    }
    table
}

/// Read a trajectory CSV written by [`trajectory_table`] back into atomic
/// units.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let n = header.iter().filter(|h| h.starts_with("x_") && h.ends_with("_angstrom")).count();
    if n == 0 || header.len() != 1 + 9 * n + 9 || &header[0] != "time_fs" {
        return Err(Error::arg(format!("{} is not a trajectory file", path.display())));
    }
    let vel = BOHR_TO_ANGSTROM * fs_to_au(1.0);
    let force = HARTREE_TO_EV / BOHR_TO_ANGSTROM;
    let mut t = Trajectory::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::arg(format!("{}: {e}", path.display())))?;
        let d = 3 * n;
        t.times.push(fs_to_au(v[0]));
        t.positions.push(v[1..1 + d].iter().map(|x| x / BOHR_TO_ANGSTROM).collect());
        t.velocities.push(v[1 + d..1 + 2 * d].iter().map(|x| x / vel).collect());
        t.forces.push(v[1 + 2 * d..1 + 3 * d].iter().map(|x| x / force).collect());
        let r = &v[1 + 3 * d..];
        t.photon_q.push(r[0]);
        t.photon_p.push(r[1]);
        t.energies.push(EnergyBreakdown::new(r[2] / HARTREE_TO_EV, r[3] / HARTREE_TO_EV, r[4] / HARTREE_TO_EV));
        t.dipole.push([r[6], r[7], r[8]]);
    }
    if t.times.len() >= 2 {
        t.dt = t.times[1] - t.times[0];
    }
    t.stride = 1;
    Ok(t)
}

/// All `*.csv` trajectory files in `dir`, sorted by name.
pub fn read_trajectory_dir(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no trajectory files"),
        ));
    }
    paths.iter().map(|p| read_trajectory(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "test", "x = 1", &(), 3, &[Format::Csv, Format::Json]).unwrap();
        let mut t = Table::new(["a_fs", "label"]);
        t.push(vec![0.5.into(), "x,y".into()]);
        t.push(vec![Cell::Empty, "z".into()]);
        out.table("t", &t).unwrap();
        out.finish().unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(
            csv,
            format!("# manifest=manifest.json config_sha256={}\na_fs,label\n0.5,\"x,y\"\n,z\n", sha256_hex("x = 1"))
        );
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
        assert_eq!(json[0]["a_fs"], 0.5);
        assert!(json[1]["a_fs"].is_null());
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m["seed"], 3);
        assert_eq!(m["files"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn trajectory_round_trip() {
        let t = Trajectory {
            dt: 10.0,
            stride: 1,
            times: vec![0.0, 10.0],
            positions: vec![vec![0.0, 0.1, 0.2, 3.6, 0.0, 0.0]; 2],
            velocities: vec![vec![1e-4, 0.0, 0.0, -1e-4, 0.0, 0.0]; 2],
            photon_q: vec![0.5, 0.4],
            photon_p: vec![0.0, -0.1],
            energies: vec![EnergyBreakdown::new(0.01, 0.002, 0.0); 2],
            dipole: vec![[0.1, 0.0, 0.0]; 2],
            forces: vec![vec![0.01, 0.0, 0.0, -0.01, 0.0, 0.0]; 2],
        };
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "test", "", &(), 0, &[Format::Csv]).unwrap();
        out.csv("traj/t0.csv", &trajectory_table(&t, &["A".into(), "B".into()])).unwrap();
        let back = read_trajectory_dir(&dir.path().join("traj")).unwrap().remove(0);
        for (a, b) in back.positions[1].iter().zip(&t.positions[1]) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in back.forces[0].iter().zip(&t.forces[0]) {
            assert!((a - b).abs() < 1e-16);
        }
        assert!((back.times[1] - 10.0).abs() < 1e-12);
        assert!((back.energies[0].total - 0.012).abs() < 1e-15);
        assert!(read_trajectory_dir(&dir.path().join("missing")).is_err());
    }
}
