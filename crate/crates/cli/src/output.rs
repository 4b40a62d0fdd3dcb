//! On-disk artifacts: diagnostics CSV, binary field blobs, error markers.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use plap_core::{Grid, Trajectory, VectorField};

/// Frozen column order of the per-run time series.
pub const CSV_COLUMNS: [&str; 10] = [
    "time",
    "l2",
    "linf",
    "grad_l2",
    "grad_lp",
    "weighted_flux",
    "energy_residual",
    "overshoot",
    "B_mu",
    "phi_weight",
];

pub const BLOB_MAGIC: &[u8; 5] = b"PLAP1";

/// Name of the marker written into a job directory that failed.
pub const ERROR_MARKER: &str = "ERROR";

pub fn write_timeseries(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in &traj.diagnostics {
        let row = [
            r.time,
            r.l2_norm,
            r.linf_norm,
            r.grad_l2,
            r.grad_lp,
            r.weighted_flux,
            r.energy_residual,
            r.overshoot,
            r.b_mu,
            r.phi_weight,
        ];
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()
}

/// Writes rows of numbers under a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()
}

/// `PLAP1`, then `dim`, `n`, `components` as little-endian `u64`, then the
/// components one after another, each row-major, as little-endian `f64`.
pub fn write_blob(path: &Path, field: &VectorField) -> io::Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BLOB_MAGIC)?;
    for v in [grid.dim(), grid.n(), field.components().len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for x in field.components().iter().flatten() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_blob(path: &Path) -> io::Result<VectorField> {
    let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 29 || &bytes[..5] != BLOB_MAGIC {
        return Err(invalid("not a PLAP1 blob"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[5 + 8 * i..13 + 8 * i].try_into().unwrap()) as usize;
    let (dim, n, comps) = (word(0), word(1), word(2));
    let grid = Grid::new(dim, n).map_err(|e| invalid(&e.to_string()))?;
    let body = &bytes[29..];
    if body.len() != comps * grid.len() * 8 {
        return Err(invalid("blob length does not match its header"));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let components = values.chunks(grid.len()).map(<[f64]>::to_vec).collect();
    VectorField::from_components(grid, components).map_err(|e| invalid(&e.to_string()))
}

pub fn write_error_marker(dir: &Path, message: &str) -> io::Result<()> {
    fs::write(dir.join(ERROR_MARKER), format!("{message}\n"))
}
