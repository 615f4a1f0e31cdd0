//! Snapshot and time-series files.
//!
//! Snapshots are legacy VTK `STRUCTURED_POINTS` text files with one point
//! per cell center. Floats are printed with 17 significant digits so that
//! reading a file back recovers the written values exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::InvariantReport;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hydro::FlowState;
use crate::rd_solver::SpeciesField;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn malformed(path: &Path, msg: impl Into<String>) -> Error {
    Error::Io { path: path.to_path_buf(), source: std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()) }
}

/// Writes `theta`, `pressure`, cell-centered `velocity` and `Y1..YN`.
pub fn write_snapshot(path: &Path, grid: &Grid, state: &FlowState, field: &SpeciesField, title: &str) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_vtk(&mut w, grid, state, field, title).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_vtk(w: &mut impl Write, grid: &Grid, state: &FlowState, field: &SpeciesField, title: &str) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", grid.nx, grid.nz)?;
    writeln!(w, "ORIGIN {:.16e} {:.16e} 0", 0.5 * grid.dx, 0.5 * grid.dz)?;
    writeln!(w, "SPACING {:.16e} {:.16e} 1", grid.dx, grid.dz)?;
    writeln!(w, "POINT_DATA {}", grid.cells())?;
    let scalars = |w: &mut dyn Write, name: &str, values: &[f64]| -> std::io::Result<()> {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    };
    scalars(w, "theta", &state.theta)?;
    scalars(w, "pressure", &state.pressure)?;
    writeln!(w, "VECTORS velocity double")?;
    for [u, v] in state.velocity.cell_centered(grid) {
        writeln!(w, "{u:.16e} {v:.16e} 0")?;
    }
    for k in 0..field.species_count() {
        scalars(w, &format!("Y{}", k + 1), &field.component(k))?;
    }
    Ok(())
}

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub title: String,
    pub dimensions: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

impl Snapshot {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| &v[..])
    }

    pub fn vector(&self, name: &str) -> Option<&[[f64; 3]]> {
        self.vectors.iter().find(|(n, _)| n == name).map(|(_, v)| &v[..])
    }
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut tokens = Vec::new();
    let mut lines = BufReader::new(file).lines();
    let mut header = Vec::new();
    for _ in 0..3 {
        header.push(lines.next().ok_or_else(|| malformed(path, "truncated header"))?.map_err(io_err(path))?);
    }
    if !header[0].starts_with("# vtk DataFile") || header[2].trim() != "ASCII" {
        return Err(malformed(path, "not an ASCII legacy VTK file"));
    }
    for line in lines {
        let line = line.map_err(io_err(path))?;
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| malformed(path, format!("missing {what}")));
    let num = |s: String| s.parse::<f64>().map_err(|e| malformed(path, format!("bad number {s:?}: {e}")));
    let int = |s: String| s.parse::<usize>().map_err(|e| malformed(path, format!("bad integer {s:?}: {e}")));
    let expect = |got: String, want: &str| if got == want { Ok(()) } else { Err(malformed(path, format!("expected {want}, found {got}"))) };

    expect(next("DATASET")?, "DATASET")?;
    expect(next("dataset type")?, "STRUCTURED_POINTS")?;
    expect(next("DIMENSIONS")?, "DIMENSIONS")?;
    let dimensions = [int(next("dimension")?)?, int(next("dimension")?)?, int(next("dimension")?)?];
    expect(next("ORIGIN")?, "ORIGIN")?;
    let origin = [num(next("origin")?)?, num(next("origin")?)?, num(next("origin")?)?];
    expect(next("SPACING")?, "SPACING")?;
    let spacing = [num(next("spacing")?)?, num(next("spacing")?)?, num(next("spacing")?)?];
    expect(next("POINT_DATA")?, "POINT_DATA")?;
    let points = int(next("point count")?)?;
    if points != dimensions.iter().product::<usize>() {
        return Err(malformed(path, "point count does not match dimensions"));
    }
    let mut snap = Snapshot { title: header[1].clone(), dimensions, origin, spacing, scalars: Vec::new(), vectors: Vec::new() };
    loop {
        let Ok(kind) = next("section") else { break };
        match kind.as_str() {
            "SCALARS" => {
                let name = next("name")?;
                next("type")?;
                expect(next("components")?, "1")?;
                expect(next("LOOKUP_TABLE")?, "LOOKUP_TABLE")?;
                next("table name")?;
                let values = (0..points).map(|_| num(next("value")?)).collect::<Result<Vec<_>>>()?;
                snap.scalars.push((name, values));
            }
            "VECTORS" => {
                let name = next("name")?;
                next("type")?;
                let values = (0..points)
                    .map(|_| Ok([num(next("value")?)?, num(next("value")?)?, num(next("value")?)?]))
                    .collect::<Result<Vec<_>>>()?;
                snap.vectors.push((name, values));
            }
            other => return Err(malformed(path, format!("unsupported section {other}"))),
        }
    }
    Ok(snap)
}

/// Appends one CSV row per [`InvariantReport`].
#[derive(Debug)]
pub struct TimeSeriesWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TimeSeriesWriter {
    /// Creates the file and writes the header row.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", InvariantReport::csv_header()).map_err(io_err(path))?;
        Ok(Self { path: path.to_path_buf(), out })
    }

    pub fn append(&mut self, report: &InvariantReport) -> Result<()> {
        writeln!(self.out, "{}", report.csv_row()).map_err(io_err(&self.path))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(io_err(&self.path))
    }
}
