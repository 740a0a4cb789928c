//! CSV trajectories and legacy VTK field dumps.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use geoflow::ScalarField3;

pub const CSV_HEADER: [&str; 5] = ["step", "time", "energy", "grad_norm", "aux"];

pub struct CsvTrajectory<W: Write> {
    inner: csv::Writer<W>,
}

impl CsvTrajectory<File> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> CsvTrajectory<W> {
    pub fn new(out: W) -> io::Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        inner.write_record(CSV_HEADER)?;
        Ok(Self { inner })
    }

    /// Floats use the shortest representation that round-trips.
    pub fn row(&mut self, step: usize, time: f64, energy: f64, grad_norm: f64, aux: f64) -> io::Result<()> {
        self.inner.write_record([
            step.to_string(),
            time.to_string(),
            energy.to_string(),
            grad_norm.to_string(),
            aux.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

pub fn vtk_path(dir: &Path, run: &str, field: &str, step: usize) -> PathBuf {
    dir.join(format!("{run}_{field}_{step:06}.vtk"))
}

/// Legacy ASCII STRUCTURED_POINTS file holding one scalar, x fastest.
pub fn write_vtk<W: Write>(out: &mut W, title: &str, name: &str, field: &ScalarField3) -> io::Result<()> {
    let g = field.grid();
    let [nx, ny, nz] = g.dims();
    let [ox, oy, oz] = g.origin();
    let h = g.spacing();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.replace('\n', " "))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {nx} {ny} {nz}")?;
    writeln!(out, "ORIGIN {ox} {oy} {oz}")?;
    writeln!(out, "SPACING {h} {h} {h}")?;
    writeln!(out, "POINT_DATA {}", field.data().len())?;
    writeln!(out, "SCALARS {name} double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for row in field.data().chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_vtk_file(dir: &Path, run: &str, name: &str, step: usize, field: &ScalarField3) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = vtk_path(dir, run, name, step);
    let mut out = BufWriter::new(File::create(&path)?);
    write_vtk(&mut out, &format!("{run} {name} step {step}"), name, field)?;
    out.flush()?;
    Ok(path)
}
