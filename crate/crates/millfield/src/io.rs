//! Text serialization: field dumps, density dumps, CSV outputs.
//!
//! Dumps are plain text with 17-significant-digit floats so a load
//! reproduces the written field bit for bit, and they carry no timestamps
//! so identical runs write identical bytes. Every file records the config
//! hash it was produced under.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{DensityField, DistributionField};
use crate::grid::{Bounds, PhaseGrid};

const FIELD_MAGIC: &str = "millfield-field 1";
const DENSITY_MAGIC: &str = "millfield-density 1";

/// Write a distribution field: header, four axis lines, then the values in
/// storage order (x slowest, w fastest).
pub fn dump_field(field: &DistributionField, path: &Path, config_hash: u64) -> Result<()> {
    let g = &field.grid;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{FIELD_MAGIC}")?;
    writeln!(out, "# config {config_hash:016x}")?;
    writeln!(out, "axis x {:.16e} {:.16e} {}", g.x.lo, g.x.hi, g.x.n)?;
    writeln!(out, "axis y {:.16e} {:.16e} {}", g.y.lo, g.y.hi, g.y.n)?;
    writeln!(out, "axis u {:.16e} {:.16e} {}", g.u.lo, g.u.hi, g.u.n)?;
    writeln!(out, "axis w {:.16e} {:.16e} {}", g.w.lo, g.w.hi, g.w.n)?;
    writeln!(out, "values {}", field.values.len())?;
    write_values(&mut out, field.values.iter().copied())?;
    out.flush()?;
    Ok(())
}

/// Read a field dump written by [`dump_field`].
pub fn load_field(path: &Path) -> Result<DistributionField> {
    let mut lines = CountedLines::new(path)?;
    lines.expect_magic(FIELD_MAGIC)?;
    let x = lines.axis("x")?;
    let y = lines.axis("y")?;
    let u = lines.axis("u")?;
    let v = lines.axis("w")?;
    if x.2 < 1 || y.2 < 1 || u.2 < 1 || v.2 < 1 {
        return Err(lines.error("axis with zero points"));
    }
    let grid = PhaseGrid::new(
        Bounds { x: [x.0, x.1], y: [y.0, y.1], u: [u.0, u.1], w: [v.0, v.1] },
        [x.2, y.2, u.2, v.2],
    )?;
    let count = lines.values_count()?;
    if count != grid.x.n * grid.y.n * grid.u.n * grid.w.n {
        return Err(lines.error(&format!(
            "value count {count} does not match the {}x{}x{}x{} grid",
            grid.x.n, grid.y.n, grid.u.n, grid.w.n
        )));
    }
    let mut field = DistributionField::zeros(grid);
    lines.read_values(field.values.as_slice_mut().expect("contiguous"), count)?;
    Ok(field)
}

/// Write a spatial density: header, two axis lines, values row-major.
pub fn dump_density(density: &DensityField, path: &Path, config_hash: u64) -> Result<()> {
    let g = &density.grid;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{DENSITY_MAGIC}")?;
    writeln!(out, "# config {config_hash:016x}")?;
    writeln!(out, "axis x {:.16e} {:.16e} {}", g.x.lo, g.x.hi, g.x.n)?;
    writeln!(out, "axis y {:.16e} {:.16e} {}", g.y.lo, g.y.hi, g.y.n)?;
    writeln!(out, "values {}", density.values.len())?;
    write_values(&mut out, density.values.iter().copied())?;
    out.flush()?;
    Ok(())
}

/// Read a density dump written by [`dump_density`]. The velocity axes of
/// the returned grid are placeholders spanning one cell.
pub fn load_density(path: &Path) -> Result<DensityField> {
    let mut lines = CountedLines::new(path)?;
    lines.expect_magic(DENSITY_MAGIC)?;
    let x = lines.axis("x")?;
    let y = lines.axis("y")?;
    let grid = PhaseGrid::new(
        Bounds { x: [x.0, x.1], y: [y.0, y.1], u: [-1.0, 1.0], w: [-1.0, 1.0] },
        [x.2, y.2, 4, 4],
    )?;
    let count = lines.values_count()?;
    if count != grid.x.n * grid.y.n {
        return Err(lines.error(&format!(
            "value count {count} does not match the {}x{} grid",
            grid.x.n, grid.y.n
        )));
    }
    let mut density = DensityField::zeros(grid);
    lines.read_values(density.values.as_slice_mut().expect("contiguous"), count)?;
    Ok(density)
}

/// Create a CSV file with the config-hash comment and header row written.
pub fn create_csv(path: &Path, config_hash: u64, header: &str) -> Result<BufWriter<File>> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# config {config_hash:016x}")?;
    writeln!(out, "{header}")?;
    Ok(out)
}

/// Write one CSV row of floats with full precision.
pub fn write_row(out: &mut impl Write, fields: &[f64]) -> Result<()> {
    let mut line = String::new();
    for (i, v) in fields.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        write!(line, "{v:.16e}").expect("string write");
    }
    writeln!(out, "{line}")?;
    Ok(())
}

fn write_values(out: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    // One value per line keeps diffs line-oriented.
    for v in values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

/// Line-counting reader so every parse error can name its line.
struct CountedLines {
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl CountedLines {
    fn new(path: &Path) -> Result<Self> {
        Ok(CountedLines { lines: BufReader::new(File::open(path)?).lines(), line: 0 })
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse { line: self.line, message: message.to_string() }
    }

    /// Next significant line (skips comments and blanks).
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.lines.next() {
                None => return Err(self.error("unexpected end of file")),
                Some(row) => {
                    let row = row?;
                    let t = row.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t.to_string());
                    }
                }
            }
        }
    }

    fn expect_magic(&mut self, magic: &str) -> Result<()> {
        let got = self.next_line()?;
        if got != magic {
            return Err(self.error(&format!("expected `{magic}`, got `{got}`")));
        }
        Ok(())
    }

    fn axis(&mut self, name: &str) -> Result<(f64, f64, usize)> {
        let row = self.next_line()?;
        let parts: Vec<&str> = row.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "axis" || parts[1] != name {
            return Err(self.error(&format!("expected `axis {name} lo hi n`, got `{row}`")));
        }
        let lo = parts[2].parse().map_err(|_| self.error("bad axis lower bound"))?;
        let hi = parts[3].parse().map_err(|_| self.error("bad axis upper bound"))?;
        let n = parts[4].parse().map_err(|_| self.error("bad axis count"))?;
        Ok((lo, hi, n))
    }

    fn values_count(&mut self) -> Result<usize> {
        let row = self.next_line()?;
        match row.strip_prefix("values ") {
            Some(n) => n.parse().map_err(|_| self.error("bad value count")),
            None => Err(self.error(&format!("expected `values n`, got `{row}`"))),
        }
    }

    fn read_values(&mut self, into: &mut [f64], expected: usize) -> Result<()> {
        let mut filled = 0usize;
        while filled < expected {
            self.line += 1;
            let row = match self.lines.next() {
                None => {
                    return Err(self.error(&format!(
                        "expected {expected} values, file ended after {filled}"
                    )));
                }
                Some(row) => row?,
            };
            for tok in row.split_whitespace() {
                if filled == expected {
                    return Err(self.error(&format!("more than {expected} values")));
                }
                into[filled] =
                    tok.parse().map_err(|_| self.error(&format!("bad value `{tok}`")))?;
                filled += 1;
            }
        }
        Ok(())
    }
}

/// Write a particle snapshot as CSV with columns `x,y,u,w`.
pub fn dump_particles(
    state: &crate::particles::ParticleState,
    path: &Path,
    config_hash: u64,
) -> Result<()> {
    let mut out = create_csv(path, config_hash, "x,y,u,w")?;
    for (x, v) in state.x.iter().zip(&state.v) {
        write_row(&mut out, &[x[0], x[1], v[0], v[1]])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a particle CSV written by [`dump_particles`].
pub fn load_particles(path: &Path) -> Result<crate::particles::ParticleState> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    let mut x = Vec::new();
    let mut v = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t == "x,y,u,w" {
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        let parse = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: format!("expected 4 numeric fields, got `{t}`"),
                })
        };
        x.push([parse(0)?, parse(1)?]);
        v.push([parse(2)?, parse(3)?]);
    }
    Ok(crate::particles::ParticleState { x, v })
}
