//! Grid function files.
//!
//! Binary: magic `SDGF`, then little-endian `d: u32`, `n: u32`, `L: f64`,
//! `dtype: u8` (0 real f64, 1 complex f64 pairs), then the samples in
//! row-major order. CSV: one sample per row, `re` or `re,im`, with an optional
//! header line; the grid comes from the run configuration.

use std::path::Path;

use num_complex::Complex64;
use sdlab_core::grid::{Grid, GridFunction};

const MAGIC: &[u8; 4] = b"SDGF";
const HEADER: usize = 4 + 4 + 4 + 8 + 1;

pub fn write_binary(f: &GridFunction, path: &Path) -> std::io::Result<()> {
    let real = f.values.iter().all(|v| v.im == 0.0);
    let mut buf = Vec::with_capacity(HEADER + 16 * f.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(f.grid.d as u32).to_le_bytes());
    buf.extend_from_slice(&(f.grid.n as u32).to_le_bytes());
    buf.extend_from_slice(&f.grid.side.to_le_bytes());
    buf.push(if real { 0 } else { 1 });
    for v in &f.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        if !real {
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    std::fs::write(path, buf)
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("eight bytes"))
}

pub fn read_binary(bytes: &[u8]) -> Result<GridFunction, String> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err("not a grid function file (bad magic)".into());
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let side = f64_at(bytes, 12);
    let width = match bytes[20] {
        0 => 8,
        1 => 16,
        t => return Err(format!("unknown dtype {t}")),
    };
    let grid = Grid::new(d, n, side).map_err(|e| e.to_string())?;
    let body = &bytes[HEADER..];
    if body.len() != width * grid.len() {
        return Err(format!("expected {} bytes of samples, found {}", width * grid.len(), body.len()));
    }
    let values = body
        .chunks_exact(width)
        .map(|c| Complex64::new(f64_at(c, 0), if width == 16 { f64_at(c, 8) } else { 0.0 }))
        .collect();
    GridFunction::from_values(grid, values).map_err(|e| e.to_string())
}

pub fn read_csv(text: &str, grid: Grid) -> Result<GridFunction, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse).collect();
        match (parsed, rec.len()) {
            (Ok(v), 1) => values.push(Complex64::new(v[0], 0.0)),
            (Ok(v), 2) => values.push(Complex64::new(v[0], v[1])),
            (Err(_), _) if i == 0 => continue,
            _ => return Err(format!("row {}: expected re or re,im", i + 1)),
        }
    }
    GridFunction::from_values(grid, values).map_err(|e| e.to_string())
}

/// Reads by extension; a binary file must match the configured grid.
pub fn read(path: &Path, grid: Grid) -> Result<GridFunction, String> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        return read_csv(&text, grid);
    }
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let f = read_binary(&bytes)?;
    if f.grid != grid {
        return Err(format!(
            "file grid (d={}, n={}, L={}) differs from the configured grid (d={}, n={}, L={})",
            f.grid.d, f.grid.n, f.grid.side, grid.d, grid.n, grid.side
        ));
    }
    Ok(f)
}
