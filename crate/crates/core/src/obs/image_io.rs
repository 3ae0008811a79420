//! Portable graymap/pixmap writers for raster debug dumps and replay
//! frames. Binary P5/P6, deterministic output.

use std::io::{self, Write};
use std::path::Path;

pub fn write_pgm(path: &Path, rows: usize, cols: usize, data: &[u8]) -> io::Result<()> {
    assert_eq!(data.len(), rows * cols);
    let mut out = Vec::with_capacity(data.len() + 32);
    write!(out, "P5\n{cols} {rows}\n255\n")?;
    out.extend_from_slice(data);
    std::fs::write(path, out)
}

/// `data` is rgb interleaved, row-major.
pub fn write_ppm(path: &Path, rows: usize, cols: usize, data: &[u8]) -> io::Result<()> {
    assert_eq!(data.len(), rows * cols * 3);
    let mut out = Vec::with_capacity(data.len() + 32);
    write!(out, "P6\n{cols} {rows}\n255\n")?;
    out.extend_from_slice(data);
    std::fs::write(path, out)
}
