//! Binary occupancy cross-sections and the "GPRC" grid file format.
//!
//! A cross-section is the vertical slice of the subsurface under one scan
//! line: `height` depth cells × `width` lateral cells, georeferenced by the
//! scan-line pose and the cell size. The same container format also carries
//! real-valued migrated-energy grids (dtype flag in the header).
//!
//! Layout (little-endian):
//!   magic "GPRC", u8 dtype (0 = f32, 1 = u8), u32 H, u32 W,
//!   f64 cell_m, 3×f64 pose, then H·W payload values row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GPRC";

/// Binary occupancy grid for one scan line. Row `w` is depth cell `w`
/// (downward), column `u` is the lateral cell along the scan direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub height: usize,
    pub width: usize,
    pub cell_size: f64,
    /// Scan-line start pose on the slab surface.
    pub pose: [f64; 3],
    /// H·W cells, row-major, values 0/1.
    pub cells: Vec<u8>,
}

impl CrossSection {
    pub fn new(height: usize, width: usize, cell_size: f64, pose: [f64; 3]) -> Self {
        CrossSection {
            height,
            width,
            cell_size,
            pose,
            cells: vec![0; height * width],
        }
    }

    pub fn get(&self, depth: usize, lateral: usize) -> u8 {
        self.cells[depth * self.width + lateral]
    }

    pub fn set(&mut self, depth: usize, lateral: usize, value: u8) {
        self.cells[depth * self.width + lateral] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Occupied (depth, lateral) cell indices.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// Number of 4-connected components of occupied cells.
    pub fn connected_components(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut count = 0;
        let (h, w) = (self.height, self.width);
        for start in 0..self.cells.len() {
            if self.cells[start] == 0 || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (r, c) = (i / w, i % w);
                let mut visit = |j: usize| {
                    if self.cells[j] != 0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if r > 0 {
                    visit(i - w);
                }
                if r + 1 < h {
                    visit(i + w);
                }
                if c > 0 {
                    visit(i - 1);
                }
                if c + 1 < w {
                    visit(i + 1);
                }
            }
        }
        count
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, 1, self.height, self.width, self.cell_size, self.pose)?;
        w.write_all(&self.cells)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CrossSection> {
        let mut r = BufReader::new(File::open(path)?);
        let (dtype, height, width, cell_size, pose) = read_header(&mut r)?;
        if dtype != 1 {
            return Err(Error::Format(format!(
                "expected u8 mask (dtype 1), file has dtype {dtype}"
            )));
        }
        let mut cells = vec![0u8; height * width];
        r.read_exact(&mut cells)
            .map_err(|_| Error::Format("truncated GPRC file".into()))?;
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::Format("mask cells must be 0 or 1".into()));
        }
        Ok(CrossSection {
            height,
            width,
            cell_size,
            pose,
            cells,
        })
    }
}

pub(crate) fn write_header<W: Write>(
    w: &mut W,
    dtype: u8,
    height: usize,
    width: usize,
    cell_size: f64,
    pose: [f64; 3],
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[dtype])?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&cell_size.to_le_bytes())?;
    for p in pose {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R) -> Result<(u8, usize, usize, f64, [f64; 3])> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated GPRC file".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)
        .map_err(|_| Error::Format("truncated GPRC file".into()))?;
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|_| Error::Format("truncated GPRC file".into()))?;
    let height = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)
        .map_err(|_| Error::Format("truncated GPRC file".into()))?;
    let width = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)
        .map_err(|_| Error::Format("truncated GPRC file".into()))?;
    let cell_size = f64::from_le_bytes(b8);
    let mut pose = [0.0; 3];
    for p in &mut pose {
        r.read_exact(&mut b8)
            .map_err(|_| Error::Format("truncated GPRC file".into()))?;
        *p = f64::from_le_bytes(b8);
    }
    Ok((dtype[0], height, width, cell_size, pose))
}
