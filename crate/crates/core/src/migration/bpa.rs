//! Back-projection migration: the deterministic imaging oracle.
//!
//! Each image cell accumulates, over all traces, the recorded envelope
//! (|amplitude|) at that cell's two-way travel time. Scattering targets
//! focus into bright blobs; the hyperbola tails smear and stay dim.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bscan::{two_way_travel_time, BScan};
use crate::cross_section::{read_header, write_header, CrossSection};
use crate::error::{Error, Result};
use crate::scene::GridSpec;

/// Real-valued migrated-energy grid in (depth, lateral) cell coordinates,
/// georeferenced like a [`CrossSection`].
#[derive(Debug, Clone, PartialEq)]
pub struct MigratedImage {
    pub height: usize,
    pub width: usize,
    pub cell_size: f64,
    /// Scan-line start pose on the slab surface.
    pub pose: [f64; 3],
    /// H·W values, row-major, finite and non-negative.
    pub values: Vec<f64>,
}

impl MigratedImage {
    pub fn get(&self, depth: usize, lateral: usize) -> f64 {
        self.values[depth * self.width + lateral]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// `(depth, lateral)` of the global maximum (first occurrence).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 / self.width, best.0 % self.width)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, 0, self.height, self.width, self.cell_size, self.pose)?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MigratedImage> {
        let mut r = BufReader::new(File::open(path)?);
        let (dtype, height, width, cell_size, pose) = read_header(&mut r)?;
        if dtype != 0 {
            return Err(Error::Format(format!(
                "expected f32 image (dtype 0), file has dtype {dtype}"
            )));
        }
        let mut values = Vec::with_capacity(height * width);
        let mut b4 = [0u8; 4];
        for _ in 0..height * width {
            r.read_exact(&mut b4)
                .map_err(|_| Error::Format("truncated GPRC file".into()))?;
            values.push(f32::from_le_bytes(b4) as f64);
        }
        Ok(MigratedImage {
            height,
            width,
            cell_size,
            pose,
            values,
        })
    }
}

/// Migrate a B-scan onto the cross-section grid under its scan line.
///
/// The grid hangs off the first trace pose: lateral cell `u` is centered at
/// `pose.x + (u+0.5)·cell`, depth cell `w` at depth `(w+0.5)·cell`. Travel
/// times beyond the recorded window contribute nothing.
pub fn backproject(bscan: &BScan, grid: GridSpec, eps_r: f64) -> Result<MigratedImage> {
    if bscan.traces == 0 || bscan.time_samples == 0 {
        return Err(Error::invalid("cannot migrate an empty B-scan"));
    }
    let pose = bscan.poses[0].position;
    let antenna_x: Vec<f64> = bscan.poses.iter().map(|p| p.position[0]).collect();
    let mut values = vec![0.0; grid.height * grid.width];
    for w in 0..grid.height {
        let z = (w as f64 + 0.5) * grid.cell_size;
        for u in 0..grid.width {
            let x = pose[0] + (u as f64 + 0.5) * grid.cell_size;
            let mut sum = 0.0;
            for (k, &ax) in antenna_x.iter().enumerate() {
                let t = two_way_travel_time(ax, (x, z), eps_r)?;
                let s = t / bscan.dt_ns;
                let s0 = s.floor() as usize;
                if s.floor() < 0.0 || s0 + 1 >= bscan.time_samples {
                    continue;
                }
                let frac = s - s0 as f64;
                let a0 = bscan.amplitude(s0, k).abs();
                let a1 = bscan.amplitude(s0 + 1, k).abs();
                sum += a0 + frac * (a1 - a0);
            }
            values[w * grid.width + u] = sum;
        }
    }
    Ok(MigratedImage {
        height: grid.height,
        width: grid.width,
        cell_size: grid.cell_size,
        pose,
        values,
    })
}

/// Binarize at `fraction` of the global maximum. An all-zero image yields an
/// all-zero mask.
pub fn threshold_to_cross_section(image: &MigratedImage, fraction: f64) -> Result<CrossSection> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::invalid(format!(
            "threshold fraction must be in (0,1), got {fraction}"
        )));
    }
    let mut cs = CrossSection::new(image.height, image.width, image.cell_size, image.pose);
    let max = image.max();
    if max == 0.0 {
        return Ok(cs);
    }
    let thresh = fraction * max;
    for (i, &v) in image.values.iter().enumerate() {
        if v >= thresh {
            cs.cells[i] = 1;
        }
    }
    Ok(cs)
}
