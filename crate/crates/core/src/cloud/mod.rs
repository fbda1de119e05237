//! Point-cloud data model: registration of cross-sections into 3D,
//! resampling, nearest-neighbor metrics, and PLY interchange.

pub mod kdtree;
pub mod metrics;
pub mod ply;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cross_section::CrossSection;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scene::add_gaussian_noise;

pub use kdtree::KdTree;
pub use metrics::{chamfer_distance, chamfer_loss, l1_nn_distance, ChamferVariant};
pub use ply::{read_ply, write_ply};

/// Unordered set of 3D points in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud { points }
    }

    pub fn empty() -> Self {
        PointCloud { points: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut Vec<[f64; 3]> {
        &mut self.points
    }

    pub fn push(&mut self, p: [f64; 3]) {
        self.points.push(p);
    }

    /// Flat row-major xyz buffer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * 3);
        for p in &self.points {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::invalid("flat buffer length must be divisible by 3"));
        }
        Ok(PointCloud::new(
            flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
        ))
    }

    /// Per-coordinate Gaussian perturbation; `sigma = 0` is the identity.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<PointCloud> {
        let noisy = add_gaussian_noise(&self.to_flat(), sigma, seed)?;
        PointCloud::from_flat(&noisy)
    }
}

/// Register binary cross-sections into one world-frame cloud. Each occupied
/// cell `(w depth, u lateral)` of a section posed at `p` maps to
/// `(p.x + u·cell, p.y, -w·cell)` for an x-directed scan line.
pub fn register_cross_sections(sections: &[CrossSection]) -> Result<PointCloud> {
    if sections.is_empty() {
        return Err(Error::invalid("no cross-sections to register"));
    }
    let mut points = Vec::new();
    for s in sections {
        for (w, u) in s.occupied() {
            points.push([
                s.pose[0] + u as f64 * s.cell_size,
                s.pose[1],
                -(w as f64) * s.cell_size,
            ]);
        }
    }
    if points.is_empty() {
        return Err(Error::invalid("no detections in any cross-section"));
    }
    Ok(PointCloud::new(points))
}

/// Resample to exactly `n` points: uniform subsample without replacement
/// when the cloud is large enough, otherwise pad by resampling with
/// replacement. Deterministic per seed.
pub fn resample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot resample an empty cloud"));
    }
    if n == 0 {
        return Err(Error::invalid("resample target must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let pts = cloud.points();
    if pts.len() >= n {
        let mut idx: Vec<usize> = (0..pts.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.sort_unstable();
        Ok(PointCloud::new(idx.into_iter().map(|i| pts[i]).collect()))
    } else {
        let mut out = pts.to_vec();
        while out.len() < n {
            out.push(pts[rng.gen_range(0..pts.len())]);
        }
        Ok(PointCloud::new(out))
    }
}
