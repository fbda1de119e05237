//! Parametric underground scenes: buried cylindrical pipes in a dielectric
//! slab, plus ground-truth extraction (cross-section masks, dense surface
//! clouds) and Gaussian perturbation.
//!
//! World frame: the slab occupies `[0,x]×[0,y]×[-z,0]` with the scanned
//! surface at z = 0; buried geometry has negative z.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::cloud::PointCloud;
use crate::cross_section::CrossSection;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// One buried cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
    pub material: String,
}

impl Pipe {
    pub fn axis_length(&self) -> f64 {
        dist3(self.start, self.end)
    }

    /// Lateral (side) surface area.
    pub fn surface_area(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.radius * self.axis_length()
    }

    /// Distance from a world point to the pipe's axis segment.
    pub fn axis_distance(&self, p: [f64; 3]) -> f64 {
        point_segment_distance(p, self.start, self.end)
    }

    /// Distance from a world point to the pipe surface (0 on the surface,
    /// positive inside and outside alike).
    pub fn surface_distance(&self, p: [f64; 3]) -> f64 {
        (self.axis_distance(p) - self.radius).abs()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.axis_distance(p) <= self.radius
    }

    /// Constant reflection strength for the material tag.
    pub fn reflectivity(&self) -> f64 {
        match self.material.as_str() {
            "metal" | "rebar" => 1.0,
            "pvc" => 0.6,
            _ => 0.8,
        }
    }
}

/// Slab of homogeneous dielectric with buried pipes.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeScene {
    /// Slab sizes in meters; the slab spans `[0,x]×[0,y]×[-z,0]`.
    pub extents: [f64; 3],
    /// Relative permittivity of the medium, ≥ 1.
    pub eps_r: f64,
    pub pipes: Vec<Pipe>,
}

impl PipeScene {
    pub fn new(extents: [f64; 3], eps_r: f64) -> Result<Self> {
        if eps_r < 1.0 {
            return Err(Error::invalid(format!(
                "relative permittivity must be >= 1, got {eps_r}"
            )));
        }
        if extents.iter().any(|&e| e <= 0.0) {
            return Err(Error::invalid("slab extents must be positive"));
        }
        Ok(PipeScene {
            extents,
            eps_r,
            pipes: Vec::new(),
        })
    }

    pub fn add_pipe(&mut self, pipe: Pipe) -> Result<()> {
        if pipe.radius <= 0.0 {
            return Err(Error::invalid(format!(
                "pipe radius must be positive, got {}",
                pipe.radius
            )));
        }
        for p in [pipe.start, pipe.end] {
            let inside = p[0] >= 0.0
                && p[0] <= self.extents[0]
                && p[1] >= 0.0
                && p[1] <= self.extents[1]
                && p[2] + pipe.radius <= 0.0
                && p[2] - pipe.radius >= -self.extents[2];
            if !inside {
                return Err(Error::invalid(format!(
                    "pipe endpoint {p:?} (radius {}) lies outside the slab",
                    pipe.radius
                )));
            }
        }
        self.pipes.push(pipe);
        Ok(())
    }

    // ---- text format -----------------------------------------------------

    /// Serialize as the line-oriented scene format:
    /// `slab x y z eps_r` then `pipe x1 y1 z1 x2 y2 z2 radius material`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "slab {} {} {} {}",
            self.extents[0], self.extents[1], self.extents[2], self.eps_r
        )
        .unwrap();
        for p in &self.pipes {
            writeln!(
                out,
                "pipe {} {} {} {} {} {} {} {}",
                p.start[0], p.start[1], p.start[2], p.end[0], p.end[1], p.end[2], p.radius,
                p.material
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PipeScene> {
        let mut scene: Option<PipeScene> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = raw.split_whitespace().collect();
            match parts[0] {
                "slab" => {
                    if parts.len() != 5 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "expected `slab x y z eps_r`".into(),
                        });
                    }
                    let nums = parse_floats(&parts[1..], line_no)?;
                    scene = Some(PipeScene::new([nums[0], nums[1], nums[2]], nums[3])
                        .map_err(|e| Error::Parse {
                            line: line_no,
                            message: e.to_string(),
                        })?);
                }
                "pipe" => {
                    let scene = scene.as_mut().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "`pipe` before `slab` header".into(),
                    })?;
                    if parts.len() != 9 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "expected `pipe x1 y1 z1 x2 y2 z2 radius material`".into(),
                        });
                    }
                    let nums = parse_floats(&parts[1..8], line_no)?;
                    scene
                        .add_pipe(Pipe {
                            start: [nums[0], nums[1], nums[2]],
                            end: [nums[3], nums[4], nums[5]],
                            radius: nums[6],
                            material: parts[8].to_string(),
                        })
                        .map_err(|e| Error::Parse {
                            line: line_no,
                            message: e.to_string(),
                        })?;
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown record `{other}`"),
                    })
                }
            }
        }
        scene.ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing `slab` header".into(),
        })
    }

    pub fn load(path: &Path) -> Result<PipeScene> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_floats(parts: &[&str], line: usize) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|s| {
            s.parse().map_err(|e| Error::Parse {
                line,
                message: format!("bad number `{s}`: {e}"),
            })
        })
        .collect()
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    if len2 == 0.0 {
        return dist3(p, a);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0);
    dist3(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

// ---- ground truth ----------------------------------------------------------

/// Geometry of an extracted cross-section / migrated image grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Depth cells.
    pub height: usize,
    /// Lateral cells.
    pub width: usize,
    /// Cell edge length, meters.
    pub cell_size: f64,
}

impl GridSpec {
    pub fn new(height: usize, width: usize, cell_size: f64) -> Self {
        GridSpec {
            height,
            width,
            cell_size,
        }
    }
}

/// Rasterize the true pipe cross-sections in the vertical plane under an
/// x-directed scan line starting at `pose`. A cell is occupied iff its
/// center lies inside some pipe.
pub fn ground_truth_cross_section(
    scene: &PipeScene,
    pose: [f64; 3],
    grid: GridSpec,
) -> CrossSection {
    let mut cs = CrossSection::new(grid.height, grid.width, grid.cell_size, pose);
    for w in 0..grid.height {
        let z = -((w as f64 + 0.5) * grid.cell_size);
        for u in 0..grid.width {
            let x = pose[0] + (u as f64 + 0.5) * grid.cell_size;
            let p = [x, pose[1], z];
            if scene.pipes.iter().any(|pipe| pipe.contains(p)) {
                cs.set(w, u, 1);
            }
        }
    }
    cs
}

/// Sample exactly `n` points uniformly by area over all pipe lateral
/// surfaces. Deterministic for a given seed.
pub fn ground_truth_dense_cloud(scene: &PipeScene, n: usize, seed: u64) -> Result<PointCloud> {
    if scene.pipes.is_empty() {
        return Err(Error::invalid("dense cloud of an empty scene"));
    }
    let areas: Vec<f64> = scene.pipes.iter().map(Pipe::surface_area).collect();
    let total: f64 = areas.iter().sum();
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.gen_range(0.0..total);
        let mut idx = 0;
        for (i, &a) in areas.iter().enumerate() {
            if pick < a {
                idx = i;
                break;
            }
            pick -= a;
            idx = i;
        }
        let pipe = &scene.pipes[idx];
        let s: f64 = rng.gen_range(0.0..=1.0);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let axis = unit(sub(pipe.end, pipe.start));
        let (u, v) = orthonormal_frame(axis);
        let center = [
            pipe.start[0] + s * (pipe.end[0] - pipe.start[0]),
            pipe.start[1] + s * (pipe.end[1] - pipe.start[1]),
            pipe.start[2] + s * (pipe.end[2] - pipe.start[2]),
        ];
        let (c, sn) = (theta.cos(), theta.sin());
        points.push([
            center[0] + pipe.radius * (c * u[0] + sn * v[0]),
            center[1] + pipe.radius * (c * u[1] + sn * v[1]),
            center[2] + pipe.radius * (c * u[2] + sn * v[2]),
        ]);
    }
    Ok(PointCloud::new(points))
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Two unit vectors orthogonal to `axis` and each other.
fn orthonormal_frame(axis: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = unit([
        axis[1] * helper[2] - axis[2] * helper[1],
        axis[2] * helper[0] - axis[0] * helper[2],
        axis[0] * helper[1] - axis[1] * helper[0],
    ]);
    let v = [
        axis[1] * u[2] - axis[2] * u[1],
        axis[2] * u[0] - axis[0] * u[2],
        axis[0] * u[1] - axis[1] * u[0],
    ];
    (u, v)
}

// ---- noise -----------------------------------------------------------------

/// Add i.i.d. zero-mean Gaussian noise to a buffer. `sigma = 0` returns a
/// bitwise-identical copy.
pub fn add_gaussian_noise(data: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if sigma < 0.0 {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(data.to_vec());
    }
    let mut rng = rng_from_seed(seed);
    Ok(data.iter().map(|&v| v + sigma * standard_normal(&mut rng)).collect())
}

/// One standard-normal draw via Box–Muller.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
