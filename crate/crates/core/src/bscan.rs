//! Synthetic B-scan radargrams and the "GPRB" file format.
//!
//! The forward model is kinematic: each pipe reflects a Ricker-wavelet echo
//! centered at the two-way travel time to the nearest point of its surface,
//! with constant per-material reflectivity and 1/r geometric spreading.
//! Echoes from multiple pipes sum linearly. Full-wave effects (radiation
//! patterns, multiples, dispersion) are out of scope.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{ScanLine, SurveyPose};
use crate::scene::{add_gaussian_noise, PipeScene};

/// Speed of light in vacuum, m/ns.
pub const C_M_PER_NS: f64 = 0.299792458;

pub const MAGIC: &[u8; 4] = b"GPRB";

/// EM propagation velocity in a medium of relative permittivity `eps_r`, m/ns.
pub fn velocity(eps_r: f64) -> Result<f64> {
    if eps_r < 1.0 {
        return Err(Error::invalid(format!(
            "relative permittivity must be >= 1, got {eps_r}"
        )));
    }
    Ok(C_M_PER_NS / eps_r.sqrt())
}

/// Two-way travel time (ns) from an antenna at `(antenna_x, 0)` to a
/// scatterer at `(x, z)` in the scan plane, with depth `z > 0`.
pub fn two_way_travel_time(antenna_x: f64, scatterer: (f64, f64), eps_r: f64) -> Result<f64> {
    let (x, z) = scatterer;
    if z <= 0.0 {
        return Err(Error::invalid(format!(
            "scatterer depth must be positive, got {z}"
        )));
    }
    let v = velocity(eps_r)?;
    let dx = antenna_x - x;
    Ok(2.0 * (dx * dx + z * z).sqrt() / v)
}

/// Ricker wavelet with center frequency `f` (GHz) at lag `t` (ns); peak 1 at t=0.
pub fn ricker(t_ns: f64, center_freq_ghz: f64) -> f64 {
    let a = std::f64::consts::PI * center_freq_ghz * t_ns;
    let a2 = a * a;
    (1.0 - 2.0 * a2) * (-a2).exp()
}

/// Acquisition parameters for one B-scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BScanConfig {
    pub time_samples: usize,
    pub dt_ns: f64,
    pub center_freq_ghz: f64,
}

impl BScanConfig {
    /// Time window sized to reach the slab bottom with 10% slack;
    /// 256 samples, 1.5 GHz wavelet.
    pub fn for_scene(scene: &PipeScene) -> Result<Self> {
        let v = velocity(scene.eps_r)?;
        let t_max = 2.2 * scene.extents[2] / v;
        Ok(BScanConfig {
            time_samples: 256,
            dt_ns: t_max / 256.0,
            center_freq_ghz: 1.5,
        })
    }

    pub fn with_time_samples(mut self, n: usize) -> Self {
        // keep the same time window
        self.dt_ns *= self.time_samples as f64 / n as f64;
        self.time_samples = n;
        self
    }
}

/// Raw radargram: `time_samples` rows × `traces` columns, one pose per trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BScan {
    pub time_samples: usize,
    pub traces: usize,
    pub dt_ns: f64,
    pub trace_spacing_m: f64,
    pub poses: Vec<SurveyPose>,
    /// Row-major `[time_samples × traces]` amplitudes.
    pub amplitudes: Vec<f64>,
}

impl BScan {
    pub fn amplitude(&self, sample: usize, trace: usize) -> f64 {
        self.amplitudes[sample * self.traces + trace]
    }

    /// One column (all time samples of one trace).
    pub fn trace(&self, trace: usize) -> Vec<f64> {
        (0..self.time_samples)
            .map(|s| self.amplitude(s, trace))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Additive Gaussian amplitude noise; `sigma = 0` is the identity.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<BScan> {
        let mut out = self.clone();
        out.amplitudes = add_gaussian_noise(&self.amplitudes, sigma, seed)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.time_samples as u32).to_le_bytes())?;
        w.write_all(&(self.traces as u32).to_le_bytes())?;
        w.write_all(&self.dt_ns.to_le_bytes())?;
        w.write_all(&self.trace_spacing_m.to_le_bytes())?;
        for p in &self.poses {
            for c in p.position {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        for &a in &self.amplitudes {
            w.write_all(&(a as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BScan> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        read(&mut r, &mut b4)?;
        let time_samples = u32::from_le_bytes(b4) as usize;
        read(&mut r, &mut b4)?;
        let traces = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        read(&mut r, &mut b8)?;
        let dt_ns = f64::from_le_bytes(b8);
        read(&mut r, &mut b8)?;
        let trace_spacing_m = f64::from_le_bytes(b8);
        let mut poses = Vec::with_capacity(traces);
        for i in 0..traces {
            let mut position = [0.0; 3];
            for c in &mut position {
                read(&mut r, &mut b8)?;
                *c = f64::from_le_bytes(b8);
            }
            poses.push(SurveyPose {
                position,
                timestamp: i as f64,
            });
        }
        let mut amplitudes = Vec::with_capacity(time_samples * traces);
        for _ in 0..time_samples * traces {
            read(&mut r, &mut b4)?;
            amplitudes.push(f32::from_le_bytes(b4) as f64);
        }
        Ok(BScan {
            time_samples,
            traces,
            dt_ns,
            trace_spacing_m,
            poses,
            amplitudes,
        })
    }
}

fn read<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated GPRB file".into()))
}

/// Reflection range is clamped below this to bound the 1/r gain.
const MIN_RANGE_M: f64 = 0.02;

/// Synthesize the B-scan recorded along one scan line on the slab surface.
/// An empty scene yields an all-zero grid.
pub fn synthesize_bscan(scene: &PipeScene, line: &ScanLine, cfg: &BScanConfig) -> Result<BScan> {
    for p in [line.start, line.end] {
        let on_slab =
            p[0] >= 0.0 && p[0] <= scene.extents[0] && p[1] >= 0.0 && p[1] <= scene.extents[1];
        if !on_slab {
            return Err(Error::invalid(format!(
                "survey line endpoint {p:?} lies off the slab surface"
            )));
        }
    }
    let v = velocity(scene.eps_r)?;
    let poses = line.poses();
    let traces = poses.len();
    let t_count = cfg.time_samples;
    let mut amplitudes = vec![0.0; t_count * traces];
    // only evaluate the wavelet within ±3 periods of the echo center
    let support_ns = 3.0 / cfg.center_freq_ghz;
    let support_samples = (support_ns / cfg.dt_ns).ceil() as isize;
    for (k, pose) in poses.iter().enumerate() {
        for pipe in &scene.pipes {
            let range = (pipe.axis_distance(pose.position) - pipe.radius).max(MIN_RANGE_M);
            let t_echo = 2.0 * range / v;
            let amp = pipe.reflectivity() / range;
            let center = (t_echo / cfg.dt_ns).round() as isize;
            let lo = (center - support_samples).max(0) as usize;
            let hi = ((center + support_samples + 1).max(0) as usize).min(t_count);
            for s in lo..hi {
                let tau = s as f64 * cfg.dt_ns - t_echo;
                amplitudes[s * traces + k] += amp * ricker(tau, cfg.center_freq_ghz);
            }
        }
    }
    Ok(BScan {
        time_samples: t_count,
        traces,
        dt_ns: cfg.dt_ns,
        trace_spacing_m: line.trace_spacing,
        poses,
        amplitudes,
    })
}

/// First sample where |amplitude| reaches `frac` of the trace's own max;
/// `None` for an all-zero trace.
pub fn onset_sample(trace: &[f64], frac: f64) -> Option<usize> {
    let max = trace.iter().fold(0.0, |m: f64, &v| m.max(v.abs()));
    if max == 0.0 {
        return None;
    }
    let thresh = frac * max;
    trace.iter().position(|&v| v.abs() >= thresh)
}

/// Apex trace of the strongest hyperbola: midpoint of the contiguous run of
/// traces sharing the globally earliest onset sample.
pub fn apex_trace(bscan: &BScan) -> Option<usize> {
    let onsets: Vec<Option<usize>> = (0..bscan.traces)
        .map(|k| onset_sample(&bscan.trace(k), 0.5))
        .collect();
    let min_onset = onsets.iter().flatten().min().copied()?;
    // earliest-onset traces cluster around the apex; take the middle of the
    // longest contiguous run
    let mut best: Option<(usize, usize)> = None; // (start, len)
    let mut run_start = None;
    for k in 0..=bscan.traces {
        let is_min = k < bscan.traces && onsets[k] == Some(min_onset);
        match (is_min, run_start) {
            (true, None) => run_start = Some(k),
            (false, Some(s)) => {
                let len = k - s;
                if best.map_or(true, |(_, bl)| len > bl) {
                    best = Some((s, len));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    best.map(|(s, len)| s + len / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{plan_grid_survey, ScanDirection};
    use crate::scene::Pipe;

    fn scene_with_pipe(pipe: Pipe) -> PipeScene {
        // eps_r ≈ 8.988 gives v = 0.1 m/ns
        let eps = (C_M_PER_NS / 0.1) * (C_M_PER_NS / 0.1);
        let mut scene = PipeScene::new([2.0, 2.0, 1.0], eps).unwrap();
        scene.add_pipe(pipe).unwrap();
        scene
    }

    #[test]
    fn vertical_two_way_path() {
        let eps = (C_M_PER_NS / 0.1) * (C_M_PER_NS / 0.1);
        let t = two_way_travel_time(0.0, (0.0, 0.5), eps).unwrap();
        assert!((t - 10.0).abs() < 1e-12, "t = {t}");
    }

    #[test]
    fn offset_pythagoras() {
        let eps = (C_M_PER_NS / 0.1) * (C_M_PER_NS / 0.1);
        let t = two_way_travel_time(0.5, (0.0, 0.5), eps).unwrap();
        assert!((t - 2.0 * 0.5_f64.sqrt() / 0.1).abs() < 1e-12, "t = {t}");
    }

    #[test]
    fn travel_time_minimized_at_apex() {
        let eps = 9.0;
        let t_apex = two_way_travel_time(0.7, (0.7, 0.4), eps).unwrap();
        for dx in [-0.5, -0.1, -0.01, 0.01, 0.1, 0.5] {
            assert!(two_way_travel_time(0.7 + dx, (0.7, 0.4), eps).unwrap() > t_apex);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(two_way_travel_time(0.0, (0.0, 0.5), 0.5).is_err());
        assert!(two_way_travel_time(0.0, (0.0, -0.5), 4.0).is_err());
    }

    #[test]
    fn empty_scene_gives_zero_grid() {
        let scene = PipeScene::new([2.0, 2.0, 1.0], 9.0).unwrap();
        let line = ScanLine {
            start: [0.0, 1.0],
            end: [2.0, 1.0],
            trace_spacing: 0.01,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap();
        let b = synthesize_bscan(&scene, &line, &cfg).unwrap();
        assert!(b.amplitudes.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn off_slab_line_rejected() {
        let scene = PipeScene::new([2.0, 2.0, 1.0], 9.0).unwrap();
        let line = ScanLine {
            start: [-0.5, 1.0],
            end: [2.0, 1.0],
            trace_spacing: 0.01,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap();
        assert!(synthesize_bscan(&scene, &line, &cfg).is_err());
    }

    #[test]
    fn perpendicular_pipe_traces_a_hyperbola() {
        // pipe along y at x=1.0, depth 0.4; scan along x
        let scene = scene_with_pipe(Pipe {
            start: [1.0, 0.0, -0.4],
            end: [1.0, 2.0, -0.4],
            radius: 0.05,
            material: "pvc".into(),
        });
        let line = ScanLine {
            start: [0.0, 1.0],
            end: [2.0, 1.0],
            trace_spacing: 2.0 / 255.0,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap();
        let b = synthesize_bscan(&scene, &line, &cfg).unwrap();
        // per-column onset versus the travel-time oracle for the nearest
        // surface point (range shortened by the radius)
        let v = velocity(scene.eps_r).unwrap();
        for (k, pose) in b.poses.iter().enumerate() {
            let trace = b.trace(k);
            let Some(onset) = onset_sample(&trace, 0.5) else {
                continue;
            };
            let dx = pose.position[0] - 1.0;
            let dist = (dx * dx + 0.4 * 0.4).sqrt() - 0.05;
            let t_expected = 2.0 * dist / v;
            // onset precedes the wavelet peak by roughly half a period; allow
            // that much skew plus one sample
            let t_onset = onset as f64 * b.dt_ns;
            assert!(
                (t_onset - t_expected).abs() <= 1.0 / cfg.center_freq_ghz + b.dt_ns,
                "trace {k}: onset {t_onset} vs expected {t_expected}"
            );
        }
        // apex at the trace nearest x = 1.0
        let apex = apex_trace(&b).unwrap();
        let apex_x = b.poses[apex].position[0];
        assert!((apex_x - 1.0).abs() <= b.trace_spacing_m, "apex at {apex_x}");
    }

    #[test]
    fn parallel_pipe_gives_flat_band() {
        // pipe along x at y=1.0; scan line along x at the same y
        let scene = scene_with_pipe(Pipe {
            start: [0.0, 1.0, -0.4],
            end: [2.0, 1.0, -0.4],
            radius: 0.05,
            material: "pvc".into(),
        });
        let line = ScanLine {
            start: [0.2, 1.0],
            end: [1.8, 1.0],
            trace_spacing: 0.02,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap();
        let b = synthesize_bscan(&scene, &line, &cfg).unwrap();
        let onsets: Vec<usize> = (0..b.traces)
            .filter_map(|k| onset_sample(&b.trace(k), 0.5))
            .collect();
        assert_eq!(onsets.len(), b.traces);
        let first = onsets[0];
        assert!(onsets.iter().all(|&o| o == first), "band not flat: {onsets:?}");
    }

    #[test]
    fn bscan_is_linear_in_the_scene() {
        let pipe_a = Pipe {
            start: [0.6, 0.0, -0.3],
            end: [0.6, 2.0, -0.3],
            radius: 0.04,
            material: "pvc".into(),
        };
        let pipe_b = Pipe {
            start: [1.4, 0.0, -0.6],
            end: [1.4, 2.0, -0.6],
            radius: 0.05,
            material: "metal".into(),
        };
        let scene_a = scene_with_pipe(pipe_a.clone());
        let scene_b = scene_with_pipe(pipe_b.clone());
        let mut scene_ab = scene_with_pipe(pipe_a);
        scene_ab.add_pipe(pipe_b).unwrap();
        let line = ScanLine {
            start: [0.0, 1.0],
            end: [2.0, 1.0],
            trace_spacing: 0.02,
        };
        let cfg = BScanConfig::for_scene(&scene_a).unwrap();
        let a = synthesize_bscan(&scene_a, &line, &cfg).unwrap();
        let b = synthesize_bscan(&scene_b, &line, &cfg).unwrap();
        let ab = synthesize_bscan(&scene_ab, &line, &cfg).unwrap();
        for i in 0..ab.amplitudes.len() {
            assert!(
                (ab.amplitudes[i] - a.amplitudes[i] - b.amplitudes[i]).abs() < 1e-12,
                "index {i}"
            );
        }
    }

    #[test]
    fn apex_tracks_pipe_position_across_survey() {
        let scene = scene_with_pipe(Pipe {
            start: [0.73, 0.0, -0.35],
            end: [0.73, 2.0, -0.35],
            radius: 0.04,
            material: "pvc".into(),
        });
        let plan = plan_grid_survey(2.0, 2.0, 0.5, 0.01, ScanDirection::AlongX).unwrap();
        let cfg = BScanConfig::for_scene(&scene).unwrap();
        for line in &plan.lines {
            let b = synthesize_bscan(&scene, line, &cfg).unwrap();
            let apex = apex_trace(&b).unwrap();
            let apex_x = b.poses[apex].position[0];
            assert!(
                (apex_x - 0.73).abs() <= b.trace_spacing_m,
                "apex {apex_x} on line y={}",
                line.start[1]
            );
        }
    }

    #[test]
    fn gprb_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.gprb");
        let p2 = dir.path().join("b.gprb");
        let scene = scene_with_pipe(Pipe {
            start: [1.0, 0.0, -0.4],
            end: [1.0, 2.0, -0.4],
            radius: 0.05,
            material: "pvc".into(),
        });
        let line = ScanLine {
            start: [0.0, 1.0],
            end: [2.0, 1.0],
            trace_spacing: 0.05,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap().with_time_samples(64);
        let b = synthesize_bscan(&scene, &line, &cfg).unwrap();
        b.save(&p1).unwrap();
        let loaded = BScan::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.time_samples, b.time_samples);
        assert_eq!(loaded.poses.len(), b.poses.len());
    }

    #[test]
    fn noise_determinism_and_identity() {
        let scene = PipeScene::new([1.0, 1.0, 1.0], 9.0).unwrap();
        let line = ScanLine {
            start: [0.0, 0.5],
            end: [1.0, 0.5],
            trace_spacing: 0.1,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap().with_time_samples(32);
        let b = synthesize_bscan(&scene, &line, &cfg).unwrap();
        assert_eq!(b.with_noise(0.0, 1).unwrap(), b);
        assert_eq!(b.with_noise(0.1, 1).unwrap(), b.with_noise(0.1, 1).unwrap());
    }
}
