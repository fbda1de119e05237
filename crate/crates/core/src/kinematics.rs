//! Omnidirectional-robot wheel kinematics and rotation-free survey planning.
//!
//! The robot rides on three wheels spaced 120° apart. Body motion maps to
//! wheel speeds through a fixed 3×3 matrix; the survey planner emits
//! straight, constant-heading scan lines across the slab surface.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Planar body velocity: linear (m/s) plus angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyTwist {
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
}

/// Linear speed of each drive wheel (m/s) plus the wheel-to-center distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelVelocities {
    pub v_w1: f64,
    pub v_w2: f64,
    pub v_w3: f64,
    /// Distance from each wheel to the body center, meters.
    pub d: f64,
}

/// Antenna pose for one trace. Heading is fixed (identity rotation) for the
/// whole survey, so only the position and a timestamp are carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyPose {
    pub position: [f64; 3],
    pub timestamp: f64,
}

/// One straight scan line with regularly spaced traces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanLine {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub trace_spacing: f64,
}

/// Axis the scan lines run along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    AlongX,
    AlongY,
}

/// Ordered scan lines covering the slab surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyPlan {
    pub lines: Vec<ScanLine>,
    pub line_spacing: f64,
    pub direction: ScanDirection,
}

const COS_120: f64 = -0.5; // cos(±2π/3)
const SIN_120: f64 = 0.866_025_403_784_438_6; // sin(2π/3) = √3/2

/// Rows of the body-to-wheel matrix for wheel-to-center distance `d`:
/// `[1, 0, -d]`, `[cos 2π/3, sin 2π/3, -d]`, `[cos -2π/3, sin -2π/3, -d]`.
fn body_to_wheel_matrix(d: f64) -> [[f64; 3]; 3] {
    [
        [1.0, 0.0, -d],
        [COS_120, SIN_120, -d],
        [COS_120, -SIN_120, -d],
    ]
}

/// Map a body twist to wheel speeds.
pub fn wheel_velocities(twist: BodyTwist, d: f64) -> Result<WheelVelocities> {
    if d <= 0.0 {
        return Err(Error::invalid(format!(
            "wheel-to-center distance must be positive, got {d}"
        )));
    }
    let m = body_to_wheel_matrix(d);
    let t = [twist.v_x, twist.v_y, twist.omega];
    let mut w = [0.0; 3];
    for (wi, row) in w.iter_mut().zip(&m) {
        *wi = row[0] * t[0] + row[1] * t[1] + row[2] * t[2];
    }
    Ok(WheelVelocities {
        v_w1: w[0],
        v_w2: w[1],
        v_w3: w[2],
        d,
    })
}

/// Recover the body twist from wheel speeds (exact 3×3 inverse; the matrix
/// is invertible for any d > 0).
pub fn body_twist_from_wheels(wheels: &WheelVelocities) -> Result<BodyTwist> {
    let d = wheels.d;
    if d <= 0.0 {
        return Err(Error::invalid(format!(
            "wheel-to-center distance must be positive, got {d}"
        )));
    }
    let m = body_to_wheel_matrix(d);
    let inv = invert_3x3(&m).ok_or_else(|| {
        Error::Numerical("body-to-wheel matrix is singular".into())
    })?;
    let w = [wheels.v_w1, wheels.v_w2, wheels.v_w3];
    let mut t = [0.0; 3];
    for (ti, row) in t.iter_mut().zip(&inv) {
        *ti = row[0] * w[0] + row[1] * w[1] + row[2] * w[2];
    }
    Ok(BodyTwist {
        v_x: t[0],
        v_y: t[1],
        omega: t[2],
    })
}

fn invert_3x3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det == 0.0 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b, c, d) = (
                m[(j + 1) % 3][(i + 1) % 3],
                m[(j + 2) % 3][(i + 2) % 3],
                m[(j + 1) % 3][(i + 2) % 3],
                m[(j + 2) % 3][(i + 1) % 3],
            );
            out[i][j] = (a * b - c * d) * inv_det;
        }
    }
    Some(out)
}

/// Plan parallel scan lines over a `[0,x_extent]×[0,y_extent]` slab surface.
///
/// Lines run along `direction` and are spaced by `line_spacing` along the
/// other axis, starting at 0 and including the far edge when it lands on the
/// grid. If the spacing exceeds the slab a single centered line is planned.
pub fn plan_grid_survey(
    x_extent: f64,
    y_extent: f64,
    line_spacing: f64,
    trace_spacing: f64,
    direction: ScanDirection,
) -> Result<SurveyPlan> {
    if line_spacing <= 0.0 || trace_spacing <= 0.0 {
        return Err(Error::invalid("survey spacings must be positive"));
    }
    let (along, across) = match direction {
        ScanDirection::AlongX => (x_extent, y_extent),
        ScanDirection::AlongY => (y_extent, x_extent),
    };
    if trace_spacing > along {
        return Err(Error::invalid("trace spacing exceeds slab extent"));
    }
    let offsets: Vec<f64> = if line_spacing > across {
        vec![across / 2.0]
    } else {
        // 1e-9 absorbs division roundoff so an exact-fit far edge is kept
        let count = (across / line_spacing + 1e-9).floor() as usize + 1;
        (0..count).map(|i| i as f64 * line_spacing).collect()
    };
    let lines = offsets
        .iter()
        .map(|&off| match direction {
            ScanDirection::AlongX => ScanLine {
                start: [0.0, off],
                end: [along, off],
                trace_spacing,
            },
            ScanDirection::AlongY => ScanLine {
                start: [off, 0.0],
                end: [off, along],
                trace_spacing,
            },
        })
        .collect();
    Ok(SurveyPlan {
        lines,
        line_spacing,
        direction,
    })
}

impl ScanLine {
    pub fn length(&self) -> f64 {
        let dx = self.end[0] - self.start[0];
        let dy = self.end[1] - self.start[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Unit direction in the surface plane.
    pub fn direction(&self) -> [f64; 2] {
        let len = self.length();
        [
            (self.end[0] - self.start[0]) / len,
            (self.end[1] - self.start[1]) / len,
        ]
    }

    /// Constant-heading poses along the line, z pinned to the slab surface.
    /// Timestamps advance by one second per trace.
    pub fn poses(&self) -> Vec<SurveyPose> {
        let n = (self.length() / self.trace_spacing + 1e-9).floor() as usize + 1;
        let dir = self.direction();
        (0..n)
            .map(|i| {
                let s = i as f64 * self.trace_spacing;
                SurveyPose {
                    position: [self.start[0] + s * dir[0], self.start[1] + s * dir[1], 0.0],
                    timestamp: i as f64,
                }
            })
            .collect()
    }
}

impl SurveyPlan {
    /// Serialize as `line x1 y1 x2 y2 trace_spacing` records.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            writeln!(
                out,
                "line {} {} {} {} {}",
                l.start[0], l.start[1], l.end[0], l.end[1], l.trace_spacing
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<SurveyPlan> {
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = raw.split_whitespace().collect();
            if parts.len() != 6 || parts[0] != "line" {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected `line x1 y1 x2 y2 trace_spacing`, got `{raw}`"),
                });
            }
            let nums: Vec<f64> = parts[1..]
                .iter()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number: {e}"),
                })?;
            lines.push(ScanLine {
                start: [nums[0], nums[1]],
                end: [nums[2], nums[3]],
                trace_spacing: nums[4],
            });
        }
        if lines.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no scan lines in survey file".into(),
            });
        }
        let direction = if (lines[0].end[1] - lines[0].start[1]).abs() < 1e-12 {
            ScanDirection::AlongX
        } else {
            ScanDirection::AlongY
        };
        let line_spacing = if lines.len() > 1 {
            match direction {
                ScanDirection::AlongX => (lines[1].start[1] - lines[0].start[1]).abs(),
                ScanDirection::AlongY => (lines[1].start[0] - lines[0].start[0]).abs(),
            }
        } else {
            0.0
        };
        Ok(SurveyPlan {
            lines,
            line_spacing,
            direction,
        })
    }
}
