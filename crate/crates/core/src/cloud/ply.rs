//! ASCII PLY point-cloud interchange.
//!
//! Coordinates are written with Rust's shortest-round-trip decimal
//! formatting, so a write/read cycle reproduces every `f64` bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "end_header")?;
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        for (idx, line) in lines.by_ref() {
            let line = line?;
            if line.trim().starts_with("comment") {
                continue;
            }
            return Ok((idx + 1, line));
        }
        Err(Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {expect}"),
        })
    };

    let (ln, magic) = next_line("`ply`")?;
    if magic.trim() != "ply" {
        return Err(Error::Parse {
            line: ln,
            message: "missing `ply` magic".into(),
        });
    }
    let (ln, format) = next_line("format line")?;
    if format.trim() != "format ascii 1.0" {
        return Err(Error::Parse {
            line: ln,
            message: format!("unsupported format `{}`", format.trim()),
        });
    }
    let (ln, element) = next_line("element line")?;
    let parts: Vec<&str> = element.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "element" || parts[1] != "vertex" {
        return Err(Error::Parse {
            line: ln,
            message: "expected `element vertex <count>`".into(),
        });
    }
    let count: usize = parts[2].parse().map_err(|e| Error::Parse {
        line: ln,
        message: format!("bad vertex count: {e}"),
    })?;
    for name in ["x", "y", "z"] {
        let (ln, prop) = next_line("property line")?;
        let parts: Vec<&str> = prop.split_whitespace().collect();
        let ok = parts.len() == 3
            && parts[0] == "property"
            && (parts[1] == "float" || parts[1] == "double")
            && parts[2] == name;
        if !ok {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected `property float {name}`, got `{}`", prop.trim()),
            });
        }
    }
    let (ln, end) = next_line("`end_header`")?;
    if end.trim() != "end_header" {
        return Err(Error::Parse {
            line: ln,
            message: "expected `end_header`".into(),
        });
    }
    let header_lines = ln;

    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let row_line = header_lines + i + 1;
        let (ln, row) = match next_line("vertex row") {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::Parse {
                    line: row_line,
                    message: format!("vertex {} of {count} missing", i + 1),
                })
            }
        };
        let nums: Vec<f64> = row
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: ln,
                message: format!("bad coordinate: {e}"),
            })?;
        if nums.len() != 3 {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected 3 coordinates, got {}", nums.len()),
            });
        }
        points.push([nums[0], nums[1], nums[2]]);
    }
    Ok(PointCloud::new(points))
}
