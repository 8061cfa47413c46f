//! ASCII PLY interchange for point clouds and per-vertex colored heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// Vertex data of a PLY file: positions, optional normals, optional 8-bit colors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyCloud {
    pub cloud: PointCloud,
    pub colors: Option<Vec<[u8; 3]>>,
}

pub fn to_ascii(cloud: &PointCloud, colors: Option<&[[u8; 3]]>) -> Result<String> {
    let n = cloud.len();
    if let Some(c) = colors {
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
    }
    let mut s = String::with_capacity(64 * n + 256);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {n}");
    for axis in ["x", "y", "z"] {
        let _ = writeln!(s, "property double {axis}");
    }
    if cloud.normals.is_some() {
        for axis in ["nx", "ny", "nz"] {
            let _ = writeln!(s, "property double {axis}");
        }
    }
    if colors.is_some() {
        for ch in ["red", "green", "blue"] {
            let _ = writeln!(s, "property uchar {ch}");
        }
    }
    s.push_str("end_header\n");
    for i in 0..n {
        let p = cloud.positions[i];
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(ns) = &cloud.normals {
            let q = ns[i];
            let _ = write!(s, " {} {} {}", q.x, q.y, q.z);
        }
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, colors: Option<&[[u8; 3]]>) -> Result<()> {
    let path = path.as_ref();
    let text = to_ascii(cloud, colors)?;
    crate::atomic::write_atomic(path, text.as_bytes())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii(&text)
}

pub fn parse_ascii(text: &str) -> Result<PlyCloud> {
    let bad = |m: String| Error::Format(format!("ply: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines.next().ok_or_else(|| bad("header not terminated".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] if *fmt != "ascii" => {
                return Err(bad(format!("only ascii format is supported, found {fmt}")));
            }
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|e| bad(format!("vertex count: {e}")))?);
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(bad("list properties on vertices are not supported".into()));
            }
            ["property", _ty, name] if in_vertex => props.push((*name).to_string()),
            _ => {}
        }
    }
    let n = count.ok_or_else(|| bad("no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let xyz = [col("x"), col("y"), col("z")];
    if xyz.iter().any(Option::is_none) {
        return Err(bad("vertex element lacks x/y/z".into()));
    }
    let nrm = [col("nx"), col("ny"), col("nz")];
    let rgb = [col("red"), col("green"), col("blue")];
    let has_n = nrm.iter().all(Option::is_some);
    let has_c = rgb.iter().all(Option::is_some);

    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    for i in 0..n {
        let line = lines.next().ok_or_else(|| bad(format!("expected {n} vertices, got {i}")))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() < props.len() {
            return Err(bad(format!("vertex {i} has {} values, expected {}", vals.len(), props.len())));
        }
        let f = |j: Option<usize>| -> Result<f64> {
            vals[j.expect("checked")]
                .parse::<f64>()
                .map_err(|e| bad(format!("vertex {i}: {e}")))
        };
        positions.push(Vec3::new(f(xyz[0])?, f(xyz[1])?, f(xyz[2])?));
        if has_n {
            normals.push(Vec3::new(f(nrm[0])?, f(nrm[1])?, f(nrm[2])?));
        }
        if has_c {
            let u = |j: Option<usize>| -> Result<u8> {
                vals[j.expect("checked")]
                    .parse::<u8>()
                    .map_err(|e| bad(format!("vertex {i}: {e}")))
            };
            colors.push([u(rgb[0])?, u(rgb[1])?, u(rgb[2])?]);
        }
    }
    Ok(PlyCloud {
        cloud: PointCloud {
            positions,
            normals: has_n.then_some(normals),
            origin_index: None,
        },
        colors: has_c.then_some(colors),
    })
}
