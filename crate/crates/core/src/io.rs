//! ASCII XYZ and ASCII PLY point cloud files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
            Some("ply") => Ok(CloudFormat::Ply),
            other => Err(Error::UnsupportedFormat(format!(
                "{}: extension {:?} (expected .xyz or .ply)",
                path.display(),
                other.unwrap_or("")
            ))),
        }
    }
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let format = CloudFormat::from_path(path)?;
    let text = fs::read(path)?;
    let text = match String::from_utf8(text) {
        Ok(t) => t,
        Err(_) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: not an ASCII file (binary PLY is not supported)",
                path.display()
            )))
        }
    };
    let cloud = match format {
        CloudFormat::Xyz => parse_xyz(&text, path)?,
        CloudFormat::Ply => parse_ply(&text, path)?,
    };
    Ok(cloud)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = CloudFormat::from_path(path)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    if format == CloudFormat::Ply {
        writeln!(out, "ply")?;
        writeln!(out, "format ascii 1.0")?;
        writeln!(out, "comment frame {}", cloud.frame_id)?;
        writeln!(out, "element vertex {}", cloud.len())?;
        writeln!(out, "property double x")?;
        writeln!(out, "property double y")?;
        writeln!(out, "property double z")?;
        writeln!(out, "end_header")?;
    }
    // `{}` prints the shortest representation that parses back to the same f64.
    for p in &cloud.points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn parse_coords(fields: &[&str], cols: [usize; 3], path: &Path, line: usize) -> Result<Point3> {
    let mut xyz = [0.0; 3];
    for (slot, &col) in xyz.iter_mut().zip(cols.iter()) {
        let field = fields.get(col).ok_or_else(|| {
            parse_err(path, line, format!("expected at least {} values", col + 1))
        })?;
        *slot = field
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("invalid number {field:?}")))?;
        if !slot.is_finite() {
            return Err(parse_err(path, line, "non-finite coordinate"));
        }
    }
    Ok(Point3::new(xyz[0], xyz[1], xyz[2]))
}

fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        points.push(parse_coords(&fields, [0, 1, 2], path, i + 1)?);
    }
    Ok(PointCloud::new(points))
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut frame_id = None;
    let mut header_done = false;
    for (i, raw) in lines.by_ref() {
        let line_no = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.first().copied() {
            Some("format") => match fields.get(1).copied() {
                Some("ascii") => {}
                Some(f) if f.starts_with("binary") => {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: binary PLY ({f}) is not supported; convert to ASCII",
                        path.display()
                    )))
                }
                _ => return Err(parse_err(path, line_no, "unrecognized format line")),
            },
            Some("comment") => {
                if fields.get(1) == Some(&"frame") {
                    frame_id = fields.get(2).map(|s| s.to_string());
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = fields
                    .get(1)
                    .ok_or_else(|| parse_err(path, line_no, "element without a name"))?;
                let count = fields
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, line_no, "element without a valid count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line_no, "property before any element"))?;
                let name = fields
                    .last()
                    .filter(|_| fields.len() >= 3)
                    .ok_or_else(|| parse_err(path, line_no, "malformed property"))?;
                el.properties.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unexpected header keyword {other:?}"),
                ))
            }
        }
    }
    if !header_done {
        return Err(parse_err(path, text.lines().count(), "missing end_header"));
    }
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, 1, "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let col = |axis: &str| {
        vertex
            .properties
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| parse_err(path, 1, format!("vertex element lacks property {axis}")))
    };
    let cols = [col("x")?, col("y")?, col("z")?];

    // In ASCII PLY every element entry occupies one line.
    let skip: usize = elements[..vertex_pos].iter().map(|e| e.count).sum();
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty()).skip(skip);
    let mut points = Vec::with_capacity(vertex.count);
    for _ in 0..vertex.count {
        let (i, line) = body.next().ok_or_else(|| {
            parse_err(
                path,
                text.lines().count(),
                "fewer vertex lines than declared",
            )
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        points.push(parse_coords(&fields, cols, path, i + 1)?);
    }
    let mut cloud = PointCloud::new(points);
    if let Some(f) = frame_id {
        cloud.frame_id = f;
    }
    Ok(cloud)
}
