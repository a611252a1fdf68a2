//! Binary little-endian PLY in the layout exported by common 3DGS trainers.

use std::io::Write;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use super::{Gaussian3D, GaussianSet};
use crate::error::{Error, Result};

/// Degree-0 spherical-harmonics normalization constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Activated opacities are kept this far from 0 and 1.
const OPACITY_EPS: f64 = 1e-12;

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Format(format!("unknown property type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    /// Caller guarantees `bytes.len() >= self.size()`.
    fn read(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let mut elements: Vec<Element> = Vec::new();
    let mut pos = 0;
    let mut line_no = 0;
    let mut saw_format = false;
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("header not terminated by end_header".into()))?;
        let raw = &rest[..nl];
        pos += nl + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::Format(format!("header line {line_no} is not utf-8")))?;
        let mut words = line.split_ascii_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 0 {
            if line.trim() != "ply" {
                return Err(Error::Format("missing `ply` magic".into()));
            }
            line_no += 1;
            continue;
        }
        line_no += 1;
        match keyword {
            "" | "comment" | "obj_info" => {}
            "format" => {
                let fmt = words.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(Error::Format(format!(
                        "unsupported PLY format `{fmt}` (binary_little_endian required)"
                    )));
                }
                saw_format = true;
            }
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| Error::Format("element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::Format(format!("element `{name}` has no valid count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("property before any element".into()))?;
                let ty = words
                    .next()
                    .ok_or_else(|| Error::Format("property without type".into()))?;
                if ty == "list" {
                    let count = Scalar::parse(words.next().unwrap_or(""))?;
                    let item = Scalar::parse(words.next().unwrap_or(""))?;
                    if matches!(count, Scalar::F32 | Scalar::F64) {
                        return Err(Error::Format("list count type must be integral".into()));
                    }
                    element.properties.push(Property::List { count, item });
                } else {
                    let ty = Scalar::parse(ty)?;
                    let name = words
                        .next()
                        .ok_or_else(|| Error::Format("property without name".into()))?;
                    element.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            k if k.as_bytes() == END => break,
            other => return Err(Error::Format(format!("unexpected header keyword `{other}`"))),
        }
    }
    if !saw_format {
        return Err(Error::Format("missing format line".into()));
    }
    Ok(Header {
        elements,
        body_offset: pos,
    })
}

/// Skips one element instance starting at `pos`, returning the new offset.
fn skip_row(bytes: &[u8], mut pos: usize, element: &Element) -> Result<usize> {
    let truncated = || Error::Format(format!("truncated data in element `{}`", element.name));
    for prop in &element.properties {
        match prop {
            Property::Scalar { ty, .. } => {
                pos = pos.checked_add(ty.size()).filter(|&p| p <= bytes.len()).ok_or_else(truncated)?;
            }
            Property::List { count, item } => {
                let end = pos + count.size();
                if end > bytes.len() {
                    return Err(truncated());
                }
                let n = count.read(&bytes[pos..]);
                if n < 0.0 {
                    return Err(Error::Format("negative list length".into()));
                }
                pos = (n as usize)
                    .checked_mul(item.size())
                    .and_then(|len| end.checked_add(len))
                    .filter(|&p| p <= bytes.len())
                    .ok_or_else(truncated)?;
            }
        }
    }
    Ok(pos)
}

/// Parses a splat PLY from memory.
pub fn parse_splat_ply(bytes: &[u8]) -> Result<GaussianSet> {
    let header = parse_header(bytes)?;
    let mut pos = header.body_offset;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Format("no `vertex` element".into()))?;
    for element in &header.elements[..vertex_idx] {
        for _ in 0..element.count {
            pos = skip_row(bytes, pos, element)?;
        }
    }
    let vertex = &header.elements[vertex_idx];

    let mut offsets = Vec::with_capacity(vertex.properties.len());
    let mut stride = 0usize;
    for prop in &vertex.properties {
        match prop {
            Property::Scalar { name, ty } => {
                offsets.push((name.as_str(), *ty, stride));
                stride += ty.size();
            }
            Property::List { .. } => {
                return Err(Error::Format("list properties are not supported on `vertex`".into()))
            }
        }
    }
    let mut slots = [(Scalar::F32, 0usize); REQUIRED.len()];
    for (slot, name) in slots.iter_mut().zip(REQUIRED) {
        let (_, ty, off) = offsets
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| Error::Format(format!("missing required vertex property `{name}`")))?;
        *slot = (*ty, *off);
    }

    let needed = vertex
        .count
        .checked_mul(stride)
        .and_then(|n| n.checked_add(pos))
        .ok_or_else(|| Error::Format("vertex count overflows".into()))?;
    if needed > bytes.len() {
        return Err(Error::Format(format!(
            "truncated vertex data: need {} bytes, have {}",
            needed - pos,
            bytes.len().saturating_sub(pos)
        )));
    }

    let mut gaussians = Vec::with_capacity(vertex.count);
    let mut vals = [0.0f64; REQUIRED.len()];
    for index in 0..vertex.count {
        let row = &bytes[pos + index * stride..pos + (index + 1) * stride];
        for (k, (ty, off)) in slots.iter().enumerate() {
            let v = ty.read(&row[*off..]);
            if !v.is_finite() {
                return Err(Error::Data {
                    index,
                    message: format!("non-finite `{}`", REQUIRED[k]),
                });
            }
            vals[k] = v;
        }
        gaussians.push(activate(index, &vals)?);
    }
    Ok(GaussianSet::new(gaussians))
}

fn activate(index: usize, v: &[f64; REQUIRED.len()]) -> Result<Gaussian3D> {
    let data = |message: String| Error::Data { index, message };
    let center = Vector3::new(v[0], v[1], v[2]);
    let color = Vector3::new(v[3], v[4], v[5]).map(|f| (0.5 + SH_C0 * f).clamp(0.0, 1.0));
    let opacity = (1.0 / (1.0 + (-v[6]).exp())).clamp(OPACITY_EPS, 1.0 - OPACITY_EPS);
    let scale = Vector3::new(v[7].exp(), v[8].exp(), v[9].exp());
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(data(format!("log-scale {:?} does not activate to a positive finite scale", &v[7..10])));
    }
    let rotation = Quaternion::new(v[10], v[11], v[12], v[13]);
    if rotation.norm() < 1e-12 {
        return Err(data("zero rotation quaternion".into()));
    }
    Gaussian3D::new(center, scale, rotation, opacity, color).map_err(|e| data(e.to_string()))
}

pub fn load_splat_ply(path: impl AsRef<Path>) -> Result<GaussianSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_splat_ply(&bytes)
}

/// Serializes the required property subset as `float`, applying inverse activations.
pub fn write_splat_ply<W: Write>(set: &GaussianSet, mut out: W) -> std::io::Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", set.len()));
    for name in REQUIRED {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut row = Vec::with_capacity(REQUIRED.len() * 4);
    for g in set {
        row.clear();
        let c = g.center();
        let color = g.color();
        let o = g.opacity();
        let s = g.scale();
        let q = g.rotation();
        let vals = [
            c.x,
            c.y,
            c.z,
            (color.x - 0.5) / SH_C0,
            (color.y - 0.5) / SH_C0,
            (color.z - 0.5) / SH_C0,
            (o / (1.0 - o)).ln(),
            s.x.ln(),
            s.y.ln(),
            s.z.ln(),
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for v in vals {
            row.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&row)?;
    }
    out.flush()
}

pub fn save_splat_ply(set: &GaussianSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if set.is_empty() {
        return Err(Error::arg("refusing to write an empty splat set"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_splat_ply(set, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
