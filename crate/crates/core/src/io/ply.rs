//! Binary little-endian PLY in the layout used by 3D Gaussian splatting
//! tools: `x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3`.
//!
//! Values are stored raw (log-scales, opacity logit, unnormalized quaternion
//! `w x y z`). `f_rest` is channel-major: entry `c * (K - 1) + (k - 1)` holds
//! channel `c` of coefficient `k`.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{sh_coeff_count, GaussianPrimitive, PrimitiveSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlyPrecision {
    /// `float` properties, what most viewers expect.
    F32,
    /// `double` properties; round-trips bit-exactly.
    #[default]
    F64,
}

fn property_names(sh_degree: usize) -> Vec<String> {
    let rest = 3 * (sh_coeff_count(sh_degree) - 1);
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

fn record_values(p: &GaussianPrimitive, out: &mut Vec<f64>) {
    let k = p.sh_coeffs.len();
    out.extend(p.position.iter());
    out.extend([0.0; 3]);
    out.extend(p.sh_coeffs[0].iter());
    for c in 0..3 {
        out.extend((1..k).map(|j| p.sh_coeffs[j][c]));
    }
    out.push(p.opacity_raw);
    out.extend(p.log_scale.iter());
    out.extend(p.rotation);
}

pub fn write_ply_bytes(set: &PrimitiveSet, precision: PlyPrecision) -> Vec<u8> {
    let ty = match precision {
        PlyPrecision::F32 => "float",
        PlyPrecision::F64 => "double",
    };
    let names = property_names(set.sh_degree);
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", set.len());
    for n in &names {
        header.push_str(&format!("property {ty} {n}\n"));
    }
    header.push_str("end_header\n");
    let width = if precision == PlyPrecision::F32 { 4 } else { 8 };
    let mut out = header.into_bytes();
    out.reserve(set.len() * names.len() * width);
    let mut vals = Vec::with_capacity(names.len());
    for p in &set.primitives {
        vals.clear();
        record_values(p, &mut vals);
        for v in &vals {
            match precision {
                PlyPrecision::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
                PlyPrecision::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

pub fn write_ply(path: &Path, set: &PrimitiveSet, precision: PlyPrecision) -> Result<()> {
    set.check_finite()?;
    fs::write(path, write_ply_bytes(set, precision)).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<PrimitiveSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ply_bytes(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar, usize)>,
    stride: usize,
}

fn ply_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ply {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Parses a PLY image from memory. Elements other than `vertex` are skipped
/// as long as they only have scalar properties.
pub fn read_ply_bytes(bytes: &[u8]) -> Result<PrimitiveSet> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let nl = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ply_err(start, "header ends before end_header"))?;
        *pos = start + nl + 1;
        let line = std::str::from_utf8(&bytes[start..start + nl])
            .map_err(|_| ply_err(start, "header line is not UTF-8"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (at, magic) = next_line(&mut pos)?;
    if magic != "ply" {
        return Err(ply_err(at, "missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    loop {
        let (at, line) = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(ply_err(at, format!("unsupported format {fmt}; only binary_little_endian is read")));
                }
                format_seen = true;
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| ply_err(at, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    stride: 0,
                });
            }
            ["property", "list", ..] => {
                return Err(ply_err(at, "list properties are not supported"));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| ply_err(at, "property before any element"))?;
                let scalar = Scalar::parse(ty).ok_or_else(|| ply_err(at, format!("unknown property type {ty:?}")))?;
                el.props.push((name.to_string(), scalar, el.stride));
                el.stride += scalar.size();
            }
            _ => return Err(ply_err(at, format!("unrecognised header line {line:?}"))),
        }
    }
    if !format_seen {
        return Err(ply_err(0, "header has no format line"));
    }

    let mut body = pos;
    let mut vertex = None;
    for el in &elements {
        let size = el.count.checked_mul(el.stride).ok_or_else(|| ply_err(body, "element too large"))?;
        if el.name == "vertex" {
            vertex = Some((el, body));
        }
        body = body.checked_add(size).ok_or_else(|| ply_err(body, "element too large"))?;
    }
    let (el, start) = vertex.ok_or_else(|| ply_err(pos, "no vertex element"))?;

    let find = |name: &str| -> Result<(Scalar, usize)> {
        el.props
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|&(_, s, off)| (s, off))
            .ok_or_else(|| ply_err(pos, format!("missing property {name}")))
    };
    let rest_count = el.props.iter().filter(|(n, _, _)| n.starts_with("f_rest_")).count();
    let sh_degree = (0..=3)
        .find(|&l| 3 * (sh_coeff_count(l) - 1) == rest_count)
        .ok_or_else(|| ply_err(pos, format!("{rest_count} f_rest properties do not match any SH degree <= 3")))?;
    let k = sh_coeff_count(sh_degree);
    let get = |names: &[String]| names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>();
    let pos_p = get(&["x", "y", "z"].map(String::from))?;
    let dc_p = get(&["f_dc_0", "f_dc_1", "f_dc_2"].map(String::from))?;
    let rest_p = get(&(0..3 * (k - 1)).map(|i| format!("f_rest_{i}")).collect::<Vec<_>>())?;
    let op_p = find("opacity")?;
    let scale_p = get(&["scale_0", "scale_1", "scale_2"].map(String::from))?;
    let rot_p = get(&["rot_0", "rot_1", "rot_2", "rot_3"].map(String::from))?;

    let mut primitives = Vec::with_capacity(el.count);
    for i in 0..el.count {
        let rec = start + i * el.stride;
        let data = bytes
            .get(rec..rec + el.stride)
            .ok_or_else(|| ply_err(rec.min(bytes.len()), format!("truncated: vertex {i} of {} is incomplete", el.count)))?;
        let val = |(s, off): (Scalar, usize)| s.read(&data[off..]);
        let mut sh_coeffs = vec![Vector3::zeros(); k];
        sh_coeffs[0] = Vector3::new(val(dc_p[0]), val(dc_p[1]), val(dc_p[2]));
        for c in 0..3 {
            for j in 1..k {
                sh_coeffs[j][c] = val(rest_p[c * (k - 1) + j - 1]);
            }
        }
        primitives.push(GaussianPrimitive {
            position: Vector3::new(val(pos_p[0]), val(pos_p[1]), val(pos_p[2])),
            rotation: [val(rot_p[0]), val(rot_p[1]), val(rot_p[2]), val(rot_p[3])],
            log_scale: Vector3::new(val(scale_p[0]), val(scale_p[1]), val(scale_p[2])),
            opacity_raw: val(op_p),
            sh_coeffs,
        });
    }
    PrimitiveSet::new(primitives, sh_degree)
}
