//! PLY reader and writer (`ascii 1.0` and `binary_little_endian 1.0`).
//!
//! Vertices carry `x y z`, optional `red green blue` and an optional scalar
//! `label`. Colors are written as `double` in [0, 1]; integer color
//! properties are read as 8-bit values and divided by 255. Faces use a
//! `vertex_indices` (or `vertex_index`) list; polygons are fan-triangulated.

use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};
use crate::io::atomic_write;

const MAX_HEADER: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlyError {
    #[error("malformed PLY header at byte {offset}: {message}")]
    MalformedHeader { offset: usize, message: String },
    #[error("truncated PLY payload at byte {offset}: {message}")]
    Truncated { offset: usize, message: String },
    #[error("unsupported PLY variant at byte {offset}: {message}")]
    Unsupported { offset: usize, message: String },
    #[error("invalid PLY value at byte {offset}: {message}")]
    InvalidValue { offset: usize, message: String },
}

impl PlyError {
    pub fn category(&self) -> &'static str {
        match self {
            PlyError::MalformedHeader { .. } => "ply-malformed-header",
            PlyError::Truncated { .. } => "ply-truncated",
            PlyError::Unsupported { .. } => "ply-unsupported",
            PlyError::InvalidValue { .. } => "ply-invalid-value",
        }
    }

    pub fn offset(&self) -> usize {
        match self {
            PlyError::MalformedHeader { offset, .. }
            | PlyError::Truncated { offset, .. }
            | PlyError::Unsupported { offset, .. }
            | PlyError::InvalidValue { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    fn parse_ascii(self, tok: &str) -> Option<f64> {
        match self {
            Scalar::I8 => tok.parse::<i8>().ok().map(f64::from),
            Scalar::U8 => tok.parse::<u8>().ok().map(f64::from),
            Scalar::I16 => tok.parse::<i16>().ok().map(f64::from),
            Scalar::U16 => tok.parse::<u16>().ok().map(f64::from),
            Scalar::I32 => tok.parse::<i32>().ok().map(f64::from),
            Scalar::U32 => tok.parse::<u32>().ok().map(f64::from),
            Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => tok.parse::<f64>().ok(),
        }
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

fn malformed(offset: usize, message: impl Into<String>) -> PlyError {
    PlyError::MalformedHeader {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, PlyError> {
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        if pos >= bytes.len() || pos > MAX_HEADER {
            return Err(malformed(pos.min(bytes.len()), "missing end_header"));
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| malformed(bytes.len(), "missing end_header"))?;
        let raw = &bytes[pos..end];
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| malformed(pos, "header line is not UTF-8"))?;
        let start = pos;
        pos = end + 1;
        if line.trim() == "end_header" {
            break;
        }
        lines.push((start, line.to_string()));
    }
    let body_offset = pos;
    let mut it = lines.into_iter();
    match it.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(malformed(0, "file does not start with 'ply'")),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for (off, line) in it {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if toks.len() != 3 {
                    return Err(malformed(off, "format line needs a kind and a version"));
                }
                if toks[2] != "1.0" {
                    return Err(PlyError::Unsupported {
                        offset: off,
                        message: format!("format version {}", toks[2]),
                    });
                }
                format = Some(match toks[1] {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(PlyError::Unsupported {
                            offset: off,
                            message: format!("format {other}"),
                        })
                    }
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(malformed(off, "element line needs a name and a count"));
                }
                let count = toks[2]
                    .parse::<usize>()
                    .map_err(|_| malformed(off, format!("bad element count '{}'", toks[2])))?;
                elements.push(Element {
                    name: toks[1].to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed(off, "property before any element"))?;
                let scalar = |s: &str| {
                    Scalar::parse(s).ok_or_else(|| PlyError::Unsupported {
                        offset: off,
                        message: format!("property type '{s}'"),
                    })
                };
                let prop = match toks.as_slice() {
                    [_, "list", c, i, name] => {
                        let count = scalar(c)?;
                        if count.is_float() {
                            return Err(malformed(off, "list count type must be an integer"));
                        }
                        Property {
                            name: name.to_string(),
                            kind: PropKind::List { count, item: scalar(i)? },
                        }
                    }
                    [_, t, name] => Property {
                        name: name.to_string(),
                        kind: PropKind::Scalar(scalar(t)?),
                    },
                    _ => return Err(malformed(off, "unrecognized property line")),
                };
                el.props.push(prop);
            }
            Some(other) => return Err(malformed(off, format!("unknown header keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| malformed(0, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset,
    })
}

/// Sequential value source over the payload.
trait Reader {
    fn read(&mut self, t: Scalar, what: &str) -> std::result::Result<f64, PlyError>;
    fn offset(&self) -> usize;
}

struct BinReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader for BinReader<'_> {
    fn read(&mut self, t: Scalar, what: &str) -> std::result::Result<f64, PlyError> {
        let n = t.size();
        if self.bytes.len() - self.pos < n {
            return Err(PlyError::Truncated {
                offset: self.pos,
                message: format!("expected {n} bytes for {what}"),
            });
        }
        let v = t.decode_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }

    fn offset(&self) -> usize {
        self.pos
    }
}

struct AsciiReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader for AsciiReader<'_> {
    fn read(&mut self, t: Scalar, what: &str) -> std::result::Result<f64, PlyError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(PlyError::Truncated {
                offset: self.pos,
                message: format!("expected a value for {what}"),
            });
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        t.parse_ascii(tok).ok_or_else(|| PlyError::InvalidValue {
            offset: start,
            message: format!("cannot parse '{}' as {t:?} for {what}", tok.chars().take(32).collect::<String>()),
        })
    }

    fn offset(&self) -> usize {
        self.pos
    }
}

/// Parsed file contents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub faces: Vec<[usize; 3]>,
}

fn min_record_size(el: &Element, format: PlyFormat) -> usize {
    match format {
        PlyFormat::Ascii => 2 * el.props.len(),
        PlyFormat::BinaryLittleEndian => el
            .props
            .iter()
            .map(|p| match p.kind {
                PropKind::Scalar(s) => s.size(),
                PropKind::List { count, .. } => count.size(),
            })
            .sum(),
    }
    .max(1)
}

fn as_index(v: f64, offset: usize, what: &str) -> std::result::Result<usize, PlyError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(PlyError::InvalidValue {
            offset,
            message: format!("{what} must be a non-negative integer, got {v}"),
        })
    }
}

pub fn parse_ply(bytes: &[u8]) -> std::result::Result<PlyData, PlyError> {
    let header = parse_header(bytes)?;
    let body = header.body_offset;
    let mut bin = BinReader { bytes, pos: body };
    let mut asc = AsciiReader { bytes, pos: body };
    let reader: &mut dyn Reader = match header.format {
        PlyFormat::Ascii => &mut asc,
        PlyFormat::BinaryLittleEndian => &mut bin,
    };
    let mut out = PlyData::default();
    let mut colors: Option<Vec<[f64; 3]>> = None;
    let mut labels: Option<Vec<u32>> = None;
    let mut vertex_count = None;
    let mut seen_vertex = false;
    for el in &header.elements {
        let remaining = bytes.len().saturating_sub(reader.offset());
        let cap = el.count.min(remaining / min_record_size(el, header.format) + 1);
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            if seen_vertex {
                return Err(malformed(0, "duplicate vertex element"));
            }
            seen_vertex = true;
            for axis in ["x", "y", "z"] {
                if !el.props.iter().any(|p| p.name == axis && matches!(p.kind, PropKind::Scalar(_))) {
                    return Err(malformed(0, format!("vertex element lacks scalar '{axis}'")));
                }
            }
            let has = |n: &str| el.props.iter().any(|p| p.name == n);
            if has("red") && has("green") && has("blue") {
                colors = Some(Vec::with_capacity(cap));
            }
            if has("label") {
                labels = Some(Vec::with_capacity(cap));
            }
            out.cloud.points.reserve(cap);
            vertex_count = Some(el.count);
        }
        if el.props.is_empty() {
            continue;
        }
        for _ in 0..el.count {
            let mut p = [0.0; 3];
            let mut c = [0.0; 3];
            let mut label = 0u32;
            for prop in &el.props {
                let at = reader.offset();
                match prop.kind {
                    PropKind::Scalar(t) => {
                        let v = reader.read(t, &prop.name)?;
                        if !is_vertex {
                            continue;
                        }
                        let color_div = if t.is_float() { 1.0 } else { 255.0 };
                        match prop.name.as_str() {
                            "x" => p[0] = v,
                            "y" => p[1] = v,
                            "z" => p[2] = v,
                            "red" => c[0] = v / color_div,
                            "green" => c[1] = v / color_div,
                            "blue" => c[2] = v / color_div,
                            "label" => label = as_index(v, at, "label")? as u32,
                            _ => {}
                        }
                    }
                    PropKind::List { count, item } => {
                        let n = as_index(reader.read(count, &prop.name)?, at, "list length")?;
                        let wanted = is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index");
                        let mut idx = Vec::with_capacity(if wanted { n.min(64) } else { 0 });
                        for _ in 0..n {
                            let at = reader.offset();
                            let v = reader.read(item, &prop.name)?;
                            if wanted {
                                idx.push(as_index(v, at, "vertex index")?);
                            }
                        }
                        if wanted {
                            if idx.len() < 3 {
                                return Err(PlyError::InvalidValue {
                                    offset: at,
                                    message: format!("face with {} vertices", idx.len()),
                                });
                            }
                            for w in 1..idx.len() - 1 {
                                out.faces.push([idx[0], idx[w], idx[w + 1]]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                out.cloud.points.push(p);
                if let Some(cs) = colors.as_mut() {
                    cs.push(c);
                }
                if let Some(ls) = labels.as_mut() {
                    ls.push(label);
                }
            }
        }
    }
    let nv = vertex_count.ok_or_else(|| malformed(0, "no vertex element"))?;
    if let Some(bad) = out.faces.iter().flatten().find(|&&i| i >= nv) {
        return Err(PlyError::InvalidValue {
            offset: body,
            message: format!("face references vertex {bad} of {nv}"),
        });
    }
    out.cloud.colors = colors;
    out.cloud.labels = labels;
    Ok(out)
}

/// Serializes a cloud and optional triangles.
pub fn encode_ply(cloud: &PointCloud, faces: &[[usize; 3]], format: PlyFormat) -> Vec<u8> {
    let mut h = String::from("ply\n");
    h.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    h.push_str(&format!("element vertex {}\n", cloud.points.len()));
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors.is_some() {
        h.push_str("property double red\nproperty double green\nproperty double blue\n");
    }
    if cloud.labels.is_some() {
        h.push_str("property uint label\n");
    }
    if !faces.is_empty() {
        h.push_str(&format!(
            "element face {}\nproperty list uchar uint vertex_indices\n",
            faces.len()
        ));
    }
    h.push_str("end_header\n");
    let mut out = h.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        let mut vals: Vec<f64> = p.to_vec();
        if let Some(c) = &cloud.colors {
            vals.extend_from_slice(&c[i]);
        }
        match format {
            PlyFormat::Ascii => {
                let mut line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                if let Some(l) = &cloud.labels {
                    line.push(l[i].to_string());
                }
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
            PlyFormat::BinaryLittleEndian => {
                for v in vals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(l) = &cloud.labels {
                    out.extend_from_slice(&l[i].to_le_bytes());
                }
            }
        }
    }
    for f in faces {
        match format {
            PlyFormat::Ascii => out.extend_from_slice(format!("3 {} {} {}\n", f[0], f[1], f[2]).as_bytes()),
            PlyFormat::BinaryLittleEndian => {
                out.push(3);
                for &i in f {
                    out.extend_from_slice(&(i as u32).to_le_bytes());
                }
            }
        }
    }
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let data = parse_ply(&read_bytes(path)?)?;
    data.cloud.validate()?;
    Ok(data.cloud)
}

/// Reads a triangle mesh and tags it with the given vertebra level.
pub fn read_ply_mesh(path: &Path, level: u32) -> Result<TriangleMesh> {
    let data = parse_ply(&read_bytes(path)?)?;
    TriangleMesh::new(data.cloud.points, data.faces, level)
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    cloud.validate()?;
    atomic_write(path, &encode_ply(cloud, &[], format))
}

pub fn write_ply_mesh(path: &Path, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    let cloud = PointCloud::new(mesh.vertices.clone());
    atomic_write(path, &encode_ply(&cloud, &mesh.triangles, format))
}
