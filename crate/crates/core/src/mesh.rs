//! Triangle meshes and the PLY reader/writer.
//!
//! The reader understands `ascii`, `binary_little_endian` and
//! `binary_big_endian` bodies, per-vertex colors (`red/green/blue`), per-vertex
//! texture coordinates (`texture_u/texture_v`, `u/v`, `s/t`) and per-face
//! `texcoord` lists, with the texture image named by a `comment TextureFile`
//! header line. Polygons are fan-triangulated.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Rgb, RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub enum TexCoords {
    PerVertex(Vec<[f64; 2]>),
    PerCorner(Vec<[[f64; 2]; 3]>),
}

/// RGB image with components in `[0, 1]`, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl Texture {
    /// Bilinear lookup; `v = 0` is the bottom row (OpenGL/PLY convention).
    pub fn sample(&self, uv: [f64; 2]) -> Rgb {
        let x = uv[0].clamp(0.0, 1.0) * (self.width - 1) as f64;
        let y = (1.0 - uv[1].clamp(0.0, 1.0)) * (self.height - 1) as f64;
        let (x0, y0) = (x.floor() as u32, y.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let px = |x: u32, y: u32| self.pixels[(y * self.width + x) as usize];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = px(x0, y0)[c] * (1.0 - fx) + px(x1, y0)[c] * fx;
            let bottom = px(x0, y1)[c] * (1.0 - fx) + px(x1, y1)[c] * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (width, height) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    p[0] as f64 / 255.0,
                    p[1] as f64 / 255.0,
                    p[2] as f64 / 255.0,
                ]
            })
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Appearance {
    None,
    VertexColors(Vec<Rgb>),
    Textured { coords: TexCoords, texture: Texture },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    appearance: Appearance,
}

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        Self::with_appearance(vertices, triangles, Appearance::None)
    }

    pub fn with_appearance(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        appearance: Appearance,
    ) -> Result<Self> {
        if !vertices.iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("mesh vertices"));
        }
        let n = vertices.len();
        if let Some(t) = triangles
            .iter()
            .find(|t| t.iter().any(|&i| i as usize >= n))
        {
            return Err(Error::InvalidMesh(format!(
                "triangle {t:?} indexes past {n} vertices"
            )));
        }
        match &appearance {
            Appearance::VertexColors(c) if c.len() != n => {
                return Err(Error::InvalidMesh(format!(
                    "{} vertex colors for {n} vertices",
                    c.len()
                )))
            }
            Appearance::Textured {
                coords: TexCoords::PerVertex(uv),
                ..
            } if uv.len() != n => {
                return Err(Error::InvalidMesh(format!(
                    "{} texture coordinates for {n} vertices",
                    uv.len()
                )))
            }
            Appearance::Textured {
                coords: TexCoords::PerCorner(uv),
                ..
            } if uv.len() != triangles.len() => {
                return Err(Error::InvalidMesh(format!(
                    "{} face texcoords for {} triangles",
                    uv.len(),
                    triangles.len()
                )))
            }
            _ => {}
        }
        let keep: Vec<bool> = triangles
            .iter()
            .map(|t| triangle_area(&vertices, t) > 0.0)
            .collect();
        let appearance = match appearance {
            Appearance::Textured {
                coords: TexCoords::PerCorner(uv),
                texture,
            } => Appearance::Textured {
                coords: TexCoords::PerCorner(
                    uv.into_iter()
                        .zip(&keep)
                        .filter_map(|(c, &k)| k.then_some(c))
                        .collect(),
                ),
                texture,
            },
            other => other,
        };
        let triangles = triangles
            .into_iter()
            .zip(&keep)
            .filter_map(|(t, &k)| k.then_some(t))
            .collect();
        Ok(Self {
            vertices,
            triangles,
            appearance,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn appearance(&self) -> &Appearance {
        &self.appearance
    }

    pub fn has_color(&self) -> bool {
        !matches!(self.appearance, Appearance::None)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let t = self.triangles[tri];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.vertices, t))
            .sum()
    }

    /// Color at barycentric `(w0, w1, w2)` of triangle `tri`, if the mesh is colored.
    pub fn color_at(&self, tri: usize, bary: [f64; 3]) -> Option<Rgb> {
        let t = self.triangles[tri];
        let mix2 = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
            [
                a[0] * bary[0] + b[0] * bary[1] + c[0] * bary[2],
                a[1] * bary[0] + b[1] * bary[1] + c[1] * bary[2],
            ]
        };
        match &self.appearance {
            Appearance::None => None,
            Appearance::VertexColors(c) => {
                let (a, b, d) = (c[t[0] as usize], c[t[1] as usize], c[t[2] as usize]);
                Some(std::array::from_fn(|k| {
                    a[k] * bary[0] + b[k] * bary[1] + d[k] * bary[2]
                }))
            }
            Appearance::Textured { coords, texture } => {
                let uv = match coords {
                    TexCoords::PerVertex(uv) => {
                        mix2(uv[t[0] as usize], uv[t[1] as usize], uv[t[2] as usize])
                    }
                    TexCoords::PerCorner(uv) => {
                        let c = uv[tri];
                        mix2(c[0], c[1], c[2])
                    }
                };
                Some(texture.sample(uv))
            }
        }
    }

    /// Copy with vertices mapped through `t`.
    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            triangles: self.triangles.clone(),
            appearance: self.appearance.clone(),
        }
    }

    /// Half the axis-aligned bounding-box diagonal.
    pub fn bounding_radius(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        if self.vertices.is_empty() {
            0.0
        } else {
            (hi - lo).norm() / 2.0
        }
    }

    pub fn load_ply(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ply = parse_ply(&bytes)?;
        let texture_dir = path.parent().unwrap_or(Path::new("."));
        ply.into_mesh(Some(texture_dir))
    }

    pub fn from_ply_bytes(bytes: &[u8]) -> Result<Self> {
        parse_ply(bytes)?.into_mesh(None)
    }

    /// Writes vertices, faces and (if present) per-vertex colors.
    pub fn write_ply(&self, path: &Path, format: PlyFormat) -> Result<()> {
        let mut out = Vec::new();
        self.write_ply_to(&mut out, format)
            .map_err(|e| Error::io(path, e))?;
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_ply_to(&self, out: &mut impl Write, format: PlyFormat) -> std::io::Result<()> {
        let colors = match &self.appearance {
            Appearance::VertexColors(c) => Some(c),
            _ => None,
        };
        writeln!(out, "ply")?;
        writeln!(
            out,
            "format {} 1.0",
            match format {
                PlyFormat::Ascii => "ascii",
                PlyFormat::BinaryLittleEndian => "binary_little_endian",
            }
        )?;
        writeln!(out, "element vertex {}", self.vertices.len())?;
        writeln!(
            out,
            "property double x\nproperty double y\nproperty double z"
        )?;
        if colors.is_some() {
            writeln!(
                out,
                "property uchar red\nproperty uchar green\nproperty uchar blue"
            )?;
        }
        writeln!(out, "element face {}", self.triangles.len())?;
        writeln!(out, "property list uchar int vertex_indices")?;
        writeln!(out, "end_header")?;
        let to_u8 = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        for (i, v) in self.vertices.iter().enumerate() {
            match format {
                PlyFormat::Ascii => {
                    write!(out, "{} {} {}", v.x, v.y, v.z)?;
                    if let Some(c) = colors {
                        let c = c[i];
                        write!(out, " {} {} {}", to_u8(c[0]), to_u8(c[1]), to_u8(c[2]))?;
                    }
                    writeln!(out)?;
                }
                PlyFormat::BinaryLittleEndian => {
                    for k in 0..3 {
                        out.write_all(&v[k].to_le_bytes())?;
                    }
                    if let Some(c) = colors {
                        let c = c[i];
                        out.write_all(&[to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])?;
                    }
                }
            }
        }
        for t in &self.triangles {
            match format {
                PlyFormat::Ascii => writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?,
                PlyFormat::BinaryLittleEndian => {
                    out.write_all(&[3u8])?;
                    for &i in t {
                        out.write_all(&(i as i32).to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn triangle_area(vertices: &[Vec3], t: &[u32; 3]) -> f64 {
    let a = vertices[t[0] as usize];
    let b = vertices[t[1] as usize];
    let c = vertices[t[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

// ── PLY parsing ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    LittleEndian,
    BigEndian,
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
            other => return Err(Error::Ply(format!("unknown scalar type `{other}`"))),
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

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Default)]
struct ElementData {
    /// One column per scalar property.
    scalars: Vec<Vec<f64>>,
    /// One column per list property.
    lists: Vec<Vec<Vec<f64>>>,
}

struct ParsedPly {
    elements: Vec<Element>,
    data: Vec<ElementData>,
    texture_file: Option<String>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Ply("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read(&mut self, s: Scalar, enc: Encoding) -> Result<f64> {
        let b = self.take(s.size())?;
        macro_rules! num {
            ($t:ty) => {{
                let arr = b.try_into().expect("sized slice");
                (match enc {
                    Encoding::BigEndian => <$t>::from_be_bytes(arr),
                    _ => <$t>::from_le_bytes(arr),
                }) as f64
            }};
        }
        Ok(match s {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        })
    }
}

fn parse_ply(bytes: &[u8]) -> Result<ParsedPly> {
    let header_end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| Error::Ply("missing end_header".into()))?;
    let mut body_start = header_end + b"end_header".len();
    // The header line terminator may be \n or \r\n.
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Ply("header is not valid UTF-8".into()))?;

    let mut lines = header.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(Error::Ply("missing `ply` magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut texture_file = None;
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                encoding = Some(match tok.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::LittleEndian,
                    Some("binary_big_endian") => Encoding::BigEndian,
                    other => return Err(Error::Ply(format!("unsupported format {other:?}"))),
                });
            }
            Some("comment") | Some("obj_info") => {
                let rest: Vec<&str> = tok.collect();
                if rest.first().map(|s| s.eq_ignore_ascii_case("texturefile")) == Some(true) {
                    texture_file = rest.get(1).map(|s| s.to_string());
                }
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Ply("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Ply(format!("bad count for element `{name}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before any element".into()))?;
                let words: Vec<&str> = tok.collect();
                let kind_and_name = match words.as_slice() {
                    ["list", count, item, name] => (
                        PropertyKind::List {
                            count: Scalar::parse(count)?,
                            item: Scalar::parse(item)?,
                        },
                        *name,
                    ),
                    [ty, name] => (PropertyKind::Scalar(Scalar::parse(ty)?), *name),
                    _ => return Err(Error::Ply(format!("malformed property line `{line}`"))),
                };
                if let PropertyKind::List { count, .. } = &kind_and_name.0 {
                    if !count.is_integer() {
                        return Err(Error::Ply("list count must be an integer type".into()));
                    }
                }
                element.properties.push(Property {
                    name: kind_and_name.1.to_string(),
                    kind: kind_and_name.0,
                });
            }
            Some(other) => return Err(Error::Ply(format!("unknown header keyword `{other}`"))),
            None => {}
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Ply("missing format line".into()))?;
    let body = &bytes[body_start..];
    let data = match encoding {
        Encoding::Ascii => read_ascii_body(body, &elements)?,
        enc => read_binary_body(body, &elements, enc)?,
    };
    Ok(ParsedPly {
        elements,
        data,
        texture_file,
    })
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn empty_columns(e: &Element) -> ElementData {
    let mut d = ElementData::default();
    for p in &e.properties {
        match p.kind {
            PropertyKind::Scalar(_) => d.scalars.push(Vec::with_capacity(e.count)),
            PropertyKind::List { .. } => d.lists.push(Vec::with_capacity(e.count)),
        }
    }
    d
}

fn read_binary_body(body: &[u8], elements: &[Element], enc: Encoding) -> Result<Vec<ElementData>> {
    let mut cur = Cursor {
        bytes: body,
        pos: 0,
    };
    let mut out = Vec::with_capacity(elements.len());
    for e in elements {
        let mut d = empty_columns(e);
        for _ in 0..e.count {
            let (mut si, mut li) = (0, 0);
            for p in &e.properties {
                match p.kind {
                    PropertyKind::Scalar(s) => {
                        d.scalars[si].push(cur.read(s, enc)?);
                        si += 1;
                    }
                    PropertyKind::List { count, item } => {
                        let n = cur.read(count, enc)?;
                        if n < 0.0 {
                            return Err(Error::Ply("negative list length".into()));
                        }
                        let items = (0..n as usize)
                            .map(|_| cur.read(item, enc))
                            .collect::<Result<Vec<_>>>()?;
                        d.lists[li].push(items);
                        li += 1;
                    }
                }
            }
        }
        out.push(d);
    }
    Ok(out)
}

fn read_ascii_body(body: &[u8], elements: &[Element]) -> Result<Vec<ElementData>> {
    let text = std::str::from_utf8(body)
        .map_err(|_| Error::Ply("ASCII body is not valid UTF-8".into()))?;
    let mut tokens = text.split_ascii_whitespace();
    let mut next = |what: &str| -> Result<f64> {
        let t = tokens
            .next()
            .ok_or_else(|| Error::Ply(format!("unexpected end of file reading {what}")))?;
        t.parse::<f64>()
            .map_err(|_| Error::Ply(format!("bad number `{t}` in {what}")))
    };
    let mut out = Vec::with_capacity(elements.len());
    for e in elements {
        let mut d = empty_columns(e);
        for _ in 0..e.count {
            let (mut si, mut li) = (0, 0);
            for p in &e.properties {
                match p.kind {
                    PropertyKind::Scalar(_) => {
                        d.scalars[si].push(next(&e.name)?);
                        si += 1;
                    }
                    PropertyKind::List { .. } => {
                        let n = next(&e.name)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(Error::Ply(format!("bad list length {n}")));
                        }
                        let items = (0..n as usize)
                            .map(|_| next(&e.name))
                            .collect::<Result<Vec<_>>>()?;
                        d.lists[li].push(items);
                        li += 1;
                    }
                }
            }
        }
        out.push(d);
    }
    Ok(out)
}

impl ParsedPly {
    fn column<'a>(&'a self, element: usize, names: &[&str]) -> Option<(Scalar, &'a [f64])> {
        let e = &self.elements[element];
        let mut si = 0;
        for p in &e.properties {
            if let PropertyKind::Scalar(s) = p.kind {
                if names.contains(&p.name.as_str()) {
                    return Some((s, &self.data[element].scalars[si]));
                }
                si += 1;
            }
        }
        None
    }

    fn list<'a>(&'a self, element: usize, names: &[&str]) -> Option<&'a [Vec<f64>]> {
        let e = &self.elements[element];
        let mut li = 0;
        for p in &e.properties {
            if let PropertyKind::List { .. } = p.kind {
                if names.contains(&p.name.as_str()) {
                    return Some(&self.data[element].lists[li]);
                }
                li += 1;
            }
        }
        None
    }

    fn into_mesh(self, texture_dir: Option<&Path>) -> Result<TriangleMesh> {
        let vi = self
            .elements
            .iter()
            .position(|e| e.name == "vertex")
            .ok_or_else(|| Error::Ply("no vertex element".into()))?;
        let fi = self.elements.iter().position(|e| e.name == "face");

        let (_, xs) = self
            .column(vi, &["x"])
            .ok_or_else(|| Error::Ply("vertex element lacks x".into()))?;
        let (_, ys) = self
            .column(vi, &["y"])
            .ok_or_else(|| Error::Ply("vertex element lacks y".into()))?;
        let (_, zs) = self
            .column(vi, &["z"])
            .ok_or_else(|| Error::Ply("vertex element lacks z".into()))?;
        let vertices: Vec<Vec3> = (0..xs.len())
            .map(|i| Vec3::new(xs[i], ys[i], zs[i]))
            .collect();
        let n = vertices.len();

        let mut triangles = Vec::new();
        let mut corner_uv = Vec::new();
        if let Some(fi) = fi {
            let faces = self
                .list(fi, &["vertex_indices", "vertex_index"])
                .ok_or_else(|| Error::Ply("face element lacks vertex_indices".into()))?;
            let texcoords = self.list(fi, &["texcoord"]);
            for (f, idx) in faces.iter().enumerate() {
                if idx.len() < 3 {
                    continue;
                }
                let uv_of = |k: usize| -> Option<[f64; 2]> {
                    let tc = texcoords?.get(f)?;
                    (tc.len() == 2 * idx.len()).then(|| [tc[2 * k], tc[2 * k + 1]])
                };
                for k in 1..idx.len() - 1 {
                    let tri = [idx[0], idx[k], idx[k + 1]];
                    if tri.iter().any(|&v| v < 0.0 || v as usize >= n) {
                        return Err(Error::InvalidMesh(format!(
                            "face {f} references vertex outside 0..{n}"
                        )));
                    }
                    triangles.push([tri[0] as u32, tri[1] as u32, tri[2] as u32]);
                    if texcoords.is_some() {
                        match (uv_of(0), uv_of(k), uv_of(k + 1)) {
                            (Some(a), Some(b), Some(c)) => corner_uv.push([a, b, c]),
                            _ => {
                                return Err(Error::Ply(format!(
                                    "face {f} texcoord list does not match its vertex count"
                                )))
                            }
                        }
                    }
                }
            }
        }

        let color = |names: &[&str]| self.column(vi, names);
        let appearance = match (
            color(&["red", "r", "diffuse_red"]),
            color(&["green", "g", "diffuse_green"]),
            color(&["blue", "b", "diffuse_blue"]),
        ) {
            (Some((rt, r)), Some((_, g)), Some((_, b))) => {
                let scale = if rt.is_integer() { 1.0 / 255.0 } else { 1.0 };
                Appearance::VertexColors(
                    (0..n)
                        .map(|i| [r[i] * scale, g[i] * scale, b[i] * scale])
                        .collect(),
                )
            }
            _ => Appearance::None,
        };
        let appearance = match (&self.texture_file, texture_dir) {
            (Some(file), Some(dir)) => {
                let texture = Texture::load(&dir.join(file))?;
                let per_vertex = match (
                    self.column(vi, &["texture_u", "u", "s"]),
                    self.column(vi, &["texture_v", "v", "t"]),
                ) {
                    (Some((_, u)), Some((_, v))) => {
                        Some((0..n).map(|i| [u[i], v[i]]).collect::<Vec<_>>())
                    }
                    _ => None,
                };
                if let Some(uv) = per_vertex {
                    Appearance::Textured {
                        coords: TexCoords::PerVertex(uv),
                        texture,
                    }
                } else if !corner_uv.is_empty() {
                    Appearance::Textured {
                        coords: TexCoords::PerCorner(corner_uv),
                        texture,
                    }
                } else {
                    appearance
                }
            }
            _ => appearance,
        };
        TriangleMesh::with_appearance(vertices, triangles, appearance)
    }
}
