//! Binary little-endian PLY for labelled point sets and triangle meshes.
//!
//! Points are written as `float x y z`, optionally `float nx ny nz` and `uchar label`
//! (0 = curve, 1 = sheet). Meshes add a `face` element with `list uchar int
//! vertex_indices`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Label, PointSet, TriangleMesh};
use crate::scalar::Scalar;

fn f32_bytes<T: Scalar>(v: T) -> [u8; 4] {
    (v.to_f64_lossy() as f32).to_le_bytes()
}

pub fn write_ply_points<T: Scalar>(points: &PointSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}", points.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if points.normals().is_some() {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    if points.labels().is_some() {
        writeln!(w, "property uchar label")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..points.len() {
        for &c in &points.points[i] {
            w.write_all(&f32_bytes(c))?;
        }
        if let Some(n) = points.normals() {
            for &c in &n[i] {
                w.write_all(&f32_bytes(c))?;
            }
        }
        if let Some(l) = points.labels() {
            w.write_all(&[l[i].code()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ply_mesh<T: Scalar>(mesh: &TriangleMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}", mesh.vertices.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "element face {}\nproperty list uchar int vertex_indices\nend_header", mesh.faces.len())?;
    for v in &mesh.vertices {
        for &c in v {
            w.write_all(&f32_bytes(c))?;
        }
    }
    for f in &mesh.faces {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Kind {
    fn parse(s: &str) -> Result<Kind> {
        Ok(match s {
            "char" | "int8" => Kind::I8,
            "uchar" | "uint8" => Kind::U8,
            "short" | "int16" => Kind::I16,
            "ushort" | "uint16" => Kind::U16,
            "int" | "int32" => Kind::I32,
            "uint" | "uint32" => Kind::U32,
            "float" | "float32" => Kind::F32,
            "double" | "float64" => Kind::F64,
            _ => return Err(Error::format("ply", format!("unknown property type `{s}`"))),
        })
    }

    fn read(self, r: &mut impl Read) -> Result<f64> {
        let mut b = [0u8; 8];
        let n = match self {
            Kind::I8 | Kind::U8 => 1,
            Kind::I16 | Kind::U16 => 2,
            Kind::I32 | Kind::U32 | Kind::F32 => 4,
            Kind::F64 => 8,
        };
        r.read_exact(&mut b[..n])?;
        Ok(match self {
            Kind::I8 => b[0] as i8 as f64,
            Kind::U8 => b[0] as f64,
            Kind::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Kind::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Kind::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Kind::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Kind::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Kind::F64 => f64::from_le_bytes(b),
        })
    }
}

#[derive(Debug)]
enum Prop {
    Scalar(String, Kind),
    List(Kind, Kind),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

/// Parsed element rows: scalar properties by name, plus list properties.
struct Rows {
    names: Vec<String>,
    scalars: Vec<Vec<f64>>,
    lists: Vec<Vec<usize>>,
}

fn read_body(path: impl AsRef<Path>) -> Result<Vec<(String, Rows)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::format("ply", "missing end_header"));
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if first {
            if t != ["ply"] {
                return Err(Error::format("ply", "missing `ply` magic"));
            }
            first = false;
            continue;
        }
        match t.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::format("ply", format!("unsupported format `{fmt}`")));
                }
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::format("ply", "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ck, ik, _] => elements
                .last_mut()
                .ok_or_else(|| Error::format("ply", "property before element"))?
                .props
                .push(Prop::List(Kind::parse(ck)?, Kind::parse(ik)?)),
            ["property", kind, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("ply", "property before element"))?
                .props
                .push(Prop::Scalar(name.to_string(), Kind::parse(kind)?)),
            ["end_header"] => break,
            _ => {}
        }
    }
    let mut out = Vec::new();
    for el in &elements {
        let names: Vec<String> = el
            .props
            .iter()
            .filter_map(|p| match p {
                Prop::Scalar(n, _) => Some(n.clone()),
                Prop::List(..) => None,
            })
            .collect();
        let mut scalars = Vec::with_capacity(el.count);
        let mut lists = Vec::with_capacity(el.count);
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(names.len());
            let mut list = Vec::new();
            for p in &el.props {
                match p {
                    Prop::Scalar(_, k) => row.push(k.read(&mut r)?),
                    Prop::List(ck, ik) => {
                        let n = ck.read(&mut r)? as usize;
                        for _ in 0..n {
                            let v = ik.read(&mut r)?;
                            if v < 0.0 {
                                return Err(Error::format("ply", "negative index"));
                            }
                            list.push(v as usize);
                        }
                    }
                }
            }
            scalars.push(row);
            lists.push(list);
        }
        out.push((el.name.clone(), Rows { names, scalars, lists }));
    }
    Ok(out)
}

fn column(rows: &Rows, name: &str) -> Option<usize> {
    rows.names.iter().position(|n| n == name)
}

pub fn read_ply_points<T: Scalar>(path: impl AsRef<Path>) -> Result<PointSet<T>> {
    let body = read_body(path)?;
    let (_, rows) = body
        .iter()
        .find(|(n, _)| n == "vertex")
        .ok_or_else(|| Error::format("ply", "no vertex element"))?;
    let col = |n: &str| column(rows, n).ok_or_else(|| Error::format("ply", format!("missing property `{n}`")));
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let pts = rows.scalars.iter().map(|r| [T::lit(r[x]), T::lit(r[y]), T::lit(r[z])]).collect();
    let mut set = PointSet::new(pts);
    if let (Some(a), Some(b), Some(c)) = (column(rows, "nx"), column(rows, "ny"), column(rows, "nz")) {
        // Stored as f32; renormalize so the unit-length invariant holds at f64.
        let normals = rows
            .scalars
            .iter()
            .map(|r| {
                let n = (r[a] * r[a] + r[b] * r[b] + r[c] * r[c]).sqrt();
                [T::lit(r[a] / n), T::lit(r[b] / n), T::lit(r[c] / n)]
            })
            .collect();
        set = set.with_normals(normals)?;
    }
    if let Some(l) = column(rows, "label") {
        let labels = rows
            .scalars
            .iter()
            .map(|r| Label::from_code(r[l] as u8).ok_or_else(|| Error::format("ply", format!("bad label {}", r[l]))))
            .collect::<Result<Vec<_>>>()?;
        set = set.with_labels(labels)?;
    }
    Ok(set)
}

pub fn read_ply_mesh<T: Scalar>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let body = read_body(path)?;
    let pts: PointSet<T> = {
        let (_, rows) = body
            .iter()
            .find(|(n, _)| n == "vertex")
            .ok_or_else(|| Error::format("ply", "no vertex element"))?;
        let col = |n: &str| column(rows, n).ok_or_else(|| Error::format("ply", format!("missing property `{n}`")));
        let (x, y, z) = (col("x")?, col("y")?, col("z")?);
        PointSet::new(rows.scalars.iter().map(|r| [T::lit(r[x]), T::lit(r[y]), T::lit(r[z])]).collect())
    };
    let mut faces = Vec::new();
    if let Some((_, rows)) = body.iter().find(|(n, _)| n == "face") {
        for l in &rows.lists {
            if l.len() < 3 {
                return Err(Error::format("ply", "face with fewer than 3 vertices"));
            }
            for k in 1..l.len() - 1 {
                faces.push([l[0], l[k], l[k + 1]]);
            }
        }
    }
    TriangleMesh::new(pts.points, faces)
}
