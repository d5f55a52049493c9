use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::scalar::Scalar;

/// Writes `v` and 1-based `f` records.
pub fn write_obj<T: Scalar>(mesh: &TriangleMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `v` and `f` records; polygons are fan-triangulated, texture/normal indices
/// (`f 1/2/3`) and negative indices are accepted, other records are skipped.
pub fn read_obj<T: Scalar>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::format("obj", format!("line {}: {e}", ln + 1)))?;
                if c.len() != 3 {
                    return Err(Error::format("obj", format!("line {}: vertex needs 3 coordinates", ln + 1)));
                }
                vertices.push([T::lit(c[0]), T::lit(c[1]), T::lit(c[2])]);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|e| Error::format("obj", format!("line {}: {e}", ln + 1)))?;
                    let i = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if i < 0 {
                        return Err(Error::format("obj", format!("line {}: bad index", ln + 1)));
                    }
                    idx.push(i as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::format("obj", format!("line {}: face needs 3 vertices", ln + 1)));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}
