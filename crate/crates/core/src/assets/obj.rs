//! Wavefront OBJ reading and writing, with an optional MTL sidecar for
//! diffuse color and texture.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Point3, Vector3};

use super::{Texture, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Default)]
struct Material {
    diffuse: Option<[f32; 3]>,
    texture: Option<PathBuf>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_floats<const N: usize>(path: &Path, line: usize, toks: &[&str]) -> Result<[f64; N]> {
    if toks.len() < N {
        return Err(parse_err(path, line, format!("expected {N} numbers")));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(toks) {
        *o = t
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("bad number {t:?}")))?;
    }
    Ok(out)
}

fn resolve_index(raw: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let i: i64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad index {raw:?}")))?;
    let idx = if i > 0 {
        (i - 1) as usize
    } else if i < 0 && (-i) as usize <= count {
        (count as i64 + i) as usize
    } else {
        return Err(parse_err(path, line, format!("index {i} out of range")));
    };
    if idx >= count {
        return Err(parse_err(
            path,
            line,
            format!("index out of range: {i} with {count} entries"),
        ));
    }
    Ok(idx)
}

fn read_mtl(path: &Path) -> Result<HashMap<String, Material>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mats = HashMap::new();
    let mut current: Option<String> = None;
    for (ln, raw) in text.lines().enumerate() {
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.first().copied() {
            Some("newmtl") => {
                let name = toks.get(1).copied().unwrap_or_default().to_string();
                mats.insert(name.clone(), Material::default());
                current = Some(name);
            }
            Some("Kd") => {
                let rgb = parse_floats::<3>(path, ln + 1, &toks[1..])?;
                if let Some(m) = current.as_ref().and_then(|n| mats.get_mut(n)) {
                    m.diffuse = Some([rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]);
                }
            }
            Some("map_Kd") => {
                if let (Some(m), Some(file)) =
                    (current.as_ref().and_then(|n| mats.get_mut(n)), toks.last())
                {
                    m.texture = Some(path.parent().unwrap_or(Path::new(".")).join(file));
                }
            }
            _ => {}
        }
    }
    Ok(mats)
}

/// Parses an OBJ file into a single triangle mesh. Polygons are fan
/// triangulated; vertices are split per distinct (position, uv, normal)
/// corner and ordered by first use.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    // Corner keys: (position, uv, normal) indices.
    let mut corners: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
    let mut corner_ids: HashMap<(usize, Option<usize>, Option<usize>), usize> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut materials = HashMap::new();
    let mut active_material: Option<String> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some(&head) = toks.first() else { continue };
        match head {
            "v" => {
                let [x, y, z] = parse_floats::<3>(path, line, &toks[1..])?;
                positions.push(Point3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(path, line, &toks[1..])?;
                uvs.push([u, v]);
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(path, line, &toks[1..])?;
                normals.push(Vector3::new(x, y, z));
            }
            "f" => {
                if toks.len() < 4 {
                    return Err(parse_err(path, line, "face needs at least 3 vertices"));
                }
                let mut ids = Vec::with_capacity(toks.len() - 1);
                for t in &toks[1..] {
                    let mut parts = t.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), positions.len(), path, line)?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(s, uvs.len(), path, line)?),
                        _ => None,
                    };
                    let vn = match parts.next() {
                        Some(s) if !s.is_empty() => {
                            Some(resolve_index(s, normals.len(), path, line)?)
                        }
                        _ => None,
                    };
                    let key = (v, vt, vn);
                    let id = *corner_ids.entry(key).or_insert_with(|| {
                        corners.push(key);
                        corners.len() - 1
                    });
                    ids.push(id);
                }
                for k in 1..ids.len() - 1 {
                    faces.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            "mtllib" => {
                if let Some(file) = toks.last() {
                    let mtl = path.parent().unwrap_or(Path::new(".")).join(file);
                    materials = read_mtl(&mtl)?;
                }
            }
            "usemtl"
                if active_material.is_none() => {
                    active_material = toks.get(1).map(|s| s.to_string());
                }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(Error::Mesh(format!(
            "{}: degenerate mesh with zero faces",
            path.display()
        )));
    }

    let vertices: Vec<Point3<f64>> = corners.iter().map(|c| positions[c.0]).collect();
    let all_normals = corners.iter().all(|c| c.2.is_some());
    let vertex_normals = if all_normals {
        corners
            .iter()
            .map(|c| normals[c.2.unwrap()].try_normalize(0.0))
            .collect::<Option<Vec<_>>>()
    } else {
        None
    };
    let vertex_normals = match vertex_normals {
        Some(n) => n,
        None => {
            // Shared positions share a normal even when uv seams split them.
            let pos_of: Vec<usize> = corners.iter().map(|c| c.0).collect();
            let per_pos = super::area_weighted_normals(&positions, faces.iter().map(|f| {
                [pos_of[f[0]], pos_of[f[1]], pos_of[f[2]]]
            }));
            pos_of.iter().map(|&p| per_pos[p]).collect()
        }
    };
    let mesh_uvs = corners
        .iter()
        .all(|c| c.1.is_some())
        .then(|| corners.iter().map(|c| uvs[c.1.unwrap()]).collect());

    let material = active_material.and_then(|m| materials.remove(&m));
    let texture = match material.as_ref().and_then(|m| m.texture.as_ref()) {
        Some(p) => Some(Arc::new(Texture::load_png(p)?)),
        None => None,
    };
    let mesh = TriMesh {
        vertices,
        faces,
        normals: vertex_normals,
        uvs: mesh_uvs,
        texture,
        albedo: material.and_then(|m| m.diffuse),
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Serializes geometry, normals and uvs. Floats use shortest round-trip
/// formatting so a reload reproduces the mesh bit for bit.
pub fn to_obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    if let Some(uvs) = &mesh.uvs {
        for t in uvs {
            let _ = writeln!(s, "vt {:?} {:?}", t[0], t[1]);
        }
    }
    for n in &mesh.normals {
        let _ = writeln!(s, "vn {:?} {:?} {:?}", n.x, n.y, n.z);
    }
    for f in &mesh.faces {
        let _ = write!(s, "f");
        for &i in f {
            let i = i + 1;
            if mesh.uvs.is_some() {
                let _ = write!(s, " {i}/{i}/{i}");
            } else {
                let _ = write!(s, " {i}//{i}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
