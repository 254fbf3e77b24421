use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use glam::DVec3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<DVec3>,
    pub normals: Vec<DVec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_valid(&self) -> bool {
        let n = self.vertices.len();
        self.normals.len() == n
            && self.triangles.iter().all(|t| t.iter().all(|&i| (i as usize) < n))
            && self.normals.iter().all(|v| (v.length() - 1.0).abs() <= 1e-6)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
}

/// Relative area below which a triangle counts as degenerate.
const DEGENERATE: f64 = 1e-12;

fn longest_edge_sq(p: [DVec3; 3]) -> f64 {
    (p[1] - p[0]).length_squared().max((p[2] - p[0]).length_squared()).max((p[2] - p[1]).length_squared())
}

/// Zero area relative to the larger of the triangle's own size and the
/// mesh's typical size, so triangles collapsed onto a point are caught too.
fn is_degenerate(p: [DVec3; 3], mesh_scale: f64) -> bool {
    let cross = (p[1] - p[0]).cross(p[2] - p[0]).length();
    let scale = longest_edge_sq(p).max(mesh_scale);
    scale == 0.0 || cross <= DEGENERATE * scale
}

/// Drops zero-area triangles and vertices no triangle uses, then sets each
/// normal to the normalised sum of incident face normals divided by face
/// area. Returns the number of triangles dropped.
pub fn vertex_normals(mesh: &mut TriangleMesh) -> usize {
    let before = mesh.triangles.len();
    let verts = &mesh.vertices;
    let corners = |t: &[u32; 3]| t.map(|i| verts[i as usize]);
    let mesh_scale =
        if before == 0 { 0.0 } else { mesh.triangles.iter().map(|t| longest_edge_sq(corners(t))).sum::<f64>() / before as f64 };
    mesh.triangles.retain(|t| !is_degenerate(corners(t), mesh_scale));
    let dropped = before - mesh.triangles.len();

    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &i in t {
            used[i as usize] = true;
        }
    }
    let mut renumber = vec![u32::MAX; used.len()];
    let mut kept = Vec::with_capacity(used.len());
    for (v, _) in used.iter().enumerate().filter(|(_, &u)| u) {
        renumber[v] = kept.len() as u32;
        kept.push(mesh.vertices[v]);
    }
    mesh.vertices = kept;
    for t in &mut mesh.triangles {
        *t = t.map(|i| renumber[i as usize]);
    }

    let mut acc = vec![DVec3::ZERO; mesh.vertices.len()];
    let mut fallback = vec![DVec3::ZERO; mesh.vertices.len()];
    for t in &mesh.triangles {
        let p = t.map(|i| mesh.vertices[i as usize]);
        let n = (p[1] - p[0]).cross(p[2] - p[0]);
        let area = 0.5 * n.length();
        let unit = n / (2.0 * area);
        for &i in t {
            acc[i as usize] += unit / area;
            if fallback[i as usize] == DVec3::ZERO {
                fallback[i as usize] = unit;
            }
        }
    }
    mesh.normals = acc.iter().zip(&fallback).map(|(a, f)| a.try_normalize().unwrap_or(*f)).collect();
    if dropped > 0 {
        log::debug!("vertex_normals: dropped {dropped} zero-area triangles");
    }
    dropped
}

/// Wavefront OBJ: `v`, then `vn`, then `f a//a b//b c//c` with 1-based indices.
pub fn write_obj<W: Write>(mesh: &TriangleMesh, out: &mut W) -> io::Result<()> {
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z)?;
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}")?;
    }
    Ok(())
}

pub fn export_mesh(mesh: &TriangleMesh, path: &Path) -> Result<(), MeshError> {
    let io_err = |source| MeshError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_obj(mesh, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Reads the subset of OBJ written by [`write_obj`].
pub fn read_obj(path: &Path) -> Result<TriangleMesh, MeshError> {
    let io_err = |source| MeshError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut mesh = TriangleMesh::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let bad = |message: String| MeshError::Parse { path: path.to_path_buf(), line: n + 1, message };
        let mut parts = line.split_whitespace();
        let tag = match parts.next() {
            Some(t) => t,
            None => continue,
        };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" | "vn" => {
                if rest.len() != 3 {
                    return Err(bad(format!("expected 3 coordinates, found {}", rest.len())));
                }
                let mut xyz = [0.0; 3];
                for (x, s) in xyz.iter_mut().zip(&rest) {
                    *x = s.parse().map_err(|_| bad(format!("bad number '{s}'")))?;
                }
                let v = DVec3::from_array(xyz);
                if tag == "v" {
                    mesh.vertices.push(v);
                } else {
                    mesh.normals.push(v);
                }
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(bad(format!("expected a triangle, found {} corners", rest.len())));
                }
                let mut tri = [0u32; 3];
                for (x, s) in tri.iter_mut().zip(&rest) {
                    let idx = s.split('/').next().unwrap_or("");
                    let i: u32 = idx.parse().map_err(|_| bad(format!("bad index '{s}'")))?;
                    if i == 0 {
                        return Err(bad("indices are 1-based".into()));
                    }
                    *x = i - 1;
                }
                mesh.triangles.push(tri);
            }
            "#" => {}
            other => return Err(bad(format!("unsupported record '{other}'"))),
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![DVec3::ZERO, DVec3::X, DVec3::new(1.0, 1.0, 0.0), DVec3::Y],
            normals: Vec::new(),
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    #[test]
    fn flat_quad_normals() {
        let mut m = quad();
        assert_eq!(vertex_normals(&mut m), 0);
        assert!(m.normals.iter().all(|n| (*n - DVec3::Z).length() < 1e-15));
        assert!(m.is_valid());
    }

    #[test]
    fn degenerate_triangle_is_ignored() {
        let mut plain = quad();
        vertex_normals(&mut plain);
        let mut with = quad();
        with.triangles.insert(1, [1, 1, 3]);
        with.triangles.push([0, 1, 0]);
        assert_eq!(vertex_normals(&mut with), 2);
        assert_eq!(with, plain);
    }

    #[test]
    fn triangle_collapsed_to_a_point_is_dropped() {
        let mut plain = quad();
        vertex_normals(&mut plain);
        let mut with = quad();
        let p = DVec3::new(1.0, 1.0, 0.0);
        with.vertices.extend([p + DVec3::new(1e-17, 0.0, 1e-17), p + DVec3::new(0.0, 2e-17, -1e-17)]);
        with.triangles.push([2, 5, 4]);
        assert_eq!(vertex_normals(&mut with), 1);
        assert_eq!(with, plain);
    }

    #[test]
    fn unreferenced_vertices_are_removed() {
        let mut m = quad();
        m.vertices.insert(0, DVec3::splat(9.0));
        for t in &mut m.triangles {
            *t = t.map(|i| i + 1);
        }
        vertex_normals(&mut m);
        let mut q = quad();
        vertex_normals(&mut q);
        assert_eq!(m, q);
    }

    #[test]
    fn smaller_faces_weigh_more() {
        // two faces at a ridge: the small one dominates the shared normal
        let mut m = TriangleMesh {
            vertices: vec![DVec3::ZERO, DVec3::Z, DVec3::new(-4.0, 0.0, 0.0), DVec3::new(0.0, 0.5, 0.0)],
            normals: Vec::new(),
            triangles: vec![[0, 1, 2], [0, 3, 1]],
        };
        vertex_normals(&mut m);
        let n = m.normals[0];
        assert!(n.x > n.y.abs());
    }

    #[test]
    fn obj_round_trip() {
        let dir = std::env::temp_dir().join(format!("flipsim-obj-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("quad.obj");
        let mut m = quad();
        m.vertices[2] = DVec3::new(1.0 / 3.0, 0.1 + 0.2, 1e-17);
        vertex_normals(&mut m);
        export_mesh(&m, &path).unwrap();
        assert_eq!(read_obj(&path).unwrap(), m);

        let empty = dir.join("empty.obj");
        export_mesh(&TriangleMesh::default(), &empty).unwrap();
        assert_eq!(std::fs::read_to_string(&empty).unwrap(), "");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn obj_line_counts_for_one_triangle() {
        let mut m = TriangleMesh { vertices: vec![DVec3::ZERO, DVec3::X, DVec3::Y], normals: Vec::new(), triangles: vec![[0, 1, 2]] };
        vertex_normals(&mut m);
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let count = |tag: &str| text.lines().filter(|l| l.split(' ').next() == Some(tag)).count();
        assert_eq!((count("v"), count("vn"), count("f")), (3, 3, 1));
        assert!(text.ends_with("f 1//1 2//2 3//3\n"));
    }

    #[test]
    fn export_error_names_the_path() {
        let path = Path::new("/nonexistent-dir/x.obj");
        let err = export_mesh(&TriangleMesh::default(), path).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.obj"));
    }
}
