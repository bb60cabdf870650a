//! Indexed triangle meshes and the OBJ subset used for asset geometry.
//!
//! Supported OBJ statements: `v x y z [r g b]` and `f i j k ...` (polygons are
//! fan-triangulated; `i/t/n`, `i//n` and negative relative indices are
//! accepted). Every other statement is ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{Aabb3, RigidTransform, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index} but only {count} vertices exist")]
    IndexOutOfRange { triangle: usize, index: u32, count: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("vertex color count {colors} does not match vertex count {vertices}")]
    ColorCount { colors: usize, vertices: usize },
    #[error("mesh extent along axis {axis} is zero; cannot rescale")]
    DegenerateExtent { axis: usize },
}

pub type Rgb = [f32; 3];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_colors: Option<Vec<Rgb>>,
}

impl TriangleMesh {
    /// Builds a mesh, checking indices and coordinates and dropping
    /// zero-area triangles.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        vertex_colors: Option<Vec<Rgb>>,
    ) -> Result<Self, MeshError> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        if let Some(colors) = &vertex_colors {
            if colors.len() != vertices.len() {
                return Err(MeshError::ColorCount { colors: colors.len(), vertices: vertices.len() });
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange { triangle: t, index, count: vertices.len() });
                }
            }
        }
        let mut mesh = Self { vertices, triangles, vertex_colors };
        mesh.drop_degenerate();
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    fn is_degenerate(&self, t: usize) -> bool {
        let [i, j, k] = self.triangles[t];
        if i == j || j == k || i == k {
            return true;
        }
        let [a, b, c] = self.triangle(t);
        let longest = (b - a).norm_squared().max((c - b).norm_squared()).max((a - c).norm_squared());
        let twice_area = (b - a).cross(&(c - a)).norm();
        twice_area <= 1e-12 * longest || twice_area == 0.0
    }

    /// Removes zero-area triangles; returns how many were removed.
    pub fn drop_degenerate(&mut self) -> usize {
        let before = self.triangles.len();
        let keep: Vec<bool> = (0..before).map(|t| !self.is_degenerate(t)).collect();
        let mut it = keep.iter();
        self.triangles.retain(|_| *it.next().unwrap());
        before - self.triangles.len()
    }

    /// Bounding box over vertices referenced by at least one triangle.
    pub fn aabb(&self) -> Aabb3 {
        let mut b = Aabb3::empty();
        for tri in &self.triangles {
            for &i in tri {
                b.grow(&self.vertices[i as usize]);
            }
        }
        b
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn transformed(&self, transform: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| transform.apply(v)).collect(),
            triangles: self.triangles.clone(),
            vertex_colors: self.vertex_colors.clone(),
        }
    }

    /// Maps every vertex through `f`.
    pub fn map_vertices(&mut self, f: impl Fn(&Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(v);
        }
    }

    /// Appends `other`, filling colors with `fill` where either side lacks them.
    pub fn append(&mut self, other: &TriangleMesh, fill: Rgb) {
        let offset = self.vertices.len() as u32;
        let own_colors = self.vertex_colors.take().unwrap_or_else(|| vec![fill; self.vertices.len()]);
        let mut colors = own_colors;
        match &other.vertex_colors {
            Some(c) => colors.extend_from_slice(c),
            None => colors.extend(std::iter::repeat(fill).take(other.vertices.len())),
        }
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
        self.vertex_colors = Some(colors);
    }

    /// Serializes as OBJ text. Vertex colors, when present, use the
    /// `v x y z r g b` extension.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            match &self.vertex_colors {
                Some(c) => {
                    let [r, g, b] = c[i];
                    writeln!(out, "v {} {} {} {} {} {}", v.x, v.y, v.z, r, g, b).unwrap();
                }
                None => writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap(),
            }
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        out
    }

    /// Axis-aligned box `[min, max]` as 12 outward-facing triangles.
    pub fn cuboid(min: Vec3, max: Vec3) -> TriangleMesh {
        let mut vertices = Vec::with_capacity(8);
        for k in 0..8 {
            vertices.push(Vec3::new(
                if k & 1 == 0 { min.x } else { max.x },
                if k & 2 == 0 { min.y } else { max.y },
                if k & 4 == 0 { min.z } else { max.z },
            ));
        }
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let mut triangles = Vec::with_capacity(12);
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        TriangleMesh { vertices, triangles, vertex_colors: None }
    }
}

fn parse_index(token: &str, vertex_count: usize, line: usize) -> Result<u32, MeshError> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("bad face index {token:?}"),
    })?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        return Err(MeshError::Parse { line, message: "face index 0 is invalid".into() });
    };
    if resolved < 0 || resolved >= vertex_count as i64 {
        return Err(MeshError::Parse {
            line,
            message: format!("face index {raw} out of range ({vertex_count} vertices so far)"),
        });
    }
    Ok(resolved as u32)
}

/// Parses OBJ text into a validated mesh.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut colors: Vec<Option<Rgb>> = Vec::new();
    let mut triangles = Vec::new();

    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let values: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| MeshError::Parse { line, message: format!("bad vertex: {e}") })?;
                if !values.iter().all(|v| v.is_finite()) {
                    return Err(MeshError::Parse { line, message: "non-finite vertex value".into() });
                }
                match values.len() {
                    3 | 4 => colors.push(None),
                    6 | 7 => colors.push(Some([values[3] as f32, values[4] as f32, values[5] as f32])),
                    k => {
                        return Err(MeshError::Parse { line, message: format!("vertex has {k} values") })
                    }
                }
                vertices.push(Vec3::new(values[0], values[1], values[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| parse_index(t, vertices.len(), line))
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(MeshError::Parse { line, message: "face needs at least 3 vertices".into() });
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }

    let vertex_colors = if !colors.is_empty() && colors.iter().all(Option::is_some) {
        Some(colors.into_iter().map(|c| {
            let [r, g, b] = c.unwrap();
            [r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0)]
        }).collect())
    } else {
        None
    };
    let mesh = TriangleMesh::new(vertices, triangles, vertex_colors)?;
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    Ok(mesh)
}
