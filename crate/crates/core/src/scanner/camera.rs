//! Pinhole camera: x right, y down, z forward.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::Bvh;
use super::ScanError;
use crate::geometry::Vec3;
use crate::mesh::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    /// 320x240 with a 60 degree horizontal field of view.
    fn default() -> Self {
        Self { fx: 277.1, fy: 277.1, cx: 159.5, cy: 119.5, width: 320, height: 240 }
    }
}

impl CameraIntrinsics {
    /// Square pixels, principal point at the image center.
    pub fn with_fov(width: usize, height: usize, horizontal_fov_deg: f64) -> Self {
        let f = width as f64 / 2.0 / (horizontal_fov_deg.to_radians() / 2.0).tan();
        Self { fx: f, fy: f, cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0, width, height }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(ScanError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    /// Degrees about +z; 0 looks along +y, 90 along -x.
    pub yaw: f64,
    /// Degrees; positive looks up.
    pub pitch: f64,
}

impl CameraPose {
    pub fn new(position: Vec3, yaw: f64, pitch: f64) -> Self {
        Self { position: [position.x, position.y, position.z], yaw, pitch }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.position[0], self.position[1], self.position[2])
    }

    /// World-frame (right, down, forward) axes.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let (sy, cy) = self.yaw.to_radians().sin_cos();
        let (sp, cp) = self.pitch.to_radians().sin_cos();
        let forward = Vec3::new(-sy * cp, cy * cp, sp);
        let right = Vec3::new(cy, sy, 0.0);
        let down = forward.cross(&right);
        (right, down, forward)
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        let (r, d, f) = self.basis();
        self.position() + r * p.x + d * p.y + f * p.z
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        let (r, d, f) = self.basis();
        let q = p - self.position();
        Vec3::new(q.dot(&r), q.dot(&d), q.dot(&f))
    }
}

/// Camera-frame point seen at pixel `(u, v)` with z-depth `depth`.
pub fn unproject(k: &CameraIntrinsics, u: f64, v: f64, depth: f64) -> Vec3 {
    Vec3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth)
}

/// Pixel coordinates and z-depth of a camera-frame point.
pub fn project(k: &CameraIntrinsics, p: &Vec3) -> (f64, f64, f64) {
    (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major z-depth in meters; 0 means no hit.
    pub depth: Vec<f64>,
    /// Instance id of the hit triangle; 0 where nothing was hit.
    pub instance: Vec<u32>,
    pub color: Option<Vec<[u8; 3]>>,
}

impl DepthImage {
    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }
}

/// Geometry the scanner renders: a BVH plus per-triangle labels and colors.
#[derive(Debug, Clone)]
pub struct RenderScene {
    pub bvh: Bvh,
    pub triangle_instance: Vec<u32>,
    pub vertex_colors: Option<Vec<[Rgb; 3]>>,
}

impl RenderScene {
    pub fn new(scene: &crate::scene::SceneMesh) -> Self {
        let mesh = &scene.mesh;
        let vertex_colors = mesh.vertex_colors.as_ref().map(|c| {
            mesh.triangles.iter().map(|t| [c[t[0] as usize], c[t[1] as usize], c[t[2] as usize]]).collect()
        });
        Self { bvh: Bvh::new(mesh), triangle_instance: scene.triangle_instance.clone(), vertex_colors }
    }

    fn shade(&self, triangle: usize, u: f64, v: f64) -> Option<[u8; 3]> {
        let c = self.vertex_colors.as_ref()?[triangle];
        let w0 = 1.0 - u - v;
        let mut out = [0u8; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            let x = w0 * c[0][ch] as f64 + u * c[1][ch] as f64 + v * c[2][ch] as f64;
            *o = (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Some(out)
    }
}

fn pixel_ray(k: &CameraIntrinsics, basis: &(Vec3, Vec3, Vec3), u: usize, v: usize) -> Vec3 {
    let (r, d, f) = basis;
    r * ((u as f64 - k.cx) / k.fx) + d * ((v as f64 - k.cy) / k.fy) + f
}

/// Ray casts one view. The ray through pixel `(u, v)` has camera-frame
/// direction `((u - cx) / fx, (v - cy) / fy, 1)`, so the hit parameter is
/// the z-depth. Hits beyond `max_range` (z-depth) are dropped.
pub fn render_depth(scene: &RenderScene, pose: &CameraPose, k: &CameraIntrinsics, max_range: f64) -> DepthImage {
    let basis = pose.basis();
    let origin = pose.position();
    let rows: Vec<Vec<(f64, u32, Option<[u8; 3]>)>> = (0..k.height)
        .into_par_iter()
        .map(|v| {
            (0..k.width)
                .map(|u| {
                    let dir = pixel_ray(k, &basis, u, v);
                    match scene.bvh.intersect(&origin, &dir, max_range) {
                        Some(hit) => (hit.t, scene.triangle_instance[hit.triangle], scene.shade(hit.triangle, hit.u, hit.v)),
                        None => (0.0, 0, None),
                    }
                })
                .collect()
        })
        .collect();
    let n = k.pixel_count();
    let mut image = DepthImage {
        width: k.width,
        height: k.height,
        depth: Vec::with_capacity(n),
        instance: Vec::with_capacity(n),
        color: scene.vertex_colors.as_ref().map(|_| Vec::with_capacity(n)),
    };
    for (d, id, c) in rows.into_iter().flatten() {
        image.depth.push(d);
        image.instance.push(id);
        if let Some(colors) = image.color.as_mut() {
            colors.push(c.unwrap_or([0, 0, 0]));
        }
    }
    image
}

/// [`render_depth`] without the BVH, for cross-checking.
pub fn render_depth_brute_force(scene: &RenderScene, pose: &CameraPose, k: &CameraIntrinsics, max_range: f64) -> DepthImage {
    let basis = pose.basis();
    let origin = pose.position();
    let n = k.pixel_count();
    let mut image =
        DepthImage { width: k.width, height: k.height, depth: Vec::with_capacity(n), instance: Vec::with_capacity(n), color: None };
    for v in 0..k.height {
        for u in 0..k.width {
            let dir = pixel_ray(k, &basis, u, v);
            let (d, id) = scene
                .bvh
                .intersect_brute_force(&origin, &dir, max_range)
                .map_or((0.0, 0), |h| (h.t, scene.triangle_instance[h.triangle]));
            image.depth.push(d);
            image.instance.push(id);
        }
    }
    image
}
