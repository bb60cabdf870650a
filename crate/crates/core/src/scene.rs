//! Room shell plus placed assets merged into one instance-labeled mesh.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{AssetCatalog, MeshLibrary};
use crate::geometry::{Aabb3, RigidTransform, Vec3};
use crate::layout::SceneLayout;
use crate::mesh::{Rgb, TriangleMesh};
use crate::seeding::mix64;

/// Instance id of floor, walls and ceiling.
pub const STRUCTURE_ID: u32 = 0;

const ROOM_TOL: f64 = 1e-6;
const STRUCTURE_COLOR: Rgb = [0.72, 0.72, 0.70];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub ceiling: bool,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self { width: 8.0, depth: 8.0, height: 3.0, ceiling: false }
    }
}

impl RoomSpec {
    pub fn new(width: f64, depth: f64, height: f64) -> Self {
        Self { width, depth, height, ceiling: false }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (name, v) in [("width", self.width), ("depth", self.depth), ("height", self.height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SceneError::InvalidRoom(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn aabb(&self) -> Aabb3 {
        Aabb3 { min: [0.0; 3], max: [self.width, self.depth, self.height] }
    }

    /// Floor and four walls (plus the ceiling when enabled), two triangles each.
    pub fn shell(&self) -> TriangleMesh {
        let (w, d, h) = (self.width, self.depth, self.height);
        let vertices = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(w, 0.0, 0.0),
            Vec3::new(w, d, 0.0),
            Vec3::new(0.0, d, 0.0),
            Vec3::new(0.0, 0.0, h),
            Vec3::new(w, 0.0, h),
            Vec3::new(w, d, h),
            Vec3::new(0.0, d, h),
        ];
        // Quads wound so normals point into the room.
        let mut quads = vec![[0, 1, 2, 3], [0, 4, 5, 1], [1, 5, 6, 2], [2, 6, 7, 3], [3, 7, 4, 0]];
        if self.ceiling {
            quads.push([4, 7, 6, 5]);
        }
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        let colors = vec![STRUCTURE_COLOR; vertices.len()];
        TriangleMesh::new(vertices, triangles, Some(colors)).expect("room shell is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    pub instance_id: u32,
    pub object_id: String,
    pub asset_id: String,
    pub class_name: String,
    pub world_transform: RigidTransform,
    /// Bounds of the transformed mesh.
    pub world_aabb: Aabb3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMesh {
    pub mesh: TriangleMesh,
    pub triangle_instance: Vec<u32>,
}

impl SceneMesh {
    pub fn instance_triangle_count(&self, instance_id: u32) -> usize {
        self.triangle_instance.iter().filter(|&&id| id == instance_id).count()
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid room: {0}")]
    InvalidRoom(String),
    #[error("placed object {0:?} has no asset mapping")]
    UnmappedObject(String),
    #[error("asset {0:?} is not in the catalog or mesh library")]
    UnknownAsset(String),
    #[error("instance {instance_id} ({asset_id}) leaves the room by {excess:.3e} m")]
    OutsideRoom { instance_id: u32, asset_id: String, excess: f64 },
    #[error("io error writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Deterministic color for an instance without vertex colors.
pub fn instance_color(instance_id: u32) -> Rgb {
    let h = mix64(u64::from(instance_id) ^ 0xC0105);
    let channel = |shift: u32| 0.25 + 0.7 * ((h >> shift) & 0xFF) as f32 / 255.0;
    [channel(0), channel(8), channel(16)]
}

fn excess_outside(room: &Aabb3, b: &Aabb3) -> f64 {
    (0..3).map(|a| (room.min[a] - b.min[a]).max(b.max[a] - room.max[a])).fold(0.0, f64::max)
}

/// Merges the room shell and every placement of `layout` into one mesh.
/// Instance ids are dense `1..=N` in placement order (floor, wall, supported).
/// `asset_of` maps each object id to its asset id.
pub fn build_scene(
    room: &RoomSpec,
    layout: &SceneLayout,
    asset_of: &HashMap<String, String>,
    catalog: &AssetCatalog,
    meshes: &MeshLibrary,
) -> Result<(SceneMesh, Vec<SceneInstance>), SceneError> {
    room.validate()?;
    let room_box = room.aabb();
    let mut mesh = room.shell();
    let mut labels = vec![STRUCTURE_ID; mesh.triangles.len()];
    let mut instances = Vec::new();
    for (k, placement) in layout.placements().enumerate() {
        let instance_id = k as u32 + 1;
        let asset_id = asset_of
            .get(&placement.object_id)
            .ok_or_else(|| SceneError::UnmappedObject(placement.object_id.clone()))?;
        let record = catalog.get(asset_id).ok_or_else(|| SceneError::UnknownAsset(asset_id.clone()))?;
        let source = meshes.get(asset_id).ok_or_else(|| SceneError::UnknownAsset(asset_id.clone()))?;
        let placed = source.transformed(&placement.world_transform);
        let world_aabb = placed.aabb();
        let excess = excess_outside(&room_box, &world_aabb);
        if excess > ROOM_TOL {
            return Err(SceneError::OutsideRoom { instance_id, asset_id: asset_id.clone(), excess });
        }
        mesh.append(&placed, instance_color(instance_id));
        labels.extend(std::iter::repeat(instance_id).take(placed.triangles.len()));
        instances.push(SceneInstance {
            instance_id,
            object_id: placement.object_id.clone(),
            asset_id: asset_id.clone(),
            class_name: record.class_name.clone(),
            world_transform: placement.world_transform,
            world_aabb,
        });
    }
    Ok((SceneMesh { mesh, triangle_instance: labels }, instances))
}

#[derive(Serialize)]
struct SceneSidecar<'a> {
    triangle_instance: &'a [u32],
    instances: &'a [SceneInstance],
}

/// Debug dump: `<stem>.obj` plus `<stem>.json` with the triangle labels.
pub fn export_scene_debug(dir: &Path, stem: &str, scene: &SceneMesh, instances: &[SceneInstance]) -> Result<(), SceneError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SceneError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let obj = dir.join(format!("{stem}.obj"));
    std::fs::write(&obj, scene.mesh.to_obj()).map_err(io(&obj))?;
    let json = dir.join(format!("{stem}.json"));
    let sidecar = SceneSidecar { triangle_instance: &scene.triangle_instance, instances };
    std::fs::write(&json, serde_json::to_string(&sidecar).unwrap()).map_err(io(&json))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_has_ten_triangles_and_normals_point_inward() {
        let room = RoomSpec::default();
        let shell = room.shell();
        assert_eq!(shell.triangles.len(), 10);
        let c = room.aabb().center();
        for t in 0..shell.triangles.len() {
            let [a, b, d] = shell.triangle(t);
            let n = (b - a).cross(&(d - a));
            assert!(n.dot(&(c - a)) > 0.0, "triangle {t} faces outward");
        }
        let with_ceiling = RoomSpec { ceiling: true, ..room }.shell();
        assert_eq!(with_ceiling.triangles.len(), 12);
    }

    #[test]
    fn room_validation() {
        assert!(RoomSpec::new(1.0, 0.0, 1.0).validate().is_err());
        assert!(RoomSpec::default().validate().is_ok());
    }
}
