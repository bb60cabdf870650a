//! Simulated RGB-D acquisition of a synthetic scene.
//!
//! Free cells of the mid-height plane are candidate scanner positions; five
//! of them are chosen by farthest point sampling and each renders twelve
//! views 30 degrees apart. The depth maps are back-projected into one cloud,
//! thinned to one point per voxel and labeled with instance ids.

mod bvh;
mod camera;

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb3, Vec3};
use crate::scene::{RoomSpec, SceneInstance, STRUCTURE_ID};
use crate::seeding::{derive_seed, hash_words, rng_from_seed};

pub use bvh::{closest_point_on_triangle, intersect_triangle, Bvh, Hit, T_MIN};
pub use camera::{
    project, render_depth, render_depth_brute_force, unproject, CameraIntrinsics, CameraPose, DepthImage, RenderScene,
};

pub const VANTAGE_COUNT: usize = 5;
pub const YAW_STEPS: usize = 12;
pub const YAW_INCREMENT_DEG: f64 = 30.0;

/// Nearest-surface distances closer than this count as ties.
pub const LABEL_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid scanner setting: {0}")]
    InvalidConfig(String),
    #[error("no free cell to scan from; scene too cluttered")]
    NoFreeCells,
    #[error("only {found} free scan cells, {needed} vantage points needed")]
    TooFewFreeCells { found: usize, needed: usize },
    #[error("farthest point sampling needs at least one candidate")]
    EmptyCandidates,
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Keep the id recorded when the ray hit.
    #[default]
    HitId,
    /// Relabel each point by its globally nearest triangle.
    NearestSurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScannerConfig {
    pub intrinsics: CameraIntrinsics,
    /// Spacing of candidate scanner positions, meters.
    pub scan_cell: f64,
    pub max_range: f64,
    pub voxel_size: f64,
    pub label_mode: LabelMode,
}

impl Default for ScannerConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            scan_cell: 0.1,
            max_range: 20.0,
            voxel_size: 0.02,
            label_mode: LabelMode::HitId,
        }
    }
}

impl ScannerConfig {
    pub fn validate(&self) -> Result<(), ScanError> {
        self.intrinsics.validate()?;
        for (name, v) in [("scan_cell", self.scan_cell), ("max_range", self.max_range), ("voxel_size", self.voxel_size)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScanError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Points with parallel per-point instance ids and optional colors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledPointCloud {
    pub points: Vec<[f64; 3]>,
    pub instance_ids: Vec<u32>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec3 {
        let p = self.points[i];
        Vec3::new(p[0], p[1], p[2])
    }

    /// True when the parallel arrays agree in length.
    pub fn is_consistent(&self) -> bool {
        self.instance_ids.len() == self.points.len()
            && self.colors.as_ref().is_none_or(|c| c.len() == self.points.len())
    }

    /// Keeps the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledPointCloud {
        LabeledPointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            instance_ids: indices.iter().map(|&i| self.instance_ids[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Rounds coordinates to the nearest f32, the precision stored on disk.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.points {
            for c in p.iter_mut() {
                *c = *c as f32 as f64;
            }
        }
    }

    /// Point indices per instance id, structure excluded.
    pub fn instance_masks(&self) -> std::collections::BTreeMap<u32, Vec<usize>> {
        let mut masks = std::collections::BTreeMap::<u32, Vec<usize>>::new();
        for (i, &id) in self.instance_ids.iter().enumerate() {
            if id != STRUCTURE_ID {
                masks.entry(id).or_default().push(i);
            }
        }
        masks
    }
}

/// Centers of mid-height cells not covered by any instance footprint.
pub fn candidate_scan_cells(instances: &[SceneInstance], room: &RoomSpec, cell: f64) -> Result<Vec<Vec3>, ScanError> {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(ScanError::InvalidConfig(format!("scan cell must be > 0, got {cell}")));
    }
    let nx = (room.width / cell + 1e-9).floor() as usize;
    let ny = (room.depth / cell + 1e-9).floor() as usize;
    let z = room.height / 2.0;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let cell_box = Aabb3 {
                min: [i as f64 * cell, j as f64 * cell, 0.0],
                max: [(i + 1) as f64 * cell, (j + 1) as f64 * cell, 0.0],
            };
            if !instances.iter().any(|inst| inst.world_aabb.intersects_xy(&cell_box)) {
                out.push(Vec3::new((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell, z));
            }
        }
    }
    if out.is_empty() {
        return Err(ScanError::NoFreeCells);
    }
    Ok(out)
}

/// Greedy farthest point sampling from a given first index. Each step takes
/// the candidate whose distance to the chosen set is largest, lowest index
/// on ties.
pub fn farthest_point_sampling_from(candidates: &[Vec3], k: usize, first: usize) -> Vec<usize> {
    if candidates.len() <= k {
        return (0..candidates.len()).collect();
    }
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return chosen;
    }
    chosen.push(first);
    let mut min_d: Vec<f64> = candidates.iter().map(|c| (c - candidates[first]).norm_squared()).collect();
    while chosen.len() < k {
        let mut best = 0;
        for i in 1..candidates.len() {
            if min_d[i] > min_d[best] {
                best = i;
            }
        }
        chosen.push(best);
        let b = candidates[best];
        for (d, c) in min_d.iter_mut().zip(candidates) {
            *d = d.min((c - b).norm_squared());
        }
    }
    chosen
}

/// Farthest point sampling with a seeded uniform first pick. Returns
/// indices into `candidates`; all of them when fewer than `k`.
pub fn farthest_point_sampling(candidates: &[Vec3], k: usize, seed: u64) -> Result<Vec<usize>, ScanError> {
    if candidates.is_empty() {
        return Err(ScanError::EmptyCandidates);
    }
    let first = rng_from_seed(seed).gen_range(0..candidates.len());
    Ok(farthest_point_sampling_from(candidates, k, first))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanView {
    pub vantage: usize,
    pub pose: CameraPose,
    pub image: DepthImage,
}

/// Scanner poses: FPS vantage points times the twelve yaws, pitch 0.
pub fn scan_poses(instances: &[SceneInstance], room: &RoomSpec, config: &ScannerConfig, seed: u64) -> Result<Vec<CameraPose>, ScanError> {
    let candidates = candidate_scan_cells(instances, room, config.scan_cell)?;
    if candidates.len() < VANTAGE_COUNT {
        return Err(ScanError::TooFewFreeCells { found: candidates.len(), needed: VANTAGE_COUNT });
    }
    let vantages = farthest_point_sampling(&candidates, VANTAGE_COUNT, seed)?;
    Ok(vantages
        .iter()
        .flat_map(|&v| {
            let position = candidates[v];
            (0..YAW_STEPS).map(move |y| CameraPose::new(position, y as f64 * YAW_INCREMENT_DEG, 0.0))
        })
        .collect())
}

/// Renders all 60 views. Views render in parallel; output order is
/// (vantage, yaw).
pub fn scan_scene(
    scene: &RenderScene,
    instances: &[SceneInstance],
    room: &RoomSpec,
    config: &ScannerConfig,
    seed: u64,
) -> Result<Vec<ScanView>, ScanError> {
    config.validate()?;
    let poses = scan_poses(instances, room, config, seed)?;
    Ok(poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| ScanView {
            vantage: k / YAW_STEPS,
            pose: *pose,
            image: render_depth(scene, pose, &config.intrinsics, config.max_range),
        })
        .collect())
}

/// Back-projects every valid pixel, in (view, row, column) order.
pub fn backproject_and_fuse(views: &[ScanView], k: &CameraIntrinsics) -> LabeledPointCloud {
    let with_color = !views.is_empty() && views.iter().all(|v| v.image.color.is_some());
    let mut cloud = LabeledPointCloud { colors: with_color.then(Vec::new), ..Default::default() };
    for view in views {
        let img = &view.image;
        for v in 0..img.height {
            for u in 0..img.width {
                let idx = v * img.width + u;
                let d = img.depth[idx];
                if d <= 0.0 {
                    continue;
                }
                let w = view.pose.camera_to_world(&unproject(k, u as f64, v as f64, d));
                cloud.points.push([w.x, w.y, w.z]);
                cloud.instance_ids.push(img.instance[idx]);
                if let Some(colors) = cloud.colors.as_mut() {
                    colors.push(img.color.as_ref().unwrap()[idx]);
                }
            }
        }
    }
    cloud
}

/// Integer voxel coordinates of `p`.
pub fn voxel_key(p: &[f64; 3], voxel: f64) -> [i64; 3] {
    [(p[0] / voxel).floor() as i64, (p[1] / voxel).floor() as i64, (p[2] / voxel).floor() as i64]
}

fn voxel_score(seed: u64, key: &[i64; 3], index: usize) -> (u64, usize) {
    (hash_words(&[seed, key[0] as u64, key[1] as u64, key[2] as u64, index as u64]), index)
}

/// Keeps one seeded-random point per occupied voxel. The survivor of a voxel
/// minimizes `hash(seed, voxel, index)`, so the choice does not depend on
/// traversal order or thread count. Survivors keep their original order.
pub fn voxel_downsample(cloud: &LabeledPointCloud, voxel: f64, seed: u64) -> Result<LabeledPointCloud, ScanError> {
    if !(voxel.is_finite() && voxel > 0.0) {
        return Err(ScanError::InvalidConfig(format!("voxel size must be > 0, got {voxel}")));
    }
    let best = cloud
        .points
        .par_iter()
        .enumerate()
        .fold(HashMap::<[i64; 3], (u64, usize)>::new, |mut acc, (i, p)| {
            let key = voxel_key(p, voxel);
            let score = voxel_score(seed, &key, i);
            acc.entry(key).and_modify(|s| *s = (*s).min(score)).or_insert(score);
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (key, score) in b {
                a.entry(key).and_modify(|s| *s = (*s).min(score)).or_insert(score);
            }
            a
        });
    let mut keep: Vec<usize> = best.into_values().map(|(_, i)| i).collect();
    keep.sort_unstable();
    Ok(cloud.select(&keep))
}

/// Instance owning the nearest triangle, lowest id on ties.
pub fn nearest_instance(scene: &RenderScene, p: &Vec3) -> Option<u32> {
    let mut best_d = f64::INFINITY;
    let mut best_id: Option<u32> = None;
    scene.bvh.nearest_visit(p, f64::INFINITY, |t, d2| {
        let d = d2.sqrt();
        let id = scene.triangle_instance[t];
        if d < best_d - LABEL_TIE_TOLERANCE {
            best_d = d;
            best_id = Some(id);
        } else if d <= best_d + LABEL_TIE_TOLERANCE {
            best_d = best_d.min(d);
            best_id = Some(best_id.map_or(id, |b| b.min(id)));
        }
        let r = best_d + LABEL_TIE_TOLERANCE;
        r * r
    });
    best_id
}

pub fn assign_labels(cloud: &LabeledPointCloud, scene: &RenderScene, mode: LabelMode) -> LabeledPointCloud {
    match mode {
        LabelMode::HitId => cloud.clone(),
        LabelMode::NearestSurface => {
            let ids = cloud
                .points
                .par_iter()
                .map(|p| nearest_instance(scene, &Vec3::new(p[0], p[1], p[2])).unwrap_or(STRUCTURE_ID))
                .collect();
            LabeledPointCloud { instance_ids: ids, ..cloud.clone() }
        }
    }
}

/// Full capture: scan, fuse, downsample, label.
pub fn capture_point_cloud(
    scene: &RenderScene,
    instances: &[SceneInstance],
    room: &RoomSpec,
    config: &ScannerConfig,
    seed: u64,
) -> Result<(LabeledPointCloud, Vec<ScanView>), ScanError> {
    let views = scan_scene(scene, instances, room, config, derive_seed(seed, &[0]))?;
    let fused = backproject_and_fuse(&views, &config.intrinsics);
    let thinned = voxel_downsample(&fused, config.voxel_size, derive_seed(seed, &[1]))?;
    Ok((assign_labels(&thinned, scene, config.label_mode), views))
}

fn write_png16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<(), ScanError> {
    let io = |e: &dyn std::fmt::Display| ScanError::Io { path: path.display().to_string(), message: e.to_string() };
    let file = std::fs::File::create(path).map_err(|e| io(&e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header().map_err(|e| io(&e))?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| io(&e))?;
    writer.finish().map_err(|e| io(&e))
}

/// Per-view debug dump: `view_NN_depth.png` (16-bit millimeters),
/// `view_NN_instance.png` (16-bit ids) and `view_NN_pose.json`.
pub fn dump_views(dir: &Path, views: &[ScanView]) -> Result<(), ScanError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| ScanError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    for (k, view) in views.iter().enumerate() {
        let img = &view.image;
        let mm: Vec<u16> = img.depth.iter().map(|d| (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16).collect();
        let ids: Vec<u16> = img.instance.iter().map(|&i| i.min(u16::MAX as u32) as u16).collect();
        write_png16(&dir.join(format!("view_{k:02}_depth.png")), img.width, img.height, &mm)?;
        write_png16(&dir.join(format!("view_{k:02}_instance.png")), img.width, img.height, &ids)?;
        let pose_path = dir.join(format!("view_{k:02}_pose.json"));
        std::fs::write(&pose_path, serde_json::to_string_pretty(&view.pose).unwrap())
            .map_err(|e| ScanError::Io { path: pose_path.display().to_string(), message: e.to_string() })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
