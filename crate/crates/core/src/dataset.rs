//! On-disk dataset layout.
//!
//! ```text
//! root/manifest.json
//! root/scenes/<scene_id>/points.ply       binary little-endian PLY
//! root/scenes/<scene_id>/instances.json   instance index
//! root/scenes/<scene_id>/meta.json        per-scene provenance
//! ```
//!
//! Nothing written here depends on wall-clock time or thread scheduling, so
//! identical inputs give byte-identical trees.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::json_byte_offset;
use crate::geometry::{Aabb3, RigidTransform};
use crate::scanner::LabeledPointCloud;
use crate::selection::SelectionMode;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const POINTS_FILE: &str = "points.ply";
pub const INSTANCES_FILE: &str = "instances.json";
pub const META_FILE: &str = "meta.json";
pub const SCENES_DIR: &str = "scenes";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}: malformed PLY at byte {offset}: {message}")]
    Ply { file: String, offset: usize, message: String },
    #[error("{file}: malformed JSON at byte {offset}: {message}")]
    Json { file: String, offset: usize, message: String },
    #[error("{file}: format_version {found} is not supported (expected {expected})")]
    Version { file: String, found: u32, expected: u32 },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------- PLY

fn ply_header(count: usize, colors: bool) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h += &format!("element vertex {count}\n");
    h += "property float x\nproperty float y\nproperty float z\n";
    if colors {
        h += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    h += "property uint instance_id\nend_header\n";
    h
}

/// Encodes a cloud as binary PLY. Coordinates are stored as f32.
pub fn encode_ply(cloud: &LabeledPointCloud) -> Vec<u8> {
    let colors = cloud.colors.as_ref();
    let stride = 12 + if colors.is_some() { 3 } else { 0 } + 4;
    let mut out = ply_header(cloud.len(), colors.is_some()).into_bytes();
    out.reserve(stride * cloud.len());
    for i in 0..cloud.len() {
        for c in cloud.points[i] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        if let Some(c) = colors {
            out.extend_from_slice(&c[i]);
        }
        out.extend_from_slice(&cloud.instance_ids[i].to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Decodes a binary little-endian PLY with a single `vertex` element that
/// has `x`, `y`, `z` and `instance_id`, plus optional `red`/`green`/`blue`.
pub fn decode_ply(bytes: &[u8], file: &str) -> Result<LabeledPointCloud, DatasetError> {
    let err = |offset: usize, message: String| DatasetError::Ply { file: file.to_string(), offset, message };
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<(usize, String), DatasetError> {
        let start = *pos;
        let rel = bytes[start..].iter().position(|&b| b == b'\n').ok_or_else(|| err(start, "unterminated header".into()))?;
        *pos = start + rel + 1;
        let line = std::str::from_utf8(&bytes[start..start + rel]).map_err(|_| err(start, "header is not UTF-8".into()))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };
    let (off, magic) = next_line(&mut pos)?;
    if magic != "ply" {
        return Err(err(off, "missing 'ply' magic".into()));
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut format_seen = false;
    loop {
        let (off, line) = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(err(off, format!("unsupported format {fmt}")));
                }
                format_seen = true;
            }
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(err(off, "duplicate vertex element".into()));
                }
                count = Some(n.parse().map_err(|_| err(off, format!("bad vertex count {n:?}")))?);
            }
            ["element", name, _] => return Err(err(off, format!("unsupported element {name:?}"))),
            ["property", "list", ..] => return Err(err(off, "list properties are not supported".into())),
            ["property", ty, name] => {
                if count.is_none() {
                    return Err(err(off, "property before element".into()));
                }
                let scalar = Scalar::parse(ty).ok_or_else(|| err(off, format!("unknown property type {ty:?}")))?;
                if props.iter().any(|(n, _)| n == name) {
                    return Err(err(off, format!("duplicate property {name:?}")));
                }
                props.push((name.to_string(), scalar));
            }
            _ => return Err(err(off, format!("unexpected header line {line:?}"))),
        }
    }
    if !format_seen {
        return Err(err(pos, "missing format line".into()));
    }
    let count = count.ok_or_else(|| err(pos, "missing vertex element".into()))?;
    let find = |name: &str| props.iter().position(|(n, _)| n == name);
    let required = ["x", "y", "z", "instance_id"];
    let mut idx = [0usize; 4];
    for (k, name) in required.iter().enumerate() {
        idx[k] = find(name).ok_or_else(|| err(pos, format!("missing property {name:?}")))?;
    }
    let color_idx: Vec<Option<usize>> = ["red", "green", "blue"].iter().map(|n| find(n)).collect();
    let has_colors = match color_idx.iter().filter(|c| c.is_some()).count() {
        0 => false,
        3 => true,
        _ => return Err(err(pos, "partial color properties".into())),
    };
    if props[idx[3]].1 != Scalar::U32 {
        return Err(err(pos, "instance_id must be uint".into()));
    }
    if has_colors && color_idx.iter().any(|c| props[c.unwrap()].1 != Scalar::U8) {
        return Err(err(pos, "colors must be uchar".into()));
    }
    let mut offsets = Vec::with_capacity(props.len());
    let mut stride = 0;
    for (_, s) in &props {
        offsets.push(stride);
        stride += s.size();
    }
    let body = pos;
    let expected = count.checked_mul(stride).ok_or_else(|| err(body, "vertex count overflows".into()))?;
    let available = bytes.len() - body;
    if available < expected {
        return Err(err(bytes.len(), format!("truncated body: {expected} bytes expected, {available} present")));
    }
    if available > expected {
        return Err(err(body + expected, format!("{} trailing bytes", available - expected)));
    }
    let mut cloud = LabeledPointCloud {
        points: Vec::with_capacity(count),
        instance_ids: Vec::with_capacity(count),
        colors: has_colors.then(|| Vec::with_capacity(count)),
    };
    for v in 0..count {
        let rec = &bytes[body + v * stride..body + (v + 1) * stride];
        let field = |k: usize| props[k].1.read(&rec[offsets[k]..]);
        let p = [field(idx[0]), field(idx[1]), field(idx[2])];
        if p.iter().any(|c| !c.is_finite()) {
            return Err(err(body + v * stride, format!("vertex {v} is not finite")));
        }
        cloud.points.push(p);
        cloud.instance_ids.push(u32::from_le_bytes(rec[offsets[idx[3]]..offsets[idx[3]] + 4].try_into().unwrap()));
        if let Some(colors) = cloud.colors.as_mut() {
            colors.push([0, 1, 2].map(|c| rec[offsets[color_idx[c].unwrap()]]));
        }
    }
    Ok(cloud)
}

// ---------------------------------------------------------------- JSON

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn parse_json<T: DeserializeOwned>(bytes: &[u8], file: &str) -> Result<T, DatasetError> {
    let json_err = |e: serde_json::Error| DatasetError::Json {
        file: file.to_string(),
        offset: json_byte_offset(bytes, &e),
        message: e.to_string(),
    };
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(json_err)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(DatasetError::Version { file: file.to_string(), found: probe.format_version, expected: FORMAT_VERSION });
    }
    serde_json::from_slice(bytes).map_err(json_err)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("dataset types serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub instance_id: u32,
    pub object_id: String,
    pub asset_id: String,
    pub class_name: String,
    /// `floor`, `wall`, or the object id of the supporter.
    pub surface: String,
    pub transform: RigidTransform,
    pub aabb: Aabb3,
    pub point_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceIndex {
    pub format_version: u32,
    pub scene_id: String,
    pub instances: Vec<InstanceRecord>,
}

impl InstanceIndex {
    pub fn parse(bytes: &[u8]) -> Result<Self, DatasetError> {
        parse_json(bytes, INSTANCES_FILE)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupStats {
    pub candidates: usize,
    pub placed: usize,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMeta {
    pub format_version: u32,
    pub scene_id: String,
    pub scene_index: u64,
    pub scene_seed: u64,
    pub selection_mode: SelectionMode,
    pub floor: GroupStats,
    pub wall: GroupStats,
    pub supported: GroupStats,
    pub point_count: usize,
    pub structure_point_count: usize,
    pub view_count: usize,
}

impl SceneMeta {
    pub fn parse(bytes: &[u8]) -> Result<Self, DatasetError> {
        parse_json(bytes, META_FILE)
    }
}

/// One scene as stored on disk, minus the points.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub scene_id: String,
    pub instances: Vec<InstanceRecord>,
    pub meta: SceneMeta,
}

impl SceneSample {
    pub fn seed(&self) -> u64 {
        self.meta.scene_seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestScene {
    pub scene_id: String,
    /// Relative to the dataset root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedScene {
    pub scene_index: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub master_seed: u64,
    /// Weight of the synthetic loss when mixing with real data downstream.
    pub training_balance_alpha: f64,
    /// Every pipeline setting, defaults included.
    pub config: serde_json::Value,
    pub scenes: Vec<ManifestScene>,
    #[serde(default)]
    pub failed_scenes: Vec<FailedScene>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..=1.0).contains(&self.training_balance_alpha) {
            return Err(DatasetError::InvalidManifest(format!(
                "training_balance_alpha must be in [0, 1], got {}",
                self.training_balance_alpha
            )));
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.scenes {
            if !ids.insert(&s.scene_id) {
                return Err(DatasetError::InvalidManifest(format!("duplicate scene {:?}", s.scene_id)));
            }
            let p = Path::new(&s.path);
            if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return Err(DatasetError::InvalidManifest(format!("scene path {:?} escapes the dataset", s.path)));
            }
        }
        Ok(())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, DatasetError> {
        let manifest: Self = parse_json(bytes, MANIFEST_FILE)?;
        manifest.validate()?;
        Ok(manifest)
    }
}

pub fn scene_dir(root: &Path, scene_id: &str) -> PathBuf {
    root.join(SCENES_DIR).join(scene_id)
}

pub fn scene_relative_path(scene_id: &str) -> String {
    format!("{SCENES_DIR}/{scene_id}")
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(io_err(path))
}

/// Writes `points.ply`, `instances.json` and `meta.json` under
/// `root/scenes/<scene_id>/`.
pub fn export_scene(root: &Path, sample: &SceneSample, cloud: &LabeledPointCloud) -> Result<PathBuf, DatasetError> {
    let dir = scene_dir(root, &sample.scene_id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join(POINTS_FILE), &encode_ply(cloud))?;
    let index = InstanceIndex {
        format_version: FORMAT_VERSION,
        scene_id: sample.scene_id.clone(),
        instances: sample.instances.clone(),
    };
    write(&dir.join(INSTANCES_FILE), &to_json(&index))?;
    write(&dir.join(META_FILE), &to_json(&sample.meta))?;
    Ok(dir)
}

pub fn load_scene(dir: &Path) -> Result<(SceneSample, LabeledPointCloud), DatasetError> {
    let ply_path = dir.join(POINTS_FILE);
    let cloud = decode_ply(&read(&ply_path)?, &ply_path.display().to_string())?;
    let inst_path = dir.join(INSTANCES_FILE);
    let index: InstanceIndex = parse_json(&read(&inst_path)?, &inst_path.display().to_string())?;
    let meta_path = dir.join(META_FILE);
    let meta: SceneMeta = parse_json(&read(&meta_path)?, &meta_path.display().to_string())?;
    Ok((SceneSample { scene_id: index.scene_id, instances: index.instances, meta }, cloud))
}

pub fn export_manifest(root: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    manifest.validate()?;
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    write(&root.join(MANIFEST_FILE), &to_json(manifest))
}

/// Loads and validates `root/manifest.json`, checking every scene directory
/// exists.
pub fn load_manifest(root: &Path) -> Result<DatasetManifest, DatasetError> {
    let manifest = DatasetManifest::parse(&read(&root.join(MANIFEST_FILE))?)?;
    for s in &manifest.scenes {
        let dir = root.join(&s.path);
        for f in [POINTS_FILE, INSTANCES_FILE, META_FILE] {
            if !dir.join(f).is_file() {
                return Err(DatasetError::InvalidManifest(format!("scene {:?} is missing {f}", s.scene_id)));
            }
        }
    }
    Ok(manifest)
}
