//! The asset base: a JSON manifest of CAD assets grouped into floor-standing,
//! wall-mounted and surface-placeable objects.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Orientation, Vec3};
use crate::mesh::{parse_obj, MeshError, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Floor,
    Wall,
    Obj,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Floor, Group::Wall, Group::Obj];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Floor => "floor",
            Group::Wall => "wall",
            Group::Obj => "obj",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Horizontal axis an asset's front faces in its source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrontAxis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
}

impl FrontAxis {
    /// Rotation about z taking this axis onto canonical +y.
    pub fn to_canonical(self) -> Orientation {
        match self {
            FrontAxis::PosY => Orientation::Deg0,
            FrontAxis::PosX => Orientation::Deg90,
            FrontAxis::NegY => Orientation::Deg180,
            FrontAxis::NegX => Orientation::Deg270,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetRecord {
    pub asset_id: String,
    pub class_name: String,
    pub group: Group,
    pub mesh_path: PathBuf,
    /// Width (x), depth (y), height (z) in meters after canonicalization.
    pub target_dims: [f64; 3],
    pub front_axis: FrontAxis,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest is not valid JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("duplicate asset_id {0:?}")]
    DuplicateId(String),
    #[error("asset {asset_id:?}: target_dims must be finite and > 0, got {dims:?}")]
    BadDims { asset_id: String, dims: [f64; 3] },
    #[error("asset {0:?}: empty asset_id or class_name")]
    EmptyField(String),
    #[error("missing mesh files for assets: {}", .0.join(", "))]
    MissingMeshes(Vec<String>),
    #[error("asset {asset_id:?}: {source}")]
    Mesh { asset_id: String, source: MeshError },
    #[error("unknown asset id {0:?}")]
    UnknownAsset(String),
}

/// Converts a serde_json error position into a byte offset within `text`.
pub(crate) fn json_byte_offset(text: &[u8], err: &serde_json::Error) -> usize {
    let (line, column) = (err.line(), err.column());
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut line_start = 0;
    for (i, &b) in text.iter().enumerate() {
        if current == line {
            break;
        }
        if b == b'\n' {
            current += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// An immutable, validated asset base.
#[derive(Debug, Clone)]
pub struct AssetCatalog {
    records: Vec<AssetRecord>,
    root: PathBuf,
    by_id: HashMap<String, usize>,
    by_group: BTreeMap<Group, Vec<usize>>,
    by_class: BTreeMap<String, Vec<usize>>,
}

impl AssetCatalog {
    /// Validates records and builds the indices. Mesh files are not touched.
    pub fn from_records(records: Vec<AssetRecord>, root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let mut by_id = HashMap::new();
        let mut by_group: BTreeMap<Group, Vec<usize>> = Group::ALL.iter().map(|g| (*g, Vec::new())).collect();
        let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.asset_id.is_empty() || r.class_name.is_empty() {
                return Err(CatalogError::EmptyField(r.asset_id.clone()));
            }
            if !r.target_dims.iter().all(|d| d.is_finite() && *d > 0.0) {
                return Err(CatalogError::BadDims { asset_id: r.asset_id.clone(), dims: r.target_dims });
            }
            if by_id.insert(r.asset_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(r.asset_id.clone()));
            }
            by_group.get_mut(&r.group).unwrap().push(i);
            by_class.entry(r.class_name.clone()).or_default().push(i);
        }
        Ok(Self { records, root: root.into(), by_id, by_group, by_class })
    }

    /// Parses manifest bytes. `root` is the directory mesh paths are relative to.
    pub fn parse_manifest(bytes: &[u8], root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let records: Vec<AssetRecord> = serde_json::from_slice(bytes).map_err(|e| CatalogError::Json {
            offset: json_byte_offset(bytes, &e),
            message: e.to_string(),
        })?;
        Self::from_records(records, root)
    }

    pub fn records(&self) -> &[AssetRecord] {
        &self.records
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.by_id.get(asset_id).map(|&i| &self.records[i])
    }

    pub fn record(&self, index: usize) -> &AssetRecord {
        &self.records[index]
    }

    pub fn group_indices(&self, group: Group) -> &[usize] {
        &self.by_group[&group]
    }

    pub fn class_indices(&self, class_name: &str) -> &[usize] {
        self.by_class.get(class_name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.by_class.keys().map(String::as_str)
    }

    /// Classes with at least one asset in `group`, sorted.
    pub fn classes_in_group(&self, group: Group) -> BTreeSet<&str> {
        self.group_indices(group).iter().map(|&i| self.records[i].class_name.as_str()).collect()
    }

    pub fn mesh_path(&self, record: &AssetRecord) -> PathBuf {
        self.root.join(&record.mesh_path)
    }

    /// Manifest JSON equivalent to what was loaded.
    pub fn to_manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize")
    }
}

/// Loads a manifest and checks that every referenced mesh file exists.
pub fn load_catalog(manifest_path: impl AsRef<Path>) -> Result<AssetCatalog, CatalogError> {
    let path = manifest_path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CatalogError::Io { path: path.to_path_buf(), source })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let catalog = AssetCatalog::parse_manifest(&bytes, root)?;
    let missing: Vec<String> = catalog
        .records
        .iter()
        .filter(|r| !catalog.mesh_path(r).is_file())
        .map(|r| r.asset_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CatalogError::MissingMeshes(missing));
    }
    Ok(catalog)
}

/// Brings raw geometry into the canonical frame: front rotated onto +y,
/// AABB rescaled to `target_dims`, xy-centered at the origin with its base at
/// z = 0.
pub fn canonicalize_mesh(mut mesh: TriangleMesh, record: &AssetRecord) -> Result<TriangleMesh, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    let rot = record.front_axis.to_canonical();
    mesh.map_vertices(|v| {
        let (x, y) = rot.rotate2(v.x, v.y);
        Vec3::new(x, y, v.z)
    });
    let bb = mesh.aabb();
    let size = bb.size();
    let mut scale = [0.0; 3];
    for axis in 0..3 {
        if size[axis] <= 1e-12 * bb.diagonal().max(f64::MIN_POSITIVE) {
            return Err(MeshError::DegenerateExtent { axis });
        }
        scale[axis] = record.target_dims[axis] / size[axis];
    }
    let min = bb.min_v();
    let dims = record.target_dims;
    mesh.map_vertices(|v| {
        Vec3::new(
            (v.x - min.x) * scale[0] - 0.5 * dims[0],
            (v.y - min.y) * scale[1] - 0.5 * dims[1],
            (v.z - min.z) * scale[2],
        )
    });
    mesh.drop_degenerate();
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    Ok(mesh)
}

/// Reads and canonicalizes one asset mesh.
pub fn load_mesh(catalog: &AssetCatalog, record: &AssetRecord) -> Result<TriangleMesh, CatalogError> {
    let path = catalog.mesh_path(record);
    let text = std::fs::read_to_string(&path).map_err(|source| CatalogError::Io { path: path.clone(), source })?;
    let mesh = parse_obj(&text).map_err(|source| CatalogError::Mesh { asset_id: record.asset_id.clone(), source })?;
    canonicalize_mesh(mesh, record).map_err(|source| CatalogError::Mesh { asset_id: record.asset_id.clone(), source })
}

/// Canonical meshes for every asset, loaded in parallel and shared.
#[derive(Debug, Clone, Default)]
pub struct MeshLibrary {
    meshes: HashMap<String, Arc<TriangleMesh>>,
}

impl MeshLibrary {
    pub fn load(catalog: &AssetCatalog) -> Result<Self, CatalogError> {
        let loaded: Vec<(String, Arc<TriangleMesh>)> = catalog
            .records()
            .par_iter()
            .map(|r| load_mesh(catalog, r).map(|m| (r.asset_id.clone(), Arc::new(m))))
            .collect::<Result<_, _>>()?;
        Ok(Self { meshes: loaded.into_iter().collect() })
    }

    pub fn insert(&mut self, asset_id: impl Into<String>, mesh: TriangleMesh) {
        self.meshes.insert(asset_id.into(), Arc::new(mesh));
    }

    pub fn get(&self, asset_id: &str) -> Option<&Arc<TriangleMesh>> {
        self.meshes.get(asset_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, group: Group) -> AssetRecord {
        AssetRecord {
            asset_id: id.into(),
            class_name: format!("{id}_class"),
            group,
            mesh_path: format!("{id}.obj").into(),
            target_dims: [1.0, 1.0, 1.0],
            front_axis: FrontAxis::PosY,
        }
    }

    #[test]
    fn one_record_per_group() {
        let recs = vec![record("a", Group::Floor), record("b", Group::Wall), record("c", Group::Obj)];
        let cat = AssetCatalog::from_records(recs, ".").unwrap();
        for g in Group::ALL {
            assert_eq!(cat.group_indices(g).len(), 1);
        }
        assert_eq!(cat.class_indices("b_class"), &[1]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let recs = vec![record("chair_01", Group::Floor), record("chair_01", Group::Floor)];
        assert!(matches!(AssetCatalog::from_records(recs, "."), Err(CatalogError::DuplicateId(id)) if id == "chair_01"));
    }

    #[test]
    fn unknown_group_rejected_with_offset() {
        let text = br#"[{"asset_id":"a","class_name":"x","group":"ceiling","mesh_path":"a.obj","target_dims":[1,1,1],"front_axis":"+y"}]"#;
        match AssetCatalog::parse_manifest(text, ".") {
            Err(CatalogError::Json { offset, message }) => {
                assert!(message.contains("ceiling"), "{message}");
                assert!(offset > 0 && offset <= text.len());
            }
            other => panic!("expected JSON error, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_dims_rejected() {
        let mut r = record("a", Group::Obj);
        r.target_dims = [1.0, 0.0, 1.0];
        assert!(matches!(AssetCatalog::from_records(vec![r], "."), Err(CatalogError::BadDims { .. })));
    }

    #[test]
    fn unit_cube_rescales_to_target() {
        let cube = TriangleMesh::cuboid(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5));
        let mut r = record("cube", Group::Floor);
        r.target_dims = [2.0, 2.0, 2.0];
        let m = canonicalize_mesh(cube, &r).unwrap();
        let bb = m.aabb();
        assert_eq!(bb.size(), Vec3::new(2.0, 2.0, 2.0));
        assert_eq!(bb.min[2], 0.0);
        assert_eq!(bb.center().x, 0.0);
        assert_eq!(bb.center().y, 0.0);
    }

    #[test]
    fn flat_mesh_cannot_be_rescaled() {
        let flat = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(
            canonicalize_mesh(flat, &record("f", Group::Wall)),
            Err(MeshError::DegenerateExtent { axis: 2 })
        );
    }
}
