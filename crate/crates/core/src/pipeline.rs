//! End-to-end generation, validation and metrics over a dataset directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{load_catalog, AssetCatalog, CatalogError, Group, MeshLibrary};
use crate::dataset::{
    encode_ply, export_manifest, export_scene, load_manifest, load_scene, scene_relative_path, DatasetError,
    DatasetManifest, FailedScene, GroupStats, InstanceRecord, ManifestScene, SceneMeta, SceneSample, FORMAT_VERSION,
    POINTS_FILE,
};
use crate::geometry::Aabb3;
use crate::http::HttpClient;
use crate::layout::{solve_scene, LayoutConfig, LayoutSolution, SceneLayout, SceneObjects, SceneRelations, SupportedGroup};
use crate::metrics::{descriptors_for, MetricsConfig, MetricsError, DESCRIPTOR_CACHE_FILE};
use crate::relations::{
    infer_relations, HttpRelationBackend, ObjectSpec, RelationBackend, RuleBasedBackend, DEFAULT_RELATION_TEMPLATE,
};
use crate::scanner::{capture_point_cloud, CameraPose, LabeledPointCloud, RenderScene, ScannerConfig};
use crate::scene::{build_scene, RoomSpec, SceneInstance, STRUCTURE_ID};
use crate::seeding::{derive_seed, scene_seed, stage};
use crate::selection::{
    alternate_strategy, cluster_assets_by_group, select_objects, ClusterRestriction, SelectionConfig, SelectionMode,
    SelectionResult, SupporterRef,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    ConfigParse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{failed} of {total} scenes failed; first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationBackendKind {
    #[default]
    Rules,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationSettings {
    pub backend: RelationBackendKind,
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub attempts: u32,
    /// Prompt template file; the bundled template when unset.
    pub template: Option<PathBuf>,
}

impl Default for RelationSettings {
    fn default() -> Self {
        Self { backend: RelationBackendKind::Rules, endpoint: None, timeout_secs: 60, attempts: 3, template: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeClusterSettings {
    /// Clusters per group.
    pub k: usize,
    /// Cluster indices assets may come from.
    pub allowed: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSettings {
    pub m1: usize,
    pub m2: usize,
    pub per_support_count: usize,
    pub mode: SelectionMode,
    /// Even scenes uniform, odd scenes complementary; overrides `mode`.
    pub alternate: bool,
    pub complementary_prob: f64,
    /// Classes annotated in the real dataset.
    pub real_classes: Vec<String>,
    pub pair_map: Option<BTreeMap<String, String>>,
    /// JSON object `{class: paired_class}`, read when `pair_map` is unset.
    pub pair_map_file: Option<PathBuf>,
    pub pair_prob: f64,
    pub shape_clusters: Option<ShapeClusterSettings>,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        let base = SelectionConfig::default();
        Self {
            m1: base.m1,
            m2: base.m2,
            per_support_count: base.per_support_count,
            mode: base.mode,
            alternate: base.alternate,
            complementary_prob: base.complementary_prob,
            real_classes: Vec::new(),
            pair_map: None,
            pair_map_file: None,
            pair_prob: base.pair_prob,
            shape_clusters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub asset_manifest: PathBuf,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub scene_count: usize,
    /// Worker threads for scene generation; 0 uses every core.
    pub parallelism: usize,
    pub training_balance_alpha: f64,
    /// Abort when more than this fraction of scenes fail.
    pub max_failure_rate: f64,
    pub selection: SelectionSettings,
    pub room: RoomSpec,
    pub layout: LayoutConfig,
    pub relations: RelationSettings,
    pub scanner: ScannerConfig,
    pub metrics: MetricsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            asset_manifest: PathBuf::new(),
            output_dir: PathBuf::from("dataset"),
            master_seed: 0,
            scene_count: 2000,
            parallelism: 0,
            training_balance_alpha: 0.5,
            max_failure_rate: 0.5,
            selection: SelectionSettings::default(),
            room: RoomSpec::default(),
            layout: LayoutConfig::default(),
            relations: RelationSettings::default(),
            scanner: ScannerConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML. Relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path, origin: &str) -> Result<Self, PipelineError> {
        let mut config: Self =
            toml::from_str(text).map_err(|e| PipelineError::ConfigParse { path: origin.to_string(), message: e.to_string() })?;
        config.resolve_paths(base_dir);
        if let (None, Some(path)) = (&config.selection.pair_map, &config.selection.pair_map_file) {
            let bytes =
                std::fs::read(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
            let map = serde_json::from_slice(&bytes)
                .map_err(|e| PipelineError::ConfigParse { path: path.display().to_string(), message: e.to_string() })?;
            config.selection.pair_map = Some(map);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, &path.display().to_string())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.asset_manifest);
        resolve(&mut self.output_dir);
        if let Some(t) = self.relations.template.as_mut() {
            resolve(t);
        }
        if let Some(t) = self.selection.pair_map_file.as_mut() {
            resolve(t);
        }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        let s = &self.selection;
        SelectionConfig {
            m1: s.m1,
            m2: s.m2,
            per_support_count: s.per_support_count,
            mode: s.mode,
            alternate: s.alternate,
            real_class_list: s.real_classes.iter().cloned().collect(),
            complementary_prob: s.complementary_prob,
            pair_map: s.pair_map.clone(),
            pair_prob: s.pair_prob,
            cluster_restriction: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.asset_manifest.as_os_str().is_empty() {
            return invalid("asset_manifest is required".into());
        }
        if self.scene_count == 0 {
            return invalid("scene_count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.training_balance_alpha) {
            return invalid(format!("training_balance_alpha {} is outside [0, 1]", self.training_balance_alpha));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return invalid(format!("max_failure_rate {} is outside [0, 1]", self.max_failure_rate));
        }
        if let Some(c) = &self.selection.shape_clusters {
            if c.k == 0 || c.allowed.is_empty() || c.allowed.iter().any(|&a| a >= c.k) {
                return invalid(format!("shape_clusters needs k >= 1 and allowed clusters below k, got {c:?}"));
            }
        }
        if self.relations.backend == RelationBackendKind::Http && self.relations.endpoint.is_none() {
            return invalid("relations.backend = \"http\" needs relations.endpoint".into());
        }
        self.selection_config().validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.room.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.layout.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.scanner.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Settings echoed into the manifest. The output location and thread
    /// count do not affect content and are left out.
    pub fn provenance(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("parallelism");
        }
        value
    }
}

/// Shared, read-only inputs of a run.
pub struct SynthContext {
    pub config: PipelineConfig,
    pub catalog: AssetCatalog,
    pub meshes: MeshLibrary,
    pub selection: SelectionConfig,
    template: String,
}

impl SynthContext {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let catalog = load_catalog(&config.asset_manifest)?;
        Self::with_catalog(config, catalog)
    }

    pub fn with_catalog(config: PipelineConfig, catalog: AssetCatalog) -> Result<Self, PipelineError> {
        config.validate()?;
        let meshes = MeshLibrary::load(&catalog)?;
        let mut selection = config.selection_config();
        if let Some(clusters) = &config.selection.shape_clusters {
            std::fs::create_dir_all(&config.output_dir)
                .map_err(|source| PipelineError::Io { path: config.output_dir.display().to_string(), source })?;
            let ids: BTreeSet<String> = catalog.records().iter().map(|r| r.asset_id.clone()).collect();
            let descriptors = descriptors_for(
                &ids,
                Some(&catalog),
                &config.output_dir.join(DESCRIPTOR_CACHE_FILE),
                config.metrics.descriptor_samples,
                config.metrics.descriptor_seed,
            )?;
            let asset_cluster = cluster_assets_by_group(&catalog, &descriptors, clusters.k, clusters.seed)
                .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
            selection.cluster_restriction =
                Some(ClusterRestriction { asset_cluster, allowed: clusters.allowed.iter().copied().collect() });
        }
        let template = match &config.relations.template {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?,
            None => DEFAULT_RELATION_TEMPLATE.to_string(),
        };
        Ok(Self { config, catalog, meshes, selection, template })
    }

    fn relation_backend(&self, seed: u64) -> Box<dyn RelationBackend> {
        let r = &self.config.relations;
        match (r.backend, &r.endpoint) {
            (RelationBackendKind::Http, Some(endpoint)) => Box::new(HttpRelationBackend::new(
                HttpClient::from_env(endpoint.clone(), Duration::from_secs(r.timeout_secs), r.attempts),
                self.template.clone(),
            )),
            _ => Box::new(RuleBasedBackend::new(seed)),
        }
    }
}

pub fn scene_id(index: u64) -> String {
    format!("scene_{index:05}")
}

/// Everything produced for one scene.
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub index: u64,
    pub seed: u64,
    pub selection: SelectionResult,
    pub objects: SceneObjects,
    pub layout: SceneLayout,
    pub instances: Vec<SceneInstance>,
    pub cloud: LabeledPointCloud,
    pub view_poses: Vec<(usize, CameraPose)>,
    pub sample: SceneSample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneReport {
    pub scene_id: String,
    pub floor: GroupStats,
    pub wall: GroupStats,
    pub supported: GroupStats,
    pub point_count: usize,
    pub duration: Duration,
}

fn object_specs(catalog: &AssetCatalog, selection: &SelectionResult) -> (SceneObjects, HashMap<String, String>) {
    let mut asset_of = HashMap::new();
    let mut spec = |id: String, asset: &str| {
        let record = catalog.get(asset).expect("selection only yields catalog assets");
        asset_of.insert(id.clone(), asset.to_string());
        ObjectSpec { id, class: record.class_name.clone(), dims: record.target_dims }
    };
    let floor = selection.o_floor.iter().enumerate().map(|(k, a)| spec(format!("floor_{k}"), a)).collect();
    let wall = selection.o_wall.iter().enumerate().map(|(k, a)| spec(format!("wall_{k}"), a)).collect();
    let supported = selection
        .o_obj
        .iter()
        .enumerate()
        .map(|(g, draw)| SupportedGroup {
            supporter: draw.supporter,
            objects: draw.assets.iter().enumerate().map(|(k, a)| spec(format!("obj_{g}_{k}"), a)).collect(),
        })
        .collect();
    (SceneObjects { floor, wall, supported }, asset_of)
}

fn group_stats(solutions: &[&LayoutSolution], candidates: usize) -> GroupStats {
    GroupStats {
        candidates,
        placed: solutions.iter().map(|s| s.placed_count).sum(),
        skipped: solutions.iter().flat_map(|s| s.skipped.iter().cloned()).collect(),
    }
}

fn supporter_id(objects: &SceneObjects, supporter: SupporterRef) -> String {
    match supporter {
        SupporterRef::Floor(k) => objects.floor[k].id.clone(),
        SupporterRef::Wall(k) => objects.wall[k].id.clone(),
    }
}

/// Runs select, relate, solve, build, scan and label for scene `index`.
/// Nothing is written to disk.
pub fn generate_scene(ctx: &SynthContext, index: u64) -> Result<GeneratedScene, String> {
    let cfg = &ctx.config;
    let seed = scene_seed(cfg.master_seed, index);
    let mode = alternate_strategy(index, &ctx.selection);
    let selection = select_objects(&ctx.catalog, &ctx.selection, mode, derive_seed(seed, &[stage::SELECTION]))
        .map_err(|e| format!("selection: {e}"))?;
    let (objects, asset_of) = object_specs(&ctx.catalog, &selection);

    let rel_seed = derive_seed(seed, &[stage::RELATIONS]);
    let infer = |objs: &[ObjectSpec], group: Group, path: u64| {
        let mut backend = ctx.relation_backend(derive_seed(rel_seed, &[path]));
        infer_relations(objs, group, backend.as_mut()).map_err(|e| format!("relations: {e}"))
    };
    let relations = SceneRelations {
        floor: infer(&objects.floor, Group::Floor, 0)?,
        wall: infer(&objects.wall, Group::Wall, 1)?,
        supported: objects
            .supported
            .iter()
            .enumerate()
            .map(|(g, group)| infer(&group.objects, Group::Obj, 2 + g as u64))
            .collect::<Result<_, _>>()?,
    };
    let layout = solve_scene(&objects, &relations, &cfg.room, &cfg.layout, derive_seed(seed, &[stage::LAYOUT]))
        .map_err(|e| format!("layout: {e}"))?;
    let (mesh, instances) =
        build_scene(&cfg.room, &layout, &asset_of, &ctx.catalog, &ctx.meshes).map_err(|e| format!("scene: {e}"))?;
    let render = RenderScene::new(&mesh);
    let (mut cloud, views) = capture_point_cloud(&render, &instances, &cfg.room, &cfg.scanner, derive_seed(seed, &[stage::SCAN]))
        .map_err(|e| format!("scan: {e}"))?;
    cloud.quantize_f32();
    let view_poses: Vec<_> = views.iter().map(|v| (v.vantage, v.pose)).collect();
    drop(views);

    let mut surface_of: HashMap<&str, String> = HashMap::new();
    for p in &layout.floor.placements {
        surface_of.insert(&p.object_id, "floor".into());
    }
    for p in &layout.wall.placements {
        surface_of.insert(&p.object_id, "wall".into());
    }
    for s in &layout.supported {
        for p in &s.solution.placements {
            surface_of.insert(&p.object_id, supporter_id(&objects, s.supporter));
        }
    }
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &id in &cloud.instance_ids {
        *counts.entry(id).or_default() += 1;
    }
    let records = instances
        .iter()
        .map(|inst| InstanceRecord {
            instance_id: inst.instance_id,
            object_id: inst.object_id.clone(),
            asset_id: inst.asset_id.clone(),
            class_name: inst.class_name.clone(),
            surface: surface_of[inst.object_id.as_str()].clone(),
            transform: inst.world_transform,
            aabb: inst.world_aabb,
            point_count: counts.get(&inst.instance_id).copied().unwrap_or(0),
        })
        .collect();
    let supported: Vec<&LayoutSolution> = layout.supported.iter().map(|s| &s.solution).collect();
    let id = scene_id(index);
    let meta = SceneMeta {
        format_version: FORMAT_VERSION,
        scene_id: id.clone(),
        scene_index: index,
        scene_seed: seed,
        selection_mode: mode,
        floor: group_stats(&[&layout.floor], objects.floor.len()),
        wall: group_stats(&[&layout.wall], objects.wall.len()),
        supported: group_stats(&supported, objects.supported.iter().map(|g| g.objects.len()).sum()),
        point_count: cloud.len(),
        structure_point_count: counts.get(&STRUCTURE_ID).copied().unwrap_or(0),
        view_count: view_poses.len(),
    };
    let sample = SceneSample { scene_id: id, instances: records, meta };
    Ok(GeneratedScene { index, seed, selection, objects, layout, instances, cloud, view_poses, sample })
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub manifest: DatasetManifest,
    pub reports: Vec<SceneReport>,
    pub failed: Vec<FailedScene>,
}

fn thread_pool(parallelism: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(parallelism).build().expect("thread pool")
}

/// Generates and exports `config.scene_count` scenes plus the manifest.
pub fn synth(ctx: &SynthContext) -> Result<SynthSummary, PipelineError> {
    let cfg = &ctx.config;
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root).map_err(|source| PipelineError::Io { path: root.display().to_string(), source })?;
    let outcomes: Vec<Result<SceneReport, FailedScene>> = thread_pool(cfg.parallelism).install(|| {
        (0..cfg.scene_count as u64)
            .into_par_iter()
            .map(|index| {
                let start = Instant::now();
                let generated = std::panic::catch_unwind(AssertUnwindSafe(|| generate_scene(ctx, index)))
                    .unwrap_or_else(|panic| {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_default();
                        Err::<GeneratedScene, String>(format!("panic: {msg}"))
                    });
                let fail = |reason: String| -> FailedScene {
                    log::warn!("scene {index} skipped: {reason}");
                    FailedScene { scene_index: index, reason }
                };
                let scene = generated.map_err(fail)?;
                export_scene(root, &scene.sample, &scene.cloud).map_err(|e| fail(format!("export: {e}")))?;
                let m = &scene.sample.meta;
                let report = SceneReport {
                    scene_id: scene.sample.scene_id.clone(),
                    floor: m.floor.clone(),
                    wall: m.wall.clone(),
                    supported: m.supported.clone(),
                    point_count: m.point_count,
                    duration: start.elapsed(),
                };
                log::info!(
                    "{}: placed {}/{} floor, {}/{} wall, {}/{} supported, {} points in {:.2?}",
                    report.scene_id,
                    m.floor.placed,
                    m.floor.candidates,
                    m.wall.placed,
                    m.wall.candidates,
                    m.supported.placed,
                    m.supported.candidates,
                    m.point_count,
                    report.duration
                );
                Ok(report)
            })
            .collect()
    });
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => reports.push(r),
            Err(f) => failed.push(f),
        }
    }
    if failed.len() as f64 > cfg.max_failure_rate * cfg.scene_count as f64 {
        return Err(PipelineError::TooManyFailures {
            failed: failed.len(),
            total: cfg.scene_count,
            first: failed.first().map(|f| format!("scene {}: {}", f.scene_index, f.reason)).unwrap_or_default(),
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        master_seed: cfg.master_seed,
        training_balance_alpha: cfg.training_balance_alpha,
        config: cfg.provenance(),
        scenes: reports
            .iter()
            .map(|r| ManifestScene { scene_id: r.scene_id.clone(), path: scene_relative_path(&r.scene_id) })
            .collect(),
        failed_scenes: failed.clone(),
    };
    export_manifest(root, &manifest)?;
    Ok(SynthSummary { manifest, reports, failed })
}

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub scene_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub scenes_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Distinct scene ids with at least one violation.
    pub fn failing_scenes(&self) -> BTreeSet<&str> {
        self.violations.iter().map(|v| v.scene_id.as_str()).collect()
    }
}

/// Problems found in one exported scene.
pub fn check_scene(sample: &SceneSample, cloud: &LabeledPointCloud, ply_bytes: Option<&[u8]>) -> Vec<String> {
    let mut out = Vec::new();
    let meta = &sample.meta;
    if meta.scene_id != sample.scene_id {
        out.push(format!("meta.json names scene {:?}", meta.scene_id));
    }
    if !cloud.is_consistent() {
        out.push("point cloud arrays differ in length".into());
    }
    if let Some(bytes) = ply_bytes {
        if encode_ply(cloud) != bytes {
            out.push("points.ply does not round-trip".into());
        }
    }
    if meta.point_count != cloud.len() {
        out.push(format!("meta point_count {} but cloud has {}", meta.point_count, cloud.len()));
    }
    let mut ids = BTreeSet::new();
    for inst in &sample.instances {
        if inst.instance_id == STRUCTURE_ID {
            out.push(format!("{} uses the structure id", inst.object_id));
        }
        if !ids.insert(inst.instance_id) {
            out.push(format!("instance id {} is listed twice", inst.instance_id));
        }
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &id in &cloud.instance_ids {
        *counts.entry(id).or_default() += 1;
    }
    for (&id, &n) in &counts {
        if id != STRUCTURE_ID && !ids.contains(&id) {
            out.push(format!("{n} points carry instance id {id}, which instances.json does not list"));
        }
    }
    for inst in &sample.instances {
        let n = counts.get(&inst.instance_id).copied().unwrap_or(0);
        if n != inst.point_count {
            out.push(format!("instance {} lists {} points, cloud has {n}", inst.instance_id, inst.point_count));
        }
    }
    if counts.get(&STRUCTURE_ID).copied().unwrap_or(0) != meta.structure_point_count {
        out.push("structure_point_count does not match the cloud".into());
    }
    for (name, g) in [("floor", &meta.floor), ("wall", &meta.wall), ("supported", &meta.supported)] {
        if g.placed + g.skipped.len() != g.candidates {
            out.push(format!("{name}: placed {} + skipped {} != candidates {}", g.placed, g.skipped.len(), g.candidates));
        }
    }
    let placed = meta.floor.placed + meta.wall.placed + meta.supported.placed;
    if placed != sample.instances.len() {
        out.push(format!("meta reports {placed} placed objects, instances.json lists {}", sample.instances.len()));
    }
    out.extend(layout_overlaps(&sample.instances));
    out
}

/// Same-surface footprint overlaps and wall/floor volume intersections.
pub fn layout_overlaps(instances: &[InstanceRecord]) -> Vec<String> {
    let mut out = Vec::new();
    for (a, ia) in instances.iter().enumerate() {
        for ib in &instances[a + 1..] {
            let (sa, sb) = (ia.surface.as_str(), ib.surface.as_str());
            let hit = |f: fn(&Aabb3, &Aabb3) -> bool| f(&ia.aabb, &ib.aabb);
            let clash = if sa == sb && sa != "wall" {
                hit(Aabb3::intersects_xy)
            } else if sa == "wall" || sb == "wall" {
                hit(Aabb3::intersects)
            } else {
                false
            };
            if clash {
                out.push(format!("{} ({sa}) overlaps {} ({sb})", ia.object_id, ib.object_id));
            }
        }
    }
    out
}

/// Re-checks every scene listed in the manifest under `root`.
pub fn validate_dataset(root: &Path) -> Result<ValidationReport, PipelineError> {
    let manifest = load_manifest(root)?;
    let mut report = ValidationReport::default();
    for entry in &manifest.scenes {
        report.scenes_checked += 1;
        let dir = root.join(&entry.path);
        let push = |report: &mut ValidationReport, message: String| {
            report.violations.push(Violation { scene_id: entry.scene_id.clone(), message })
        };
        match load_scene(&dir) {
            Ok((sample, cloud)) => {
                if sample.scene_id != entry.scene_id {
                    push(&mut report, format!("instances.json names scene {:?}", sample.scene_id));
                }
                let bytes = std::fs::read(dir.join(POINTS_FILE)).ok();
                for message in check_scene(&sample, &cloud, bytes.as_deref()) {
                    push(&mut report, message);
                }
            }
            Err(e) => push(&mut report, e.to_string()),
        }
    }
    Ok(report)
}

/// Catalog named in the manifest's config echo, if it still loads.
pub fn manifest_catalog(manifest: &DatasetManifest) -> Option<AssetCatalog> {
    let path = manifest.config.get("asset_manifest")?.as_str()?;
    match load_catalog(path) {
        Ok(c) => Some(c),
        Err(e) => {
            log::warn!("cannot load catalog {path}: {e}");
            None
        }
    }
}

/// Metrics config echoed in the manifest, or the defaults.
pub fn manifest_metrics_config(manifest: &DatasetManifest) -> MetricsConfig {
    manifest
        .config
        .get("metrics")
        .and_then(|m| serde_json::from_value(m.clone()).ok())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_paths() {
        let c = PipelineConfig::from_toml("asset_manifest = \"a/manifest.json\"\n", Path::new("/cfg"), "t").unwrap();
        assert_eq!(c.scene_count, 2000);
        assert_eq!((c.selection.m1, c.selection.m2, c.selection.per_support_count), (100, 50, 5));
        assert_eq!(c.selection.complementary_prob, 0.7);
        assert_eq!(c.asset_manifest, PathBuf::from("/cfg/a/manifest.json"));
        assert_eq!(c.output_dir, PathBuf::from("/cfg/dataset"));
        assert!(c.validate().is_ok());
        let echo = c.provenance();
        assert!(echo.get("output_dir").is_none() && echo.get("parallelism").is_none());
        assert_eq!(echo["selection"]["m1"], 100);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            PipelineConfig::from_toml("scene_cont = 3\n", Path::new("."), "t"),
            Err(PipelineError::ConfigParse { .. })
        ));
        let mut c = PipelineConfig { asset_manifest: "m.json".into(), ..Default::default() };
        c.scene_count = 0;
        assert!(matches!(c.validate(), Err(PipelineError::InvalidConfig(_))));
        c.scene_count = 1;
        c.training_balance_alpha = 1.5;
        assert!(c.validate().is_err());
        c.training_balance_alpha = 0.5;
        c.relations.backend = RelationBackendKind::Http;
        assert!(c.validate().is_err());
    }

    fn record(id: u32, surface: &str, min: [f64; 3], max: [f64; 3]) -> InstanceRecord {
        InstanceRecord {
            instance_id: id,
            object_id: format!("o{id}"),
            asset_id: "a".into(),
            class_name: "c".into(),
            surface: surface.into(),
            transform: crate::geometry::RigidTransform::identity(),
            aabb: Aabb3 { min, max },
            point_count: 0,
        }
    }

    #[test]
    fn overlap_rules() {
        let floor_a = record(1, "floor", [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let floor_b = record(2, "floor", [1.0, 0.0, 0.0], [2.0, 1.0, 0.5]);
        assert!(layout_overlaps(&[floor_a.clone(), floor_b]).is_empty());
        let floor_c = record(3, "floor", [0.5, 0.5, 0.0], [1.5, 1.5, 0.2]);
        assert_eq!(layout_overlaps(&[floor_a.clone(), floor_c]).len(), 1);
        let wall_high = record(4, "wall", [0.0, 0.0, 1.5], [1.0, 0.1, 2.0]);
        assert!(layout_overlaps(&[floor_a.clone(), wall_high]).is_empty());
        let wall_low = record(5, "wall", [0.0, 0.0, 0.5], [1.0, 0.1, 2.0]);
        assert_eq!(layout_overlaps(&[floor_a.clone(), wall_low]).len(), 1);
        // a cup stacked on its supporter shares xy with it by design
        let cup = record(6, "o1", [0.2, 0.2, 1.0], [0.4, 0.4, 1.2]);
        assert!(layout_overlaps(&[floor_a, cup]).is_empty());
    }
}
