//! Dataset-quality metrics: context complexity, geometry diversity and an
//! externally scored layout reasonability.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{load_mesh, AssetCatalog, CatalogError};
use crate::dataset::{load_manifest, load_scene, DatasetError};
use crate::features::{
    compute_descriptor, entropy_of_assignments, kmeans, CacheError, DescriptorCache, FeatureError, ShapeDescriptor,
    DEFAULT_SAMPLE_COUNT,
};
use crate::geometry::{Aabb3, Vec3};
use crate::http::{BackendError, HttpClient};
use crate::scanner::{project, CameraIntrinsics, CameraPose};
use crate::scanner::LabeledPointCloud;
use crate::scene::{instance_color, STRUCTURE_ID};
use crate::seeding::{derive_seed, hash_bytes, stage};

pub const DEFAULT_DIVERSITY_K: usize = 32;
pub const DEFAULT_SCORING_CONCURRENCY: usize = 4;
pub const DESCRIPTOR_CACHE_FILE: &str = "descriptors.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const DEFAULT_LAYOUT_TEMPLATE: &str = include_str!("../../../templates/layout_prompt.txt");

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no scenes to measure")]
    NoScenes,
    #[error("scene {0:?} has no classes")]
    EmptyScene(String),
    #[error("context complexity needs at least two distinct classes")]
    SingleClass,
    #[error("{found} descriptors is fewer than k = {k}; rerun with a k of at most {found}")]
    TooFewDescriptors { found: usize, k: usize },
    #[error("asset {0:?} has no descriptor and no catalog entry to compute one")]
    MissingAsset(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneClassSet {
    pub scene_id: String,
    pub classes: BTreeSet<String>,
}

/// Mean over classes `c` of `max_{c' != c} P(c' | c)`, where the conditional
/// is the fraction of scenes containing `c` that also contain `c'`. Lower
/// means objects appear in more varied company.
pub fn context_complexity(scenes: &[SceneClassSet]) -> Result<f64, MetricsError> {
    if scenes.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    if let Some(s) = scenes.iter().find(|s| s.classes.is_empty()) {
        return Err(MetricsError::EmptyScene(s.scene_id.clone()));
    }
    let classes: BTreeSet<&str> = scenes.iter().flat_map(|s| s.classes.iter().map(String::as_str)).collect();
    if classes.len() < 2 {
        return Err(MetricsError::SingleClass);
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let n = classes.len();
    let mut with = vec![0usize; n];
    let mut both = vec![0usize; n * n];
    for s in scenes {
        let ids: Vec<usize> = s.classes.iter().map(|c| index[c.as_str()]).collect();
        for &a in &ids {
            with[a] += 1;
            for &b in &ids {
                both[a * n + b] += 1;
            }
        }
    }
    let total: f64 = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| b != a)
                .map(|b| both[a * n + b] as f64 / with[a] as f64)
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / n as f64)
}

/// Entropy (nats) of the k-means cluster histogram of `descriptors`.
/// Descriptors are sorted first so the result only depends on the multiset.
pub fn geometry_diversity(descriptors: &[ShapeDescriptor], k: usize, seed: u64) -> Result<f64, MetricsError> {
    if descriptors.len() < k {
        return Err(MetricsError::TooFewDescriptors { found: descriptors.len(), k });
    }
    let mut sorted: Vec<&[f64]> = descriptors.iter().map(|d| d.histogram()).collect();
    sorted.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let model = kmeans(&sorted, k, seed)?;
    Ok(entropy_of_assignments(&model, &sorted)?)
}

/// Seed of the surface sampling for one asset's descriptor.
pub fn asset_descriptor_seed(seed: u64, asset_id: &str) -> u64 {
    derive_seed(seed, &[stage::DESCRIPTOR, hash_bytes(asset_id.as_bytes())])
}

// ---------------------------------------------------------------- layout scoring

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOutcome {
    pub score: u8,
    pub clamped: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("score reply is not JSON: {0}")]
    Json(String),
    #[error("score reply has no usable \"score\" field")]
    MissingScore,
    #[error("score {0:?} is not a number")]
    NotNumeric(String),
}

/// Parses `{"score": 62}`. Numeric strings are accepted, fractions are
/// rounded and out-of-range values are clamped to `0..=100`.
pub fn parse_score_reply(bytes: &[u8]) -> Result<ScoreOutcome, ScoreError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ScoreError::Json(e.to_string()))?;
    let raw = match value.get("score") {
        Some(serde_json::Value::Number(n)) => n.as_f64().ok_or(ScoreError::MissingScore)?,
        Some(serde_json::Value::String(s)) => {
            s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| ScoreError::NotNumeric(s.clone()))?
        }
        _ => return Err(ScoreError::MissingScore),
    };
    let rounded = raw.round();
    let clamped = !(0.0..=100.0).contains(&rounded);
    Ok(ScoreOutcome { score: rounded.clamp(0.0, 100.0) as u8, clamped })
}

pub fn render_layout_prompt(template: &str, view_count: usize) -> String {
    template.replace("{{view_count}}", &view_count.to_string())
}

/// Sends rendered views to an external scorer and returns the raw reply.
pub trait ScoreBackend: Sync {
    fn score(&self, images_png: &[Vec<u8>], prompt: &str) -> Result<Vec<u8>, BackendError>;
}

pub struct HttpScoreBackend {
    pub client: HttpClient,
}

impl HttpScoreBackend {
    pub fn request_body(images_png: &[Vec<u8>], prompt: &str) -> serde_json::Value {
        let b64 = base64::engine::general_purpose::STANDARD;
        let images: Vec<String> = images_png.iter().map(|i| b64.encode(i)).collect();
        serde_json::json!({ "images": images, "prompt": prompt })
    }
}

impl ScoreBackend for HttpScoreBackend {
    fn score(&self, images_png: &[Vec<u8>], prompt: &str) -> Result<Vec<u8>, BackendError> {
        self.client.post_json(&Self::request_body(images_png, prompt))
    }
}

/// Scores one scene. Any backend or parse failure yields `None`.
pub fn layout_score(images_png: &[Vec<u8>], prompt: &str, backend: &dyn ScoreBackend) -> Option<u8> {
    let reply = match backend.score(images_png, prompt) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("layout scoring failed: {e}");
            return None;
        }
    };
    match parse_score_reply(&reply) {
        Ok(out) => {
            if out.clamped {
                log::warn!("layout score out of range, clamped to {}", out.score);
            }
            Some(out.score)
        }
        Err(e) => {
            log::warn!("layout score reply rejected: {e}");
            None
        }
    }
}

/// Scores each job with at most `concurrency` requests in flight. Results
/// are in job order.
pub fn score_scenes(jobs: &[Vec<Vec<u8>>], prompt: &str, backend: &dyn ScoreBackend, concurrency: usize) -> Vec<Option<u8>> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..concurrency.max(1).min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, AtomicOrdering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let score = layout_score(&jobs[i], prompt, backend);
                results.lock().expect("no worker panics while holding the lock")[i] = score;
            });
        }
    });
    results.into_inner().expect("workers joined")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderViewConfig {
    pub width: usize,
    pub height: usize,
    pub views: usize,
    /// Square splat side in pixels.
    pub splat: usize,
}

impl Default for RenderViewConfig {
    fn default() -> Self {
        Self { width: 512, height: 384, views: 4, splat: 3 }
    }
}

fn cloud_bounds(cloud: &LabeledPointCloud) -> Aabb3 {
    let pts: Vec<Vec3> = (0..cloud.len()).map(|i| cloud.point(i)).collect();
    Aabb3::from_points(pts.iter())
}

/// Cameras placed near the top corners of the cloud's bounding box, each
/// looking at the box center.
pub fn overview_poses(bounds: &Aabb3, views: usize) -> Vec<CameraPose> {
    let c = bounds.center();
    let s = bounds.size();
    let eye_z = bounds.max[2] + 0.25 * s.z.max(1.0);
    (0..views)
        .map(|v| {
            let a = std::f64::consts::TAU * (v as f64 + 0.5) / views as f64;
            let eye = Vec3::new(c.x + 0.45 * s.x * a.cos(), c.y + 0.45 * s.y * a.sin(), eye_z);
            let d = c - eye;
            let yaw = (-d.x).atan2(d.y).to_degrees();
            let pitch = d.z.atan2(d.x.hypot(d.y)).to_degrees();
            CameraPose::new(eye, yaw, pitch)
        })
        .collect()
}

fn point_rgb(cloud: &LabeledPointCloud, i: usize) -> [u8; 3] {
    if let Some(c) = &cloud.colors {
        return c[i];
    }
    let id = cloud.instance_ids[i];
    if id == STRUCTURE_ID {
        return [170, 170, 170];
    }
    instance_color(id).map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Z-buffered point splat of `cloud` from `pose`; returns RGB8 pixels.
pub fn splat_render(cloud: &LabeledPointCloud, pose: &CameraPose, k: &CameraIntrinsics, splat: usize) -> Vec<u8> {
    let mut depth = vec![f64::INFINITY; k.pixel_count()];
    let mut rgb = vec![255u8; k.pixel_count() * 3];
    let half = (splat.max(1) as i64 - 1) / 2;
    for i in 0..cloud.len() {
        let p = pose.world_to_camera(&cloud.point(i));
        if p.z <= 1e-3 {
            continue;
        }
        let (u, v, z) = project(k, &p);
        let (u, v) = (u.round() as i64, v.round() as i64);
        let color = point_rgb(cloud, i);
        for y in v - half..=v - half + splat.max(1) as i64 - 1 {
            for x in u - half..=u - half + splat.max(1) as i64 - 1 {
                if x < 0 || y < 0 || x >= k.width as i64 || y >= k.height as i64 {
                    continue;
                }
                let px = y as usize * k.width + x as usize;
                if z < depth[px] {
                    depth[px] = z;
                    rgb[px * 3..px * 3 + 3].copy_from_slice(&color);
                }
            }
        }
    }
    rgb
}

pub fn encode_png_rgb(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(rgb).expect("in-memory PNG data");
    }
    out
}

/// PNG overview renders of a fused cloud.
pub fn render_overview_pngs(cloud: &LabeledPointCloud, config: &RenderViewConfig) -> Vec<Vec<u8>> {
    if cloud.is_empty() {
        return Vec::new();
    }
    let k = CameraIntrinsics::with_fov(config.width, config.height, 70.0);
    overview_poses(&cloud_bounds(cloud), config.views)
        .iter()
        .map(|pose| encode_png_rgb(k.width, k.height, &splat_render(cloud, pose, &k, config.splat)))
        .collect()
}

// ---------------------------------------------------------------- dataset level

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutScoringConfig {
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub attempts: u32,
    pub concurrency: usize,
    pub render: RenderViewConfig,
}

impl Default for LayoutScoringConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_secs: 60,
            attempts: 3,
            concurrency: DEFAULT_SCORING_CONCURRENCY,
            render: RenderViewConfig::default(),
        }
    }
}

impl LayoutScoringConfig {
    pub fn backend(&self) -> Option<HttpScoreBackend> {
        let endpoint = self.endpoint.as_ref()?;
        Some(HttpScoreBackend {
            client: HttpClient::from_env(endpoint.clone(), Duration::from_secs(self.timeout_secs), self.attempts),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub diversity_k: usize,
    pub descriptor_samples: usize,
    pub descriptor_seed: u64,
    pub kmeans_seed: u64,
    pub layout: LayoutScoringConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            diversity_k: DEFAULT_DIVERSITY_K,
            descriptor_samples: DEFAULT_SAMPLE_COUNT,
            descriptor_seed: 0,
            kmeans_seed: 0,
            layout: LayoutScoringConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutScores {
    pub per_scene: BTreeMap<String, Option<u8>>,
    pub mean: Option<f64>,
    pub missing: usize,
}

impl LayoutScores {
    pub fn from_scores(per_scene: BTreeMap<String, Option<u8>>) -> Self {
        let present: Vec<f64> = per_scene.values().flatten().map(|&s| s as f64).collect();
        let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        let missing = per_scene.len() - present.len();
        Self { per_scene, mean, missing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scene_count: usize,
    pub object_count: usize,
    pub class_count: usize,
    pub diversity_k: usize,
    /// Nats.
    pub geometry_diversity_entropy: f64,
    pub context_complexity: f64,
    pub layout_scores: Option<LayoutScores>,
}

/// Descriptors for `asset_ids`, read from the cache at `cache_path` when its
/// parameters match and computed from `catalog` otherwise. The cache is
/// rewritten when anything new was computed.
pub fn descriptors_for(
    asset_ids: &BTreeSet<String>,
    catalog: Option<&AssetCatalog>,
    cache_path: &Path,
    samples: usize,
    seed: u64,
) -> Result<BTreeMap<String, ShapeDescriptor>, MetricsError> {
    let mut cache = match DescriptorCache::load_matching(cache_path, samples, seed) {
        Ok(c) => c,
        Err(CacheError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => DescriptorCache::new(samples, seed),
        Err(e) => {
            log::warn!("ignoring descriptor cache {}: {e}", cache_path.display());
            DescriptorCache::new(samples, seed)
        }
    };
    let missing: Vec<&String> = asset_ids.iter().filter(|id| !cache.descriptors.contains_key(*id)).collect();
    if !missing.is_empty() {
        use rayon::prelude::*;
        let computed: Vec<(String, ShapeDescriptor)> = missing
            .par_iter()
            .map(|id| {
                let record = catalog.and_then(|c| c.get(id)).ok_or_else(|| MetricsError::MissingAsset((*id).clone()))?;
                let mesh = load_mesh(catalog.expect("record implies catalog"), record)?;
                let d = compute_descriptor(&mesh, samples, asset_descriptor_seed(seed, id))?;
                Ok(((*id).clone(), d))
            })
            .collect::<Result<_, MetricsError>>()?;
        cache.descriptors.extend(computed);
        std::fs::write(cache_path, cache.to_json())
            .map_err(|source| MetricsError::Io { path: cache_path.display().to_string(), source })?;
    }
    Ok(asset_ids.iter().map(|id| (id.clone(), cache.descriptors[id].clone())).collect())
}

/// Computes the report for the dataset under `root`. Layout scores are only
/// requested when `scorer` is given.
pub fn compute_dataset_metrics(
    root: &Path,
    catalog: Option<&AssetCatalog>,
    config: &MetricsConfig,
    scorer: Option<&dyn ScoreBackend>,
) -> Result<MetricsReport, MetricsError> {
    let manifest = load_manifest(root)?;
    let mut class_sets = Vec::new();
    let mut placed_assets = Vec::new();
    let mut renders = Vec::new();
    for entry in &manifest.scenes {
        let (sample, cloud) = load_scene(&root.join(&entry.path))?;
        let classes: BTreeSet<String> = sample.instances.iter().map(|i| i.class_name.clone()).collect();
        placed_assets.extend(sample.instances.iter().map(|i| i.asset_id.clone()));
        if classes.is_empty() {
            log::warn!("scene {} has no objects; left out of context complexity", sample.scene_id);
        } else {
            class_sets.push(SceneClassSet { scene_id: sample.scene_id.clone(), classes });
        }
        if scorer.is_some() {
            renders.push((sample.scene_id, render_overview_pngs(&cloud, &config.layout.render)));
        }
    }
    if manifest.scenes.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    let unique: BTreeSet<String> = placed_assets.iter().cloned().collect();
    let table = descriptors_for(
        &unique,
        catalog,
        &root.join(DESCRIPTOR_CACHE_FILE),
        config.descriptor_samples,
        config.descriptor_seed,
    )?;
    let descriptors: Vec<ShapeDescriptor> = placed_assets.iter().map(|id| table[id].clone()).collect();
    let class_count = class_sets.iter().flat_map(|s| s.classes.iter()).collect::<BTreeSet<_>>().len();
    let layout_scores = scorer.map(|backend| {
        let prompt = render_layout_prompt(DEFAULT_LAYOUT_TEMPLATE, config.layout.render.views);
        let jobs: Vec<Vec<Vec<u8>>> = renders.iter().map(|(_, images)| images.clone()).collect();
        let scores = score_scenes(&jobs, &prompt, backend, config.layout.concurrency);
        LayoutScores::from_scores(renders.iter().map(|(id, _)| id.clone()).zip(scores).collect())
    });
    Ok(MetricsReport {
        scene_count: manifest.scenes.len(),
        object_count: descriptors.len(),
        class_count,
        diversity_k: config.diversity_k,
        geometry_diversity_entropy: geometry_diversity(&descriptors, config.diversity_k, config.kmeans_seed)?,
        context_complexity: context_complexity(&class_sets)?,
        layout_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::D2_BINS;

    fn sets(scenes: &[&[&str]]) -> Vec<SceneClassSet> {
        scenes
            .iter()
            .enumerate()
            .map(|(i, s)| SceneClassSet { scene_id: format!("s{i}"), classes: s.iter().map(|c| c.to_string()).collect() })
            .collect()
    }

    #[test]
    fn context_complexity_fixtures() {
        assert_eq!(context_complexity(&sets(&[&["A", "B"], &["A", "C"], &["B", "C"]])).unwrap(), 0.5);
        assert_eq!(context_complexity(&sets(&[&["A", "B"], &["A", "B"]])).unwrap(), 1.0);
        assert!(matches!(context_complexity(&sets(&[&["A"], &["A"]])), Err(MetricsError::SingleClass)));
        assert!(matches!(context_complexity(&[]), Err(MetricsError::NoScenes)));
        assert!(matches!(context_complexity(&sets(&[&["A", "B"], &[]])), Err(MetricsError::EmptyScene(_))));
    }

    fn spike(bin: usize) -> ShapeDescriptor {
        let mut h = vec![0.0; D2_BINS];
        h[bin] = 1.0;
        ShapeDescriptor::new(h).unwrap()
    }

    #[test]
    fn diversity_of_identical_and_separated_sets() {
        let same = vec![spike(3); 40];
        assert_eq!(geometry_diversity(&same, 4, 1).unwrap(), 0.0);
        let four: Vec<ShapeDescriptor> = (0..40).map(|i| spike(10 * (i % 4))).collect();
        assert!((geometry_diversity(&four, 4, 1).unwrap() - 4f64.ln()).abs() < 1e-9);
        assert!(matches!(geometry_diversity(&four[..3], 4, 1), Err(MetricsError::TooFewDescriptors { found: 3, k: 4 })));
    }

    #[test]
    fn score_reply_parsing() {
        assert_eq!(parse_score_reply(br#"{"score": 62}"#).unwrap(), ScoreOutcome { score: 62, clamped: false });
        assert_eq!(parse_score_reply(br#"{"score": "105"}"#).unwrap(), ScoreOutcome { score: 100, clamped: true });
        assert_eq!(parse_score_reply(br#"{"score": -3}"#).unwrap(), ScoreOutcome { score: 0, clamped: true });
        assert_eq!(parse_score_reply(br#"{"score": 61.6}"#).unwrap().score, 62);
        assert_eq!(parse_score_reply(br#"{"score": "high"}"#), Err(ScoreError::NotNumeric("high".into())));
        assert_eq!(parse_score_reply(br#"{"rating": 5}"#), Err(ScoreError::MissingScore));
        assert!(matches!(parse_score_reply(b"nope"), Err(ScoreError::Json(_))));
    }

    struct Fixed(Result<&'static [u8], ()>);

    impl ScoreBackend for Fixed {
        fn score(&self, _: &[Vec<u8>], _: &str) -> Result<Vec<u8>, BackendError> {
            self.0.map(|b| b.to_vec()).map_err(|_| BackendError::Transport { attempts: 1, message: "timed out".into() })
        }
    }

    #[test]
    fn scoring_is_fail_soft() {
        let jobs = vec![vec![vec![1u8]]; 6];
        assert_eq!(score_scenes(&jobs, "p", &Fixed(Ok(br#"{"score":62}"#)), 4), vec![Some(62); 6]);
        assert_eq!(score_scenes(&jobs, "p", &Fixed(Err(())), 4), vec![None; 6]);
        let scores = LayoutScores::from_scores([("a".to_string(), Some(60)), ("b".into(), None), ("c".into(), Some(70))].into());
        assert_eq!((scores.mean, scores.missing), (Some(65.0), 1));
    }

    #[test]
    fn overview_render_sees_the_cloud() {
        let cloud = LabeledPointCloud {
            points: (0..400).map(|i| [(i % 20) as f64 * 0.2, (i / 20) as f64 * 0.2, 0.0]).collect(),
            instance_ids: vec![0; 400],
            colors: None,
        };
        let cfg = RenderViewConfig { width: 64, height: 48, views: 2, splat: 3 };
        let k = CameraIntrinsics::with_fov(64, 48, 70.0);
        for pose in overview_poses(&cloud_bounds(&cloud), 2) {
            let rgb = splat_render(&cloud, &pose, &k, 3);
            assert!(rgb.chunks(3).any(|p| p == [170, 170, 170]));
        }
        let pngs = render_overview_pngs(&cloud, &cfg);
        assert_eq!(pngs.len(), 2);
        assert!(pngs.iter().all(|p| p.starts_with(b"\x89PNG")));
    }
}
