//! Shape signatures for geometry-diversity measurements.
//!
//! The descriptor is the D2 shape distribution: pairwise distances between
//! area-weighted surface samples, normalized by the AABB diagonal and
//! histogrammed into [`D2_BINS`] uniform bins over `[0, 1]`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::json_byte_offset;
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;
use crate::seeding::rng_from_seed;

pub const D2_BINS: usize = 64;
pub const DEFAULT_SAMPLE_COUNT: usize = 2048;
pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("need at least 2 samples to form a pair, got {0}")]
    TooFewSamples(usize),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("mesh AABB diagonal {0} is below 1e-9 m")]
    DegenerateMesh(f64),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of feature vectors ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("feature vectors have inconsistent lengths")]
    RaggedFeatures,
    #[error("no feature vectors given")]
    Empty,
    #[error("descriptor must have {D2_BINS} non-negative entries summing to 1")]
    InvalidDescriptor,
}

/// 64-bin D2 histogram (non-negative, sums to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShapeDescriptor {
    histogram: Vec<f64>,
}

impl ShapeDescriptor {
    pub fn new(histogram: Vec<f64>) -> Result<Self, FeatureError> {
        let valid = histogram.len() == D2_BINS
            && histogram.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (histogram.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if valid {
            Ok(Self { histogram })
        } else {
            Err(FeatureError::InvalidDescriptor)
        }
    }

    pub fn histogram(&self) -> &[f64] {
        &self.histogram
    }

    pub fn l1_distance(&self, other: &ShapeDescriptor) -> f64 {
        self.histogram.iter().zip(&other.histogram).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl TryFrom<Vec<f64>> for ShapeDescriptor {
    type Error = FeatureError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ShapeDescriptor> for Vec<f64> {
    fn from(d: ShapeDescriptor) -> Vec<f64> {
        d.histogram
    }
}

impl AsRef<[f64]> for ShapeDescriptor {
    fn as_ref(&self) -> &[f64] {
        &self.histogram
    }
}

/// Draws `count` points uniformly over the mesh surface.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Vec<Vec3> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let target = rng.gen::<f64>() * total;
            let t = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(t);
            let r1: f64 = rng.gen();
            let r2: f64 = rng.gen();
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect()
}

pub fn compute_descriptor(mesh: &TriangleMesh, sample_count: usize, seed: u64) -> Result<ShapeDescriptor, FeatureError> {
    if sample_count < 2 {
        return Err(FeatureError::TooFewSamples(sample_count));
    }
    if mesh.is_empty() {
        return Err(FeatureError::EmptyMesh);
    }
    let diag = mesh.aabb().diagonal();
    if !(diag >= 1e-9) {
        return Err(FeatureError::DegenerateMesh(diag));
    }
    let points = sample_surface(mesh, sample_count, seed);
    let mut counts = vec![0u64; D2_BINS];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = (points[i] - points[j]).norm() / diag;
            let bin = ((d * D2_BINS as f64) as usize).min(D2_BINS - 1);
            counts[bin] += 1;
        }
    }
    let pairs: u64 = counts.iter().sum();
    let histogram = counts.iter().map(|&c| c as f64 / pairs as f64).collect();
    ShapeDescriptor::new(histogram)
}

pub(crate) fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid (L2); ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in self.centroids.iter().enumerate() {
            let d = squared_l2(x, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

/// k-means result with the per-iteration objective trace.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid, recorded after each
    /// assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn check_features<T: AsRef<[f64]>>(data: &[T]) -> Result<usize, FeatureError> {
    let dim = data.first().ok_or(FeatureError::Empty)?.as_ref().len();
    if data.iter().any(|x| x.as_ref().len() != dim) {
        return Err(FeatureError::RaggedFeatures);
    }
    Ok(dim)
}

fn kmeans_pp_init<T: AsRef<[f64]>>(data: &[T], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = vec![data[rng.gen_range(0..n)].as_ref().to_vec()];
    let mut dist: Vec<f64> = data.iter().map(|x| squared_l2(x.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a chosen centroid
            rng.gen_range(0..n)
        };
        let c = data[next].as_ref().to_vec();
        for (i, x) in data.iter().enumerate() {
            dist[i] = dist[i].min(squared_l2(x.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with seeded k-means++ initialization.
pub fn kmeans_fit<T: AsRef<[f64]>>(data: &[T], k: usize, seed: u64) -> Result<KMeansFit, FeatureError> {
    if k == 0 {
        return Err(FeatureError::ZeroK);
    }
    let dim = check_features(data)?;
    if k > data.len() {
        return Err(FeatureError::KTooLarge { k, n: data.len() });
    }
    let mut rng = rng_from_seed(seed);
    let mut model = ClusterModel { centroids: kmeans_pp_init(data, k, &mut rng) };
    let mut assignments = vec![0; data.len()];
    let mut objective = Vec::new();
    let mut iterations = 0;
    loop {
        let mut sse = 0.0;
        for (i, x) in data.iter().enumerate() {
            assignments[i] = model.assign(x.as_ref());
            sse += squared_l2(x.as_ref(), &model.centroids[assignments[i]]);
        }
        objective.push(sse);
        if iterations == KMEANS_MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &c) in data.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x.as_ref()) {
                *s += v;
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            // an empty cluster keeps its centroid
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            movement = movement.max(squared_l2(&mean, &model.centroids[c]).sqrt());
            model.centroids[c] = mean;
        }
        if movement < KMEANS_TOLERANCE {
            let mut sse = 0.0;
            for (i, x) in data.iter().enumerate() {
                assignments[i] = model.assign(x.as_ref());
                sse += squared_l2(x.as_ref(), &model.centroids[assignments[i]]);
            }
            objective.push(sse);
            break;
        }
    }
    Ok(KMeansFit { model, assignments, objective, iterations })
}

pub fn kmeans<T: AsRef<[f64]>>(data: &[T], k: usize, seed: u64) -> Result<ClusterModel, FeatureError> {
    kmeans_fit(data, k, seed).map(|f| f.model)
}

/// Shannon entropy (nats) of the empirical distribution of labels.
pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Assigns each vector to its nearest centroid and returns the entropy of
/// the cluster-frequency distribution.
pub fn entropy_of_assignments<T: AsRef<[f64]>>(model: &ClusterModel, data: &[T]) -> Result<f64, FeatureError> {
    if data.is_empty() {
        return Err(FeatureError::Empty);
    }
    let mut counts = vec![0usize; model.k()];
    for x in data {
        counts[model.assign(x.as_ref())] += 1;
    }
    Ok(entropy_of_counts(&counts))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainSplit {
    pub in_domain: Vec<usize>,
    pub out_of_domain: Vec<usize>,
    pub mean: Vec<f64>,
    pub max_distance: f64,
}

/// A query is out-of-domain iff its L2 distance to the reference mean is
/// strictly greater than the largest reference distance to that mean.
pub fn out_of_domain_split<Q: AsRef<[f64]>, R: AsRef<[f64]>>(
    queries: &[Q],
    reference: &[R],
) -> Result<DomainSplit, FeatureError> {
    let dim = check_features(reference)?;
    if queries.iter().any(|q| q.as_ref().len() != dim) {
        return Err(FeatureError::RaggedFeatures);
    }
    let mut mean = vec![0.0; dim];
    for r in reference {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= reference.len() as f64;
    }
    let max_distance = reference
        .iter()
        .map(|r| squared_l2(r.as_ref(), &mean).sqrt())
        .fold(0.0, f64::max);
    let mut split = DomainSplit { mean, max_distance, ..Default::default() };
    for (i, q) in queries.iter().enumerate() {
        if squared_l2(q.as_ref(), &split.mean).sqrt() > max_distance {
            split.out_of_domain.push(i);
        } else {
            split.in_domain.push(i);
        }
    }
    Ok(split)
}

pub const DESCRIPTOR_CACHE_VERSION: u32 = 1;

/// On-disk map asset_id -> descriptor, tagged with the parameters that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorCache {
    pub format_version: u32,
    pub bins: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub descriptors: BTreeMap<String, ShapeDescriptor>,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("descriptor cache is not valid JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("descriptor cache parameters differ (version {version}, bins {bins}, samples {samples}, seed {seed})")]
    Mismatch { version: u32, bins: usize, samples: usize, seed: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DescriptorCache {
    pub fn new(sample_count: usize, seed: u64) -> Self {
        Self {
            format_version: DESCRIPTOR_CACHE_VERSION,
            bins: D2_BINS,
            sample_count,
            seed,
            descriptors: BTreeMap::new(),
        }
    }

    /// Parses a cache written by this version with the current bin count.
    pub fn parse(bytes: &[u8]) -> Result<Self, CacheError> {
        let cache: Self = serde_json::from_slice(bytes)
            .map_err(|e| CacheError::Json { offset: json_byte_offset(bytes, &e), message: e.to_string() })?;
        if cache.format_version != DESCRIPTOR_CACHE_VERSION || cache.bins != D2_BINS {
            return Err(cache.mismatch());
        }
        Ok(cache)
    }

    fn mismatch(&self) -> CacheError {
        CacheError::Mismatch { version: self.format_version, bins: self.bins, samples: self.sample_count, seed: self.seed }
    }

    /// Loads a cache, rejecting it if its parameters differ from the request.
    pub fn load_matching(path: &Path, sample_count: usize, seed: u64) -> Result<Self, CacheError> {
        let cache = Self::parse(&std::fs::read(path)?)?;
        if cache.sample_count != sample_count || cache.seed != seed {
            return Err(cache.mismatch());
        }
        Ok(cache)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cache serializes")
    }
}
