//! Per-scene object sampling.
//!
//! Draws are independent and with replacement. Each floor and wall candidate
//! receives `per_support_count` small objects, so a scene has
//! `per_support_count * (m1 + m2)` surface-placeable candidates.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{AssetCatalog, Group};
use crate::features::{kmeans, FeatureError, ShapeDescriptor};
use crate::seeding::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Uniform,
    Complementary,
    Paired,
}

/// Restricts sampling to assets whose shape cluster is in `allowed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRestriction {
    pub asset_cluster: BTreeMap<String, usize>,
    pub allowed: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub m1: usize,
    pub m2: usize,
    pub per_support_count: usize,
    pub mode: SelectionMode,
    /// Alternate uniform/complementary by scene parity instead of using `mode`.
    pub alternate: bool,
    pub real_class_list: BTreeSet<String>,
    pub complementary_prob: f64,
    pub pair_map: Option<BTreeMap<String, String>>,
    pub pair_prob: f64,
    pub cluster_restriction: Option<ClusterRestriction>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            m1: 100,
            m2: 50,
            per_support_count: 5,
            mode: SelectionMode::Uniform,
            alternate: true,
            real_class_list: BTreeSet::new(),
            complementary_prob: 0.7,
            pair_map: None,
            pair_prob: 0.0,
            cluster_restriction: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("{0} must be positive")]
    ZeroCount(&'static str),
    #[error("{name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("paired mode requires a pair map")]
    MissingPairMap,
    #[error("group {0} has no assets to sample from")]
    EmptyGroup(Group),
    #[error("cluster restriction leaves group {0} without assets")]
    RestrictionEmptiesGroup(Group),
    #[error("class {0:?} has no entry in the pair map")]
    UnpairedClass(String),
    #[error("paired class {paired:?} (for {class:?}) has no assets in group {group}")]
    PairUnavailable { class: String, paired: String, group: Group },
    #[error(transparent)]
    Features(#[from] FeatureError),
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.m1 == 0 {
            return Err(SelectionError::ZeroCount("m1"));
        }
        if self.m2 == 0 {
            return Err(SelectionError::ZeroCount("m2"));
        }
        if self.per_support_count == 0 {
            return Err(SelectionError::ZeroCount("per_support_count"));
        }
        for (name, value) in [("complementary_prob", self.complementary_prob), ("pair_prob", self.pair_prob)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SelectionError::Probability { name, value });
            }
        }
        if self.mode == SelectionMode::Paired && self.pair_map.is_none() {
            return Err(SelectionError::MissingPairMap);
        }
        Ok(())
    }
}

/// Which candidate a small object is meant to sit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "group", content = "index", rename_all = "lowercase")]
pub enum SupporterRef {
    Floor(usize),
    Wall(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportedDraw {
    pub supporter: SupporterRef,
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mode: SelectionMode,
    pub o_floor: Vec<String>,
    pub o_wall: Vec<String>,
    /// One entry per floor candidate, then one per wall candidate.
    pub o_obj: Vec<SupportedDraw>,
}

impl SelectionResult {
    pub fn total_small_objects(&self) -> usize {
        self.o_obj.iter().map(|d| d.assets.len()).sum()
    }

    pub fn all_asset_ids(&self) -> impl Iterator<Item = &str> {
        self.o_floor
            .iter()
            .chain(&self.o_wall)
            .chain(self.o_obj.iter().flat_map(|d| &d.assets))
            .map(String::as_str)
    }
}

/// Even scenes sample uniformly, odd scenes use the complementary strategy.
/// With `alternate` off the configured mode is used for every scene.
pub fn alternate_strategy(scene_index: u64, config: &SelectionConfig) -> SelectionMode {
    if !config.alternate {
        return config.mode;
    }
    if scene_index % 2 == 0 {
        SelectionMode::Uniform
    } else {
        SelectionMode::Complementary
    }
}

struct GroupPools<'a> {
    group: Group,
    all: Vec<usize>,
    real: Vec<usize>,
    by_class: BTreeMap<&'a str, Vec<usize>>,
}

impl<'a> GroupPools<'a> {
    fn new(catalog: &'a AssetCatalog, group: Group, config: &SelectionConfig) -> Result<Self, SelectionError> {
        let base = catalog.group_indices(group);
        if base.is_empty() {
            return Err(SelectionError::EmptyGroup(group));
        }
        let all: Vec<usize> = match &config.cluster_restriction {
            None => base.to_vec(),
            Some(r) => base
                .iter()
                .copied()
                .filter(|&i| {
                    r.asset_cluster
                        .get(&catalog.record(i).asset_id)
                        .is_some_and(|c| r.allowed.contains(c))
                })
                .collect(),
        };
        if all.is_empty() {
            return Err(SelectionError::RestrictionEmptiesGroup(group));
        }
        let real: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| config.real_class_list.contains(&catalog.record(i).class_name))
            .collect();
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in &all {
            by_class.entry(catalog.record(i).class_name.as_str()).or_default().push(i);
        }
        Ok(Self { group, all, real, by_class })
    }
}

fn pick<R: Rng>(pool: &[usize], rng: &mut R) -> usize {
    pool[rng.gen_range(0..pool.len())]
}

fn draw_slots<R: Rng>(
    catalog: &AssetCatalog,
    pools: &GroupPools<'_>,
    count: usize,
    mode: SelectionMode,
    config: &SelectionConfig,
    warned: &mut bool,
    rng: &mut R,
) -> Result<Vec<String>, SelectionError> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let base = match mode {
            SelectionMode::Uniform | SelectionMode::Paired => pick(&pools.all, rng),
            SelectionMode::Complementary => {
                let prefer_real = rng.gen::<f64>() < config.complementary_prob;
                if prefer_real && !pools.real.is_empty() {
                    pick(&pools.real, rng)
                } else {
                    if prefer_real && !*warned {
                        log::warn!(
                            "no real-dataset classes among {} assets; complementary draws fall back to the full group",
                            pools.group
                        );
                        *warned = true;
                    }
                    pick(&pools.all, rng)
                }
            }
        };
        out.push(catalog.record(base).asset_id.clone());
        if mode == SelectionMode::Paired {
            let class = catalog.record(base).class_name.as_str();
            let pair_map = config.pair_map.as_ref().ok_or(SelectionError::MissingPairMap)?;
            let paired = pair_map.get(class).ok_or_else(|| SelectionError::UnpairedClass(class.to_string()))?;
            // the partner takes the next slot, so none is drawn after the last one
            if out.len() < count && rng.gen::<f64>() < config.pair_prob {
                let pool = pools.by_class.get(paired.as_str()).ok_or_else(|| SelectionError::PairUnavailable {
                    class: class.to_string(),
                    paired: paired.clone(),
                    group: pools.group,
                })?;
                out.push(catalog.record(pick(pool, rng)).asset_id.clone());
            }
        }
    }
    Ok(out)
}

/// Samples the floor, wall and small-object candidate lists for one scene.
///
/// `mode` is the effective strategy for this scene (see
/// [`alternate_strategy`]).
pub fn select_objects(
    catalog: &AssetCatalog,
    config: &SelectionConfig,
    mode: SelectionMode,
    seed: u64,
) -> Result<SelectionResult, SelectionError> {
    config.validate()?;
    if mode == SelectionMode::Paired && config.pair_map.is_none() {
        return Err(SelectionError::MissingPairMap);
    }
    let floor = GroupPools::new(catalog, Group::Floor, config)?;
    let wall = GroupPools::new(catalog, Group::Wall, config)?;
    let obj = GroupPools::new(catalog, Group::Obj, config)?;

    let mut rng = rng_from_seed(seed);
    let mut warned = false;
    let o_floor = draw_slots(catalog, &floor, config.m1, mode, config, &mut warned, &mut rng)?;
    let o_wall = draw_slots(catalog, &wall, config.m2, mode, config, &mut warned, &mut rng)?;
    let supporters = (0..config.m1).map(SupporterRef::Floor).chain((0..config.m2).map(SupporterRef::Wall));
    let mut o_obj = Vec::with_capacity(config.m1 + config.m2);
    for supporter in supporters {
        let assets = draw_slots(catalog, &obj, config.per_support_count, mode, config, &mut warned, &mut rng)?;
        o_obj.push(SupportedDraw { supporter, assets });
    }
    Ok(SelectionResult { mode, o_floor, o_wall, o_obj })
}

/// Clusters each group's assets into at most `k` shape clusters.
///
/// Clustering per group guarantees that any non-empty allowed set keeps
/// assets in every group.
pub fn cluster_assets_by_group(
    catalog: &AssetCatalog,
    descriptors: &BTreeMap<String, ShapeDescriptor>,
    k: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>, SelectionError> {
    let mut out = BTreeMap::new();
    for group in Group::ALL {
        let ids: Vec<&str> = catalog
            .group_indices(group)
            .iter()
            .map(|&i| catalog.record(i).asset_id.as_str())
            .filter(|id| descriptors.contains_key(*id))
            .collect();
        if ids.is_empty() {
            continue;
        }
        let data: Vec<&ShapeDescriptor> = ids.iter().map(|id| &descriptors[*id]).collect();
        let data: Vec<&[f64]> = data.iter().map(|d| d.histogram()).collect();
        let model = kmeans(&data, k.min(ids.len()), seed)?;
        for (id, x) in ids.iter().zip(&data) {
            out.insert((*id).to_string(), model.assign(x));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{AssetRecord, FrontAxis};

    fn catalog(spec: &[(&str, &str, Group)]) -> AssetCatalog {
        let records = spec
            .iter()
            .map(|(id, class, group)| AssetRecord {
                asset_id: id.to_string(),
                class_name: class.to_string(),
                group: *group,
                mesh_path: format!("{id}.obj").into(),
                target_dims: [1.0, 1.0, 1.0],
                front_axis: FrontAxis::PosY,
            })
            .collect();
        AssetCatalog::from_records(records, ".").unwrap()
    }

    fn single_class() -> AssetCatalog {
        catalog(&[("t1", "table", Group::Floor), ("p1", "picture", Group::Wall), ("c1", "cup", Group::Obj)])
    }

    #[test]
    fn single_class_counts() {
        let config = SelectionConfig { m1: 3, m2: 2, ..Default::default() };
        let r = select_objects(&single_class(), &config, SelectionMode::Uniform, 1).unwrap();
        assert_eq!(r.o_floor, vec!["t1"; 3]);
        assert_eq!(r.o_wall, vec!["p1"; 2]);
        assert_eq!(r.total_small_objects(), 25);
        assert!(r.o_obj.iter().flat_map(|d| &d.assets).all(|a| a == "c1"));
        assert_eq!(r.o_obj[3].supporter, SupporterRef::Wall(0));
    }

    #[test]
    fn complementary_probability_one_picks_real_classes() {
        let cat = catalog(&[
            ("chair_a", "chair", Group::Floor),
            ("sofa_a", "sofa", Group::Floor),
            ("bed_a", "bed", Group::Floor),
            ("p1", "picture", Group::Wall),
            ("c1", "cup", Group::Obj),
        ]);
        let config = SelectionConfig {
            m1: 50,
            m2: 1,
            per_support_count: 1,
            complementary_prob: 1.0,
            real_class_list: ["chair".to_string()].into(),
            ..Default::default()
        };
        let r = select_objects(&cat, &config, SelectionMode::Complementary, 3).unwrap();
        assert!(r.o_floor.iter().all(|a| a == "chair_a"));
        // wall group has no real class: falls back to the full group
        assert_eq!(r.o_wall, vec!["p1"]);
    }

    #[test]
    fn parity_rule() {
        let config = SelectionConfig::default();
        assert_eq!(alternate_strategy(0, &config), SelectionMode::Uniform);
        assert_eq!(alternate_strategy(1, &config), SelectionMode::Complementary);
        let complementary = (0..2000u64)
            .filter(|&i| alternate_strategy(i, &config) == SelectionMode::Complementary)
            .count();
        assert_eq!(complementary, 1000);
        let fixed = SelectionConfig { alternate: false, mode: SelectionMode::Paired, ..Default::default() };
        assert_eq!(alternate_strategy(1, &fixed), SelectionMode::Paired);
    }

    #[test]
    fn paired_mode_errors() {
        let cat = single_class();
        let config = SelectionConfig { m1: 2, m2: 1, per_support_count: 2, mode: SelectionMode::Paired, ..Default::default() };
        assert_eq!(select_objects(&cat, &config, SelectionMode::Paired, 0), Err(SelectionError::MissingPairMap));
        let mut pairs = BTreeMap::new();
        pairs.insert("table".to_string(), "table".to_string());
        let config = SelectionConfig { pair_map: Some(pairs), pair_prob: 1.0, ..config };
        assert_eq!(
            select_objects(&cat, &config, SelectionMode::Paired, 0),
            Err(SelectionError::UnpairedClass("picture".into()))
        );
    }

    #[test]
    fn paired_mode_forces_partner_into_next_slot() {
        let cat = catalog(&[
            ("t1", "table", Group::Floor),
            ("c1", "chair", Group::Floor),
            ("p1", "picture", Group::Wall),
            ("m1", "mirror", Group::Wall),
            ("cup1", "cup", Group::Obj),
            ("b1", "book", Group::Obj),
        ]);
        let pairs: BTreeMap<String, String> = [
            ("table", "chair"),
            ("chair", "table"),
            ("picture", "mirror"),
            ("mirror", "picture"),
            ("cup", "book"),
            ("book", "cup"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let config = SelectionConfig {
            m1: 10,
            m2: 4,
            per_support_count: 4,
            mode: SelectionMode::Paired,
            pair_map: Some(pairs.clone()),
            pair_prob: 1.0,
            ..Default::default()
        };
        let r = select_objects(&cat, &config, SelectionMode::Paired, 11).unwrap();
        assert_eq!(r.o_floor.len(), 10);
        let class = |id: &str| cat.get(id).unwrap().class_name.clone();
        for pair in r.o_floor.chunks(2) {
            assert_eq!(pairs[&class(&pair[0])], class(&pair[1]));
        }
    }

    #[test]
    fn restriction_that_empties_a_group_fails() {
        let cat = single_class();
        let restriction = ClusterRestriction {
            asset_cluster: [("t1".to_string(), 0), ("p1".to_string(), 1), ("c1".to_string(), 0)].into(),
            allowed: [0].into(),
        };
        let config = SelectionConfig { m1: 1, m2: 1, cluster_restriction: Some(restriction), ..Default::default() };
        assert_eq!(
            select_objects(&cat, &config, SelectionMode::Uniform, 0),
            Err(SelectionError::RestrictionEmptiesGroup(Group::Wall))
        );
    }

    #[test]
    fn invalid_probability_rejected() {
        let config = SelectionConfig { complementary_prob: 1.5, ..Default::default() };
        assert!(matches!(config.validate(), Err(SelectionError::Probability { .. })));
    }
}
