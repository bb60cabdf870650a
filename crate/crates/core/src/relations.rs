//! Spatial-relation constraints for sequential placement.
//!
//! Each object is described only relative to objects earlier in the
//! placement order (plus its own orientation), never by absolute position.
//! Backends speak a closed JSON schema, one request per object:
//!
//! ```text
//! request  {"group": "floor", "placed": [{"id","class","dims"}...], "next_object": {"id","class","dims"}}
//! response {"relations": [{"type": "near", "ref": "floor_0", "dist": 1.2}, ...]}
//! ```
//!
//! Invalid relations in a reply are dropped with a warning; the object simply
//! ends up less constrained.

use std::collections::HashSet;
use std::fmt;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Group;
use crate::geometry::Orientation;
use crate::http::{BackendError, HttpClient};
use crate::seeding::rng_from_seed;

pub const MAX_RELATIONS_PER_OBJECT: usize = 3;

/// World compass direction: N = +y, E = +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    /// Orientation whose forward vector points this way.
    pub fn orientation(self) -> Orientation {
        match self {
            Direction::N => Orientation::Deg0,
            Direction::W => Orientation::Deg90,
            Direction::S => Orientation::Deg180,
            Direction::E => Orientation::Deg270,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "N" => Some(Direction::N),
            "E" => Some(Direction::E),
            "S" => Some(Direction::S),
            "W" => Some(Direction::W),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::N => "N",
            Direction::E => "E",
            Direction::S => "S",
            Direction::W => "W",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirectionalKind {
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
}

impl DirectionalKind {
    pub const ALL: [DirectionalKind; 4] =
        [DirectionalKind::LeftOf, DirectionalKind::RightOf, DirectionalKind::InFrontOf, DirectionalKind::Behind];

    fn as_str(self) -> &'static str {
        match self {
            DirectionalKind::LeftOf => "left_of",
            DirectionalKind::RightOf => "right_of",
            DirectionalKind::InFrontOf => "in_front_of",
            DirectionalKind::Behind => "behind",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpatialRelation {
    Facing { direction: Direction },
    FaceToward { reference: String },
    Near { reference: String, max_dist: f64 },
    Far { reference: String, min_dist: f64 },
    Beside { reference: String },
    Directional { kind: DirectionalKind, reference: String },
    AgainstWall,
    /// Free space of `min_dist` in front of the object.
    Clearance { min_dist: f64 },
}

impl SpatialRelation {
    pub fn reference(&self) -> Option<&str> {
        match self {
            SpatialRelation::FaceToward { reference }
            | SpatialRelation::Near { reference, .. }
            | SpatialRelation::Far { reference, .. }
            | SpatialRelation::Beside { reference }
            | SpatialRelation::Directional { reference, .. } => Some(reference),
            SpatialRelation::Facing { .. } | SpatialRelation::AgainstWall | SpatialRelation::Clearance { .. } => None,
        }
    }

    pub fn distance(&self) -> Option<f64> {
        match self {
            SpatialRelation::Near { max_dist: d, .. }
            | SpatialRelation::Far { min_dist: d, .. }
            | SpatialRelation::Clearance { min_dist: d } => Some(*d),
            _ => None,
        }
    }

    pub fn to_raw(&self) -> RawRelation {
        let (kind, dir) = match self {
            SpatialRelation::Facing { direction } => ("facing", Some(direction.as_str().to_string())),
            SpatialRelation::FaceToward { .. } => ("face_toward", None),
            SpatialRelation::Near { .. } => ("near", None),
            SpatialRelation::Far { .. } => ("far", None),
            SpatialRelation::Beside { .. } => ("beside", None),
            SpatialRelation::Directional { kind, .. } => (kind.as_str(), None),
            SpatialRelation::AgainstWall => ("against_wall", None),
            SpatialRelation::Clearance { .. } => ("clearance", None),
        };
        RawRelation {
            kind: kind.to_string(),
            reference: self.reference().map(str::to_string),
            dist: self.distance(),
            dir,
        }
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let raw = self.to_raw();
        write!(f, "{}", raw.kind)?;
        if let Some(d) = raw.dir {
            write!(f, "({d})")?;
        }
        if let Some(r) = raw.reference {
            write!(f, "(ref={r})")?;
        }
        if let Some(d) = raw.dist {
            write!(f, "(dist={d})")?;
        }
        Ok(())
    }
}

/// Wire form of a relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRelation {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl TryFrom<&RawRelation> for SpatialRelation {
    type Error = String;

    fn try_from(raw: &RawRelation) -> Result<Self, String> {
        let reference = || raw.reference.clone().ok_or_else(|| format!("{} needs \"ref\"", raw.kind));
        let dist = || match raw.dist {
            Some(d) if d.is_finite() && d > 0.0 => Ok(d),
            Some(d) => Err(format!("{} distance must be > 0, got {d}", raw.kind)),
            None => Err(format!("{} needs \"dist\"", raw.kind)),
        };
        let directional = |kind| Ok(SpatialRelation::Directional { kind, reference: reference()? });
        match raw.kind.as_str() {
            "facing" => {
                let dir = raw.dir.as_deref().ok_or("facing needs \"dir\"")?;
                let direction = Direction::parse(dir).ok_or_else(|| format!("unknown direction {dir:?}"))?;
                Ok(SpatialRelation::Facing { direction })
            }
            "face_toward" => Ok(SpatialRelation::FaceToward { reference: reference()? }),
            "near" => Ok(SpatialRelation::Near { reference: reference()?, max_dist: dist()? }),
            "far" => Ok(SpatialRelation::Far { reference: reference()?, min_dist: dist()? }),
            "beside" => Ok(SpatialRelation::Beside { reference: reference()? }),
            "left_of" => directional(DirectionalKind::LeftOf),
            "right_of" => directional(DirectionalKind::RightOf),
            "in_front_of" => directional(DirectionalKind::InFrontOf),
            "behind" => directional(DirectionalKind::Behind),
            "against_wall" => Ok(SpatialRelation::AgainstWall),
            "clearance" => Ok(SpatialRelation::Clearance { min_dist: dist()? }),
            other => Err(format!("unknown relation type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    /// Width, depth, height in meters.
    pub dims: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRequest {
    pub group: Group,
    pub placed: Vec<ObjectSpec>,
    pub next_object: ObjectSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReply {
    pub relations: Vec<RawRelation>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplyError {
    #[error("reply is not JSON: {0}")]
    NotJson(String),
    #[error("reply has no \"relations\" array")]
    MissingRelations,
}

/// Parses a backend reply, keeping each entry's own decode result so one
/// malformed relation does not poison the rest.
pub fn parse_relation_reply(bytes: &[u8]) -> Result<Vec<Result<RawRelation, String>>, ReplyError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ReplyError::NotJson(e.to_string()))?;
    let entries = value.get("relations").and_then(|r| r.as_array()).ok_or(ReplyError::MissingRelations)?;
    Ok(entries
        .iter()
        .map(|e| serde_json::from_value::<RawRelation>(e.clone()).map_err(|err| err.to_string()))
        .collect())
}

/// A source of relation proposals for one object at a time.
pub trait RelationBackend {
    /// Returns the raw reply body for `request`.
    fn propose(&mut self, request: &RelationRequest) -> Result<Vec<u8>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RelationAssignment {
    pub order: Vec<String>,
    pub relations: Vec<Vec<SpatialRelation>>,
}

impl Serialize for SpatialRelation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_raw().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpatialRelation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawRelation::deserialize(d)?;
        SpatialRelation::try_from(&raw).map_err(serde::de::Error::custom)
    }
}

impl RelationAssignment {
    pub fn unconstrained(order: Vec<String>) -> Self {
        let relations = vec![Vec::new(); order.len()];
        Self { order, relations }
    }

    pub fn relations_of(&self, index: usize) -> &[SpatialRelation] {
        self.relations.get(index).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub object_id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.object_id, self.message)
    }
}

fn check_relation(rel: &SpatialRelation, earlier: &HashSet<&str>, self_id: &str) -> Result<(), String> {
    if let Some(d) = rel.distance() {
        if !(d.is_finite() && d > 0.0) {
            return Err(format!("{rel}: distance must be > 0"));
        }
    }
    if let Some(r) = rel.reference() {
        if r == self_id {
            return Err(format!("{rel}: refers to itself"));
        }
        if !earlier.contains(r) {
            return Err(format!("{rel}: reference {r:?} is not placed earlier"));
        }
    }
    Ok(())
}

/// Checks ordering, backward references and distance positivity.
pub fn validate_assignment(assignment: &RelationAssignment) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if assignment.relations.len() != assignment.order.len() {
        violations.push(Violation {
            object_id: String::new(),
            message: format!(
                "{} objects but {} relation lists",
                assignment.order.len(),
                assignment.relations.len()
            ),
        });
    }
    let mut earlier: HashSet<&str> = HashSet::new();
    for (i, id) in assignment.order.iter().enumerate() {
        if earlier.contains(id.as_str()) {
            violations.push(Violation { object_id: id.clone(), message: "appears twice in the order".into() });
        }
        for rel in assignment.relations_of(i) {
            if let Err(message) = check_relation(rel, &earlier, id) {
                violations.push(Violation { object_id: id.clone(), message });
            }
        }
        earlier.insert(id);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Queries `backend` once per object, in order, and keeps only relations that
/// satisfy the assignment invariants.
pub fn infer_relations(
    objects: &[ObjectSpec],
    group: Group,
    backend: &mut dyn RelationBackend,
) -> Result<RelationAssignment, BackendError> {
    let mut assignment = RelationAssignment::default();
    let mut earlier: HashSet<&str> = HashSet::new();
    for (i, object) in objects.iter().enumerate() {
        let request = RelationRequest { group, placed: objects[..i].to_vec(), next_object: object.clone() };
        let body = backend.propose(&request)?;
        let mut kept = Vec::new();
        match parse_relation_reply(&body) {
            Ok(entries) => {
                for entry in entries {
                    let parsed = entry.and_then(|raw| SpatialRelation::try_from(&raw));
                    match parsed.and_then(|rel| check_relation(&rel, &earlier, &object.id).map(|_| rel)) {
                        Ok(rel) if kept.len() < MAX_RELATIONS_PER_OBJECT => kept.push(rel),
                        Ok(rel) => log::warn!("{}: dropping {rel}, at most {MAX_RELATIONS_PER_OBJECT} relations", object.id),
                        Err(e) => log::warn!("{}: dropping invalid relation: {e}", object.id),
                    }
                }
            }
            Err(e) => log::warn!("{}: discarding reply: {e}", object.id),
        }
        assignment.order.push(object.id.clone());
        assignment.relations.push(kept);
        earlier.insert(&object.id);
    }
    Ok(assignment)
}

/// Deterministic heuristic backend.
///
/// * footprint area > 1 m^2: `against_wall` with probability 0.5
/// * with probability 0.6: one relation to a uniformly chosen earlier object
/// * always one `facing`, except on walls where mounting fixes orientation
#[derive(Debug, Clone)]
pub struct RuleBasedBackend {
    rng: ChaCha8Rng,
}

impl RuleBasedBackend {
    pub const AGAINST_WALL_AREA: f64 = 1.0;
    pub const AGAINST_WALL_PROB: f64 = 0.5;
    pub const REF_RELATION_PROB: f64 = 0.6;

    pub fn new(seed: u64) -> Self {
        Self { rng: rng_from_seed(seed) }
    }

    fn reply(&mut self, request: &RelationRequest) -> RelationReply {
        let rng = &mut self.rng;
        let next = &request.next_object;
        let mut relations = Vec::new();
        if request.group != Group::Wall && next.dims[0] * next.dims[1] > Self::AGAINST_WALL_AREA {
            if rng.gen::<f64>() < Self::AGAINST_WALL_PROB {
                relations.push(SpatialRelation::AgainstWall);
            }
        }
        if !request.placed.is_empty() && rng.gen::<f64>() < Self::REF_RELATION_PROB {
            let target = &request.placed[rng.gen_range(0..request.placed.len())];
            let reference = target.id.clone();
            let half_diag = |d: &[f64; 3]| 0.5 * (d[0] * d[0] + d[1] * d[1]).sqrt();
            let reach = half_diag(&next.dims) + half_diag(&target.dims);
            let rel = match rng.gen_range(0..5) {
                0 => SpatialRelation::Near { reference, max_dist: reach + rng.gen_range(0.1..0.6) },
                1 => SpatialRelation::Far { reference, min_dist: reach + rng.gen_range(0.05..0.5) },
                2 => SpatialRelation::Beside { reference },
                3 => {
                    let kinds: &[DirectionalKind] = if request.group == Group::Wall {
                        &[DirectionalKind::LeftOf, DirectionalKind::RightOf]
                    } else {
                        &DirectionalKind::ALL
                    };
                    SpatialRelation::Directional { kind: *kinds.choose(rng).unwrap(), reference }
                }
                _ if request.group == Group::Wall => SpatialRelation::Beside { reference },
                _ => SpatialRelation::FaceToward { reference },
            };
            relations.push(rel);
        }
        if request.group != Group::Wall {
            let direction = *Direction::ALL.choose(rng).unwrap();
            relations.push(SpatialRelation::Facing { direction });
        }
        RelationReply { relations: relations.iter().map(SpatialRelation::to_raw).collect() }
    }
}

impl RelationBackend for RuleBasedBackend {
    fn propose(&mut self, request: &RelationRequest) -> Result<Vec<u8>, BackendError> {
        Ok(serde_json::to_vec(&self.reply(request)).expect("reply serializes"))
    }
}

/// Prompt template shipped with the repository.
pub const DEFAULT_RELATION_TEMPLATE: &str = include_str!("../../../templates/relation_prompt.txt");

/// Fills `{{group}}`, `{{placed}}` and `{{next_object}}`.
pub fn render_relation_prompt(template: &str, request: &RelationRequest) -> String {
    template
        .replace("{{group}}", request.group.as_str())
        .replace("{{placed}}", &serde_json::to_string(&request.placed).unwrap())
        .replace("{{next_object}}", &serde_json::to_string(&request.next_object).unwrap())
}

/// Backend that forwards each request to an external service (typically a
/// proxy in front of a language model). The rendered prompt travels in an
/// extra `"prompt"` field next to the schema fields.
#[derive(Debug, Clone)]
pub struct HttpRelationBackend {
    client: HttpClient,
    template: String,
}

impl HttpRelationBackend {
    pub fn new(client: HttpClient, template: impl Into<String>) -> Self {
        Self { client, template: template.into() }
    }

    pub fn from_endpoint(endpoint: &str) -> Self {
        Self::new(HttpClient::from_env(endpoint, Duration::from_secs(60), 3), DEFAULT_RELATION_TEMPLATE)
    }

    pub fn request_body(&self, request: &RelationRequest) -> serde_json::Value {
        let mut body = serde_json::to_value(request).unwrap();
        body["prompt"] = serde_json::Value::String(render_relation_prompt(&self.template, request));
        body
    }
}

impl RelationBackend for HttpRelationBackend {
    fn propose(&mut self, request: &RelationRequest) -> Result<Vec<u8>, BackendError> {
        self.client.post_json(&self.request_body(request))
    }
}
