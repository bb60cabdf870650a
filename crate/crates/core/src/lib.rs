//! Procedural indoor-scene synthesis for class-agnostic 3D instance
//! segmentation data.
//!
//! Pipeline: [`selection`] samples heterogeneous assets from the
//! [`catalog`], [`relations`] proposes spatial constraints, [`layout`] places
//! objects by depth-first search, [`scene`] assembles a labeled mesh,
//! [`scanner`] simulates multi-view RGB-D capture and fusion, [`dataset`]
//! writes samples to disk and [`metrics`] scores the resulting dataset.

pub mod catalog;
pub mod dataset;
pub mod features;
pub mod geometry;
pub mod http;
pub mod layout;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod relations;
pub mod scanner;
pub mod scene;
pub mod seeding;
pub mod selection;
