//! Ray-cast ground truth for omniview.
//!
//! Renders parametric scenes through exact camera models. Used to produce
//! source imagery for a rig and the ideal virtual views the projection
//! mapper is expected to reproduce. Nothing here calls into the mapper or
//! the projection surfaces of `omniview-core`; only camera models, poses and
//! image buffers are shared.

pub mod compare;
pub mod fixtures;
mod render;
mod scene;

pub use render::{raycast, reference_view, render_rig, view_ray, BACKGROUND, NO_RAY, OUTSIDE_LENS};
pub use scene::{Hit, Primitive, Scene, Shape, Texture, SCENE_SCHEMA};
