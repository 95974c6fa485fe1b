//! Toolkit for inferring bicyclists' routing preferences from sparse sets of
//! GPS trajectories.
//!
//! The pipeline has three stages:
//!
//! 1. trajectories are matched onto a road network, enriched with features
//!    (length, climb, detour factor, road-type and land-use shares) and
//!    clustered into rider groups;
//! 2. per group, road types are classified as favored or unfavored by
//!    comparing their share among the ridden routes with their share among
//!    length-shortest reference paths between the same endpoints;
//! 3. a single trade-off parameter alpha is learned per group by sweeping a
//!    grid of alpha values and picking the one that decomposes the group's
//!    routes into the fewest optimal subpaths ("milestone decomposition").
//!
//! The result is an edge weighting `w(e) = alpha * length(e)` for favored
//! edges and `(1 - alpha) * length(e)` for unfavored ones, usable by any
//! standard shortest-path router. The [`pipeline`] module wires the stages
//! together behind the `veloprefs` command-line tool.

pub mod clustering;
pub mod decomposition;
pub mod features;
pub mod geom;
pub mod matching;
pub mod network;
pub mod pipeline;
pub mod preference;
