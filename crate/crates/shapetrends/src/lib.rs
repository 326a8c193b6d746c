//! Longitudinal statistics for manifold-valued shape data.
//!
//! The crate fits per-subject geodesic trends to time-stamped observations
//! (geodesic regression), averages and compares those trends in the space of
//! geodesics under a functional L² metric with variational time-discrete
//! shortest paths, provides a Sasaki-metric baseline on the tangent bundle,
//! and tests group differences with a manifold Hotelling T² permutation test.
//! Kendall's shape space of landmark configurations and the unit sphere are
//! the built-in geometries.

pub mod error;
pub mod geodesic_space;
pub mod kendall;
pub mod manifold;
pub mod regression;
pub mod sasaki;
pub mod stats;

pub use error::{Error, Result};
pub use geodesic_space::{DiscretePath, GeodesicPoint, QuadratureRule};
pub use kendall::{KendallShapeSpace, PreShape};
pub use manifold::{Euclidean, Manifold, Sphere};
pub use regression::{FittedGeodesic, Trajectory};
