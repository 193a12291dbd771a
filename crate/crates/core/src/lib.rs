//! Differentiable Gaussian-surfel renderer and inverse-rendering toolkit.
//!
//! A scene is a set of 2D Gaussian surfels, each carrying a small set of
//! material vertices (albedo, roughness, normal offset) that are bilinearly
//! interpolated across the surfel's tangent plane. Rendering splats the
//! surfels into screen space with alpha blending; illumination is computed
//! per Gaussian vertex by Monte Carlo integration of the rendering equation
//! against an environment map, with visibility and indirect radiance baked
//! into per-Gaussian micro-buffers by ray tracing the Gaussian field.
//!
//! The crate also contains the optimization side: photometric, smoothness,
//! normal-consistency, and radiance-consistency losses with hand-derived
//! analytic gradients, an Adam loop for material recovery, and brute-force
//! reference implementations used to validate the fast paths.

pub mod brdf;
pub mod camera;
pub mod envmap;
pub mod error;
pub mod grad;
pub mod imgio;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod par;
pub mod relight;
pub mod rt;
pub mod scene;
pub mod splat;
pub mod ssim;
pub mod tangent;

pub use error::{Error, Result};

/// 3-vector over f64; positions, directions, RGB triples.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2-vector over f64; scales, screen positions, tangent displacements.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2x2 matrix over f64.
pub type Mat2 = nalgebra::Matrix2<f64>;
/// 3x3 matrix over f64.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// Unit quaternion over f64.
pub type UnitQuat = nalgebra::UnitQuaternion<f64>;
