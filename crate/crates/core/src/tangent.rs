//! Tangent-space parameterization of a surfel and interpolation of material
//! vertex attributes across it.
//!
//! Material vertices sit at fixed normalized tangent coordinates:
//! - M=1: the center (constant attributes).
//! - M=2: u = -1, +1 (linear in u, constant in v).
//! - M=4: (-1,-1), (+1,-1), (-1,+1), (+1,+1), bilinear.
//! - M=6: a 2x3 grid, u in {-1, 0, +1} (Lagrange quadratic), v in {-1, +1}
//!   (linear); u varies fastest in storage order.

use crate::scene::{GaussianSurfel, VertexSet, ROUGHNESS_MIN};
use crate::{Error, Mat2, Result, Vec2, Vec3};

/// Offset added to the scale in the tangent-coordinate denominator.
pub const TANGENT_DELTA: f64 = 0.1;

/// Fallback threshold for a near-zero offset normal sum.
const NORMAL_EPS: f64 = 1e-8;

/// Normalized tangent coordinates; the shading domain is [-1, 1]^2 and
/// consumers clamp before interpolating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentCoords {
    pub u: f64,
    pub v: f64,
}

impl TangentCoords {
    pub fn clamped(self) -> TangentCoords {
        TangentCoords {
            u: self.u.clamp(-1.0, 1.0),
            v: self.v.clamp(-1.0, 1.0),
        }
    }
}

/// Material attributes interpolated at one tangent location.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedMaterial {
    /// RGB albedo in [0, 1].
    pub albedo: Vec3,
    /// Roughness in [ROUGHNESS_MIN, 1].
    pub roughness: f64,
    /// Normal offset in the surfel tangent frame (unclamped).
    pub normal_offset: Vec3,
}

/// Maps a pixel center into normalized tangent coordinates:
/// `d = inv_jacobian * (pixel - screen_mean)`, then each component is
/// divided by the corresponding scale plus [`TANGENT_DELTA`].
pub fn tangent_coords(
    pixel_center: Vec2,
    screen_mean: Vec2,
    inv_jacobian: &Mat2,
    scale: Vec2,
) -> Result<TangentCoords> {
    if !inv_jacobian.iter().all(|c| c.is_finite()) {
        return Err(Error::Numeric("non-finite inverse Jacobian".into()));
    }
    let d = inv_jacobian * (pixel_center - screen_mean);
    Ok(TangentCoords {
        u: d.x / (scale.x + TANGENT_DELTA),
        v: d.y / (scale.y + TANGENT_DELTA),
    })
}

/// Interpolation weights for the supported vertex counts, evaluated at
/// clamped coordinates. Weights sum to 1; M=6 weights may be negative
/// (quadratic Lagrange along u).
pub fn vertex_weights(m: usize, uv: TangentCoords) -> Result<([f64; 6], usize)> {
    let TangentCoords { u, v } = uv.clamped();
    let mut w = [0.0; 6];
    match m {
        1 => {
            w[0] = 1.0;
        }
        2 => {
            w[0] = (1.0 - u) / 2.0;
            w[1] = (1.0 + u) / 2.0;
        }
        4 => {
            w[0] = (1.0 - u) * (1.0 - v) / 4.0;
            w[1] = (1.0 + u) * (1.0 - v) / 4.0;
            w[2] = (1.0 - u) * (1.0 + v) / 4.0;
            w[3] = (1.0 + u) * (1.0 + v) / 4.0;
        }
        6 => {
            let lu = [u * (u - 1.0) / 2.0, 1.0 - u * u, u * (u + 1.0) / 2.0];
            let lv = [(1.0 - v) / 2.0, (1.0 + v) / 2.0];
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = lu[i % 3] * lv[i / 3];
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unsupported vertex count {other}"
            )))
        }
    }
    Ok((w, m))
}

/// Interpolates a vertex set at `(u, v)`. Albedo and roughness are clamped
/// to their valid ranges after interpolation (Lagrange weights can
/// overshoot); the normal offset is left unclamped.
pub fn bilinear_attr(vs: &VertexSet, uv: TangentCoords) -> Result<InterpolatedMaterial> {
    let m = vs.len();
    if m == 1 {
        return Ok(InterpolatedMaterial {
            albedo: vs.albedo[0],
            roughness: vs.roughness[0],
            normal_offset: vs.normal_offset[0],
        });
    }
    let (w, m) = vertex_weights(m, uv)?;
    let mut albedo = Vec3::zeros();
    let mut roughness = 0.0;
    let mut offset = Vec3::zeros();
    for i in 0..m {
        albedo += vs.albedo[i] * w[i];
        roughness += vs.roughness[i] * w[i];
        offset += vs.normal_offset[i] * w[i];
    }
    Ok(InterpolatedMaterial {
        albedo: Vec3::new(
            albedo.x.clamp(0.0, 1.0),
            albedo.y.clamp(0.0, 1.0),
            albedo.z.clamp(0.0, 1.0),
        ),
        roughness: roughness.clamp(ROUGHNESS_MIN, 1.0),
        normal_offset: offset,
    })
}

/// Shading normal at `(u, v)`: the geometric normal plus the interpolated
/// offset rotated into world space, normalized. Falls back to the geometric
/// normal when the sum is near zero.
pub fn shading_normal(g: &GaussianSurfel, vs: &VertexSet, uv: TangentCoords) -> Result<Vec3> {
    let mat = bilinear_attr(vs, uv)?;
    Ok(offset_normal(g, mat.normal_offset))
}

/// Shading normal for a given tangent-frame offset.
pub fn offset_normal(g: &GaussianSurfel, offset_tangent: Vec3) -> Vec3 {
    let ng = g.geometric_normal();
    let world_offset = g.rotation * offset_tangent;
    let sum = ng + world_offset;
    let n = sum.norm();
    if n < NORMAL_EPS {
        ng
    } else {
        sum / n
    }
}

/// Interpolates per-vertex colors (used for vertex-shaded rendering).
pub fn interpolate_colors(colors: &[Vec3], uv: TangentCoords) -> Result<Vec3> {
    if colors.len() == 1 {
        return Ok(colors[0]);
    }
    let (w, m) = vertex_weights(colors.len(), uv)?;
    let mut out = Vec3::zeros();
    for i in 0..m {
        out += colors[i] * w[i];
    }
    Ok(out)
}
