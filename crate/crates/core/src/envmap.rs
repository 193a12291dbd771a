//! Equirectangular environment map providing distant-light radiance.
//!
//! Mapping convention: longitude to column, latitude to row. Row 0 is the
//! +z pole (latitude angle 0), the last row is -z; column u wraps around
//! atan2(y, x). Lookups are bilinear with longitude wrap and latitude clamp.

use std::path::Path;

use crate::imgio::Image;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone)]
pub struct EnvironmentMap {
    pub width: usize,
    pub height: usize,
    /// Row-major radiance grid, all components finite and >= 0.
    pub data: Vec<Vec3>,
}

impl EnvironmentMap {
    pub fn new(width: usize, height: usize, data: Vec<Vec3>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "environment grid {width}x{height} does not match {} texels",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, radiance: Vec3) -> Self {
        Self {
            width,
            height,
            data: vec![radiance; width * height],
        }
    }

    /// Radiance arriving from unit direction `dir`.
    pub fn sample(&self, dir: Vec3) -> Vec3 {
        let theta = dir.z.clamp(-1.0, 1.0).acos(); // 0 at +z pole
        let phi = dir.y.atan2(dir.x); // [-pi, pi]
        let u = (phi + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * self.width as f64 - 0.5;
        let v = theta / std::f64::consts::PI * self.height as f64 - 0.5;

        let u0 = u.floor();
        let v0 = v.floor();
        let fu = u - u0;
        let fv = v - v0;
        let wrap = |c: i64| -> usize { c.rem_euclid(self.width as i64) as usize };
        let clampv = |r: i64| -> usize { r.clamp(0, self.height as i64 - 1) as usize };
        let (c0, c1) = (wrap(u0 as i64), wrap(u0 as i64 + 1));
        let (r0, r1) = (clampv(v0 as i64), clampv(v0 as i64 + 1));
        let at = |r: usize, c: usize| self.data[r * self.width + c];
        at(r0, c0) * (1.0 - fu) * (1.0 - fv)
            + at(r0, c1) * fu * (1.0 - fv)
            + at(r1, c0) * (1.0 - fu) * fv
            + at(r1, c1) * fu * fv
    }

    /// Largest radiance component over the whole grid.
    pub fn max_component(&self) -> f64 {
        self.data.iter().map(|v| v.max()).fold(0.0, f64::max)
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }

    pub fn from_image(img: Image) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data,
        }
    }

    pub(crate) fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.data.len() != self.width * self.height {
            v.push("texel count does not match dimensions".into());
        }
        if self
            .data
            .iter()
            .any(|t| !(t.x.is_finite() && t.y.is_finite() && t.z.is_finite()) || t.min() < 0.0)
        {
            v.push("radiance values must be finite and non-negative".into());
        }
        v
    }
}

/// Loads an environment map from a float dump, RGBE, or PNG file by
/// extension.
pub fn load_environment(path: &Path) -> Result<EnvironmentMap> {
    Ok(EnvironmentMap::from_image(crate::imgio::load_image(path)?))
}
