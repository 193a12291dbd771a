//! Pinhole camera with a world-to-camera rigid transform. Camera space is
//! right-handed with +z forward; a point is visible when its camera-space z
//! is positive.

use crate::{Mat3, Vec2, Vec3};

#[derive(Debug, Clone)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    /// Principal point, pixels.
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation: `x_cam = R * x_world + t`.
    pub translation: Vec3,
}

impl Camera {
    /// Camera centered at `eye` looking at `target`, with `up` fixing roll.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fx: f64, fy: f64, width: u32, height: u32) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        // Rows of the world-to-camera rotation are the camera axes.
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -rotation * eye;
        Self {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
        }
    }

    /// World-space camera center.
    pub fn position(&self) -> Vec3 {
        -self.rotation.transpose() * self.translation
    }

    /// World point to camera space.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera-space point to pixel coordinates (x right, y down).
    pub fn project_cam(&self, p: Vec3) -> Vec2 {
        Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// World-space unit direction of the ray through pixel center `(x, y)`.
    pub fn ray_dir(&self, x: f64, y: f64) -> Vec3 {
        let d = Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * d).normalize()
    }

    /// Camera-space direction of the ray through pixel center, unnormalized
    /// with z = 1 (used to back-project depth maps).
    pub fn pixel_dir_cam(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub(crate) fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.fx > 0.0 && self.fy > 0.0) {
            v.push(format!("focal lengths ({}, {}) must be positive", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            v.push("image dimensions must be nonzero".into());
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            v.push(format!("principal point ({}, {}) outside image", self.cx, self.cy));
        }
        let rrt = self.rotation * self.rotation.transpose();
        let dev = (rrt - Mat3::identity()).norm();
        if dev > 1e-6 {
            v.push(format!("rotation not orthonormal (deviation {dev:.3e})"));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn look_at_projects_target_to_center() {
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            100.0,
            100.0,
            64,
            64,
        );
        let p = cam.to_camera(Vec3::zeros());
        assert_relative_eq!(p.z, 5.0, epsilon = 1e-12);
        let px = cam.project_cam(p);
        assert_relative_eq!(px, Vec2::new(32.0, 32.0), epsilon = 1e-9);
        assert!(cam.validate().is_empty());
    }

    #[test]
    fn position_inverts_transform() {
        let eye = Vec3::new(1.0, 2.0, 3.0);
        let cam = Camera::look_at(eye, Vec3::zeros(), Vec3::z(), 80.0, 80.0, 32, 32);
        assert_relative_eq!(cam.position(), eye, epsilon = 1e-12);
    }

    #[test]
    fn ray_dir_matches_projection() {
        let cam = Camera::look_at(
            Vec3::new(0.5, -1.0, 4.0),
            Vec3::new(0.0, 0.2, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            120.0,
            110.0,
            64,
            48,
        );
        let d = cam.ray_dir(10.5, 20.5);
        let p = cam.position() + d * 3.0;
        let px = cam.project_cam(cam.to_camera(p));
        assert_relative_eq!(px, Vec2::new(10.5, 20.5), epsilon = 1e-9);
    }
}
