//! Scene data model: Gaussian surfels, per-surfel material vertex sets,
//! cameras, environment map, and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::envmap::EnvironmentMap;
use crate::imgio::Image;
use crate::{Error, Mat3, Result, UnitQuat, Vec2, Vec3};

/// Lower bound of the valid roughness range.
pub const ROUGHNESS_MIN: f64 = 0.04;

/// Supported material vertex counts per surfel.
pub const VERTEX_COUNTS: [usize; 4] = [1, 2, 4, 6];

/// A 2D Gaussian surfel: an oriented elliptical Gaussian with zero extent
/// along its normal, plus a radiance color and opacity.
#[derive(Debug, Clone)]
pub struct GaussianSurfel {
    /// Center position in world units.
    pub position: Vec3,
    /// Orientation; the third column of the rotation matrix is the
    /// geometric normal.
    pub rotation: UnitQuat,
    /// Extent along the two tangent axes, world units, strictly positive.
    pub scale: Vec2,
    /// Opacity in [0, 1].
    pub opacity: f64,
    /// RGB radiance (degree-0 term when directional radiance is enabled).
    pub radiance: Vec3,
    /// Optional degree-1 directional radiance coefficients, one 3-vector of
    /// per-channel coefficients per axis.
    pub radiance_dir: Option<[Vec3; 3]>,
}

impl GaussianSurfel {
    /// Rank-2 world-space covariance R * diag(sx^2, sy^2, 0) * R^T.
    pub fn covariance(&self) -> Result<Mat3> {
        build_covariance(&self.rotation, self.scale)
    }

    /// Unit normal of the surfel plane (third rotation column).
    pub fn geometric_normal(&self) -> Vec3 {
        geometric_normal(&self.rotation)
    }

    /// World-space unit tangent axes (first and second rotation columns).
    pub fn tangent_axes(&self) -> (Vec3, Vec3) {
        let m = self.rotation.to_rotation_matrix();
        (m.matrix().column(0).into(), m.matrix().column(1).into())
    }

    /// Radiance emitted toward `dir` (unit vector pointing away from the
    /// surfel). Degree-0 radiance is direction-independent; with degree-1
    /// coefficients the result is clamped at zero per channel.
    pub fn radiance_toward(&self, dir: Vec3) -> Vec3 {
        match &self.radiance_dir {
            None => self.radiance,
            Some(c) => {
                let v = self.radiance + c[0] * dir.x + c[1] * dir.y + c[2] * dir.z;
                Vec3::new(v.x.max(0.0), v.y.max(0.0), v.z.max(0.0))
            }
        }
    }
}

/// Material vertices attached to one surfel. Vertices live at fixed
/// normalized tangent coordinates (see [`crate::tangent`]); attributes are
/// interpolated between them at shading time.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    /// Per-vertex RGB albedo in [0, 1].
    pub albedo: Vec<Vec3>,
    /// Per-vertex roughness in [ROUGHNESS_MIN, 1].
    pub roughness: Vec<f64>,
    /// Per-vertex normal offset, expressed in the surfel tangent frame.
    pub normal_offset: Vec<Vec3>,
}

impl VertexSet {
    /// A vertex set with `m` identical vertices.
    pub fn constant(m: usize, albedo: Vec3, roughness: f64, normal_offset: Vec3) -> Self {
        Self {
            albedo: vec![albedo; m],
            roughness: vec![roughness; m],
            normal_offset: vec![normal_offset; m],
        }
    }

    /// Number of material vertices.
    pub fn len(&self) -> usize {
        self.albedo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.albedo.is_empty()
    }
}

/// A scene: surfels with their vertex sets, an environment map, and a set
/// of cameras with optional ground-truth images for training.
#[derive(Debug, Clone)]
pub struct Scene {
    pub gaussians: Vec<GaussianSurfel>,
    pub vertex_sets: Vec<VertexSet>,
    pub environment: EnvironmentMap,
    pub cameras: Vec<Camera>,
    /// Ground-truth image per camera, when available (linear RGB).
    pub gt_images: Vec<Option<Image>>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// One failed invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Which element broke the invariant, e.g. `gaussian 3` or `scene`.
    pub element: String,
    /// Which invariant, human-readable.
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

/// World-space covariance of a surfel: R * diag(sx^2, sy^2, 0) * R^T.
///
/// The third diagonal entry is identically zero, so the result has rank 2
/// and its null space is spanned by the geometric normal.
pub fn build_covariance(rotation: &UnitQuat, scale: Vec2) -> Result<Mat3> {
    if !(scale.x > 0.0 && scale.y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale components must be positive, got ({}, {})",
            scale.x, scale.y
        )));
    }
    let r = rotation.to_rotation_matrix();
    let s = Mat3::from_diagonal(&Vec3::new(scale.x * scale.x, scale.y * scale.y, 0.0));
    Ok(r.matrix() * s * r.matrix().transpose())
}

/// Geometric normal of a surfel: third column of the rotation matrix.
pub fn geometric_normal(rotation: &UnitQuat) -> Vec3 {
    let m = rotation.to_rotation_matrix();
    m.matrix().column(2).into()
}

fn finite3(v: &Vec3) -> bool {
    v.x.is_finite() && v.y.is_finite() && v.z.is_finite()
}

/// Checks every type invariant and returns the list of violations; an empty
/// list means the scene is well-formed. Violations are data, not errors.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |element: String, message: String| {
        out.push(Violation { element, message });
    };

    if scene.gaussians.len() != scene.vertex_sets.len() {
        push(
            "scene".into(),
            format!(
                "surfel list length {} != vertex-set list length {}",
                scene.gaussians.len(),
                scene.vertex_sets.len()
            ),
        );
    }
    if scene.cameras.len() != scene.gt_images.len() {
        push(
            "scene".into(),
            format!(
                "camera list length {} != image list length {}",
                scene.cameras.len(),
                scene.gt_images.len()
            ),
        );
    }

    for (i, g) in scene.gaussians.iter().enumerate() {
        let el = format!("gaussian {i}");
        let qn = g.rotation.as_ref().norm();
        if (qn - 1.0).abs() > 1e-6 {
            push(el.clone(), format!("quaternion norm {qn} not within 1e-6 of 1"));
        }
        if !finite3(&g.position) {
            push(el.clone(), "position not finite".into());
        }
        if !(g.scale.x > 0.0 && g.scale.y > 0.0)
            || !g.scale.x.is_finite()
            || !g.scale.y.is_finite()
        {
            push(
                el.clone(),
                format!("scale ({}, {}) not strictly positive", g.scale.x, g.scale.y),
            );
        }
        if !(0.0..=1.0).contains(&g.opacity) || !g.opacity.is_finite() {
            push(el.clone(), format!("opacity {} outside [0, 1]", g.opacity));
        }
        if !finite3(&g.radiance) || g.radiance.min() < 0.0 {
            push(el.clone(), "radiance has a negative or non-finite component".into());
        }
        if let Some(c) = &g.radiance_dir {
            if c.iter().any(|v| !finite3(v)) {
                push(el.clone(), "directional radiance not finite".into());
            }
        }
    }

    for (i, vs) in scene.vertex_sets.iter().enumerate() {
        let el = format!("vertex set {i}");
        let m = vs.len();
        if !VERTEX_COUNTS.contains(&m) {
            push(el.clone(), format!("vertex count {m} not one of {VERTEX_COUNTS:?}"));
        }
        if vs.roughness.len() != m || vs.normal_offset.len() != m {
            push(el.clone(), "attribute arrays disagree on vertex count".into());
            continue;
        }
        for (j, a) in vs.albedo.iter().enumerate() {
            if !finite3(a) || a.min() < 0.0 || a.max() > 1.0 {
                push(el.clone(), format!("albedo of vertex {j} outside [0, 1]"));
            }
        }
        for (j, r) in vs.roughness.iter().enumerate() {
            if !r.is_finite() || *r < ROUGHNESS_MIN || *r > 1.0 {
                push(
                    el.clone(),
                    format!("roughness {r} of vertex {j} outside [{ROUGHNESS_MIN}, 1]"),
                );
            }
        }
        for (j, n) in vs.normal_offset.iter().enumerate() {
            if !finite3(n) {
                push(el.clone(), format!("normal offset of vertex {j} not finite"));
            }
        }
    }

    for (i, cam) in scene.cameras.iter().enumerate() {
        let el = format!("camera {i}");
        for v in cam.validate() {
            push(el.clone(), v);
        }
        if let Some(Some(img)) = scene.gt_images.get(i) {
            if img.width != cam.width as usize || img.height != cam.height as usize {
                push(
                    el,
                    format!(
                        "image {}x{} does not match camera resolution {}x{}",
                        img.width, img.height, cam.width, cam.height
                    ),
                );
            }
        }
    }

    for v in scene.environment.validate() {
        push("environment".into(), v);
    }

    out
}

// ---------------------------------------------------------------------------
// Scene file format (JSON document plus sibling image/environment files).

#[derive(Serialize, Deserialize)]
struct GaussianDoc {
    position: [f64; 3],
    /// Unit quaternion as [w, x, y, z].
    quaternion: [f64; 4],
    scale: [f64; 2],
    opacity: f64,
    radiance: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radiance_dir: Option<[[f64; 3]; 3]>,
}

#[derive(Serialize, Deserialize)]
struct VertexSetDoc {
    albedo: Vec<[f64; 3]>,
    roughness: Vec<f64>,
    normal_offset: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct CameraDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    /// World-to-camera rotation, row-major 3x3.
    rotation: [f64; 9],
    /// World-to-camera translation.
    translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    gaussians: Vec<GaussianDoc>,
    vertex_sets: Vec<VertexSetDoc>,
    /// Path to the environment map, relative to the scene file.
    environment: String,
    cameras: Vec<CameraDoc>,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Serializes a scene to a JSON document. `environment` and per-camera
/// `image` are the path strings to embed; image data itself is written
/// separately by the caller.
pub fn scene_to_json(scene: &Scene, environment: &str, image_paths: &[Option<String>]) -> Result<String> {
    let doc = SceneDoc {
        gaussians: scene
            .gaussians
            .iter()
            .map(|g| GaussianDoc {
                position: arr3(&g.position),
                quaternion: {
                    let q = g.rotation.as_ref();
                    [q.w, q.i, q.j, q.k]
                },
                scale: [g.scale.x, g.scale.y],
                opacity: g.opacity,
                radiance: arr3(&g.radiance),
                radiance_dir: g.radiance_dir.map(|c| [arr3(&c[0]), arr3(&c[1]), arr3(&c[2])]),
            })
            .collect(),
        vertex_sets: scene
            .vertex_sets
            .iter()
            .map(|vs| VertexSetDoc {
                albedo: vs.albedo.iter().map(arr3).collect(),
                roughness: vs.roughness.clone(),
                normal_offset: vs.normal_offset.iter().map(arr3).collect(),
            })
            .collect(),
        environment: environment.to_string(),
        cameras: scene
            .cameras
            .iter()
            .zip(image_paths)
            .map(|(c, img)| CameraDoc {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
                rotation: {
                    let r = &c.rotation;
                    [
                        r[(0, 0)],
                        r[(0, 1)],
                        r[(0, 2)],
                        r[(1, 0)],
                        r[(1, 1)],
                        r[(1, 2)],
                        r[(2, 0)],
                        r[(2, 1)],
                        r[(2, 2)],
                    ]
                },
                translation: arr3(&c.translation),
                image: img.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a scene document; environment and images are left to the caller
/// (returned as the path strings found in the document).
pub fn scene_from_json(text: &str) -> Result<(Scene, String, Vec<Option<String>>)> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let gaussians = doc
        .gaussians
        .into_iter()
        .map(|g| GaussianSurfel {
            position: vec3(g.position),
            rotation: UnitQuat::from_quaternion(nalgebra::Quaternion::new(
                g.quaternion[0],
                g.quaternion[1],
                g.quaternion[2],
                g.quaternion[3],
            )),
            scale: Vec2::new(g.scale[0], g.scale[1]),
            opacity: g.opacity,
            radiance: vec3(g.radiance),
            radiance_dir: g.radiance_dir.map(|c| [vec3(c[0]), vec3(c[1]), vec3(c[2])]),
        })
        .collect();
    let vertex_sets = doc
        .vertex_sets
        .into_iter()
        .map(|vs| VertexSet {
            albedo: vs.albedo.into_iter().map(vec3).collect(),
            roughness: vs.roughness,
            normal_offset: vs.normal_offset.into_iter().map(vec3).collect(),
        })
        .collect();
    let mut image_paths = Vec::new();
    let cameras = doc
        .cameras
        .into_iter()
        .map(|c| {
            image_paths.push(c.image);
            Camera {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
                rotation: Mat3::new(
                    c.rotation[0],
                    c.rotation[1],
                    c.rotation[2],
                    c.rotation[3],
                    c.rotation[4],
                    c.rotation[5],
                    c.rotation[6],
                    c.rotation[7],
                    c.rotation[8],
                ),
                translation: vec3(c.translation),
            }
        })
        .collect();
    let n = {
        let s: &Vec<GaussianSurfel> = &gaussians;
        s.len()
    };
    let scene = Scene {
        gaussians,
        vertex_sets,
        environment: EnvironmentMap::constant(1, 1, Vec3::zeros()),
        cameras,
        gt_images: vec![None; image_paths.len()],
    };
    let _ = n;
    Ok((scene, doc.environment, image_paths))
}

/// Loads a scene document and resolves its environment map and ground-truth
/// images relative to the document's directory.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    let (mut scene, env_path, image_paths) = scene_from_json(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    scene.environment = crate::envmap::load_environment(&dir.join(&env_path))?;
    scene.gt_images = image_paths
        .iter()
        .map(|p| match p {
            None => Ok(None),
            Some(p) => crate::imgio::load_image(&dir.join(p)).map(Some),
        })
        .collect::<Result<_>>()?;
    Ok(scene)
}

/// Writes a scene bundle: `scene.json`, the environment map, and any
/// ground-truth images, all into `dir`. Returns the scene file path.
pub fn save_scene(scene: &Scene, dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let env_name = "environment.f32";
    crate::imgio::write_f32_dump(&dir.join(env_name), &scene.environment.to_image())?;
    let mut image_paths = Vec::new();
    for (i, img) in scene.gt_images.iter().enumerate() {
        match img {
            None => image_paths.push(None),
            Some(img) => {
                let name = format!("gt_{i:03}.f32");
                crate::imgio::write_f32_dump(&dir.join(&name), img)?;
                image_paths.push(Some(name));
            }
        }
    }
    let json = scene_to_json(scene, env_name, &image_paths)?;
    let path = dir.join("scene.json");
    std::fs::write(&path, json)?;
    Ok(path)
}
