//! Differentiable screen-space splatting: perspective projection of
//! surfels, depth sorting, per-pixel tangent coordinates, fragment shading
//! via vertex interpolation, and front-to-back alpha blending into render
//! buffers.
//!
//! All buffers (color, depth, normal, albedo, roughness) are blended with
//! identical per-fragment weights `T_i * alpha_i` and are premultiplied by
//! accumulated alpha, i.e. not normalized.

use crate::camera::Camera;
use crate::scene::Scene;
use crate::tangent::{self, TangentCoords};
use crate::{Error, Mat2, Result, Vec2, Vec3};

pub use crate::rt::{ALPHA_CAP, ALPHA_SKIP};

/// Low-pass dilation added to the screen covariance diagonal, px^2.
pub const COV_DILATION: f64 = 0.3;
/// Bounding boxes cover three standard deviations of the screen Gaussian.
pub const BBOX_SIGMA: f64 = 3.0;
/// Blending stops once transmittance falls below this floor.
pub const BLEND_T_FLOOR: f64 = 1e-4;
/// Tangent-to-screen maps with a larger condition number are treated as
/// edge-on and culled.
pub const CONDITION_LIMIT: f64 = 1e8;
/// Default near-plane distance.
pub const NEAR_DEFAULT: f64 = 0.01;
/// Default cap on output pixels per render.
pub const MAX_PIXELS_DEFAULT: usize = 1 << 24;

const TILE: usize = 16;

/// A surfel after projection into one camera.
#[derive(Debug, Clone)]
pub struct ProjectedGaussian {
    /// Index of the source Gaussian in the scene.
    pub index: u32,
    /// Screen-space mean, pixels.
    pub mean: Vec2,
    /// Dilated screen covariance.
    pub cov: Mat2,
    pub cov_inv: Mat2,
    /// Inverse of the tangent-to-screen linear map.
    pub inv_jacobian: Mat2,
    /// Camera-space z of the center.
    pub depth: f64,
    /// Inclusive pixel bounds (x0, y0, x1, y1).
    pub bbox: [i64; 4],
    /// Radiance emitted toward the camera (radiance-mode fragment color).
    pub view_radiance: Vec3,
}

/// Which color the rasterizer blends.
#[derive(Clone, Copy)]
pub enum ColorSource<'a> {
    /// The surfel radiance field (pre-fit stage).
    Radiance,
    /// Shaded per-vertex colors, one `Vec` of M colors per Gaussian.
    VertexColors(&'a [Vec<Vec3>]),
}

#[derive(Debug, Clone, Copy)]
pub struct RasterizeOptions {
    pub near: f64,
    pub max_pixels: usize,
}

impl Default for RasterizeOptions {
    fn default() -> Self {
        Self {
            near: NEAR_DEFAULT,
            max_pixels: MAX_PIXELS_DEFAULT,
        }
    }
}

/// Per-pixel blended outputs of one rasterization pass.
#[derive(Debug, Clone)]
pub struct RenderBuffers {
    pub width: usize,
    pub height: usize,
    pub color: Vec<Vec3>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
    pub normal: Vec<Vec3>,
    pub albedo: Vec<Vec3>,
    pub roughness: Vec<f64>,
    /// Order-independent hash of the discrete rendering structure (which
    /// fragments contributed, which clamps were active). Two renders with
    /// the same signature took the same discrete branches, which makes
    /// finite differences across them trustworthy.
    pub signature: u64,
}

impl RenderBuffers {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            color: vec![Vec3::zeros(); width * height],
            alpha: vec![0.0; width * height],
            depth: vec![0.0; width * height],
            normal: vec![Vec3::zeros(); width * height],
            albedo: vec![Vec3::zeros(); width * height],
            roughness: vec![0.0; width * height],
            signature: 0,
        }
    }

    pub fn color_image(&self) -> crate::imgio::Image {
        crate::imgio::Image {
            width: self.width,
            height: self.height,
            data: self.color.clone(),
        }
    }

    pub fn albedo_image(&self) -> crate::imgio::Image {
        crate::imgio::Image {
            width: self.width,
            height: self.height,
            data: self.albedo.clone(),
        }
    }

    pub fn normal_image(&self) -> crate::imgio::Image {
        crate::imgio::Image {
            width: self.width,
            height: self.height,
            data: self.normal.clone(),
        }
    }

    pub fn roughness_image(&self) -> crate::imgio::Image {
        crate::imgio::Image {
            width: self.width,
            height: self.height,
            data: self.roughness.iter().map(|r| Vec3::new(*r, *r, *r)).collect(),
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Projects one surfel through a camera. Returns `None` (culled) when the
/// surfel is behind the near plane, edge-on beyond the conditioning limit,
/// or its 3-sigma footprint misses the image.
pub fn project_gaussian(
    g: &crate::scene::GaussianSurfel,
    camera: &Camera,
    index: u32,
    near: f64,
) -> Option<ProjectedGaussian> {
    let p_cam = camera.to_camera(g.position);
    let z = p_cam.z;
    if z <= near {
        return None;
    }
    // Affine (first-order) approximation of the perspective map at the
    // center: rows of the 2x3 pinhole Jacobian.
    let jr0 = Vec3::new(camera.fx / z, 0.0, -camera.fx * p_cam.x / (z * z));
    let jr1 = Vec3::new(0.0, camera.fy / z, -camera.fy * p_cam.y / (z * z));
    let (t1, t2) = g.tangent_axes();
    let c1 = camera.rotation * t1;
    let c2 = camera.rotation * t2;
    // Tangent-to-screen 2x2 linear map.
    let b = Mat2::new(jr0.dot(&c1), jr0.dot(&c2), jr1.dot(&c1), jr1.dot(&c2));
    if !b.iter().all(|v| v.is_finite()) {
        return None;
    }
    // Condition number via the closed-form singular values of a 2x2 map.
    let s1 = b.iter().map(|v| v * v).sum::<f64>();
    let det = b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(1, 0)];
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    let smax2 = (s1 + disc) / 2.0;
    let smin2 = (s1 - disc) / 2.0;
    if smin2 <= 0.0 || smax2 / smin2 > CONDITION_LIMIT * CONDITION_LIMIT {
        return None;
    }
    let m0 = Mat2::new(
        b[(0, 0)] * g.scale.x,
        b[(0, 1)] * g.scale.y,
        b[(1, 0)] * g.scale.x,
        b[(1, 1)] * g.scale.y,
    );
    let mut cov = m0 * m0.transpose();
    cov[(0, 0)] += COV_DILATION;
    cov[(1, 1)] += COV_DILATION;
    let cov_det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    let cov_inv = Mat2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / cov_det;

    let mean = camera.project_cam(p_cam);
    // 3-sigma radius from the largest covariance eigenvalue.
    let half_tr = (cov[(0, 0)] + cov[(1, 1)]) / 2.0;
    let eig_disc = ((cov[(0, 0)] - cov[(1, 1)]) / 2.0).hypot(cov[(0, 1)]);
    let radius = BBOX_SIGMA * (half_tr + eig_disc).max(0.0).sqrt();
    let x0 = (mean.x - radius).floor() as i64;
    let x1 = (mean.x + radius).ceil() as i64;
    let y0 = (mean.y - radius).floor() as i64;
    let y1 = (mean.y + radius).ceil() as i64;
    let (w, h) = (camera.width as i64, camera.height as i64);
    if x1 < 0 || y1 < 0 || x0 >= w || y0 >= h {
        return None;
    }
    let bbox = [x0.max(0), y0.max(0), x1.min(w - 1), y1.min(h - 1)];

    let view_dir = (g.position - camera.position()).normalize();
    Some(ProjectedGaussian {
        index,
        mean,
        cov,
        cov_inv,
        inv_jacobian: b.try_inverse()?,
        depth: z,
        bbox,
        view_radiance: g.radiance_toward(-view_dir),
    })
}

/// Gaussian-filtered opacity at a pixel: `o * exp(-d' cov_inv d / 2)`,
/// clamped to `[0, ALPHA_CAP]`.
pub fn fragment_weight(proj: &ProjectedGaussian, opacity: f64, pixel: Vec2) -> f64 {
    let d = pixel - proj.mean;
    let q = d.dot(&(proj.cov_inv * d));
    (opacity * (-0.5 * q).exp()).min(ALPHA_CAP)
}

/// Front-to-back alpha blending of ordered fragments. Returns the blended
/// value and the accumulated alpha `1 - prod(1 - alpha_i)`.
pub fn alpha_blend(fragments: &[(Vec3, f64)]) -> (Vec3, f64) {
    let mut out = Vec3::zeros();
    let mut t = 1.0f64;
    for (v, a) in fragments {
        out += v * (t * a);
        t *= 1.0 - a;
        if t < BLEND_T_FLOOR {
            break;
        }
    }
    (out, 1.0 - t)
}

/// One accepted fragment during the per-pixel walk.
pub(crate) struct Fragment {
    pub gauss: u32,
    pub alpha: f64,
    /// Transmittance before this fragment.
    pub t_before: f64,
    pub weights: [f64; 6],
    pub m: usize,
    pub color: Vec3,
    pub albedo: Vec3,
    pub albedo_clamped: [bool; 3],
    pub roughness: f64,
    pub rough_clamped: bool,
    /// Unnormalized shading normal (geometric normal plus rotated offset).
    pub normal_raw: Vec3,
    pub normal: Vec3,
    pub normal_fallback: bool,
    pub depth: f64,
}

/// Projection and binning state shared by the forward and backward passes.
pub(crate) struct RasterContext<'a> {
    pub scene: &'a Scene,
    pub projected: Vec<ProjectedGaussian>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    width: usize,
    height: usize,
}

impl<'a> RasterContext<'a> {
    pub fn new(scene: &'a Scene, camera: &Camera, opts: &RasterizeOptions) -> Result<Self> {
        let width = camera.width as usize;
        let height = camera.height as usize;
        if width * height > opts.max_pixels {
            return Err(Error::Resource(format!(
                "render of {width}x{height} exceeds the {} pixel limit",
                opts.max_pixels
            )));
        }
        let mut projected: Vec<ProjectedGaussian> = scene
            .gaussians
            .iter()
            .enumerate()
            .filter_map(|(i, g)| project_gaussian(g, camera, i as u32, opts.near))
            .collect();
        // Global front-to-back order by center depth, ties by index.
        projected.sort_unstable_by(|a, b| {
            a.depth
                .partial_cmp(&b.depth)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.index.cmp(&b.index))
        });
        let tiles_x = width.div_ceil(TILE);
        let tiles_y = height.div_ceil(TILE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (pi, p) in projected.iter().enumerate() {
            let tx0 = (p.bbox[0] as usize) / TILE;
            let tx1 = (p.bbox[2] as usize) / TILE;
            let ty0 = (p.bbox[1] as usize) / TILE;
            let ty1 = (p.bbox[3] as usize) / TILE;
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    tiles[ty * tiles_x + tx].push(pi as u32);
                }
            }
        }
        Ok(Self {
            scene,
            projected,
            tiles,
            tiles_x,
            width,
            height,
        })
    }

    /// Walks the accepted fragments of one pixel front to back, calling `f`
    /// for each. Returns `(final transmittance, signature contribution)`.
    pub fn for_each_fragment(
        &self,
        px: usize,
        py: usize,
        source: &ColorSource,
        mut f: impl FnMut(&Fragment),
    ) -> (f64, u64) {
        let pixel = Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
        let mut t = 1.0f64;
        let mut sig = 0u64;
        let tile = &self.tiles[(py / TILE) * self.tiles_x + px / TILE];
        for &pi in tile {
            let proj = &self.projected[pi as usize];
            let (x, y) = (px as i64, py as i64);
            if x < proj.bbox[0] || x > proj.bbox[2] || y < proj.bbox[1] || y > proj.bbox[3] {
                continue;
            }
            let gi = proj.index as usize;
            let alpha = fragment_weight(proj, self.scene.gaussians[gi].opacity, pixel);
            if alpha < ALPHA_SKIP {
                continue;
            }
            let uv = tangent::tangent_coords(
                pixel,
                proj.mean,
                &proj.inv_jacobian,
                self.scene.gaussians[gi].scale,
            )
            .expect("projection produced finite jacobian")
            .clamped();
            let vs = &self.scene.vertex_sets[gi];
            let m = vs.len();
            let (weights, _) = tangent::vertex_weights(m, uv).expect("validated vertex count");

            let mut albedo = Vec3::zeros();
            let mut rough = 0.0;
            let mut offset = Vec3::zeros();
            for k in 0..m {
                albedo += vs.albedo[k] * weights[k];
                rough += vs.roughness[k] * weights[k];
                offset += vs.normal_offset[k] * weights[k];
            }
            let albedo_clamped = [
                !(0.0..=1.0).contains(&albedo.x),
                !(0.0..=1.0).contains(&albedo.y),
                !(0.0..=1.0).contains(&albedo.z),
            ];
            let rough_clamped = !(crate::scene::ROUGHNESS_MIN..=1.0).contains(&rough);
            let albedo = Vec3::new(
                albedo.x.clamp(0.0, 1.0),
                albedo.y.clamp(0.0, 1.0),
                albedo.z.clamp(0.0, 1.0),
            );
            let rough = rough.clamp(crate::scene::ROUGHNESS_MIN, 1.0);

            let g = &self.scene.gaussians[gi];
            let ng = g.geometric_normal();
            let normal_raw = ng + g.rotation * offset;
            let nn = normal_raw.norm();
            let normal_fallback = nn < 1e-8;
            let normal = if normal_fallback { ng } else { normal_raw / nn };

            let color = match source {
                ColorSource::Radiance => proj.view_radiance,
                ColorSource::VertexColors(colors) => {
                    let cs = &colors[gi];
                    let mut c = Vec3::zeros();
                    for k in 0..m {
                        c += cs[k] * weights[k];
                    }
                    c
                }
            };

            let frag = Fragment {
                gauss: proj.index,
                alpha,
                t_before: t,
                weights,
                m,
                color,
                albedo,
                albedo_clamped,
                roughness: rough,
                rough_clamped,
                normal_raw,
                normal,
                normal_fallback,
                depth: proj.depth,
            };
            // Discrete signature: which fragment, whether alpha is capped,
            // which clamps fired.
            let flags = (u64::from(alpha >= ALPHA_CAP) << 1)
                | (u64::from(albedo_clamped[0]) << 2)
                | (u64::from(albedo_clamped[1]) << 3)
                | (u64::from(albedo_clamped[2]) << 4)
                | (u64::from(rough_clamped) << 5)
                | (u64::from(normal_fallback) << 6);
            sig = sig.wrapping_add(mix64(
                ((py * self.width + px) as u64) ^ ((proj.index as u64) << 24) ^ (flags << 56),
            ));
            f(&frag);
            t *= 1.0 - alpha;
            if t < BLEND_T_FLOOR {
                break;
            }
        }
        (t, sig)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Rasterizes the scene into per-pixel buffers. `source` selects the color
/// path: raw surfel radiance or shaded per-vertex colors; all other buffers
/// are blended from interpolated vertex attributes with the same weights.
///
/// Deterministic: identical inputs produce bit-identical buffers for any
/// worker count.
pub fn rasterize(
    scene: &Scene,
    camera: &Camera,
    source: ColorSource,
    opts: &RasterizeOptions,
) -> Result<RenderBuffers> {
    if let ColorSource::VertexColors(colors) = source {
        if colors.len() != scene.gaussians.len() {
            return Err(Error::InvalidParameter(format!(
                "vertex color list length {} does not match scene size {}",
                colors.len(),
                scene.gaussians.len()
            )));
        }
        for (i, (c, vs)) in colors.iter().zip(&scene.vertex_sets).enumerate() {
            if c.len() != vs.len() {
                return Err(Error::InvalidParameter(format!(
                    "gaussian {i}: {} vertex colors for {} vertices",
                    c.len(),
                    vs.len()
                )));
            }
        }
    }
    let ctx = RasterContext::new(scene, camera, opts)?;
    let (width, height) = (ctx.width, ctx.height);
    let mut buf = RenderBuffers::new(width, height);

    struct Band {
        color: Vec<Vec3>,
        alpha: Vec<f64>,
        depth: Vec<f64>,
        normal: Vec<Vec3>,
        albedo: Vec<Vec3>,
        roughness: Vec<f64>,
        signature: u64,
    }
    let bands = crate::par::row_bands(height);
    let outputs = crate::par::ordered_map(bands.len(), |bi| {
        let (y0, y1) = bands[bi];
        let rows = y1 - y0;
        let mut band = Band {
            color: vec![Vec3::zeros(); rows * width],
            alpha: vec![0.0; rows * width],
            depth: vec![0.0; rows * width],
            normal: vec![Vec3::zeros(); rows * width],
            albedo: vec![Vec3::zeros(); rows * width],
            roughness: vec![0.0; rows * width],
            signature: 0,
        };
        for y in y0..y1 {
            for x in 0..width {
                let o = (y - y0) * width + x;
                let (color, alpha, depth, normal, albedo, roughness) = (
                    &mut band.color[o],
                    &mut band.alpha[o],
                    &mut band.depth[o],
                    &mut band.normal[o],
                    &mut band.albedo[o],
                    &mut band.roughness[o],
                );
                let (t_final, sig) = ctx.for_each_fragment(x, y, &source, |f| {
                    let w = f.t_before * f.alpha;
                    *color += f.color * w;
                    *depth += f.depth * w;
                    *normal += f.normal * w;
                    *albedo += f.albedo * w;
                    *roughness += f.roughness * w;
                });
                *alpha = 1.0 - t_final;
                band.signature = band.signature.wrapping_add(sig);
            }
        }
        band
    });
    for (bi, band) in outputs.into_iter().enumerate() {
        let (y0, y1) = bands[bi];
        let o = y0 * width;
        let n = (y1 - y0) * width;
        buf.color[o..o + n].copy_from_slice(&band.color);
        buf.alpha[o..o + n].copy_from_slice(&band.alpha);
        buf.depth[o..o + n].copy_from_slice(&band.depth);
        buf.normal[o..o + n].copy_from_slice(&band.normal);
        buf.albedo[o..o + n].copy_from_slice(&band.albedo);
        buf.roughness[o..o + n].copy_from_slice(&band.roughness);
        buf.signature = buf.signature.wrapping_add(band.signature);
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::EnvironmentMap;
    use crate::scene::{GaussianSurfel, VertexSet};
    use crate::{UnitQuat, Vec2};
    use approx::assert_relative_eq;

    fn facing_surfel(z: f64, scale: (f64, f64), opacity: f64, radiance: Vec3) -> GaussianSurfel {
        GaussianSurfel {
            position: Vec3::new(0.0, 0.0, z),
            rotation: UnitQuat::identity(),
            scale: Vec2::new(scale.0, scale.1),
            opacity,
            radiance,
            radiance_dir: None,
        }
    }

    fn test_camera(w: u32, h: u32, f: f64, eye_z: f64) -> Camera {
        Camera::look_at(
            Vec3::new(0.0, 0.0, eye_z),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            f,
            f,
            w,
            h,
        )
    }

    fn scene_of(gaussians: Vec<GaussianSurfel>, m: usize) -> Scene {
        let n = gaussians.len();
        Scene {
            gaussians,
            vertex_sets: (0..n)
                .map(|_| VertexSet::constant(m, Vec3::new(0.5, 0.5, 0.5), 0.5, Vec3::zeros()))
                .collect(),
            environment: EnvironmentMap::constant(4, 2, Vec3::zeros()),
            cameras: Vec::new(),
            gt_images: Vec::new(),
        }
    }

    #[test]
    fn projection_matches_pinhole_closed_form() {
        // Fronto-parallel unit-scale surfel straight ahead: the screen
        // covariance is (f/z)^2 I + dilation, computed independently here.
        let f = 80.0;
        let z = 4.0;
        let cam = test_camera(64, 64, f, -z);
        let g = facing_surfel(0.0, (1.0, 1.0), 1.0, Vec3::zeros());
        let p = project_gaussian(&g, &cam, 0, NEAR_DEFAULT).unwrap();
        let expect = (f / z) * (f / z);
        assert_relative_eq!(p.depth, z, epsilon = 1e-12);
        assert_relative_eq!(p.cov[(0, 0)], expect + COV_DILATION, epsilon = 1e-9);
        assert_relative_eq!(p.cov[(1, 1)], expect + COV_DILATION, epsilon = 1e-9);
        assert!(p.cov[(0, 1)].abs() < 1e-9);
        assert_relative_eq!(p.mean, Vec2::new(32.0, 32.0), epsilon = 1e-9);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = test_camera(64, 64, 80.0, -4.0);
        let g = facing_surfel(-8.0, (1.0, 1.0), 1.0, Vec3::zeros());
        assert!(project_gaussian(&g, &cam, 0, NEAR_DEFAULT).is_none());
    }

    #[test]
    fn edge_on_is_culled() {
        let cam = test_camera(64, 64, 80.0, -4.0);
        // Normal perpendicular to the view direction: the tangent plane
        // contains the view axis and the tangent-to-screen map degenerates.
        let g = GaussianSurfel {
            position: Vec3::zeros(),
            rotation: UnitQuat::from_axis_angle(&Vec3::x_axis(), std::f64::consts::FRAC_PI_2),
            scale: Vec2::new(1.0, 1.0),
            opacity: 1.0,
            radiance: Vec3::zeros(),
            radiance_dir: None,
        };
        assert!(project_gaussian(&g, &cam, 0, NEAR_DEFAULT).is_none());
    }

    #[test]
    fn offscreen_is_culled() {
        let cam = test_camera(64, 64, 80.0, -4.0);
        let g = GaussianSurfel {
            position: Vec3::new(100.0, 0.0, 0.0),
            ..facing_surfel(0.0, (0.1, 0.1), 1.0, Vec3::zeros())
        };
        assert!(project_gaussian(&g, &cam, 0, NEAR_DEFAULT).is_none());
    }

    #[test]
    fn fragment_weight_cases() {
        let cam = test_camera(64, 64, 80.0, -4.0);
        let g = facing_surfel(0.0, (1.0, 1.0), 1.0, Vec3::zeros());
        let p = project_gaussian(&g, &cam, 0, NEAR_DEFAULT).unwrap();
        // At the mean with opacity 1 the weight caps at 0.999.
        assert_eq!(fragment_weight(&p, 1.0, p.mean), ALPHA_CAP);
        // Mahalanobis distance 2 along the first eigenvector.
        let sigma = p.cov[(0, 0)].sqrt();
        let px = p.mean + Vec2::new(2.0 * sigma, 0.0);
        assert_relative_eq!(fragment_weight(&p, 1.0, px), (-2.0f64).exp(), epsilon = 1e-9);
        // Zero opacity yields zero.
        assert_eq!(fragment_weight(&p, 0.0, p.mean), 0.0);
    }

    #[test]
    fn alpha_blend_cases() {
        let c = Vec3::new(0.2, 0.4, 0.8);
        let (v, a) = alpha_blend(&[(c, 0.999)]);
        assert_relative_eq!(v, c * 0.999, epsilon = 1e-12);
        assert_relative_eq!(a, 0.999, epsilon = 1e-12);

        let (v, a) = alpha_blend(&[
            (Vec3::new(1.0, 0.0, 0.0), 0.5),
            (Vec3::new(0.0, 1.0, 0.0), 0.999),
        ]);
        assert_relative_eq!(v, Vec3::new(0.5, 0.4995, 0.0), epsilon = 1e-12);
        assert_relative_eq!(a, 1.0 - 0.5 * 0.001, epsilon = 1e-12);

        let (v, a) = alpha_blend(&[]);
        assert_eq!(v, Vec3::zeros());
        assert_eq!(a, 0.0);
    }

    #[test]
    fn blend_is_linear_in_values() {
        let alphas = [0.3, 0.7, 0.2, 0.9];
        let v: Vec<Vec3> = (0..4).map(|i| Vec3::repeat(i as f64 * 0.2 + 0.1)).collect();
        let w: Vec<Vec3> = (0..4).map(|i| Vec3::repeat(0.8 - i as f64 * 0.1)).collect();
        let fv: Vec<_> = v.iter().zip(alphas).map(|(x, a)| (*x, a)).collect();
        let fw: Vec<_> = w.iter().zip(alphas).map(|(x, a)| (*x, a)).collect();
        let fvw: Vec<_> = v
            .iter()
            .zip(&w)
            .zip(alphas)
            .map(|((x, y), a)| (x + y, a))
            .collect();
        let sum = alpha_blend(&fv).0 + alpha_blend(&fw).0;
        assert!((alpha_blend(&fvw).0 - sum).norm() < 1e-6);
    }

    #[test]
    fn transmittance_never_increases() {
        let alphas = [0.1, 0.5, 0.05, 0.9, 0.3];
        let mut t = 1.0;
        for a in alphas {
            let next = t * (1.0 - a);
            assert!(next <= t);
            t = next;
        }
        assert!((0.0..=1.0).contains(&t));
    }

    #[test]
    fn full_opacity_surfel_covers_frame() {
        let cam = test_camera(32, 32, 40.0, -2.0);
        let c = Vec3::new(0.3, 0.6, 0.9);
        let scene = scene_of(vec![facing_surfel(0.0, (3.0, 3.0), 1.0, c)], 4);
        let buf = rasterize(&scene, &cam, ColorSource::Radiance, &RasterizeOptions::default()).unwrap();
        // Center pixel sits well inside the footprint.
        let center = buf.color[16 * 32 + 16];
        assert_relative_eq!(center, c * ALPHA_CAP, epsilon = 1e-6);
        assert!(buf.alpha[16 * 32 + 16] > 0.99);
    }

    #[test]
    fn m1_and_constant_m4_match() {
        let cam = test_camera(48, 48, 60.0, -3.0);
        let g = facing_surfel(0.0, (1.0, 1.0), 0.8, Vec3::new(0.2, 0.5, 0.7));
        let s1 = scene_of(vec![g.clone()], 1);
        let s4 = scene_of(vec![g], 4);
        let colors1 = vec![vec![Vec3::new(0.9, 0.1, 0.4)]];
        let colors4 = vec![vec![Vec3::new(0.9, 0.1, 0.4); 4]];
        let b1 = rasterize(&s1, &cam, ColorSource::VertexColors(&colors1), &RasterizeOptions::default()).unwrap();
        let b4 = rasterize(&s4, &cam, ColorSource::VertexColors(&colors4), &RasterizeOptions::default()).unwrap();
        for (a, b) in b1.color.iter().zip(&b4.color) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn occlusion_order_matches_bruteforce_blend() {
        // Two overlapping surfels; verify a handful of pixels against an
        // independently computed per-pixel blend.
        let cam = test_camera(32, 32, 40.0, -4.0);
        let front = facing_surfel(-1.0, (1.0, 1.0), 0.7, Vec3::new(1.0, 0.0, 0.0));
        let back = facing_surfel(1.0, (2.0, 2.0), 0.9, Vec3::new(0.0, 1.0, 0.0));
        let scene = scene_of(vec![back.clone(), front.clone()], 1);
        let buf = rasterize(&scene, &cam, ColorSource::Radiance, &RasterizeOptions::default()).unwrap();

        let pf = project_gaussian(&front, &cam, 0, NEAR_DEFAULT).unwrap();
        let pb = project_gaussian(&back, &cam, 0, NEAR_DEFAULT).unwrap();
        for (x, y) in [(16, 16), (12, 18), (20, 10)] {
            let pixel = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let af = fragment_weight(&pf, 0.7, pixel);
            let ab = fragment_weight(&pb, 0.9, pixel);
            let mut frags = Vec::new();
            if af >= ALPHA_SKIP {
                frags.push((Vec3::new(1.0, 0.0, 0.0), af));
            }
            if ab >= ALPHA_SKIP {
                frags.push((Vec3::new(0.0, 1.0, 0.0), ab));
            }
            let (want, want_a) = alpha_blend(&frags);
            let got = buf.color[y * 32 + x];
            assert!((got - want).norm() < 1e-12, "pixel ({x},{y})");
            assert!((buf.alpha[y * 32 + x] - want_a).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_opacity_renders_background() {
        let cam = test_camera(32, 32, 40.0, -2.0);
        let mut scene = scene_of(vec![facing_surfel(0.0, (3.0, 3.0), 1.0, Vec3::repeat(1.0))], 4);
        scene.gaussians[0].opacity = 0.0;
        let buf = rasterize(&scene, &cam, ColorSource::Radiance, &RasterizeOptions::default()).unwrap();
        assert!(buf.color.iter().all(|c| *c == Vec3::zeros()));
        assert!(buf.alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn rasterize_is_deterministic() {
        let cam = test_camera(64, 48, 70.0, -3.0);
        let mut gs = Vec::new();
        for i in 0..20 {
            let mut g = facing_surfel(
                (i as f64) * 0.05 - 0.5,
                (0.3, 0.5),
                0.3 + 0.03 * i as f64,
                Vec3::new(0.1 * i as f64 % 1.0, 0.5, 0.9),
            );
            g.position.x = (i as f64 * 0.37) % 2.0 - 1.0;
            g.position.y = (i as f64 * 0.73) % 2.0 - 1.0;
            gs.push(g);
        }
        let scene = scene_of(gs, 4);
        let a = rasterize(&scene, &cam, ColorSource::Radiance, &RasterizeOptions::default()).unwrap();
        let b = rasterize(&scene, &cam, ColorSource::Radiance, &RasterizeOptions::default()).unwrap();
        assert_eq!(a.signature, b.signature);
        for (x, y) in a.color.iter().zip(&b.color) {
            assert_eq!(x.x.to_bits(), y.x.to_bits());
            assert_eq!(x.y.to_bits(), y.y.to_bits());
            assert_eq!(x.z.to_bits(), y.z.to_bits());
        }
        for (x, y) in a.depth.iter().zip(&b.depth) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn absurd_resolution_is_resource_error() {
        let mut cam = test_camera(32, 32, 40.0, -2.0);
        cam.width = 1 << 15;
        cam.height = 1 << 15;
        cam.cx = (1 << 14) as f64;
        cam.cy = (1 << 14) as f64;
        let scene = scene_of(vec![facing_surfel(0.0, (1.0, 1.0), 1.0, Vec3::zeros())], 4);
        match rasterize(&scene, &cam, ColorSource::Radiance, &RasterizeOptions::default()) {
            Err(Error::Resource(_)) => {}
            other => panic!("expected resource error, got {other:?}"),
        }
    }
}
