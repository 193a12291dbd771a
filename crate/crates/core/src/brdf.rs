//! BRDF evaluation and Gaussian-vertex shading.
//!
//! The reflectance model is Lambertian diffuse plus a GGX specular lobe
//! with Smith height-correlated shadowing and Schlick Fresnel, using the
//! alpha = roughness^2 remapping. Outgoing radiance at a vertex is a
//! uniform-hemisphere Monte Carlo estimate of the rendering equation over
//! the baked per-Gaussian incoming-radiance samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envmap::EnvironmentMap;
use crate::rt::MicroBuffer;
use crate::{Error, Result, Vec3};

/// Default specular base reflectance.
pub const F0_DEFAULT: f64 = 0.04;

/// Default number of hemisphere samples per Gaussian.
pub const K_DEFAULT: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct BrdfParams {
    /// RGB albedo in [0, 1].
    pub albedo: Vec3,
    /// Roughness in [ROUGHNESS_MIN, 1].
    pub roughness: f64,
    /// Specular base reflectance.
    pub f0: f64,
}

impl BrdfParams {
    pub fn new(albedo: Vec3, roughness: f64) -> Self {
        Self {
            albedo,
            roughness,
            f0: F0_DEFAULT,
        }
    }
}

/// `K` uniform upper-hemisphere directions with their constant pdf.
#[derive(Debug, Clone)]
pub struct HemisphereSamples {
    pub dirs: Vec<Vec3>,
    /// 1 / (2 pi) for every direction.
    pub pdf: f64,
}

/// Branchless orthonormal basis completion: two unit tangents
/// perpendicular to the unit vector `n`.
pub fn orthonormal_basis(n: Vec3) -> (Vec3, Vec3) {
    let sign = 1.0f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t1 = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let t2 = Vec3::new(b, sign + n.y * n.y * a, -n.y);
    (t1, t2)
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable derived seed stream: the same `(seed, index)` always yields the
/// same value, independent of call order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(1)))
}

/// Draws `k` directions uniformly distributed over the upper hemisphere of
/// `normal` (area-uniform, pdf 1/(2 pi)); deterministic per seed.
pub fn sample_hemisphere(normal: Vec3, k: usize, seed: u64) -> Result<HemisphereSamples> {
    if k == 0 {
        return Err(Error::InvalidParameter("sample count K must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t1, t2) = orthonormal_basis(normal);
    let mut dirs = Vec::with_capacity(k);
    for _ in 0..k {
        let z: f64 = rng.random();
        let phi: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let r = (1.0 - z * z).max(0.0).sqrt();
        dirs.push(t1 * (r * phi.cos()) + t2 * (r * phi.sin()) + normal * z);
    }
    Ok(HemisphereSamples {
        dirs,
        pdf: 1.0 / (2.0 * std::f64::consts::PI),
    })
}

/// BRDF value for incident `wi` and outgoing `wo` around shading normal
/// `n`; zero below the horizon on either side.
pub fn brdf_eval(p: &BrdfParams, n: Vec3, wi: Vec3, wo: Vec3) -> Vec3 {
    eval_parts(p, n, wi, wo).value
}

/// BRDF value together with its derivatives with respect to albedo (per
/// channel), roughness, and the shading normal.
pub struct BrdfEval {
    pub value: Vec3,
    /// d value_c / d albedo_c; cross-channel terms are zero.
    pub d_albedo: f64,
    /// d specular / d roughness (identical for all channels).
    pub d_roughness: f64,
    /// d specular / d n (identical for all channels; the diffuse term does
    /// not depend on n apart from the horizon gate).
    pub d_normal: Vec3,
    /// Whether the horizon gates passed (false means value and derivatives
    /// are all zero).
    pub lit: bool,
}

pub fn eval_parts(p: &BrdfParams, n: Vec3, wi: Vec3, wo: Vec3) -> BrdfEval {
    let ci = n.dot(&wi);
    let co = n.dot(&wo);
    if ci <= 0.0 || co <= 0.0 {
        return BrdfEval {
            value: Vec3::zeros(),
            d_albedo: 0.0,
            d_roughness: 0.0,
            d_normal: Vec3::zeros(),
            lit: false,
        };
    }
    let inv_pi = std::f64::consts::FRAC_1_PI;

    let hv = wi + wo;
    let hn = hv.norm();
    if hn < 1e-12 {
        // wi == -wo cannot pass both gates; zero-specular fallback.
        return BrdfEval {
            value: p.albedo * inv_pi,
            d_albedo: inv_pi,
            d_roughness: 0.0,
            d_normal: Vec3::zeros(),
            lit: true,
        };
    }
    let h = hv / hn;
    let ch = n.dot(&h).clamp(-1.0, 1.0);

    let alpha = p.roughness * p.roughness;
    let a2 = alpha * alpha;
    let k = ch * ch * (a2 - 1.0) + 1.0;
    let pi_k3 = std::f64::consts::PI * k * k * k;
    let d = a2 / (std::f64::consts::PI * k * k);
    let dd_dalpha = 2.0 * alpha * (k - 2.0 * a2 * ch * ch) / pi_k3;
    let dd_dch = -4.0 * a2 * ch * (a2 - 1.0) / pi_k3;

    // Smith height-correlated visibility via the Lambda form; returns
    // (lambda, d/d alpha, d/d c).
    let lambda = |c: f64| -> (f64, f64, f64) {
        let c2 = c * c;
        let t = (1.0 - c2) / c2;
        let s = (1.0 + a2 * t).sqrt();
        let l = (s - 1.0) / 2.0;
        let dl_dalpha = alpha * t / (2.0 * s);
        let dl_dc = -a2 / (2.0 * c2 * c * s);
        (l, dl_dalpha, dl_dc)
    };
    let (li, dli_dalpha, dli_dci) = lambda(ci);
    let (lo, dlo_dalpha, dlo_dco) = lambda(co);
    let gdenom = 1.0 + li + lo;
    let g = 1.0 / gdenom;
    let dg_dalpha = -(dli_dalpha + dlo_dalpha) / (gdenom * gdenom);
    let dg_dci = -dli_dci / (gdenom * gdenom);
    let dg_dco = -dlo_dco / (gdenom * gdenom);

    let u = h.dot(&wo).clamp(0.0, 1.0);
    let fr = p.f0 + (1.0 - p.f0) * (1.0 - u).powi(5);

    let denom = 4.0 * ci * co;
    let spec = d * fr * g / denom;

    let dspec_dalpha = fr * (dd_dalpha * g + d * dg_dalpha) / denom;
    let dspec_dr = dspec_dalpha * 2.0 * p.roughness;

    let dspec_dci = fr * (d * dg_dci / denom - d * g / (denom * ci));
    let dspec_dco = fr * (d * dg_dco / denom - d * g / (denom * co));
    let dspec_dch = fr * dd_dch * g / denom;
    let dspec_dn = wi * dspec_dci + wo * dspec_dco + h * dspec_dch;

    BrdfEval {
        value: p.albedo * inv_pi + Vec3::new(spec, spec, spec),
        d_albedo: inv_pi,
        d_roughness: dspec_dr,
        d_normal: dspec_dn,
        lit: true,
    }
}

/// Incoming radiance along one baked sample: environment radiance gated by
/// visibility plus the baked indirect term.
pub fn incoming_radiance(dir: Vec3, vis: u8, l_ind: Vec3, env: &EnvironmentMap) -> Vec3 {
    env.sample(dir) * (vis as f64) + l_ind
}

/// Monte Carlo estimate of outgoing radiance for one shaded vertex:
/// `(2 pi / K) * sum_k f(wk, wo) * L_k * max(0, wk . n)`.
///
/// `incoming` yields the per-sample incoming radiance aligned with `dirs`.
pub fn shade_estimate(
    p: &BrdfParams,
    n: Vec3,
    wo: Vec3,
    dirs: &[Vec3],
    mut incoming: impl FnMut(usize) -> Vec3,
) -> Vec3 {
    let k = dirs.len();
    let mut sum = Vec3::zeros();
    for (idx, wk) in dirs.iter().enumerate() {
        let cos = wk.dot(&n);
        if cos <= 0.0 {
            continue;
        }
        let e = eval_parts(p, n, *wk, wo);
        if !e.lit {
            continue;
        }
        let li = incoming(idx);
        sum += e.value.component_mul(&li) * cos;
    }
    sum * (2.0 * std::f64::consts::PI / k as f64)
}

/// Gradient bundle for [`shade_with_grad`].
pub struct ShadeGrad {
    pub value: Vec3,
    /// d value_c / d albedo_c.
    pub d_albedo: Vec3,
    /// d value_c / d roughness.
    pub d_roughness: Vec3,
    /// Rows are channels: d value_c / d n.
    pub d_normal: [Vec3; 3],
    /// Number of samples passing the horizon gates; part of the discrete
    /// signature used to detect non-differentiable finite-difference steps.
    pub lit_count: u64,
}

/// [`shade_estimate`] plus derivatives with respect to the vertex albedo,
/// roughness, and shading normal.
pub fn shade_with_grad(
    p: &BrdfParams,
    n: Vec3,
    wo: Vec3,
    dirs: &[Vec3],
    mut incoming: impl FnMut(usize) -> Vec3,
) -> ShadeGrad {
    let k = dirs.len();
    let scale = 2.0 * std::f64::consts::PI / k as f64;
    let mut value = Vec3::zeros();
    let mut d_albedo = Vec3::zeros();
    let mut d_roughness = Vec3::zeros();
    let mut d_normal = [Vec3::zeros(); 3];
    let mut lit_count = 0u64;
    for (idx, wk) in dirs.iter().enumerate() {
        let cos = wk.dot(&n);
        if cos <= 0.0 {
            continue;
        }
        let e = eval_parts(p, n, *wk, wo);
        if !e.lit {
            continue;
        }
        lit_count += 1;
        let li = incoming(idx);
        value += e.value.component_mul(&li) * cos;
        d_albedo += li * (e.d_albedo * cos);
        d_roughness += li * (e.d_roughness * cos);
        for c in 0..3 {
            // d/dn of f_c * cos is d_normal * cos + f_c * wk.
            d_normal[c] += (e.d_normal * cos + *wk * e.value[c]) * li[c];
        }
    }
    ShadeGrad {
        value: value * scale,
        d_albedo: d_albedo * scale,
        d_roughness: d_roughness * scale,
        d_normal: [d_normal[0] * scale, d_normal[1] * scale, d_normal[2] * scale],
        lit_count,
    }
}

/// Shades one Gaussian vertex from its baked micro-buffer under `env`.
pub fn vertex_shade(
    p: &BrdfParams,
    n: Vec3,
    micro: &MicroBuffer,
    env: &EnvironmentMap,
    wo: Vec3,
) -> Result<Vec3> {
    if micro.records.is_empty() {
        return Err(Error::InvalidState("micro-buffer has no samples".into()));
    }
    let dirs: Vec<Vec3> = micro.records.iter().map(|r| r.dir).collect();
    Ok(shade_estimate(p, n, wo, &dirs, |i| {
        let r = &micro.records[i];
        incoming_radiance(r.dir, r.vis, r.l_ind, env)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rt::MicroRecord;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(v: Vec3) -> Vec3 {
        v.normalize()
    }

    #[test]
    fn below_horizon_is_black() {
        let p = BrdfParams::new(Vec3::new(0.5, 0.5, 0.5), 0.5);
        let n = Vec3::z();
        let wi = unit(Vec3::new(0.2, 0.0, -1.0));
        let wo = unit(Vec3::new(0.0, 0.1, 1.0));
        assert_eq!(brdf_eval(&p, n, wi, wo), Vec3::zeros());
        assert_eq!(brdf_eval(&p, n, wo, wi), Vec3::zeros());
    }

    #[test]
    fn diffuse_term_is_albedo_over_pi() {
        // The specular scalar is identical across channels, so channel
        // differences isolate the Lambertian part.
        let p = BrdfParams::new(Vec3::new(0.5, 0.25, 0.0), 0.7);
        let n = Vec3::z();
        let wi = unit(Vec3::new(0.3, -0.2, 0.8));
        let wo = unit(Vec3::new(-0.1, 0.4, 0.9));
        let v = brdf_eval(&p, n, wi, wo);
        assert_relative_eq!(v.x - v.z, 0.5 / std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(v.y - v.z, 0.25 / std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn ggx_peak_matches_closed_form() {
        // D at h = n equals 1 / (pi alpha^2) with alpha = r^2.
        let r: f64 = 0.5;
        let alpha = r * r;
        let p = BrdfParams::new(Vec3::zeros(), r);
        let n = Vec3::z();
        // Symmetric directions make the half-vector equal to n.
        let wi = unit(Vec3::new(0.3, 0.0, 1.0));
        let wo = unit(Vec3::new(-0.3, 0.0, 1.0));
        let v = brdf_eval(&p, n, wi, wo);
        let ci = n.dot(&wi);
        // Recover D from the specular value by dividing out F, G, denom.
        let c2 = ci * ci;
        let t = (1.0 - c2) / c2;
        let lambda = ((1.0 + alpha * alpha * t).sqrt() - 1.0) / 2.0;
        let g = 1.0 / (1.0 + 2.0 * lambda);
        let u = unit(wi + wo).dot(&wo);
        let fr = 0.04 + 0.96 * (1.0 - u).powi(5);
        let d = v.x * 4.0 * ci * ci / (fr * g);
        assert_relative_eq!(d, 1.0 / (std::f64::consts::PI * alpha * alpha), epsilon = 1e-9);
        assert_relative_eq!(d, 1.0 / (std::f64::consts::PI * r.powi(4)), epsilon = 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let n0 = unit(Vec3::new(0.1, -0.2, 1.0));
        let wi = unit(Vec3::new(0.4, 0.3, 0.9));
        let wo = unit(Vec3::new(-0.2, 0.1, 1.1));
        let base = BrdfParams::new(Vec3::new(0.3, 0.5, 0.7), 0.4);
        let h = 1e-6;

        let e = eval_parts(&base, n0, wi, wo);
        assert!(e.lit);

        let mut pa = base;
        pa.roughness += h;
        let mut pb = base;
        pb.roughness -= h;
        let fd_r = (brdf_eval(&pa, n0, wi, wo).x - brdf_eval(&pb, n0, wi, wo).x) / (2.0 * h);
        assert_relative_eq!(e.d_roughness, fd_r, max_relative = 1e-5);

        let mut aa = base;
        aa.albedo.y += h;
        let fd_a = (brdf_eval(&aa, n0, wi, wo).y - brdf_eval(&base, n0, wi, wo).y) / h;
        assert_relative_eq!(e.d_albedo, fd_a, max_relative = 1e-6);

        // eval_parts treats n as a free 3-vector, so perturb unnormalized.
        for axis in 0..3 {
            let mut np = n0;
            np[axis] += h;
            let mut nm = n0;
            nm[axis] -= h;
            let fd_n = (brdf_eval(&base, np, wi, wo).x - brdf_eval(&base, nm, wi, wo).x) / (2.0 * h);
            assert_relative_eq!(e.d_normal[axis], fd_n, max_relative = 1e-4, epsilon = 1e-9);
        }
    }

    #[test]
    fn hemisphere_sampling_is_deterministic_and_valid() {
        let n = unit(Vec3::new(0.3, 0.4, 0.86));
        let s1 = sample_hemisphere(n, 64, 7).unwrap();
        let s2 = sample_hemisphere(n, 64, 7).unwrap();
        assert_eq!(s1.dirs.len(), 64);
        for (a, b) in s1.dirs.iter().zip(&s2.dirs) {
            assert_eq!(a, b);
        }
        for d in &s1.dirs {
            assert!(d.dot(&n) >= 0.0);
            assert!((d.norm() - 1.0).abs() < 1e-6);
        }
        assert_relative_eq!(s1.pdf, 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-15);
    }

    #[test]
    fn hemisphere_zero_samples_rejected() {
        assert!(sample_hemisphere(Vec3::z(), 0, 1).is_err());
    }

    #[test]
    fn hemisphere_cosine_mean_matches_analytic() {
        // E[w . n] over the uniform hemisphere is 1/2.
        let n = unit(Vec3::new(-0.5, 0.2, 0.9));
        let s = sample_hemisphere(n, 100_000, 123).unwrap();
        let mean: f64 = s.dirs.iter().map(|d| d.dot(&n)).sum::<f64>() / s.dirs.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn incoming_radiance_cases() {
        let black = EnvironmentMap::constant(4, 2, Vec3::zeros());
        let lit = EnvironmentMap::constant(4, 2, Vec3::new(1.0, 1.0, 1.0));
        let d = Vec3::z();
        assert_eq!(
            incoming_radiance(d, 1, Vec3::new(0.2, 0.0, 0.0), &black),
            Vec3::new(0.2, 0.0, 0.0)
        );
        assert_eq!(incoming_radiance(d, 0, Vec3::zeros(), &lit), Vec3::zeros());
        assert_relative_eq!(
            incoming_radiance(d, 1, Vec3::new(0.1, 0.1, 0.1), &lit),
            Vec3::new(1.1, 1.1, 1.1),
            epsilon = 1e-12
        );
    }

    fn full_vis_buffer(n: Vec3, k: usize, seed: u64) -> MicroBuffer {
        let dirs = sample_hemisphere(n, k, seed).unwrap().dirs;
        MicroBuffer {
            records: dirs
                .into_iter()
                .map(|dir| MicroRecord {
                    dir,
                    l_ind: Vec3::zeros(),
                    trans: 1.0,
                    vis: 1,
                    hit: u32::MAX,
                    uv: crate::tangent::TangentCoords { u: 0.0, v: 0.0 },
                })
                .collect(),
        }
    }

    #[test]
    fn furnace_recovers_albedo() {
        // Lambertian vertex under a constant unit environment integrates to
        // its albedo.
        let albedo = Vec3::new(0.8, 0.8, 0.8);
        let p = BrdfParams {
            albedo,
            roughness: 1.0,
            f0: 0.0,
        };
        let n = Vec3::z();
        let micro = full_vis_buffer(n, 4096, 42);
        let env = EnvironmentMap::constant(8, 4, Vec3::new(1.0, 1.0, 1.0));
        let v = vertex_shade(&p, n, &micro, &env, Vec3::z()).unwrap();
        for c in 0..3 {
            assert!((v[c] - 0.8).abs() < 0.8 * 0.02, "channel {c}: {}", v[c]);
        }
    }

    #[test]
    fn shade_black_when_occluded_everywhere() {
        let mut micro = full_vis_buffer(Vec3::z(), 64, 3);
        for r in &mut micro.records {
            r.vis = 0;
        }
        let p = BrdfParams::new(Vec3::new(0.5, 0.5, 0.5), 0.3);
        let env = EnvironmentMap::constant(4, 2, Vec3::new(2.0, 2.0, 2.0));
        let v = vertex_shade(&p, Vec3::z(), &micro, &env, Vec3::z()).unwrap();
        assert_eq!(v, Vec3::zeros());
    }

    #[test]
    fn shade_black_for_black_body() {
        let micro = full_vis_buffer(Vec3::z(), 64, 3);
        let p = BrdfParams {
            albedo: Vec3::zeros(),
            roughness: 0.5,
            f0: 0.0,
        };
        let env = EnvironmentMap::constant(4, 2, Vec3::new(1.0, 1.0, 1.0));
        let v = vertex_shade(&p, Vec3::z(), &micro, &env, Vec3::z()).unwrap();
        assert_eq!(v, Vec3::zeros());
    }

    #[test]
    fn empty_micro_buffer_is_invalid_state() {
        let micro = MicroBuffer { records: vec![] };
        let p = BrdfParams::new(Vec3::new(0.5, 0.5, 0.5), 0.5);
        let env = EnvironmentMap::constant(4, 2, Vec3::zeros());
        assert!(vertex_shade(&p, Vec3::z(), &micro, &env, Vec3::z()).is_err());
    }

    #[test]
    fn shade_linear_in_environment() {
        let n = Vec3::z();
        let micro = full_vis_buffer(n, 256, 11);
        let p = BrdfParams::new(Vec3::new(0.4, 0.6, 0.2), 0.3);
        let e1 = EnvironmentMap::constant(4, 2, Vec3::new(0.5, 1.0, 2.0));
        let e2 = EnvironmentMap::constant(4, 2, Vec3::new(1.5, 3.0, 6.0));
        let wo = unit(Vec3::new(0.1, 0.0, 1.0));
        let v1 = vertex_shade(&p, n, &micro, &e1, wo).unwrap();
        let v2 = vertex_shade(&p, n, &micro, &e2, wo).unwrap();
        assert_relative_eq!(v2, v1 * 3.0, epsilon = 1e-9);
    }

    #[test]
    fn white_furnace_energy_bound() {
        // Hemisphere integral of f cos at albedo 1 stays near or below 1
        // for any roughness (small MC slack allowed).
        let n = Vec3::z();
        let dirs = sample_hemisphere(n, 100_000, 5).unwrap().dirs;
        for r in [0.04, 0.2, 0.5, 1.0] {
            let p = BrdfParams::new(Vec3::new(1.0, 1.0, 1.0), r);
            let wo = unit(Vec3::new(0.2, -0.1, 0.8));
            let est = shade_estimate(&p, n, wo, &dirs, |_| Vec3::new(1.0, 1.0, 1.0));
            for c in 0..3 {
                assert!(est[c] <= 1.05, "roughness {r} channel {c}: {}", est[c]);
            }
        }
    }

    #[test]
    fn shade_grad_matches_value_path() {
        let n = unit(Vec3::new(0.1, 0.2, 1.0));
        let dirs = sample_hemisphere(n, 128, 17).unwrap().dirs;
        let p = BrdfParams::new(Vec3::new(0.3, 0.6, 0.9), 0.35);
        let wo = unit(Vec3::new(0.0, -0.3, 1.0));
        let li = Vec3::new(0.8, 1.2, 0.4);
        let g = shade_with_grad(&p, n, wo, &dirs, |_| li);
        let v = shade_estimate(&p, n, wo, &dirs, |_| li);
        assert_eq!(g.value, v);
        assert!(g.lit_count > 0);
    }

    proptest! {
        // Helmholtz reciprocity.
        #[test]
        fn reciprocity(ax in -1.0f64..1.0, ay in -1.0f64..1.0,
                       bx in -1.0f64..1.0, by in -1.0f64..1.0,
                       r in 0.04f64..1.0) {
            let n = Vec3::z();
            let wi = unit(Vec3::new(ax, ay, 1.0));
            let wo = unit(Vec3::new(bx, by, 1.0));
            let p = BrdfParams::new(Vec3::new(0.25, 0.5, 0.75), r);
            let f1 = brdf_eval(&p, n, wi, wo);
            let f2 = brdf_eval(&p, n, wo, wi);
            prop_assert!((f1 - f2).norm() < 1e-9);
        }

        // Monotone in albedo, specular held fixed.
        #[test]
        fn monotone_in_albedo(a in 0.0f64..0.9, bump in 0.01f64..0.1, r in 0.04f64..1.0) {
            let n = Vec3::z();
            let wi = unit(Vec3::new(0.3, 0.1, 0.8));
            let wo = unit(Vec3::new(-0.2, 0.25, 0.9));
            let lo = BrdfParams::new(Vec3::new(a, a, a), r);
            let hi = BrdfParams::new(Vec3::new(a + bump, a + bump, a + bump), r);
            let f_lo = brdf_eval(&lo, n, wi, wo);
            let f_hi = brdf_eval(&hi, n, wi, wo);
            for c in 0..3 {
                prop_assert!(f_hi[c] >= f_lo[c]);
            }
        }

        // Non-negative and finite everywhere above the horizon.
        #[test]
        fn finite_and_nonnegative(ax in -1.0f64..1.0, ay in -1.0f64..1.0,
                                  bx in -1.0f64..1.0, by in -1.0f64..1.0,
                                  r in 0.04f64..1.0) {
            let n = Vec3::z();
            let wi = unit(Vec3::new(ax, ay, 0.8));
            let wo = unit(Vec3::new(bx, by, 0.8));
            let p = BrdfParams::new(Vec3::new(0.5, 0.5, 0.5), r);
            let f = brdf_eval(&p, n, wi, wo);
            for c in 0..3 {
                prop_assert!(f[c].is_finite() && f[c] >= 0.0);
            }
        }
    }
}
