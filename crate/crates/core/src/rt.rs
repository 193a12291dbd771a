//! Ray tracing through the Gaussian field: elliptical-disk primitives, a
//! BVH over them, transmittance/radiance accumulation along rays, binary
//! visibility, and per-Gaussian micro-buffer baking.

use std::io::{Read, Write};
use std::path::Path;

use crate::scene::{GaussianSurfel, Scene};
use crate::tangent::{TangentCoords, TANGENT_DELTA};
use crate::{Error, Result, Vec3};

/// Disk support radius in units of the Gaussian scale.
pub const DISK_SIGMA_CUT: f64 = 3.0;
/// Disk thickness used when building bounds.
pub const DISK_THICKNESS: f64 = 1e-12;
/// Transmittance threshold for binary visibility: V = 0 iff T <= 0.8.
pub const VISIBILITY_EPS: f64 = 0.8;
/// Ray restart offset after each hit, in units of the ray direction.
pub const RAY_RESTART_OFFSET: f64 = 0.05;
/// Tracing stops once transmittance falls below this floor.
pub const TRANSMITTANCE_FLOOR: f64 = 1e-3;
/// Maximum number of hops per ray.
pub const HOP_LIMIT: usize = 64;
/// Hits with alpha below this threshold are not accumulated.
pub const ALPHA_SKIP: f64 = 1.0 / 255.0;
/// Accumulated alpha never exceeds this cap.
pub const ALPHA_CAP: f64 = 0.999;
/// Sentinel for "no Gaussian hit".
pub const NO_HIT: u32 = u32::MAX;

/// A surfel viewed as a flat elliptical disk with 3-sigma support.
#[derive(Debug, Clone)]
pub struct GaussianDisk {
    pub center: Vec3,
    /// Unit tangent axes of the surfel plane.
    pub tan_u: Vec3,
    pub tan_v: Vec3,
    pub normal: Vec3,
    /// Surfel scale (sx, sy); the disk semi-axes are three times this.
    pub scale_x: f64,
    pub scale_y: f64,
    pub opacity: f64,
    /// Index of the source Gaussian.
    pub source: u32,
}

impl GaussianDisk {
    pub fn from_surfel(g: &GaussianSurfel, index: u32) -> Self {
        let (tan_u, tan_v) = g.tangent_axes();
        Self {
            center: g.position,
            tan_u,
            tan_v,
            normal: g.geometric_normal(),
            scale_x: g.scale.x,
            scale_y: g.scale.y,
            opacity: g.opacity,
            source: index,
        }
    }

    fn bounds(&self) -> Aabb {
        let ex = self.tan_u.abs() * (DISK_SIGMA_CUT * self.scale_x)
            + self.tan_v.abs() * (DISK_SIGMA_CUT * self.scale_y)
            + self.normal.abs() * DISK_THICKNESS;
        Aabb {
            min: self.center - ex,
            max: self.center + ex,
        }
    }
}

/// Ray-disk intersection: parameter, tangent coordinates, and Gaussian
/// falloff alpha (uncapped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskHit {
    pub t: f64,
    pub uv: TangentCoords,
    pub alpha: f64,
}

/// Intersects a ray (`dir` normalized) with the 3-sigma ellipse of a disk.
pub fn intersect_disk(origin: Vec3, dir: Vec3, disk: &GaussianDisk) -> Option<DiskHit> {
    let denom = dir.dot(&disk.normal);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (disk.center - origin).dot(&disk.normal) / denom;
    if t <= 0.0 || !t.is_finite() {
        return None;
    }
    let p = origin + dir * t - disk.center;
    let x = p.dot(&disk.tan_u);
    let y = p.dot(&disk.tan_v);
    let ex = x / (DISK_SIGMA_CUT * disk.scale_x);
    let ey = y / (DISK_SIGMA_CUT * disk.scale_y);
    if ex * ex + ey * ey > 1.0 {
        return None;
    }
    let gx = x / disk.scale_x;
    let gy = y / disk.scale_y;
    Some(DiskHit {
        t,
        uv: TangentCoords {
            u: x / (disk.scale_x + TANGENT_DELTA),
            v: y / (disk.scale_y + TANGENT_DELTA),
        },
        alpha: disk.opacity * (-0.5 * (gx * gx + gy * gy)).exp(),
    })
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    fn longest_axis(&self) -> usize {
        let e = self.max - self.min;
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    /// Slab test; returns the entry parameter when the ray intersects the
    /// box within `(0, t_max)`.
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let ta = (self.min[a] - origin[a]) * inv_dir[a];
            let tb = (self.max[a] - origin[a]) * inv_dir[a];
            let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    /// Leaf: index into `prims` plus count; inner: left child index (right
    /// child is `left + 1` .. stored explicitly for clarity).
    left: u32,
    right: u32,
    first: u32,
    count: u32,
}

/// Binary BVH over Gaussian disks, built by median split on the longest
/// bounds axis.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    prims: Vec<u32>,
    pub disks: Vec<GaussianDisk>,
    pub max_leaf: usize,
}

/// Default maximum primitives per leaf.
pub const MAX_LEAF_DEFAULT: usize = 4;

/// Builds a BVH over every surfel in the scene.
pub fn build_bvh(scene: &Scene) -> Result<Bvh> {
    build_bvh_with(scene, MAX_LEAF_DEFAULT)
}

pub fn build_bvh_with(scene: &Scene, max_leaf: usize) -> Result<Bvh> {
    if scene.gaussians.is_empty() {
        return Err(Error::InvalidParameter("cannot build a BVH over an empty scene".into()));
    }
    let disks: Vec<GaussianDisk> = scene
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| GaussianDisk::from_surfel(g, i as u32))
        .collect();
    let mut prims: Vec<u32> = (0..disks.len() as u32).collect();
    let prim_bounds: Vec<Aabb> = disks.iter().map(|d| d.bounds()).collect();
    let mut nodes = Vec::with_capacity(disks.len() * 2);
    nodes.push(BvhNode {
        bounds: Aabb::empty(),
        left: 0,
        right: 0,
        first: 0,
        count: disks.len() as u32,
    });
    let mut stack = vec![0usize];
    while let Some(ni) = stack.pop() {
        let (first, count) = (nodes[ni].first as usize, nodes[ni].count as usize);
        let mut bounds = Aabb::empty();
        for &p in &prims[first..first + count] {
            bounds.grow(&prim_bounds[p as usize]);
        }
        nodes[ni].bounds = bounds;
        if count <= max_leaf.max(1) {
            continue;
        }
        let axis = bounds.longest_axis();
        // Median split: order by centroid along the axis (ties broken by
        // index for determinism), split in the middle.
        let range = &mut prims[first..first + count];
        range.sort_unstable_by(|&a, &b| {
            let ca = disks[a as usize].center[axis];
            let cb = disks[b as usize].center[axis];
            ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let half = count / 2;
        let left = nodes.len() as u32;
        nodes.push(BvhNode {
            bounds: Aabb::empty(),
            left: 0,
            right: 0,
            first: first as u32,
            count: half as u32,
        });
        nodes.push(BvhNode {
            bounds: Aabb::empty(),
            left: 0,
            right: 0,
            first: (first + half) as u32,
            count: (count - half) as u32,
        });
        nodes[ni].left = left;
        nodes[ni].right = left + 1;
        nodes[ni].count = 0;
        stack.push(left as usize);
        stack.push(left as usize + 1);
    }
    Ok(Bvh {
        nodes,
        prims,
        disks,
        max_leaf,
    })
}

impl Bvh {
    /// Nearest disk hit along the ray, skipping `skip` when given. Ties in
    /// `t` resolve to the lower Gaussian index.
    pub fn nearest_hit(&self, origin: Vec3, dir: Vec3, skip: Option<u32>) -> Option<(u32, DiskHit)> {
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(u32, DiskHit)> = None;
        let mut best_t = f64::INFINITY;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(origin, inv_dir, best_t).is_none() {
                continue;
            }
            if node.count > 0 {
                for &p in &self.prims[node.first as usize..(node.first + node.count) as usize] {
                    if Some(p) == skip {
                        continue;
                    }
                    if let Some(hit) = intersect_disk(origin, dir, &self.disks[p as usize]) {
                        let better = hit.t < best_t
                            || (hit.t == best_t && best.as_ref().map_or(true, |(bi, _)| p < *bi));
                        if better {
                            best_t = hit.t;
                            best = Some((p, hit));
                        }
                    }
                }
            } else {
                // Visit the nearer child first so the far side can be culled
                // against the best hit found so far.
                let l = node.left;
                let r = node.right;
                let tl = self.nodes[l as usize].bounds.hit(origin, inv_dir, best_t);
                let tr = self.nodes[r as usize].bounds.hit(origin, inv_dir, best_t);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        let (near, far) = if a <= b { (l, r) } else { (r, l) };
                        stack[sp] = far;
                        sp += 1;
                        stack[sp] = near;
                        sp += 1;
                    }
                    (Some(_), None) => {
                        stack[sp] = l;
                        sp += 1;
                    }
                    (None, Some(_)) => {
                        stack[sp] = r;
                        sp += 1;
                    }
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Root bounds of the two children of the root node (test support).
    pub fn root_child_bounds(&self) -> Option<((Vec3, Vec3), (Vec3, Vec3))> {
        let root = &self.nodes[0];
        if root.count > 0 {
            return None;
        }
        let l = &self.nodes[root.left as usize].bounds;
        let r = &self.nodes[root.right as usize].bounds;
        Some(((l.min, l.max), (r.min, r.max)))
    }

    /// Checks containment of every primitive bound within its ancestors and
    /// the leaf-size bound; used by validation tests.
    pub fn check_structure(&self) -> bool {
        fn contains(outer: &Aabb, inner: &Aabb) -> bool {
            (0..3).all(|a| outer.min[a] <= inner.min[a] + 1e-12 && outer.max[a] >= inner.max[a] - 1e-12)
        }
        let mut ok = true;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.count > 0 {
                ok &= node.count as usize <= self.max_leaf.max(1);
                for &p in &self.prims[node.first as usize..(node.first + node.count) as usize] {
                    ok &= contains(&node.bounds, &self.disks[p as usize].bounds());
                }
            } else {
                ok &= contains(&node.bounds, &self.nodes[node.left as usize].bounds);
                ok &= contains(&node.bounds, &self.nodes[node.right as usize].bounds);
                stack.push(node.left as usize);
                stack.push(node.right as usize);
            }
        }
        ok
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Brute-force nearest hit over all disks; the reference the BVH is checked
/// against.
pub fn nearest_hit_bruteforce(
    disks: &[GaussianDisk],
    origin: Vec3,
    dir: Vec3,
    skip: Option<u32>,
) -> Option<(u32, DiskHit)> {
    let mut best: Option<(u32, DiskHit)> = None;
    for (i, d) in disks.iter().enumerate() {
        let i = i as u32;
        if Some(i) == skip {
            continue;
        }
        if let Some(hit) = intersect_disk(origin, dir, d) {
            let better = match &best {
                None => true,
                Some((bi, bh)) => hit.t < bh.t || (hit.t == bh.t && i < *bi),
            };
            if better {
                best = Some((i, hit));
            }
        }
    }
    best
}

/// Binary visibility from transmittance: occluded (0) iff `t <= 0.8`.
pub fn visibility_from_t(t: f64) -> u8 {
    u8::from(t > VISIBILITY_EPS)
}

/// Result of tracing one ray through the Gaussian field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceResult {
    /// Accumulated radiance along the ray.
    pub l_ind: Vec3,
    /// Remaining transmittance.
    pub trans: f64,
    /// First accepted hit, or [`NO_HIT`].
    pub first_hit: u32,
    /// Tangent coordinates of the first accepted hit.
    pub first_uv: TangentCoords,
}

/// Traces a ray, accumulating `L += T * c * alpha` and `T *= 1 - alpha` at
/// each accepted hit, restarting slightly past each hit point. Stops on a
/// miss, when transmittance falls below the floor, or at the hop limit.
/// `skip_first` excludes the originating Gaussian on the first hop only.
pub fn trace_ray(
    bvh: &Bvh,
    scene: &Scene,
    origin: Vec3,
    dir: Vec3,
    skip_first: Option<u32>,
) -> TraceResult {
    let mut l = Vec3::zeros();
    let mut trans = 1.0f64;
    let mut first_hit = NO_HIT;
    let mut first_uv = TangentCoords { u: 0.0, v: 0.0 };
    let mut origin = origin;
    let mut skip = skip_first;
    for _ in 0..HOP_LIMIT {
        let Some((idx, hit)) = bvh.nearest_hit(origin, dir, skip) else {
            break;
        };
        skip = None;
        if hit.alpha >= ALPHA_SKIP {
            let alpha = hit.alpha.min(ALPHA_CAP);
            // Radiance emitted back toward the ray origin.
            let c = scene.gaussians[idx as usize].radiance_toward(-dir);
            l += c * (trans * alpha);
            trans *= 1.0 - alpha;
            if first_hit == NO_HIT {
                first_hit = idx;
                first_uv = hit.uv;
            }
            if trans < TRANSMITTANCE_FLOOR {
                break;
            }
        }
        origin = origin + dir * (hit.t + RAY_RESTART_OFFSET);
    }
    TraceResult {
        l_ind: l,
        trans,
        first_hit,
        first_uv,
    }
}

/// One baked hemisphere sample of a Gaussian's micro-buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroRecord {
    pub dir: Vec3,
    pub l_ind: Vec3,
    pub trans: f64,
    pub vis: u8,
    /// First-hit Gaussian index or [`NO_HIT`].
    pub hit: u32,
    /// Tangent coordinates on the first-hit Gaussian.
    pub uv: TangentCoords,
}

/// Baked incoming-radiance cache for one Gaussian: K hemisphere samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroBuffer {
    pub records: Vec<MicroRecord>,
}

impl MicroBuffer {
    pub fn k(&self) -> usize {
        self.records.len()
    }
}

/// Bakes micro-buffers for every Gaussian: K uniform hemisphere directions
/// around the geometric normal, each traced from the Gaussian center.
/// Deterministic per seed; per-Gaussian seeds derive from the base seed and
/// the Gaussian index.
pub fn bake_microbuffers(scene: &Scene, bvh: &Bvh, k: usize, seed: u64) -> Result<Vec<MicroBuffer>> {
    if k == 0 {
        return Err(Error::InvalidParameter("sample count K must be >= 1".into()));
    }
    let buffers = crate::par::ordered_map(scene.gaussians.len(), |i| {
        let g = &scene.gaussians[i];
        let n = g.geometric_normal();
        let dirs = crate::brdf::sample_hemisphere(n, k, crate::brdf::derive_seed(seed, i as u64))
            .expect("k >= 1")
            .dirs;
        let records = dirs
            .into_iter()
            .map(|dir| {
                let tr = trace_ray(bvh, scene, g.position, dir, Some(i as u32));
                MicroRecord {
                    dir,
                    l_ind: tr.l_ind,
                    trans: tr.trans,
                    vis: visibility_from_t(tr.trans),
                    hit: tr.first_hit,
                    uv: tr.first_uv,
                }
            })
            .collect();
        MicroBuffer { records }
    });
    Ok(buffers)
}

const CACHE_MAGIC: &[u8; 8] = b"MBUF0001";

/// Writes the micro-buffer cache: magic, Gaussian count, K, then per-record
/// fields in declared order, little-endian.
pub fn write_microbuffer_cache(path: &Path, buffers: &[MicroBuffer]) -> Result<()> {
    let k = buffers.first().map_or(0, |b| b.records.len());
    if buffers.iter().any(|b| b.records.len() != k) {
        return Err(Error::InvalidParameter("micro-buffers disagree on K".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    f.write_all(&(buffers.len() as u32).to_le_bytes())?;
    f.write_all(&(k as u32).to_le_bytes())?;
    for b in buffers {
        for r in &b.records {
            for v in [r.dir.x, r.dir.y, r.dir.z, r.l_ind.x, r.l_ind.y, r.l_ind.z, r.trans] {
                f.write_all(&v.to_le_bytes())?;
            }
            f.write_all(&[r.vis])?;
            f.write_all(&r.hit.to_le_bytes())?;
            f.write_all(&r.uv.u.to_le_bytes())?;
            f.write_all(&r.uv.v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Reads a cache written by [`write_microbuffer_cache`].
pub fn read_microbuffer_cache(path: &Path) -> Result<Vec<MicroBuffer>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format(format!("{}: bad micro-buffer magic", path.display())));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b4)?;
    let k = u32::from_le_bytes(b4) as usize;
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |f: &mut dyn Read| -> Result<f64> {
        f.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut buffers = Vec::with_capacity(count);
    for _ in 0..count {
        let mut records = Vec::with_capacity(k);
        for _ in 0..k {
            let dir = Vec3::new(read_f64(&mut f)?, read_f64(&mut f)?, read_f64(&mut f)?);
            let l_ind = Vec3::new(read_f64(&mut f)?, read_f64(&mut f)?, read_f64(&mut f)?);
            let trans = read_f64(&mut f)?;
            let mut b1 = [0u8; 1];
            f.read_exact(&mut b1)?;
            let mut b4 = [0u8; 4];
            f.read_exact(&mut b4)?;
            let hit = u32::from_le_bytes(b4);
            let u = read_f64(&mut f)?;
            let v = read_f64(&mut f)?;
            records.push(MicroRecord {
                dir,
                l_ind,
                trans,
                vis: b1[0],
                hit,
                uv: TangentCoords { u, v },
            });
        }
        buffers.push(MicroBuffer { records });
    }
    Ok(buffers)
}
