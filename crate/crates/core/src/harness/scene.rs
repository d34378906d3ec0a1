//! Synthetic driving-like scenes: analytic shapes on a ground plane, observed
//! by a ray-cast lidar and a ring of cameras.

use std::fmt::Write as _;
use std::path::Path;

use crate::diffcore::RngStream;
use crate::error::{Error, Result};
use crate::gaussian_field::{GaussianField, GaussianPrimitive, Provenance};
use crate::harness::config::SceneSpec;
use crate::occupancy::OccupancyGrid;
use crate::renderer::{rasterize, Camera, Image};
use crate::sparse_voxel::{DepthMap, LidarPoint, PointCloud, VoxelGridSpec};

pub const BACKGROUND: [f64; 3] = [0.0; 3];
/// Opacity of the painted truth Gaussians.
const TRUTH_OPACITY: f64 = 0.95;

#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: SceneSpec,
    pub grid: VoxelGridSpec<f64>,
    pub points: PointCloud<f64>,
    pub gt: OccupancyGrid<f64>,
    pub cameras: Vec<Camera<f64>>,
    pub images: Vec<Image<f64>>,
    pub depths: Vec<DepthMap<f64>>,
}

fn ground_top(spec: &SceneSpec) -> f64 {
    spec.grid_origin[2] + spec.voxel_size
}

/// Label and color of the voxel centered at `c`; later objects win.
fn classify(spec: &SceneSpec, c: [f64; 3]) -> Option<(usize, [f64; 3])> {
    if let Some(o) = spec.objects.iter().rev().find(|o| o.contains(c)) {
        return Some((o.class_id, o.color));
    }
    (spec.ground && c[2] < ground_top(spec)).then_some((spec.ground_class, spec.ground_color))
}

pub fn gt_occupancy(spec: &SceneSpec) -> Result<(OccupancyGrid<f64>, Vec<[f64; 3]>)> {
    let grid = spec.grid()?;
    let mut labels = Vec::with_capacity(grid.num_voxels());
    let mut colors = Vec::with_capacity(grid.num_voxels());
    for lin in 0..grid.num_voxels() {
        let (l, col) = classify(spec, grid.center(grid.unlinear(lin))).unwrap_or((0, [0.0; 3]));
        labels.push(l);
        colors.push(col);
    }
    Ok((OccupancyGrid::new(grid, spec.num_classes, labels)?, colors))
}

/// One opaque isotropic Gaussian per occupied voxel that touches empty space.
pub fn truth_field(gt: &OccupancyGrid<f64>, colors: &[[f64; 3]]) -> GaussianField<f64> {
    let g = &gt.spec;
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let mut field = GaussianField::default();
    for lin in 0..g.num_voxels() {
        if gt.labels[lin] == 0 {
            continue;
        }
        let idx = g.unlinear(lin);
        let exposed = (0..3).any(|a| {
            [-1i64, 1].into_iter().any(|d| {
                let n = idx[a] as i64 + d;
                if n < 0 || n >= g.dims[a] as i64 {
                    // the grid boundary counts as open except below the floor
                    return !(a == 2 && d < 0);
                }
                let mut m = idx;
                m[a] = n as usize;
                gt.labels[g.linear(m)] == 0
            })
        });
        if !exposed {
            continue;
        }
        let prim = GaussianPrimitive {
            mu: g.center(idx),
            log_scale: [(g.voxel_size * 0.5).ln(); 3],
            rot: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(TRUTH_OPACITY),
            color: colors[lin].map(|c| logit(c.clamp(0.02, 0.98))),
        };
        field.push(prim, Provenance::VoxelAnchor, None);
    }
    field
}

pub fn ring_cameras(spec: &SceneSpec) -> Result<Vec<Camera<f64>>> {
    let g = spec.grid()?;
    let max = g.max_corner();
    let target = [(g.origin[0] + max[0]) * 0.5, (g.origin[1] + max[1]) * 0.5, g.origin[2] + spec.voxel_size];
    (0..spec.camera_count)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / spec.camera_count as f64 + std::f64::consts::FRAC_PI_4;
            let eye = [target[0] + spec.camera_radius * a.cos(), target[1] + spec.camera_radius * a.sin(), spec.camera_height];
            Camera::look_at(eye, target, [0.0, 0.0, 1.0], spec.camera_fov, spec.image_width, spec.image_height)
        })
        .collect()
}

fn ray_box(o: [f64; 3], d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if d[a].abs() < 1e-12 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 >= t0 && t0 > 0.0).then_some(t0)
}

fn ray_sphere(o: [f64; 3], d: [f64; 3], c: [f64; 3], r: f64) -> Option<f64> {
    let oc: [f64; 3] = std::array::from_fn(|a| o[a] - c[a]);
    let b = (0..3).map(|a| oc[a] * d[a]).sum::<f64>();
    let cc = (0..3).map(|a| oc[a] * oc[a]).sum::<f64>() - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Nearest hit along a unit ray and the class it belongs to.
fn cast(spec: &SceneSpec, o: [f64; 3], d: [f64; 3]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    let mut take = |t: Option<f64>, class: usize| {
        if let Some(t) = t {
            if best.is_none_or(|(b, _)| t < b) {
                best = Some((t, class));
            }
        }
    };
    for obj in &spec.objects {
        let t = match obj.shape {
            crate::harness::config::Shape::Box => {
                let lo = std::array::from_fn(|a| obj.center[a] - obj.extent[a]);
                let hi = std::array::from_fn(|a| obj.center[a] + obj.extent[a]);
                ray_box(o, d, lo, hi)
            }
            crate::harness::config::Shape::Sphere => ray_sphere(o, d, obj.center, obj.extent[0]),
        };
        take(t, obj.class_id);
    }
    if spec.ground && d[2] < 0.0 {
        take(Some((ground_top(spec) - o[2]) / d[2]), spec.ground_class);
    }
    best
}

/// Spinning-lidar sweep: 32 beams between −50° and +5° elevation.
pub fn lidar_sweep(spec: &SceneSpec, rng: &RngStream) -> Result<PointCloud<f64>> {
    const BEAMS: usize = 32;
    let per_beam = spec.lidar_rays.div_ceil(BEAMS).max(1);
    let mut noise = rng.child(1);
    let mut points = Vec::with_capacity(spec.lidar_rays);
    let o = spec.lidar_origin;
    for i in 0..spec.lidar_rays {
        let (beam, step) = (i % BEAMS, i / BEAMS);
        let el = (-50.0 + 55.0 * beam as f64 / (BEAMS - 1) as f64).to_radians();
        let az = std::f64::consts::TAU * (step as f64 + 0.5 * (beam % 2) as f64) / per_beam as f64;
        let d = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        let dn = noise.normal();
        let di = noise.normal();
        let Some((t, class)) = cast(spec, o, d) else { continue };
        let t = t + spec.range_noise * dn;
        let intensity = 0.2 + 0.6 * class as f64 / spec.num_classes as f64 + 0.02 * di;
        points.push(LidarPoint { position: std::array::from_fn(|a| o[a] + t * d[a]), intensity });
    }
    PointCloud::new(points)
}

/// Ground truth, lidar sweep, and noisy depth plus 8-bit images per camera.
pub fn generate_scene(spec: &SceneSpec, rng: &RngStream) -> Result<Scene> {
    spec.validate()?;
    let grid = spec.grid()?;
    let (gt, colors) = gt_occupancy(spec)?;
    let truth = truth_field(&gt, &colors);
    let cameras = ring_cameras(spec)?;
    let points = lidar_sweep(spec, rng)?;
    let mut images = Vec::with_capacity(cameras.len());
    let mut depths = Vec::with_capacity(cameras.len());
    for (i, cam) in cameras.iter().enumerate() {
        let (img, aux) = rasterize(&truth, cam, BACKGROUND);
        // the stored 8-bit image is the training target
        images.push(Image::from_ppm_bytes(&img.to_ppm_bytes())?);
        let mut n = rng.child(100 + i as u64);
        let depth = aux.depth.iter().map(|&z| if z.is_finite() { z + spec.depth_noise * n.normal() } else { z }).collect();
        depths.push(DepthMap::new(cam.width, cam.height, depth)?);
    }
    Ok(Scene { spec: spec.clone(), grid, points, gt, cameras, images, depths })
}

pub fn cameras_to_text(cams: &[Camera<f64>]) -> String {
    let mut s = String::from("# fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width height\n");
    for c in cams {
        let vals: Vec<String> = [c.fx, c.fy, c.cx, c.cy]
            .into_iter()
            .chain(c.r.iter().flatten().copied())
            .chain(c.t)
            .map(|v| v.to_string())
            .collect();
        let _ = writeln!(s, "{} {} {}", vals.join(" "), c.width, c.height);
    }
    s
}

pub fn cameras_from_text(text: &str) -> Result<Vec<Camera<f64>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p: Vec<&str> = l.split_whitespace().collect();
            if p.len() != 18 {
                return Err(Error::Parse(format!("camera line needs 18 fields, got {}", p.len())));
            }
            let f: Vec<f64> = p[..16].iter().map(|v| v.parse().map_err(|e| Error::Parse(format!("camera `{v}`: {e}")))).collect::<Result<_>>()?;
            let u = |v: &str| v.parse::<usize>().map_err(|e| Error::Parse(format!("camera size `{v}`: {e}")));
            let r = [[f[4], f[5], f[6]], [f[7], f[8], f[9]], [f[10], f[11], f[12]]];
            Camera::new(f[0], f[1], f[2], f[3], r, [f[13], f[14], f[15]], u(p[16])?, u(p[17])?)
        })
        .collect()
}

pub fn depth_to_text(d: &DepthMap<f64>) -> String {
    let mut s = format!("{} {}\n", d.width, d.height);
    for v in &d.depth {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn depth_from_text(text: &str) -> Result<DepthMap<f64>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty depth file".into()))?;
    let wh: Vec<usize> = header.split_whitespace().map(|v| v.parse().map_err(|e| Error::Parse(format!("depth header: {e}")))).collect::<Result<_>>()?;
    if wh.len() != 2 {
        return Err(Error::Parse("depth header needs width and height".into()));
    }
    let depth = lines.filter(|l| !l.trim().is_empty()).map(|l| l.trim().parse().map_err(|e| Error::Parse(format!("depth `{l}`: {e}")))).collect::<Result<_>>()?;
    DepthMap::new(wh[0], wh[1], depth)
}

impl Scene {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("scene.txt"), self.spec.to_text())?;
        self.points.write(dir.join("points.txt"))?;
        self.gt.write(dir.join("gt_occupancy.txt"))?;
        std::fs::write(dir.join("cameras.txt"), cameras_to_text(&self.cameras))?;
        for (i, (img, d)) in self.images.iter().zip(&self.depths).enumerate() {
            img.write_ppm(dir.join(format!("view_{i}.ppm")))?;
            std::fs::write(dir.join(format!("depth_{i}.txt")), depth_to_text(d))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec = SceneSpec::read(dir.join("scene.txt"))?;
        let grid = spec.grid()?;
        let points = PointCloud::read(dir.join("points.txt"))?;
        let gt = OccupancyGrid::from_text(&std::fs::read_to_string(dir.join("gt_occupancy.txt"))?, grid, spec.num_classes)?;
        let cameras = cameras_from_text(&std::fs::read_to_string(dir.join("cameras.txt"))?)?;
        let mut images = Vec::with_capacity(cameras.len());
        let mut depths = Vec::with_capacity(cameras.len());
        for i in 0..cameras.len() {
            images.push(Image::read_ppm(dir.join(format!("view_{i}.ppm")))?);
            depths.push(depth_from_text(&std::fs::read_to_string(dir.join(format!("depth_{i}.txt")))?)?);
        }
        Ok(Self { spec, grid, points, gt, cameras, images, depths })
    }
}
