//! Plain-text `key = value` configuration for scenes and training runs.
//!
//! Keys are the field names of [`SceneSpec`] and [`RunConfig`]; vectors are
//! whitespace separated. `object` may repeat, one line per object:
//! `object = <box|sphere> <small|large> cx cy cz ex ey ez class r g b`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sparse_voxel::VoxelGridSpec;

/// Ordered `key → values` (repeatable keys keep every occurrence).
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
        out.entry(k.trim().to_string()).or_default().push(v.trim().to_string());
    }
    Ok(out)
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::Parse(format!("`{key}`: {e}")))
}

fn array<T: FromStr + Copy + Default, const N: usize>(key: &str, v: &str) -> Result<[T; N]>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::Parse(format!("`{key}` needs {N} values, got {}", parts.len())));
    }
    let mut out = [T::default(); N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = scalar(key, p)?;
    }
    Ok(out)
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).map(|p| scalar(key, p)).collect()
}

fn last<'a>(key: &str, vals: &'a [String]) -> Result<&'a str> {
    if vals.len() > 1 {
        return Err(Error::Parse(format!("`{key}` given {} times", vals.len())));
    }
    Ok(&vals[0])
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Box,
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeClass {
    Small,
    Large,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub size: SizeClass,
    pub center: [f64; 3],
    /// Box half-extents; a sphere uses `extent[0]` as its radius.
    pub extent: [f64; 3],
    pub class_id: usize,
    pub color: [f64; 3],
}

impl SceneObject {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d: [f64; 3] = std::array::from_fn(|a| p[a] - self.center[a]);
        match self.shape {
            Shape::Box => (0..3).all(|a| d[a].abs() <= self.extent[a]),
            Shape::Sphere => d.iter().map(|x| x * x).sum::<f64>() <= self.extent[0] * self.extent[0],
        }
    }

    fn parse(v: &str) -> Result<Self> {
        let p: Vec<&str> = v.split_whitespace().collect();
        if p.len() != 12 {
            return Err(Error::Parse(format!("object needs 12 fields, got {}", p.len())));
        }
        let shape = match p[0] {
            "box" => Shape::Box,
            "sphere" => Shape::Sphere,
            s => return Err(Error::Parse(format!("unknown shape `{s}`"))),
        };
        let size = match p[1] {
            "small" => SizeClass::Small,
            "large" => SizeClass::Large,
            s => return Err(Error::Parse(format!("unknown size class `{s}`"))),
        };
        let f = |i: usize| scalar::<f64>("object", p[i]);
        Ok(Self {
            shape,
            size,
            center: [f(2)?, f(3)?, f(4)?],
            extent: [f(5)?, f(6)?, f(7)?],
            class_id: scalar("object", p[8])?,
            color: [f(9)?, f(10)?, f(11)?],
        })
    }

    fn to_line(&self) -> String {
        let shape = if self.shape == Shape::Box { "box" } else { "sphere" };
        let size = if self.size == SizeClass::Small { "small" } else { "large" };
        format!("{shape} {size} {} {} {} {}", join(&self.center), join(&self.extent), self.class_id, join(&self.color))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub grid_origin: [f64; 3],
    pub voxel_size: f64,
    pub grid_dims: [usize; 3],
    pub num_classes: usize,
    pub objects: Vec<SceneObject>,
    pub ground: bool,
    /// Class id of the ground plane.
    pub ground_class: usize,
    pub ground_color: [f64; 3],
    pub camera_count: usize,
    pub camera_radius: f64,
    pub camera_height: f64,
    pub camera_fov: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub lidar_origin: [f64; 3],
    pub lidar_rays: usize,
    pub range_noise: f64,
    pub depth_noise: f64,
}

/// Classes used by the built-in scenes: ground, small objects, large objects.
pub const GROUND_CLASS: usize = 1;
pub const SMALL_CLASS: usize = 2;
pub const LARGE_CLASS: usize = 3;

impl Default for SceneSpec {
    fn default() -> Self {
        let obj = |shape, size, center, extent, class_id, color| SceneObject { shape, size, center, extent, class_id, color };
        Self {
            grid_origin: [-4.0, -4.0, 0.0],
            voxel_size: 0.25,
            grid_dims: [32, 32, 8],
            num_classes: 3,
            objects: vec![
                obj(Shape::Box, SizeClass::Large, [2.0, 1.5, 0.75], [0.75, 1.0, 0.5], LARGE_CLASS, [0.8, 0.3, 0.2]),
                obj(Shape::Box, SizeClass::Large, [-2.0, -1.75, 0.75], [1.0, 0.6, 0.5], LARGE_CLASS, [0.2, 0.4, 0.8]),
                obj(Shape::Sphere, SizeClass::Small, [-1.75, 2.0, 0.5], [0.3, 0.3, 0.3], SMALL_CLASS, [0.9, 0.8, 0.1]),
                obj(Shape::Box, SizeClass::Small, [1.5, -2.25, 0.4], [0.15, 0.15, 0.15], SMALL_CLASS, [0.1, 0.8, 0.3]),
                obj(Shape::Sphere, SizeClass::Small, [0.5, 2.75, 0.4], [0.2, 0.2, 0.2], SMALL_CLASS, [0.9, 0.2, 0.7]),
            ],
            ground: true,
            ground_class: GROUND_CLASS,
            ground_color: [0.45, 0.45, 0.45],
            camera_count: 4,
            camera_radius: 6.5,
            camera_height: 3.5,
            camera_fov: 1.2,
            image_width: 64,
            image_height: 64,
            lidar_origin: [0.0, 0.0, 1.6],
            lidar_rays: 6000,
            range_noise: 0.02,
            depth_noise: 0.01,
        }
    }
}

impl SceneSpec {
    pub fn grid(&self) -> Result<VoxelGridSpec<f64>> {
        VoxelGridSpec::new(self.grid_origin, self.voxel_size, self.grid_dims)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid()?;
        let max = g.max_corner();
        for (i, o) in self.objects.iter().enumerate() {
            if o.class_id == 0 || o.class_id > self.num_classes {
                return Err(Error::Config(format!("object {i}: class {} outside [1, {}]", o.class_id, self.num_classes)));
            }
            let r = |a: usize| if o.shape == Shape::Sphere { o.extent[0] } else { o.extent[a] };
            if (0..3).any(|a| o.center[a] - r(a) < g.origin[a] || o.center[a] + r(a) > max[a]) {
                return Err(Error::Config(format!("object {i} leaves the grid")));
            }
        }
        if self.ground && (self.ground_class == 0 || self.ground_class > self.num_classes) {
            return Err(Error::Config(format!("ground class {} outside [1, {}]", self.ground_class, self.num_classes)));
        }
        if self.camera_count == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("need at least one camera with a non-empty image".into()));
        }
        Ok(())
    }

    /// Small-object-dominated variant of the default scene.
    pub fn small_objects() -> Self {
        let mut s = Self::default();
        s.objects.clear();
        let spots = [[-2.5, -2.5], [-1.0, -2.75], [1.0, -2.5], [2.75, -1.0], [2.5, 1.0], [2.75, 2.75], [0.75, 2.5], [-1.0, 2.75], [-2.75, 1.25], [-2.5, -0.5]];
        for (i, [x, y]) in spots.into_iter().enumerate() {
            let (shape, ext) = if i % 2 == 0 { (Shape::Box, [0.15; 3]) } else { (Shape::Sphere, [0.2; 3]) };
            let color = [[0.9, 0.8, 0.1], [0.1, 0.8, 0.3], [0.9, 0.2, 0.7]][i % 3];
            s.objects.push(SceneObject { shape, size: SizeClass::Small, center: [x, y, 0.45], extent: ext, class_id: SMALL_CLASS, color });
        }
        s
    }

    /// Large-object-dominated variant of the default scene.
    pub fn large_objects() -> Self {
        let mut s = Self::default();
        let big = |center, extent, color| SceneObject { shape: Shape::Box, size: SizeClass::Large, center, extent, class_id: LARGE_CLASS, color };
        s.objects = vec![
            big([2.25, 1.75, 0.8], [1.25, 1.5, 0.55], [0.8, 0.3, 0.2]),
            big([-2.25, -2.0, 0.8], [1.25, 1.25, 0.55], [0.2, 0.4, 0.8]),
            big([-2.25, 2.25, 0.8], [1.0, 1.0, 0.55], [0.6, 0.6, 0.2]),
            big([2.25, -2.25, 0.8], [1.0, 1.0, 0.55], [0.3, 0.7, 0.6]),
        ];
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        let kv = parse_kv(text)?;
        if kv.contains_key("object") {
            s.objects.clear();
        }
        for (k, vals) in &kv {
            if k == "object" {
                for v in vals {
                    s.objects.push(SceneObject::parse(v)?);
                }
                continue;
            }
            let v = last(k, vals)?;
            match k.as_str() {
                "grid_origin" => s.grid_origin = array(k, v)?,
                "voxel_size" => s.voxel_size = scalar(k, v)?,
                "grid_dims" => s.grid_dims = array(k, v)?,
                "num_classes" => s.num_classes = scalar(k, v)?,
                // `objects = none` clears the default object list
                "objects" if v == "none" => s.objects.clear(),
                "ground" => s.ground = scalar(k, v)?,
                "ground_class" => s.ground_class = scalar(k, v)?,
                "ground_color" => s.ground_color = array(k, v)?,
                "camera_count" => s.camera_count = scalar(k, v)?,
                "camera_radius" => s.camera_radius = scalar(k, v)?,
                "camera_height" => s.camera_height = scalar(k, v)?,
                "camera_fov" => s.camera_fov = scalar(k, v)?,
                "image_width" => s.image_width = scalar(k, v)?,
                "image_height" => s.image_height = scalar(k, v)?,
                "lidar_origin" => s.lidar_origin = array(k, v)?,
                "lidar_rays" => s.lidar_rays = scalar(k, v)?,
                "range_noise" => s.range_noise = scalar(k, v)?,
                "depth_noise" => s.depth_noise = scalar(k, v)?,
                other => return Err(Error::Config(format!("unknown scene key `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "grid_origin = {}", join(&self.grid_origin));
        let _ = writeln!(t, "voxel_size = {}", self.voxel_size);
        let _ = writeln!(t, "grid_dims = {}", join(&self.grid_dims));
        let _ = writeln!(t, "num_classes = {}", self.num_classes);
        if self.objects.is_empty() {
            let _ = writeln!(t, "objects = none");
        }
        for o in &self.objects {
            let _ = writeln!(t, "object = {}", o.to_line());
        }
        let _ = writeln!(t, "ground = {}", self.ground);
        let _ = writeln!(t, "ground_class = {}", self.ground_class);
        let _ = writeln!(t, "ground_color = {}", join(&self.ground_color));
        let _ = writeln!(t, "camera_count = {}", self.camera_count);
        let _ = writeln!(t, "camera_radius = {}", self.camera_radius);
        let _ = writeln!(t, "camera_height = {}", self.camera_height);
        let _ = writeln!(t, "camera_fov = {}", self.camera_fov);
        let _ = writeln!(t, "image_width = {}", self.image_width);
        let _ = writeln!(t, "image_height = {}", self.image_height);
        let _ = writeln!(t, "lidar_origin = {}", join(&self.lidar_origin));
        let _ = writeln!(t, "lidar_rays = {}", self.lidar_rays);
        let _ = writeln!(t, "range_noise = {}", self.range_noise);
        let _ = writeln!(t, "depth_noise = {}", self.depth_noise);
        t
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub channels: usize,
    pub candidates: Vec<usize>,
    pub tau: f64,
    pub lambda: f64,
    /// Weight of D-SSIM inside the photometric loss.
    pub ssim_lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_mu: f64,
    pub lr_log_scale: f64,
    pub lr_rot: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub outer_loops: usize,
    pub densify_every: usize,
    pub densify_grad_threshold: f64,
    pub densify_scale_threshold: f64,
    pub prune_opacity: f64,
    pub max_gaussians: usize,
    pub init_hidden: usize,
    pub head_hidden: usize,
    pub anchor_norm_threshold: f64,
    pub filter_min_neighbors: usize,
    pub filter_radius: f64,
    pub use_rgb: bool,
    pub use_pc: bool,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            candidates: vec![1, 2, 3, 4],
            tau: 1.0,
            lambda: 0.2,
            ssim_lambda: 0.2,
            lr: 1e-4,
            weight_decay: 0.01,
            lr_mu: 2e-3,
            lr_log_scale: 1e-2,
            lr_rot: 5e-3,
            lr_opacity: 5e-2,
            lr_color: 5e-2,
            phase1_iters: 300,
            phase2_iters: 500,
            outer_loops: 1,
            densify_every: 100,
            densify_grad_threshold: 2e-4,
            densify_scale_threshold: 0.25,
            prune_opacity: 0.005,
            max_gaussians: 6000,
            init_hidden: 16,
            head_hidden: 32,
            anchor_norm_threshold: 1e-3,
            filter_min_neighbors: 1,
            filter_radius: 0.3,
            use_rgb: true,
            use_pc: true,
            seed: 0,
            output_dir: "out".into(),
        }
    }
}

impl RunConfig {
    /// Short schedule with a larger network rate, for comparing variants on
    /// one core. Every other key keeps its default.
    pub fn desk() -> Self {
        Self { phase1_iters: 100, phase2_iters: 200, lr: 5e-3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() || self.candidates.contains(&0) {
            return Err(Error::Config("candidates must be non-empty positive integers".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.outer_loops == 0 {
            return Err(Error::Config("outer_loops must be at least 1".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, vals) in &parse_kv(text)? {
            let v = last(k, vals)?;
            match k.as_str() {
                "channels" => c.channels = scalar(k, v)?,
                "candidates" => c.candidates = list(k, v)?,
                "tau" => c.tau = scalar(k, v)?,
                "lambda" => c.lambda = scalar(k, v)?,
                "ssim_lambda" => c.ssim_lambda = scalar(k, v)?,
                "lr" => c.lr = scalar(k, v)?,
                "weight_decay" => c.weight_decay = scalar(k, v)?,
                "lr_mu" => c.lr_mu = scalar(k, v)?,
                "lr_log_scale" => c.lr_log_scale = scalar(k, v)?,
                "lr_rot" => c.lr_rot = scalar(k, v)?,
                "lr_opacity" => c.lr_opacity = scalar(k, v)?,
                "lr_color" => c.lr_color = scalar(k, v)?,
                "phase1_iters" => c.phase1_iters = scalar(k, v)?,
                "phase2_iters" => c.phase2_iters = scalar(k, v)?,
                "outer_loops" => c.outer_loops = scalar(k, v)?,
                "densify_every" => c.densify_every = scalar(k, v)?,
                "densify_grad_threshold" => c.densify_grad_threshold = scalar(k, v)?,
                "densify_scale_threshold" => c.densify_scale_threshold = scalar(k, v)?,
                "prune_opacity" => c.prune_opacity = scalar(k, v)?,
                "max_gaussians" => c.max_gaussians = scalar(k, v)?,
                "init_hidden" => c.init_hidden = scalar(k, v)?,
                "head_hidden" => c.head_hidden = scalar(k, v)?,
                "anchor_norm_threshold" => c.anchor_norm_threshold = scalar(k, v)?,
                "filter_min_neighbors" => c.filter_min_neighbors = scalar(k, v)?,
                "filter_radius" => c.filter_radius = scalar(k, v)?,
                "use_rgb" => c.use_rgb = scalar(k, v)?,
                "use_pc" => c.use_pc = scalar(k, v)?,
                "seed" => c.seed = scalar(k, v)?,
                "output_dir" => c.output_dir = v.to_string(),
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let fields: [(&str, String); 29] = [
            ("channels", self.channels.to_string()),
            ("candidates", join(&self.candidates)),
            ("tau", self.tau.to_string()),
            ("lambda", self.lambda.to_string()),
            ("ssim_lambda", self.ssim_lambda.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("lr_mu", self.lr_mu.to_string()),
            ("lr_log_scale", self.lr_log_scale.to_string()),
            ("lr_rot", self.lr_rot.to_string()),
            ("lr_opacity", self.lr_opacity.to_string()),
            ("lr_color", self.lr_color.to_string()),
            ("phase1_iters", self.phase1_iters.to_string()),
            ("phase2_iters", self.phase2_iters.to_string()),
            ("outer_loops", self.outer_loops.to_string()),
            ("densify_every", self.densify_every.to_string()),
            ("densify_grad_threshold", self.densify_grad_threshold.to_string()),
            ("densify_scale_threshold", self.densify_scale_threshold.to_string()),
            ("prune_opacity", self.prune_opacity.to_string()),
            ("max_gaussians", self.max_gaussians.to_string()),
            ("init_hidden", self.init_hidden.to_string()),
            ("head_hidden", self.head_hidden.to_string()),
            ("anchor_norm_threshold", self.anchor_norm_threshold.to_string()),
            ("filter_min_neighbors", self.filter_min_neighbors.to_string()),
            ("filter_radius", self.filter_radius.to_string()),
            ("use_rgb", self.use_rgb.to_string()),
            ("use_pc", self.use_pc.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.clone()),
        ];
        fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// One ablation arm.
#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    FixedK(usize),
    /// Dynamic k over `1..=max`.
    Dynamic(usize),
    /// Dynamic k trained on occupancy alone (no rendering, no consistency).
    DynamicOccOnly,
    NoRgb,
    NoPc,
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::FixedK(k) => format!("fixed_k={k}"),
            Variant::Dynamic(m) => format!("dynamic_k=1-{m}"),
            Variant::DynamicOccOnly => "dynamic_k_occ_only".into(),
            Variant::NoRgb => "-l_rgb".into(),
            Variant::NoPc => "-l_pc".into(),
        }
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match *self {
            Variant::FixedK(k) => c.candidates = vec![k],
            Variant::Dynamic(m) => c.candidates = (1..=m).collect(),
            Variant::DynamicOccOnly => {
                c.use_rgb = false;
                c.use_pc = false;
            }
            Variant::NoRgb => c.use_rgb = false,
            Variant::NoPc => c.use_pc = false,
        }
        c
    }

    /// Comma-separated list: `fixed_k=3,dynamic_k,dynamic_k=1-4,-l_rgb,-l_pc,occ_only`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(Self::from_str).collect()
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(k) = s.strip_prefix("fixed_k=") {
            return Ok(Variant::FixedK(scalar("fixed_k", k)?));
        }
        if let Some(r) = s.strip_prefix("dynamic_k=1-") {
            return Ok(Variant::Dynamic(scalar("dynamic_k", r)?));
        }
        match s {
            "dynamic_k" | "dynamic" => Ok(Variant::Dynamic(4)),
            "occ_only" | "dynamic_k_occ_only" => Ok(Variant::DynamicOccOnly),
            "-l_rgb" | "no_rgb" => Ok(Variant::NoRgb),
            "-l_pc" | "no_pc" => Ok(Variant::NoPc),
            other => Err(Error::Parse(format!("unknown variant `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_text_roundtrip() {
        for s in [SceneSpec::default(), SceneSpec::small_objects(), SceneSpec::large_objects()] {
            assert_eq!(SceneSpec::parse(&s.to_text()).unwrap(), s);
        }
        let mut empty = SceneSpec::default();
        empty.objects.clear();
        assert_eq!(SceneSpec::parse(&empty.to_text()).unwrap(), empty);
    }

    #[test]
    fn config_text_roundtrip() {
        let c = RunConfig { candidates: vec![1, 3], lambda: 0.0, seed: 9, ..Default::default() };
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_and_bad_keys() {
        assert!(matches!(RunConfig::parse("lamda = 0.1"), Err(Error::Config(_))));
        assert!(RunConfig::parse("lambda = 2").is_err());
        assert!(SceneSpec::parse("object = box small 10 0 0.5 0.1 0.1 0.1 2 1 1 1").is_err());
        assert!(SceneSpec::parse("object = box small 0 0 0.5 0.1 0.1 0.1 7 1 1 1").is_err());
    }

    #[test]
    fn variants() {
        let v = Variant::parse_list("fixed_k=3, dynamic_k=1-4,-l_pc").unwrap();
        assert_eq!(v, vec![Variant::FixedK(3), Variant::Dynamic(4), Variant::NoPc]);
        let c = v[0].apply(&RunConfig::default());
        assert_eq!(c.candidates, vec![3]);
    }
}
