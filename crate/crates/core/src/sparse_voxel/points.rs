use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::renderer::camera::Vec3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarPoint<T> {
    pub position: Vec3<T>,
    pub intensity: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud<T> {
    pub points: Vec<LidarPoint<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<LidarPoint<T>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.position.iter().any(|v| !v.is_finite())) {
            return Err(Error::Range(format!("point {i} has non-finite coordinates")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One `x y z intensity` line per point; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 fields, got {}", n + 1, vals.len())));
            }
            points.push(LidarPoint { position: [T::of(vals[0]), T::of(vals[1]), T::of(vals[2])], intensity: T::of(vals[3]) });
        }
        Self::new(points)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# x y z intensity\n");
        for p in &self.points {
            let [x, y, z] = p.position;
            writeln!(s, "{x} {y} {z} {}", p.intensity).unwrap();
        }
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn contains(&self, p: Vec3<T>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Keeps points inside `bounds` that have at least `min_neighbors` other
/// points within `radius`. Order is preserved.
pub fn range_filter<T: Real>(pc: &PointCloud<T>, bounds: &Aabb<T>, min_neighbors: usize, radius: T) -> Result<PointCloud<T>> {
    let inside: Vec<&LidarPoint<T>> = pc.points.iter().filter(|p| bounds.contains(p.position)).collect();
    if min_neighbors == 0 {
        return Ok(PointCloud { points: inside.into_iter().copied().collect() });
    }
    if !(radius > T::zero()) {
        return Err(Error::Config(format!("neighbor radius must be positive, got {radius}")));
    }
    let cell = |p: Vec3<T>| -> [i64; 3] { p.map(|v| (v / radius).floor().to_i64().unwrap_or(0)) };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in inside.iter().enumerate() {
        buckets.entry(cell(p.position)).or_default().push(i);
    }
    let r2 = radius * radius;
    let mut kept = Vec::new();
    for (i, p) in inside.iter().enumerate() {
        let c = cell(p.position);
        let mut count = 0usize;
        'search: for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(b) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else { continue };
                    for &j in b {
                        if j == i {
                            continue;
                        }
                        let q = inside[j].position;
                        let d2: T = (0..3).map(|a| (q[a] - p.position[a]).powi(2)).sum();
                        if d2 <= r2 {
                            count += 1;
                            if count >= min_neighbors {
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        if count >= min_neighbors {
            kept.push(**p);
        }
    }
    Ok(PointCloud { points: kept })
}
