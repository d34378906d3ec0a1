use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse_voxel::VoxelGridSpec;

/// Dense semantic labels: 0 is empty, `1..=num_classes` are semantic classes.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid<T> {
    pub spec: VoxelGridSpec<T>,
    pub num_classes: usize,
    pub labels: Vec<usize>,
}

impl<T: Real> OccupancyGrid<T> {
    pub fn new(spec: VoxelGridSpec<T>, num_classes: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != spec.num_voxels() {
            return Err(Error::Size(format!("{} labels for {} voxels", labels.len(), spec.num_voxels())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > num_classes) {
            return Err(Error::Range(format!("label {bad} outside [0, {num_classes}]")));
        }
        Ok(Self { spec, num_classes, labels })
    }

    pub fn empty(spec: VoxelGridSpec<T>, num_classes: usize) -> Self {
        Self { labels: vec![0; spec.num_voxels()], spec, num_classes }
    }

    pub fn get(&self, idx: [usize; 3]) -> usize {
        self.labels[self.spec.linear(idx)]
    }

    pub fn set(&mut self, idx: [usize; 3], label: usize) {
        let l = self.spec.linear(idx);
        self.labels[l] = label;
    }

    pub fn occupied(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// `dims x y z` header, then one label per line in linear order.
    pub fn to_text(&self) -> String {
        let d = self.spec.dims;
        let mut s = format!("dims {} {} {}\n", d[0], d[1], d[2]);
        for l in &self.labels {
            writeln!(s, "{l}").unwrap();
        }
        s
    }

    /// Parses labels exported by [`to_text`](Self::to_text) onto `spec`.
    pub fn from_text(text: &str, spec: VoxelGridSpec<T>, num_classes: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("missing dims header".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "dims" {
            return Err(Error::Parse(format!("bad header `{header}`")));
        }
        let dims: Vec<usize> = parts[1..].iter().map(|p| p.parse().map_err(|e| Error::Parse(format!("dims: {e}")))).collect::<Result<_>>()?;
        if dims != spec.dims {
            return Err(Error::Parse(format!("dims {dims:?} do not match grid {:?}", spec.dims)));
        }
        let labels = lines.map(|l| l.trim().parse::<usize>().map_err(|e| Error::Parse(format!("label `{l}`: {e}")))).collect::<Result<_>>()?;
        Self::new(spec, num_classes, labels)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// Geometric IoU, per-class IoU (`None` for classes absent from ground truth)
/// and their mean over present classes.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMetrics {
    pub iou: f64,
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

pub fn iou_miou<T: Real>(pred: &OccupancyGrid<T>, gt: &OccupancyGrid<T>, num_classes: usize) -> Result<OccupancyMetrics> {
    if pred.spec != gt.spec {
        return Err(Error::Config("prediction and ground truth use different grids".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    let mut tp = vec![0usize; num_classes + 1];
    let mut fp = vec![0usize; num_classes + 1];
    let mut fn_ = vec![0usize; num_classes + 1];
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if p > num_classes || g > num_classes {
            return Err(Error::Range(format!("label outside [0, {num_classes}]")));
        }
        inter += usize::from(p > 0 && g > 0);
        union += usize::from(p > 0 || g > 0);
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let per_class: Vec<Option<f64>> = (1..=num_classes)
        .map(|c| (tp[c] + fn_[c] > 0).then(|| tp[c] as f64 / (tp[c] + fp[c] + fn_[c]) as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    Ok(OccupancyMetrics { iou, per_class, miou })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> VoxelGridSpec<f64> {
        VoxelGridSpec::new([0.0; 3], 1.0, [2, 2, 2]).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = OccupancyGrid::new(spec(), 3, vec![0, 1, 2, 3, 0, 1, 0, 0]).unwrap();
        let m = iou_miou(&g, &g, 3).unwrap();
        assert_eq!((m.iou, m.miou), (1.0, 1.0));
    }

    #[test]
    fn empty_prediction() {
        let g = OccupancyGrid::new(spec(), 3, vec![0, 1, 2, 3, 0, 1, 0, 0]).unwrap();
        let m = iou_miou(&OccupancyGrid::empty(spec(), 3), &g, 3).unwrap();
        assert_eq!((m.iou, m.miou), (0.0, 0.0));
    }

    #[test]
    fn absent_class_excluded() {
        let g = OccupancyGrid::new(spec(), 3, vec![0, 1, 1, 0, 0, 0, 0, 0]).unwrap();
        let p = OccupancyGrid::new(spec(), 3, vec![0, 1, 2, 0, 0, 0, 0, 0]).unwrap();
        let m = iou_miou(&p, &g, 3).unwrap();
        assert_eq!(m.per_class, vec![Some(0.5), None, None]);
        assert_eq!(m.miou, 0.5);
        assert_eq!(m.iou, 1.0);
    }

    #[test]
    fn text_roundtrip() {
        let g = OccupancyGrid::new(spec(), 3, vec![0, 1, 2, 3, 0, 1, 0, 0]).unwrap();
        let t = g.to_text();
        assert!(t.starts_with("dims 2 2 2\n0\n1\n"));
        assert_eq!(OccupancyGrid::from_text(&t, spec(), 3).unwrap(), g);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(OccupancyGrid::new(spec(), 2, vec![0, 3, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(OccupancyGrid::new(spec(), 2, vec![0; 7]).is_err());
    }
}
