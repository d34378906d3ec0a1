//! Plain-text field checkpoints: one primitive per line,
//! `mu_x mu_y mu_z ls_x ls_y ls_z qw qx qy qz op_logit cr cg cb provenance`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussian_field::primitive::{GaussianField, GaussianPrimitive, Provenance, PARAMS_PER_PRIMITIVE};
use crate::scalar::Real;

pub fn field_to_text<T: Real>(field: &GaussianField<T>) -> String {
    let mut s = String::new();
    for (g, p) in field.primitives.iter().zip(&field.provenance) {
        for v in g.raw() {
            write!(s, "{v} ").unwrap();
        }
        s.push_str(p.as_str());
        s.push('\n');
    }
    s
}

/// Anchors are not stored; a loaded field maps every non-densified
/// primitive to its own row.
pub fn field_from_text<T: Real>(text: &str) -> Result<GaussianField<T>> {
    let mut prims = Vec::new();
    let mut prov = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != PARAMS_PER_PRIMITIVE + 1 {
            return Err(Error::Parse(format!("line {}: expected {} fields, got {}", n + 1, PARAMS_PER_PRIMITIVE + 1, fields.len())));
        }
        let raw: Vec<T> = fields[..PARAMS_PER_PRIMITIVE]
            .iter()
            .map(|f| f.parse::<f64>().map(T::of).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1))))
            .collect::<Result<_>>()?;
        let g = GaussianPrimitive::from_raw(&raw);
        if !g.is_finite() {
            return Err(Error::Parse(format!("line {}: non-finite parameter", n + 1)));
        }
        prims.push(g);
        prov.push(Provenance::parse(fields[PARAMS_PER_PRIMITIVE])?);
    }
    Ok(GaussianField::new(prims, prov))
}

pub fn write_field<T: Real>(field: &GaussianField<T>, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, field_to_text(field))?)
}

pub fn read_field<T: Real>(path: impl AsRef<Path>) -> Result<GaussianField<T>> {
    field_from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let g = GaussianPrimitive {
            mu: [0.1, -2.0 / 3.0, 1e-17],
            log_scale: [-1.3862943611198906; 3],
            rot: [0.9, 0.1, -0.3, 0.2],
            opacity_logit: 1.0 / 7.0,
            color: [-0.5, 0.0, 3.25],
        };
        let f = GaussianField::new(vec![g, g], vec![Provenance::VoxelAnchor, Provenance::Densified]);
        let text = field_to_text(&f);
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().ends_with(" voxel_anchor"));
        let back: GaussianField<f64> = field_from_text(&text).unwrap();
        assert_eq!(back.primitives, f.primitives);
        assert_eq!(back.provenance, f.provenance);
    }

    #[test]
    fn malformed_lines() {
        assert!(field_from_text::<f64>("1 2 3 point_anchor").is_err());
        assert!(field_from_text::<f64>(&format!("{}bogus", "0 ".repeat(14))).is_err());
        assert!(field_from_text::<f64>(&format!("{}point_anchor", "NaN ".repeat(14))).is_err());
    }
}
