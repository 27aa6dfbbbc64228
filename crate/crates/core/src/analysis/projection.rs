use crate::{Error, Result};
use num_complex::Complex64;

/// Unit vector along ref_e − ref_g.
pub fn projection_axis(ref_g: Complex64, ref_e: Complex64) -> Result<Complex64> {
    let d = ref_e - ref_g;
    let scale = ref_g.norm().max(ref_e.norm());
    if !(d.norm() > 1e-12 * scale) || !d.norm().is_finite() {
        return Err(Error::DegenerateReferences);
    }
    Ok(d / d.norm())
}

#[inline]
pub fn project(point: Complex64, axis: Complex64) -> f64 {
    (axis.conj() * point).re
}

/// Coordinates of `points` along the maximal-separation axis through the references.
pub fn rotate_and_project(points: &[Complex64], ref_g: Complex64, ref_e: Complex64) -> Result<Vec<f64>> {
    let axis = projection_axis(ref_g, ref_e)?;
    Ok(points.iter().map(|&p| project(p, axis)).collect())
}
