use super::pointset::{dot, PointSet};
use super::spatial::NearestIndex;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Neighbourhood size, angle threshold (degrees) and weight of the high-curvature rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureRule {
    pub k: usize,
    pub angle_deg: f64,
    pub high_weight: f64,
}

impl Default for CurvatureRule {
    fn default() -> Self {
        CurvatureRule {
            k: 16,
            angle_deg: 60.0,
            high_weight: 5.0,
        }
    }
}

/// Per-point weight: `high_weight` where the largest pairwise normal angle among the
/// `k` nearest neighbours (the point included) exceeds the threshold, else 1.
pub fn curvature_weights<T: Scalar>(gt: &PointSet<T>, rule: CurvatureRule) -> Result<Vec<T>> {
    let normals = gt.require_normals()?;
    if rule.k == 0 || rule.k > gt.len() {
        return Err(Error::invalid(format!("curvature neighbourhood {} for {} points", rule.k, gt.len())));
    }
    let cos_t = T::lit(rule.angle_deg.to_radians().cos());
    let index = NearestIndex::new(&gt.points);
    let high = T::lit(rule.high_weight);
    Ok(gt
        .points
        .iter()
        .map(|&p| {
            let nb = index.k_nearest(p, rule.k);
            let sharp = nb.iter().enumerate().any(|(a, &i)| {
                nb[a + 1..].iter().any(|&j| dot(normals[i], normals[j]) < cos_t)
            });
            if sharp {
                high
            } else {
                T::one()
            }
        })
        .collect())
}
