//! Relative reconstruction errors in the object and data domains.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{norm_sqr, ComplexField, Volume};
use crate::propagation::PropagatorPlan;

fn diff_norm(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_sqr(&d).sqrt()
}

/// `‖truth − estimate‖ / ‖truth‖`.
pub fn object_domain_error(truth: &Volume, estimate: &Volume) -> Result<f64> {
    if !truth.same_shape(estimate) {
        return Err(Error::Dimension(
            "estimate and ground truth have different shapes".into(),
        ));
    }
    let denom = norm_sqr(truth.values()).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("ground truth has zero norm".into()));
    }
    Ok(diff_norm(truth.values(), estimate.values()) / denom)
}

/// `‖V − A·estimate‖ / ‖V‖`.
pub fn data_domain_error(v: &ComplexField, estimate: &Volume, plan: &PropagatorPlan) -> Result<f64> {
    let predicted = plan.forward(estimate)?;
    relative_residual(v, &predicted)
}

/// `‖V − predicted‖ / ‖V‖` for an already propagated estimate.
pub fn relative_residual(v: &ComplexField, predicted: &ComplexField) -> Result<f64> {
    if v.grid() != predicted.grid() {
        return Err(Error::Dimension("field grids differ".into()));
    }
    let denom = norm_sqr(v.values()).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("data field has zero norm".into()));
    }
    Ok(diff_norm(v.values(), predicted.values()) / denom)
}

/// Median voxel magnitude on and off the nonzero support of `truth`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportContrast {
    pub median_on: f64,
    pub median_off: f64,
}

impl SupportContrast {
    /// `median_on / median_off`; infinite when the off-support median is zero.
    pub fn ratio(&self) -> f64 {
        self.median_on / self.median_off
    }
}

pub fn support_contrast(truth: &Volume, estimate: &Volume) -> Result<SupportContrast> {
    if !truth.same_shape(estimate) {
        return Err(Error::Dimension(
            "estimate and ground truth have different shapes".into(),
        ));
    }
    let mut on = Vec::new();
    let mut off = Vec::new();
    for (t, e) in truth.values().iter().zip(estimate.values()) {
        if t.norm() > 0.0 {
            on.push(e.norm());
        } else {
            off.push(e.norm());
        }
    }
    if on.is_empty() || off.is_empty() {
        return Err(Error::UndefinedMetric(
            "support contrast needs voxels both on and off the support".into(),
        ));
    }
    Ok(SupportContrast {
        median_on: median(&mut on),
        median_off: median(&mut off),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
