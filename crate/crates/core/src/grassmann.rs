//! Grassmann manifold interpolation of POD subspaces.
//!
//! All geometry is carried out in `W^{1/2}` coordinates (`U = W^{1/2} Phi`),
//! where weighted orthonormality becomes Euclidean orthonormality.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{scale_rows, thin_svd, unscale_rows};
use crate::plan::lagrange_weights;
use crate::pod::PodBasis;
use crate::snapshot::Quadrature;

/// Smallest singular value of `U_0^T U_j` accepted by the log map.
pub const MIN_OVERLAP_SINGULAR_VALUE: f64 = 1e-10;

/// Tangent-space representative of a basis at a reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentImage {
    /// `W^{-1/2} Gamma`, same shape as the mode matrix.
    pub gamma: DMatrix<f64>,
    pub reference_id: u64,
    pub parameter: f64,
}

fn check_pair(reference: &PodBasis, other: &PodBasis, w: &Quadrature) -> Result<()> {
    reference.check_weights(w)?;
    other.check_weights(w)?;
    if reference.modes.shape() != other.modes.shape() {
        return Err(Error::Dimension(format!(
            "bases of shape {:?} and {:?}",
            reference.modes.shape(),
            other.modes.shape()
        )));
    }
    Ok(())
}

/// Log map in scaled coordinates: `(I - U0 U0^T) Uj (U0^T Uj)^{-1} = M Xi N^T`,
/// `Gamma = M atan(Xi) N^T`.
pub(crate) fn log_scaled(u0: &DMatrix<f64>, uj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = u0.transpose() * uj;
    let svd_c = thin_svd(&c);
    let smallest = svd_c.s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > MIN_OVERLAP_SINGULAR_VALUE) {
        return Err(Error::GeodesicDomain { singular_value: smallest });
    }
    // C^{-1} = V S^{-1} U^T
    let mut v_scaled = svd_c.v.clone();
    for (k, s) in svd_c.s.iter().enumerate() {
        v_scaled.column_mut(k).unscale_mut(*s);
    }
    let c_inv = v_scaled * svd_c.u.transpose();
    let horizontal = uj - u0 * &c;
    let x = horizontal * c_inv;
    let svd = thin_svd(&x);
    let mut m = svd.u;
    for (k, s) in svd.s.iter().enumerate() {
        m.column_mut(k).scale_mut(s.atan());
    }
    Ok(m * svd.v.transpose())
}

/// Exp map in scaled coordinates: `Gamma = M Xi N^T`,
/// `U = (U0 N cos(Xi) + M sin(Xi)) N^T`.
pub(crate) fn exp_scaled(u0: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = thin_svd(gamma);
    if let Some(&big) = svd.s.iter().find(|&&s| s >= std::f64::consts::FRAC_PI_2) {
        log::warn!("interpolated tangent has a principal angle of {big:.4} rad >= pi/2; the geodesic may leave the injectivity radius");
    }
    let mut cos_part = u0 * &svd.v;
    let mut sin_part = svd.u;
    for (k, s) in svd.s.iter().enumerate() {
        cos_part.column_mut(k).scale_mut(s.cos());
        sin_part.column_mut(k).scale_mut(s.sin());
    }
    (cos_part + sin_part) * svd.v.transpose()
}

/// Tangent image of `target` at `reference`.
pub fn log_map(reference: &PodBasis, target: &PodBasis, w: &Quadrature) -> Result<TangentImage> {
    check_pair(reference, target, w)?;
    let gamma = log_scaled(&reference.scaled_modes(w), &target.scaled_modes(w))?;
    Ok(TangentImage {
        gamma: unscale_rows(&gamma, w.sqrt_weights()),
        reference_id: reference.content_id(),
        parameter: target.parameter,
    })
}

/// Basis at the end of the geodesic from `reference` along `tangent`.
pub fn exp_map(reference: &PodBasis, tangent: &TangentImage, w: &Quadrature) -> Result<PodBasis> {
    reference.check_weights(w)?;
    if tangent.reference_id != reference.content_id() {
        return Err(Error::Pairing("tangent image was computed at a different reference basis".into()));
    }
    if tangent.gamma.shape() != reference.modes.shape() {
        return Err(Error::Dimension(format!(
            "tangent of shape {:?} for a basis of shape {:?}",
            tangent.gamma.shape(),
            reference.modes.shape()
        )));
    }
    let u = exp_scaled(
        &reference.scaled_modes(w),
        &scale_rows(&tangent.gamma, w.sqrt_weights()),
    );
    let mut out = PodBasis::from_modes(
        unscale_rows(&u, w.sqrt_weights()),
        tangent.parameter,
        w,
        reference.field_layout.clone(),
    )?;
    out.singular_values = reference.singular_values.clone();
    Ok(out)
}

pub(crate) fn check_interpolation_inputs(
    bases: &[PodBasis],
    reference_index: usize,
    w: &Quadrature,
) -> Result<()> {
    if bases.len() < 2 {
        return Err(Error::Catalog(format!("interpolation needs at least 2 bases, got {}", bases.len())));
    }
    let reference = bases
        .get(reference_index)
        .ok_or_else(|| Error::Catalog(format!("reference index {reference_index} out of range")))?;
    for (j, b) in bases.iter().enumerate() {
        check_pair(reference, b, w).map_err(|e| e.in_case(j))?;
        if b.field_layout != reference.field_layout {
            return Err(Error::Pairing("bases have different field layouts".into()).in_case(j));
        }
    }
    Ok(())
}

/// Lagrange interpolation of the tangent images at `target`, mapped back
/// through the exponential map at `bases[reference_index]`.
pub fn gmi_interpolate(
    bases: &[PodBasis],
    reference_index: usize,
    target: f64,
    w: &Quadrature,
) -> Result<PodBasis> {
    check_interpolation_inputs(bases, reference_index, w)?;
    let params: Vec<f64> = bases.iter().map(|b| b.parameter).collect();
    let sigma = lagrange_weights(&params, target)?;
    let reference = &bases[reference_index];
    let u0 = reference.scaled_modes(w);
    let tangents: Vec<Option<DMatrix<f64>>> = bases
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            if sigma[j] == 0.0 {
                Ok(None)
            } else if j == reference_index {
                // log of the base point is exactly zero
                Ok(None)
            } else {
                log_scaled(&u0, &b.scaled_modes(w)).map(Some).map_err(|e| e.in_case(j))
            }
        })
        .collect::<Result<_>>()?;
    let mut gamma = DMatrix::zeros(u0.nrows(), u0.ncols());
    for (g, s) in tangents.iter().zip(&sigma) {
        if let Some(g) = g {
            gamma += g * *s;
        }
    }
    let u = exp_scaled(&u0, &gamma);
    let mut out = PodBasis::from_modes(
        unscale_rows(&u, w.sqrt_weights()),
        target,
        w,
        reference.field_layout.clone(),
    )?;
    out.singular_values = reference.singular_values.clone();
    Ok(out)
}
