//! Mode-realigned pointwise interpolation.
//!
//! Modes are paired into complex columns (`phi^1`, `phi^2 + i phi^3`, ...),
//! each case is sign- and phase-aligned to the reference case, and the
//! aligned columns are Lagrange-interpolated entry by entry. Inner products
//! are weighted by the quadrature, i.e. Euclidean in `W^{1/2}` coordinates.

use std::path::Path;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::export::{fmt_f64, write_table};
use crate::grassmann::check_interpolation_inputs;
use crate::linalg::{orthonormal_columns, scale_rows, unscale_rows};
use crate::plan::lagrange_weights;
use crate::pod::PodBasis;
use crate::snapshot::Quadrature;

type C64 = Complex<f64>;

/// Relative magnitude below which a Kasner angle is undefined.
pub const KASNER_THRESHOLD: f64 = 1e-12;

/// Allowed deviation of `sigma_{2k-2} / sigma_{2k-1}` from 1 before a pair is flagged.
pub const PAIR_RATIO_TOLERANCE: f64 = 0.2;

/// Complex-paired modes of one case together with the alignment applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexModePack {
    /// `N_n x (N_r + 1) / 2`.
    pub cmodes: DMatrix<C64>,
    pub parameter: f64,
    /// Content id of the reference pack this one was aligned to.
    pub aligned_to: Option<u64>,
    /// Kasner angle removed from each column (radians).
    pub applied_angles: Vec<f64>,
    /// `(real sign, imaginary sign)` applied to each column.
    pub applied_signs: Vec<(i8, i8)>,
}

impl ComplexModePack {
    pub fn n_columns(&self) -> usize {
        self.cmodes.ncols()
    }

    pub fn content_id(&self) -> u64 {
        crate::linalg::content_hash(self.cmodes.iter().flat_map(|c| [&c.re, &c.im]))
    }

    #[cfg(test)]
    fn column_parts(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        self.cmodes.column(k).iter().map(|c| (c.re, c.im)).unzip()
    }

    /// Real modes recovered from the pack: `Re c_1, Re c_2, Im c_2, ...`.
    pub fn to_real_modes(&self) -> DMatrix<f64> {
        let n = self.cmodes.nrows();
        let r = 2 * self.n_columns() - 1;
        DMatrix::from_fn(n, r, |i, j| {
            if j == 0 {
                self.cmodes[(i, 0)].re
            } else if j % 2 == 1 {
                self.cmodes[(i, j.div_ceil(2))].re
            } else {
                self.cmodes[(i, j / 2)].im
            }
        })
    }
}

/// Pairs the modes of `basis`; `N_r` must be odd.
pub fn complexify(basis: &PodBasis) -> Result<ComplexModePack> {
    let r = basis.n_rank();
    if r.is_multiple_of(2) {
        return Err(Error::Parity { n_rank: r });
    }
    let n = basis.n_dof();
    let cols = r.div_ceil(2);
    let m = &basis.modes;
    let cmodes = DMatrix::from_fn(n, cols, |i, k| {
        if k == 0 {
            C64::new(m[(i, 0)], 0.0)
        } else {
            C64::new(m[(i, 2 * k - 1)], m[(i, 2 * k)])
        }
    });
    Ok(ComplexModePack {
        cmodes,
        parameter: basis.parameter,
        aligned_to: None,
        applied_angles: vec![0.0; cols],
        applied_signs: vec![(1, 1); cols],
    })
}

fn sgn(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

fn check_shapes(reference: &ComplexModePack, pack: &ComplexModePack, weights: &[f64]) -> Result<()> {
    if reference.cmodes.shape() != pack.cmodes.shape() || weights.len() != pack.cmodes.nrows() {
        return Err(Error::Dimension(format!(
            "packs of shape {:?} and {:?} with {} weights",
            reference.cmodes.shape(),
            pack.cmodes.shape(),
            weights.len()
        )));
    }
    Ok(())
}

/// Flips the real and imaginary parts of each column independently so their
/// weighted dot products with the reference's are non-negative (`sgn(0) = +1`).
pub fn sign_align(reference: &ComplexModePack, pack: &ComplexModePack, weights: &[f64]) -> Result<ComplexModePack> {
    check_shapes(reference, pack, weights)?;
    let mut out = pack.clone();
    sign_align_in_place(reference, &mut out, weights, reference.content_id());
    Ok(out)
}

fn column_slice(m: &DMatrix<C64>, k: usize) -> &[C64] {
    let n = m.nrows();
    &m.as_slice()[k * n..(k + 1) * n]
}

fn sign_align_in_place(reference: &ComplexModePack, pack: &mut ComplexModePack, weights: &[f64], reference_id: u64) {
    for k in 0..pack.n_columns() {
        let (mut dot_re, mut dot_im) = (0.0, 0.0);
        for ((a, b), w) in column_slice(&reference.cmodes, k).iter().zip(column_slice(&pack.cmodes, k)).zip(weights) {
            dot_re += w * a.re * b.re;
            dot_im += w * a.im * b.im;
        }
        let (s_re, s_im) = (sgn(dot_re), sgn(dot_im));
        if (s_re, s_im) != (1, 1) {
            for c in pack.cmodes.column_mut(k).iter_mut() {
                *c = C64::new(c.re * f64::from(s_re), c.im * f64::from(s_im));
            }
        }
        let (old_re, old_im) = pack.applied_signs[k];
        pack.applied_signs[k] = (old_re * s_re, old_im * s_im);
    }
    pack.aligned_to = Some(reference_id);
}

fn complex_inner(a: &[C64], b: &[C64], weights: Option<&[f64]>) -> (C64, f64, f64) {
    let mut dot = C64::new(0.0, 0.0);
    let mut na = 0.0;
    let mut nb = 0.0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        dot += x.conj() * y * w;
        na += x.norm_sqr() * w;
        nb += y.norm_sqr() * w;
    }
    (dot, na.sqrt(), nb.sqrt())
}

fn kasner_impl(a: &[C64], b: &[C64], weights: Option<&[f64]>, column: usize) -> Result<f64> {
    let (dot, na, nb) = complex_inner(a, b, weights);
    let magnitude = dot.norm();
    if !(magnitude > KASNER_THRESHOLD * na * nb) {
        return Err(Error::UndefinedAngle { column, magnitude });
    }
    Ok(dot.im.atan2(dot.re))
}

/// `arg(a^* b)`, in `[-pi, pi]`.
pub fn kasner_angle(a: &[C64], b: &[C64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    kasner_impl(a, b, None, 0)
}

/// `arg(sum_i w_i conj(a_i) b_i)`.
pub fn kasner_angle_weighted(a: &[C64], b: &[C64], weights: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {} with {} weights",
            a.len(),
            b.len(),
            weights.len()
        )));
    }
    kasner_impl(a, b, Some(weights), 0)
}

/// Rotates each paired column by `exp(-i phi)` where `phi` is its Kasner angle
/// to the reference column. The first column is real in both packs, so after
/// sign alignment its rotation is the identity and it is left untouched.
pub fn rotation_align(reference: &ComplexModePack, pack: &ComplexModePack, weights: &[f64]) -> Result<ComplexModePack> {
    check_shapes(reference, pack, weights)?;
    let mut out = pack.clone();
    rotation_align_in_place(reference, &mut out, weights, reference.content_id())?;
    Ok(out)
}

fn rotation_align_in_place(
    reference: &ComplexModePack,
    pack: &mut ComplexModePack,
    weights: &[f64],
    reference_id: u64,
) -> Result<()> {
    for k in 1..pack.n_columns() {
        let phi = kasner_impl(column_slice(&reference.cmodes, k), column_slice(&pack.cmodes, k), Some(weights), k)?;
        let rot = C64::from_polar(1.0, -phi);
        for c in pack.cmodes.column_mut(k).iter_mut() {
            *c *= rot;
        }
        pack.applied_angles[k] = wrap_angle(pack.applied_angles[k] + phi);
    }
    pack.aligned_to = Some(reference_id);
    Ok(())
}

fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI && x > 0.0 {
        PI
    } else {
        y
    }
}

/// Post-processing applied to the interpolated modes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MrpwiOptions {
    /// Weighted-orthonormalize the interpolated modes (QR in `W^{1/2}` coordinates).
    pub orthonormalize: bool,
}

/// Result of [`mrpwi_interpolate_detailed`].
#[derive(Debug, Clone)]
pub struct MrpwiOutput {
    pub basis: PodBasis,
    /// Aligned pack of every input case, in input order.
    pub packs: Vec<ComplexModePack>,
}

/// MRPWI interpolation of `bases` at `target`.
pub fn mrpwi_interpolate(
    bases: &[PodBasis],
    reference_index: usize,
    target: f64,
    w: &Quadrature,
    options: MrpwiOptions,
) -> Result<PodBasis> {
    mrpwi_interpolate_detailed(bases, reference_index, target, w, options).map(|o| o.basis)
}

/// As [`mrpwi_interpolate`], also returning the aligned packs for diagnostics.
pub fn mrpwi_interpolate_detailed(
    bases: &[PodBasis],
    reference_index: usize,
    target: f64,
    w: &Quadrature,
    options: MrpwiOptions,
) -> Result<MrpwiOutput> {
    check_interpolation_inputs(bases, reference_index, w)?;
    let params: Vec<f64> = bases.iter().map(|b| b.parameter).collect();
    let sigma = lagrange_weights(&params, target)?;
    let reference = complexify(&bases[reference_index]).map_err(|e| e.in_case(reference_index))?;
    let weights = w.weights();
    let reference_id = reference.content_id();
    let packs: Vec<ComplexModePack> = bases
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            let mut pack = complexify(b).map_err(|e| e.in_case(j))?;
            sign_align_in_place(&reference, &mut pack, weights, reference_id);
            rotation_align_in_place(&reference, &mut pack, weights, reference_id).map_err(|e| e.in_case(j))?;
            Ok(pack)
        })
        .collect::<Result<_>>()?;

    let mut sum = DMatrix::<C64>::zeros(reference.cmodes.nrows(), reference.n_columns());
    for (pack, s) in packs.iter().zip(&sigma) {
        if *s != 0.0 {
            sum.zip_apply(&pack.cmodes, |acc, c| *acc += c * *s);
        }
    }
    let interpolated = ComplexModePack {
        cmodes: sum,
        parameter: target,
        aligned_to: Some(reference_id),
        applied_angles: vec![0.0; reference.n_columns()],
        applied_signs: vec![(1, 1); reference.n_columns()],
    };
    let mut modes = interpolated.to_real_modes();
    if options.orthonormalize {
        modes = unscale_rows(&orthonormal_columns(&scale_rows(&modes, w.sqrt_weights())), w.sqrt_weights());
    }
    let ref_basis = &bases[reference_index];
    let mut basis = PodBasis::from_modes(modes, target, w, ref_basis.field_layout.clone())?;
    basis.singular_values = ref_basis.singular_values.clone();
    Ok(MrpwiOutput { basis, packs })
}

/// Ratio `sigma_{2k-2} / sigma_{2k-1}` (1-based) for one complex column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDiagnostic {
    /// 0-based complex column index (`>= 1`).
    pub column: usize,
    pub ratio: f64,
    pub ok: bool,
}

/// Checks the traveling-wave pairing premise on the singular values of a
/// POD basis and logs a warning for every suspicious pair.
pub fn pair_integrity(basis: &PodBasis) -> Vec<PairDiagnostic> {
    let s = &basis.singular_values;
    let out: Vec<PairDiagnostic> = (1..basis.n_rank().div_ceil(2))
        .filter(|&k| 2 * k < s.len())
        .map(|k| {
            let ratio = s[2 * k - 1] / s[2 * k];
            PairDiagnostic {
                column: k,
                ratio,
                ok: (ratio - 1.0).abs() <= PAIR_RATIO_TOLERANCE,
            }
        })
        .collect();
    if basis.singular_values_authoritative {
        for d in out.iter().filter(|d| !d.ok) {
            log::warn!(
                "case {}: modes {} and {} have singular-value ratio {:.3}; pairing may not hold",
                basis.parameter,
                2 * d.column,
                2 * d.column + 1,
                d.ratio
            );
        }
    }
    out
}

/// Exports `case, column, sign_re, sign_im, angle` rows.
pub fn write_alignment_csv(path: &Path, packs: &[ComplexModePack]) -> Result<()> {
    let rows = packs.iter().enumerate().flat_map(|(j, p)| {
        (0..p.n_columns()).map(move |k| {
            vec![
                j.to_string(),
                k.to_string(),
                p.applied_signs[k].0.to_string(),
                p.applied_signs[k].1.to_string(),
                fmt_f64(p.applied_angles[k]),
            ]
        })
    });
    write_table(path, &["case", "column", "sign_re", "sign_im", "angle"], rows)
}
