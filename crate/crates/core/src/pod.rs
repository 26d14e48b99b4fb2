//! Weighted proper orthogonal decomposition.
//!
//! With `W` the diagonal quadrature, the weighted snapshot matrix is split as
//! `W^{1/2} Q ~ U S V^T` (rank `N_r`) and the modes are `Phi = W^{-1/2} U`,
//! which are orthonormal in the weighted inner product.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::linalg::{max_abs_deviation_from_identity, scale_rows, thin_svd, unscale_rows};
use crate::psnap::{read_psnap, write_psnap, PsnapHeader};
use crate::snapshot::{weighted_dot, FieldLayout, Quadrature, SnapshotSet};

/// Relative cutoff below which a requested mode is treated as noise.
pub const NEGLIGIBLE_SINGULAR_VALUE: f64 = 1e-12;

/// A truncated POD basis tagged with the parameter it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub modes: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// Right singular vectors (`N_s x N_r`); empty (`0 x N_r`) for interpolated bases.
    pub temporal: DMatrix<f64>,
    pub parameter: f64,
    /// Id of the [`Quadrature`] the modes are orthonormal under.
    pub weights_id: u64,
    pub field_layout: FieldLayout,
    /// False when `singular_values` are placeholders (interpolated bases).
    pub singular_values_authoritative: bool,
}

impl PodBasis {
    /// Basis with placeholder singular values and no temporal factor.
    pub fn from_modes(
        modes: DMatrix<f64>,
        parameter: f64,
        w: &Quadrature,
        field_layout: FieldLayout,
    ) -> Result<Self> {
        if modes.nrows() != w.len() || field_layout.n_dof() != modes.nrows() {
            return Err(Error::Dimension(format!(
                "{} mode rows, {} weights, layout of {} rows",
                modes.nrows(),
                w.len(),
                field_layout.n_dof()
            )));
        }
        let r = modes.ncols();
        Ok(PodBasis {
            modes,
            singular_values: DVector::from_element(r, 1.0),
            temporal: DMatrix::zeros(0, r),
            parameter,
            weights_id: w.id(),
            field_layout,
            singular_values_authoritative: false,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }

    pub fn n_rank(&self) -> usize {
        self.modes.ncols()
    }

    /// Content hash of the mode matrix.
    pub fn content_id(&self) -> u64 {
        crate::linalg::content_hash(self.modes.as_slice())
    }

    pub fn check_weights(&self, w: &Quadrature) -> Result<()> {
        if self.weights_id != w.id() || self.n_dof() != w.len() {
            return Err(Error::Pairing(format!(
                "basis was built with weights {:016x}, got {:016x}",
                self.weights_id,
                w.id()
            )));
        }
        Ok(())
    }

    /// Modes in `W^{1/2}` coordinates, where weighted orthonormality is Euclidean.
    pub fn scaled_modes(&self, w: &Quadrature) -> DMatrix<f64> {
        scale_rows(&self.modes, w.sqrt_weights())
    }

    /// Gram matrix `Phi^T W Phi`.
    pub fn gram(&self, w: &Quadrature) -> DMatrix<f64> {
        let u = self.scaled_modes(w);
        u.transpose() * u
    }

    /// `max |Phi^T W Phi - I|`.
    pub fn orthonormality_error(&self, w: &Quadrature) -> f64 {
        max_abs_deviation_from_identity(&self.gram(w))
    }

    /// First `r` modes of this basis.
    pub fn truncated(&self, r: usize) -> Result<PodBasis> {
        if r == 0 || r > self.n_rank() {
            return Err(Error::Rank(format!("cannot truncate {} modes to {r}", self.n_rank())));
        }
        let temporal = if self.temporal.nrows() > 0 {
            self.temporal.columns(0, r).into_owned()
        } else {
            DMatrix::zeros(0, r)
        };
        Ok(PodBasis {
            modes: self.modes.columns(0, r).into_owned(),
            singular_values: self.singular_values.rows(0, r).into_owned(),
            temporal,
            ..self.clone()
        })
    }
}

/// How the truncated SVD of `W^{1/2} Q` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdRoute {
    /// Thin SVD of the weighted data.
    #[default]
    Thin,
    /// Method of snapshots: eigendecomposition of the `N_s x N_s` correlation matrix.
    Snapshots,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PodOptions {
    pub route: SvdRoute,
    /// Remove the temporal mean before the decomposition (off by default).
    pub subtract_mean: bool,
}

/// POD of a snapshot set with default options.
pub fn compute_pod(s: &SnapshotSet, w: &Quadrature, n_rank: usize) -> Result<PodBasis> {
    compute_pod_with(s, w, n_rank, PodOptions::default())
}

pub fn compute_pod_with(
    s: &SnapshotSet,
    w: &Quadrature,
    n_rank: usize,
    opts: PodOptions,
) -> Result<PodBasis> {
    if w.len() != s.n_dof() {
        return Err(Error::Dimension(format!(
            "{} quadrature weights for {} degrees of freedom",
            w.len(),
            s.n_dof()
        )));
    }
    let max_rank = s.n_dof().min(s.n_snap());
    if n_rank == 0 || n_rank > max_rank {
        return Err(Error::Rank(format!(
            "requested {n_rank} modes from a {}x{} snapshot matrix (max {max_rank})",
            s.n_dof(),
            s.n_snap()
        )));
    }
    if s.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("snapshot matrix contains non-finite values".into()));
    }
    let centred;
    let s = if opts.subtract_mean {
        centred = s.mean_subtracted();
        &centred
    } else {
        s
    };
    let a = scale_rows(s.data(), w.sqrt_weights());
    let (u, sigma, v) = match opts.route {
        SvdRoute::Thin => {
            let svd = thin_svd(&a);
            (
                svd.u.columns(0, n_rank).into_owned(),
                svd.s.rows(0, n_rank).into_owned(),
                svd.v.columns(0, n_rank).into_owned(),
            )
        }
        SvdRoute::Snapshots => snapshots_route(&a, n_rank),
    };

    let lead = sigma[0];
    if !(lead > 0.0) {
        return Err(Error::Rank("snapshot matrix is zero".into()));
    }
    if let Some(k) = (0..n_rank).find(|&k| sigma[k] < NEGLIGIBLE_SINGULAR_VALUE * lead) {
        return Err(Error::Rank(format!(
            "mode {} has singular value {:e} < {NEGLIGIBLE_SINGULAR_VALUE:e} * sigma_1; at most {k} modes are meaningful",
            k + 1,
            sigma[k]
        )));
    }

    let mut modes = unscale_rows(&u, w.sqrt_weights());
    let mut temporal = v;
    apply_sign_convention(&mut modes, &mut temporal);

    Ok(PodBasis {
        modes,
        singular_values: sigma,
        temporal,
        parameter: s.parameter(),
        weights_id: w.id(),
        field_layout: s.field_layout().clone(),
        singular_values_authoritative: true,
    })
}

fn snapshots_route(a: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let ns = a.ncols();
    let mut v = DMatrix::zeros(ns, r);
    let mut sigma = DVector::zeros(r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        v.set_column(dst, &eig.eigenvectors.column(src));
        sigma[dst] = eig.eigenvalues[src].max(0.0).sqrt();
    }
    let mut u = a * &v;
    for k in 0..r {
        if sigma[k] > 0.0 {
            u.column_mut(k).unscale_mut(sigma[k]);
        }
    }
    (u, sigma, v)
}

/// Flips each mode so its largest-magnitude entry is positive (first index on ties).
fn apply_sign_convention(modes: &mut DMatrix<f64>, temporal: &mut DMatrix<f64>) {
    for k in 0..modes.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, x) in modes.column(k).iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if modes[(best, k)] < 0.0 {
            modes.column_mut(k).neg_mut();
            if temporal.nrows() > 0 {
                temporal.column_mut(k).neg_mut();
            }
        }
    }
}

/// Coefficients `alpha_l = <phi_l, q>_W`.
pub fn project(q: &[f64], basis: &PodBasis, w: &Quadrature) -> Result<DVector<f64>> {
    basis.check_weights(w)?;
    if q.len() != basis.n_dof() {
        return Err(Error::Dimension(format!(
            "state of length {} projected on {} rows",
            q.len(),
            basis.n_dof()
        )));
    }
    Ok(DVector::from_iterator(
        basis.n_rank(),
        basis
            .modes
            .column_iter()
            .map(|phi| weighted_dot(phi.as_slice(), q, w.weights())),
    ))
}

/// `Phi alpha`.
pub fn expand(basis: &PodBasis, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    if alpha.len() != basis.n_rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} modes",
            alpha.len(),
            basis.n_rank()
        )));
    }
    Ok(&basis.modes * alpha)
}

/// Writes a basis as PSNAP: the mode matrix is the payload (one column per
/// mode) and the quadrature weights are always included.
pub fn write_basis(path: &Path, basis: &PodBasis, w: &Quadrature) -> Result<()> {
    basis.check_weights(w)?;
    let sv: Vec<String> = basis.singular_values.iter().map(|&x| fmt_f64(x)).collect();
    let header = PsnapHeader {
        n_dof: basis.n_dof(),
        n_snap: basis.n_rank(),
        parameter: basis.parameter,
        dt_snap: 1.0,
        t0: 0.0,
        field_layout: basis.field_layout.clone(),
        has_weights: true,
        extras: vec![
            ("kind".into(), "pod_modes".into()),
            ("singular_values".into(), sv.join(",")),
            (
                "singular_values_authoritative".into(),
                u8::from(basis.singular_values_authoritative).to_string(),
            ),
            ("weights_id".into(), format!("{:016x}", basis.weights_id)),
        ],
    };
    write_psnap(path, &header, &basis.modes, Some(w))
}

/// Reads a basis written by [`write_basis`]. The temporal factor is not stored.
pub fn read_basis(path: &Path) -> Result<(PodBasis, Quadrature)> {
    let (header, modes, weights) = read_psnap(path)?;
    if header.extra("kind") != Some("pod_modes") {
        return Err(Error::Data(format!("{} is not a POD basis file", path.display())));
    }
    let w = weights.ok_or_else(|| Error::Data(format!("{} carries no weights", path.display())))?;
    let sv: Vec<f64> = header
        .extra("singular_values")
        .unwrap_or("")
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Data(format!("bad singular value `{t}`"))))
        .collect::<Result<_>>()?;
    if sv.len() != modes.ncols() {
        return Err(Error::Data(format!(
            "{} singular values for {} modes",
            sv.len(),
            modes.ncols()
        )));
    }
    let r = modes.ncols();
    Ok((
        PodBasis {
            modes,
            singular_values: DVector::from_vec(sv),
            temporal: DMatrix::zeros(0, r),
            parameter: header.parameter,
            weights_id: w.id(),
            field_layout: header.field_layout.clone(),
            singular_values_authoritative: header.extra("singular_values_authoritative") != Some("0"),
        },
        w,
    ))
}
