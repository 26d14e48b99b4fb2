//! Dense linear-algebra helpers shared by the POD and interpolation modules.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

/// Thin SVD `A = U diag(s) V^T` with singular values sorted non-increasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD of an arbitrary dense matrix (faer's divide-and-conquer SVD).
///
/// nalgebra's SVD loses accuracy on rank-deficient triangular factors
/// (exactly the tangent matrices of subspaces that share directions), so the
/// factorization is delegated to faer.
pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (n, m) = a.shape();
    let k = n.min(m);
    if k == 0 {
        return ThinSvd {
            u: DMatrix::zeros(n, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(m, 0),
        };
    }
    let mat = faer::MatRef::from_column_major_slice(a.as_slice(), n, m);
    let svd = mat.thin_svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    ThinSvd {
        u: DMatrix::from_fn(n, k, |i, j| u[(i, order[j])]),
        s: DVector::from_fn(k, |j, _| s[order[j]]),
        v: DMatrix::from_fn(m, k, |i, j| v[(i, order[j])]),
    }
}

/// Orthonormal basis for the column span of `a` (Householder QR, thin Q).
pub fn orthonormal_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    // keep the orientation of each input column
    for k in 0..q.ncols().min(r.nrows()) {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Scales every row `i` of `m` by `factors[i]`.
pub fn scale_rows(m: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &f) in factors.iter().enumerate() {
        out.row_mut(i).scale_mut(f);
    }
    out
}

/// Divides every row `i` of `m` by `factors[i]`.
pub fn unscale_rows(m: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &f) in factors.iter().enumerate() {
        out.row_mut(i).unscale_mut(f);
    }
    out
}

/// Largest absolute entry of `a - I`.
pub fn max_abs_deviation_from_identity(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a[(i, j)] - target).abs());
        }
    }
    worst
}

/// Stable 64-bit content hash of a sequence of doubles (bit patterns, in order).
pub fn content_hash<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}
