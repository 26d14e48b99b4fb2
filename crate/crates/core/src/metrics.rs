//! Error metrics, subspace distances and the interpolation timing harness.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::export::{fmt_f64, write_table};
use crate::linalg::{orthonormal_columns, thin_svd};
use crate::pod::PodBasis;
use crate::prom::{interpolate, Method};
use crate::snapshot::{Quadrature, SnapshotSet};

/// Relative L2 error of a prediction over all recorded snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct RleReport {
    pub rle: f64,
    pub n_snapshots_used: usize,
    /// RLE restricted to each field block, in layout order.
    pub per_field: Vec<(String, f64)>,
    pub method_tag: String,
}

fn check_comparable(truth: &SnapshotSet, pred: &SnapshotSet) -> Result<()> {
    if truth.data().shape() != pred.data().shape() {
        return Err(Error::Dimension(format!(
            "truth is {:?}, prediction is {:?}",
            truth.data().shape(),
            pred.data().shape()
        )));
    }
    for k in 0..truth.n_snap() {
        let (a, b) = (truth.time(k), pred.time(k));
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::Dimension(format!("snapshot {k} is at t = {b}, truth at t = {a}")));
        }
    }
    if truth.field_layout() != pred.field_layout() {
        return Err(Error::Dimension("truth and prediction have different field layouts".into()));
    }
    Ok(())
}

fn ratio(truth: &DMatrix<f64>, pred: &DMatrix<f64>, rows: std::ops::Range<usize>, w: Option<&[f64]>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..truth.ncols() {
        for i in rows.clone() {
            let weight = w.map_or(1.0, |w| w[i]);
            let t = truth[(i, j)];
            let d = pred[(i, j)] - t;
            num += weight * d * d;
            den += weight * t * t;
        }
    }
    if den == 0.0 {
        return Err(Error::DegenerateTruth);
    }
    Ok((num / den).sqrt())
}

fn rle_impl(truth: &SnapshotSet, pred: &SnapshotSet, field: Option<&str>, w: Option<&[f64]>) -> Result<RleReport> {
    check_comparable(truth, pred)?;
    let layout = truth.field_layout();
    let mut per_field = Vec::new();
    for name in layout.names() {
        let rows = layout.range_of(name).expect("field names come from the layout");
        // a field whose truth is identically zero has no defined RLE
        match ratio(truth.data(), pred.data(), rows, w) {
            Ok(v) => per_field.push((name.to_string(), v)),
            Err(Error::DegenerateTruth) => {}
            Err(e) => return Err(e),
        }
    }
    let rows = match field {
        Some(name) => layout
            .range_of(name)
            .ok_or_else(|| Error::Config(format!("no field `{name}` in layout `{layout}`")))?,
        None => 0..truth.n_dof(),
    };
    Ok(RleReport {
        rle: ratio(truth.data(), pred.data(), rows, w)?,
        n_snapshots_used: truth.n_snap(),
        per_field,
        method_tag: String::new(),
    })
}

/// `sqrt(sum_j |pred_j - truth_j|^2 / sum_j |truth_j|^2)` with plain Euclidean
/// norms, optionally restricted to one field block.
pub fn rle(truth: &SnapshotSet, pred: &SnapshotSet, field: Option<&str>) -> Result<RleReport> {
    rle_impl(truth, pred, field, None)
}

/// As [`rle`] with quadrature-weighted norms.
pub fn rle_weighted(truth: &SnapshotSet, pred: &SnapshotSet, w: &Quadrature, field: Option<&str>) -> Result<RleReport> {
    if w.len() != truth.n_dof() {
        return Err(Error::Dimension(format!("{} weights for {} rows", w.len(), truth.n_dof())));
    }
    rle_impl(truth, pred, field, Some(w.weights()))
}

/// Principal angles (ascending) between the weighted spans of two bases.
///
/// Both inputs are orthonormalized in `W^{1/2}` coordinates first, so
/// non-orthonormal interpolants are compared by span. Small angles come
/// from the sines (residual of projecting one span on the other) and large
/// ones from the cosines, which keeps full precision at both ends.
pub fn principal_angles(a: &PodBasis, b: &PodBasis, w: &Quadrature) -> Result<Vec<f64>> {
    a.check_weights(w)?;
    b.check_weights(w)?;
    if a.modes.shape() != b.modes.shape() {
        return Err(Error::Dimension(format!(
            "bases of shape {:?} and {:?}",
            a.modes.shape(),
            b.modes.shape()
        )));
    }
    let ua = orthonormal_columns(&a.scaled_modes(w));
    let ub = orthonormal_columns(&b.scaled_modes(w));
    let overlap = ua.transpose() * &ub;
    let cosines = thin_svd(&overlap).s;
    let mut sines: Vec<f64> = thin_svd(&(&ub - &ua * &overlap)).s.iter().copied().collect();
    sines.sort_by(f64::total_cmp);
    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            let c = c.clamp(0.0, 1.0);
            if c * c >= 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.acos()
            }
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Median wall time of one interpolation method.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub method: Method,
    pub n_dof: usize,
    pub n_rank: usize,
    pub n_neighbors: usize,
    pub wall_seconds: f64,
    pub repetitions: usize,
}

/// Times `repetitions` runs of the interpolation after one warm-up run, on a
/// single-thread pool. Only the interpolation step is timed.
pub fn benchmark_interpolation(
    method: Method,
    bases: &[PodBasis],
    reference_index: usize,
    target: f64,
    w: &Quadrature,
    repetitions: usize,
) -> Result<TimingReport> {
    if repetitions < 5 {
        return Err(Error::Config(format!("benchmarks need at least 5 repetitions, got {repetitions}")));
    }
    if method == Method::Rom {
        return Err(Error::Config("the ROM baseline has no interpolation step to time".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a single-thread pool: {e}")))?;
    let mut times = pool.install(|| -> Result<Vec<f64>> {
        std::hint::black_box(interpolate(method, bases, reference_index, target, w)?);
        (0..repetitions)
            .map(|_| {
                let start = Instant::now();
                let out = interpolate(method, bases, reference_index, target, w)?;
                let elapsed = start.elapsed().as_secs_f64();
                drop(std::hint::black_box(out));
                Ok(elapsed)
            })
            .collect()
    })?;
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok(TimingReport {
        method,
        n_dof: bases[0].n_dof(),
        n_rank: bases[0].n_rank(),
        n_neighbors: bases.len(),
        wall_seconds: median.max(f64::MIN_POSITIVE),
        repetitions,
    })
}

/// Exports `method, N_n, N_r, N_p, wall_seconds, ratio_to_gmi` rows. The
/// ratio divides by the GMI row of the same shape and is empty without one.
pub fn write_timing_csv(path: &Path, reports: &[TimingReport]) -> Result<()> {
    let gmi_time = |r: &TimingReport| {
        reports
            .iter()
            .find(|g| {
                g.method == Method::Gmi && (g.n_dof, g.n_rank, g.n_neighbors) == (r.n_dof, r.n_rank, r.n_neighbors)
            })
            .map(|g| g.wall_seconds)
    };
    let rows = reports.iter().map(|r| {
        vec![
            r.method.to_string(),
            r.n_dof.to_string(),
            r.n_rank.to_string(),
            r.n_neighbors.to_string(),
            fmt_f64(r.wall_seconds),
            gmi_time(r).map_or_else(String::new, |g| fmt_f64(r.wall_seconds / g)),
        ]
    });
    write_table(path, &["method", "N_n", "N_r", "N_p", "wall_seconds", "ratio_to_gmi"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unscale_rows;
    use crate::snapshot::{FieldBlock, FieldLayout};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn set(data: DMatrix<f64>) -> SnapshotSet {
        let n = data.nrows();
        SnapshotSet::new(data, 1.0, 0.0, 0.5, FieldLayout::single("u", 1, n)).unwrap()
    }

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rle_examples() {
        let t = random_matrix(5, 4, 1);
        assert_eq!(rle(&set(t.clone()), &set(t.clone()), None).unwrap().rle, 0.0);
        assert!((rle(&set(t.clone()), &set(&t * 2.0), None).unwrap().rle - 1.0).abs() < 1e-15);
        let p = random_matrix(5, 4, 2);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..4 {
            for i in 0..5 {
                num += (p[(i, j)] - t[(i, j)]).powi(2);
                den += t[(i, j)].powi(2);
            }
        }
        let got = rle(&set(t.clone()), &set(p), None).unwrap();
        assert!((got.rle - (num / den).sqrt()).abs() < 1e-14);
        assert_eq!(got.n_snapshots_used, 4);
        assert!(matches!(rle(&set(DMatrix::zeros(5, 4)), &set(t), None), Err(Error::DegenerateTruth)));
    }

    #[test]
    fn rle_field_mask_and_time_check() {
        let layout = FieldLayout(vec![FieldBlock::new("u", 1, 3), FieldBlock::new("p", 1, 2)]);
        let t = random_matrix(5, 3, 3);
        let mut p = t.clone();
        p[(4, 1)] += 1.0;
        let ts = SnapshotSet::new(t, 1.0, 0.0, 0.1, layout.clone()).unwrap();
        let ps = SnapshotSet::new(p.clone(), 1.0, 0.0, 0.1, layout.clone()).unwrap();
        let r = rle(&ts, &ps, Some("u")).unwrap();
        assert_eq!(r.rle, 0.0);
        assert_eq!(r.per_field[0], ("u".to_string(), 0.0));
        assert!(r.per_field[1].1 > 0.0);
        assert!(rle(&ts, &ps, Some("p")).unwrap().rle > 0.0);
        let shifted = SnapshotSet::new(p, 1.0, 0.05, 0.1, layout).unwrap();
        assert!(matches!(rle(&ts, &shifted, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn weighted_rle_uses_weights() {
        let t = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let p = DMatrix::from_column_slice(2, 1, &[2.0, 1.0]);
        let w = Quadrature::new(vec![3.0, 1.0]).unwrap();
        let r = rle_weighted(&set(t), &set(p), &w, None).unwrap();
        assert!((r.rle - (3.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    fn line(theta: f64) -> (PodBasis, Quadrature) {
        let w = Quadrature::uniform(2, 1.0).unwrap();
        let m = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        (PodBasis::from_modes(m, 0.0, &w, FieldLayout::single("u", 1, 2)).unwrap(), w)
    }

    #[test]
    fn principal_angle_examples() {
        let (a, w) = line(0.0);
        let (b, _) = line(PI / 4.0);
        assert!((principal_angles(&a, &b, &w).unwrap()[0] - PI / 4.0).abs() < 1e-15);
        assert!(principal_angles(&a, &a, &w).unwrap()[0] < 1e-7);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 30;
        let w = Quadrature::new((0..n).map(|_| rng.random_range(0.5..2.0)).collect()).unwrap();
        let u = orthonormal_columns(&random_matrix(n, 4, 7));
        let phi = unscale_rows(&u, w.sqrt_weights());
        let rot = orthonormal_columns(&random_matrix(4, 4, 8));
        let layout = FieldLayout::single("u", 1, n);
        let a = PodBasis::from_modes(phi.clone(), 0.0, &w, layout.clone()).unwrap();
        let b = PodBasis::from_modes(phi * rot, 0.0, &w, layout).unwrap();
        assert!(principal_angles(&a, &b, &w).unwrap().iter().all(|&x| x < 1e-7));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn principal_angles_are_symmetric(seed in 0u64..10_000) {
            let n = 25;
            let w = Quadrature::uniform(n, 0.3).unwrap();
            let layout = FieldLayout::single("u", 1, n);
            let a = PodBasis::from_modes(random_matrix(n, 3, seed), 0.0, &w, layout.clone()).unwrap();
            let b = PodBasis::from_modes(random_matrix(n, 3, seed + 1), 0.0, &w, layout).unwrap();
            let ab = principal_angles(&a, &b, &w).unwrap();
            let ba = principal_angles(&b, &a, &w).unwrap();
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
            prop_assert!(ab.windows(2).all(|p| p[0] <= p[1]));
        }

        #[test]
        fn rle_is_permutation_invariant(seed in 0u64..10_000, shift in 1usize..6) {
            let t = random_matrix(4, 6, seed);
            let p = random_matrix(4, 6, seed + 7);
            let perm = |m: &DMatrix<f64>| DMatrix::from_fn(4, 6, |i, j| m[(i, (j + shift) % 6)]);
            let a = rle(&set(t.clone()), &set(p.clone()), None).unwrap().rle;
            let b = rle(&set(perm(&t)), &set(perm(&p)), None).unwrap().rle;
            prop_assert!((a - b).abs() <= 1e-14 * a.max(1.0));
        }

        #[test]
        fn rle_is_monotone_in_perturbation_size(seed in 0u64..10_000, s1 in 1e-8f64..1.0, s2 in 1e-8f64..1.0) {
            let t = random_matrix(5, 3, seed);
            let d = random_matrix(5, 3, seed + 1);
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            let a = rle(&set(t.clone()), &set(&t + &d * lo), None).unwrap().rle;
            let b = rle(&set(t.clone()), &set(&t + &d * hi), None).unwrap().rle;
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn benchmark_rejects_few_repetitions() {
        let (a, w) = line(0.0);
        let (mut b, _) = line(0.3);
        b.parameter = 1.0;
        let bases = [a, b];
        assert!(matches!(
            benchmark_interpolation(Method::Gmi, &bases, 0, 0.5, &w, 4),
            Err(Error::Config(_))
        ));
        let r = benchmark_interpolation(Method::Gmi, &bases, 0, 0.5, &w, 5).unwrap();
        assert!(r.wall_seconds > 0.0);
        assert_eq!((r.n_dof, r.n_rank, r.n_neighbors, r.repetitions), (2, 1, 2, 5));
    }
}
