//! Snapshot matrices, quadrature weights and the weighted inner product.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::content_hash;

/// One named block of the stacked state vector, e.g. `u:2:4096` for a
/// two-component velocity sampled on 4096 points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldBlock {
    pub name: String,
    pub components: usize,
    pub points: usize,
}

impl FieldBlock {
    pub fn new(name: impl Into<String>, components: usize, points: usize) -> Self {
        Self {
            name: name.into(),
            components,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.components * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for FieldBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.name, self.components, self.points)
    }
}

/// Ordered list of field blocks describing how a snapshot column is stacked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldLayout(pub Vec<FieldBlock>);

impl FieldLayout {
    pub fn single(name: &str, components: usize, points: usize) -> Self {
        FieldLayout(vec![FieldBlock::new(name, components, points)])
    }

    pub fn n_dof(&self) -> usize {
        self.0.iter().map(FieldBlock::len).sum()
    }

    /// Row range occupied by the named field.
    pub fn range_of(&self, name: &str) -> Option<Range<usize>> {
        let mut start = 0;
        for block in &self.0 {
            if block.name == name {
                return Some(start..start + block.len());
            }
            start += block.len();
        }
        None
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|b| b.name.as_str())
    }
}

impl fmt::Display for FieldLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join(";"))
    }
}

impl FromStr for FieldLayout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut blocks = Vec::new();
        for triple in s.split(';').filter(|t| !t.is_empty()) {
            let parts: Vec<&str> = triple.split(':').collect();
            if parts.len() != 3 || parts[0].is_empty() {
                return Err(format!("field block `{triple}` is not name:components:points"));
            }
            let components = parts[1]
                .parse()
                .map_err(|_| format!("bad component count in `{triple}`"))?;
            let points = parts[2]
                .parse()
                .map_err(|_| format!("bad point count in `{triple}`"))?;
            blocks.push(FieldBlock::new(parts[0], components, points));
        }
        if blocks.is_empty() {
            return Err("empty field layout".into());
        }
        Ok(FieldLayout(blocks))
    }
}

/// Snapshot matrix `Q` (one state per column) with its time axis and layout.
///
/// Time stamps are stored as `t0 + k * dt_snap`, so uniform spacing holds by
/// construction and the on-disk representation is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    data: DMatrix<f64>,
    parameter: f64,
    t0: f64,
    dt_snap: f64,
    field_layout: FieldLayout,
}

impl SnapshotSet {
    pub fn new(
        data: DMatrix<f64>,
        parameter: f64,
        t0: f64,
        dt_snap: f64,
        field_layout: FieldLayout,
    ) -> Result<Self> {
        if field_layout.n_dof() != data.nrows() {
            return Err(Error::Dimension(format!(
                "field layout `{}` describes {} rows but the data has {}",
                field_layout,
                field_layout.n_dof(),
                data.nrows()
            )));
        }
        if !(dt_snap > 0.0 && dt_snap.is_finite()) {
            return Err(Error::Data(format!("snapshot spacing must be positive, got {dt_snap}")));
        }
        if !parameter.is_finite() || !t0.is_finite() {
            return Err(Error::Data("parameter and t0 must be finite".into()));
        }
        Ok(Self {
            data,
            parameter,
            t0,
            dt_snap,
            field_layout,
        })
    }

    /// Builds a set from explicit time stamps, which must be uniformly spaced
    /// (relative tolerance 1e-9).
    pub fn from_times(
        data: DMatrix<f64>,
        parameter: f64,
        times: &[f64],
        field_layout: FieldLayout,
    ) -> Result<Self> {
        if times.len() != data.ncols() {
            return Err(Error::Dimension(format!(
                "{} time stamps for {} snapshots",
                times.len(),
                data.ncols()
            )));
        }
        let dt = match times {
            [] => return Err(Error::Data("a snapshot set needs at least one column".into())),
            [_] => 1.0,
            [a, b, ..] => b - a,
        };
        for (k, pair) in times.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if step <= 0.0 || (step - dt).abs() > 1e-9 * dt.abs() {
                return Err(Error::Data(format!(
                    "time stamps not uniform/increasing at index {}",
                    k + 1
                )));
            }
        }
        Self::new(data, parameter, times[0], dt, field_layout)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn n_dof(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snap(&self) -> usize {
        self.data.ncols()
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt_snap(&self) -> f64 {
        self.dt_snap
    }

    pub fn field_layout(&self) -> &FieldLayout {
        &self.field_layout
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt_snap
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_snap()).map(|k| self.time(k)).collect()
    }

    /// Copy with the temporal mean removed from every row.
    pub fn mean_subtracted(&self) -> SnapshotSet {
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        SnapshotSet { data, ..self.clone() }
    }
}

/// Diagonal quadrature weights `W` with cached square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    id: u64,
}

impl Quadrature {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
        {
            return Err(Error::Data(format!("quadrature weight {i} is not positive: {w}")));
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        let id = content_hash(&weights);
        Ok(Self {
            weights,
            sqrt_weights,
            id,
        })
    }

    /// All weights equal to `value`.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    /// Content hash identifying these weights; bases carry it to pin their pairing.
    pub fn id(&self) -> u64 {
        self.id
    }
}

const BLOCK: usize = 32;

/// Weighted inner product `sum_i a[i] w[i] b[i]`.
///
/// Terms are formed as `w * (a * b)` so the result is bitwise symmetric in
/// `a` and `b`; summation runs over fixed 32-element blocks combined
/// pairwise, so the rounding pattern depends only on the length.
pub fn weighted_inner(a: &[f64], b: &[f64], w: &Quadrature) -> Result<f64> {
    if a.len() != b.len() || a.len() != w.len() {
        return Err(Error::Dimension(format!(
            "weighted inner product of lengths {}, {} with {} weights",
            a.len(),
            b.len(),
            w.len()
        )));
    }
    Ok(weighted_dot(a, b, w.weights()))
}

/// Unchecked kernel behind [`weighted_inner`]; slices must have equal length.
pub(crate) fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    debug_assert!(a.len() == b.len() && b.len() == w.len());
    let partials: Vec<f64> = a
        .chunks(BLOCK)
        .zip(b.chunks(BLOCK))
        .zip(w.chunks(BLOCK))
        .map(|((ab, bb), wb)| {
            let mut s = 0.0;
            for i in 0..ab.len() {
                s += wb[i] * (ab[i] * bb[i]);
            }
            s
        })
        .collect();
    pairwise_sum(&partials)
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inner_product_examples() {
        let ones = Quadrature::uniform(4, 1.0).unwrap();
        assert_eq!(weighted_inner(&[1.0; 4], &[1.0; 4], &ones).unwrap(), 4.0);
        assert_eq!(
            weighted_inner(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &ones).unwrap(),
            0.0
        );
        let w = Quadrature::new(vec![0.5, 0.25]).unwrap();
        let direct = 1.0 * 0.5 * 1.0 + 2.0 * 0.25 * 2.0;
        assert_eq!(weighted_inner(&[1.0, 2.0], &[1.0, 2.0], &w).unwrap(), direct);
        assert_eq!(direct, 1.5);
    }

    #[test]
    fn inner_product_rejects_length_mismatch() {
        let w = Quadrature::uniform(3, 1.0).unwrap();
        assert!(matches!(
            weighted_inner(&[1.0; 3], &[1.0; 2], &w),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            weighted_inner(&[1.0; 2], &[1.0; 2], &w),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn quadrature_rejects_non_positive_weights() {
        assert!(Quadrature::new(vec![1.0, 0.0]).is_err());
        assert!(Quadrature::new(vec![1.0, -2.0]).is_err());
        assert!(Quadrature::new(vec![f64::NAN]).is_err());
        let q = Quadrature::new(vec![2.0, 0.3, 7.5]).unwrap();
        for (w, s) in q.weights().iter().zip(q.sqrt_weights()) {
            assert!((s * s - w).abs() <= 1e-14 * w);
        }
    }

    #[test]
    fn layout_parsing_and_ranges() {
        let layout: FieldLayout = "u:2:10;p:1:10".parse().unwrap();
        assert_eq!(layout.n_dof(), 30);
        assert_eq!(layout.range_of("p"), Some(20..30));
        assert_eq!(layout.to_string(), "u:2:10;p:1:10");
        assert!("u:2".parse::<FieldLayout>().is_err());
        assert!("".parse::<FieldLayout>().is_err());
    }

    #[test]
    fn snapshot_set_validates_shape_and_times() {
        let layout = FieldLayout::single("u", 1, 3);
        let data = DMatrix::zeros(3, 4);
        assert!(SnapshotSet::new(data.clone(), 1.0, 0.0, 0.1, FieldLayout::single("u", 1, 2)).is_err());
        assert!(SnapshotSet::new(data.clone(), 1.0, 0.0, 0.0, layout.clone()).is_err());
        let s = SnapshotSet::from_times(data.clone(), 1.0, &[0.0, 0.5, 1.0, 1.5], layout.clone()).unwrap();
        assert_eq!(s.dt_snap(), 0.5);
        assert_eq!(s.times(), vec![0.0, 0.5, 1.0, 1.5]);
        assert!(SnapshotSet::from_times(data, 1.0, &[0.0, 0.5, 1.1, 1.5], layout).is_err());
    }

    proptest! {
        #[test]
        fn inner_product_is_bitwise_symmetric_and_positive(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, 1e-3f64..10.0), 1..200)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let w = Quadrature::new(pairs.iter().map(|p| p.2).collect()).unwrap();
            let ab = weighted_inner(&a, &b, &w).unwrap();
            let ba = weighted_inner(&b, &a, &w).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            let aa = weighted_inner(&a, &a, &w).unwrap();
            prop_assert!(aa >= 0.0);
            prop_assert_eq!(aa == 0.0, a.iter().all(|x| *x == 0.0));
        }
    }
}
