//! POD-Galerkin reduced-order model: operator assembly, right-hand side,
//! RK4 time integration and field reconstruction.
//!
//! The reduced system is
//!
//! ```text
//! sum_m M_lm da_m/dt = sum_mn Q_lmn a_m a_n + sum_m L_lm a_m
//! M_lm  = <phi_l, phi_m>
//! L_lm  = <phi_l, nu lap(phi_m) - grad(psi_m)>
//! Q_lmn = <phi_l, -phi_m . grad(phi_n)>
//! ```
//!
//! with all inner products taken over the velocity block only.

use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::export::{fmt_f64, write_matrix_csv, write_table};
use crate::pod::PodBasis;
use crate::snapshot::{weighted_dot, FieldLayout, Quadrature, SnapshotSet};

/// Largest mass-matrix condition number accepted by [`rom_rhs`].
pub const MAX_MASS_CONDITION: f64 = 1e12;

/// Discrete full-order operators a Galerkin ROM is projected from.
///
/// `apply_linear` and `apply_quadratic` take full state vectors (every
/// field in the layout) and return velocity-block vectors.
pub trait DiscreteModel: Sync {
    fn quadrature(&self) -> &Quadrature;

    fn field_layout(&self) -> &FieldLayout;

    /// Rows of the state vector holding the velocity components.
    fn velocity_range(&self) -> Range<usize>;

    /// `nu lap(u) - grad(p)` for the state `mode`.
    fn apply_linear(&self, mode: &[f64], viscosity: f64) -> Vec<f64>;

    /// `-u_a . grad(u_b)`; bilinear in its arguments.
    fn apply_quadratic(&self, a: &[f64], b: &[f64]) -> Vec<f64>;

    /// Full momentum right-hand side at `state`.
    fn rhs(&self, state: &[f64], viscosity: f64) -> Vec<f64> {
        let mut out = self.apply_linear(state, viscosity);
        for (o, q) in out.iter_mut().zip(self.apply_quadratic(state, state)) {
            *o += q;
        }
        out
    }
}

type MassFactor = std::result::Result<Cholesky<f64, Dyn>, String>;

/// Mass matrix, linear matrix and quadratic tensor of the reduced system.
#[derive(Debug, Clone)]
pub struct GalerkinOperators {
    pub mass: DMatrix<f64>,
    pub linear: DMatrix<f64>,
    /// `quadratic[l][(m, n)] = Q_lmn`.
    pub quadratic: Vec<DMatrix<f64>>,
    pub viscosity: f64,
    factor: OnceLock<MassFactor>,
}

impl GalerkinOperators {
    pub fn new(
        mass: DMatrix<f64>,
        linear: DMatrix<f64>,
        quadratic: Vec<DMatrix<f64>>,
        viscosity: f64,
    ) -> Result<Self> {
        let r = mass.nrows();
        if mass.shape() != (r, r)
            || linear.shape() != (r, r)
            || quadratic.len() != r
            || quadratic.iter().any(|q| q.shape() != (r, r))
        {
            return Err(Error::Dimension("Galerkin operators must be r x r and r x r x r".into()));
        }
        let finite = mass.iter().chain(linear.iter()).chain(quadratic.iter().flat_map(|q| q.iter()));
        if finite.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("Galerkin operators contain non-finite entries".into()));
        }
        Ok(Self {
            mass,
            linear,
            quadratic,
            viscosity,
            factor: OnceLock::new(),
        })
    }

    pub fn n_rank(&self) -> usize {
        self.mass.nrows()
    }

    fn mass_factor(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.factor
            .get_or_init(|| factorize_mass(&self.mass))
            .as_ref()
            .map_err(|m| Error::MassMatrix(m.clone()))
    }

    /// `Q : a a`, i.e. `(sum_mn Q_lmn a_m a_n)_l`.
    pub fn quadratic_term(&self, alpha: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_rank(), self.quadratic.iter().map(|q| alpha.dot(&(q * alpha))))
    }

    /// Exports `mass.csv`, `linear.csv` and `quadratic.csv` (rows `l,m,n,value`).
    pub fn write_csv_bundle(&self, dir: &Path) -> Result<()> {
        write_matrix_csv(&dir.join("mass.csv"), &self.mass)?;
        write_matrix_csv(&dir.join("linear.csv"), &self.linear)?;
        let r = self.n_rank();
        let rows = (0..r).flat_map(|l| {
            (0..r).flat_map(move |m| {
                (0..r).map(move |n| {
                    vec![
                        l.to_string(),
                        m.to_string(),
                        n.to_string(),
                        fmt_f64(self.quadratic[l][(m, n)]),
                    ]
                })
            })
        });
        write_table(&dir.join("quadratic.csv"), &["l", "m", "n", "value"], rows)
    }
}

fn factorize_mass(mass: &DMatrix<f64>) -> MassFactor {
    let asym = (mass - mass.transpose()).abs().max();
    if asym > 1e-10 * mass.abs().max().max(1.0) {
        return Err(format!("mass matrix is not symmetric (max asymmetry {asym:e})"));
    }
    let eig = SymmetricEigen::new(mass.clone()).eigenvalues;
    let lo = eig.min();
    let hi = eig.max();
    if !(lo > 0.0) || hi / lo > MAX_MASS_CONDITION {
        return Err(format!(
            "mass matrix is singular or ill-conditioned (eigenvalues in [{lo:e}, {hi:e}])"
        ));
    }
    Cholesky::new(mass.clone()).ok_or_else(|| "mass matrix is not positive definite".to_string())
}

/// Projects the model onto `basis`: `O(r^2)` quadratic evaluations followed by
/// `r` inner products each.
pub fn assemble_operators<M: DiscreteModel + ?Sized>(
    basis: &PodBasis,
    model: &M,
    viscosity: f64,
) -> Result<GalerkinOperators> {
    if basis.n_dof() != model.field_layout().n_dof() || &basis.field_layout != model.field_layout() {
        return Err(Error::Pairing(format!(
            "basis layout `{}` does not match model layout `{}`",
            basis.field_layout,
            model.field_layout()
        )));
    }
    basis.check_weights(model.quadrature())?;
    let r = basis.n_rank();
    let vel = model.velocity_range();
    let wv = &model.quadrature().weights()[vel.clone()];
    let modes: Vec<&[f64]> = (0..r)
        .map(|k| {
            let col = basis.modes.column(k);
            let start = k * basis.n_dof();
            &basis.modes.as_slice()[start..start + col.len()]
        })
        .collect();
    let vmodes: Vec<&[f64]> = modes.iter().map(|m| &m[vel.clone()]).collect();

    let mass = DMatrix::from_fn(r, r, |l, m| weighted_dot(vmodes[l], vmodes[m], wv));

    let lin_images: Vec<Vec<f64>> = modes
        .par_iter()
        .map(|m| model.apply_linear(m, viscosity))
        .collect();
    let linear = DMatrix::from_fn(r, r, |l, m| weighted_dot(vmodes[l], &lin_images[m], wv));

    let columns: Vec<Vec<f64>> = (0..r * r)
        .into_par_iter()
        .map(|mn| {
            let image = model.apply_quadratic(modes[mn / r], modes[mn % r]);
            vmodes.iter().map(|phi| weighted_dot(phi, &image, wv)).collect()
        })
        .collect();
    let mut quadratic = vec![DMatrix::zeros(r, r); r];
    for (mn, col) in columns.iter().enumerate() {
        for (l, value) in col.iter().enumerate() {
            quadratic[l][(mn / r, mn % r)] = *value;
        }
    }
    GalerkinOperators::new(mass, linear, quadratic, viscosity)
}

/// `M^{-1} (Q:aa + L a)`.
pub fn rom_rhs(ops: &GalerkinOperators, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    if alpha.len() != ops.n_rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a rank-{} ROM",
            alpha.len(),
            ops.n_rank()
        )));
    }
    let factor = ops.mass_factor()?;
    let force = ops.quadratic_term(alpha) + &ops.linear * alpha;
    Ok(factor.solve(&force))
}

/// Recorded ROM coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    /// Row `k` holds `alpha(times[k])`.
    pub coefficients: DMatrix<f64>,
    pub times: Vec<f64>,
    /// Integration step.
    pub dt: f64,
    /// Spacing between recorded rows.
    pub record_interval: f64,
}

impl RomTrajectory {
    /// Exports `time, alpha_1 .. alpha_r` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let r = self.coefficients.ncols();
        let mut header = vec!["time".to_string()];
        header.extend((1..=r).map(|k| format!("alpha_{k}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.times.iter().enumerate().map(|(k, t)| {
            std::iter::once(fmt_f64(*t))
                .chain(self.coefficients.row(k).iter().map(|&x| fmt_f64(x)))
                .collect::<Vec<_>>()
        });
        write_table(path, &header_refs, rows)
    }
}

/// Classical RK4 with fixed step `dt`; the initial state and every
/// `stride`-th step are recorded.
pub fn integrate_rom(
    ops: &GalerkinOperators,
    alpha0: &DVector<f64>,
    t0: f64,
    dt: f64,
    n_steps: usize,
    stride: usize,
) -> Result<RomTrajectory> {
    if !(dt > 0.0) || n_steps == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "need dt > 0, n_steps >= 1, stride >= 1 (got {dt}, {n_steps}, {stride})"
        )));
    }
    let mut alpha = alpha0.clone();
    rom_rhs(ops, &alpha)?;
    let mut rows = vec![alpha.clone()];
    for step in 1..=n_steps {
        let k1 = rom_rhs(ops, &alpha)?;
        let k2 = rom_rhs(ops, &(&alpha + &k1 * (0.5 * dt)))?;
        let k3 = rom_rhs(ops, &(&alpha + &k2 * (0.5 * dt)))?;
        let k4 = rom_rhs(ops, &(&alpha + &k3 * dt))?;
        alpha += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if alpha.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step });
        }
        if step % stride == 0 {
            rows.push(alpha.clone());
        }
    }
    let record_interval = dt * stride as f64;
    let times = (0..rows.len()).map(|k| t0 + k as f64 * record_interval).collect();
    let r = alpha0.len();
    let coefficients = DMatrix::from_fn(rows.len(), r, |k, l| rows[k][l]);
    Ok(RomTrajectory {
        coefficients,
        times,
        dt,
        record_interval,
    })
}

/// Column `k` of the result is `Phi alpha(t_k)`.
pub fn reconstruct(basis: &PodBasis, traj: &RomTrajectory) -> Result<SnapshotSet> {
    if traj.coefficients.ncols() != basis.n_rank() {
        return Err(Error::Dimension(format!(
            "trajectory of rank {} for a basis of rank {}",
            traj.coefficients.ncols(),
            basis.n_rank()
        )));
    }
    let data = &basis.modes * traj.coefficients.transpose();
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    SnapshotSet::new(data, basis.parameter, t0, traj.record_interval, basis.field_layout.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag_ops(mass: f64, lin: f64, r: usize) -> GalerkinOperators {
        GalerkinOperators::new(
            DMatrix::identity(r, r) * mass,
            DMatrix::identity(r, r) * lin,
            vec![DMatrix::zeros(r, r); r],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn rhs_examples() {
        let ops = diag_ops(1.0, -1.0, 3);
        let a = DVector::from_element(3, 1.0);
        assert_eq!(rom_rhs(&ops, &a).unwrap(), -a.clone());
        let ops = diag_ops(2.0, 1.0, 2);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert!((rom_rhs(&ops, &e1).unwrap() - DVector::from_vec(vec![0.5, 0.0])).norm() < 1e-15);
    }

    fn random_ops(r: usize, seed: u64) -> GalerkinOperators {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
        let mass = &b * b.transpose() + DMatrix::identity(r, r);
        let linear = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
        let quadratic = (0..r)
            .map(|_| DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        GalerkinOperators::new(mass, linear, quadratic, 0.01).unwrap()
    }

    /// Oracle: plain triple loop plus an explicit inverse.
    #[test]
    fn rhs_matches_triple_loop() {
        let r = 5;
        let ops = random_ops(r, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let mut force = vec![0.0; r];
        for l in 0..r {
            for m in 0..r {
                force[l] += ops.linear[(l, m)] * a[m];
                for n in 0..r {
                    force[l] += ops.quadratic[l][(m, n)] * a[m] * a[n];
                }
            }
        }
        let expected = ops.mass.clone().try_inverse().unwrap() * DVector::from_vec(force);
        let got = rom_rhs(&ops, &a).unwrap();
        assert!((got - &expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn rhs_scaling_decomposition() {
        let ops = random_ops(4, 3);
        let a = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let minv = ops.mass.clone().try_inverse().unwrap();
        let q = &minv * ops.quadratic_term(&a);
        let l = &minv * (&ops.linear * &a);
        let diff = rom_rhs(&ops, &(&a * 2.0)).unwrap() - rom_rhs(&ops, &a).unwrap();
        let expected = &q * 3.0 + &l;
        assert!((diff - &expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn singular_mass_is_rejected() {
        let mut ops = diag_ops(1.0, 1.0, 2);
        ops.mass[(1, 1)] = 1e-14;
        assert!(matches!(rom_rhs(&ops, &DVector::zeros(2)), Err(Error::MassMatrix(_))));
    }

    #[test]
    fn exponential_decay() {
        let ops = diag_ops(1.0, -1.0, 1);
        let traj = integrate_rom(&ops, &DVector::from_element(1, 1.0), 0.0, 0.01, 100, 1).unwrap();
        assert_eq!(traj.times.len(), 101);
        assert!((traj.coefficients[(100, 0)] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((traj.times[100] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_is_constant_and_stride_records() {
        let ops = diag_ops(1.0, 0.0, 2);
        let a0 = DVector::from_vec(vec![0.4, -1.0]);
        let traj = integrate_rom(&ops, &a0, 2.0, 0.1, 20, 10).unwrap();
        assert_eq!(traj.times.len(), 3);
        assert!((traj.times[2] - 4.0).abs() < 1e-12);
        for k in 0..3 {
            assert_eq!(traj.coefficients.row(k).transpose(), a0);
        }
    }

    #[test]
    fn divergence_reports_first_bad_step() {
        let ops = GalerkinOperators::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_element(1, 1, 1.0)],
            0.0,
        )
        .unwrap();
        // da/dt = a^2 blows up at t = 1/a0
        match integrate_rom(&ops, &DVector::from_element(1, 10.0), 0.0, 0.05, 100, 1) {
            Err(Error::Divergence { step }) => assert!(step > 1 && step < 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    /// Self-convergence: RK4 errors against a dt/64 reference shrink 16x per halving.
    #[test]
    fn rk4_observed_order() {
        let r = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
        let linear = -(&b * b.transpose()) - DMatrix::identity(r, r) * 0.5
            + DMatrix::from_fn(r, r, |i, j| if i < j { 2.0 } else if i > j { -2.0 } else { 0.0 });
        let ops = GalerkinOperators::new(DMatrix::identity(r, r), linear, vec![DMatrix::zeros(r, r); r], 0.0)
            .unwrap();
        let a0 = DVector::from_vec(vec![1.0, -0.5, 0.25]);
        let horizon = 2.0;
        let run = |n: usize| {
            let t = integrate_rom(&ops, &a0, 0.0, horizon / n as f64, n, n).unwrap();
            t.coefficients.row(1).transpose()
        };
        let base = 20;
        let reference = run(base * 64);
        let errs: Vec<f64> = [1, 2, 4, 8].iter().map(|&f| (run(base * f) - &reference).norm()).collect();
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((16.0 * 0.8..=16.0 * 1.2).contains(&ratio), "ratio {ratio}");
            let rate = ratio.log2();
            assert!((3.6..=4.4).contains(&rate));
        }
    }
}
