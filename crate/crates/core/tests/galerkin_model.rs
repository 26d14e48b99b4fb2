use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use podrom::fom::BurgersModel;
use podrom::linalg::orthonormal_columns;
use podrom::{assemble_operators, integrate_rom, reconstruct, rom_rhs, DiscreteModel, FieldLayout, PodBasis, Quadrature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 64;

fn fourier_basis(model: &BurgersModel, w: &Quadrature) -> PodBasis {
    let dx = model.dx();
    let norm = (PI).sqrt();
    let modes = DMatrix::from_fn(N, 4, |i, j| {
        let x = i as f64 * dx;
        let k = (j / 2 + 1) as f64;
        if j % 2 == 0 {
            (k * x).cos() / norm
        } else {
            (k * x).sin() / norm
        }
    });
    PodBasis::from_modes(modes, 100.0, w, FieldLayout::single("u", 1, N)).unwrap()
}

#[test]
fn fourier_modes_diagonalize_the_viscous_operator() {
    let model = BurgersModel::new(N, 2.0 * PI).unwrap();
    let w = model.quadrature().clone();
    let basis = fourier_basis(&model, &w);
    assert!(basis.orthonormality_error(&w) < 1e-13);
    let nu = 0.01;
    let ops = assemble_operators(&basis, &model, nu).unwrap();
    let dx = model.dx();
    for l in 0..4 {
        let k = (l / 2 + 1) as f64;
        let k_eff2 = (2.0 - 2.0 * (k * dx).cos()) / (dx * dx);
        for m in 0..4 {
            let expected = if l == m { -nu * k_eff2 } else { 0.0 };
            assert!((ops.linear[(l, m)] - expected).abs() < 1e-12, "L[{l},{m}] = {}", ops.linear[(l, m)]);
            let mass = if l == m { 1.0 } else { 0.0 };
            assert!((ops.mass[(l, m)] - mass).abs() < 1e-12);
        }
    }
}

#[test]
fn reduced_rhs_matches_projected_full_rhs() {
    let model = BurgersModel::new(N, 2.0 * PI).unwrap();
    let w = model.quadrature().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = DMatrix::from_fn(N, 2, |_, _| rng.random_range(-1.0..1.0));
    let scaled = orthonormal_columns(&raw);
    let modes = DMatrix::from_fn(N, 2, |i, j| scaled[(i, j)] / w.sqrt_weights()[i]);
    let basis = PodBasis::from_modes(modes, 50.0, &w, FieldLayout::single("u", 1, N)).unwrap();
    let nu = 0.02;
    let ops = assemble_operators(&basis, &model, nu).unwrap();
    for _ in 0..5 {
        let alpha = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let state = &basis.modes * &alpha;
        let full = DVector::from_vec(model.rhs(state.as_slice(), nu));
        let projected = DVector::from_fn(2, |l, _| {
            (0..N).map(|i| basis.modes[(i, l)] * w.weights()[i] * full[i]).sum::<f64>()
        });
        let reduced = rom_rhs(&ops, &alpha).unwrap();
        let err = (&reduced - &projected).norm() / projected.norm();
        assert!(err < 1e-12, "relative error {err}");
    }
}

struct LinearOnly {
    inner: BurgersModel,
}

impl DiscreteModel for LinearOnly {
    fn quadrature(&self) -> &Quadrature {
        self.inner.quadrature()
    }

    fn field_layout(&self) -> &FieldLayout {
        self.inner.field_layout()
    }

    fn velocity_range(&self) -> Range<usize> {
        self.inner.velocity_range()
    }

    fn apply_linear(&self, mode: &[f64], viscosity: f64) -> Vec<f64> {
        self.inner.apply_linear(mode, viscosity)
    }

    fn apply_quadratic(&self, a: &[f64], _b: &[f64]) -> Vec<f64> {
        vec![0.0; a.len()]
    }
}

#[test]
fn vanishing_advection_gives_zero_tensor_and_exponential_decay() {
    let model = LinearOnly {
        inner: BurgersModel::new(N, 2.0 * PI).unwrap(),
    };
    let w = model.quadrature().clone();
    let basis = fourier_basis(&model.inner, &w);
    let nu = 0.05;
    let ops = assemble_operators(&basis, &model, nu).unwrap();
    assert!(ops.quadratic.iter().all(|q| q.iter().all(|&x| x == 0.0)));

    let alpha0 = DVector::from_element(4, 1.0);
    let traj = integrate_rom(&ops, &alpha0, 0.0, 0.01, 200, 100).unwrap();
    assert_eq!(traj.times.len(), 3);
    let t = traj.times[2];
    for l in 0..4 {
        let exact = (ops.linear[(l, l)] * t).exp();
        assert!((traj.coefficients[(2, l)] - exact).abs() < 1e-10);
    }
}

#[test]
fn reconstruction_expands_each_recorded_row() {
    let model = BurgersModel::new(N, 2.0 * PI).unwrap();
    let w = model.quadrature().clone();
    let basis = fourier_basis(&model, &w);
    let ops = assemble_operators(&basis, &model, 0.01).unwrap();
    let alpha0 = DVector::from_vec(vec![0.3, -0.1, 0.05, 0.0]);
    let traj = integrate_rom(&ops, &alpha0, 2.0, 0.005, 40, 10).unwrap();
    let fields = reconstruct(&basis, &traj).unwrap();
    assert_eq!(fields.n_snap(), 5);
    assert_eq!(fields.t0(), 2.0);
    assert!((fields.dt_snap() - 0.05).abs() < 1e-15);
    for k in 0..fields.n_snap() {
        let alpha = traj.coefficients.row(k).transpose();
        let expected = &basis.modes * alpha;
        let err = (fields.data().column(k) - expected).amax();
        assert_eq!(err, 0.0);
    }
}
