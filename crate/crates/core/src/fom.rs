//! Desk-scale full-order models: a periodic viscous Burgers solver whose
//! Galerkin ROM has the quadratic + linear structure of the reduced system,
//! and a manufactured family of bases with closed-form principal angles.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::galerkin::DiscreteModel;
use crate::linalg::orthonormal_columns;
use crate::pod::PodBasis;
use crate::snapshot::{FieldLayout, Quadrature, SnapshotSet};

/// Reynolds numbers of the default case catalog.
pub const DEFAULT_REYNOLDS: [f64; 17] = [
    70.0, 80.0, 85.0, 100.0, 110.0, 115.0, 120.0, 125.0, 130.0, 135.0, 140.0, 145.0, 150.0, 160.0,
    175.0, 180.0, 190.0,
];

/// Default interpolation target.
pub const DEFAULT_TARGET: f64 = 130.0;

/// Burgers run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersConfig {
    pub n_points: usize,
    pub domain_length: f64,
    pub viscosity: f64,
    /// Parameter tag written with the snapshots (the Reynolds number).
    pub parameter: f64,
    pub dt_fom: f64,
    pub n_transient: usize,
    pub n_snapshots: usize,
    pub snapshot_stride: usize,
    pub init_seed: u64,
    /// Constant part of the initial profile.
    pub mean_velocity: f64,
    /// Amplitude of harmonic `k + 1` of the initial profile.
    pub amplitudes: Vec<f64>,
    /// Draw the harmonic phases from `init_seed`; all zero otherwise.
    pub random_phases: bool,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            n_points: 256,
            domain_length: 2.0 * PI,
            viscosity: 1.0 / DEFAULT_TARGET,
            parameter: DEFAULT_TARGET,
            dt_fom: 1e-3,
            n_transient: 0,
            n_snapshots: 50,
            snapshot_stride: 100,
            init_seed: 7,
            mean_velocity: 0.3,
            amplitudes: vec![0.1, 0.05, 0.025],
            random_phases: true,
        }
    }
}

impl BurgersConfig {
    pub fn with_reynolds(&self, re: f64) -> Self {
        Self {
            viscosity: 1.0 / re,
            parameter: re,
            ..self.clone()
        }
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.n_points as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| i as f64 * self.dx()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        if self.random_phases {
            let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
            self.amplitudes.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect()
        } else {
            vec![0.0; self.amplitudes.len()]
        }
    }

    pub fn initial_condition(&self) -> Vec<f64> {
        let phases = self.phases();
        self.grid()
            .iter()
            .map(|&x| {
                self.mean_velocity
                    + self
                        .amplitudes
                        .iter()
                        .zip(&phases)
                        .enumerate()
                        .map(|(k, (a, p))| a * ((k + 1) as f64 * x + p).sin())
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn t0(&self) -> f64 {
        self.n_transient as f64 * self.dt_fom
    }

    pub fn dt_snap(&self) -> f64 {
        self.snapshot_stride as f64 * self.dt_fom
    }

    /// Checks sizes and the advective / diffusive step bounds.
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 64 || !self.n_points.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_points must be a power of two >= 64, got {}",
                self.n_points
            )));
        }
        if !(self.domain_length > 0.0) || !(self.dt_fom > 0.0) || !(self.viscosity >= 0.0) {
            return Err(Error::Config(
                "domain_length and dt_fom must be positive and viscosity non-negative".into(),
            ));
        }
        if self.n_snapshots == 0 || self.snapshot_stride == 0 {
            return Err(Error::Config("n_snapshots and snapshot_stride must be positive".into()));
        }
        let dx = self.dx();
        let umax = self.initial_condition().iter().fold(0.0f64, |m, u| m.max(u.abs()));
        if umax > 0.0 && self.dt_fom > 0.5 * dx / umax {
            return Err(Error::Stability(format!(
                "dt_fom = {} exceeds the advective bound 0.5 dx / max|u0| = {:e}",
                self.dt_fom,
                0.5 * dx / umax
            )));
        }
        if self.viscosity > 0.0 && self.dt_fom > 0.25 * dx * dx / self.viscosity {
            return Err(Error::Stability(format!(
                "dt_fom = {} exceeds the diffusive bound 0.25 dx^2 / nu = {:e}",
                self.dt_fom,
                0.25 * dx * dx / self.viscosity
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "n_points" => self.n_points = num(key, value)?,
            "domain_length" => self.domain_length = num(key, value)?,
            "viscosity" => {
                self.viscosity = num(key, value)?;
                self.parameter = 1.0 / self.viscosity;
            }
            "reynolds" => *self = self.with_reynolds(num(key, value)?),
            "dt_fom" => self.dt_fom = num(key, value)?,
            "n_transient" => self.n_transient = num(key, value)?,
            "n_snapshots" => self.n_snapshots = num(key, value)?,
            "snapshot_stride" => self.snapshot_stride = num(key, value)?,
            "init_seed" => self.init_seed = num(key, value)?,
            "mean_velocity" => self.mean_velocity = num(key, value)?,
            "amplitudes" => self.amplitudes = parse_list(key, value)?,
            "random_phases" => self.random_phases = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown Burgers setting `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let amps: Vec<String> = self.amplitudes.iter().map(|&a| fmt_f64(a)).collect();
        let _ = writeln!(s, "n_points={}", self.n_points);
        let _ = writeln!(s, "domain_length={}", fmt_f64(self.domain_length));
        let _ = writeln!(s, "viscosity={}", fmt_f64(self.viscosity));
        let _ = writeln!(s, "dt_fom={}", fmt_f64(self.dt_fom));
        let _ = writeln!(s, "n_transient={}", self.n_transient);
        let _ = writeln!(s, "n_snapshots={}", self.n_snapshots);
        let _ = writeln!(s, "snapshot_stride={}", self.snapshot_stride);
        let _ = writeln!(s, "init_seed={}", self.init_seed);
        let _ = writeln!(s, "mean_velocity={}", fmt_f64(self.mean_velocity));
        let _ = writeln!(s, "amplitudes={}", amps.join(","));
        let _ = writeln!(s, "random_phases={}", u8::from(self.random_phases));
        s
    }
}

/// Splits flat `key=value` text, skipping blank lines and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("bad number `{t}` in `{key}`"))))
        .collect()
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

/// Burgers settings plus the Reynolds numbers to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub base: BurgersConfig,
    pub reynolds: Vec<f64>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            base: BurgersConfig::default(),
            reynolds: DEFAULT_REYNOLDS.to_vec(),
        }
    }
}

impl GenerateConfig {
    /// Parses a flat config; `reynolds` takes a comma-separated list and
    /// defaults to the 17-case catalog.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = GenerateConfig::default();
        for (k, v) in parse_key_values(text)? {
            if k == "reynolds" {
                cfg.reynolds = parse_list(&k, &v)?;
            } else {
                cfg.base.set(&k, &v)?;
            }
        }
        if cfg.reynolds.is_empty() || cfg.reynolds.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("reynolds must list positive values".into()));
        }
        Ok(cfg)
    }

    pub fn cases(&self) -> Vec<BurgersConfig> {
        self.reynolds.iter().map(|&re| self.base.with_reynolds(re)).collect()
    }
}

/// File name used for the snapshots of one case.
pub fn case_file_name(reynolds: f64) -> PathBuf {
    PathBuf::from(format!("burgers_Re{}.psnap", fmt_f64(reynolds)))
}

/// Periodic central-difference Burgers operators.
#[derive(Debug, Clone)]
pub struct BurgersModel {
    n: usize,
    dx: f64,
    quadrature: Quadrature,
    layout: FieldLayout,
}

impl BurgersModel {
    pub fn new(n_points: usize, domain_length: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::Config("Burgers grid needs at least 3 points".into()));
        }
        let dx = domain_length / n_points as f64;
        Ok(Self {
            n: n_points,
            dx,
            quadrature: Quadrature::uniform(n_points, dx)?,
            layout: FieldLayout::single("u", 1, n_points),
        })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Central first derivative.
    pub fn d1(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 0.5 / self.dx;
        (0..n).map(|i| (u[(i + 1) % n] - u[(i + n - 1) % n]) * c).collect()
    }

    /// Central second derivative.
    pub fn d2(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 1.0 / (self.dx * self.dx);
        (0..n)
            .map(|i| (u[(i + 1) % n] - 2.0 * u[i] + u[(i + n - 1) % n]) * c)
            .collect()
    }
}

impl DiscreteModel for BurgersModel {
    fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    fn field_layout(&self) -> &FieldLayout {
        &self.layout
    }

    fn velocity_range(&self) -> Range<usize> {
        0..self.n
    }

    fn apply_linear(&self, mode: &[f64], viscosity: f64) -> Vec<f64> {
        let mut out = self.d2(mode);
        out.iter_mut().for_each(|x| *x *= viscosity);
        out
    }

    fn apply_quadratic(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.d1(b).iter().zip(a).map(|(db, ua)| -ua * db).collect()
    }
}

pub fn burgers_model(cfg: &BurgersConfig) -> Result<BurgersModel> {
    BurgersModel::new(cfg.n_points, cfg.domain_length)
}

/// Integrates the Burgers equation with RK4 and records the snapshots.
pub fn burgers_run(cfg: &BurgersConfig) -> Result<(SnapshotSet, Quadrature)> {
    cfg.validate()?;
    let model = burgers_model(cfg)?;
    let n = cfg.n_points;
    let dt = cfg.dt_fom;
    let nu = cfg.viscosity;
    let mut u = cfg.initial_condition();
    let total = cfg.n_transient + (cfg.n_snapshots - 1) * cfg.snapshot_stride;
    let mut data = DMatrix::zeros(n, cfg.n_snapshots);
    let mut stage = vec![0.0; n];
    let record = |step: usize, u: &[f64], data: &mut DMatrix<f64>| {
        if step >= cfg.n_transient && (step - cfg.n_transient).is_multiple_of(cfg.snapshot_stride) {
            let k = (step - cfg.n_transient) / cfg.snapshot_stride;
            data.column_mut(k).copy_from_slice(u);
        }
    };
    record(0, &u, &mut data);
    for step in 1..=total {
        let k1 = model.rhs(&u, nu);
        stage.iter_mut().zip(&u).zip(&k1).for_each(|((s, u), k)| *s = u + 0.5 * dt * k);
        let k2 = model.rhs(&stage, nu);
        stage.iter_mut().zip(&u).zip(&k2).for_each(|((s, u), k)| *s = u + 0.5 * dt * k);
        let k3 = model.rhs(&stage, nu);
        stage.iter_mut().zip(&u).zip(&k3).for_each(|((s, u), k)| *s = u + dt * k);
        let k4 = model.rhs(&stage, nu);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step });
        }
        record(step, &u, &mut data);
    }
    let set = SnapshotSet::new(data, cfg.parameter, cfg.t0(), cfg.dt_snap(), model.layout.clone())?;
    Ok((set, model.quadrature.clone()))
}

/// Writes `burgers_Re<value>.psnap` for every case into `dir`; returns the paths.
pub fn generate_cases(cfg: &GenerateConfig, dir: &Path, force: bool) -> Result<Vec<(f64, PathBuf)>> {
    use rayon::prelude::*;
    let cases = cfg.cases();
    for c in &cases {
        c.validate()?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
    cases
        .par_iter()
        .map(|c| {
            let path = dir.join(case_file_name(c.parameter));
            if path.exists() && !force {
                return Err(Error::Config(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
            let (s, w) = burgers_run(c)?;
            crate::psnap::write_snapshots(&s, Some(&w), &path)?;
            Ok((c.parameter, path))
        })
        .collect()
}

/// Parametric family of orthonormal bases with analytically known subspaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedFamily {
    pub n_dof: usize,
    pub n_rank: usize,
    /// Radians per unit parameter.
    pub angle_rate: f64,
    pub base_seed: u64,
}

impl ManufacturedFamily {
    fn n_pairs(&self) -> usize {
        (self.n_rank - 1) / 2
    }

    /// Fixed orthonormal directions: `s1`, then pairs `(a_k, b_k)`, then the
    /// drift directions `d_0, d_1, ..`.
    fn seed_basis(&self) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        let m = self.n_rank + 1 + self.n_pairs();
        orthonormal_columns(&DMatrix::from_fn(self.n_dof, m, |_, _| rng.random_range(-1.0..1.0)))
    }

    fn drift(&self, gamma: f64) -> f64 {
        0.1 * gamma * self.angle_rate
    }

    fn rotation(&self, gamma: f64, k: usize) -> f64 {
        gamma * self.angle_rate * k as f64
    }

    pub fn quadrature(&self) -> Quadrature {
        Quadrature::uniform(self.n_dof, 1.0).expect("unit weights are valid")
    }

    /// Principal angles (ascending) between the family members at `g1` and `g2`.
    pub fn exact_principal_angles(&self, g1: f64, g2: f64) -> Vec<f64> {
        let (b1, b2) = (self.drift(g1), self.drift(g2));
        let mut angles = vec![(b1 - b2).abs()];
        for k in 1..=self.n_pairs() {
            let n1 = pair_normal(b1, self.rotation(g1, k));
            let n2 = pair_normal(b2, self.rotation(g2, k));
            let cross = n1.cross(&n2).norm();
            angles.push(0.0);
            angles.push(cross.atan2(n1.dot(&n2).abs()));
        }
        angles.sort_by(f64::total_cmp);
        angles
    }
}

fn pair_normal(beta: f64, theta: f64) -> nalgebra::Vector3<f64> {
    // plane spanned by cos(b)(cos(t) a + sin(t) b) + sin(b) d and -sin(t) a + cos(t) b
    nalgebra::Vector3::new(-beta.sin() * theta.cos(), -beta.sin() * theta.sin(), beta.cos())
}

/// One basis per parameter. Pair `k` is rotated in its plane by `gamma * rate * k`
/// and tilted toward its drift direction by `0.1 * gamma * rate`; the first
/// column tilts toward its own drift direction by the same angle.
pub fn manufactured_bases(family: &ManufacturedFamily, params: &[f64]) -> Result<Vec<PodBasis>> {
    let r = family.n_rank;
    if r.is_multiple_of(2) {
        return Err(Error::Parity { n_rank: r });
    }
    if r == 0 || 2 * r > family.n_dof {
        return Err(Error::Rank(format!(
            "manufactured family needs 1 <= N_r <= N_n / 2, got N_r = {r}, N_n = {}",
            family.n_dof
        )));
    }
    let seed = family.seed_basis();
    let w = family.quadrature();
    let layout = FieldLayout::single("u", 1, family.n_dof);
    let np = family.n_pairs();
    let s1 = seed.column(0);
    let d = |k: usize| seed.column(r + k);
    params
        .iter()
        .map(|&g| {
            let beta = family.drift(g);
            let (cb, sb) = (beta.cos(), beta.sin());
            let mut modes = DMatrix::zeros(family.n_dof, r);
            modes.set_column(0, &(s1 * cb + d(0) * sb));
            for k in 1..=np {
                let theta = family.rotation(g, k);
                let (ct, st) = (theta.cos(), theta.sin());
                let a = seed.column(2 * k - 1);
                let b = seed.column(2 * k);
                let p = a * ct + b * st;
                let q = a * (-st) + b * ct;
                modes.set_column(2 * k - 1, &(p * cb + d(k) * sb));
                modes.set_column(2 * k, &q);
            }
            let mut basis = PodBasis::from_modes(modes, g, &w, layout.clone())?;
            basis.singular_values = DVector::from_fn(r, |k, _| 1.0 / (k + 1) as f64);
            Ok(basis)
        })
        .collect()
}
