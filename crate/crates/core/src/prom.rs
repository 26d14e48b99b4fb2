//! Parametric ROM pipeline: neighbour bases, basis interpolation, Galerkin
//! projection at the target parameter and comparison with the truth.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::galerkin::{assemble_operators, integrate_rom, reconstruct, DiscreteModel, RomTrajectory};
use crate::grassmann::gmi_interpolate;
use crate::metrics::{rle, RleReport};
use crate::mrpwi::{mrpwi_interpolate, MrpwiOptions};
use crate::plan::{select_neighbors, select_reference, CaseCatalog};
use crate::pod::{compute_pod, PodBasis};
use crate::snapshot::{weighted_dot, Quadrature, SnapshotSet};

/// ROM integration steps per snapshot interval.
pub const ROM_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gmi,
    Mrpwi,
    /// Standard POD-Galerkin ROM built from the target's own snapshots.
    Rom,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gmi => "GMI",
            Method::Mrpwi => "MRPWI",
            Method::Rom => "ROM",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gmi" => Ok(Method::Gmi),
            "mrpwi" => Ok(Method::Mrpwi),
            "rom" | "rom-baseline" | "baseline" => Ok(Method::Rom),
            other => Err(Error::Config(format!("unknown method `{other}` (gmi, mrpwi, rom)"))),
        }
    }
}

/// Interpolates `bases` at `target` with GMI or MRPWI (default options).
pub fn interpolate(
    method: Method,
    bases: &[PodBasis],
    reference_index: usize,
    target: f64,
    w: &Quadrature,
) -> Result<PodBasis> {
    match method {
        Method::Gmi => gmi_interpolate(bases, reference_index, target, w),
        Method::Mrpwi => mrpwi_interpolate(bases, reference_index, target, w, MrpwiOptions::default()),
        Method::Rom => Err(Error::Config("the ROM baseline does not interpolate".into())),
    }
}

/// Weighted least-squares coefficients `(Phi^T W Phi)^{-1} Phi^T W q`; equal
/// to the plain projection when the basis is weighted-orthonormal.
pub fn initial_coefficients(basis: &PodBasis, w: &Quadrature, q: &[f64]) -> Result<DVector<f64>> {
    basis.check_weights(w)?;
    if q.len() != basis.n_dof() {
        return Err(Error::Dimension(format!("state of length {} for {} rows", q.len(), basis.n_dof())));
    }
    let rhs = DVector::from_iterator(
        basis.n_rank(),
        basis.modes.column_iter().map(|phi| weighted_dot(phi.as_slice(), q, w.weights())),
    );
    basis
        .gram(w)
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::MassMatrix("basis Gram matrix is not positive definite".into()))
}

/// Output of one ROM run against a truth trajectory.
#[derive(Debug, Clone)]
pub struct RomRun {
    pub trajectory: RomTrajectory,
    pub prediction: SnapshotSet,
    pub report: RleReport,
}

/// Builds the Galerkin ROM on `basis`, starts it from the projection of the
/// first truth snapshot and integrates over the truth's recorded horizon.
pub fn run_rom<M: DiscreteModel + ?Sized>(
    basis: &PodBasis,
    model: &M,
    viscosity: f64,
    truth: &SnapshotSet,
) -> Result<RomRun> {
    let w = model.quadrature();
    let q0: Vec<f64> = truth.data().column(0).iter().copied().collect();
    let alpha0 = initial_coefficients(basis, w, &q0)?;
    let ops = assemble_operators(basis, model, viscosity)?;
    let dt = truth.dt_snap() / ROM_SUBSTEPS as f64;
    let n_steps = (truth.n_snap().max(2) - 1) * ROM_SUBSTEPS;
    let mut trajectory = integrate_rom(&ops, &alpha0, truth.t0(), dt, n_steps, ROM_SUBSTEPS)?;
    trajectory.coefficients = trajectory.coefficients.rows(0, truth.n_snap()).into_owned();
    trajectory.times.truncate(truth.n_snap());
    let prediction = reconstruct(basis, &trajectory)?;
    let report = rle(truth, &prediction, None)?;
    Ok(RomRun {
        trajectory,
        prediction,
        report,
    })
}

/// Snapshot sets of every catalog case with their POD bases at a maximal rank.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub cases: Vec<SnapshotSet>,
    pub weights: Quadrature,
    bases: Vec<PodBasis>,
}

impl Workbench {
    /// Computes every case's POD basis at `max_rank` (in parallel).
    pub fn new(cases: Vec<SnapshotSet>, weights: Quadrature, max_rank: usize) -> Result<Self> {
        let bases = cases
            .par_iter()
            .enumerate()
            .map(|(j, s)| compute_pod(s, &weights, max_rank).map_err(|e| e.in_case(j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cases, weights, bases })
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.cases.iter().map(SnapshotSet::parameter).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.bases.first().map_or(0, PodBasis::n_rank)
    }

    /// Leading `n_rank` POD modes of case `index`.
    pub fn basis(&self, index: usize, n_rank: usize) -> Result<PodBasis> {
        self.bases[index].truncated(n_rank)
    }

    /// Index of the case whose parameter equals `target` exactly.
    pub fn case_at(&self, target: f64) -> Result<usize> {
        self.cases
            .iter()
            .position(|s| s.parameter() == target)
            .ok_or_else(|| Error::Catalog(format!("no truth case at parameter {target}")))
    }
}

/// One PROM evaluation request.
#[derive(Debug, Clone)]
pub struct PromRequest {
    pub method: Method,
    pub n_rank: usize,
    /// Candidate cases, already restricted (e.g. to a parameter lattice).
    pub catalog: CaseCatalog,
}

/// Result of [`run_prom`].
#[derive(Debug, Clone)]
pub struct PromOutcome {
    /// Workbench indices of the cases used (sorted by parameter).
    pub neighbors: Vec<usize>,
    pub reference: Option<usize>,
    pub basis: PodBasis,
    pub run: RomRun,
}

/// Runs one PROM (or the own-basis baseline) at `request.catalog.target`.
///
/// `request.catalog` entries must be workbench parameters; the truth is the
/// workbench case at the target, and the viscosity is `1 / target`.
pub fn run_prom<M: DiscreteModel + ?Sized>(bench: &Workbench, model: &M, request: &PromRequest) -> Result<PromOutcome> {
    let target = request.catalog.target;
    let truth_index = bench.case_at(target)?;
    let truth = &bench.cases[truth_index];
    let viscosity = 1.0 / target;
    let index_of = |p: f64| bench.case_at(p);
    let (neighbors, reference, basis) = match request.method {
        Method::Rom => (vec![truth_index], None, bench.basis(truth_index, request.n_rank)?),
        method => {
            request.catalog.validate()?;
            let local = select_neighbors(&request.catalog)?;
            let local_ref = select_reference(&local, &request.catalog)?;
            let neighbors: Vec<usize> = local
                .iter()
                .map(|&i| index_of(request.catalog.entries[i].parameter))
                .collect::<Result<_>>()?;
            let bases: Vec<PodBasis> = neighbors
                .iter()
                .map(|&i| bench.basis(i, request.n_rank))
                .collect::<Result<_>>()?;
            let ref_pos = local.iter().position(|&i| i == local_ref).expect("reference is a neighbour");
            let basis = interpolate(method, &bases, ref_pos, target, &bench.weights)?;
            (neighbors.clone(), Some(neighbors[ref_pos]), basis)
        }
    };
    let mut run = run_rom(&basis, model, viscosity, truth)?;
    run.report.method_tag = request.method.to_string();
    Ok(PromOutcome {
        neighbors,
        reference,
        basis,
        run,
    })
}
