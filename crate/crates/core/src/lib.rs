//! Parametric POD-Galerkin reduced-order models.
//!
//! POD bases computed at sampled parameter values are interpolated to an
//! unseen parameter, either along Grassmann geodesics ([`grassmann`]) or by
//! mode-realigned pointwise interpolation ([`mrpwi`]), and a Galerkin ROM is
//! projected on the result ([`galerkin`]). [`fom`] provides a periodic
//! Burgers solver and a manufactured basis family to exercise all of it.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod fom;
pub mod galerkin;
pub mod grassmann;
pub mod linalg;
pub mod metrics;
pub mod mrpwi;
pub mod plan;
pub mod pod;
pub mod prom;
pub mod psnap;
pub mod snapshot;
pub mod sweep;

pub use error::{Error, FormatError, Result};
pub use galerkin::{assemble_operators, integrate_rom, reconstruct, rom_rhs, DiscreteModel, GalerkinOperators, RomTrajectory};
pub use grassmann::{exp_map, gmi_interpolate, log_map, TangentImage};
pub use metrics::{benchmark_interpolation, principal_angles, rle, RleReport, TimingReport};
pub use mrpwi::{complexify, kasner_angle, mrpwi_interpolate, rotation_align, sign_align, ComplexModePack, MrpwiOptions};
pub use plan::{lagrange_weights, select_neighbors, select_reference, CaseCatalog, CaseEntry};
pub use pod::{compute_pod, project, PodBasis};
pub use prom::Method;
pub use psnap::{read_snapshots, write_snapshots};
pub use snapshot::{weighted_inner, FieldBlock, FieldLayout, Quadrature, SnapshotSet};
