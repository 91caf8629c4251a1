//! Numerical toolkit for monostatic synthetic aperture radar over arbitrary
//! topography: forward data simulation, the pointwise canonical relation,
//! degenerate covectors, mirror-point sets and cancellation of singularities.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cancellation;
pub mod canonical;
pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod mirror;
pub mod num;
pub mod smoothness;
pub mod tolerances;

pub use error::{Result, SarError};
pub use num::{Real, Vec3};
pub use tolerances::Tolerances;

pub type Model = geometry::SarModel<f64>;
pub type Chart = geometry::SurfaceChart<f64>;
pub type Path = geometry::FlightPath<f64>;
pub type Window = geometry::AcquisitionWindow<f64>;
pub type Grid = grid::Grid2<f64>;
pub type DataCovector = canonical::DataCovector<f64>;
pub type SceneCovector = canonical::SceneCovector<f64>;
pub type MirrorSet = mirror::MirrorSet<f64>;
pub type SceneField = forward::SceneField<f64>;
pub type Sinogram = forward::Sinogram<f64>;
