//! Nonlocal diffusion with a prescribed boundary flux.
//!
//! The model evolves an interior field `u` on a bounded domain under
//!
//! ```text
//! u_t(x,t) = ∫_Ω J(x-y) (u(y,t) - u(x,t)) dy + ∫_{ℝᴺ\Ω} J(x-y) g(y,t) dy
//! ```
//!
//! where `J` is a radial, compactly supported jump kernel of radius `d` and
//! `g` is data living in the exterior collar of width `d`. The crate covers
//! the full pipeline:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernel`] | jump kernels and their normalization |
//! | [`geometry`] | grids, interior/collar masks, blow-up strips, boundary chart |
//! | [`operators`] | `W`, `A`, `G` and the Fredholm pair `(K, μ)` |
//! | [`evolution`] | time steppers, fixed-point oracle, trajectory diagnostics |
//! | [`stationary`] | stationary Fredholm solve and decay verification |
//! | [`analysis`] | spectral constant, Lyapunov functional, profiles, rate fits |
//! | [`io`] | series, field and report files |
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`). The `*64`
//! aliases at the crate root are the types used by the CLI and the
//! acceptance suite.

pub mod analysis;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod operators;
pub mod scalar;
pub mod stationary;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Kernel64 = kernel::Kernel<f64>;
pub type Geometry64 = geometry::Geometry<f64>;
pub type NonlocalOperator64 = operators::NonlocalOperator<f64>;
pub type FluxOperator64 = operators::FluxOperator<f64>;
pub type FredholmPair64 = operators::FredholmPair<f64>;
pub type BoundaryDatum64 = evolution::BoundaryDatum<f64>;
pub type SolverConfig64 = evolution::SolverConfig<f64>;
pub type Trajectory64 = evolution::Trajectory<f64>;
pub type StationarySolution64 = stationary::StationarySolution<f64>;
pub type RateFit64 = analysis::RateFit<f64>;

pub type Kernel32 = kernel::Kernel<f32>;
pub type Geometry32 = geometry::Geometry<f32>;
pub type NonlocalOperator32 = operators::NonlocalOperator<f32>;
