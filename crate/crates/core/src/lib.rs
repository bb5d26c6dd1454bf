//! Numerical machinery for measures with bounded `s`-dimensional
//! Calderón–Zygmund operators: Wolff energies on the lattice of dyadic
//! triples, domination selection, truncated singular integrals and square
//! functions, Lipschitz oscillation coefficients and reflectionless tests.
//!
//! Measures are finite weighted point clouds ([`measure::Measure`]); every
//! quantity is a finite sum over atoms and lattice cubes within an explicit
//! scale window.

pub mod energy;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod measure;
pub mod operators;
pub mod reflectionless;
pub mod oscillation;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{Cube, LatticeView};
pub use measure::{Ambient, Measure, MeasureSpec};
