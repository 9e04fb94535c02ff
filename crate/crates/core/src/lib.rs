//! Toric dynamical systems for mass-action reaction networks: membership in
//! the toric locus, complex-balanced equilibria, flux-cone coordinates and
//! numerical integration.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod fluxcone;
pub mod kirchhoff;
pub mod lincore;
pub mod netmodel;

pub use error::{Error, Result};
pub use kirchhoff::RateVector;
pub use netmodel::{parse, parse_network, EGraph, StoichDecomp};
