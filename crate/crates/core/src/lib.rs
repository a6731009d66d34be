//! Dirichlet solver and certification toolkit for subelliptic Monge-Ampère
//! equations `-det(D_X^2 u) + H(x, u, D_X u) = 0` on Carnot groups.

pub mod carnot_group;
pub mod cli;
pub mod comparison;
pub mod error;
pub mod expr;
pub mod grid;
pub mod hamiltonian;
pub mod horizontal;
pub mod io;
pub mod logdet_bellman;
pub mod plot;
pub mod poly;
pub mod solver;
pub mod spec;
pub mod sparse;

pub use error::{Error, Result};
