//! Finite elements for the Poisson problem on anisotropic tetrahedral meshes.
//!
//! The crate provides three discretizations of `-Δu = f` on the unit cube with
//! homogeneous Dirichlet data:
//!
//! * conforming P1-Lagrange,
//! * nonconforming P1 Crouzeix–Raviart (face-mean degrees of freedom),
//! * the lowest-order Raviart–Thomas mixed method (RT0 × P0).
//!
//! Around them sit the pieces needed to study their behaviour on meshes that
//! violate the maximum-angle condition: a structured anisotropic cube
//! generator, the anisotropy parameter `H_T`, fixed quadrature rules, the
//! local interpolation operators, the bubble enrichment that links the CR and
//! RT0 solutions, error norms against a manufactured solution, and a
//! command-line experiment runner.

pub mod analysis;
pub mod cli;
pub mod elements;
pub mod equivalence;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod system;
pub mod vtk;

mod error;

pub use error::{Error, Result};

/// Points and vectors in physical space.
pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
