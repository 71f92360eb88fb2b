//! A desk-scale laboratory for symplectic rigidity experiments.
//!
//! The crate implements, and property-tests, the constructive objects of
//! the C⁰-symplectic-topology toolbox:
//!
//! - [`phase`] — phase-space calculus: Poisson brackets, Hamiltonian vector
//!   fields, symplecticity checks, C⁰ norms;
//! - [`hamlang`] — a small expression language with exact forward-mode
//!   differentiation, the source of exact-gradient scalar fields;
//! - [`flow`] — implicit-midpoint integration of Hamiltonian flows,
//!   commutator isotopies, and Hamiltonian reconstruction;
//! - [`gfqi`] — generating functions quadratic at infinity and their
//!   equivalence moves;
//! - [`minmax`] — min-max critical values via persistent homology of
//!   cubical sublevel filtrations, the γ invariant and γ̂ lower bounds;
//! - [`weakbracket`] — set-valued weak Hamiltonian fields, the
//!   Rampazzo–Sussmann bracket, and the C⁰-commutation harness;
//! - [`rigidity`] — the linear-algebraic machinery of the rigidity proof;
//! - [`experiment`] — the configuration-driven experiment runner behind
//!   the `rigidlab` binary.

pub mod catalog;
pub mod experiment;
pub mod flow;
pub mod gfqi;
pub mod hamlang;
pub mod minmax;
pub mod phase;
pub mod rigidity;
pub mod weakbracket;
