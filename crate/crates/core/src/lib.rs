//! Exact computer algebra for vertex algebras, quantum groups and Borcherds twists.
//!
//! The crate is organized bottom-up:
//!
//! * [`scalar`]: exact rationals, optionally Laurent polynomials in declared parameters.
//! * [`series`]: sparse multivariate Laurent series with exactly-tracked validity windows,
//!   two-sided binomial expansions and group-law substitutions.
//! * [`linalg`]: graded state spaces, sparse vectors and linear maps, tensor calculus.
//! * [`state_expr`]: the shared textual grammar for states (`a[1,-2]*e[1,0]`, `|0>`, ...).
//! * [`bialg`]: finite-dimensional bialgebras with R-matrices and their axiom checks,
//!   Borcherds twists of coproducts, Borcherds products.
//! * [`vertex`]: the vertex-algebra engine (fields, modes, normal ordering) and the
//!   axiom suite: vacuum, translation, skew commutativity, weak associativity, locality,
//!   braided and multiplicative variants, reconstruction.
//! * [`borcherds`]: lattice bialgebras, bicharacters, twisted vertex engines,
//!   derived vertex R-matrices, the vertex-quantum-group suite, Joyce-style R-matrices.
//!
//! All arithmetic is exact; every axiom check either passes, fails with a concrete
//! witness, or reports that the requested truncation window was too small.

pub mod error;
pub mod scalar;
pub mod series;

pub mod linalg;
pub mod state_expr;

pub mod bialg;
pub mod borcherds;
pub mod vertex;

pub use error::{CheckOutcome, TruncationNeed, VqgError, Witness};
pub use scalar::{Ring, Scalar};
pub use series::{Mismatch, Series, VarSet, Window, INF_HI};
