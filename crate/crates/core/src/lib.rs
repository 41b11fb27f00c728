//! Sum-of-squares polynomial approximations of norms and Minkowski functionals.
//!
//! Given a convex body through generators of its polar, [`approximant::build`]
//! produces a degree-2n form `p(x) = sigma(x)^T A sigma(x)` (and, for
//! non-symmetric bodies, a degree-n form `r(x)`) whose roots sandwich the
//! Minkowski functional within `(dim D)^{1/2n}` (symmetric) or `dim D`
//! (general), where `dim D <= binom(n+d-1, n)`.

pub mod approximant;
pub mod bodies;
pub mod cli;
pub mod error;
pub mod mvee;
pub mod symtensor;
pub mod verify;

pub use approximant::{build, BuildOptions, NormApproximant};
pub use bodies::{from_polar_vertices, make_l1, make_linf, make_lp_sampled, BodyKind, BodySpec};
pub use error::{Error, Result};
pub use mvee::{inscribed_from_enclosing, mvee_general, mvee_symmetric, Ellipsoid, SolverOptions};
pub use symtensor::{multi_indices, pairing, sym_dim, veronese, MultiIndex, SymVector, VeroneseMap};
