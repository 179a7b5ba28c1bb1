//! Exact arithmetic on the Bruhat-Tits tree of PGL2(Qp) and its quotients.
//!
//! The crate is organized around a chain of constructions:
//!
//! - [`padic`]: fixed-precision elements of Qp and of its unramified
//!   quadratic extension, with Hensel square roots.
//! - [`bttree`]: the (p+1)-regular tree of lattice classes, its boundary
//!   P1(Qp), geodesics, and the PGL2 action.
//! - [`quadforms`]: binary quadratic form class groups, the prime form
//!   above p, and the Picard group of the Z[1/p]-order.
//! - [`embeddings`]: matrix embeddings of quadratic orders and the
//!   split/inert/ramified trichotomy of their fixed data on the tree.
//! - [`volcano`]: quotients of the tree by a split torus stabilizer,
//!   rim cycles, and hyperbolic equidistribution statistics on CM points.
//! - [`quatdef`]: definite quaternion algebras ramified at one finite
//!   prime, maximal orders, unit groups, and optimal embedding counts.
//! - [`shimura`]: the finite quotient graph of the tree by the unit group
//!   of a Z[1/p]-order, stabilizer masses, Heegner points in Q_{p^2}, and
//!   their distribution over quotient classes.
//!
//! The command-line front end (`arbor-p`) and the `examples/` directory
//! expose one entry point per pipeline.

pub mod bttree;
pub mod config;
pub mod embeddings;
pub mod linalg;
pub mod padic;
pub mod quadforms;
pub mod quatdef;
pub mod report;
pub mod shimura;
pub mod volcano;

pub use config::RunConfig;
pub use padic::{Padic, PadicError, QuadExt};
