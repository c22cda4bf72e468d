//! Conformal moduli of polygonal quadrilaterals and capacities of polygonal
//! ring condensers.
//!
//! The modulus of a quadrilateral `(z1, z2, z3, z4)` is the Dirichlet energy
//! of the harmonic function that is 0 on the arc `z2→z3`, 1 on the arc
//! `z4→z1`, and insulated on the other two arcs. With this convention the
//! rectangle `(1+ih, ih, 0, 1)` has modulus `h`.
//!
//! The energies are computed with adaptive P1 finite elements
//! ([`modulus::solve_quad`], [`modulus::solve_ring`]) and checked against
//! closed-form values ([`elliptic`]). [`experiments`] runs parameter sweeps
//! over families of quadrilaterals.

pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod modulus;
pub mod sparse;

pub use error::{GeometryError, MeshError, ModulusError, SolveError, SpecialFunctionError};
pub use geometry::{Point, Polygon, Quadrilateral, RingCondenser};
pub use mesh::{BoundaryTag, Domain, Mesh, RefinementMarking};
pub use modulus::{AdaptiveOptions, CapacityResult, ModulusResult};
