//! Wave-packet propagation along complex classical trajectories.
//!
//! The toolkit integrates the Complex WKB and BOMCA ODE hierarchies along
//! complex trajectories solving the two-point boundary problem x(T) = X with
//! the velocity initial condition v(0) = nabla S_init(x(0))/m, assembles
//! multi-branch semiclassical wave functions, computes the coherent-state
//! overlap from two-sided boundary trajectories, and verifies the
//! path-integral identities behind all of it (discrete determinant recursion,
//! Gaussian moment formulas, iterated-integral corrections, generalized
//! Stirling) against independent oracles, including a split-step Fourier
//! grid solver.

pub mod assembly;
pub mod bomca;
pub mod dynamics;
pub mod error;
pub mod ode;
pub mod oracle;
pub mod packet;
pub mod parallel;
pub mod path_checks;
pub mod potential;
pub mod propagator;
pub mod quad;
pub mod tensor;
pub mod wkb;

pub use error::{Error, Result};
pub use num_complex::Complex64;
