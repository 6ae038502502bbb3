//! Online reconstruction of synaptic kernels in neural-field equations.
//!
//! A two-population neural field on the circle is simulated together with an
//! adaptive observer that measures only the second population. The observer
//! estimates the unmeasured activity and learns the kernels `W21` and `W22`
//! through rank-one update laws. Diagnostics check the convergence
//! hypotheses: strong dissipativity of the unmeasured population, the gain
//! condition, and persistence of excitation of the regressor.
//!
//! Module map:
//!
//! * [`grid`]: circle discretization, L2 and Hilbert-Schmidt calculus
//! * [`plant`]: neural-field dynamics, activations, inputs, dissipativity
//! * [`observer`]: observer dynamics, gain condition, error metrics
//! * [`integrator`]: Dormand-Prince 5(4) with exact sample landing
//! * [`pe`]: Gram operators and persistence-of-excitation margins
//! * [`experiment`]: configuration, orchestration and run outputs

pub mod coupled;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod integrator;
pub mod observer;
mod par;
pub mod pe;
pub mod plant;

pub use error::{Error, Result};
