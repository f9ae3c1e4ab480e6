//! Age-of-information scheduling for many sources sharing one channel:
//! capacity checks, the relaxed optimization, a discrete-event simulator,
//! scheduling policies and experiment drivers.

pub mod capacity;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod sim;
pub mod solver;
pub mod stats;
