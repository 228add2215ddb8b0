pub mod baseline;
pub mod error;
pub mod eval;
pub mod fri;
pub mod linalg;
pub mod mulan;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use fri::EchoSet;
pub use mulan::{mulan_solve, MulanConfig, SolveResult};
pub use spectral::{FrequencyGrid, RealSignal, Spectrum};
