//! Wide quantum neural networks: light-cone-pruned simulation, tangent
//! kernels, linearized training dynamics and Gaussian-process checks.

pub mod circuit;
pub mod error;
pub mod families;
pub mod gates;
pub mod lightcone;
pub mod linearized;
pub mod ntk;
pub mod oracle;
pub mod reproduce;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod training;

pub use nalgebra;

pub use circuit::{CircuitSpec, Dataset, LayerSpec, Observable, ParamVector};
pub use error::{QnnError, Result};
pub use families::{Family, FamilyParams};
pub use lightcone::{build_lightcones, LightConeIndex, PrunedCircuit};
pub use sim::Qnn;
