pub mod autodiff;
pub mod calibration;
pub mod error;
pub mod estimators;
pub mod exploration;
pub mod kernel;
pub mod metrics;
pub mod rng;
pub mod space;
pub mod special;
pub mod svgp;
pub mod world;

pub use error::{Error, Result};
pub use space::{Arm, ArmCounts, AttributeSpace, GoldSurface};
