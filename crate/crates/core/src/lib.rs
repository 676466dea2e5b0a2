//! Constrained routing laboratory for TSPTW and TSPDL: instance generation,
//! a construction environment with violation accounting, lookahead
//! feasibility masks with exact oracles, a feature-based softmax policy
//! trained by REINFORCE on a Lagrangian reward, a learned mask predictor, and
//! an evaluation harness.

pub mod env;
pub mod error;
pub mod eval;
pub mod instances;
pub mod masking;
pub mod policy;
pub mod seeding;
pub mod training;

pub use env::{ConstructionState, Tour, TourMetrics};
pub use error::{Error, Result};
pub use instances::{Hardness, Instance, TspdlInstance, TsptwInstance, Variant};
pub use masking::{Mask, MaskLevel};
pub use policy::{Checkpoint, MaskMode, PolicyParams, RolloutTrace};
pub use training::{PredictorParams, TrainConfig};
