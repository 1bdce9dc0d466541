//! Missing-mass and total-mass estimation for multinomial samples.

pub mod error;
pub mod distributions;
pub mod estimators;
pub mod ga;
pub mod ground_truth;
pub mod harness;
pub mod numerics;
pub mod moments;
pub mod oracle;
pub mod par;
pub mod representations;

pub use error::{Error, Result};
