//! Bayesian-CRB driven array partitioning and beamforming for a monostatic
//! ISAC base station, plus joint MAP estimation of target angles and RCS.

pub mod designer;
pub mod error;
pub mod estimator;
pub mod fim;
pub mod harness;
pub mod linalg;
pub mod scene;
pub mod sdp;

pub use error::{Error, Result};
