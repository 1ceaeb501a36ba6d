pub mod agent;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod features;
pub mod mosaic;
pub mod oracle;
pub mod segmentation;
pub mod som;
pub mod synth;
pub mod testkit;

pub use error::{Error, Result};
