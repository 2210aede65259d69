pub mod action_gen;
pub mod calibration;
pub mod cevd;
pub mod demand;
pub mod error;
pub mod fleet;
pub mod matching;
pub mod oracle;
pub mod road_network;
pub mod simulator;
pub mod value_fn;

pub use error::{Error, Result};
