pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod data;
pub mod soft_filter;
pub mod scsa;
pub mod mdn;
pub mod metrics;
pub mod pipeline;
