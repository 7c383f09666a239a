//! Instance and result files.

mod instance;
mod result;

pub use instance::{load_instance, parse_instance, parse_raw, write_instance, write_raw, InstanceError};
pub use result::{PumpOutcome, ResultFile};
