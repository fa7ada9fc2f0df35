pub mod anomaly;
pub mod bargain;
pub mod binprob;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod numeric;
pub mod policy;
pub mod simulate;

pub use dist::{FamilyKind, HetFamily};
pub use error::{Error, Result};
pub use model::{ModelParams, Side, Wedge};
