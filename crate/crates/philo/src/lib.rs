//! Online combinatorial allocation against the online-optimum benchmark.
//!
//! The crate models allocation instances with typed, monotone valuations,
//! solves an online configuration LP over declared column families, rounds
//! it with three online algorithms — the baseline prophet-inequality
//! reduction, an explicit switch-step policy, and half-double sampling —
//! and measures integrality gaps against exact optimal-online dynamic
//! programs on hard instance families.

pub mod baseline;
pub mod config_lp;
pub mod decomposition;
pub mod driver;
pub mod halfdouble;
pub mod instance;
pub mod items;
pub mod prophet;
pub mod simplex;
pub mod valuations;

pub use instance::Instance;
pub use items::ItemSet;
pub use valuations::{SetFunction, Valuation, ValuationKind};
