//! Optimistic (Time Warp) network-management prediction with
//! complexity-aware packet coding and complexity-based vulnerability maps.
//!
//! * [`complexity`]: entropy-of-ones complexity estimates for bit strings.
//! * [`mdl`]: smoothed linear-extrapolation hypotheses, residual coding and
//!   active/passive packets scored by description length.
//! * [`anet`]: a tiny active network that carries code or data and
//!   accounts per-link load.
//! * [`engine`]: driving processes, logical processes, rollback and
//!   anti-messages running ahead of wallclock.
//! * [`metrics`]: series derived from an engine trace, and the
//!   complexity/error join.
//! * [`kmap`]: complexity maps, minimum-complexity paths and insecurity
//!   flows.

pub mod anet;
pub mod bits;
pub mod complexity;
pub mod engine;
pub mod kmap;
pub mod mdl;
pub mod metrics;
pub mod series;
pub mod stats;

pub use bits::BitString;
pub use complexity::{estimate_complexity, ComplexityEstimate};
