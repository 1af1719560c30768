//! Server-side scaling for Vega visualization specifications.
//!
//! A spec is split by the [`planner`] into a client spec and a server spec.
//! The server spec is lowered into a fingerprinted task graph that the
//! [`runtime`] evaluates with a shared memoizing cache, and a [`session`]
//! tracks interaction signals to request only the datasets that changed.

pub mod expr;
pub mod planner;
pub mod runtime;
pub mod session;
pub mod spec;
pub mod table;
pub mod transform;
pub mod value;

pub use value::Value;
