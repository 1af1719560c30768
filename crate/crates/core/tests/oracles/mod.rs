//! Reference implementations shared by the property tests and the
//! acceptance suite. Each test target uses a different subset.
#![allow(dead_code)]

pub mod expr;
pub mod transforms;
