//! Library surface of the operator CLI; the pipeline stages live here so
//! integration tests can drive them directly.

pub mod pipeline;
pub mod selftest;
