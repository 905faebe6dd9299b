//! Reference implementations shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

pub mod gat_ref;
pub mod graph_ref;
pub mod scl_ref;
