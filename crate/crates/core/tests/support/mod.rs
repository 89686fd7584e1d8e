//! Reference implementations shared by the oracle tests and the acceptance run.
#![allow(dead_code)]

pub mod gradcheck;
pub mod reference;
