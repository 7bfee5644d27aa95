#![allow(dead_code)]

pub mod peeling;
pub mod properties;
