//! Fixtures and oracles shared by the integration tests.
#![allow(dead_code)]

pub mod archive;
pub mod heap;
pub mod sim;
pub mod sqlite;
