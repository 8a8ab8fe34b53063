//! Holds the workspace acceptance suite; see `tests/acceptance.rs`.
#![no_std]
