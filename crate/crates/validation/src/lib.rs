//! Acceptance checks for the whole workspace live in `tests/acceptance.rs`.
