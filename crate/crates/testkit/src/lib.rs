//! Test support for pdm-core: scalar reference implementations, crafted
//! metric cases, and deterministic synthetic bundles and annotations.

pub mod fixtures;
pub mod oracle;
pub mod synthetic;
