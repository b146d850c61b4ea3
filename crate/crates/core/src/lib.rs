//! Constraint-guided recovery of Objective-C method signatures from
//! stripped framework headers.

pub mod agent;
pub mod bench;
pub mod header;
pub mod linter;
pub mod metrics;
pub mod pipeline;
pub mod selector;
pub mod toolbox;
