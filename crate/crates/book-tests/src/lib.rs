//! Compiles the guide under `book/` as doctests.
//!
//! `mdbook test` cannot link listings against workspace crates, so each
//! chapter becomes the doc comment of an empty module and `cargo test` runs
//! its code blocks. One module per chapter keeps failures traceable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/gp.md")]
pub mod gp {}

#[doc = include_str!("../../../book/src/knapsack.md")]
pub mod knapsack {}

#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}

#[doc = include_str!("../../../book/src/policies.md")]
pub mod policies {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
