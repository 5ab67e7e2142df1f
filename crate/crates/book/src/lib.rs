//! The guide in `book/src`, compiled so that `cargo test --doc` runs every
//! listing. One module per chapter keeps failures traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/criteria.md")]
pub mod criteria {}
#[doc = include_str!("../../../book/src/robust.md")]
pub mod robust {}
#[doc = include_str!("../../../book/src/mean-difference.md")]
pub mod mean_difference {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
