// The book under book/src is plain mdbook, which cannot run its own code
// blocks. Each chapter is pulled in here as the docs of an empty module so
// `cargo test --doc` compiles and runs every snippet against the crate.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../book/src/lattice.md")]
pub mod lattice {}
#[doc = include_str!("../../book/src/front.md")]
pub mod front {}
#[doc = include_str!("../../book/src/estimators.md")]
pub mod estimators {}
#[doc = include_str!("../../book/src/coupling.md")]
pub mod coupling {}
#[doc = include_str!("../../book/src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("../../book/src/renorm.md")]
pub mod renorm {}
#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}
