pub mod catalog;
pub mod plan;
pub mod sql;
pub mod pipeline;
pub mod wasm;
pub mod codegen;
pub mod runtime;
pub mod query;
pub mod interp;
pub mod corpus;
pub mod bench;

/// Code in the book runs as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    struct Quickstart;
    #[doc = include_str!("../../../book/src/pipelines.md")]
    struct Pipelines;
    #[doc = include_str!("../../../book/src/memory.md")]
    struct Memory;
    #[doc = include_str!("../../../book/src/kernels.md")]
    struct Kernels;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../book/src/testing.md")]
    struct Testing;
}
