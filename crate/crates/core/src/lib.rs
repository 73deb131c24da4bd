pub mod analyzer;
pub mod fault;
pub mod frontend;
pub mod harness;
pub mod guest;
pub mod host;
pub mod printf;
pub mod runtime;
pub mod semantics;
