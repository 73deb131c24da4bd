//! Host-side execution of offloaded functions.

pub mod compile;
pub mod grt;
pub mod thunk;

pub use compile::{compile_host, CompileError, HostEnv, HostFunction, HostMode, Value};
pub use grt::{build_grt, GlobalRef, GlobalReferenceTable, LinkError, RefKind, RefSpec};
pub use thunk::{make_reverse_stub, CallbackThunk};
